// Command-line experiment runner: training runs, hyperparameter sweeps, the
// propagation/transformation studies, standalone metrics, and SVG plots.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "decorr/dataset.hpp"
#include "decorr/metrics.hpp"
#include "decorr/studies.hpp"
#include "decorr/svg.hpp"
#include "decorr/sweep.hpp"
#include "decorr/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct SharedFlags {
  std::string dataset;
  std::string synthetic;
  std::uint64_t split_seed = 0;
};

void add_dataset_flags(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--dataset", f.dataset, "GNNB v1 graph file (resolved against DECORR_DATA_DIR)");
  cmd->add_option("--synthetic", f.synthetic,
                  "synthetic recipe, e.g. sbm:blocks=4x250,pin=0.05,pout=0.005 or er:n=1000,p=0.01");
  cmd->add_option("--split-seed", f.split_seed, "seed for the planetoid split when the file has none");
}

struct TrainFlags {
  SharedFlags data;
  std::string model = "gcn";
  std::string norm = "none";
  std::string preset;
  decorr::TrainConfig cfg;
  int repeats = 1;
  std::string out_dir = "runs";
  bool epochs_csv = false;
  bool no_bias = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  add_dataset_flags(cmd, f.data);
  cmd->add_option("--model", f.model, "gcn | cheby | mlp")
      ->check(CLI::IsMember({"gcn", "cheby", "mlp"}));
  cmd->add_option("--layers", f.cfg.model.layers, "number of layers K")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", f.cfg.model.hidden, "hidden width")->check(CLI::PositiveNumber);
  cmd->add_option("--norm", f.norm, "none | batch | pair")
      ->check(CLI::IsMember({"none", "batch", "pair"}));
  cmd->add_flag("--residual", f.cfg.model.residual, "add identity skip connections");
  cmd->add_option("--dropedge", f.cfg.dropedge, "per-epoch edge drop rate")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--alpha", f.cfg.decorr.alpha, "weight of the decorrelation loss");
  cmd->add_option("--beta", f.cfg.decorr.beta, "weight of the MI loss");
  cmd->add_option("--t", f.cfg.decorr.t, "hidden-layer stride of the MI loss")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--sample-size", f.cfg.decorr.sample_size,
                  "Monte-Carlo node count (0 = ceil(sqrt(N)))");
  cmd->add_option("--mi-batch", f.cfg.decorr.mi_batch, "MI batch size (0 = min(N, 1024))");
  cmd->add_option("--lr", f.cfg.lr, "learning rate");
  cmd->add_option("--weight-decay", f.cfg.weight_decay, "L2 decay on weight matrices");
  cmd->add_option("--dropout", f.cfg.model.dropout, "dropout rate")
      ->check(CLI::Range(0.0, 0.999));
  cmd->add_option("--epochs", f.cfg.epochs, "maximum training epochs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.cfg.seed, "first run seed");
  cmd->add_option("--repeats", f.repeats, "number of seeds to run")->check(CLI::PositiveNumber);
  cmd->add_flag("--missing-features", f.cfg.missing_features,
                "zero the features of validation and test nodes");
  cmd->add_option("--cheby-order", f.cfg.model.cheby_order, "Chebyshev polynomial order");
  cmd->add_flag("--no-bias", f.no_bias, "disable bias terms");
  cmd->add_option("--pairnorm-scale", f.cfg.model.pairnorm_scale, "PairNorm scale s");
  cmd->add_option("--metric-every", f.cfg.metric_every, "epochs between SMV measurements")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--preset", f.preset, "decorr | decorr-alpha | decorr-beta | none")
      ->check(CLI::IsMember({"decorr", "decorr-alpha", "decorr-beta", "none"}));
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_flag("--epochs-csv", f.epochs_csv, "also write per-epoch CSV next to each run");
}

void apply_preset(TrainFlags& f) {
  if (f.preset.empty()) return;
  // Named ablation presets; explicit --alpha/--beta still win when nonzero.
  double alpha = f.cfg.decorr.alpha > 0 ? f.cfg.decorr.alpha : 1.0;
  double beta = f.cfg.decorr.beta > 0 ? f.cfg.decorr.beta : 1.0;
  if (f.preset == "decorr") {
    f.cfg.decorr.alpha = alpha;
    f.cfg.decorr.beta = beta;
  } else if (f.preset == "decorr-alpha") {
    f.cfg.decorr.alpha = alpha;
    f.cfg.decorr.beta = 0.0;
  } else if (f.preset == "decorr-beta") {
    f.cfg.decorr.alpha = 0.0;
    f.cfg.decorr.beta = beta;
  } else if (f.preset == "none") {
    f.cfg.decorr.alpha = 0.0;
    f.cfg.decorr.beta = 0.0;
  }
}

int cmd_train(TrainFlags& f) {
  f.cfg.model.kind = decorr::model_kind_from_string(f.model);
  f.cfg.model.norm = decorr::norm_kind_from_string(f.norm);
  f.cfg.model.bias = !f.no_bias;
  apply_preset(f);
  decorr::ResolvedData data =
      decorr::resolve_dataset(f.data.dataset, f.data.synthetic, f.data.split_seed);
  std::filesystem::create_directories(f.out_dir);
  bool any_diverged = false;
  for (int rep = 0; rep < f.repeats; ++rep) {
    decorr::TrainConfig cfg = f.cfg;
    cfg.seed = f.cfg.seed + static_cast<std::uint64_t>(rep);
    decorr::RunResult r = decorr::train(data.graph, data.split, cfg);
    const std::string path = f.out_dir + "/run_" + std::to_string(cfg.seed) + ".json";
    decorr::write_run_result(path, r);
    if (f.epochs_csv)
      decorr::write_epochs_csv(f.out_dir + "/run_" + std::to_string(cfg.seed) + "_epochs.csv", r);
    std::cout << "run seed=" << cfg.seed << " dataset=" << data.name
              << " test_acc=" << decorr::format_double(r.test_acc)
              << " best_epoch=" << r.best_epoch
              << " wall_secs=" << decorr::format_double(r.wall_secs)
              << (r.diverged ? " DIVERGED" : "") << " -> " << path << '\n';
    any_diverged = any_diverged || r.diverged;
  }
  return any_diverged ? kExitDiverged : kExitOk;
}

struct SweepFlags {
  std::string spec_path;
  std::string out_override;
  int threads = -1;
  bool reaggregate_only = false;
};

int cmd_sweep(const SweepFlags& f) {
  decorr::SweepSpec spec = decorr::read_sweep_spec(f.spec_path);
  if (!f.out_override.empty()) spec.out_dir = f.out_override;
  if (f.threads >= 0) spec.threads = f.threads;
  if (!f.reaggregate_only) decorr::run_sweep(spec, std::cout);
  decorr::write_sweep_outputs(spec);
  std::cout << "sweep summary: " << spec.out_dir << "/summary.csv and table.md\n";
  return kExitOk;
}

struct PrelimPropFlags {
  SharedFlags data;
  int dim = 100;
  int k_max = 50;
  int runs = 100;
  std::uint64_t seed = 0;
  bool no_smv = false;
  std::string out_dir = "prelim_prop";
};

int cmd_prelim_prop(const PrelimPropFlags& f) {
  decorr::ResolvedData data =
      decorr::resolve_dataset(f.data.dataset, f.data.synthetic, f.data.split_seed);
  decorr::Rng rng(f.seed);
  std::vector<decorr::StudySeries> series = decorr::propagation_study_full_lcc(
      data.graph, f.dim, f.k_max, f.runs, rng, !f.no_smv);
  std::filesystem::create_directories(f.out_dir);
  decorr::write_study_csv(f.out_dir + "/propagation.csv", series);
  std::vector<decorr::svg::Series> lines;
  for (const decorr::StudySeries& s : series) {
    decorr::svg::Series corr_line{"corr/" + s.variant, {}};
    decorr::svg::Series smv_line{"smv/" + s.variant, {}};
    for (const decorr::StudyPoint& p : s.points) {
      corr_line.points.emplace_back(p.k, p.corr_mean);
      smv_line.points.emplace_back(p.k, p.smv_mean);
    }
    lines.push_back(std::move(corr_line));
    if (!f.no_smv) lines.push_back(std::move(smv_line));
  }
  decorr::svg::ChartOptions opt;
  opt.title = "Corr and SMV under repeated propagation (" + data.name + ")";
  opt.x_label = "propagation steps K";
  opt.y_label = "metric value";
  decorr::svg::write_file(f.out_dir + "/propagation.svg",
                          decorr::svg::render_line_chart(lines, opt));
  std::cout << "propagation study -> " << f.out_dir << "/propagation.{csv,svg}\n";
  return kExitOk;
}

struct PrelimTransFlags {
  int nodes = 1000;
  int dim = 100;
  int hidden = 16;
  int k_max = 20;
  std::string depths;  // optional comma list; overrides 0..k_max
  int runs = 20;
  std::uint64_t seed = 0;
  std::string variant = "both";
  bool no_smv = false;
  std::string out_dir = "prelim_trans";
};

int cmd_prelim_trans(const PrelimTransFlags& f) {
  std::vector<int> depths;
  int k_max = f.k_max;
  if (!f.depths.empty()) {
    for (const std::string& d : decorr::detail::split_on(f.depths, ','))
      depths.push_back(std::stoi(d));
    k_max = *std::max_element(depths.begin(), depths.end());
  }
  decorr::Rng rng(f.seed);
  std::vector<decorr::StudySeries> series;
  if (f.variant == "both" || f.variant == "linear")
    series.push_back(decorr::transformation_study(f.nodes, f.dim, f.hidden, k_max, f.runs,
                                                  false, rng, !f.no_smv));
  if (f.variant == "both" || f.variant == "relu")
    series.push_back(decorr::transformation_study(f.nodes, f.dim, f.hidden, k_max, f.runs,
                                                  true, rng, !f.no_smv));
  if (!depths.empty()) {
    for (decorr::StudySeries& s : series) {
      std::vector<decorr::StudyPoint> filtered;
      for (const decorr::StudyPoint& p : s.points)
        if (std::find(depths.begin(), depths.end(), p.k) != depths.end())
          filtered.push_back(p);
      s.points = std::move(filtered);
    }
  }
  std::filesystem::create_directories(f.out_dir);
  decorr::write_study_csv(f.out_dir + "/transformation.csv", series);
  std::vector<decorr::svg::Series> lines;
  for (const decorr::StudySeries& s : series) {
    decorr::svg::Series line{"corr/" + s.variant, {}};
    for (const decorr::StudyPoint& p : s.points) line.points.emplace_back(p.k, p.corr_mean);
    lines.push_back(std::move(line));
  }
  decorr::svg::ChartOptions opt;
  opt.title = "Corr of an untrained MLP vs. depth";
  opt.x_label = "depth K";
  opt.y_label = "Corr";
  decorr::svg::write_file(f.out_dir + "/transformation.svg",
                          decorr::svg::render_line_chart(lines, opt));
  std::cout << "transformation study -> " << f.out_dir << "/transformation.{csv,svg}\n";
  return kExitOk;
}

decorr::DenseMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw decorr::DataError("cannot open matrix csv: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream is(line);
    std::vector<double> row;
    std::string tok;
    while (is >> tok) row.push_back(decorr::parse_double(tok));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw decorr::DataError("matrix csv is empty: " + path);
  decorr::DenseMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw decorr::DataError("matrix csv has ragged rows: " + path);
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  }
  return m;
}

int cmd_metrics(const std::string& input) {
  decorr::DenseMatrix m = read_matrix_csv(input);
  decorr::MetricReport rep = decorr::metric_report(m);
  decorr::Json j;
  j["corr"] = rep.corr ? decorr::Json(*rep.corr) : decorr::Json(nullptr);
  j["smv"] = rep.smv ? decorr::Json(*rep.smv) : decorr::Json(nullptr);
  j["excluded_dims"] = rep.excluded_dims;
  j["excluded_rows"] = rep.excluded_rows;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

struct PlotFlags {
  std::vector<std::string> inputs;
  std::string out = "chart.svg";
  std::string kind = "epochs";
  std::string field = "acc_test";
};

double epoch_field(const decorr::EpochRecord& e, const std::string& field) {
  if (field == "loss") return e.loss;
  if (field == "l_class") return e.l_class;
  if (field == "l_d") return e.l_d;
  if (field == "l_m") return e.l_m;
  if (field == "acc_train") return e.acc_train;
  if (field == "acc_val") return e.acc_val;
  if (field == "acc_test") return e.acc_test;
  if (field == "corr") return e.corr ? *e.corr : std::nan("");
  if (field == "smv") return e.smv ? *e.smv : std::nan("");
  throw decorr::DataError("plot: unknown field '" + field + "'");
}

struct SummaryRow {
  int layers = 0;
  std::string method;
  double mean_test = 0.0;
};

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw decorr::DataError("cannot open summary csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw decorr::DataError("summary csv is empty");
  std::vector<std::string> header = decorr::detail::split_on(line, ',');
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_layers = col("layers");
  const int c_method = col("method");
  const int c_mean = col("mean_test_acc");
  if (c_method < 0 || c_mean < 0)
    throw decorr::DataError("summary csv lacks method/mean_test_acc columns");
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = decorr::detail::split_on(line, ',');
    SummaryRow r;
    r.layers = c_layers >= 0 ? std::stoi(f.at(c_layers)) : 0;
    r.method = f.at(c_method);
    r.mean_test = decorr::parse_double(f.at(c_mean));
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_plot(const PlotFlags& f) {
  decorr::svg::ChartOptions opt;
  if (f.kind == "epochs") {
    std::vector<decorr::svg::Series> lines;
    for (const std::string& path : f.inputs) {
      decorr::RunResult r = decorr::read_run_result(path);
      decorr::svg::Series line{std::filesystem::path(path).stem().string(), {}};
      for (const decorr::EpochRecord& e : r.epochs)
        line.points.emplace_back(e.epoch, epoch_field(e, f.field));
      lines.push_back(std::move(line));
    }
    opt.title = f.field + " over training epochs";
    opt.x_label = "epoch";
    opt.y_label = f.field;
    decorr::svg::write_file(f.out, decorr::svg::render_line_chart(lines, opt));
  } else if (f.kind == "depth" || f.kind == "bars") {
    std::vector<SummaryRow> rows;
    for (const std::string& path : f.inputs) {
      std::vector<SummaryRow> r = read_summary_csv(path);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    std::vector<std::string> methods;
    std::vector<int> layer_values;
    for (const SummaryRow& r : rows) {
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
        methods.push_back(r.method);
      if (std::find(layer_values.begin(), layer_values.end(), r.layers) == layer_values.end())
        layer_values.push_back(r.layers);
    }
    std::sort(layer_values.begin(), layer_values.end());
    std::vector<decorr::svg::Series> series;
    for (const std::string& m : methods) {
      decorr::svg::Series s{m, {}};
      for (int l : layer_values) {
        double best = std::nan("");
        for (const SummaryRow& r : rows)
          if (r.method == m && r.layers == l && (std::isnan(best) || r.mean_test > best))
            best = r.mean_test;
        s.points.emplace_back(l, best);
      }
      series.push_back(std::move(s));
    }
    opt.x_label = "layers K";
    opt.y_label = "test accuracy";
    if (f.kind == "depth") {
      opt.title = "test accuracy vs. depth";
      decorr::svg::write_file(f.out, decorr::svg::render_line_chart(series, opt));
    } else {
      opt.title = "test accuracy by method";
      std::vector<std::string> categories;
      for (int l : layer_values) categories.push_back("L" + std::to_string(l));
      decorr::svg::write_file(f.out, decorr::svg::render_bar_chart(categories, series, opt));
    }
  } else {
    throw decorr::DataError("plot: unknown kind '" + f.kind + "'");
  }
  std::cout << "chart -> " << f.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"overcorrelation diagnostics and DeCorr training for graph neural networks"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  add_train_flags(app.add_subcommand("train", "train one model configuration"), train_flags);

  SweepFlags sweep_flags;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a grid of configurations");
  sweep_cmd->add_option("--spec", sweep_flags.spec_path, "sweep spec JSON file")->required();
  sweep_cmd->add_option("--out", sweep_flags.out_override, "override the output directory");
  sweep_cmd->add_option("--threads", sweep_flags.threads, "worker pool size (0 = hardware)");
  sweep_cmd->add_flag("--reaggregate-only", sweep_flags.reaggregate_only,
                      "recompute summary.csv/table.md from existing run files");

  PrelimPropFlags prop_flags;
  CLI::App* prop_cmd =
      app.add_subcommand("prelim-prop", "Corr/SMV of repeatedly propagated random features");
  add_dataset_flags(prop_cmd, prop_flags.data);
  prop_cmd->add_option("--dim", prop_flags.dim, "random feature dimension")
      ->check(CLI::PositiveNumber);
  prop_cmd->add_option("--kmax", prop_flags.k_max, "maximum propagation depth")
      ->check(CLI::NonNegativeNumber);
  prop_cmd->add_option("--runs", prop_flags.runs, "number of random draws")
      ->check(CLI::PositiveNumber);
  prop_cmd->add_option("--seed", prop_flags.seed, "rng seed");
  prop_cmd->add_flag("--no-smv", prop_flags.no_smv, "skip the SMV columns");
  prop_cmd->add_option("--out", prop_flags.out_dir, "output directory");

  PrelimTransFlags trans_flags;
  CLI::App* trans_cmd =
      app.add_subcommand("prelim-trans", "Corr of an untrained MLP at increasing depth");
  trans_cmd->add_option("--nodes", trans_flags.nodes, "number of feature rows")
      ->check(CLI::PositiveNumber);
  trans_cmd->add_option("--dim", trans_flags.dim, "input feature dimension")
      ->check(CLI::PositiveNumber);
  trans_cmd->add_option("--hidden", trans_flags.hidden, "hidden width")
      ->check(CLI::PositiveNumber);
  trans_cmd->add_option("--kmax", trans_flags.k_max, "maximum depth")
      ->check(CLI::NonNegativeNumber);
  trans_cmd->add_option("--depths", trans_flags.depths, "comma list of depths to report");
  trans_cmd->add_option("--runs", trans_flags.runs, "number of random draws")
      ->check(CLI::PositiveNumber);
  trans_cmd->add_option("--seed", trans_flags.seed, "rng seed");
  trans_cmd->add_option("--variant", trans_flags.variant, "both | linear | relu")
      ->check(CLI::IsMember({"both", "linear", "relu"}));
  trans_cmd->add_flag("--no-smv", trans_flags.no_smv, "skip the SMV columns");
  trans_cmd->add_option("--out", trans_flags.out_dir, "output directory");

  std::string metrics_input;
  CLI::App* metrics_cmd =
      app.add_subcommand("metrics", "Corr/SMV of a matrix read from CSV (rows = nodes)");
  metrics_cmd->add_option("--input", metrics_input, "matrix CSV file")->required();

  PlotFlags plot_flags;
  CLI::App* plot_cmd = app.add_subcommand("plot", "render deterministic SVG charts");
  plot_cmd->add_option("--inputs", plot_flags.inputs, "run JSON or sweep summary files")
      ->required()
      ->expected(-1);
  plot_cmd->add_option("--out", plot_flags.out, "output SVG path");
  plot_cmd->add_option("--kind", plot_flags.kind, "epochs | depth | bars")
      ->check(CLI::IsMember({"epochs", "depth", "bars"}));
  plot_cmd->add_option("--field", plot_flags.field,
                       "epoch field: loss l_class l_d l_m acc_train acc_val acc_test corr smv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_flags);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_flags);
    if (app.got_subcommand("prelim-prop")) return cmd_prelim_prop(prop_flags);
    if (app.got_subcommand("prelim-trans")) return cmd_prelim_trans(trans_flags);
    if (app.got_subcommand("metrics")) return cmd_metrics(metrics_input);
    if (app.got_subcommand("plot")) return cmd_plot(plot_flags);
  } catch (const decorr::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
