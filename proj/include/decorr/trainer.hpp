#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "decorr/graph.hpp"
#include "decorr/metrics.hpp"
#include "decorr/models.hpp"
#include "decorr/objective.hpp"

namespace decorr {

struct TrainConfig {
  ModelConfig model;
  DecorrConfig decorr;
  double lr = 0.01;
  double weight_decay = 0.0;
  int epochs = 1000;
  std::uint64_t seed = 0;
  double dropedge = 0.0;          // per-epoch edge drop rate, 0 disables
  bool missing_features = false;  // zero the features of val/test nodes
  int metric_every = 10;          // SMV cadence in epochs; Corr is tracked every epoch

  void validate() const {
    model.validate();
    decorr.validate();
    require(lr > 0.0, "train: lr must be positive");
    require(weight_decay >= 0.0, "train: negative weight decay");
    require(epochs >= 1, "train: epochs must be >= 1");
    require(dropedge >= 0.0 && dropedge <= 1.0, "train: dropedge outside [0, 1]");
    require(metric_every >= 1, "train: metric_every must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double l_class = 0.0;
  double l_d = 0.0;
  double l_m = 0.0;
  double acc_train = 0.0;
  double acc_val = 0.0;
  double acc_test = 0.0;
  std::optional<double> corr;
  std::optional<double> smv;
};

struct RunResult {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // maximizes validation accuracy, earliest on ties
  double test_acc = 0.0;
  double wall_secs = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
  int diverged_epoch = -1;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::vector<DenseMatrix> m;
  std::vector<DenseMatrix> v;
  long step = 0;

  static AdamState init(const std::vector<ParamRef>& refs) {
    AdamState s;
    for (const ParamRef& r : refs) {
      s.m.emplace_back(r.tensor->rows, r.tensor->cols);
      s.v.emplace_back(r.tensor->rows, r.tensor->cols);
    }
    return s;
  }
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient of weight matrices only; biases and normalization affine terms
/// are not decayed.
inline void adam_step(const std::vector<ParamRef>& refs,
                      const std::vector<const DenseMatrix*>& grads, AdamState& state,
                      double lr, double weight_decay) {
  require(refs.size() == grads.size() && refs.size() == state.m.size(),
          "adam_step: parameter/gradient/state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < refs.size(); ++p) {
    DenseMatrix& theta = *refs[p].tensor;
    const DenseMatrix& grad = *grads[p];
    require(theta.same_shape(grad), "adam_step: gradient shape mismatch");
    const bool decay = refs[p].kind == ParamKind::Weight && weight_decay > 0.0;
    DenseMatrix& m = state.m[p];
    DenseMatrix& v = state.v[p];
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      double g = grad.data[i];
      if (decay) g += weight_decay * theta.data[i];
      m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * g;
      v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      theta.data[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

// ---------------------------------------------------------------------------
// Forward dispatch and evaluation
// ---------------------------------------------------------------------------

inline SparseCSR propagation_operator(const ModelConfig& cfg, const Graph& g) {
  switch (cfg.kind) {
    case ModelKind::Gcn:
      return normalize_adjacency(g);
    case ModelKind::Cheby:
      return cheby_operator(g);
    case ModelKind::Mlp:
      return SparseCSR::identity(g.n);
  }
  throw std::logic_error("unreachable model kind");
}

inline ForwardOutput model_forward(Tape& t, const ModelConfig& cfg, Parameters& p,
                                   const SparseCSR& op, const DenseMatrix& x, Rng& rng,
                                   bool training) {
  switch (cfg.kind) {
    case ModelKind::Gcn:
      return gcn_forward(t, cfg, p, op, x, rng, training);
    case ModelKind::Cheby:
      return cheby_forward(t, cfg, p, op, x, rng, training);
    case ModelKind::Mlp:
      return mlp_forward(t, cfg, p, x, rng, training);
  }
  throw std::logic_error("unreachable model kind");
}

/// Fraction of masked nodes whose argmax logit equals the label; argmax ties
/// resolve to the lowest class index.
inline double accuracy_from_logits(const DenseMatrix& logits, const std::vector<int>& labels,
                                   const std::vector<int>& mask) {
  require(!mask.empty(), "accuracy: empty mask");
  int hits = 0;
  for (int i : mask) {
    require(i >= 0 && i < logits.rows, "accuracy: mask index out of range");
    require(labels[i] >= 0 && labels[i] < logits.cols, "accuracy: unlabeled node in mask");
    int arg = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;
    if (arg == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

/// Eval-mode accuracy of the current parameters on one split part.
inline double evaluate(const Graph& g, const ModelConfig& cfg, Parameters& p,
                       const std::vector<int>& mask) {
  SparseCSR op = propagation_operator(cfg, g);
  Tape t;
  Rng unused(0);
  ForwardOutput fwd = model_forward(t, cfg, p, op, g.features, unused, false);
  return accuracy_from_logits(t.value(fwd.logits), g.labels, mask);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainArtifacts {
  Parameters params;            // parameters at the last epoch
  Parameters best_params;       // snapshot at the best validation epoch
  Discriminator discriminator;  // empty unless beta > 0
};

inline RunResult train(const Graph& g, const Split& split, const TrainConfig& cfg,
                       TrainArtifacts* artifacts = nullptr) {
  cfg.validate();
  require(!split.train.empty(), "train: empty training set");
  const auto t_start = std::chrono::steady_clock::now();

  RunResult result;
  result.config = cfg;
  result.seed = cfg.seed;

  Graph work = cfg.missing_features ? apply_missing_features(g, split) : g;
  ModelConfig model = cfg.model;
  model.input_dim = work.feature_dim();
  model.classes = work.num_classes;

  Rng rng(cfg.seed);
  Parameters params = init_parameters(model, rng);
  Discriminator disc;
  const bool use_disc = cfg.decorr.beta > 0.0;
  if (use_disc) disc = init_discriminator(model.input_dim, model.hidden, rng);

  std::vector<ParamRef> refs = collect_parameters(params);
  if (use_disc) refs.push_back({"discriminator.w", &disc.w, ParamKind::Weight});
  AdamState adam = AdamState::init(refs);

  const SparseCSR base_op = propagation_operator(model, work);
  Parameters best_params = params;
  double best_val = -1.0;
  bool warned_degenerate = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SparseCSR epoch_op_storage;
    const SparseCSR* op = &base_op;
    if (cfg.dropedge > 0.0 && model.kind != ModelKind::Mlp) {
      Graph perturbed = drop_edge(work, cfg.dropedge, rng);
      epoch_op_storage = propagation_operator(model, perturbed);
      op = &epoch_op_storage;
    }

    Tape tape;
    ForwardOutput fwd = model_forward(tape, model, params, *op, work.features, rng, true);
    std::optional<Var> disc_var;
    if (use_disc) {
      disc_var = tape.leaf(disc.w);
      fwd.bound.push_back({&disc.w, ParamKind::Weight, *disc_var});
    }
    ObjectiveResult obj = overall_objective(tape, fwd.logits, work.labels, split.train,
                                            fwd.hidden, fwd.input, cfg.decorr, disc_var, rng);
    if (obj.degenerate_layers > 0 && !warned_degenerate) {
      std::cerr << "warning: decorrelation loss degenerate on " << obj.degenerate_layers
                << " layer(s) at epoch " << epoch << "; contributing 0\n";
      warned_degenerate = true;
    }

    const double loss = tape.scalar(obj.total);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      result.diverged_epoch = epoch;
      break;
    }

    tape.backward(obj.total);
    std::unordered_map<const DenseMatrix*, const DenseMatrix*> grad_of;
    for (const BoundParam& b : fwd.bound) grad_of[b.tensor] = &tape.grad(b.var);
    std::vector<const DenseMatrix*> grads;
    grads.reserve(refs.size());
    std::vector<DenseMatrix> zero_storage;  // untouched parameters get zero gradients
    zero_storage.reserve(refs.size());
    for (const ParamRef& r : refs) {
      auto it = grad_of.find(r.tensor);
      if (it != grad_of.end()) {
        grads.push_back(it->second);
      } else {
        zero_storage.emplace_back(r.tensor->rows, r.tensor->cols);
        grads.push_back(&zero_storage.back());
      }
    }
    adam_step(refs, grads, adam, cfg.lr, cfg.weight_decay);

    bool finite_params = true;
    for (const ParamRef& r : refs) finite_params = finite_params && r.tensor->all_finite();
    if (!finite_params) {
      result.diverged = true;
      result.diverged_epoch = epoch;
      break;
    }

    Tape eval_tape;
    Rng eval_rng(0);
    ForwardOutput eval_fwd =
        model_forward(eval_tape, model, params, base_op, work.features, eval_rng, false);
    const DenseMatrix& logits = eval_tape.value(eval_fwd.logits);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.l_class = obj.l_class;
    rec.l_d = obj.l_d;
    rec.l_m = obj.l_m;
    rec.acc_train = accuracy_from_logits(logits, work.labels, split.train);
    rec.acc_val = accuracy_from_logits(logits, work.labels, split.val);
    rec.acc_test = accuracy_from_logits(logits, work.labels, split.test);
    rec.corr = corr_metric(logits);
    if (epoch % cfg.metric_every == 0) rec.smv = smv(logits);
    result.epochs.push_back(rec);

    if (rec.acc_val > best_val) {
      best_val = rec.acc_val;
      result.best_epoch = epoch;
      if (artifacts) best_params = params;
    }
  }

  if (result.best_epoch >= 0)
    result.test_acc = result.epochs[result.best_epoch].acc_test;
  result.wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (artifacts) {
    artifacts->params = std::move(params);
    artifacts->best_params = std::move(best_params);
    artifacts->discriminator = std::move(disc);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

using Json = nlohmann::ordered_json;

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Cheby: return "cheby";
    case ModelKind::Mlp: return "mlp";
  }
  return "gcn";
}

inline const char* to_string(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::Batch: return "batch";
    case NormKind::Pair: return "pair";
  }
  return "none";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn") return ModelKind::Gcn;
  if (s == "cheby") return ModelKind::Cheby;
  if (s == "mlp") return ModelKind::Mlp;
  throw DataError("unknown model kind: " + s);
}

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "batch") return NormKind::Batch;
  if (s == "pair") return NormKind::Pair;
  throw DataError("unknown norm kind: " + s);
}

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["model"] = {{"kind", to_string(c.model.kind)},
                {"layers", c.model.layers},
                {"hidden", c.model.hidden},
                {"input_dim", c.model.input_dim},
                {"classes", c.model.classes},
                {"norm", to_string(c.model.norm)},
                {"residual", c.model.residual},
                {"dropout", c.model.dropout},
                {"cheby_order", c.model.cheby_order},
                {"bias", c.model.bias},
                {"pairnorm_scale", c.model.pairnorm_scale}};
  j["decorr"] = {{"alpha", c.decorr.alpha},
                 {"beta", c.decorr.beta},
                 {"t", c.decorr.t},
                 {"sample_size", c.decorr.sample_size},
                 {"mi_batch", c.decorr.mi_batch}};
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["dropedge"] = c.dropedge;
  j["missing_features"] = c.missing_features;
  j["metric_every"] = c.metric_every;
  return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  const Json& m = j.at("model");
  c.model.kind = model_kind_from_string(m.at("kind").get<std::string>());
  c.model.layers = m.at("layers").get<int>();
  c.model.hidden = m.at("hidden").get<int>();
  c.model.input_dim = m.at("input_dim").get<int>();
  c.model.classes = m.at("classes").get<int>();
  c.model.norm = norm_kind_from_string(m.at("norm").get<std::string>());
  c.model.residual = m.at("residual").get<bool>();
  c.model.dropout = m.at("dropout").get<double>();
  c.model.cheby_order = m.at("cheby_order").get<int>();
  c.model.bias = m.at("bias").get<bool>();
  c.model.pairnorm_scale = m.at("pairnorm_scale").get<double>();
  const Json& d = j.at("decorr");
  c.decorr.alpha = d.at("alpha").get<double>();
  c.decorr.beta = d.at("beta").get<double>();
  c.decorr.t = d.at("t").get<int>();
  c.decorr.sample_size = d.at("sample_size").get<int>();
  c.decorr.mi_batch = d.at("mi_batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dropedge = j.at("dropedge").get<double>();
  c.missing_features = j.at("missing_features").get<bool>();
  c.metric_every = j.at("metric_every").get<int>();
  return c;
}

inline Json to_json(const RunResult& r) {
  Json j;
  j["config"] = to_json(r.config);
  j["epochs"] = Json::array();
  for (const EpochRecord& e : r.epochs) {
    Json je;
    je["epoch"] = e.epoch;
    je["loss"] = e.loss;
    je["l_class"] = e.l_class;
    je["l_d"] = e.l_d;
    je["l_m"] = e.l_m;
    je["acc_train"] = e.acc_train;
    je["acc_val"] = e.acc_val;
    je["acc_test"] = e.acc_test;
    je["corr"] = e.corr ? Json(*e.corr) : Json(nullptr);
    je["smv"] = e.smv ? Json(*e.smv) : Json(nullptr);
    j["epochs"].push_back(std::move(je));
  }
  j["best_epoch"] = r.best_epoch;
  j["test_acc"] = r.test_acc;
  j["wall_secs"] = r.wall_secs;
  j["seed"] = r.seed;
  j["diverged"] = r.diverged;
  j["diverged_epoch"] = r.diverged_epoch;
  return j;
}

inline RunResult run_result_from_json(const Json& j) {
  RunResult r;
  r.config = train_config_from_json(j.at("config"));
  for (const Json& je : j.at("epochs")) {
    EpochRecord e;
    e.epoch = je.at("epoch").get<int>();
    e.loss = je.at("loss").get<double>();
    e.l_class = je.at("l_class").get<double>();
    e.l_d = je.at("l_d").get<double>();
    e.l_m = je.at("l_m").get<double>();
    e.acc_train = je.at("acc_train").get<double>();
    e.acc_val = je.at("acc_val").get<double>();
    e.acc_test = je.at("acc_test").get<double>();
    if (!je.at("corr").is_null()) e.corr = je.at("corr").get<double>();
    if (!je.at("smv").is_null()) e.smv = je.at("smv").get<double>();
    r.epochs.push_back(e);
  }
  r.best_epoch = j.at("best_epoch").get<int>();
  r.test_acc = j.at("test_acc").get<double>();
  r.wall_secs = j.at("wall_secs").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.diverged = j.value("diverged", false);
  r.diverged_epoch = j.value("diverged_epoch", -1);
  return r;
}

inline void write_run_result(const std::string& path, const RunResult& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write run result: " + path);
  out << to_json(r).dump(2) << '\n';
}

inline RunResult read_run_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run result: " + path);
  Json j = Json::parse(in);
  return run_result_from_json(j);
}

inline void write_epochs_csv(std::ostream& out, const RunResult& r) {
  out << "epoch,loss,l_class,l_d,l_m,acc_train,acc_val,acc_test,corr,smv\n";
  for (const EpochRecord& e : r.epochs) {
    out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.l_class) << ','
        << format_double(e.l_d) << ',' << format_double(e.l_m) << ','
        << format_double(e.acc_train) << ',' << format_double(e.acc_val) << ','
        << format_double(e.acc_test) << ',' << (e.corr ? format_double(*e.corr) : "") << ','
        << (e.smv ? format_double(*e.smv) : "") << '\n';
  }
}

inline void write_epochs_csv(const std::string& path, const RunResult& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write epochs csv: " + path);
  write_epochs_csv(out, r);
}

}  // namespace decorr
