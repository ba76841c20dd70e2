#!/usr/bin/env python3
"""Convert a Planetoid citation dataset (the ind.<name>.* pickle files from
https://github.com/tkipf/gcn/tree/master/gcn/data) into a GNNB v1 text file.

Usage:
    python3 scripts/planetoid_to_gnnb.py --name cora --raw-dir /path/to/gcn/data \
        --out data/cora.gnnb

Node order follows the Planetoid convention: the allx block first, then the
test block at the positions named by ind.<name>.test.index. Gaps in the test
index (isolated Citeseer nodes) become zero-feature unlabeled nodes. Edges
are written once per undirected pair. The canonical public split (first 20*C
nodes train, next 500 val, test.index test) is appended unless --skip-split
is given; the trainer draws its own planetoid split for files without one.
"""

import argparse
import pickle
import sys


def load_pickle(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def to_rows(matrix):
    try:
        return matrix.todense().tolist()
    except AttributeError:
        return matrix.tolist()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--name", required=True, help="cora | citeseer | pubmed")
    ap.add_argument("--raw-dir", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--skip-split", action="store_true")
    args = ap.parse_args()

    base = f"{args.raw_dir}/ind.{args.name}"
    allx = to_rows(load_pickle(f"{base}.allx"))
    tx = to_rows(load_pickle(f"{base}.tx"))
    ally = to_rows(load_pickle(f"{base}.ally"))
    ty = to_rows(load_pickle(f"{base}.ty"))
    graph = load_pickle(f"{base}.graph")
    with open(f"{base}.test.index") as fh:
        test_index = [int(line) for line in fh if line.strip()]

    n_allx = len(allx)
    d0 = len(allx[0])
    num_classes = len(ally[0])
    n = max(max(test_index) + 1, n_allx + len(test_index))

    features = [[0.0] * d0 for _ in range(n)]
    labels = [-1] * n
    for i in range(n_allx):
        features[i] = allx[i]
        labels[i] = max(range(num_classes), key=lambda j: ally[i][j])
    for row, node in enumerate(sorted(test_index)):
        features[node] = tx[row]
        labels[node] = max(range(num_classes), key=lambda j: ty[row][j])

    edges = set()
    for src, neighbors in graph.items():
        for dst in neighbors:
            if src != dst and src < n and dst < n:
                edges.add((min(src, dst), max(src, dst)))
    edges = sorted(edges)

    with open(args.out, "w") as out:
        out.write(f"# gnnb 1 {n} {len(edges)} {d0} {num_classes}\n")
        out.write("# features\n")
        for row in features:
            out.write(" ".join(repr(float(v)) for v in row) + "\n")
        out.write("# labels\n")
        for y in labels:
            out.write(f"{y}\n")
        out.write("# edges\n")
        for a, b in edges:
            out.write(f"{a} {b}\n")
        if not args.skip_split:
            train = list(range(20 * num_classes))
            val = list(range(20 * num_classes, 20 * num_classes + 500))
            out.write("# split train\n" + " ".join(map(str, train)) + "\n")
            out.write("# split val\n" + " ".join(map(str, val)) + "\n")
            out.write("# split test\n" + " ".join(map(str, sorted(test_index))) + "\n")
    print(f"wrote {args.out}: n={n} m={len(edges)} d0={d0} C={num_classes}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
