#!/usr/bin/env python3
"""Materialize the benchmark datasets into the canonical layout.

Downloads public copies of Cora, Citeseer (LINQS) and Chameleon, Squirrel
(Geom-GCN repository) and converts each into the directory layout the
loader expects:

    data/<name>/graph.edges    two 0-based node ids per line
    data/<name>/features.csv   one comma-separated row per node
    data/<name>/labels.csv     one integer per line

The test suite never downloads anything; run this once by hand:

    python3 tools/fetch_datasets.py [--root data] [--only cora,citeseer,...]

Note on counts: published copies of these graphs differ slightly across
sources. The LINQS cora.cites file has 5429 citation lines of which 151
are reciprocal duplicates, so the deduplicated undirected ingestion
reports 5278 edges; `dgnn validate --profile cora` prints expected-vs-found
for exactly this reason. Homophily and all training-facing statistics are
unaffected.
"""

import argparse
import csv
import io
import sys
import tarfile
import urllib.request
from pathlib import Path

LINQS = {
    "cora": "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz",
    "citeseer": "https://linqs-data.soe.ucsc.edu/public/lbc/citeseer.tgz",
}

GEOM_GCN_BASE = (
    "https://raw.githubusercontent.com/graphdml-uiuc-jlu/geom-gcn/master/new_data"
)
GEOM_GCN = ["chameleon", "squirrel"]


def fetch(url: str) -> bytes:
    print(f"  fetching {url}")
    with urllib.request.urlopen(url, timeout=120) as r:
        return r.read()


def write_dataset(root: Path, name: str, edges, features, labels) -> None:
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "graph.edges", "w", newline="\n") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    with open(out / "features.csv", "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in features:
            w.writerow([f"{x:.9g}" for x in row])
    with open(out / "labels.csv", "w", newline="\n") as f:
        for l in labels:
            f.write(f"{l}\n")
    n, d = len(features), len(features[0])
    print(f"  wrote {name}: n={n} d={d} c={max(labels) + 1} edge_lines={len(edges)}")


def convert_linqs(root: Path, name: str) -> None:
    blob = fetch(LINQS[name])
    tf = tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz")
    content = tf.extractfile(f"{name}/{name}.content").read().decode()
    cites = tf.extractfile(f"{name}/{name}.cites").read().decode()

    ids, features, label_names = [], [], []
    for line in content.strip().splitlines():
        parts = line.split()
        ids.append(parts[0])
        features.append([float(x) for x in parts[1:-1]])
        label_names.append(parts[-1])
    index = {node: i for i, node in enumerate(ids)}
    classes = {name: i for i, name in enumerate(sorted(set(label_names)))}
    labels = [classes[l] for l in label_names]

    edges, dangling = [], 0
    for line in cites.strip().splitlines():
        a, b = line.split()
        if a in index and b in index:
            edges.append((index[a], index[b]))
        else:
            dangling += 1  # citeseer cites a few ids missing from .content
    if dangling:
        print(f"  {name}: skipped {dangling} citation lines with unknown ids")
    write_dataset(root, name, edges, features, labels)


def convert_geom_gcn(root: Path, name: str) -> None:
    edges_txt = fetch(f"{GEOM_GCN_BASE}/{name}/out1_graph_edges.txt").decode()
    nodes_txt = fetch(f"{GEOM_GCN_BASE}/{name}/out1_node_feature_label.txt").decode()

    features, labels = {}, {}
    dim = 0
    for line in nodes_txt.strip().splitlines()[1:]:  # header: node_id feature label
        node, feat, label = line.split("\t")
        idx = int(node)
        cols = [int(x) for x in feat.split(",")]
        labels[idx] = int(label)
        features[idx] = cols
        dim = max(dim, max(cols) + 1 if cols else 0)
    n = max(features) + 1
    dense = [[0.0] * dim for _ in range(n)]
    for idx, cols in features.items():
        for c in cols:
            dense[idx][c] = 1.0
    label_list = [labels[i] for i in range(n)]

    edges = []
    for line in edges_txt.strip().splitlines()[1:]:  # header line
        a, b = line.split("\t")
        edges.append((int(a), int(b)))
    write_dataset(root, name, edges, dense, label_list)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="data", help="output root directory")
    ap.add_argument("--only", default="", help="comma-separated subset of dataset names")
    args = ap.parse_args()
    root = Path(args.root)
    wanted = set(args.only.split(",")) if args.only else None

    for name in list(LINQS) + GEOM_GCN:
        if wanted and name not in wanted:
            continue
        print(f"{name}:")
        try:
            if name in LINQS:
                convert_linqs(root, name)
            else:
                convert_geom_gcn(root, name)
        except Exception as e:  # keep going; report at the end
            print(f"  FAILED: {e}", file=sys.stderr)
    print("done; check statistics with: build/tools/dgnn validate --profile <name>")
    return 0


if __name__ == "__main__":
    sys.exit(main())
