"""Text dataset formats, digests, and the run manifest.

All files are UTF-8 with LF line endings and `.` decimals. Floats are
written with shortest round-trip repr, so a load-save cycle is lossless.

  nodes.csv       header `id,kind,f1..fF`, one row per node
  edges.tsv       `u<TAB>v<TAB>e1..eFe`, one line per undirected edge, u < v
  labels_dp.tsv   `node<TAB>label`
  labels_sc.tsv   `u<TAB>v<TAB>label`
  ground_truth.tsv  typed rows: `supply u v hidden` and `node id tier label`
  mined_edges.tsv `u<TAB>v<TAB>score`
  roc_points.tsv  `fpr<TAB>tpr`
"""

import hashlib
import json
import os
import time

import numpy as np

from .errors import InvalidInput
from .graph import SmeGraph


def _fmt(value):
    return repr(float(value))


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def write_graph(out_dir, g):
    nodes_path = os.path.join(out_dir, "nodes.csv")
    edges_path = os.path.join(out_dir, "edges.tsv")
    fn = g.node_features.shape[1]
    header = "id,kind," + ",".join(f"f{i + 1}" for i in range(fn)) if fn else "id,kind"
    lines = [header]
    for u in range(g.num_nodes):
        feats = ",".join(_fmt(v) for v in g.node_features[u])
        lines.append(f"{u},{g.node_kind[u]},{feats}" if fn else f"{u},{g.node_kind[u]}")
    _write_lines(nodes_path, lines)

    pairs, feats = g.undirected_edges()
    rows = []
    for (u, v), row in zip(pairs.tolist(), feats):
        cells = [str(u), str(v)] + [_fmt(x) for x in row]
        rows.append("\t".join(cells))
    _write_lines(edges_path, rows)
    return [nodes_path, edges_path]


def read_graph(data_dir):
    nodes_path = os.path.join(data_dir, "nodes.csv")
    edges_path = os.path.join(data_dir, "edges.tsv")
    kinds = []
    feats = []
    with open(nodes_path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:2] != ["id", "kind"]:
            raise InvalidInput(f"{nodes_path}: expected header starting with id,kind")
        num_cols = len(header) - 2
        for lineno, line in enumerate(fh, start=2):
            cells = line.rstrip("\n").split(",")
            if len(cells) != len(header):
                raise InvalidInput(f"{nodes_path}:{lineno}: expected {len(header)} cells")
            if int(cells[0]) != lineno - 2:
                raise InvalidInput(f"{nodes_path}:{lineno}: ids must be dense and ordered")
            kinds.append(cells[1])
            feats.append([float(c) for c in cells[2:]])
    n = len(kinds)
    X = np.asarray(feats, dtype=np.float64).reshape(n, num_cols)

    edges = []
    edge_feats = []
    fe = None
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split("\t")
            if len(cells) < 2:
                raise InvalidInput(f"{edges_path}:{lineno}: need at least u and v")
            u, v = int(cells[0]), int(cells[1])
            if not u < v:
                raise InvalidInput(f"{edges_path}:{lineno}: edges must satisfy u < v")
            row = [float(c) for c in cells[2:]]
            if fe is None:
                fe = len(row)
            elif len(row) != fe:
                raise InvalidInput(f"{edges_path}:{lineno}: inconsistent edge feature count")
            edges.append((u, v))
            edge_feats.append(row)
    fe = fe or 0
    feats = np.zeros((len(edges), fe))
    for i, row in enumerate(edge_feats):
        feats[i] = row
    return SmeGraph.from_edge_list(
        n,
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        node_features=X,
        edge_features=feats,
        node_kind=np.asarray(kinds, dtype="U8"),
    )


def write_node_labels(path, nodes, labels):
    _write_lines(path, (f"{int(u)}\t{int(y)}" for u, y in zip(nodes, labels)))


def read_node_labels(path):
    nodes = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split("\t")
            if len(cells) != 2 or cells[1] not in ("0", "1"):
                raise InvalidInput(f"{path}:{lineno}: expected `node<TAB>0|1`")
            nodes.append(int(cells[0]))
            labels.append(int(cells[1]))
    return np.asarray(nodes, dtype=np.int64), np.asarray(labels, dtype=np.int8)


def write_pair_labels(path, pairs, labels):
    _write_lines(
        path, (f"{int(u)}\t{int(v)}\t{int(y)}" for (u, v), y in zip(np.asarray(pairs), labels))
    )


def read_pair_labels(path):
    pairs = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split("\t")
            if len(cells) != 3 or cells[2] not in ("0", "1"):
                raise InvalidInput(f"{path}:{lineno}: expected `u<TAB>v<TAB>0|1`")
            pairs.append((int(cells[0]), int(cells[1])))
            labels.append(int(cells[2]))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2), np.asarray(labels, dtype=np.int8)


def write_ground_truth(path, truth):
    lines = []
    for (u, v), hidden in zip(truth.supply_edges.tolist(), truth.hidden_mask.tolist()):
        lines.append(f"supply\t{u}\t{v}\t{int(hidden)}")
    for u in range(truth.num_nodes):
        lines.append(f"node\t{u}\t{int(truth.tiers[u])}\t{int(truth.default_labels[u])}")
    _write_lines(path, lines)


def read_ground_truth(path):
    from .synthgen import GroundTruth

    supply = []
    hidden = []
    tiers = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split("\t")
            if cells[0] == "supply" and len(cells) == 4:
                supply.append((int(cells[1]), int(cells[2])))
                hidden.append(bool(int(cells[3])))
            elif cells[0] == "node" and len(cells) == 4:
                if int(cells[1]) != len(tiers):
                    raise InvalidInput(f"{path}:{lineno}: node ids must be dense and ordered")
                tiers.append(int(cells[2]))
                labels.append(int(cells[3]))
            else:
                raise InvalidInput(f"{path}:{lineno}: unknown record {cells[0]!r}")
    return GroundTruth(
        supply_edges=np.asarray(supply, dtype=np.int64).reshape(-1, 2),
        hidden_mask=np.asarray(hidden, dtype=bool),
        tiers=np.asarray(tiers, dtype=np.int8),
        default_labels=np.asarray(labels, dtype=np.int8),
    )


def write_mined_edges(path, mined):
    _write_lines(path, (f"{int(u)}\t{int(v)}\t{_fmt(s)}" for u, v, s in mined))


def read_mined_edges(path):
    mined = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split("\t")
            if len(cells) != 3:
                raise InvalidInput(f"{path}:{lineno}: expected `u<TAB>v<TAB>score`")
            mined.append((int(cells[0]), int(cells[1]), float(cells[2])))
    return mined


def write_roc_points(path, points):
    _write_lines(path, (f"{_fmt(fpr)}\t{_fmt(tpr)}" for fpr, tpr in points))


def write_scores(path, scores):
    _write_lines(path, (f"{i}\t{_fmt(s)}" for i, s in enumerate(scores)))


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def utc_timestamps():
    """(start, end) helper honoring SOURCE_DATE_EPOCH for reproducible runs."""
    pinned = os.environ.get("SOURCE_DATE_EPOCH")
    if pinned is not None:
        return float(pinned)
    return time.time()


def write_manifest(path, manifest):
    """Atomic JSON dump with sorted keys; digests cover the listed outputs."""
    blob = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(blob)
    os.replace(tmp, path)
