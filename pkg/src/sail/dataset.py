"""Canonical dataset directory format.

A dataset is a directory with: meta.json ({"num_nodes", "num_features",
"num_classes"}), edges.tsv (one "u<TAB>v" pair per line, 0-indexed, either
orientation), features.tsv (one row of whitespace-separated floats per node),
and optionally labels.tsv ("node<TAB>label") and splits.json
({"train": [...], "val": [...], "test": [...]}).
"""

import json
from pathlib import Path

import numpy as np

from sail.graph import Graph


class DatasetError(ValueError):
    pass


def _fail(path, lineno, message):
    raise DatasetError(f"{path}:{lineno}: {message}")


def load_dataset(directory) -> Graph:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise DatasetError(f"missing required file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_path}: invalid JSON ({exc})") from exc
    for key in ("num_nodes", "num_features", "num_classes"):
        if key not in meta:
            raise DatasetError(f"{meta_path}: missing key {key!r}")
    n = int(meta["num_nodes"])
    f = int(meta["num_features"])

    edges_path = directory / "edges.tsv"
    if not edges_path.is_file():
        raise DatasetError(f"missing required file: {edges_path}")
    edges = []
    with open(edges_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                _fail(edges_path, lineno, f"expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                _fail(edges_path, lineno, f"non-integer endpoint in {line!r}")
            if not (0 <= u < n and 0 <= v < n):
                _fail(edges_path, lineno, f"endpoint out of range [0, {n})")
            edges.append((u, v))

    features_path = directory / "features.tsv"
    if not features_path.is_file():
        raise DatasetError(f"missing required file: {features_path}")
    features = np.zeros((n, f), dtype=np.float32)
    with open(features_path) as fh:
        row = 0
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if row >= n:
                _fail(features_path, lineno, f"more than {n} feature rows")
            values = line.split()
            if len(values) != f:
                _fail(features_path, lineno,
                      f"expected {f} values, got {len(values)}")
            try:
                features[row] = np.asarray(values, dtype=np.float32)
            except ValueError:
                _fail(features_path, lineno, "non-numeric feature value")
            row += 1
    if row != n:
        raise DatasetError(f"{features_path}: expected {n} rows, got {row}")

    labels = None
    labels_path = directory / "labels.tsv"
    if labels_path.is_file():
        labels = np.full(n, -1, dtype=np.int64)
        with open(labels_path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    _fail(labels_path, lineno, f"expected 'node<TAB>label', got {line!r}")
                try:
                    node, label = int(parts[0]), int(parts[1])
                except ValueError:
                    _fail(labels_path, lineno, f"non-integer field in {line!r}")
                if not 0 <= node < n:
                    _fail(labels_path, lineno, f"node {node} out of range")
                labels[node] = label

    splits = None
    splits_path = directory / "splits.json"
    if splits_path.is_file():
        try:
            raw = json.loads(splits_path.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{splits_path}: invalid JSON ({exc})") from exc
        splits = {k: np.asarray(v, dtype=np.int64) for k, v in raw.items()}

    return Graph.build(n, edges, features, labels=labels, splits=splits)


def save_dataset(directory, g: Graph, num_classes: int | None = None) -> None:
    """Write a Graph back out in the canonical directory format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if num_classes is None:
        num_classes = (int(g.labels.max()) + 1) if g.labels is not None else 0
    (directory / "meta.json").write_text(json.dumps({
        "num_nodes": g.n,
        "num_features": g.num_features,
        "num_classes": num_classes,
    }, indent=2) + "\n")
    with open(directory / "edges.tsv", "w") as fh:
        for u, v in g.undirected_edges():
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.tsv", "w") as fh:
        for row in g.features:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    if g.labels is not None:
        with open(directory / "labels.tsv", "w") as fh:
            for node, label in enumerate(g.labels):
                if label >= 0:
                    fh.write(f"{node}\t{int(label)}\n")
    if g.splits is not None:
        (directory / "splits.json").write_text(json.dumps(
            {k: v.tolist() for k, v in g.splits.items()}) + "\n")


def write_edge_list(path, pairs) -> None:
    with open(path, "w") as fh:
        for u, v in pairs:
            fh.write(f"{int(u)}\t{int(v)}\n")


def load_edge_list(path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                _fail(path, lineno, f"expected 'u<TAB>v', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def toy_dataset_path() -> Path:
    """Location of the bundled 30-node toy dataset."""
    return Path(__file__).parent / "data" / "toy_graph"
