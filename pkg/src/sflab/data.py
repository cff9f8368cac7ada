"""Dataset loading, split generation, and synthetic dataset construction.

On-disk layout of a dataset directory:

    edges.tsv      one edge per line, "u<TAB>v"; '#' comments
    features.csv   one row per node, comma-separated reals
    labels.csv     "node,label" per line (0-based ids, integer labels)
    splits.json    optional {"train": [...], "val": [...], "test": [...]}

A missing splits.json triggers seeded 60/20/20 random splitting at load.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError
from .graph import Graph, read_edge_list, write_edge_list

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    masks: dict
    targets: np.ndarray | None = None  # regression targets, when applicable

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def with_masks(self, masks: dict) -> "Dataset":
        return Dataset(self.graph, self.features, self.labels, masks,
                       self.targets)


def random_split(n: int, seed: int, fractions=SPLIT_FRACTIONS) -> dict:
    """Disjoint train/val/test masks with sizes within one node of the
    requested proportions."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    masks = {
        "train": np.zeros(n, dtype=bool),
        "val": np.zeros(n, dtype=bool),
        "test": np.zeros(n, dtype=bool),
    }
    masks["train"][order[:n_train]] = True
    masks["val"][order[n_train : n_train + n_val]] = True
    masks["test"][order[n_train + n_val :]] = True
    return masks


def _read_csv_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise DatasetFormatError(f"{path}: empty")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(path, split_seed: int = 0) -> Dataset:
    path = os.fspath(path)
    edges_file = os.path.join(path, "edges.tsv")
    features_file = os.path.join(path, "features.csv")
    labels_file = os.path.join(path, "labels.csv")
    for f in (edges_file, features_file, labels_file):
        if not os.path.exists(f):
            raise DatasetFormatError(f"missing {f}")
    try:
        graph = read_edge_list(edges_file)
    except Exception as exc:
        raise DatasetFormatError(f"{edges_file}: {exc}") from exc
    features = _read_csv_matrix(features_file)
    if features.shape[0] != graph.n:
        raise DatasetFormatError(
            f"{features_file}: {features.shape[0]} rows but graph has "
            f"{graph.n} nodes"
        )

    labels = np.full(graph.n, -1, dtype=np.int64)
    with open(labels_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DatasetFormatError(
                    f"{labels_file}:{lineno}: expected 'node,label'"
                )
            try:
                node, lab = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DatasetFormatError(f"{labels_file}:{lineno}: {exc}") from exc
            if not 0 <= node < graph.n:
                raise DatasetFormatError(
                    f"{labels_file}:{lineno}: node {node} out of range"
                )
            labels[node] = lab
    if np.any(labels < 0):
        missing = int(np.nonzero(labels < 0)[0][0])
        raise DatasetFormatError(f"{labels_file}: node {missing} has no label")
    n_classes = int(labels.max()) + 1
    bad = np.nonzero(labels >= n_classes)[0]
    if bad.size:
        raise DatasetFormatError(f"{labels_file}: label out of range at node {bad[0]}")

    splits_file = os.path.join(path, "splits.json")
    if os.path.exists(splits_file):
        with open(splits_file, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{splits_file}: {exc}") from exc
        masks = {}
        for key in ("train", "val", "test"):
            if key not in raw:
                raise DatasetFormatError(f"{splits_file}: missing {key!r}")
            m = np.zeros(graph.n, dtype=bool)
            idx = np.asarray(raw[key], dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= graph.n):
                raise DatasetFormatError(f"{splits_file}: {key} index out of range")
            m[idx] = True
            masks[key] = m
        if (masks["train"] & masks["val"]).any() or (
            masks["train"] & masks["test"]
        ).any() or (masks["val"] & masks["test"]).any():
            raise DatasetFormatError(f"{splits_file}: masks overlap")
    else:
        masks = random_split(graph.n, seed=split_seed)
    return Dataset(graph=graph, features=features, labels=labels, masks=masks)


def save_dataset(dataset: Dataset, path, write_splits: bool = False) -> None:
    os.makedirs(path, exist_ok=True)
    write_edge_list(dataset.graph, os.path.join(path, "edges.tsv"))
    with open(os.path.join(path, "features.csv"), "w", encoding="utf-8") as fh:
        for row in dataset.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(path, "labels.csv"), "w", encoding="utf-8") as fh:
        for node, lab in enumerate(dataset.labels):
            fh.write(f"{node},{int(lab)}\n")
    if write_splits:
        out = {
            key: [int(i) for i in np.nonzero(mask)[0]]
            for key, mask in dataset.masks.items()
        }
        with open(os.path.join(path, "splits.json"), "w", encoding="utf-8") as fh:
            json.dump(out, fh, sort_keys=True)


# ---------------------------------------------------------------------------
# Synthetic datasets
# ---------------------------------------------------------------------------


def planted_partition(n: int, classes: int, p_in: float, p_out: float,
                      seed: int) -> tuple[Graph, np.ndarray]:
    """Blocked random graph: within-class pairs connect with p_in,
    cross-class pairs with p_out."""
    rng = np.random.default_rng(seed)
    labels = np.sort(rng.integers(0, classes, size=n))
    edges = []
    for u in range(n - 1):
        draws = rng.random(n - 1 - u)
        same = labels[u + 1 :] == labels[u]
        thresh = np.where(same, p_in, p_out)
        hit = np.nonzero(draws < thresh)[0]
        edges.extend((u, int(u + 1 + j)) for j in hit)
    return Graph(n=n, edges=tuple(edges)), labels


def synthetic_dataset(
    n: int,
    m: int,
    classes: int,
    seed: int,
    mode: str = "feature",
    p: float = 0.05,
    p_in: float = 0.1,
    p_out: float = 0.01,
    noise: float = 1.0,
    margin: float = 0.25,
) -> Dataset:
    """Two generators:

    feature: Erdos-Renyi graph plus labels that are a deterministic bin of
      feature column 0 (solvable by the MLP alone); ``margin`` keeps the
      column values away from the bin edges so the classes are separable.
    planted: class-blocked graph with class-mean features plus noise,
      so the graph structure carries label signal.
    """
    from .graph import erdos_renyi

    rng = np.random.default_rng(seed + 1)
    if mode == "feature":
        graph = erdos_renyi(n, p, seed)
        features = rng.standard_normal((n, m))
        qs = np.quantile(features[:, 0], np.linspace(0, 1, classes + 1)[1:-1])
        labels = np.digitize(features[:, 0], qs).astype(np.int64)
        # rewrite column 0 as label + offset so label = floor(column 0)
        offset = 0.5 + (rng.random(n) - 0.5) * max(0.0, 1.0 - margin)
        features[:, 0] = labels + offset
    elif mode == "planted":
        graph, labels = planted_partition(n, classes, p_in, p_out, seed)
        means = rng.standard_normal((classes, m)) * 2.0
        features = means[labels] + noise * rng.standard_normal((n, m))
    else:
        raise DatasetFormatError(f"unknown synthetic mode {mode!r}")
    masks = random_split(n, seed=seed)
    return Dataset(graph=graph, features=features, labels=labels, masks=masks)
