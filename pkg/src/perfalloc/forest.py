"""Deterministic multi-output regression forest.

Maps a query feature vector to the scalar parameters of a price-performance
model in a single prediction (the parameter vector is learned jointly, one
training example per query). Trees are grown to purity on bootstrap samples
with variance-reduction splits over a random subset of ceil(d/3) features
per node. Everything is seeded: the same data, seed, and estimator count
produce bit-identical forests and predictions, regardless of how training
is scheduled.

Models serialize to a versioned JSON format that round-trips predictions
exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ModelFormatError, ModelVersionError, SchemaMismatchError
from .features import FeatureVector
from .ppm import PpmFamily

__all__ = [
    "TrainingExample",
    "RegressionTree",
    "RegressionForest",
    "train",
    "predict",
    "permutation_importance",
    "save_model",
    "load_model",
    "REFERENCE_GRID",
    "MODEL_FORMAT",
    "MODEL_VERSION",
]

# Executor grid used by the default permutation-importance metric.
REFERENCE_GRID = (1, 3, 8, 16, 32, 48)

MODEL_FORMAT = "perfalloc-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainingExample:
    """One query's feature vector and fitted model parameters.

    There is exactly one example per query, however many allocation
    configurations its runtimes were measured or simulated at; that is the
    point of fitting a parametric model first. ``degenerate`` marks targets
    that came from a flat-curve fit.
    """

    query_id: str
    x: FeatureVector
    y: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class RegressionTree:
    """Flattened binary tree.

    ``feature[i] >= 0`` marks an internal node splitting on that feature at
    ``threshold[i]`` (left: ``x <= threshold``); ``feature[i] == -1`` marks
    a leaf whose prediction is ``value[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf value vector for every row of ``X``, shape (n, k)."""
        pos = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[pos] >= 0)
        while active.size:
            node = pos[active]
            go_left = X[active, self.feature[node]] <= self.threshold[node]
            pos[active] = np.where(go_left, self.left[node], self.right[node])
            active = active[self.feature[pos[active]] >= 0]
        return self.value[pos]

    def apply_row(self, x: np.ndarray) -> np.ndarray:
        """Single-row tree walk; cheaper than :meth:`apply` for one query."""
        i = 0
        feature, threshold = self.feature, self.threshold
        while feature[i] >= 0:
            i = self.left[i] if x[feature[i]] <= threshold[i] else self.right[i]
        return self.value[i]


class _TreeBuilder:
    """Grows one tree on a bootstrap sample.

    The split search is batched: all candidate features of a node are
    sorted and scored in a handful of array operations, which keeps the
    pure-Python overhead per node small. ``Y`` is expected in standardized
    units so that no single output dominates the variance-reduction score;
    leaf values are rescaled back by the caller.
    """

    def __init__(self, X: np.ndarray, Y: np.ndarray, max_features: int, rng: np.random.Generator):
        self.X = X
        self.Y = Y
        self.max_features = max_features
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.zeros(self.Y.shape[1]))
        return len(self.feature) - 1

    def _best_split(self, ids: np.ndarray) -> Optional[tuple[int, float]]:
        m = ids.size
        feats = self.rng.choice(self.X.shape[1], size=self.max_features, replace=False)
        Xs = self.X[np.ix_(ids, feats)]
        order = np.argsort(Xs, axis=0, kind="stable")
        xs = np.take_along_axis(Xs, order, axis=0)
        valid = xs[:-1] < xs[1:]  # a split exists between distinct neighbours
        if not valid.any():
            return None

        # Minimizing left+right SSE equals maximizing sum_k of
        # S_left^2/m_left + S_right^2/m_right, which needs only prefix sums.
        Ys = self.Y[ids][order]  # (m, q, k)
        S = np.cumsum(Ys, axis=0)
        total = S[-1:, :, :]
        counts = np.arange(1, m, dtype=float).reshape(-1, 1, 1)
        score = (S[:-1] ** 2 / counts).sum(axis=2) + ((total - S[:-1]) ** 2 / (m - counts)).sum(axis=2)
        score[~valid] = -np.inf

        flat = int(np.argmax(score))
        pos, fi = divmod(flat, score.shape[1])
        lo, hi = xs[pos, fi], xs[pos + 1, fi]
        mid = (lo + hi) / 2.0
        if mid >= hi:  # adjacent floats, keep the boundary on the left value
            mid = lo
        return int(feats[fi]), float(mid)

    def build(self, ids: np.ndarray) -> int:
        root = self._new_node()
        stack = [(root, ids)]
        while stack:
            node, ids = stack.pop()
            rows = self.Y[ids]
            if ids.size == 1 or (rows == rows[0]).all():
                self.value[node] = rows.mean(axis=0)
                continue
            split = self._best_split(ids)
            if split is None:
                self.value[node] = rows.mean(axis=0)
                continue
            feat, thr = split
            mask = self.X[ids, feat] <= thr
            left_node = self._new_node()
            right_node = self._new_node()
            self.feature[node] = feat
            self.threshold[node] = thr
            self.left[node] = left_node
            self.right[node] = right_node
            # Push right first so the left child is grown (and numbered)
            # first; node ids are part of the serialized format.
            stack.append((right_node, ids[~mask]))
            stack.append((left_node, ids[mask]))
        return root

    def finish(self, scale: np.ndarray) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.stack(self.value) * scale,
        )


@dataclass(frozen=True)
class RegressionForest:
    """Trained forest plus the metadata needed to score new queries."""

    trees: tuple[RegressionTree, ...]
    schema: tuple[str, ...]
    family: PpmFamily
    rng_seed: int
    n_estimators: int

    @property
    def target_names(self) -> tuple[str, ...]:
        return self.family.target_names

    def predict(self, x: FeatureVector) -> np.ndarray:
        """Mean of the per-tree leaf vectors for one query."""
        if x.schema != self.schema:
            raise SchemaMismatchError("feature vector schema does not match the model schema")
        row = x.as_array()
        return np.stack([tree.apply_row(row) for tree in self.trees]).mean(axis=0)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Predictions for an (n, d) matrix of already-vectorized queries."""
        if X.shape[1] != len(self.schema):
            raise SchemaMismatchError(
                f"matrix has {X.shape[1]} columns, model expects {len(self.schema)}"
            )
        return np.stack([tree.apply(X) for tree in self.trees]).mean(axis=0)


def train(
    examples: Sequence[TrainingExample],
    n_estimators: int = 100,
    rng_seed: int = 0,
    family: PpmFamily = PpmFamily.POWER_LAW,
) -> RegressionForest:
    """Fit a forest on one example per query.

    Each tree sees a bootstrap resample (with replacement, same size as the
    dataset) drawn from its own seed, derived deterministically from
    ``rng_seed`` and the tree index.
    """
    if len(examples) < 2:
        raise ValueError("training needs at least 2 examples")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    schema = examples[0].x.schema
    dim = len(family.target_names)
    for ex in examples:
        if ex.x.schema != schema:
            raise SchemaMismatchError(f"example {ex.query_id!r} has a different feature schema")
        if len(ex.y) != dim:
            raise ValueError(
                f"example {ex.query_id!r} has target dimensionality {len(ex.y)}, expected {dim}"
            )
    X = np.array([ex.x.values for ex in examples], dtype=float)
    Y = np.array([np.asarray(ex.y, dtype=float) for ex in examples])
    n, d = X.shape
    max_features = math.ceil(d / 3)

    # Standardize targets for split scoring only; otherwise the output
    # with the widest units would monopolize the variance reduction.
    scale = Y.std(axis=0)
    scale[scale == 0] = 1.0
    Y_scored = Y / scale

    seeds = np.random.SeedSequence(rng_seed).spawn(n_estimators)
    trees = []
    for seq in seeds:
        rng = np.random.default_rng(seq)
        bootstrap = rng.integers(0, n, size=n)
        builder = _TreeBuilder(X, Y_scored, max_features, rng)
        builder.build(np.asarray(sorted(bootstrap)))
        trees.append(builder.finish(scale))
    return RegressionForest(
        trees=tuple(trees),
        schema=schema,
        family=family,
        rng_seed=rng_seed,
        n_estimators=n_estimators,
    )


def predict(forest: RegressionForest, x: FeatureVector) -> np.ndarray:
    return forest.predict(x)


def _default_metric(forest: RegressionForest, X: np.ndarray, Y: np.ndarray) -> float:
    """RMS relative error between predicted and target model runtimes over
    the reference executor grid."""
    grid = np.asarray(REFERENCE_GRID, dtype=float)
    pred = forest.predict_matrix(X)
    t_pred = _runtimes(forest.family, pred, grid)
    t_true = _runtimes(forest.family, Y, grid)
    rel = (t_pred - t_true) / t_true
    return float(np.sqrt(np.mean(rel**2)))


def _runtimes(family: PpmFamily, targets: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Vectorized runtimes, shape (n_examples, len(grid)), from encoded
    target rows."""
    if family is PpmFamily.POWER_LAW:
        a = np.minimum(targets[:, 0:1], 0.0)
        b = np.exp(targets[:, 1:2])
        m = np.maximum(targets[:, 2:3], 1e-9)
        return np.maximum(b * grid[None, :] ** a, m)
    s = np.maximum(targets[:, 0:1], 0.0)
    p = np.maximum(np.expm1(targets[:, 1:2]), 0.0)
    return s + p / grid[None, :]


def permutation_importance(
    forest: RegressionForest,
    examples: Sequence[TrainingExample],
    metric: Optional[Callable[[RegressionForest, np.ndarray, np.ndarray], float]] = None,
    repeats: int = 100,
    rng_seed: int = 0,
) -> list[tuple[str, float]]:
    """Mean metric increase when each feature column is shuffled.

    Shuffling breaks the feature's relationship with the targets; the
    resulting error increase measures how much the model relies on it.
    Features the model ignores (or that are constant) score 0; small
    negative scores can appear from shuffle noise. Results are sorted by
    importance, descending.
    """
    if not examples:
        raise ValueError("permutation importance needs at least one example")
    if metric is None:
        metric = _default_metric
    X = np.array([ex.x.values for ex in examples], dtype=float)
    Y = np.array([np.asarray(ex.y, dtype=float) for ex in examples])
    baseline = metric(forest, X, Y)
    rng = np.random.default_rng(rng_seed)

    drops = []
    for col, name in enumerate(forest.schema):
        total = 0.0
        for _ in range(repeats):
            perm = rng.permutation(X.shape[0])
            shuffled = X.copy()
            shuffled[:, col] = X[perm, col]
            total += metric(forest, shuffled, Y) - baseline
        drops.append((name, total / repeats))
    drops.sort(key=lambda item: (-item[1], item[0]))
    return drops


def _tree_to_dict(tree: RegressionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": [row.tolist() if f < 0 else None for f, row in zip(tree.feature, tree.value)],
    }


def _tree_from_dict(obj: dict, dim: int) -> RegressionTree:
    feature = np.asarray(obj["feature"], dtype=np.int32)
    value = np.zeros((len(feature), dim))
    for i, row in enumerate(obj["value"]):
        if row is not None:
            value[i] = row
    return RegressionTree(
        feature=feature,
        threshold=np.asarray(obj["threshold"], dtype=float),
        left=np.asarray(obj["left"], dtype=np.int32),
        right=np.asarray(obj["right"], dtype=np.int32),
        value=value,
    )


def save_model(forest: RegressionForest, path: Union[str, Path]) -> None:
    """Write the forest as versioned JSON; floats round-trip exactly."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": forest.family.value,
        "schema": list(forest.schema),
        "target_names": list(forest.target_names),
        "rng_seed": forest.rng_seed,
        "n_estimators": forest.n_estimators,
        "trees": [_tree_to_dict(t) for t in forest.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_model(path: Union[str, Path]) -> RegressionForest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path} is truncated or not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} file")
    version = payload.get("version")
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"model file version {version} is not supported (expected {MODEL_VERSION})"
        )
    try:
        family = PpmFamily(payload["family"])
        dim = len(family.target_names)
        return RegressionForest(
            trees=tuple(_tree_from_dict(t, dim) for t in payload["trees"]),
            schema=tuple(payload["schema"]),
            family=family,
            rng_seed=int(payload["rng_seed"]),
            n_estimators=int(payload["n_estimators"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model file {path} is missing or corrupt fields: {exc}") from exc
