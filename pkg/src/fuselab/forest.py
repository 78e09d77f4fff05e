"""
CART trees and random forests — the early-fusion baseline and MissForest's engine.

Trees are stored as flat node arrays (feature, threshold, left, right, value);
a node with feature == -1 is a leaf. Routing sends `x <= threshold` left.

Split search, per node:
  - candidate features: `mtry` indices drawn without replacement, then sorted
  - thresholds: midpoints between consecutive distinct sorted values
  - regression minimises the summed child squared error (weighted variance)
  - classification minimises the size-weighted child Gini impurity
  - ties (within a relative tolerance absorbing float noise) go to the lowest
    feature index, then the smallest threshold

Every tree of a forest draws from `Rng(derive_seed(config.seed, tree_index))`,
so a k-tree forest is a prefix of a (k + m)-tree forest with the same seed and
results do not depend on `n_jobs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import structlog
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray

from fuselab.config import ForestConfig, MtryRule
from fuselab.errors import ArgumentError, ShapeError
from fuselab.numerics import Matrix, Rng, Vector, as_matrix, derive_seed

log = structlog.get_logger()

_TIE_TOLERANCE = 1e-10


class Task(StrEnum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def resolve_mtry(rule: MtryRule | None, n_features: int, task: Task) -> int:
    """
    Number of candidate features per node.

    None picks the task default: max(1, ⌊p/3⌋) for regression and
    max(1, ⌊√p⌋) for classification.
    """
    if rule is None:
        rule = "third" if task is Task.REGRESSION else "sqrt"
    match rule:
        case "third":
            m = n_features // 3
        case "sqrt":
            m = math.isqrt(n_features)
        case "all":
            m = n_features
        case int():
            m = rule
        case _:
            raise ArgumentError(f"unknown mtry rule {rule!r}")
    return max(1, min(m, n_features))


@dataclass(frozen=True, slots=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None

    def __post_init__(self) -> None:
        if self.min_samples_leaf < 1:
            raise ArgumentError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError("max_depth must be >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise ArgumentError("mtry must be >= 1")


@dataclass(frozen=True, slots=True)
class Tree:
    """Fitted CART tree. Classification leaves store a category index as float."""

    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    left: NDArray[np.int64]
    right: NDArray[np.int64]
    value: NDArray[np.float64]
    task: Task
    n_features: int
    n_classes: int = 0
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def leaf_count(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())


@dataclass(frozen=True, slots=True)
class Forest:
    trees: tuple[Tree, ...]
    task: Task
    n_features: int
    n_classes: int = 0


# ── tree fitting ─────────────────────────────────────────────────────────────


def _prepare_target(
    y: ArrayLike, n_rows: int, task: Task, n_classes: int | None
) -> tuple[Vector, int]:
    target = np.asarray(y, dtype=np.float64)
    if target.ndim != 1 or target.shape[0] != n_rows:
        raise ShapeError(f"y has shape {target.shape}, expected ({n_rows},)")
    if not np.all(np.isfinite(target)):
        raise ArgumentError("y contains missing or infinite values")
    if task is Task.CLASSIFICATION:
        if np.any(target < 0) or np.any(target != np.round(target)):
            raise ArgumentError("classification targets must be non-negative integer codes")
        k = int(target.max()) + 1
        if n_classes is not None:
            if n_classes < k:
                raise ArgumentError(f"n_classes={n_classes} but targets reach code {k - 1}")
            k = n_classes
        return target, k
    return target, 0


def _leaf_value(y: Vector, task: Task, n_classes: int) -> float:
    if task is Task.REGRESSION:
        return float(np.mean(y))
    return float(np.bincount(y.astype(np.int64), minlength=n_classes).argmax())


def _split_scores(xs: Matrix, ys: Matrix, task: Task, n_classes: int) -> Matrix:
    """
    Impurity of every left-size position i = 1..n-1 (rows) per candidate (cols).

    `xs`/`ys` are the node's candidate columns and targets sorted per column.
    Lower is better.
    """
    n = xs.shape[0]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    if task is Task.REGRESSION:
        csum = np.cumsum(ys, axis=0)
        csq = np.cumsum(ys * ys, axis=0)
        left_sum, left_sq = csum[:-1], csq[:-1]
        right_sum, right_sq = csum[-1] - left_sum, csq[-1] - left_sq
        return (left_sq - left_sum**2 / n_left) + (right_sq - right_sum**2 / n_right)
    onehot = ys.astype(np.int64)[:, :, None] == np.arange(n_classes)[None, None, :]
    counts = np.cumsum(onehot, axis=0, dtype=np.float64)
    left_counts = counts[:-1]
    right_counts = counts[-1] - left_counts
    gini_left = n_left - np.sum(left_counts**2, axis=2) / n_left
    gini_right = n_right - np.sum(right_counts**2, axis=2) / n_right
    return gini_left + gini_right


def _best_split(
    x_node: Matrix,
    y_node: Vector,
    candidates: NDArray[np.int64],
    task: Task,
    n_classes: int,
    min_leaf: int,
) -> tuple[int, float] | None:
    n = x_node.shape[0]
    cols = x_node[:, candidates]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = y_node[order]
    scores = _split_scores(xs, ys, task, n_classes)

    left_sizes = np.arange(1, n)[:, None]
    valid = (xs[1:] > xs[:-1]) & (left_sizes >= min_leaf) & (n - left_sizes >= min_leaf)
    if not valid.any():
        return None
    masked = np.where(valid, scores, np.inf)
    best = masked.min()
    scale = abs(best) + float(np.abs(scores[valid]).max())
    near = masked <= best + _TIE_TOLERANCE * scale
    # Column-major scan: lowest candidate feature first, then smallest position.
    col, pos = np.argwhere(near.T)[0]
    lo, hi = xs[pos, col], xs[pos + 1, col]
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return int(candidates[col]), float(threshold)


def _is_pure(y: Vector) -> bool:
    return bool(np.all(y == y[0]))


def _grow(
    x: Matrix,
    y: Vector,
    task: Task,
    n_classes: int,
    params: TreeParams,
    rng: Rng,
) -> Tree:
    n, p = x.shape
    mtry = p if params.mtry is None else min(params.mtry, p)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(rows: NDArray[np.int64]) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(y[rows], task, n_classes))
        return len(feature) - 1

    # Depth-first, left child first; this fixes the order of feature draws.
    root = np.arange(n, dtype=np.int64)
    stack: list[tuple[int, NDArray[np.int64], int]] = [(new_node(root), root, 0)]
    while stack:
        node, rows, depth = stack.pop()
        y_rows = y[rows]
        if (
            (params.max_depth is not None and depth >= params.max_depth)
            or rows.shape[0] < 2 * params.min_samples_leaf
            or _is_pure(y_rows)
        ):
            continue
        candidates = np.sort(rng.generator.choice(p, size=mtry, replace=False))
        split = _best_split(x[rows], y_rows, candidates, task, n_classes, params.min_samples_leaf)
        if split is None:
            continue
        f, t = split
        goes_left = x[rows, f] <= t
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        task=task,
        n_features=p,
        n_classes=n_classes,
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
    )


def fit_tree(
    x: ArrayLike,
    y: ArrayLike,
    task: Task,
    params: TreeParams,
    rng: Rng,
    n_classes: int | None = None,
) -> Tree:
    """Grow one CART tree greedily on (x, y); x must be fully observed."""
    features = as_matrix(x, "X")
    if features.shape[0] == 0 or features.shape[1] == 0:
        raise ArgumentError(f"cannot fit a tree on an empty matrix of shape {features.shape}")
    target, k = _prepare_target(y, features.shape[0], task, n_classes)
    return _grow(features, target, task, k, params, rng)


def tree_predict(tree: Tree, x: ArrayLike) -> Vector:
    features = np.asarray(x, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != tree.n_features:
        raise ShapeError(
            f"tree was fitted on {tree.n_features} features, got input of shape {features.shape}"
        )
    node = np.zeros(features.shape[0], dtype=np.int64)
    active = np.flatnonzero(tree.feature[node] >= 0)
    while active.size:
        at = node[active]
        goes_left = features[active, tree.feature[at]] <= tree.threshold[at]
        node[active] = np.where(goes_left, tree.left[at], tree.right[at])
        active = active[tree.feature[node[active]] >= 0]
    return tree.value[node]


# ── forests ──────────────────────────────────────────────────────────────────


def _fit_member(
    x: Matrix,
    y: Vector,
    task: Task,
    n_classes: int,
    params: TreeParams,
    seed: int,
    bootstrap: bool,
) -> Tree:
    rng = Rng(seed)
    if bootstrap:
        rows = rng.generator.integers(0, x.shape[0], size=x.shape[0])
        return _grow(x[rows], y[rows], task, n_classes, params, rng)
    return _grow(x, y, task, n_classes, params, rng)


def fit_forest(
    x: ArrayLike,
    y: ArrayLike,
    config: ForestConfig,
    task: Task = Task.REGRESSION,
    n_classes: int | None = None,
) -> Forest:
    """Fit `config.n_trees` trees, each on its own bootstrap resample and derived seed."""
    features = as_matrix(x, "X")
    if features.shape[0] == 0 or features.shape[1] == 0:
        raise ArgumentError(f"cannot fit a forest on an empty matrix of shape {features.shape}")
    target, k = _prepare_target(y, features.shape[0], task, n_classes)
    params = TreeParams(
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        mtry=resolve_mtry(config.mtry, features.shape[1], task),
    )
    seeds = [derive_seed(config.seed, t) for t in range(config.n_trees)]
    if config.n_jobs == 1:
        trees = [
            _fit_member(features, target, task, k, params, s, config.bootstrap) for s in seeds
        ]
    else:
        trees = Parallel(n_jobs=config.n_jobs)(
            delayed(_fit_member)(features, target, task, k, params, s, config.bootstrap)
            for s in seeds
        )
    log.debug(
        "forest.fitted",
        task=task.value,
        n_trees=len(trees),
        n_rows=features.shape[0],
        mtry=params.mtry,
    )
    return Forest(trees=tuple(trees), task=task, n_features=features.shape[1], n_classes=k)


def forest_predict(forest: Forest, x: ArrayLike) -> Vector:
    """Mean over trees (regression) or majority vote, ties to the smallest code."""
    per_tree = np.stack([tree_predict(t, x) for t in forest.trees])
    if forest.task is Task.REGRESSION:
        return per_tree.mean(axis=0)
    n_rows = per_tree.shape[1]
    votes = np.zeros((n_rows, forest.n_classes), dtype=np.int64)
    rows = np.arange(n_rows)
    for predictions in per_tree.astype(np.int64):
        np.add.at(votes, (rows, predictions), 1)
    return votes.argmax(axis=1).astype(np.float64)
