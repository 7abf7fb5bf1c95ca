"""Energy-distance divergence between two branches' sample clouds.

The estimator is the V-statistic form (self-pairs included in the
within-set means), which is nonnegative by construction:

    E = 2 mean||a_i - b_j|| - mean||a_i - a_i'|| - mean||b_j - b_j'||

and equals twice the squared maximum mean discrepancy under the
distance-induced kernel, exposed as ``mmd_squared``.  All sums run
through ``math.fsum`` so the statistic is independent of summation order,
which makes D(a, b) == D(b, a) bit-exact and lets tests compare against a
naive double-loop oracle for equality rather than mere closeness.

The "raw" representation of a branch is its training-window feature
matrix (7 sales values + calendar scalars); because the year column would
otherwise dominate Euclidean geometry, raw pairs are standardized per
feature over the union of the two sets being compared.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import data, linalg
from .errors import ContractError, NumericError, ShapeError, StorageError

REPRESENTATIONS = ("raw", "pca", "mds", "tsne")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Rows = observations of one branch under one representation."""

    points: np.ndarray
    source_label: str
    representation: str

    def __post_init__(self):
        pts = linalg.as_matrix(self.points, "SampleSet points")
        if pts.shape[0] < 2:
            raise ContractError(
                f"SampleSet {self.source_label}: need >= 2 rows, got {pts.shape[0]}"
            )
        if not np.isfinite(pts).all():
            raise NumericError(f"SampleSet {self.source_label}: non-finite entries")
        object.__setattr__(self, "points", pts)
        if self.representation not in REPRESENTATIONS:
            raise ContractError(
                f"unknown representation {self.representation!r}; "
                f"expected one of {REPRESENTATIONS}"
            )


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    estimator: str
    n_source: int
    n_target: int


def _mean_pairwise(x, y):
    """Order-independent mean of all pairwise distances (exact sum)."""
    d = linalg.pairwise_euclidean(x, y)
    return math.fsum(d.ravel().tolist()) / d.size


def energy_distance(a, b):
    """V-statistic energy distance between two SampleSets.

    Clamped at zero: the statistic is mathematically nonnegative and the
    only way below zero is terminal rounding of the three-term sum.
    """
    if a.points.shape[1] != b.points.shape[1]:
        raise ShapeError(
            f"energy_distance dimension mismatch: {a.points.shape[1]} vs "
            f"{b.points.shape[1]}"
        )
    cross = _mean_pairwise(a.points, b.points)
    within_a = _mean_pairwise(a.points, a.points)
    within_b = _mean_pairwise(b.points, b.points)
    # fsum keeps the terminal combination order-independent as well, so
    # swapping the arguments cannot change the result by even one ulp
    value = math.fsum([cross, cross, -within_a, -within_b])
    return DivergenceResult(
        value=max(value, 0.0),
        estimator="energy-vstat",
        n_source=a.points.shape[0],
        n_target=b.points.shape[0],
    )


def mmd_squared(a, b):
    """Squared MMD view of the same statistic: energy distance / 2."""
    return energy_distance(a, b).value / 2.0


def pair_standardize(x, y):
    """Standardize two matrices per feature over their union.

    Columns constant across the union keep scale 1 so they simply cancel.
    """
    x = linalg.as_matrix(x)
    y = linalg.as_matrix(y)
    if x.shape[1] != y.shape[1]:
        raise ShapeError("pair_standardize requires matching feature dimensions")
    union = np.concatenate([x, y], axis=0)
    mean = union.mean(axis=0)
    sd = union.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (x - mean) / sd, (y - mean) / sd


def branch_features(dataset, split="train"):
    """Raw feature matrix of one branch for the chosen split."""
    if split == "train":
        windows = list(dataset.train)
    elif split == "test":
        windows = list(dataset.test)
    elif split == "all":
        windows = list(dataset.train) + list(dataset.test)
    else:
        raise ContractError(f"unknown split {split!r}; use train, test, or all")
    return data.feature_matrix(windows)


def raw_sample_sets(ds_a, ds_b, split="train"):
    """Pair-standardized raw SampleSets for two branches."""
    xa, xb = pair_standardize(
        branch_features(ds_a, split), branch_features(ds_b, split))
    return (
        SampleSet(points=xa, source_label=ds_a.branch_id, representation="raw"),
        SampleSet(points=xb, source_label=ds_b.branch_id, representation="raw"),
    )


def divergence_matrix(sample_sets_by_label=None, *, pair_fn=None, labels=None):
    """Symmetric divergence matrix with zero diagonal.

    Either pass precomputed SampleSets keyed by branch label, or a
    ``pair_fn(label_i, label_j) -> DivergenceResult`` for representations
    (like pair-standardized raw) whose point sets depend on the pair.
    """
    if (sample_sets_by_label is None) == (pair_fn is None):
        raise ContractError("divergence_matrix needs exactly one input form")
    if sample_sets_by_label is not None:
        labels = list(sample_sets_by_label)
    elif labels is None:
        raise ContractError("pair_fn form requires explicit labels")
    n = len(labels)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if sample_sets_by_label is not None:
                res = energy_distance(
                    sample_sets_by_label[labels[i]], sample_sets_by_label[labels[j]])
            else:
                res = pair_fn(labels[i], labels[j])
            out[i, j] = out[j, i] = res.value
    return labels, out


def write_divergence_matrix(path, labels, matrix):
    """Emit one representation's matrix as `;`-separated CSV with headers."""
    matrix = np.asarray(matrix)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("branch;" + ";".join(labels) + "\n")
            for i, label in enumerate(labels):
                cells = ";".join(repr(float(v)) for v in matrix[i])
                fh.write(f"{label};{cells}\n")
    except OSError as exc:
        raise StorageError(f"cannot write divergence matrix {path}: {exc}") from exc


def read_divergence_matrix(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as exc:
        raise StorageError(f"cannot read divergence matrix {path}: {exc}") from exc
    labels = lines[0].split(";")[1:]
    rows = []
    for line in lines[1:]:
        cells = line.split(";")
        rows.append([float(v) for v in cells[1:]])
    return labels, np.array(rows)
