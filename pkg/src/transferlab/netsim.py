"""SVCCA similarity between forecasting networks.

Feeds both nets a shared probe batch, captures per-layer activations,
truncates each activation matrix to the singular directions explaining
99% of its variance, and correlates the truncated subspaces with CCA.
The per-layer mean canonical correlations average into a single score
rho in [0, 1]: 1 for identical nets, lower as the representations the
two nets compute on the probe diverge.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import ContractError, NumericError, StorageError
from .model import HEADS, forward

log = logging.getLogger(__name__)

VARIANCE_THRESHOLD = 0.99
# layers entering the aggregate score; conv activations stay reportable
# via capture_activations but their positions-times-filters width dwarfs
# desk-scale probe counts, so they are excluded from the mean
AGGREGATE_LAYERS = tuple(f"pool:{h}" for h in HEADS) + (
    "concat", "dense1", "dense2", "output")


@dataclass(frozen=True)
class ActivationCapture:
    """Ordered (layer_label, matrix) activations for one probe batch."""

    layer_activations: tuple

    def labels(self):
        return [label for label, _ in self.layer_activations]

    def get(self, label):
        for name, acts in self.layer_activations:
            if name == label:
                return acts
        raise KeyError(label)


class LayerSimilarity(NamedTuple):
    layer: str
    kept_a: int
    kept_b: int
    correlations: np.ndarray

    @property
    def mean_cc(self):
        return float(self.correlations.mean())


@dataclass(frozen=True)
class SvccaResult:
    per_layer: tuple
    rho: float
    skipped_layers: tuple = ()


def capture_activations(model, x):
    """Record every post-activation layer output as an (n, width) matrix.

    Conv volumes are flattened filter-major; order follows the forward
    pass: conv1/conv2/pool per head, then concat, dense1, dense2, output.
    """
    _, cache = forward(model, x, want_cache=True)
    n = x.shape[0]
    layers = []
    for head in HEADS:
        for stage in ("conv1", "conv2", "pool"):
            acts = cache[stage][head]
            layers.append((f"{stage}:{head}", acts.reshape(n, -1).copy()))
    for label in ("concat", "dense1", "dense2", "output"):
        layers.append((label, cache[label].copy()))
    return ActivationCapture(layer_activations=tuple(layers))


def svd_truncate(acts, threshold=VARIANCE_THRESHOLD):
    """Keep the fewest centered singular directions explaining >= threshold.

    Returns the (n, k) projections onto those directions; k = 0 (empty
    matrix) when the activations carry no variance at all.
    """
    acts = linalg.as_matrix(acts, "activations")
    if acts.shape[0] < 2:
        raise ContractError("svd_truncate needs at least 2 probe rows")
    if not 0.0 < threshold <= 1.0:
        raise ContractError(f"variance threshold must be in (0, 1], got {threshold}")
    centered = linalg.center_columns(acts)
    u, s, _ = linalg.svd(centered)
    power = s ** 2
    total = power.sum()
    if total == 0.0:
        return np.zeros((acts.shape[0], 0))
    explained = np.cumsum(power) / total
    k = int(np.searchsorted(explained, threshold - 1e-12)) + 1
    k = min(k, int(np.count_nonzero(s)))
    return u[:, :k] * s[:k]


def cca(a, b):
    """Canonical correlations of two column-centered sample matrices.

    Computed as the singular values of the whitened cross-covariance
    Σ_aa^(-1/2) Σ_ab Σ_bb^(-1/2); each covariance diagonal is nudged by
    1e-10·trace/dim so near-singular truncated subspaces stay invertible.
    Returns a descending vector clipped to [0, 1].
    """
    a = linalg.center_columns(linalg.as_matrix(a, "cca a"))
    b = linalg.center_columns(linalg.as_matrix(b, "cca b"))
    if a.shape[0] != b.shape[0]:
        raise ContractError(
            f"cca row counts differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    widest = max(a.shape[1], b.shape[1])
    if n < widest + 1:
        raise ContractError(
            f"cca needs more rows ({n}) than columns ({widest}); "
            "truncate to a smaller subspace first")
    inv_roots = []
    for mat in (a, b):
        cov = linalg.matmul(mat.T, mat) / (n - 1)
        trace = float(np.trace(cov))
        if trace <= 0.0:
            raise NumericError("cca input has zero variance")
        eps = 1e-10 * trace / cov.shape[0]
        cov = cov + eps * np.eye(cov.shape[0])
        lam, vec = linalg.sym_eig(cov)
        if lam.min() < 1000.0 * eps:
            log.info("cca: covariance regularization active "
                     "(min eigenvalue %.3e, eps %.3e)", lam.min(), eps)
        lam = np.maximum(lam, eps)
        inv_roots.append(linalg.matmul(vec * (1.0 / np.sqrt(lam)), vec.T))
    cross = linalg.matmul(a.T, b) / (n - 1)
    t = linalg.matmul(linalg.matmul(inv_roots[0], cross), inv_roots[1])
    corr = linalg.svd(t).s[: min(a.shape[1], b.shape[1])]
    return np.clip(corr, 0.0, 1.0)


def svcca_score(model_a, model_b, probe_x, threshold=VARIANCE_THRESHOLD):
    """Aggregate SVCCA similarity of two same-architecture nets.

    Runs capture → truncate → cca per aggregate layer and averages the
    per-layer mean correlations (layers whose truncation leaves an empty
    subspace on either side are skipped and reported).
    """
    if model_a.config.param_shapes() != model_b.config.param_shapes():
        raise ContractError("svcca_score requires identical architectures")
    capture_a = capture_activations(model_a, probe_x)
    capture_b = capture_activations(model_b, probe_x)
    per_layer = []
    skipped = []
    for label in AGGREGATE_LAYERS:
        trunc_a = svd_truncate(capture_a.get(label), threshold)
        trunc_b = svd_truncate(capture_b.get(label), threshold)
        if trunc_a.shape[1] == 0 or trunc_b.shape[1] == 0:
            log.warning("svcca: layer %s skipped (empty subspace)", label)
            skipped.append(label)
            continue
        corr = cca(trunc_a, trunc_b)
        per_layer.append(LayerSimilarity(label, trunc_a.shape[1],
                                         trunc_b.shape[1], corr))
    if not per_layer:
        raise NumericError(
            "similarity undefined: no layer survived variance truncation")
    rho = float(np.mean([ls.mean_cc for ls in per_layer]))
    return SvccaResult(per_layer=tuple(per_layer), rho=min(max(rho, 0.0), 1.0),
                       skipped_layers=tuple(skipped))


def write_svcca(path, scored_pairs):
    """Per-layer rows `source;target;layer;kept_a;kept_b;mean_cc` plus an
    aggregate `rho` row for each scored pair."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("source;target;layer;kept_a;kept_b;mean_cc\n")
            for source, target, result in scored_pairs:
                for ls in result.per_layer:
                    fh.write(f"{source};{target};{ls.layer};{ls.kept_a};"
                             f"{ls.kept_b};{ls.mean_cc!r}\n")
                fh.write(f"{source};{target};rho;;;{result.rho!r}\n")
    except OSError as exc:
        raise StorageError(f"cannot write SVCCA report {path}: {exc}") from exc


def read_svcca_rho(path):
    """Aggregate rho per ordered (source, target) pair from a score file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read SVCCA report {path}: {exc}") from exc
    if not lines or lines[0] != "source;target;layer;kept_a;kept_b;mean_cc":
        raise StorageError(f"{path} is not an SVCCA score file")
    rho = {}
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(";")
        if len(parts) != 6:
            raise StorageError(f"{path}:{ln}: expected 6 fields")
        if parts[2] == "rho":
            try:
                rho[(parts[0], parts[1])] = float(parts[5])
            except ValueError as exc:
                raise StorageError(f"{path}:{ln}: {exc}") from exc
    return rho
