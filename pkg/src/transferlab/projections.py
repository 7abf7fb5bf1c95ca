"""Plane projections of branch feature clouds: PCA, classical MDS, t-SNE.

All three produce 2-D (configurable) SampleSets whose pairwise divergence
serves as a pre-transfer indicator.  PCA and MDS are spectral and exact;
t-SNE is the exact O(n^2) algorithm with per-point bandwidths found by
binary search on perplexity, early exaggeration, momentum schedule, and
adaptive per-coordinate gains.  Everything is deterministic given the
projection seed.

``kde2d`` renders a projected set as a bivariate Gaussian kernel density
on a grid (Scott's-rule bandwidth per axis) — the data behind the
density-overlay figures.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import linalg, rng
from .divergence import SampleSet
from .errors import ContractError, NumericError, StorageError

log = logging.getLogger(__name__)

METHODS = ("pca", "mds", "tsne")


@dataclass(frozen=True)
class ProjectionConfig:
    out_dim: int = 2
    seed: int = 0
    tsne_perplexity: float = 30.0
    tsne_iterations: int = 1000
    tsne_learning_rate: float = 200.0
    tsne_early_exaggeration: float = 12.0
    tsne_early_iters: int = 250
    tsne_momentum_early: float = 0.5
    tsne_momentum_late: float = 0.8

    def __post_init__(self):
        if self.out_dim < 1:
            raise ContractError("projection out_dim must be >= 1")
        if self.tsne_perplexity <= 1.0:
            raise ContractError("tsne perplexity must exceed 1")
        if self.tsne_iterations < 1:
            raise ContractError("tsne needs at least one iteration")


def standardize_columns(x):
    """Zero-mean unit-sd columns (constant columns pass through as zero)."""
    x = linalg.as_matrix(x)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (x - mean) / sd


# ---------------------------------------------------------------- PCA

def pca_project(x, label, config):
    """Project onto the top principal components.

    Component signs are fixed so each component's largest-magnitude
    loading is positive; if the data rank falls short of out_dim the
    trailing coordinates are exactly zero (logged).
    """
    x = linalg.as_matrix(x, "pca input")
    n = x.shape[0]
    if n < 2:
        raise ContractError("pca needs at least 2 rows")
    if config.out_dim >= x.shape[1] + 1:
        raise ContractError(
            f"pca out_dim {config.out_dim} too large for {x.shape[1]} features"
        )
    centered = linalg.center_columns(x)
    u, s, vt = linalg.svd(centered)
    k = config.out_dim
    rank = linalg.effective_rank(s)
    components = vt[:k].T.copy()              # (features, k)
    for j in range(k):
        i_star = int(np.argmax(np.abs(components[:, j])))
        if components[i_star, j] < 0.0:
            components[:, j] = -components[:, j]
    scores = linalg.matmul(centered, components)
    if rank < k:
        log.warning("pca %s: rank %d below out_dim %d; trailing coordinates zeroed",
                    label, rank, k)
        scores[:, rank:] = 0.0
    return SampleSet(points=scores, source_label=label, representation="pca")


def pca_explained_variance(x, out_dim):
    """Per-component sample variances s_i^2/(n-1) of the projection."""
    centered = linalg.center_columns(linalg.as_matrix(x))
    s = linalg.svd(centered).s
    return (s[:out_dim] ** 2) / (centered.shape[0] - 1)


# ---------------------------------------------------------------- MDS

def mds_project(x, label, config):
    """Classical (Torgerson) MDS of the Euclidean distance matrix.

    Double-centers the squared distances, eigendecomposes, and scales the
    top eigenvectors by sqrt(eigenvalue) (negative eigenvalues clipped to
    zero; their mass is logged).  All-identical points yield the all-zero
    embedding with a warning.
    """
    x = linalg.as_matrix(x, "mds input")
    n = x.shape[0]
    if n < 3:
        raise ContractError("classical MDS needs at least 3 points")
    d2 = linalg.pairwise_euclidean(x, x) ** 2
    row = d2.mean(axis=1, keepdims=True)
    col = d2.mean(axis=0, keepdims=True)
    b = -0.5 * (d2 - row - col + d2.mean())
    b = (b + b.T) / 2.0
    eigvals, eigvecs = linalg.sym_eig(b)
    neg_mass = float(np.abs(eigvals[eigvals < 0.0]).sum())
    total_mass = float(np.abs(eigvals).sum())
    if total_mass == 0.0:
        log.warning("mds %s: degenerate input (all points identical)", label)
        return SampleSet(points=np.zeros((n, config.out_dim)),
                         source_label=label, representation="mds")
    if neg_mass > 1e-8 * total_mass:
        log.info("mds %s: negative eigenvalue mass %.3e of total %.3e",
                 label, neg_mass, total_mass)
    k = config.out_dim
    lam = np.maximum(eigvals[:k], 0.0)
    # axes whose eigenvalue is numerical noise relative to the leading one
    # carry no geometry; zero them instead of emitting sqrt-inflated fuzz
    lam[lam < linalg.RANK_TOL * np.abs(eigvals).max()] = 0.0
    coords = eigvecs[:, :k] * np.sqrt(lam)
    return SampleSet(points=coords, source_label=label, representation="mds")


# --------------------------------------------------------------- t-SNE

def _conditional_probabilities(d2, perplexity, tol=1e-5, max_iter=200):
    """Per-row Gaussian affinities with entropy matched to log(perplexity).

    Returns (P_conditional with zero diagonal and unit row sums, betas).
    """
    n = d2.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        idx = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        di = d2[i, idx]
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        for _ in range(max_iter):
            expd = np.exp(-di * beta)
            sum_p = expd.sum()
            if sum_p <= 0.0:
                entropy = -np.inf
            else:
                # H = log(sumP) + beta * E[d2]
                entropy = np.log(sum_p) + beta * float(np.einsum("i,i->", di, expd)) / sum_p
            diff = entropy - target
            if abs(diff) < tol:
                break
            if diff > 0.0:          # entropy too high -> sharpen
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        expd = np.exp(-di * beta)
        sum_p = expd.sum()
        if sum_p <= 0.0 or not np.isfinite(sum_p):
            raise NumericError(f"t-SNE affinity row {i} degenerate")
        p[i, idx] = expd / sum_p
        betas[i] = beta
    return p, betas


def _tsne_q(y):
    """Student-t joint affinities and the unnormalized kernel matrix."""
    d2 = linalg.pairwise_euclidean(y, y) ** 2
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, 1e-12), num


def tsne_project(x, label, config, return_diagnostics=False):
    """Exact t-SNE embedding, deterministic given config.seed.

    Binary-searched per-point bandwidths, symmetrized P, early
    exaggeration for the first tsne_early_iters steps, momentum schedule,
    adaptive gains, and re-centering each step.
    """
    x = linalg.as_matrix(x, "tsne input")
    n = x.shape[0]
    if n < 3 * config.tsne_perplexity + 1:
        raise ContractError(
            f"tsne needs n >= 3*perplexity+1 = {3 * config.tsne_perplexity + 1:.0f}, "
            f"got {n}"
        )
    d2 = linalg.pairwise_euclidean(x, x) ** 2
    p_cond, _ = _conditional_probabilities(d2, config.tsne_perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    stream = rng.derive(config.seed, f"tsne-init/{label}")
    y = stream.normals(n * config.out_dim, sigma=1e-4).reshape(n, config.out_dim)
    inc = np.zeros_like(y)
    gains = np.ones_like(y)

    q0, _ = _tsne_q(y)
    kl_initial = float(np.sum(p * np.log(p / q0)))

    for it in range(config.tsne_iterations):
        p_eff = p * config.tsne_early_exaggeration if it < config.tsne_early_iters else p
        q, num = _tsne_q(y)
        pq = (p_eff - q) * num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - linalg.matmul(pq, y))
        momentum = (config.tsne_momentum_early if it < config.tsne_early_iters
                    else config.tsne_momentum_late)
        flips = np.sign(grad) != np.sign(inc)
        gains = np.where(flips, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        inc = momentum * inc - config.tsne_learning_rate * gains * grad
        y = y + inc
        y = y - y.mean(axis=0)
        if not np.isfinite(y).all():
            raise NumericError(f"t-SNE diverged at iteration {it}")
    q_final, _ = _tsne_q(y)
    kl_final = float(np.sum(p * np.log(p / q_final)))
    out = SampleSet(points=y, source_label=label, representation="tsne")
    if return_diagnostics:
        return out, {"kl_initial": kl_initial, "kl_final": kl_final, "p": p}
    return out


def project(x, label, method, config):
    """Dispatch to one of the three projections."""
    if method == "pca":
        return pca_project(x, label, config)
    if method == "mds":
        return mds_project(x, label, config)
    if method == "tsne":
        return tsne_project(x, label, config)
    raise ContractError(f"unknown projection method {method!r}")


# ----------------------------------------------------------------- KDE

def scott_bandwidths(points, floor=1e-6):
    """Per-axis Scott's-rule bandwidths sigma * n^(-1/6) with a floor."""
    points = linalg.as_matrix(points, "kde points")
    n = points.shape[0]
    sigma = points.std(axis=0, ddof=1) if n > 1 else np.zeros(points.shape[1])
    h = sigma * n ** (-1.0 / 6.0)
    if np.any(h < floor):
        log.warning("kde: bandwidth floor %g applied on %d axis/axes",
                    floor, int(np.sum(h < floor)))
    return np.maximum(h, floor)


def default_bounds(points, n_bandwidths=4.0):
    """Axis bounds covering the data plus a margin of n bandwidths."""
    points = linalg.as_matrix(points)
    h = scott_bandwidths(points)
    lo = points.min(axis=0) - n_bandwidths * h
    hi = points.max(axis=0) + n_bandwidths * h
    return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def kde2d(points, grid):
    """Bivariate Gaussian-product KDE on a regular grid.

    Args:
        points: SampleSet (or (n, 2) array) of plane points.
        grid: (nx, ny, bounds) with bounds = (xmin, xmax, ymin, ymax).

    Returns:
        (density, xs, ys): density[ix, iy] evaluated at (xs[ix], ys[iy]);
        nonnegative, Riemann-summing to ~1 when bounds cover the mass.
    """
    pts = points.points if isinstance(points, SampleSet) else linalg.as_matrix(points)
    if pts.shape[1] != 2:
        raise ContractError(f"kde2d needs 2-D points, got dimension {pts.shape[1]}")
    nx, ny, bounds = grid
    xmin, xmax, ymin, ymax = bounds
    if not (xmax > xmin and ymax > ymin):
        raise ContractError("kde2d bounds must have positive extent")
    hx, hy = scott_bandwidths(pts)
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    # a kernel narrower than one grid cell would alias to all-zero; widen
    # the rendered bandwidth to the cell size so spikes stay visible
    if nx > 1:
        hx = max(hx, xs[1] - xs[0])
    if ny > 1:
        hy = max(hy, ys[1] - ys[0])
    zx = (xs[None, :] - pts[:, 0][:, None]) / hx
    zy = (ys[None, :] - pts[:, 1][:, None]) / hy
    kx = np.exp(-0.5 * zx * zx) / (hx * np.sqrt(2.0 * np.pi))
    ky = np.exp(-0.5 * zy * zy) / (hy * np.sqrt(2.0 * np.pi))
    density = np.einsum("ni,nj->ij", kx, ky) / pts.shape[0]
    return density, xs, ys


# ------------------------------------------------------------- file I/O

def write_projections(path, sample_sets):
    """All projected points as `branch;method;dim1;dim2` rows."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("branch;method;dim1;dim2\n")
            for ss in sample_sets:
                for row in ss.points:
                    fh.write(f"{ss.source_label};{ss.representation};"
                             f"{float(row[0])!r};{float(row[1])!r}\n")
    except OSError as exc:
        raise StorageError(f"cannot write projections {path}: {exc}") from exc


def read_projections(path):
    """Inverse of write_projections: {(branch, method): SampleSet}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read projections {path}: {exc}") from exc
    if not lines or lines[0] != "branch;method;dim1;dim2":
        raise StorageError(f"{path} is not a projection file")
    grouped = {}
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(";")
        if len(parts) != 4:
            raise StorageError(f"{path}:{ln}: expected 4 fields")
        try:
            grouped.setdefault((parts[0], parts[1]), []).append(
                (float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise StorageError(f"{path}:{ln}: {exc}") from exc
    return {key: SampleSet(points=np.array(pts), source_label=key[0],
                           representation=key[1])
            for key, pts in grouped.items()}


def write_kde_grid(path, bounds, density):
    """Grid CSV: one bounds header line, then the nx x ny matrix."""
    density = np.asarray(density)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("xmin;xmax;ymin;ymax;nx;ny\n")
            fh.write(";".join(repr(float(v)) for v in bounds)
                     + f";{density.shape[0]};{density.shape[1]}\n")
            for row in density:
                fh.write(";".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write KDE grid {path}: {exc}") from exc
