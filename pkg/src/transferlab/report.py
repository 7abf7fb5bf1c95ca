"""Joins sweep results with indicators and runs the hypothesis tests.

The questions answered here: is mean transferability positive (H1,
one-sample t-test), and does each pre-transfer indicator rank-correlate
with transferability (H2 raw-data divergence, H3.1/H3.2/H3.3 divergence
of t-SNE/PCA/MDS projections, H4 SVCCA similarity; Spearman with
significance stars)?  Divergence indicators use the immediate source
branch — the hop the model arrived from — ignoring earlier path history;
that simplification is deliberate and stated in the emitted summary.

``emit_report`` writes the full bundle (correlations CSV, first-degree
transfer matrix, per-degree best table, KDE overlay grids, markdown
summary) with byte-deterministic content.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

from . import projections, stats
from .errors import ContractError, DataError, StorageError
from .transfer import path_key

log = logging.getLogger(__name__)

# hypothesis label, CSV indicator name, IndicatorRow attribute
HYPOTHESES = (
    ("H2", "divergence_raw", "d_raw"),
    ("H3.1", "divergence_tsne", "d_tsne"),
    ("H3.2", "divergence_pca", "d_pca"),
    ("H3.3", "divergence_mds", "d_mds"),
    ("H4", "svcca_rho", "rho_svcca"),
)


@dataclass(frozen=True)
class IndicatorRow:
    source: str
    target: str
    path: tuple
    delta_m: float
    d_raw: float
    d_tsne: float
    d_pca: float
    d_mds: float
    rho_svcca: float

    def __post_init__(self):
        if not math.isfinite(self.delta_m):
            raise ContractError(f"{path_key(self.path)}: delta_m not finite")
        for name in ("d_raw", "d_tsne", "d_pca", "d_mds"):
            if getattr(self, name) < 0.0:
                raise ContractError(f"{path_key(self.path)}: {name} negative")
        if not 0.0 <= self.rho_svcca <= 1.0:
            raise ContractError(
                f"{path_key(self.path)}: rho_svcca outside [0, 1]")


@dataclass(frozen=True)
class HypothesisReport:
    h1: stats.TTestResult
    correlations: tuple   # of (hypothesis, indicator, CorrelationResult)
    n_rows: int
    n_excluded: int


def _matrix_lookup(div_matrices, representation, source, target):
    if representation not in div_matrices:
        raise DataError(f"divergence matrix for {representation!r} missing")
    labels, matrix = div_matrices[representation]
    try:
        i = labels.index(source)
        j = labels.index(target)
    except ValueError as exc:
        raise DataError(
            f"divergence matrix {representation!r} lacks branch {exc.args[0] if exc.args else ''}: "
            f"needed pair ({source}, {target}), has {labels}") from exc
    return float(matrix[i][j])


def build_indicator_rows(records, div_matrices, svcca_rho):
    """Join successful sweep records with their pre-transfer indicators.

    div_matrices maps representation -> (labels, symmetric matrix);
    svcca_rho maps ordered (source, target) pairs to scores.  Returns
    (rows, n_excluded) where n_excluded counts failed sweep records.
    """
    rows = []
    excluded = 0
    orphans = []
    for rec in records:
        if not rec.ok:
            excluded += 1
            continue
        source = rec.source
        pair = (source, rec.target)
        if pair not in svcca_rho:
            orphans.append(pair)
            continue
        rows.append(IndicatorRow(
            source=source, target=rec.target, path=rec.path,
            delta_m=rec.delta_m_relative,
            d_raw=_matrix_lookup(div_matrices, "raw", source, rec.target),
            d_tsne=_matrix_lookup(div_matrices, "tsne", source, rec.target),
            d_pca=_matrix_lookup(div_matrices, "pca", source, rec.target),
            d_mds=_matrix_lookup(div_matrices, "mds", source, rec.target),
            rho_svcca=svcca_rho[pair]))
    if orphans:
        raise DataError(
            "SVCCA scores missing for pairs: "
            + ", ".join(f"{s}->{t}" for s, t in sorted(set(orphans))))
    return rows, excluded


def correlate_indicators(rows, n_excluded=0):
    """H1 t-test plus one Spearman correlation per indicator column."""
    if len(rows) < 3:
        raise ContractError(
            f"report needs >= 3 successful records, got {len(rows)}")
    deltas = [r.delta_m for r in rows]
    h1 = stats.one_sample_ttest(deltas)
    correlations = []
    for hypothesis, indicator, attr in HYPOTHESES:
        values = [getattr(r, attr) for r in rows]
        correlations.append((hypothesis, indicator,
                             stats.spearman_rho(values, deltas)))
    return HypothesisReport(h1=h1, correlations=tuple(correlations),
                            n_rows=len(rows), n_excluded=n_excluded)


def per_degree_best(records):
    """Minimum transferred MAPE per (target, degree); ties break on path."""
    best = {}
    for rec in records:
        if not rec.ok:
            continue
        key = (rec.target, rec.degree)
        incumbent = best.get(key)
        if (incumbent is None
                or rec.mape_transferred < incumbent.mape_transferred
                or (rec.mape_transferred == incumbent.mape_transferred
                    and path_key(rec.path) < path_key(incumbent.path))):
            best[key] = rec
    return [best[key] for key in sorted(best)]


def first_degree_matrix(records, labels):
    """Source x target cell texts for degree-1 transfers; diagonal blank."""
    by_pair = {(r.path[0], r.target): r for r in records if r.degree == 1}
    grid = []
    for source in labels:
        row = []
        for target in labels:
            if source == target:
                row.append("")
                continue
            rec = by_pair.get((source, target))
            if rec is None:
                row.append("missing")
            elif not rec.ok:
                row.append("failed")
            else:
                row.append(f"{rec.mape_transferred:.2f} "
                           f"({rec.delta_m_relative * 100.0:+.2f}%)")
        grid.append(row)
    return grid


# ------------------------------------------------------------- emission

def write_correlations(path, report):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("hypothesis;indicator;r_s;p_value;n;stars\n")
            for hypothesis, indicator, corr in report.correlations:
                fh.write(f"{hypothesis};{indicator};{corr.r_s!r};"
                         f"{corr.p_value!r};{corr.n};{stats.stars(corr.p_value)}\n")
    except OSError as exc:
        raise StorageError(f"cannot write correlations {path}: {exc}") from exc


def _write_lines(path, lines):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write report file {path}: {exc}") from exc


def emit_report(out_dir, report, sweep_result, kde_overlays=None,
                config_lines=()):
    """Write the result bundle into out_dir; byte-identical across reruns.

    kde_overlays maps file stem -> (bounds, density grid).  Returns the
    list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = sorted(sweep_result.base_status)
    records = sweep_result.records
    written = []

    corr_path = out_dir / "correlations.csv"
    write_correlations(corr_path, report)
    written.append(corr_path)

    best_path = out_dir / "best_by_degree.csv"
    best_lines = ["target;degree;path;mape_base;mape_transferred;"
                  "delta_m_relative"]
    for rec in per_degree_best(records):
        best_lines.append(
            f"{rec.target};{rec.degree};{path_key(rec.path)};"
            f"{rec.mape_base!r};{rec.mape_transferred!r};"
            f"{rec.delta_m_relative!r}")
    _write_lines(best_path, best_lines)
    written.append(best_path)

    matrix_path = out_dir / "transfer_matrix_degree1.csv"
    grid = first_degree_matrix(records, labels)
    matrix_lines = ["source\\target;" + ";".join(labels)]
    for source, row in zip(labels, grid):
        matrix_lines.append(source + ";" + ";".join(row))
    _write_lines(matrix_path, matrix_lines)
    written.append(matrix_path)

    for stem, (bounds, density) in sorted((kde_overlays or {}).items()):
        grid_path = out_dir / f"{stem}.csv"
        projections.write_kde_grid(grid_path, bounds, density)
        written.append(grid_path)

    summary_path = out_dir / "summary.md"
    lines = ["# Transfer experiment report", ""]
    if config_lines:
        lines.append("## Run configuration")
        lines.append("```")
        lines.extend(config_lines)
        lines.append("```")
        lines.append("")
    lines.append("## H1: mean transferability")
    lines.append("")
    lines.append(f"- records analysed: {report.n_rows} "
                 f"(excluded as failed: {report.n_excluded})")
    lines.append(f"- mean delta_m = {report.h1.mean:.6f}, "
                 f"sd = {report.h1.sd:.6f}, n = {report.h1.n}")
    lines.append(f"- t = {report.h1.t:.4f}, two-sided p = {report.h1.p_value:.3e} "
                 f"{stats.stars(report.h1.p_value)}")
    lines.append("")
    lines.append("## H2-H4: indicator correlations (Spearman vs delta_m)")
    lines.append("")
    lines.append("| hypothesis | indicator | r_s | p | n | |")
    lines.append("|---|---|---|---|---|---|")
    for hypothesis, indicator, corr in report.correlations:
        lines.append(f"| {hypothesis} | {indicator} | {corr.r_s:.4f} "
                     f"| {corr.p_value:.3e} | {corr.n} "
                     f"| {stats.stars(corr.p_value)} |")
    lines.append("")
    lines.append("Divergence indicators compare the immediate source branch "
                 "(last hop) with the target; earlier path history is "
                 "deliberately ignored.")
    lines.append("")
    lines.append("## Base models")
    lines.append("")
    lines.append("| branch | base MAPE % | base RMSE | status |")
    lines.append("|---|---|---|---|")
    for label in labels:
        mape = sweep_result.base_mape.get(label)
        rmse = sweep_result.base_rmse.get(label)
        lines.append(f"| {label} "
                     f"| {'-' if mape is None else f'{mape:.2f}'} "
                     f"| {'-' if rmse is None else f'{rmse:.2f}'} "
                     f"| {sweep_result.base_status[label]} |")
    lines.append("")
    lines.append("## First-degree transfers (rows: source, columns: target)")
    lines.append("")
    lines.append("| | " + " | ".join(labels) + " |")
    lines.append("|---" * (len(labels) + 1) + "|")
    for source, row in zip(labels, grid):
        lines.append("| " + source + " | " + " | ".join(row) + " |")
    lines.append("")
    _write_lines(summary_path, lines)
    written.append(summary_path)
    return written
