"""End-to-end experiment pipeline: generate -> sweep -> indicators -> report.

Every stage reads its inputs from and writes its outputs to one output
directory, so stages can run in separate invocations (or be re-run after
a crash with ``resume``).  All randomness is derived from ``global_seed``
through labelled key derivation; artifacts are byte-identical across
reruns, worker counts, and output locations.
"""

from __future__ import annotations

import dataclasses
import datetime
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, divergence, netsim, projections, rng, transfer
from . import model as model_mod
from . import report as report_mod
from .errors import ConfigError, DataError, StorageError

log = logging.getLogger(__name__)

# One weekly revenue profile per branch (Monday first), cycled when more
# branches are configured than the bank holds.  The shapes are deliberately
# varied so default runs contain both similar and dissimilar branch pairs.
DEFAULT_PROFILES = (
    (0.90, 0.95, 1.00, 1.00, 1.10, 1.45, 1.30),  # weekend-heavy
    (1.15, 1.10, 1.05, 1.00, 1.00, 0.70, 0.60),  # weekday trade
    (1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00),  # flat
    (0.80, 0.90, 1.00, 1.20, 1.40, 1.50, 0.90),  # Fri/Sat peak
    (1.30, 1.20, 1.10, 1.00, 0.90, 0.85, 0.80),  # early-week peak
    (0.95, 1.00, 1.30, 1.00, 0.95, 1.20, 1.25),  # midweek spike
)

PROJECTION_METHODS = ("tsne", "pca", "mds")

_MODES = ("synthetic", "csv")
_SPLITS = ("train", "test", "all")
_BASE_HEADER = "branch;mape;rmse;status"


# ------------------------------------------------------------ run config

@dataclass(frozen=True)
class RunConfig:
    """Validated description of one full experiment run."""

    mode: str = "synthetic"
    n_branches: int = 4
    csv_dir: Path | None = None
    start_date: datetime.date = datetime.date(2015, 1, 1)
    end_date: datetime.date = datetime.date(2017, 12, 31)
    test_year: int = 2017
    base_level: float = 1000.0
    trend: float = 1.0
    noise_sd: float = 0.05
    profiles: dict = field(default_factory=dict)  # branch id -> 7 factors
    closed: dict = field(default_factory=dict)    # branch id -> weekday set
    model: model_mod.ModelConfig = field(default_factory=model_mod.ModelConfig)
    max_degree: int = 1
    parallelism: int = 1
    projection: projections.ProjectionConfig = field(
        default_factory=projections.ProjectionConfig)
    joint_projection: bool = False
    kde_grid: int = 60
    divergence_split: str = "train"
    svcca_threshold: float = netsim.VARIANCE_THRESHOLD
    out_dir: Path = Path("out")
    global_seed: int = 0
    resume: bool = False

    def __post_init__(self):
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.csv_dir is not None:
            object.__setattr__(self, "csv_dir", Path(self.csv_dir))
        if self.mode not in _MODES:
            raise ConfigError(
                f"data.mode must be one of {_MODES}, got {self.mode!r}")
        if self.mode == "csv" and self.csv_dir is None:
            raise ConfigError("data.mode=csv requires data.csv_dir")
        if self.mode == "synthetic" and self.n_branches < 1:
            raise ConfigError("data.n_branches must be >= 1")
        if self.start_date >= self.end_date:
            raise ConfigError("data.start_date must precede data.end_date")
        if not self.start_date.year <= self.test_year <= self.end_date.year:
            raise ConfigError(
                f"data.test_year {self.test_year} outside the generated range "
                f"{self.start_date.year}..{self.end_date.year}")
        if self.noise_sd < 0.0:
            raise ConfigError("data.noise_sd must be >= 0")
        if self.max_degree < 1:
            raise ConfigError("transfer.max_degree must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("transfer.parallelism must be >= 1")
        if self.kde_grid < 2:
            raise ConfigError("projections.kde_grid must be >= 2")
        if self.divergence_split not in _SPLITS:
            raise ConfigError(
                f"divergence.split must be one of {_SPLITS}, "
                f"got {self.divergence_split!r}")
        if not 0.0 < self.svcca_threshold <= 1.0:
            raise ConfigError("svcca.threshold must lie in (0, 1]")
        labels = set(self.branch_labels()) if self.mode == "synthetic" else None
        for kind, table in (("profile", self.profiles), ("closed", self.closed)):
            for branch, value in table.items():
                if labels is not None and branch not in labels:
                    raise ConfigError(
                        f"data.{kind}.{branch} names an unknown branch "
                        f"(have b1..b{self.n_branches})")
                if kind == "profile" and len(value) != 7:
                    raise ConfigError(
                        f"data.profile.{branch} needs 7 weekday factors, "
                        f"got {len(value)}")
                if kind == "closed" and any(not 0 <= d <= 6 for d in value):
                    raise ConfigError(
                        f"data.closed.{branch} weekdays must lie in 0..6")

    def branch_labels(self):
        """Branch ids of a synthetic run, in generation order."""
        return tuple(f"b{i + 1}" for i in range(self.n_branches))

    @classmethod
    def from_file(cls, path):
        return cls.from_mapping(parse_config_file(path))

    @classmethod
    def from_mapping(cls, mapping):
        """Build a RunConfig from a flat string->string mapping."""
        kwargs = {}
        model_kwargs = {}
        proj_kwargs = {}
        profiles = {}
        closed = {}
        for key in sorted(mapping):
            value = mapping[key]
            if key in _SIMPLE_KEYS:
                name, coerce = _SIMPLE_KEYS[key]
                kwargs[name] = coerce(key, value)
            elif key.startswith("data.profile."):
                branch = key[len("data.profile."):]
                profiles[branch] = tuple(_to_floats(key, value))
            elif key.startswith("data.closed."):
                branch = key[len("data.closed."):]
                closed[branch] = _to_weekdays(key, value)
            elif key.startswith("model."):
                name = key[len("model."):]
                if name not in _MODEL_KEYS:
                    raise ConfigError(f"unknown config key {key!r}")
                model_kwargs[name] = _MODEL_KEYS[name](key, value)
            elif key.startswith("projections."):
                name = key[len("projections."):]
                if name not in _PROJECTION_KEYS:
                    raise ConfigError(f"unknown config key {key!r}")
                target, coerce = _PROJECTION_KEYS[name]
                proj_kwargs[target] = coerce(key, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if model_kwargs:
            kwargs["model"] = model_mod.ModelConfig(**model_kwargs)
        if proj_kwargs:
            kwargs["projection"] = projections.ProjectionConfig(**proj_kwargs)
        if profiles:
            kwargs["profiles"] = profiles
        if closed:
            kwargs["closed"] = closed
        return cls(**kwargs)

    def with_overrides(self, *, seed=None, max_degree=None, out=None,
                       resume=False):
        """Apply command-line overrides on top of the file configuration."""
        changes = {}
        if seed is not None:
            changes["global_seed"] = seed
        if max_degree is not None:
            changes["max_degree"] = max_degree
        if out is not None:
            changes["out_dir"] = Path(out)
        if resume:
            changes["resume"] = True
        return dataclasses.replace(self, **changes) if changes else self


# ------------------------------------------------- config file handling

def parse_config_file(path):
    """Flat ``key=value`` file -> dict; ``#`` comments and blanks skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    mapping = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        if key in mapping:
            raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


def _to_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(
            f"config key {key} needs an integer, got {value!r}") from None


def _to_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(
            f"config key {key} needs a number, got {value!r}") from None


def _to_bool(key, value):
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"config key {key} needs true/false, got {value!r}")


def _to_date(key, value):
    try:
        return datetime.date.fromisoformat(value)
    except ValueError:
        raise ConfigError(
            f"config key {key} needs an ISO date, got {value!r}") from None


def _to_str(_key, value):
    return value


def _to_path(_key, value):
    return Path(value)


def _to_floats(key, value):
    if not value:
        raise ConfigError(f"config key {key} needs comma-separated numbers")
    return tuple(_to_float(key, part.strip()) for part in value.split(","))


def _to_weekdays(key, value):
    if not value.strip():
        return frozenset()
    return frozenset(_to_int(key, part.strip()) for part in value.split(","))


_SIMPLE_KEYS = {
    "data.mode": ("mode", _to_str),
    "data.n_branches": ("n_branches", _to_int),
    "data.csv_dir": ("csv_dir", _to_path),
    "data.start_date": ("start_date", _to_date),
    "data.end_date": ("end_date", _to_date),
    "data.test_year": ("test_year", _to_int),
    "data.base_level": ("base_level", _to_float),
    "data.trend": ("trend", _to_float),
    "data.noise_sd": ("noise_sd", _to_float),
    "transfer.max_degree": ("max_degree", _to_int),
    "transfer.parallelism": ("parallelism", _to_int),
    "projections.joint": ("joint_projection", _to_bool),
    "projections.kde_grid": ("kde_grid", _to_int),
    "divergence.split": ("divergence_split", _to_str),
    "svcca.threshold": ("svcca_threshold", _to_float),
    "output_dir": ("out_dir", _to_path),
    "global_seed": ("global_seed", _to_int),
    "resume": ("resume", _to_bool),
}

# model.seed is intentionally absent: the sweep derives every training
# seed from global_seed, so a configured value would be silently ignored.
_MODEL_KEYS = {
    "conv_filters": _to_int, "kernel_size": _to_int, "pool_size": _to_int,
    "dense1": _to_int, "dense2": _to_int, "output_len": _to_int,
    "base_epochs": _to_int, "retrain_epochs": _to_int, "batch_size": _to_int,
    "adam_alpha": _to_float, "adam_beta1": _to_float,
    "adam_beta2": _to_float, "adam_eps": _to_float,
}

# projection seeds are likewise derived, not configured
_PROJECTION_KEYS = {
    "out_dim": ("out_dim", _to_int),
    "perplexity": ("tsne_perplexity", _to_float),
    "iterations": ("tsne_iterations", _to_int),
    "learning_rate": ("tsne_learning_rate", _to_float),
    "early_exaggeration": ("tsne_early_exaggeration", _to_float),
    "early_iters": ("tsne_early_iters", _to_int),
}


def summary_config_lines(config):
    """Semantic configuration echo for the report summary.

    Location and execution knobs (output_dir, parallelism, resume) are
    left out on purpose: they cannot change any computed value, and
    excluding them keeps report bundles byte-identical across worker
    counts and output locations.
    """
    lines = [f"data.mode={config.mode}"]
    if config.mode == "synthetic":
        lines += [
            f"data.n_branches={config.n_branches}",
            f"data.start_date={config.start_date.isoformat()}",
            f"data.end_date={config.end_date.isoformat()}",
            f"data.base_level={config.base_level!r}",
            f"data.trend={config.trend!r}",
            f"data.noise_sd={config.noise_sd!r}",
        ]
        for branch in sorted(config.profiles):
            factors = ",".join(repr(float(v)) for v in config.profiles[branch])
            lines.append(f"data.profile.{branch}={factors}")
        for branch in sorted(config.closed):
            days = ",".join(str(d) for d in sorted(config.closed[branch]))
            lines.append(f"data.closed.{branch}={days}")
    else:
        lines.append(f"data.csv_dir={config.csv_dir}")
    lines.append(f"data.test_year={config.test_year}")
    for f_ in dataclasses.fields(model_mod.ModelConfig):
        if f_.name == "seed":
            continue
        lines.append(f"model.{f_.name}={getattr(config.model, f_.name)!r}")
    lines.append(f"transfer.max_degree={config.max_degree}")
    for name, (target, _) in sorted(_PROJECTION_KEYS.items()):
        lines.append(f"projections.{name}={getattr(config.projection, target)!r}")
    lines += [
        f"projections.joint={'true' if config.joint_projection else 'false'}",
        f"projections.kde_grid={config.kde_grid}",
        f"divergence.split={config.divergence_split}",
        f"svcca.threshold={config.svcca_threshold!r}",
        f"global_seed={config.global_seed}",
    ]
    return lines


# ------------------------------------------------------------- datasets

def _synth_config(config):
    labels = config.branch_labels()
    profiles = tuple(
        config.profiles.get(label, DEFAULT_PROFILES[i % len(DEFAULT_PROFILES)])
        for i, label in enumerate(labels))
    closed = ()
    if config.closed:
        closed = tuple(config.closed.get(label, frozenset())
                       for label in labels)
    return data.SynthConfig(
        n_branches=config.n_branches,
        seed=rng.derive_key(config.global_seed, "synthetic-data"),
        weekly_profiles=profiles,
        base_level=config.base_level,
        trend=config.trend,
        noise_sd=config.noise_sd,
        closed_days=closed,
    )


def cmd_generate(config):
    """Write one synthetic branch CSV per branch under out/data."""
    if config.mode != "synthetic":
        raise ConfigError(
            "generate only applies to data.mode=synthetic; csv mode reads "
            "pre-existing files from data.csv_dir")
    series = data.generate_synthetic(
        _synth_config(config), config.start_date, config.end_date)
    out = config.out_dir / "data"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for s in series:
        path = out / f"{s.branch_id}.csv"
        data.write_csv(s, path)
        written.append(path)
        log.info("generate: %s rows=%d", path, len(s.observations))
    return written


def load_datasets(config):
    """Per-branch train/test datasets, keyed and ordered by branch id.

    Synthetic mode prefers CSVs previously written by ``generate`` under
    out/data and regenerates in memory when they are absent; both routes
    yield identical values because the CSVs round-trip floats exactly.
    """
    if config.mode == "synthetic":
        labels = config.branch_labels()
        paths = [config.out_dir / "data" / f"{label}.csv" for label in labels]
        if all(path.is_file() for path in paths):
            series = [data.load_csv(path, label)
                      for path, label in zip(paths, labels)]
        else:
            series = data.generate_synthetic(
                _synth_config(config), config.start_date, config.end_date)
    else:
        files = sorted(Path(config.csv_dir).glob("*.csv"))
        if not files:
            raise DataError(f"no branch CSVs found under {config.csv_dir}")
        series = [data.load_csv(path, path.stem) for path in files]
    datasets = {}
    for s in series:
        s = data.clean(s)
        windows = data.make_windows(s)
        datasets[s.branch_id] = data.split_train_test(
            windows, config.test_year, s.branch_id)
    return datasets


# ---------------------------------------------------------------- sweep

def _write_base_models(path, result):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_BASE_HEADER + "\n")
            for label in sorted(result.base_status):
                mape = result.base_mape.get(label, float("nan"))
                rmse = result.base_rmse.get(label, float("nan"))
                fh.write(f"{label};{float(mape)!r};{float(rmse)!r};"
                         f"{result.base_status[label]}\n")
    except OSError as exc:
        raise StorageError(f"cannot write base models {path}: {exc}") from exc


def _read_base_models(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(
            f"base model table {path} is missing; run `transferlab sweep` "
            f"first ({exc})") from exc
    if not lines or lines[0] != _BASE_HEADER:
        raise StorageError(f"{path} is not a base model table")
    mape, rmse, status = {}, {}, {}
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(";")
        if len(parts) != 4:
            raise StorageError(f"{path}:{ln}: expected 4 fields")
        try:
            mape[parts[0]] = float(parts[1])
            rmse[parts[0]] = float(parts[2])
        except ValueError as exc:
            raise StorageError(f"{path}:{ln}: {exc}") from exc
        status[parts[0]] = parts[3]
    return mape, rmse, status


def cmd_sweep(config, datasets=None):
    """Train base models and run every transfer path up to max_degree.

    Artifacts: sweep.csv (one row per path), base_models.csv, and one
    reusable checkpoint per trained prefix under out/checkpoints.
    """
    if datasets is None:
        datasets = load_datasets(config)
    checkpoint_dir = config.out_dir / "checkpoints"
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    result = transfer.sweep(
        datasets.values(), config.model, config.global_seed, config.max_degree,
        parallelism=config.parallelism, checkpoint_dir=checkpoint_dir,
        resume=config.resume)
    transfer.write_sweep(config.out_dir / "sweep.csv", result.records)
    _write_base_models(config.out_dir / "base_models.csv", result)
    n_ok = sum(1 for r in result.records if r.ok)
    log.info("sweep: %d records (%d ok, %d failed)",
             len(result.records), n_ok, len(result.records) - n_ok)
    return result


# ----------------------------------------------------------- indicators

def _projected_sets(config, features, labels):
    """Project every branch with each method; {(label, method): SampleSet}.

    Branches are projected independently by default so each plane is that
    branch's own best low-dimensional summary; ``joint_projection`` fits
    one shared plane over the union instead (one embedding, split back
    per branch), which makes coordinates directly comparable.
    """
    seed = rng.derive_key(config.global_seed, "projections")
    proj_cfg = dataclasses.replace(config.projection, seed=seed)
    out = {}
    for method in PROJECTION_METHODS:
        if config.joint_projection:
            stacked = np.vstack([features[label] for label in labels])
            joint = projections.project(stacked, "joint", method, proj_cfg)
            offset = 0
            for label in labels:
                n = features[label].shape[0]
                out[(label, method)] = divergence.SampleSet(
                    points=joint.points[offset:offset + n],
                    source_label=label, representation=method)
                offset += n
        else:
            for label in labels:
                out[(label, method)] = projections.project(
                    features[label], label, method, proj_cfg)
    return out


def cmd_indicators(config, datasets=None):
    """Compute every pre-transfer indicator from data and checkpoints.

    Artifacts: divergence_raw.csv plus one divergence_<method>.csv per
    projection, projections.csv, per-branch KDE grids under out/kde, and
    svcca.csv with per-layer rows and the aggregate rho per ordered pair.
    """
    if datasets is None:
        datasets = load_datasets(config)
    labels = sorted(datasets)
    if len(labels) < 2:
        raise DataError("indicators need at least 2 branches")
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    split = config.divergence_split
    written = []

    def raw_pair(label_a, label_b):
        set_a, set_b = divergence.raw_sample_sets(
            datasets[label_a], datasets[label_b], split)
        return divergence.energy_distance(set_a, set_b)

    raw_labels, raw_matrix = divergence.divergence_matrix(
        pair_fn=raw_pair, labels=labels)
    path = out / "divergence_raw.csv"
    divergence.write_divergence_matrix(path, raw_labels, raw_matrix)
    written.append(path)

    features = {
        label: projections.standardize_columns(
            divergence.branch_features(datasets[label], split))
        for label in labels}
    projected = _projected_sets(config, features, labels)
    for method in PROJECTION_METHODS:
        sets = {label: projected[(label, method)] for label in labels}
        m_labels, matrix = divergence.divergence_matrix(sets)
        path = out / f"divergence_{method}.csv"
        divergence.write_divergence_matrix(path, m_labels, matrix)
        written.append(path)

    ordered = [projected[(label, method)]
               for method in PROJECTION_METHODS for label in labels]
    path = out / "projections.csv"
    projections.write_projections(path, ordered)
    written.append(path)

    kde_dir = out / "kde"
    kde_dir.mkdir(parents=True, exist_ok=True)
    for method in PROJECTION_METHODS:
        stacked = np.vstack([projected[(label, method)].points
                             for label in labels])
        bounds = projections.default_bounds(stacked)
        grid = (config.kde_grid, config.kde_grid, bounds)
        for label in labels:
            density, _, _ = projections.kde2d(projected[(label, method)], grid)
            path = kde_dir / f"kde_{method}_{label}.csv"
            projections.write_kde_grid(path, bounds, density)
            written.append(path)

    written.append(_score_svcca(config, datasets, labels))
    log.info("indicators: wrote %d artifacts under %s", len(written), out)
    return written


def _score_svcca(config, datasets, labels):
    """Score net similarity for every ordered base-model pair."""
    _, _, base_status = _read_base_models(config.out_dir / "base_models.csv")
    missing = [label for label in labels if label not in base_status]
    if missing:
        raise DataError(
            f"base model table lacks branches {missing}; rerun "
            f"`transferlab sweep` for this dataset")
    live = [label for label in labels if base_status[label] == "ok"]
    for label in labels:
        if label not in live:
            log.warning("svcca: skipping %s (base model status %r)",
                        label, base_status[label])
    models = {}
    for label in live:
        path = config.out_dir / "checkpoints" / f"model_{label}.ckpt"
        if not path.is_file():
            raise DataError(
                f"base model checkpoint {path} is missing; run "
                f"`transferlab sweep` first")
        models[label] = model_mod.load_model(path)
    scored = []
    for target in live:
        probe = model_mod.encode_inputs(
            list(datasets[target].test), datasets[target].scaler)
        for source in live:
            if source == target:
                continue
            scored.append((source, target, netsim.svcca_score(
                models[source], models[target], probe,
                threshold=config.svcca_threshold)))
    scored.sort(key=lambda item: (item[0], item[1]))
    path = config.out_dir / "svcca.csv"
    netsim.write_svcca(path, scored)
    return path


# ---------------------------------------------------------------- report

def _require(path, stage):
    if not Path(path).is_file():
        raise DataError(
            f"{path} is missing; run `transferlab {stage}` first")
    return path


def _kde_overlays(config, records):
    """Source/target density grids for the best and worst first transfers.

    Both grids of a pair share one bounds rectangle so the overlays are
    directly comparable.  Ties on transferability break toward the
    lexicographically smaller path so reruns pick the same pair.
    """
    ok_first = [r for r in records if r.ok and r.degree == 1]
    if not ok_first:
        log.warning("report: no successful first-degree transfers; "
                    "skipping KDE overlays")
        return {}
    projected = projections.read_projections(
        _require(config.out_dir / "projections.csv", "indicators"))
    best = sorted(ok_first, key=lambda r: (-r.delta_m_relative,
                                           transfer.path_key(r.path)))[0]
    worst = sorted(ok_first, key=lambda r: (r.delta_m_relative,
                                            transfer.path_key(r.path)))[0]
    overlays = {}
    for tag, rec in (("best", best), ("worst", worst)):
        source, target = rec.path[0], rec.target
        try:
            source_set = projected[(source, "tsne")]
            target_set = projected[(target, "tsne")]
        except KeyError as exc:
            raise DataError(
                f"projections.csv lacks a tsne embedding for branch "
                f"{exc.args[0][0]}; rerun `transferlab indicators`") from exc
        stacked = np.vstack([source_set.points, target_set.points])
        bounds = projections.default_bounds(stacked)
        grid = (config.kde_grid, config.kde_grid, bounds)
        for role, sample_set in (("source", source_set),
                                 ("target", target_set)):
            density, _, _ = projections.kde2d(sample_set, grid)
            overlays[f"kde_overlay_{tag}_{source}+{target}_{role}"] = (
                bounds, density)
    return overlays


def cmd_report(config):
    """Join sweep results with indicators and emit the report bundle.

    Reads every input back from the output directory so the stage can
    run in a fresh process; writes out/report (summary.md, CSVs, and the
    best/worst first-transfer KDE overlays).
    """
    out = config.out_dir
    records = transfer.read_sweep(_require(out / "sweep.csv", "sweep"))
    base_mape, base_rmse, base_status = _read_base_models(
        out / "base_models.csv")
    sweep_result = transfer.SweepResult(
        records=tuple(records), base_mape=base_mape, base_rmse=base_rmse,
        base_status=base_status)
    div_matrices = {}
    for representation in ("raw", *PROJECTION_METHODS):
        path = _require(out / f"divergence_{representation}.csv", "indicators")
        labels, matrix = divergence.read_divergence_matrix(path)
        div_matrices[representation] = (labels, matrix)
    svcca_rho = netsim.read_svcca_rho(_require(out / "svcca.csv",
                                               "indicators"))
    rows, excluded = report_mod.build_indicator_rows(
        records, div_matrices, svcca_rho)
    hypothesis_report = report_mod.correlate_indicators(
        rows, n_excluded=excluded)
    overlays = _kde_overlays(config, records)
    written = report_mod.emit_report(
        out / "report", hypothesis_report, sweep_result,
        kde_overlays=overlays, config_lines=summary_config_lines(config))
    log.info("report: wrote %d files under %s", len(written), out / "report")
    return written


def cmd_all(config):
    """Run generate (synthetic mode), sweep, indicators, and report."""
    if config.mode == "synthetic":
        cmd_generate(config)
    datasets = load_datasets(config)
    cmd_sweep(config, datasets)
    cmd_indicators(config, datasets)
    return cmd_report(config)
