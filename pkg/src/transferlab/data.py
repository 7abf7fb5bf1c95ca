"""Branch revenue series: ingestion, synthesis, windowing, and splits.

A *branch* is one store's dated daily revenue sequence.  Model samples
pair the previous seven days of sales with the next seven days as target,
stepping the anchor by seven days so targets never overlap.  The test
split is taken by anchor calendar year; normalization parameters are fit
on the training split only.
"""

import csv
import datetime
import logging
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, DataError, ParseError, StorageError

log = logging.getLogger(__name__)

PERIOD = 7

# feature-matrix column layout (one row per window)
SALES_COLS = slice(0, 7)
YEAR_COL = 7
MONTH_COL = 8
WEEK_COL = 9
WEEKDAY_COL = 10
N_FEATURES = 11
FEATURE_NAMES = tuple(f"s{i}" for i in range(7)) + ("year", "month", "week", "weekday")


@dataclass(frozen=True, eq=False)
class BranchSeries:
    """One branch's revenue observations, strictly increasing in date."""

    branch_id: str
    observations: tuple  # of (datetime.date, float)

    def __post_init__(self):
        prev = None
        for d, _ in self.observations:
            if prev is not None and d <= prev:
                raise DataError(
                    f"branch {self.branch_id}: dates not strictly increasing at {d}"
                )
            prev = d

    def __len__(self):
        return len(self.observations)


@dataclass(frozen=True, eq=False)
class SampleWindow:
    """One model sample: last week's sales plus calendar context -> next week.

    ``anchor`` is the first target day; the calendar fields are derived
    from it (ISO week numbering, Monday=0 weekdays).
    """

    sales_prev: np.ndarray  # (7,)
    target: np.ndarray      # (7,)
    anchor: datetime.date
    year: int
    month: int
    week: int
    weekday_anchor: int


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-column affine normalization fit on training features."""

    mean: np.ndarray  # (N_FEATURES,)
    sd: np.ndarray    # (N_FEATURES,), constant columns get sd 1

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        sd = features.std(axis=0)
        sd = np.where(sd == 0.0, 1.0, sd)
        return cls(mean=mean, sd=sd)

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.sd

    def inverse(self, features):
        return np.asarray(features, dtype=np.float64) * self.sd + self.mean

    def transform_target(self, target):
        """Targets share the sales columns' parameters (same weekday by step-7)."""
        return (np.asarray(target, dtype=np.float64) - self.mean[SALES_COLS]) / self.sd[SALES_COLS]

    def inverse_target(self, target):
        return np.asarray(target, dtype=np.float64) * self.sd[SALES_COLS] + self.mean[SALES_COLS]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Train/test windows for one branch plus the train-fit scaler."""

    branch_id: str
    train: tuple  # of SampleWindow
    test: tuple   # of SampleWindow
    scaler: Scaler


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the seeded synthetic branch generator.

    weekly_profiles holds one 7-tuple of multiplicative weekday factors
    per branch (Monday first).  closed_days, when given, holds one set of
    weekday indices per branch; closed days are omitted from the series.
    """

    n_branches: int
    seed: int
    weekly_profiles: tuple
    base_level: float = 1000.0
    trend: float = 1.0
    noise_sd: float = 0.05
    closed_days: tuple = ()

    def __post_init__(self):
        if self.n_branches < 1:
            raise ConfigError("synthetic generator needs n_branches >= 1")
        if len(self.weekly_profiles) != self.n_branches:
            raise ConfigError(
                f"expected {self.n_branches} weekly profiles, got {len(self.weekly_profiles)}"
            )
        for i, profile in enumerate(self.weekly_profiles):
            if len(profile) != 7:
                raise ConfigError(f"weekly profile {i} must have 7 factors")
            closed = self.closed_days[i] if self.closed_days else frozenset()
            for wd, factor in enumerate(profile):
                if wd not in closed and factor <= 0.0:
                    raise ConfigError(
                        f"weekly profile {i}: factor for open weekday {wd} must be > 0"
                    )
        if not 0.0 <= self.noise_sd < 1.0:
            raise ConfigError("noise_sd must lie in [0, 1)")
        if self.closed_days and len(self.closed_days) != self.n_branches:
            raise ConfigError("closed_days must be empty or one set per branch")

    def branch_ids(self):
        return tuple(f"b{i + 1}" for i in range(self.n_branches))


def branch_feature_vector(window):
    """Flatten a window into the canonical 11-column feature row."""
    return np.concatenate([
        window.sales_prev,
        [float(window.year), float(window.month), float(window.week),
         float(window.weekday_anchor)],
    ])


def feature_matrix(windows):
    """Stack windows into an (n, N_FEATURES) matrix."""
    if not windows:
        raise DataError("cannot build a feature matrix from zero windows")
    return np.stack([branch_feature_vector(w) for w in windows])


def target_matrix(windows):
    if not windows:
        raise DataError("cannot build a target matrix from zero windows")
    return np.stack([w.target for w in windows])


def load_csv(path, branch_id):
    """Read one branch CSV (header ``date,revenue``) into a BranchSeries.

    Rows may arrive unsorted; output is date sorted (stable).  Duplicate
    dates and malformed fields are rejected with the offending line
    number.
    """
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise StorageError(f"cannot open branch CSV {path}: {exc}") from exc
    rows = []
    with handle:
        reader = csv.reader(handle)
        for lineno, fields in enumerate(reader, start=1):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if lineno == 1:
                header = [f.strip().lower() for f in fields]
                if header != ["date", "revenue"]:
                    raise ParseError(
                        f"{path}:1: expected header 'date,revenue', got {','.join(fields)!r}"
                    )
                continue
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
            try:
                day = datetime.date.fromisoformat(fields[0].strip())
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad date {fields[0]!r}: {exc}") from exc
            try:
                revenue = float(fields[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad revenue {fields[1]!r}") from exc
            if not np.isfinite(revenue):
                raise ParseError(f"{path}:{lineno}: non-finite revenue {fields[1]!r}")
            rows.append((day, revenue))
    if not rows:
        raise DataError(f"{path}: no observations")
    rows.sort(key=lambda item: item[0])
    for (d1, _), (d2, _) in zip(rows, rows[1:]):
        if d1 == d2:
            raise DataError(f"{path}: duplicate date {d1.isoformat()}")
    return BranchSeries(branch_id=branch_id, observations=tuple(rows))


def write_csv(series, path):
    """Write a BranchSeries as a branch CSV (floats via repr, round-trip safe)."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("date,revenue\n")
            for day, revenue in series.observations:
                handle.write(f"{day.isoformat()},{float(revenue)!r}\n")
    except OSError as exc:
        raise StorageError(f"cannot write branch CSV {path}: {exc}") from exc


def clean(series):
    """Drop observations with negative revenue; log how many went."""
    kept = tuple(obs for obs in series.observations if obs[1] >= 0.0)
    dropped = len(series.observations) - len(kept)
    if dropped:
        log.info("branch %s: dropped %d negative-revenue rows", series.branch_id, dropped)
    if not kept:
        log.warning("branch %s: empty after cleaning", series.branch_id)
    return BranchSeries(branch_id=series.branch_id, observations=kept)


def infer_closed_weekdays(series):
    """Weekdays that never occur in the series (treated as closed days)."""
    seen = {d.weekday() for d, _ in series.observations}
    return frozenset(range(7)) - frozenset(seen)


def make_windows(series, period=PERIOD, closed_weekdays=None):
    """Cut a cleaned series into step-``period`` forecast windows.

    Each window pairs days [t-period, t-1] (sales_prev) with days
    [t, t+period-1] (target), t stepping by ``period`` from the series
    start.  A missing calendar day inside a window is imputed as revenue
    0 when its weekday is closed for this branch, otherwise the whole
    window is discarded (an unexplained gap is data loss, not signal).
    The covered span extends past the last observation over any trailing
    run of closed weekdays, so a Sunday-closed branch keeps its final
    week.
    """
    if closed_weekdays is None:
        closed_weekdays = infer_closed_weekdays(series)
    if not series.observations:
        raise DataError(f"branch {series.branch_id}: no observations to window")
    by_date = {d: r for d, r in series.observations}
    first = series.observations[0][0]
    last = series.observations[-1][0]
    while (last + datetime.timedelta(days=1)).weekday() in closed_weekdays:
        last += datetime.timedelta(days=1)
    span = (last - first).days + 1
    if span < 2 * period:
        raise DataError(
            f"branch {series.branch_id}: {span} days of data, need at least {2 * period}"
        )
    windows = []
    anchor_offset = period
    while anchor_offset + period - 1 < span:
        values = []
        complete = True
        for offset in range(anchor_offset - period, anchor_offset + period):
            day = first + datetime.timedelta(days=offset)
            if day in by_date:
                values.append(by_date[day])
            elif day.weekday() in closed_weekdays:
                values.append(0.0)
            else:
                complete = False
                break
        if complete:
            anchor = first + datetime.timedelta(days=anchor_offset)
            windows.append(SampleWindow(
                sales_prev=np.array(values[:period]),
                target=np.array(values[period:]),
                anchor=anchor,
                year=anchor.year,
                month=anchor.month,
                week=anchor.isocalendar()[1],
                weekday_anchor=anchor.weekday(),
            ))
        anchor_offset += period
    return windows


def split_train_test(windows, test_year, branch_id):
    """Split windows by anchor year and fit the scaler on the train part."""
    if not windows:
        raise DataError(f"branch {branch_id}: no windows to split")
    train = tuple(w for w in windows if w.year != test_year)
    test = tuple(w for w in windows if w.year == test_year)
    if not train:
        raise DataError(f"branch {branch_id}: empty train split for test year {test_year}")
    if not test:
        raise DataError(f"branch {branch_id}: empty test split for test year {test_year}")
    scaler = Scaler.fit(feature_matrix(list(train)))
    return Dataset(branch_id=branch_id, train=train, test=test, scaler=scaler)


def generate_synthetic(config, start_date, end_date):
    """Produce one deterministic BranchSeries per configured branch.

    revenue(day) = base_level * trend^(years since start) * weekday factor
    * (1 + eps), eps ~ Normal(0, noise_sd) from the branch's own labelled
    stream, so branches are independent and insertion-order free.
    """
    if start_date >= end_date:
        raise ConfigError("generate_synthetic requires start_date < end_date")
    n_days = (end_date - start_date).days + 1
    series_list = []
    for index, branch_id in enumerate(config.branch_ids()):
        profile = config.weekly_profiles[index]
        closed = frozenset(config.closed_days[index]) if config.closed_days else frozenset()
        stream = rng.derive(config.seed, f"synth/{branch_id}")
        noise = stream.normals(n_days, mu=0.0, sigma=config.noise_sd)
        observations = []
        for offset in range(n_days):
            day = start_date + datetime.timedelta(days=offset)
            weekday = day.weekday()
            if weekday in closed:
                continue
            level = config.base_level * config.trend ** (day.year - start_date.year)
            revenue = level * profile[weekday] * (1.0 + noise[offset])
            observations.append((day, revenue))
        series_list.append(BranchSeries(branch_id=branch_id, observations=tuple(observations)))
    return series_list
