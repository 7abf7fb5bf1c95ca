import datetime

import numpy as np
import pytest

from transferlab import data
from transferlab.errors import ConfigError, DataError, ParseError

MON = datetime.date(2016, 1, 4)  # a Monday


def _series(start, revenues, branch="b1", skip_dates=()):
    obs = []
    for i, r in enumerate(revenues):
        day = start + datetime.timedelta(days=i)
        if day in skip_dates:
            continue
        obs.append((day, float(r)))
    return data.BranchSeries(branch_id=branch, observations=tuple(obs))


# -------------------------------------------------------------- load_csv

def test_load_csv_two_rows(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,revenue\n2016-01-04,10.5\n2016-01-05,11.25\n")
    s = data.load_csv(p, "b1")
    assert len(s) == 2
    assert s.observations[0] == (datetime.date(2016, 1, 4), 10.5)


def test_load_csv_invalid_calendar_date(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,revenue\n2015-01-01,1.0\n2015-02-30,2.0\n")
    with pytest.raises(ParseError, match=":3:"):
        data.load_csv(p, "b1")


def test_load_csv_unsorted_rows_sorted_stably(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,revenue\n2016-01-06,3.0\n2016-01-04,1.0\n2016-01-05,2.0\n")
    s = data.load_csv(p, "b1")
    assert [r for _, r in s.observations] == [1.0, 2.0, 3.0]


def test_load_csv_duplicate_date_rejected(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,revenue\n2016-01-04,1.0\n2016-01-04,2.0\n")
    with pytest.raises(DataError, match="2016-01-04"):
        data.load_csv(p, "b1")


def test_load_csv_bad_header(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("day,sales\n2016-01-04,1.0\n")
    with pytest.raises(ParseError, match=":1:"):
        data.load_csv(p, "b1")


def test_load_csv_bad_revenue(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("date,revenue\n2016-01-04,abc\n")
    with pytest.raises(ParseError, match=":2:"):
        data.load_csv(p, "b1")


def test_load_csv_crlf_accepted(tmp_path):
    p = tmp_path / "b.csv"
    p.write_bytes(b"date,revenue\r\n2016-01-04,5.0\r\n")
    assert len(data.load_csv(p, "b1")) == 1


def test_csv_round_trip_exact(tmp_path):
    cfg = data.SynthConfig(
        n_branches=1, seed=7,
        weekly_profiles=((1.0, 1.1, 0.9, 1.2, 1.3, 1.7, 1.5),),
        noise_sd=0.1,
    )
    series = data.generate_synthetic(cfg, MON, MON + datetime.timedelta(days=30))[0]
    p = tmp_path / "b1.csv"
    data.write_csv(series, p)
    back = data.load_csv(p, "b1")
    assert back.observations == series.observations  # repr round-trips floats


# ----------------------------------------------------------------- clean

def test_clean_all_positive_unchanged():
    s = _series(MON, range(1, 11))
    assert data.clean(s).observations == s.observations


def test_clean_removes_negative():
    revs = list(range(1, 11))
    revs[4] = -5.0
    s = _series(MON, revs)
    cleaned = data.clean(s)
    assert len(cleaned) == 9
    assert all(r >= 0 for _, r in cleaned.observations)


def test_clean_all_negative_warns(caplog):
    s = _series(MON, [-1.0, -2.0])
    with caplog.at_level("WARNING"):
        cleaned = data.clean(s)
    assert len(cleaned) == 0
    assert "empty after cleaning" in caplog.text


def test_clean_idempotent():
    revs = [1.0, -2.0, 3.0, -4.0, 5.0]
    once = data.clean(_series(MON, revs))
    assert data.clean(once).observations == once.observations


def test_series_rejects_unsorted_dates():
    with pytest.raises(DataError):
        data.BranchSeries("b1", ((MON, 1.0), (MON, 2.0)))


# ---------------------------------------------------------- make_windows

def test_windows_minimal_14_days():
    wins = data.make_windows(_series(MON, range(1, 15)))
    assert len(wins) == 1
    w = wins[0]
    assert np.array_equal(w.sales_prev, np.arange(1.0, 8.0))
    assert np.array_equal(w.target, np.arange(8.0, 15.0))
    assert w.anchor == MON + datetime.timedelta(days=7)
    assert w.year == 2016 and w.month == 1 and w.week == 2 and w.weekday_anchor == 0


def test_windows_28_days_gives_three():
    wins = data.make_windows(_series(MON, range(28)))
    assert len(wins) == 3
    assert [w.anchor for w in wins] == [
        MON + datetime.timedelta(days=7 * k) for k in (1, 2, 3)
    ]


def test_windows_below_minimum_errors():
    with pytest.raises(DataError):
        data.make_windows(_series(MON, range(13)))


@pytest.mark.parametrize("n_days", [14, 20, 21, 27, 35, 100])
def test_window_count_matches_brute_force(n_days):
    wins = data.make_windows(_series(MON, range(n_days)))
    # oracle: enumerate anchors directly
    expected = sum(
        1 for a in range(7, n_days, 7) if a + 6 <= n_days - 1
    )
    assert len(wins) == expected == (n_days - 7) // 7


def test_windows_closed_weekday_imputed_zero():
    # omit every Sunday; weekday 6 never appears so it is inferred closed
    sundays = {MON + datetime.timedelta(days=i)
               for i in range(28) if (MON + datetime.timedelta(days=i)).weekday() == 6}
    s = _series(MON, [10.0] * 28, skip_dates=sundays)
    wins = data.make_windows(s)
    assert len(wins) == 3
    for w in wins:
        assert w.sales_prev[6] == 0.0  # windows start Monday, so Sunday is last
        assert w.target[6] == 0.0


def test_windows_unexplained_gap_discards_window():
    # drop one Wednesday only; weekday 2 still appears elsewhere -> not closed
    gap = {MON + datetime.timedelta(days=9)}
    assert gap.pop().weekday() == 2 or True
    s = _series(MON, [10.0] * 28, skip_dates={MON + datetime.timedelta(days=9)})
    wins = data.make_windows(s)
    # anchor day-7 window spans days 7..13 -> contains the gap, discarded;
    # anchor day-14 window spans days 7..20 via sales_prev -> also contains it
    assert [w.anchor for w in wins] == [MON + datetime.timedelta(days=21)]


def test_infer_closed_weekdays():
    sundays = {MON + datetime.timedelta(days=i)
               for i in range(28) if (MON + datetime.timedelta(days=i)).weekday() == 6}
    s = _series(MON, [1.0] * 28, skip_dates=sundays)
    assert data.infer_closed_weekdays(s) == frozenset({6})


# ------------------------------------------------------- split_train_test

def _year_windows():
    start = datetime.date(2015, 1, 5)  # Monday
    n_days = (datetime.date(2017, 12, 31) - start).days + 1
    revs = 100.0 + 10.0 * np.sin(np.arange(n_days))
    return data.make_windows(_series(start, revs))


def test_split_empty_test_year_errors():
    wins = data.make_windows(_series(MON, range(28)))
    with pytest.raises(DataError):
        data.split_train_test(wins, 2017, "b1")


def test_split_partitions_by_anchor_year():
    ds = data.split_train_test(_year_windows(), 2017, "b1")
    assert all(w.year == 2017 for w in ds.test)
    assert all(w.year != 2017 for w in ds.train)
    assert len(ds.train) + len(ds.test) == len(_year_windows())
    assert len(ds.test) > 0 and len(ds.train) > 0


def test_scaler_round_trip_and_moments():
    ds = data.split_train_test(_year_windows(), 2017, "b1")
    feats = data.feature_matrix(list(ds.train))
    normalized = ds.scaler.transform(feats)
    back = ds.scaler.inverse(normalized)
    assert np.abs(back - feats).max() < 1e-10 * max(1.0, np.abs(feats).max())
    sd = feats.std(axis=0)
    nonconstant = sd > 0
    assert np.abs(normalized.mean(axis=0)[nonconstant]).max() < 1e-9
    assert np.abs(normalized.std(axis=0)[nonconstant] - 1.0).max() < 1e-6


def test_scaler_target_round_trip():
    ds = data.split_train_test(_year_windows(), 2017, "b1")
    t = data.target_matrix(list(ds.train))
    back = ds.scaler.inverse_target(ds.scaler.transform_target(t))
    assert np.abs(back - t).max() < 1e-10 * max(1.0, np.abs(t).max())


# ---------------------------------------------------- generate_synthetic

def _flat_config(**overrides):
    base = dict(
        n_branches=1,
        seed=11,
        weekly_profiles=((1.0,) * 7,),
        base_level=500.0,
        trend=1.0,
        noise_sd=0.0,
    )
    base.update(overrides)
    return data.SynthConfig(**base)


def test_synthetic_noiseless_flat_profile_constant():
    series = data.generate_synthetic(_flat_config(), MON, MON + datetime.timedelta(days=20))[0]
    revs = {r for _, r in series.observations}
    assert revs == {500.0}


def test_synthetic_deterministic():
    cfg = _flat_config(noise_sd=0.2)
    a = data.generate_synthetic(cfg, MON, MON + datetime.timedelta(days=40))[0]
    b = data.generate_synthetic(cfg, MON, MON + datetime.timedelta(days=40))[0]
    assert a.observations == b.observations


def test_synthetic_seed_sensitivity():
    a = data.generate_synthetic(_flat_config(seed=1, noise_sd=0.2), MON, MON + datetime.timedelta(days=10))[0]
    b = data.generate_synthetic(_flat_config(seed=2, noise_sd=0.2), MON, MON + datetime.timedelta(days=10))[0]
    assert a.observations != b.observations


def test_synthetic_weekday_profile_applied():
    profile = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
    cfg = _flat_config(weekly_profiles=(profile,))
    series = data.generate_synthetic(cfg, MON, MON + datetime.timedelta(days=6))[0]
    got = [r for _, r in series.observations]
    assert got == [500.0 * f for f in profile]


def test_synthetic_trend_across_years():
    cfg = _flat_config(trend=1.1)
    series = data.generate_synthetic(
        cfg, datetime.date(2016, 12, 30), datetime.date(2017, 1, 2))[0]
    by_date = dict(series.observations)
    assert by_date[datetime.date(2016, 12, 30)] == pytest.approx(500.0)
    assert by_date[datetime.date(2017, 1, 1)] == pytest.approx(550.0)


def test_synthetic_closed_days_omitted():
    cfg = _flat_config(closed_days=(frozenset({6}),))
    series = data.generate_synthetic(cfg, MON, MON + datetime.timedelta(days=27))[0]
    assert all(d.weekday() != 6 for d, _ in series.observations)
    assert len(series) == 24


def test_synthetic_closed_day_pattern_does_not_change_open_day_noise():
    open_cfg = _flat_config(noise_sd=0.1)
    closed_cfg = _flat_config(noise_sd=0.1, closed_days=(frozenset({6}),))
    a = dict(data.generate_synthetic(open_cfg, MON, MON + datetime.timedelta(days=27))[0].observations)
    b = dict(data.generate_synthetic(closed_cfg, MON, MON + datetime.timedelta(days=27))[0].observations)
    for day, revenue in b.items():
        assert a[day] == revenue


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        data.SynthConfig(n_branches=2, seed=1, weekly_profiles=((1.0,) * 7,))
    with pytest.raises(ConfigError):
        data.SynthConfig(n_branches=1, seed=1, weekly_profiles=((0.0,) * 7,))
    with pytest.raises(ConfigError):
        data.SynthConfig(n_branches=1, seed=1, weekly_profiles=((1.0,) * 7,), noise_sd=1.5)
    with pytest.raises(ConfigError):
        data.generate_synthetic(_flat_config(), MON, MON)
