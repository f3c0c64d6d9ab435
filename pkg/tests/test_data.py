import datetime as dt
import io
import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronocast.data import (
    DataError, GapError, Normalizer, ParseError, SchemaError, TimeSeries, describe, fit_normalizer,
    future_days, ingest_carbon_monitor, ingest_tidy, load_series, make_windows, split_sizes, window_and_split,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def cm_rows(*rows):
    return "country,date,sector,value\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n"


class TestIngest:
    def test_sums_sectors_per_day(self):
        ts = ingest_carbon_monitor(cm_rows(("China", "01/01/2020", "Power", 10.0), ("China", "01/01/2020", "Industry", 5.0)))
        assert ts.dates == [dt.date(2020, 1, 1)]
        assert ts.values.tolist() == [15.0]

    def test_days_are_sorted(self):
        ts = ingest_carbon_monitor(cm_rows(("China", "02/01/2020", "Power", 1), ("China", "01/01/2020", "Power", 2)))
        assert ts.values.tolist() == [2.0, 1.0]

    def test_gap_is_an_error(self):
        with pytest.raises(GapError):
            ingest_carbon_monitor(cm_rows(("China", "01/01/2020", "Power", 1), ("China", "03/01/2020", "Power", 1)))

    def test_unknown_sector(self):
        with pytest.raises(SchemaError, match="unknown sector"):
            ingest_carbon_monitor(cm_rows(("China", "01/01/2020", "Shipping", 1)))

    def test_duplicate_date_sector(self):
        with pytest.raises(SchemaError, match="duplicate"):
            ingest_carbon_monitor(cm_rows(("China", "01/01/2020", "Power", 1), ("China", "01/01/2020", "Power", 2)))

    @pytest.mark.parametrize("date,value", [("2020-01-01", 1), ("32/01/2020", 1), ("01/01/2020", "abc"), ("01/01/2020", "nan")])
    def test_parse_errors_name_the_row(self, date, value):
        with pytest.raises(ParseError, match="row 0"):
            ingest_carbon_monitor(cm_rows(("China", date, "Power", value)))

    def test_missing_column(self):
        with pytest.raises(SchemaError):
            ingest_carbon_monitor("date,sector,value\n01/01/2020,Power,1\n")

    def test_tidy(self):
        ts = ingest_tidy("date,value\n2020-01-01,30.0\n2020-01-02,31.0\n")
        assert len(ts) == 2 and ts.values.tolist() == [30.0, 31.0]

    def test_tidy_duplicate(self):
        with pytest.raises(SchemaError):
            ingest_tidy("date,value\n2020-01-01,30.0\n2020-01-01,31.0\n")

    def test_tidy_empty(self):
        with pytest.raises(DataError, match="empty series"):
            ingest_tidy("date,value\n")

    def test_tidy_rejects_dmy(self):
        with pytest.raises(ParseError):
            ingest_tidy("date,value\n01/01/2020,30.0\n")

    def test_stream_and_dict_sources(self):
        text = "date,value\n2020-01-01,1\n2020-01-02,2\n"
        assert ingest_tidy(io.StringIO(text)).values.tolist() == [1.0, 2.0]
        assert ingest_tidy([{"date": "2020-01-01", "value": "4"}]).values.tolist() == [4.0]

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_series(tmp_path / "nope.csv")

    def test_synthetic_fixture_shape(self, synthetic_series):
        assert len(synthetic_series) == 1004
        assert synthetic_series.first_date == dt.date(2020, 1, 1)
        assert synthetic_series.last_date == dt.date(2022, 9, 30)


class TestTimeSeries:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([1, 2]), np.array([1.0, math.inf]))

    def test_rejects_duplicates(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([5, 5]), np.array([1.0, 2.0]))

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([], dtype=np.int64), np.array([]))


class TestDescribe:
    def test_symmetric_four(self):
        s = describe([1, 2, 3, 4])
        assert (s.count, s.mean, s.median, s.range, s.total) == (4, 2.5, 2.5, 3.0, 10.0)
        assert s.skewness == pytest.approx(0.0, abs=1e-15)

    def test_four_against_hand_computation(self):
        # n-1 variance is 5/3; the bias-corrected excess kurtosis of 1..4 is -1.2
        s = describe([1, 2, 3, 4])
        assert s.standard_deviation == pytest.approx(math.sqrt(5 / 3), rel=1e-15)
        assert s.standard_error == pytest.approx(math.sqrt(5 / 3) / 2, rel=1e-15)
        assert s.kurtosis == pytest.approx(-1.2, rel=1e-12)

    def test_skew_and_kurtosis_match_adjusted_estimators(self):
        from scipy import stats

        x = np.random.default_rng(4).gamma(2.0, size=500)
        s = describe(x)
        assert s.skewness == pytest.approx(stats.skew(x, bias=False), rel=1e-10)
        assert s.kurtosis == pytest.approx(stats.kurtosis(x, bias=False), rel=1e-10)

    def test_too_short(self):
        with pytest.raises(ValueError):
            describe([1.0])

    def test_field_names(self):
        assert list(describe([1, 2, 3]).to_dict()) == [
            "count", "maximum", "minimum", "mean", "median", "range",
            "skewness", "kurtosis", "standard_deviation", "standard_error", "total",
        ]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=400))
    def test_invariants_and_naive_reference(self, values):
        s = describe(values)
        assert s.range == s.maximum - s.minimum
        assert s.minimum <= s.median <= s.maximum
        assert s.total == pytest.approx(s.count * s.mean, rel=1e-9, abs=1e-9)
        assert s.standard_error == pytest.approx(s.standard_deviation / math.sqrt(s.count), rel=1e-12, abs=1e-300)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        assert s.mean == pytest.approx(mean, rel=1e-10, abs=1e-9)
        assert s.median == statistics.median(values)
        assert s.standard_deviation == pytest.approx(math.sqrt(var), rel=1e-10, abs=1e-9)


class TestNormalizer:
    def test_maps_train_range(self):
        n = fit_normalizer([20, 30, 40])
        assert n.normalize(np.array([20.0, 40.0, 30.0])).tolist() == [0.0, 1.0, 0.5]

    def test_out_of_range_not_clipped(self):
        assert Normalizer(20, 40).normalize(45.0) == 1.25

    def test_round_trip_point(self):
        n = Normalizer(20, 40)
        assert n.denormalize(n.normalize(33.7)) == pytest.approx(33.7, rel=1e-15)

    def test_constant_range(self):
        with pytest.raises(ValueError):
            fit_normalizer([3, 3, 3])

    @given(finite, finite, st.floats(0.01, 1e4), )
    def test_round_trip(self, x, lo, width):
        n = Normalizer(lo, lo + width)
        assert n.denormalize(n.normalize(x)) == pytest.approx(x, rel=1e-12, abs=1e-12 * (abs(lo) + width))


class TestWindowing:
    def test_small_windows(self):
        X, y = make_windows(np.array([1.0, 2, 3, 4, 5]), 3)
        assert X.tolist() == [[1, 2, 3], [2, 3, 4]]
        assert y.tolist() == [4, 5]

    def test_split_sizes_1001(self):
        assert split_sizes(1001) == (800, 100, 101)

    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValueError):
            split_sizes(100, (0.8, 0.1, 0.2))

    def test_too_short(self):
        ts = TimeSeries(np.arange(5), np.arange(5.0) + 1)
        with pytest.raises(ValueError):
            window_and_split(ts, 3)

    def test_1004_points(self, synthetic_series):
        p = window_and_split(synthetic_series, 3)
        assert p.n_samples == 1001
        assert (len(p.train), len(p.validation), len(p.test)) == (800, 100, 101)
        raw = synthetic_series.values[:803]
        assert (p.normalizer.train_min, p.normalizer.train_max) == (raw.min(), raw.max())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(6, 300), st.integers(1, 5), st.integers(0, 10_000))
    def test_split_and_window_properties(self, n, w, seed):
        if n <= w + 2:
            return
        values = np.random.default_rng(seed).normal(size=n).cumsum() + 50
        p = window_and_split(TimeSeries(np.arange(n) + 700_000, values), w)
        N = n - w
        assert p.n_samples == N
        assert p.train.start == 0 and p.train.stop == p.validation.start
        assert p.validation.stop == p.test.start and p.test.stop == N
        assert len(p.train) == math.floor(0.8 * N) and len(p.validation) == math.floor(0.1 * N)
        for i in (0, N - 1):
            assert np.array_equal(p.X[i], p.normalized[i:i + w])
        assert np.allclose(p.normalizer.denormalize(p.y), values[w:], rtol=1e-12)


def test_future_days():
    days = future_days(dt.date(2022, 9, 30), 92)
    assert days[0] == dt.date(2022, 10, 1) and days[-1] == dt.date(2022, 12, 31) and len(days) == 92
