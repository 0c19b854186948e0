import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixzone.errors import ConfigError, DuplicateTimestamp, FormatError, RangeError
from mixzone.features import (
    N_FEATURES,
    CellIndexSeries,
    assemble_features,
    build_features,
    feature_column,
    ingest_index_series,
    monthly_average,
    read_features_csv,
    write_features_csv,
    write_series_csv,
)
from mixzone.synthetic import generate_series

HEADER = "cell_id,lat,lon,time,chi_a,chi_o,chi_h\n"


def ingest(text):
    return ingest_index_series(io.StringIO(HEADER + text), name="mem")


def month_grid(value=0.5):
    return np.full((12, 3), value)


class TestIngest:
    def test_two_cells_two_times(self):
        series = ingest(
            "2,10,20,2011-01-01T03:00:00Z,0.1,0.2,0.3\n"
            "1,-5,100,2011-01-01T00:00:00Z,0.4,0.5,0.6\n"
            "2,10,20,2011-01-01T00:00:00Z,0.7,0.8,0.9\n"
            "1,-5,100,2011-01-01T03:00:00Z,0.1,0.1,0.1\n"
        )
        assert [s.cell_id for s in series] == [1, 2]
        assert [len(s) for s in series] == [2, 2]
        # time-sorted within the cell
        np.testing.assert_array_equal(series[1].values[0], [0.7, 0.8, 0.9])

    def test_empty_field_is_missing(self):
        (s,) = ingest("1,0,0,2011-03-01T00:00:00Z,0.1,,0.3\n")
        assert np.isnan(s.values[0, 1])
        assert s.values[0, 0] == 0.1

    def test_three_hourly_year_has_2920_samples(self, tmp_path):
        s = generate_series(1, 0.0, 0.0, month_grid())
        path = tmp_path / "s.csv"
        write_series_csv(path, [s])
        (back,) = ingest_index_series(path)
        assert len(back) == 2920

    def test_duplicate_timestamp(self):
        with pytest.raises(DuplicateTimestamp, match="rows 2 and 3"):
            ingest("1,0,0,2011-01-01T00:00:00Z,0.1,0.1,0.1\n1,0,0,2011-01-01T00:00:00+00:00,0.2,0.2,0.2\n")

    def test_out_of_range(self):
        with pytest.raises(RangeError, match="row 2"):
            ingest("1,0,0,2011-01-01T00:00:00Z,1.1,0.1,0.1\n")

    def test_slack_is_clipped(self):
        (s,) = ingest("1,0,0,2011-01-01T00:00:00Z,1.0000000001,-0.0000000001,0.5\n")
        np.testing.assert_array_equal(s.values[0], [1.0, 0.0, 0.5])

    @pytest.mark.parametrize(
        "row",
        [
            "1,0,0,notatime,0.1,0.1,0.1\n",
            "x,0,0,2011-01-01T00:00:00Z,0.1,0.1,0.1\n",
            "1,0,0,2011-01-01T00:00:00Z,0.1,0.1\n",
            "1,0,0,2011-01-01T00:00:00Z,abc,0.1,0.1\n",
        ],
    )
    def test_format_errors_name_row(self, row):
        with pytest.raises(FormatError, match="row 2"):
            ingest(row)

    def test_bad_header(self):
        with pytest.raises(FormatError):
            ingest_index_series(io.StringIO("cell,lat\n"))

    def test_bad_latitude(self):
        with pytest.raises(RangeError):
            ingest("1,95,0,2011-01-01T00:00:00Z,0.1,0.1,0.1\n")

    def test_moving_cell(self):
        with pytest.raises(FormatError, match="changes coordinates"):
            ingest("1,0,0,2011-01-01T00:00:00Z,0.1,0.1,0.1\n1,1,0,2011-01-01T03:00:00Z,0.1,0.1,0.1\n")

    def test_offset_converted_to_utc(self):
        (s,) = ingest("1,0,0,2011-02-01T02:00:00+03:00,0.1,0.1,0.1\n")
        # 23:00 UTC on Jan 31
        assert s.months()[0] == 1


class TestMonthlyAverage:
    def test_constant(self):
        s = generate_series(1, 0, 0, np.tile([0.4, 0.4, 0.4], (12, 1)))
        out = monthly_average(s)
        assert np.all(out == 0.4)

    def test_january_count(self):
        s = generate_series(1, 0, 0, month_grid())
        months = s.months()
        assert np.count_nonzero(months == 1) == 31 * 8

    def test_ramp_midpoint(self):
        s = generate_series(1, 0, 0, month_grid())
        jan = s.months() == 1
        ramp = np.linspace(0.0, 1.0, int(jan.sum()))
        values = s.values.copy()
        values[jan, 2] = ramp
        s = CellIndexSeries(1, 0.0, 0.0, s.times, values)
        out = monthly_average(s)
        # arithmetic-mean oracle: a symmetric ramp averages to its midpoint
        assert out[0, 2] == pytest.approx(0.5 * (ramp[0] + ramp[-1]), abs=1e-15)
        assert out[1, 2] == 0.5

    def test_missing_month_strict(self):
        s = generate_series(1, 0, 0, month_grid())
        values = s.values.copy()
        values[s.months() == 7, 1] = np.nan
        out = monthly_average(CellIndexSeries(1, 0.0, 0.0, s.times, values))
        assert np.isnan(out[6, 1])
        assert np.count_nonzero(np.isnan(out)) == 1

    def test_min_count(self):
        s = generate_series(1, 0, 0, month_grid())
        values = s.values.copy()
        feb = np.flatnonzero(s.months() == 2)
        values[feb[10:], 0] = np.nan
        s = CellIndexSeries(1, 0.0, 0.0, s.times, values)
        assert not np.isnan(monthly_average(s, "min_count=10")[1, 0])
        assert np.isnan(monthly_average(s, "min_count=11")[1, 0])

    def test_bad_policy(self):
        with pytest.raises(ConfigError):
            monthly_average(generate_series(1, 0, 0, month_grid()), "lenient")

    def test_leap_year(self):
        s = generate_series(1, 0, 0, month_grid(), year=2012)
        assert np.count_nonzero(s.months() == 2) == 29 * 8

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_mean_within_sample_range(self, seed):
        s = generate_series(1, 0, 0, month_grid(0.3), noise=0.2, seed=seed)
        out = monthly_average(s)
        months = s.months()
        for m in range(1, 13):
            block = s.values[months == m]
            assert np.all(out[m - 1] >= block.min(axis=0))
            assert np.all(out[m - 1] <= block.max(axis=0))


class TestAssemble:
    def test_layout_positions(self):
        m = month_grid(0.5)
        m[0, 0] = 0.1  # chi_a, Jan
        m[0, 1] = 0.2  # chi_o, Jan
        m[11, 2] = 0.9  # chi_h, Dec
        fs = assemble_features([(7, 1.0, 2.0, m)])
        assert fs.features[0, 0] == 0.1
        assert fs.features[0, 12] == 0.2
        assert fs.features[0, 35] == 0.9
        assert feature_column("chi_h", 12) == 35
        assert feature_column("chi_o", 1) == 12
        assert fs.valid[0]

    def test_missing_month_invalidates(self):
        m = month_grid()
        m[4, 1] = np.nan
        fs = assemble_features([(1, 0, 0, m), (2, 0, 0, month_grid())])
        np.testing.assert_array_equal(fs.valid, [False, True])

    def test_empty(self):
        fs = assemble_features([])
        assert fs.n_cells == 0 and fs.features.shape == (0, N_FEATURES)

    def test_sorted_by_cell_id(self):
        fs = assemble_features([(5, 0, 0, month_grid(0.5)), (2, 1, 1, month_grid(0.2))])
        np.testing.assert_array_equal(fs.cell_ids, [2, 5])
        assert fs.features[0, 0] == 0.2

    def test_build_from_series(self):
        monthly = np.linspace(0, 1, 36).reshape(3, 12).T
        fs = build_features([generate_series(3, 10.0, 20.0, monthly)])
        np.testing.assert_allclose(fs.features[0], np.linspace(0, 1, 36), atol=1e-15)


class TestFeatureCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [(i, rng.uniform(-90, 90), rng.uniform(0, 360), rng.random((12, 3))) for i in range(20)]
        rows[3][3][2, 2] = np.nan
        fs = assemble_features(rows)
        path = tmp_path / "f.csv"
        write_features_csv(path, fs)
        back = read_features_csv(path)
        np.testing.assert_array_equal(back.cell_ids, fs.cell_ids)
        np.testing.assert_array_equal(back.valid, fs.valid)
        assert back.lat.tobytes() == fs.lat.tobytes()
        assert back.lon.tobytes() == fs.lon.tobytes()
        assert np.array_equal(back.features, fs.features, equal_nan=True)
        assert back.features[fs.valid].tobytes() == fs.features[fs.valid].tobytes()

    def test_valid_cell_needs_all_features(self, tmp_path):
        path = tmp_path / "f.csv"
        fs = assemble_features([(1, 0, 0, month_grid())])
        write_features_csv(path, fs)
        text = path.read_text().splitlines()
        text[1] = text[1].rsplit(",", 1)[0] + ","
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(FormatError, match="row 2"):
            read_features_csv(path)

    def test_series_round_trip(self, tmp_path):
        s = generate_series(4, -12.5, 301.25, month_grid(0.3), noise=0.1, seed=2)
        path = tmp_path / "s.csv"
        write_series_csv(path, [s])
        (back,) = ingest_index_series(path)
        np.testing.assert_array_equal(back.times, s.times)
        assert back.values.tobytes() == s.values.tobytes()
