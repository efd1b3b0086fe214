import math

import numpy as np
import pandas as pd
import pytest

from buscast import ingest
from buscast.errors import DataError

from conftest import APC_HEADER, apc_row, write_csv

EARTH = ingest.EARTH_RADIUS_M


class TestLoadApc:
    def test_header_only_gives_empty(self, tmp_path):
        path = write_csv(tmp_path / "apc.csv", APC_HEADER, [])
        assert ingest.load_apc(path).empty

    def test_negative_counts_pass_through(self, tmp_path):
        path = write_csv(tmp_path / "apc.csv", APC_HEADER,
                         [apc_row(board=-3, cont=-3)])
        df = ingest.load_apc(path)
        assert len(df) == 1
        assert df.loc[0, "boardings"] == -3

    def test_duplicate_trip_stop_sequence_rejected(self, tmp_path):
        rows = [apc_row(seq=1), apc_row(seq=1, ts="2023-01-02T08:05:00")]
        path = write_csv(tmp_path / "apc.csv", APC_HEADER, rows)
        with pytest.raises(DataError, match="duplicate"):
            ingest.load_apc(path)

    def test_malformed_row_reports_row_number(self, tmp_path):
        rows = [apc_row(), apc_row(trip="t2", ts="not-a-time")]
        path = write_csv(tmp_path / "apc.csv", APC_HEADER, rows)
        with pytest.raises(DataError, match="rows 2"):
            ingest.load_apc(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing"):
            ingest.load_apc(tmp_path / "nope.csv")

    def test_roundtrip_lossless(self, tiny_apc, tmp_path):
        df = ingest.load_apc(tiny_apc)
        out = tmp_path / "again.csv"
        df2 = df.copy()
        df2["departure_time"] = df2["departure_time"].dt.strftime("%Y-%m-%dT%H:%M:%S")
        df2.to_csv(out, index=False)
        df3 = ingest.load_apc(out)
        pd.testing.assert_frame_equal(df, df3)


class TestOtherLoaders:
    def test_stops_lat_out_of_range(self, tmp_path):
        path = write_csv(tmp_path / "stops.csv", "stop_code,lat,lon,neighborhood,socio_score",
                         [["A", 95, 34.8, "n1", 5]])
        with pytest.raises(DataError):
            ingest.load_stops(path)

    def test_stops_valid_and_unique(self, tmp_path):
        rows = [["A", 31.1, 34.8, "n1", 5], ["B", 31.2, 34.9, "n1", ""],
                ["C", 31.3, 34.7, "n2", 7]]
        path = write_csv(tmp_path / "stops.csv", "stop_code,lat,lon,neighborhood,socio_score", rows)
        df = ingest.load_stops(path)
        assert len(df) == 3
        assert df["stop_code"].is_unique
        assert np.isnan(df.loc[1, "socio_score"])

    def test_duplicate_stop_code_rejected(self, tmp_path):
        rows = [["A", 31.1, 34.8, "n1", 5], ["A", 31.2, 34.9, "n1", 6]]
        path = write_csv(tmp_path / "stops.csv", "stop_code,lat,lon,neighborhood,socio_score", rows)
        with pytest.raises(DataError, match="duplicate"):
            ingest.load_stops(path)

    def test_weather_header_only(self, tmp_path):
        path = write_csv(tmp_path / "w.csv", "timestamp,temperature_c,rain_mm,rel_humidity_pct", [])
        assert ingest.load_weather(path).empty

    def test_weather_humidity_range(self, tmp_path):
        path = write_csv(tmp_path / "w.csv", "timestamp,temperature_c,rain_mm,rel_humidity_pct",
                         [["2023-01-01T00:00:00", 10, 0, 130]])
        with pytest.raises(DataError):
            ingest.load_weather(path)

    def test_facility_kind_closed_set(self, tmp_path):
        path = write_csv(tmp_path / "f.csv", "kind,lat,lon", [["spaceport", 31, 34]])
        with pytest.raises(DataError):
            ingest.load_facilities(path)

    def test_holidays(self, tmp_path):
        path = write_csv(tmp_path / "h.csv", "date", [["2023-01-26"], ["2023-02-14"]])
        hs = ingest.load_holidays(path)
        assert len(hs) == 2

    def test_holiday_duplicates_rejected(self, tmp_path):
        path = write_csv(tmp_path / "h.csv", "date", [["2023-01-26"], ["2023-01-26"]])
        with pytest.raises(DataError, match="duplicate"):
            ingest.load_holidays(path)


class TestHaversine:
    def test_identity(self):
        assert ingest.haversine_m((12.3, 45.6), (12.3, 45.6)) == 0.0

    def test_one_degree_longitude_at_equator(self):
        expected = 2 * math.pi * EARTH / 360
        assert abs(ingest.haversine_m((0, 0), (0, 1)) - expected) < 20

    def test_symmetry_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = (rng.uniform(-80, 80), rng.uniform(-170, 170))
            b = (rng.uniform(-80, 80), rng.uniform(-170, 170))
            assert ingest.haversine_m(a, b) == ingest.haversine_m(b, a)
            assert ingest.haversine_m(a, b) >= 0

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(1)
        lat1, lon1 = rng.uniform(-80, 80, 50), rng.uniform(-170, 170, 50)
        lat2, lon2 = rng.uniform(-80, 80, 50), rng.uniform(-170, 170, 50)
        vec = ingest.haversine_m_vec(lat1, lon1, lat2, lon2)
        for i in range(50):
            scalar = ingest.haversine_m((lat1[i], lon1[i]), (lat2[i], lon2[i]))
            assert abs(vec[i] - scalar) < 1e-6


def offset_north(lat, lon, meters):
    """Point `meters` due north, by inverting the haversine at bearing 0."""
    return lat + math.degrees(meters / EARTH), lon


class TestFacilityCounts:
    def facilities(self, rows):
        return pd.DataFrame(rows, columns=["kind", "lat", "lon"])

    def test_no_facilities(self):
        counts = ingest.facility_counts((31.0, 34.0), self.facilities([]), 200)
        assert set(counts) == set(ingest.FACILITY_KINDS)
        assert all(v == 0 for v in counts.values())

    def test_colocated_one_per_kind(self):
        fac = self.facilities([[k, 31.0, 34.0] for k in ingest.FACILITY_KINDS])
        counts = ingest.facility_counts((31.0, 34.0), fac, 200)
        assert all(counts[k] == 1 for k in ingest.FACILITY_KINDS)

    def test_exact_boundary_inclusive(self):
        lat, lon = offset_north(31.0, 34.0, 200.0)
        fac = self.facilities([["market", lat, lon]])
        counts = ingest.facility_counts((31.0, 34.0), fac, 200.0)
        # the constructed point sits within float error of exactly 200 m
        d = ingest.haversine_m((31.0, 34.0), (lat, lon))
        assert abs(d - 200.0) < 1e-6
        assert counts["market"] == 1

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(2)
        fac = self.facilities(
            [["health", 31.0 + rng.normal(0, 0.002), 34.0 + rng.normal(0, 0.002)]
             for _ in range(40)]
        )
        prev = None
        for r in (50, 100, 200, 400, 800):
            counts = ingest.facility_counts((31.0, 34.0), fac, r)
            if prev is not None:
                assert all(counts[k] >= prev[k] for k in counts)
            prev = counts


class TestJoinWeather:
    def weather(self):
        return pd.DataFrame(
            {
                "timestamp": pd.to_datetime(
                    ["2023-01-02T08:00:00", "2023-01-02T08:10:00"]
                ),
                "temperature_c": [10.0, 12.0],
                "rain_mm": [0.0, 1.0],
                "rel_humidity_pct": [50.0, 60.0],
            }
        )

    def events_at(self, ts):
        from conftest import events_frame
        return events_frame([apc_row(ts=ts)])

    def test_exact_timestamp(self):
        out = ingest.join_weather(self.events_at("2023-01-02T08:10:00"), self.weather())
        assert out.loc[0, "temperature_c"] == 12.0

    def test_tie_goes_to_earlier(self):
        out = ingest.join_weather(self.events_at("2023-01-02T08:05:00"), self.weather())
        assert out.loc[0, "temperature_c"] == 10.0

    def test_outside_tolerance_missing(self):
        out = ingest.join_weather(
            self.events_at("2023-01-02T08:55:00"), self.weather(),
            tol=pd.Timedelta(minutes=30),
        )
        assert np.isnan(out.loc[0, "temperature_c"])

    def test_only_weather_fields_added(self):
        ev = self.events_at("2023-01-02T08:00:00")
        out = ingest.join_weather(ev, self.weather())
        added = set(out.columns) - set(ev.columns)
        assert added == {"temperature_c", "rain_mm", "rel_humidity_pct"}
        pd.testing.assert_frame_equal(out[ev.columns.tolist()], ev)
