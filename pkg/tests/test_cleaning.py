import numpy as np
import pandas as pd
import pytest

from buscast import cleaning
from buscast.errors import ContractError

from conftest import events_frame, simple_trip


def three_trips():
    rows = (simple_trip("t1")
            + simple_trip("t2", conts=(3, -1, 0))
            + simple_trip("t3"))
    return events_frame(rows)


class TestNegative:
    def test_all_nonnegative_kept(self):
        ev = events_frame(simple_trip("t1"))
        kept, dropped = cleaning.drop_negative_rides(ev)
        assert len(kept) == 3 and dropped == []

    def test_single_negative_drops_whole_ride(self):
        ev = events_frame(simple_trip("t1", conts=(3, -1, 0)))
        kept, dropped = cleaning.drop_negative_rides(ev)
        assert kept.empty and dropped == ["t1"]

    def test_three_rides_one_negative(self):
        kept, dropped = cleaning.drop_negative_rides(three_trips())
        assert sorted(kept["trip_key"].unique()) == ["t1", "t3"]
        assert dropped == ["t2"]


class TestCapacity:
    def test_boundary_50_kept(self):
        ev = events_frame(simple_trip("t1", boards=(50, 0, 0), conts=(50, 50, 0),
                                      alights=(0, 0, 50)))
        kept, dropped = cleaning.capacity_filter(ev, 50)
        assert len(kept) == 3 and dropped == []

    def test_51_dropped(self):
        ev = events_frame(simple_trip("t1", boards=(51, 0, 0), conts=(50, 50, 0),
                                      alights=(1, 0, 50)))
        kept, dropped = cleaning.capacity_filter(ev, 50)
        assert kept.empty and dropped == ["t1"]

    def test_infinite_delta_is_identity(self):
        ev = three_trips()
        kept, dropped = cleaning.capacity_filter(ev, np.inf)
        assert dropped == [] and len(kept) == len(ev)


class TestDiscrepancy:
    def test_balanced(self):
        d = cleaning.ride_discrepancy(events_frame(simple_trip("t1")))
        assert d.tb == 4 and d.ta == 4
        assert d.pct_diff == 0.0 and d.abs_diff == 0

    def test_hand_arithmetic(self):
        ev = events_frame(simple_trip("t1", boards=(6, 6, 0), alights=(0, 4, 4),
                                      conts=(6, 8, 4)))
        d = cleaning.ride_discrepancy(ev)
        assert (d.tb, d.ta, d.abs_diff) == (12, 8, 4)
        assert abs(d.pct_diff - 100 * 4 / 12) < 1e-12

    def test_degenerate_zero(self):
        ev = events_frame(simple_trip("t1", boards=(0, 0, 0), alights=(0, 0, 0),
                                      conts=(0, 0, 0)))
        d = cleaning.ride_discrepancy(ev)
        assert d.pct_diff == 0.0 and d.abs_diff == 0


class TestQuartiles:
    def test_identical_values(self):
        disc = pd.DataFrame({"trip_key": list("abcd"), "tb": 1, "ta": 1,
                             "pct_diff": [5.0] * 4, "abs_diff": [2] * 4})
        th = cleaning.iqr_thresholds(disc)
        assert th.pct_upper == th.pct_lower == 5.0
        assert th.abs_upper == th.abs_lower == 2.0

    def test_1_to_100(self):
        vals = np.arange(1.0, 101.0)
        disc = pd.DataFrame({"trip_key": [str(i) for i in range(100)],
                             "tb": 0, "ta": 0, "pct_diff": vals, "abs_diff": vals})
        th = cleaning.iqr_thresholds(disc)
        assert th.pct_upper == pytest.approx(149.5)
        q1, q3 = cleaning.quartiles(vals)
        assert (q1, q3) == (25.75, 75.25)

    def test_quartile_oracle(self):
        # order-statistics oracle: sort, interpolate positions by hand
        rng = np.random.default_rng(3)
        for _ in range(50):
            vals = rng.uniform(0, 100, size=rng.integers(4, 60))
            q1, q3 = cleaning.quartiles(vals)
            s = np.sort(vals)
            n = len(s)
            for q, got in ((0.25, q1), (0.75, q3)):
                pos = (n - 1) * q
                lo, hi = int(np.floor(pos)), int(np.ceil(pos))
                expect = s[lo] + (pos - lo) * (s[hi] - s[lo])
                assert got == pytest.approx(expect, abs=1e-9)

    def test_too_few_rides(self):
        disc = pd.DataFrame({"trip_key": list("abc"), "tb": 1, "ta": 1,
                             "pct_diff": [1.0, 2.0, 3.0], "abs_diff": [1, 2, 3]})
        with pytest.raises(ContractError):
            cleaning.iqr_thresholds(disc)


def make_table(rows):
    return pd.DataFrame(rows, columns=["trip_key", "tb", "ta", "pct_diff", "abs_diff"])


class TestDualCriterion:
    thresholds = cleaning.IqrThresholds(pct_upper=50.0, pct_lower=0.0,
                                        abs_upper=10.0, abs_lower=0.0)

    def test_pct_extreme_abs_normal_kept(self):
        t = make_table([("t1", 10, 2, 80.0, 8)])
        kept, dropped = cleaning.dual_criterion_filter(t, self.thresholds)
        assert len(kept) == 1 and dropped.empty

    def test_both_extreme_dropped(self):
        t = make_table([("t1", 100, 2, 98.0, 98)])
        kept, dropped = cleaning.dual_criterion_filter(t, self.thresholds)
        assert kept.empty and list(dropped["trip_key"]) == ["t1"]

    def test_neither_extreme_kept(self):
        t = make_table([("t1", 10, 9, 10.0, 1)])
        kept, dropped = cleaning.dual_criterion_filter(t, self.thresholds)
        assert len(kept) == 1 and dropped.empty

    def test_partition_exact(self):
        rng = np.random.default_rng(4)
        rows = [(f"t{i}", 0, 0, rng.uniform(0, 100), rng.integers(0, 100))
                for i in range(200)]
        t = make_table(rows)
        kept, dropped = cleaning.dual_criterion_filter(t, self.thresholds)
        assert len(kept) + len(dropped) == len(t)
        assert set(kept["trip_key"]) | set(dropped["trip_key"]) == set(t["trip_key"])
        assert not set(kept["trip_key"]) & set(dropped["trip_key"])

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        rows = [(f"t{i}", 0, 0, rng.uniform(0, 100), rng.integers(0, 100))
                for i in range(100)]
        kept1, _ = cleaning.dual_criterion_filter(make_table(rows), self.thresholds)
        kept2, dropped2 = cleaning.dual_criterion_filter(kept1, self.thresholds)
        assert dropped2.empty
        pd.testing.assert_frame_equal(kept1, kept2)


class TestNoLeakage:
    def test_thresholds_are_pure_values(self):
        train = events_frame(
            simple_trip("t1") + simple_trip("t2") + simple_trip("t3")
            + simple_trip("t4", boards=(6, 6, 0), alights=(0, 4, 4), conts=(6, 8, 4))
        )
        th = cleaning.iqr_thresholds(cleaning.discrepancy_table(train))
        other = events_frame(simple_trip("x1", boards=(9, 9, 0), alights=(0, 1, 1),
                                         conts=(9, 17, 16)))
        kept_a, drop_a = cleaning.apply_discrepancy_filter(other, th)
        # mutating the "training" events afterwards cannot change the outcome
        train.loc[:, "boardings"] = 999
        kept_b, drop_b = cleaning.apply_discrepancy_filter(other, th)
        pd.testing.assert_frame_equal(kept_a, kept_b)
        pd.testing.assert_frame_equal(drop_a, drop_b)


class TestFilterIdempotence:
    def test_negative_then_negative(self):
        ev = three_trips()
        once, dropped1 = cleaning.drop_negative_rides(ev)
        twice, dropped2 = cleaning.drop_negative_rides(once)
        assert dropped2 == []
        pd.testing.assert_frame_equal(once, twice)

    def test_capacity_then_capacity(self):
        ev = events_frame(
            simple_trip("t1", boards=(60, 0, 0), conts=(50, 50, 0), alights=(10, 0, 50))
            + simple_trip("t2")
        )
        once, dropped1 = cleaning.capacity_filter(ev, 50)
        twice, dropped2 = cleaning.capacity_filter(once, 50)
        assert dropped1 == ["t1"] and dropped2 == []
        pd.testing.assert_frame_equal(once, twice)


class TestReport:
    def test_report_schema(self):
        ev = three_trips()
        disc = cleaning.discrepancy_table(ev)
        kept, neg = cleaning.drop_negative_rides(ev)
        kept, cap = cleaning.capacity_filter(kept, 50)
        report = cleaning.cleaning_report(neg, cap, make_table([]), disc)
        assert list(report.columns) == ["trip_key", "reason", "tb", "ta",
                                        "pct_diff", "abs_diff"]
        assert set(report["reason"]) <= {"negative", "capacity", "dual_iqr"}
        assert list(report.loc[report["reason"] == "negative", "trip_key"]) == ["t2"]
