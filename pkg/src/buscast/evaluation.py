"""Rolling-origin splits, error metrics, paired tests and data diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .errors import ContractError

BUCKET_EDGES = [0, 10, 20, 30, 40, 50]
METRIC_NAMES = ["mae", "rmse", "mape", "pct_rmse", "smape"]

EXACT_WILCOXON_MAX_N = 25


@dataclass(frozen=True)
class SplitPlan:
    month: str            # "YYYY-MM"
    step: int             # 1 or 2
    train_start: date
    train_end: date       # inclusive
    eval_start: date
    eval_end: date        # inclusive


@dataclass(frozen=True)
class MetricSet:
    mae: float
    rmse: float
    mape: float
    pct_rmse: float
    smape: float
    n: int

    def as_dict(self) -> dict:
        return {
            "mae": self.mae, "rmse": self.rmse, "mape": self.mape,
            "pct_rmse": self.pct_rmse, "smape": self.smape, "n": self.n,
        }


@dataclass(frozen=True)
class PairedTestResult:
    mean_diff: float
    median_diff: float
    statistic: float
    p_value: float
    cliffs_delta: float
    note: str = ""


def _last_day_of_month(year: int, month: int) -> date:
    nxt = date(year + (month == 12), month % 12 + 1, 1)
    return nxt - timedelta(days=1)


def rolling_splits(months, h1: int = 7, h2: int = 7) -> list:
    """Two train/evaluate plans per calendar month.

    `months` is an iterable of "YYYY-MM" strings (or (year, month) pairs).
    For a month ending on day D: step 1 trains on [1st, D-(h1+h2)] and
    evaluates [D-(h1+h2)+1, D-h2]; step 2 extends training through the first
    window and evaluates [D-h2+1, D].
    """
    plans = []
    for m in months:
        if isinstance(m, str):
            year, month = (int(x) for x in m.split("-"))
        else:
            year, month = m
        first = date(year, month, 1)
        last = _last_day_of_month(year, month)
        train1_end = last - timedelta(days=h1 + h2)
        if train1_end < first:
            raise ContractError(
                f"month {year}-{month:02d} too short for H1={h1}, H2={h2}"
            )
        label = f"{year:04d}-{month:02d}"
        plans.append(SplitPlan(
            month=label, step=1,
            train_start=first, train_end=train1_end,
            eval_start=train1_end + timedelta(days=1),
            eval_end=last - timedelta(days=h2),
        ))
        plans.append(SplitPlan(
            month=label, step=2,
            train_start=first, train_end=last - timedelta(days=h2),
            eval_start=last - timedelta(days=h2) + timedelta(days=1),
            eval_end=last,
        ))
    return plans


def complete_months(dates) -> list:
    """Months fully covered by the supplied dates, as "YYYY-MM" strings."""
    ds = {pd.Timestamp(d).date() for d in dates}
    out = []
    for year, month in sorted({(d.year, d.month) for d in ds}):
        first = date(year, month, 1)
        last = _last_day_of_month(year, month)
        span = {first + timedelta(days=i) for i in range((last - first).days + 1)}
        if span <= ds:
            out.append(f"{year:04d}-{month:02d}")
    return out


def metrics(y, yhat) -> MetricSet:
    """The five error measures.

    mape skips zero-target rows; pct_rmse is NaN when mean(y) is zero; smape
    uses the 0-200 percent convention with 0/0 terms defined as 0.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if len(y) != len(yhat):
        raise ContractError("length mismatch")
    if len(y) == 0:
        raise ContractError("empty input")
    err = yhat - y
    abs_err = np.abs(err)
    mae = float(abs_err.mean())
    rmse = float(np.sqrt(np.mean(err ** 2)))
    nz = y != 0
    mape = float(np.mean(abs_err[nz] / np.abs(y[nz])) * 100.0) if nz.any() else float("nan")
    mean_y = y.mean()
    pct_rmse = float(rmse / mean_y * 100.0) if mean_y != 0 else float("nan")
    denom = np.abs(y) + np.abs(yhat)
    terms = np.where(denom == 0, 0.0, 2.0 * abs_err / np.where(denom == 0, 1.0, denom))
    smape = float(terms.mean() * 100.0)
    return MetricSet(mae=mae, rmse=rmse, mape=mape, pct_rmse=pct_rmse,
                     smape=smape, n=len(y))


def bucket_of(y, edges=BUCKET_EDGES) -> np.ndarray:
    """Bucket index by true value: 0..10 -> 0, 11..20 -> 1, ... (right-inclusive)."""
    return np.searchsorted(np.asarray(edges[1:], dtype=float), np.asarray(y, dtype=float), side="left")


def bucket_label(i, edges=BUCKET_EDGES) -> str:
    lo = edges[i] + (1 if i else 0)
    return f"{lo}-{edges[i + 1]}"


def bucketed_metrics(y, yhat, edges=BUCKET_EDGES) -> dict:
    """MetricSet per occupied ridership bucket, keyed by label like '11-20'."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    idx = bucket_of(y, edges)
    out = {}
    for b in range(len(edges) - 1):
        rows = (idx == b) & (y >= edges[0]) & (y <= edges[-1])
        if rows.any():
            out[bucket_label(b, edges)] = metrics(y[rows], yhat[rows])
    return out


def hourly_metrics(y, yhat, hours) -> dict:
    """MetricSet per occupied hour of day (0-23)."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    hours = np.asarray(hours)
    if not (len(y) == len(yhat) == len(hours)):
        raise ContractError("length mismatch")
    out = {}
    for h in range(24):
        rows = hours == h
        if rows.any():
            out[h] = metrics(y[rows], yhat[rows])
    return out


def _midranks(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(x, y):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped, ties get midranks, W = min(W+, W-). For
    n <= 25 the p-value is exact: P(min(W+, W-) <= W_observed) under the
    uniform sign-assignment null (counted by dynamic programming over doubled
    ranks). Larger n uses the normal approximation with tie correction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ContractError("length mismatch")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ContractError("all differences are zero")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        p = _exact_min_rank_p(ranks, w)
    else:
        mean = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(counts ** 3 - counts)) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        z = (w - mean) / math.sqrt(var)
        p = min(1.0, 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0)))
    return w, p


def _exact_min_rank_p(ranks, w_obs) -> float:
    """P(min(W+, W-) <= w_obs) by counting sign assignments.

    Works in doubled-rank units so midranks (k.5) stay integral.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    target = int(math.floor(round(2 * w_obs, 9)))
    low = counts[: min(target, total) + 1].sum()
    high = counts[max(total - target, 0):].sum()
    overlap = 0.0
    if target >= total - target:
        overlap = counts[total - target: target + 1].sum()
    return float(min(1.0, (low + high - overlap) / counts.sum()))


def cliffs_delta(x, y) -> float:
    """Dominance effect size: (#{x_i > y_j} - #{x_i < y_j}) / (|x| |y|)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0 or len(y) == 0:
        raise ContractError("empty input")
    gt = (x[:, None] > y[None, :]).sum()
    lt = (x[:, None] < y[None, :]).sum()
    return float((int(gt) - int(lt)) / (len(x) * len(y)))


def compare_frameworks(polygon_mae, global_mae) -> PairedTestResult:
    """Paired comparison of per-split MAE series (polygon minus global)."""
    a = np.asarray(polygon_mae, dtype=float)
    b = np.asarray(global_mae, dtype=float)
    if len(a) != len(b):
        raise ContractError("length mismatch")
    diff = a - b
    delta = cliffs_delta(a, b)
    try:
        w, p = wilcoxon_signed_rank(a, b)
        note = ""
    except ContractError:
        w, p = float("nan"), float("nan")
        note = "no_difference"
    return PairedTestResult(
        mean_diff=float(diff.mean()),
        median_diff=float(np.median(diff)),
        statistic=w,
        p_value=p,
        cliffs_delta=delta,
        note=note,
    )


def coefficient_of_variation(values) -> float:
    """sigma/mu * 100; NaN flag when the mean is zero."""
    v = np.asarray(values, dtype=float)
    mu = v.mean()
    if mu == 0:
        return float("nan")
    return float(v.std() / mu * 100.0)


def robustness_ratios(values) -> dict:
    """MAD/median and IQR/median; NaN flags for a zero median."""
    v = np.asarray(values, dtype=float)
    med = float(np.median(v))
    mad = float(np.median(np.abs(v - med)))
    q1, q3 = np.percentile(v, [25, 75])
    if med == 0:
        return {"mad_over_median": float("nan"), "iqr_over_median": float("nan")}
    return {"mad_over_median": mad / med, "iqr_over_median": (q3 - q1) / med}


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return float("nan")
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def spearman(x, y) -> float:
    return pearson(_midranks(x), _midranks(y))


def kendall_tau(x, y) -> float:
    """Kendall tau-b (tie-corrected) by pair counting."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    prod = dx[iu] * dy[iu]
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    ties_x = int(((dx[iu] == 0) & (dy[iu] != 0)).sum())
    ties_y = int(((dy[iu] == 0) & (dx[iu] != 0)).sum())
    denom = math.sqrt(
        (concordant + discordant + ties_x) * (concordant + discordant + ties_y)
    )
    if denom == 0:
        return float("nan")
    return float((concordant - discordant) / denom)


def ccc(x, y) -> float:
    """Concordance correlation: 2*rho*sx*sy / (sx^2 + sy^2 + (mx - my)^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = x.std(), y.std()
    r = pearson(x, y)
    denom = sx ** 2 + sy ** 2 + (x.mean() - y.mean()) ** 2
    if denom == 0 or math.isnan(r):
        return float("nan")
    return float(2.0 * r * sx * sy / denom)


def association(x, y) -> dict:
    return {
        "pearson": pearson(x, y),
        "spearman": spearman(x, y),
        "kendall_tau": kendall_tau(x, y),
        "ccc": ccc(x, y),
    }


def diagnostics(train_events: pd.DataFrame, test_events: pd.DataFrame) -> dict:
    """Data-stability report comparing a training window to its test window.

    Returns coefficient-of-variation tables per (route, hour) for both sets,
    MAD/median and IQR/median ratios per set, and association statistics
    between the per-(route, hour) mean ridership of the two sets.
    """
    if train_events.empty or test_events.empty:
        raise ContractError("diagnostics needs nonempty train and test events")

    def cv_table(events):
        g = events.groupby(
            ["route_id", events["departure_time"].dt.hour.rename("hour")]
        )["continuing"]
        rows = [
            (route, int(hour), coefficient_of_variation(s.values), len(s))
            for (route, hour), s in g
        ]
        return pd.DataFrame(rows, columns=["route_id", "hour", "cv_pct", "n"])

    train_cv = cv_table(train_events)
    test_cv = cv_table(test_events)
    tr_mean = train_events.groupby(
        ["route_id", train_events["departure_time"].dt.hour.rename("hour")]
    )["continuing"].mean()
    te_mean = test_events.groupby(
        ["route_id", test_events["departure_time"].dt.hour.rename("hour")]
    )["continuing"].mean()
    common = tr_mean.index.intersection(te_mean.index)
    assoc = (
        association(tr_mean.loc[common].values, te_mean.loc[common].values)
        if len(common) >= 2
        else {k: float("nan") for k in ("pearson", "spearman", "kendall_tau", "ccc")}
    )
    return {
        "cv_train": train_cv,
        "cv_test": test_cv,
        "train_robustness": robustness_ratios(train_events["continuing"].values),
        "test_robustness": robustness_ratios(test_events["continuing"].values),
        **assoc,
    }


def avl_cross_check(apc_counts, avl_counts, edges=BUCKET_EDGES) -> dict:
    """Cross-source comparison of trip-level boarding counts.

    Expects aligned arrays (one pair per trip). Reports the association
    statistics plus a per-bucket error table (bucketed by the reference
    counts in `avl_counts`).
    """
    apc = np.asarray(apc_counts, dtype=float)
    avl = np.asarray(avl_counts, dtype=float)
    if len(apc) != len(avl) or len(apc) == 0:
        raise ContractError("aligned nonempty count arrays required")
    table = []
    idx = bucket_of(np.clip(avl, edges[0], edges[-1]), edges)
    for b in range(len(edges) - 1):
        rows = idx == b
        if not rows.any():
            continue
        m = metrics(avl[rows], apc[rows])
        table.append({
            "bucket": bucket_label(b, edges), "n": int(rows.sum()),
            "mae": m.mae, "rmse": m.rmse, "mape": m.mape,
            "avl_mean": float(avl[rows].mean()), "apc_mean": float(apc[rows].mean()),
        })
    return {**association(apc, avl), "bucket_table": pd.DataFrame(table)}


def error_demand_regression(mean_ridership, mae_values):
    """Simple OLS of per-stop MAE on per-stop mean ridership: (slope, intercept, r2)."""
    x = np.asarray(mean_ridership, dtype=float)
    y = np.asarray(mae_values, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ContractError("need at least 3 aligned stops")
    vx = x.var()
    if vx == 0:
        raise ContractError("degenerate variance in ridership")
    slope = float(((x - x.mean()) * (y - y.mean())).mean() / vx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    vy = y.var()
    r2 = 1.0 if vy == 0 else float(1.0 - resid.var() / vy)
    return slope, intercept, r2
