"""Report writers: delimited outputs plus rendered matplotlib figures.

Every table is sorted deterministically before writing and figures are saved
with fixed metadata, so identical runs produce byte-identical report trees.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from . import cleaning, evaluation
from .evaluation import BUCKET_EDGES

PNG_META = {"Software": "buscast"}
FIGSIZE = (8.0, 4.5)
DPI = 110


def _save(fig, path):
    fig.savefig(path, dpi=DPI, metadata=PNG_META)
    plt.close(fig)


def model_label(framework: str, cfg_model: str) -> str:
    return "train_mean" if framework == "baseline" else cfg_model


# ------------------------------------------------------------------ tables

def write_cleaning(out: Path, cleaned: dict, split_results) -> None:
    iqr_frames = [r.iqr_dropped for r in split_results if len(r.iqr_dropped)]
    iqr = (
        pd.concat(iqr_frames, ignore_index=True).drop_duplicates("trip_key")
        if iqr_frames else pd.DataFrame(columns=["trip_key", "tb", "ta", "pct_diff", "abs_diff"])
    )
    table = cleaning.cleaning_report(
        cleaned["negative_keys"], cleaned["capacity_keys"], iqr,
        cleaned["raw_discrepancies"],
    )
    table.sort_values(["reason", "trip_key"], kind="stable").to_csv(
        out / "cleaning.csv", index=False
    )


def write_splits(out: Path, split_results) -> None:
    rows = [
        {
            "split": r.label, "month": r.plan.month, "step": r.plan.step,
            "train_start": r.plan.train_start.isoformat(),
            "train_end": r.plan.train_end.isoformat(),
            "eval_start": r.plan.eval_start.isoformat(),
            "eval_end": r.plan.eval_end.isoformat(),
            "train_rows": r.train_rows, "eval_rows": r.eval_rows,
            "n_regions": r.partition.p, "chosen_k": r.chosen_k,
            "tau": r.partition.tau,
        }
        for r in split_results
    ]
    pd.DataFrame(rows).to_csv(out / "splits.csv", index=False)


def write_partitions(out: Path, split_results) -> None:
    from .regions import partition_export

    pdir = out / "partitions"
    pdir.mkdir(exist_ok=True)
    for r in split_results:
        partition_export(r.partition, r.chosen_k).to_csv(
            pdir / f"{r.label}.csv", index=False
        )


def write_metrics(out: Path, split_results) -> pd.DataFrame:
    rows = []
    for r in split_results:
        for (framework, regime), entry in sorted(r.results.items()):
            m = evaluation.metrics(r.y_true, entry["pred"])
            rows.append(
                {
                    "split": r.label, "month": r.plan.month, "step": r.plan.step,
                    "framework": framework, "regime": regime, **m.as_dict(),
                }
            )
    df = pd.DataFrame(rows).sort_values(
        ["split", "framework", "regime"], kind="stable"
    ).reset_index(drop=True)
    df.to_csv(out / "metrics.csv", index=False)
    return df


def _stratified_frames(split_results, stratifier):
    """Pooled and mean-of-splits stratum metrics per (framework, regime)."""
    combos = sorted({key for r in split_results for key in r.results})
    pooled_rows, split_rows = [], []
    for framework, regime in combos:
        ys, preds, strata = [], [], []
        per_split = {}
        for r in split_results:
            entry = r.results.get((framework, regime))
            if entry is None:
                continue
            y, pred, strat = r.y_true, entry["pred"], stratifier(r)
            ys.append(y)
            preds.append(pred)
            strata.append(strat)
            for stratum, m in _by_stratum(y, pred, strat).items():
                per_split.setdefault(stratum, []).append(m)
        if not ys:
            continue
        pooled = _by_stratum(
            np.concatenate(ys), np.concatenate(preds), np.concatenate(strata)
        )
        for stratum, m in sorted(pooled.items(), key=lambda kv: str(kv[0])):
            pooled_rows.append(
                {"mode": "pooled", "framework": framework, "regime": regime,
                 "stratum": stratum, **m.as_dict()}
            )
        for stratum, ms in sorted(per_split.items(), key=lambda kv: str(kv[0])):
            agg = {
                name: float(np.nanmean([getattr(m, name) for m in ms]))
                for name in evaluation.METRIC_NAMES
            }
            split_rows.append(
                {"mode": "mean_of_splits", "framework": framework, "regime": regime,
                 "stratum": stratum, **agg, "n": int(sum(m.n for m in ms))}
            )
    return pd.DataFrame(pooled_rows + split_rows)


def _by_stratum(y, pred, strat) -> dict:
    out = {}
    for s in pd.unique(strat):
        rows = strat == s
        out[s] = evaluation.metrics(y[rows], pred[rows])
    return out


def write_stratified(out: Path, split_results) -> None:
    hourly = _stratified_frames(split_results, lambda r: r.eval_meta["hour"].values)
    hourly.to_csv(out / "stratified_hourly.csv", index=False)
    buckets = _stratified_frames(
        split_results,
        lambda r: np.array(
            [evaluation.bucket_label(i) for i in evaluation.bucket_of(r.y_true)]
        ),
    )
    buckets.to_csv(out / "stratified_buckets.csv", index=False)


def write_monthly(out: Path, split_results) -> None:
    combos = sorted({key for r in split_results for key in r.results})
    months = sorted({r.plan.month for r in split_results})
    rows = []
    for month in months:
        subset = [r for r in split_results if r.plan.month == month]
        for framework, regime in combos:
            ys = [r.y_true for r in subset if (framework, regime) in r.results]
            preds = [
                r.results[(framework, regime)]["pred"]
                for r in subset if (framework, regime) in r.results
            ]
            if not ys:
                continue
            m = evaluation.metrics(np.concatenate(ys), np.concatenate(preds))
            rows.append(
                {"month": month, "framework": framework, "regime": regime,
                 **m.as_dict()}
            )
    pd.DataFrame(rows).to_csv(out / "monthly.csv", index=False)


def write_tests(out: Path, metrics_df: pd.DataFrame, cfg) -> None:
    rows = []
    df = metrics_df.loc[metrics_df["framework"] != "baseline"]

    def series(framework, regime):
        sub = df.loc[(df["framework"] == framework) & (df["regime"] == regime)]
        return sub.sort_values("split")["mae"].values

    frameworks = sorted(df["framework"].unique())
    regimes = sorted(df["regime"].unique())
    if {"polygon", "global"} <= set(frameworks):
        for regime in regimes:
            a, b = series("polygon", regime), series("global", regime)
            if len(a) and len(a) == len(b):
                t = evaluation.compare_frameworks(a, b)
                rows.append(
                    {"comparison": "polygon_vs_global", "regime": regime,
                     "model": cfg.model, "mean_diff": t.mean_diff,
                     "median_diff": t.median_diff, "statistic": t.statistic,
                     "p_value": t.p_value, "cliffs_delta": t.cliffs_delta,
                     "note": t.note}
                )
    if {"with_id", "without_id"} <= set(regimes):
        for framework in frameworks:
            a, b = series(framework, "with_id"), series(framework, "without_id")
            if len(a) and len(a) == len(b):
                t = evaluation.compare_frameworks(a, b)
                rows.append(
                    {"comparison": "with_id_vs_without_id", "regime": framework,
                     "model": cfg.model, "mean_diff": t.mean_diff,
                     "median_diff": t.median_diff, "statistic": t.statistic,
                     "p_value": t.p_value, "cliffs_delta": t.cliffs_delta,
                     "note": t.note}
                )
    pd.DataFrame(
        rows, columns=["comparison", "regime", "model", "mean_diff", "median_diff",
                       "statistic", "p_value", "cliffs_delta", "note"],
    ).to_csv(out / "tests.csv", index=False)


def write_diagnostics(out: Path, split_results) -> None:
    rows = []
    cv_parts = []
    for r in split_results:
        d = r.diagnostics
        rows.append(
            {
                "split": r.label,
                "pearson": d["pearson"], "spearman": d["spearman"],
                "kendall_tau": d["kendall_tau"], "ccc": d["ccc"],
                "train_mad_over_median": d["train_robustness"]["mad_over_median"],
                "train_iqr_over_median": d["train_robustness"]["iqr_over_median"],
                "test_mad_over_median": d["test_robustness"]["mad_over_median"],
                "test_iqr_over_median": d["test_robustness"]["iqr_over_median"],
            }
        )
        for scope in ("train", "test"):
            cv = d[f"cv_{scope}"].copy()
            cv.insert(0, "scope", scope)
            cv.insert(0, "split", r.label)
            cv_parts.append(cv)
    pd.DataFrame(rows).to_csv(out / "diagnostics.csv", index=False)
    pd.concat(cv_parts, ignore_index=True).to_csv(
        out / "cv_by_route_hour.csv", index=False
    )


def write_error_demand(out: Path, split_results, pipe) -> None:
    framework, regime = pipe.primary_target()
    parts = []
    for r in split_results:
        entry = r.results.get((framework, regime))
        if entry is None:
            continue
        parts.append(
            pd.DataFrame(
                {
                    "stop_code": r.eval_meta["stop_code"].values,
                    "y": r.y_true,
                    "abs_err": np.abs(entry["pred"] - r.y_true),
                }
            )
        )
    if not parts:
        return
    pooled = pd.concat(parts, ignore_index=True)
    g = pooled.groupby("stop_code")
    table = pd.DataFrame(
        {
            "stop_code": sorted(g.groups),
            "mean_ridership": g["y"].mean().values,
            "mae": g["abs_err"].mean().values,
            "n": g.size().values,
        }
    )
    table.to_csv(out / "error_vs_demand.csv", index=False)
    try:
        slope, intercept, r2 = evaluation.error_demand_regression(
            table["mean_ridership"].values, table["mae"].values
        )
        note = ""
    except Exception:
        slope = intercept = r2 = float("nan")
        note = "degenerate"
    pd.DataFrame(
        [{"framework": framework, "regime": regime, "slope": slope,
          "intercept": intercept, "r2": r2, "note": note}]
    ).to_csv(out / "error_regression.csv", index=False)


def write_models(out: Path, split_results) -> None:
    mdir = out / "models"
    mdir.mkdir(exist_ok=True)
    for r in split_results:
        for (framework, regime), entry in sorted(r.results.items()):
            if framework == "baseline":
                continue
            entry["model"].save(mdir / f"{r.label}_{framework}_{regime}.json")


def write_snapshot_dump(out: Path, snapshots: dict, label: str) -> None:
    sdir = out / "snapshots" / label
    sdir.mkdir(parents=True, exist_ok=True)
    for h in sorted(snapshots):
        snap = snapshots[h]
        if len(snap.edges):
            snap.edges.to_csv(sdir / f"hour_{h:02d}.csv", index=False)


# ------------------------------------------------------------------ figures

def render_figures(out: Path, split_results, metrics_df: pd.DataFrame, imp) -> None:
    fdir = out / "figures"
    fdir.mkdir(exist_ok=True)
    _fig_mae_by_split(fdir, metrics_df)
    _fig_hourly(fdir, split_results)
    _fig_buckets(fdir, split_results)
    _fig_monthly(fdir, metrics_df, split_results)
    if imp is not None:
        _fig_importance(fdir, imp)
    _fig_error_vs_demand(fdir, out)


def _framework_style(framework):
    return {"global": "tab:blue", "polygon": "tab:orange",
            "baseline": "tab:gray"}.get(framework, "tab:green")


def _fig_mae_by_split(fdir, metrics_df):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for (framework, regime), sub in metrics_df.groupby(["framework", "regime"]):
        sub = sub.sort_values("split")
        style = "-" if regime == "with_id" else "--"
        ax.plot(sub["split"], sub["mae"], style, marker="o", ms=3,
                color=_framework_style(framework), label=f"{framework}/{regime}")
    ax.set_xlabel("split")
    ax.set_ylabel("MAE (passengers)")
    ax.set_title("Held-out MAE per rolling split")
    ax.tick_params(axis="x", rotation=45)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, fdir / "mae_by_split.png")


def _pool(split_results, framework, regime):
    ys, preds, hours = [], [], []
    for r in split_results:
        entry = r.results.get((framework, regime))
        if entry is None:
            continue
        ys.append(r.y_true)
        preds.append(entry["pred"])
        hours.append(r.eval_meta["hour"].values)
    if not ys:
        return None
    return np.concatenate(ys), np.concatenate(preds), np.concatenate(hours)


def _combos(split_results):
    return sorted(
        {key for r in split_results for key in r.results if key[0] != "baseline"}
    )


def _fig_hourly(fdir, split_results):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for framework, regime in _combos(split_results):
        pooled = _pool(split_results, framework, regime)
        if pooled is None:
            continue
        y, pred, hours = pooled
        hm = evaluation.hourly_metrics(y, pred, hours)
        ks = sorted(hm)
        style = "-" if regime == "with_id" else "--"
        ax.plot(ks, [hm[k].mae for k in ks], style, marker="o", ms=3,
                color=_framework_style(framework), label=f"{framework}/{regime}")
    ax.set_xlabel("hour of day")
    ax.set_ylabel("MAE (passengers)")
    ax.set_title("MAE by departure hour (pooled over splits)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, fdir / "mae_by_hour.png")


def _fig_buckets(fdir, split_results):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    combos = _combos(split_results)
    labels = [evaluation.bucket_label(i) for i in range(len(BUCKET_EDGES) - 1)]
    width = 0.8 / max(1, len(combos))
    xs = np.arange(len(labels))
    for i, (framework, regime) in enumerate(combos):
        pooled = _pool(split_results, framework, regime)
        if pooled is None:
            continue
        y, pred, _ = pooled
        bm = evaluation.bucketed_metrics(y, pred)
        vals = [bm[l].smape if l in bm else np.nan for l in labels]
        ax.bar(xs + i * width, vals, width=width,
               color=_framework_style(framework),
               alpha=1.0 if regime == "with_id" else 0.55,
               label=f"{framework}/{regime}")
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(labels)
    ax.set_xlabel("true ridership bucket")
    ax.set_ylabel("sMAPE (%)")
    ax.set_title("sMAPE by ridership bucket (pooled over splits)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, fdir / "smape_by_bucket.png")


def _fig_monthly(fdir, metrics_df, split_results):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    df = metrics_df.loc[metrics_df["framework"] != "baseline"]
    for (framework, regime), sub in df.groupby(["framework", "regime"]):
        agg = sub.groupby("month")["smape"].mean()
        style = "-" if regime == "with_id" else "--"
        ax.plot(agg.index, agg.values, style, marker="o", ms=4,
                color=_framework_style(framework), label=f"{framework}/{regime}")
    ax.set_xlabel("month")
    ax.set_ylabel("sMAPE (%), mean of splits")
    ax.set_title("Monthly sMAPE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, fdir / "smape_by_month.png")


def _fig_importance(fdir, imp, top: int = 20):
    sub = imp.nsmallest(top, "rank").iloc[::-1]
    fig, ax = plt.subplots(figsize=(8.0, 6.0))
    ax.barh(sub["feature"], sub["mean_importance"], xerr=sub["std"],
            color="tab:purple")
    ax.set_xlabel("MAE increase when permuted")
    ax.set_title("Permutation importance (top features)")
    fig.tight_layout()
    _save(fig, fdir / "importance_top.png")


def _fig_error_vs_demand(fdir, out):
    path = out / "error_vs_demand.csv"
    reg_path = out / "error_regression.csv"
    if not path.exists():
        return
    table = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.scatter(table["mean_ridership"], table["mae"], s=12, alpha=0.7,
               color="tab:blue")
    if reg_path.exists():
        reg = pd.read_csv(reg_path).iloc[0]
        if np.isfinite(reg["slope"]):
            xs = np.linspace(table["mean_ridership"].min(),
                             table["mean_ridership"].max(), 50)
            ax.plot(xs, reg["slope"] * xs + reg["intercept"], "r-",
                    label=f"fit (r2={reg['r2']:.3f})")
            ax.legend(fontsize=8)
    ax.set_xlabel("mean ridership per stop")
    ax.set_ylabel("MAE per stop")
    ax.set_title("Prediction error vs. demand level")
    fig.tight_layout()
    _save(fig, fdir / "error_vs_demand.png")
