"""End-to-end batch pipeline: ingest, clean, features, regionalize, train,
evaluate, attribute, report.

Every run writes a manifest carrying the config hash; stage outputs are only
reused when the hash matches, so stale artifacts can never leak across
configs. All RNG flows from the single config seed; reruns with the same
config produce byte-identical output trees.
"""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass, field

from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, cleaning, evaluation, features, ingest, network, regions
from .attribution import permutation_importance
from .config import RunConfig
from .errors import BuscastError, DataError
from .evaluation import MetricSet, SplitPlan
from .models import (
    FeatureMatrix, predict, train_global, train_mean_model, train_polygonwise,
)

MANIFEST_NAME = "manifest.json"


@dataclass
class SplitResult:
    plan: SplitPlan
    label: str
    train_rows: int
    eval_rows: int
    chosen_k: int
    partition: regions.Partition
    iqr_dropped: pd.DataFrame
    results: dict = field(default_factory=dict)   # (framework, regime) -> per-model dict
    eval_meta: pd.DataFrame | None = None
    y_true: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    matrices: dict = field(default_factory=dict)  # train/eval FeatureMatrix
    snapshots: dict | None = None


def _versions() -> dict:
    import matplotlib
    return {
        "buscast": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "matplotlib": matplotlib.__version__,
    }


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self._inputs = None
        self._cleaned = None
        self._gabriel = None
        self._plans = None
        self.row_counts = {}

    # ------------------------------------------------------------ inputs

    def inputs(self):
        if self._inputs is not None:
            return self._inputs
        cfg = self.cfg
        events = ingest.load_apc(cfg.apc)
        weather = ingest.load_weather(cfg.weather)
        stops = ingest.load_stops(cfg.stops)
        facilities = ingest.load_facilities(cfg.facilities)
        holidays = ingest.load_holidays(cfg.holidays) if cfg.holidays else set()
        known = set(stops["stop_code"])
        missing = sorted(set(events["stop_code"]) - known)
        if missing:
            raise DataError(f"events reference unknown stops: {missing[:5]}")
        events = ingest.join_weather(
            events, weather, tol=pd.Timedelta(minutes=cfg.weather_tol_minutes)
        )
        fac_table = ingest.facility_count_table(stops, facilities, cfg.radius_m)
        self.row_counts["events"] = len(events)
        self.row_counts["stops"] = len(stops)
        self.row_counts["weather"] = len(weather)
        self.row_counts["facilities"] = len(facilities)
        self._inputs = {
            "events": events, "weather": weather, "stops": stops,
            "facilities": facilities, "holidays": holidays, "fac_table": fac_table,
        }
        return self._inputs

    def cleaned(self):
        """Global cleaning: negative counts, then capacity breaches."""
        if self._cleaned is not None:
            return self._cleaned
        inp = self.inputs()
        raw_disc = cleaning.discrepancy_table(inp["events"])
        kept, neg_keys = cleaning.drop_negative_rides(inp["events"])
        kept, cap_keys = cleaning.capacity_filter(kept, self.cfg.delta)
        self.row_counts["events_clean"] = len(kept)
        self._cleaned = {
            "events": kept, "negative_keys": neg_keys, "capacity_keys": cap_keys,
            "raw_discrepancies": raw_disc,
        }
        return self._cleaned

    def plans(self):
        if self._plans is None:
            dates = self.cleaned()["events"]["departure_time"].dt.date
            months = evaluation.complete_months(dates.unique())
            if not months:
                raise DataError("no complete calendar month in the cleaned events")
            self._plans = evaluation.rolling_splits(months, self.cfg.h1, self.cfg.h2)
        return self._plans

    def gabriel(self):
        if self._gabriel is None:
            self._gabriel = regions.gabriel_graph(self.inputs()["stops"])
        return self._gabriel

    # ------------------------------------------------------------ per split

    def prepare_split(self, plan: SplitPlan, keep_snapshots: bool = False) -> SplitResult:
        """Window slicing, discrepancy filtering, features and the partition."""
        cfg = self.cfg
        inp = self.inputs()
        events = self.cleaned()["events"]
        dates = events["departure_time"].dt.date
        train = events.loc[(dates >= plan.train_start) & (dates <= plan.train_end)]
        eval_ = events.loc[(dates >= plan.eval_start) & (dates <= plan.eval_end)]
        if train.empty or eval_.empty:
            raise DataError(f"empty train or eval window for {plan.month} step {plan.step}")

        thresholds = cleaning.iqr_thresholds(cleaning.discrepancy_table(train))
        train, dropped_train = cleaning.apply_discrepancy_filter(train, thresholds)
        eval_, dropped_eval = cleaning.apply_discrepancy_filter(eval_, thresholds)
        iqr_dropped = pd.concat([dropped_train, dropped_eval], ignore_index=True)

        stops = inp["stops"]
        stop_coords = {
            str(r.stop_code): (float(r.lat), float(r.lon))
            for r in stops.itertuples(index=False)
        }
        snapshots, route_aggs = features.build_graph_artifacts(train, stop_coords)
        loads = features.stop_loads(train, stops["stop_code"])

        kwargs = dict(
            stops=stops, facility_table=inp["fac_table"], holidays=inp["holidays"],
            snapshots=snapshots, route_aggs=route_aggs, rest_days=cfg.rest_days,
        )
        matrix_train = features.assemble_matrix(train, **kwargs)
        matrix_eval = features.assemble_matrix(eval_, **kwargs)

        chosen_k, partition = regions.select_partition(
            self.gabriel(), loads, cfg.k_grid, seed=cfg.seed
        )

        return SplitResult(
            plan=plan, label=f"{plan.month}_w{plan.step}",
            train_rows=len(train), eval_rows=len(eval_),
            chosen_k=chosen_k, partition=partition, iqr_dropped=iqr_dropped,
            eval_meta=matrix_eval.meta, y_true=matrix_eval.target,
            diagnostics=evaluation.diagnostics(train, eval_),
            matrices={"train": matrix_train, "eval": matrix_eval},
            snapshots=snapshots if keep_snapshots else None,
        )

    def run_split(self, plan: SplitPlan) -> SplitResult:
        """prepare_split plus model training for every framework and regime."""
        cfg = self.cfg
        result = self.prepare_split(plan)
        matrix_train = result.matrices["train"]
        matrix_eval = result.matrices["eval"]

        baseline = train_mean_model(matrix_train)
        result.results[("baseline", "with_id")] = {
            "model": baseline, "pred": predict(baseline, matrix_eval),
        }
        for regime in cfg.regimes():
            mtr = matrix_train if regime == "with_id" else matrix_train.without_identifiers()
            mev = matrix_eval if regime == "with_id" else matrix_eval.without_identifiers()
            for framework in cfg.frameworks():
                if framework == "global":
                    model = train_global(mtr, cfg.model, cfg.model_params(), cfg.seed)
                else:
                    model = train_polygonwise(
                        mtr, result.partition, cfg.model, cfg.model_params(), cfg.seed,
                        min_rows=cfg.min_region_rows,
                    )
                result.results[(framework, regime)] = {
                    "model": model, "pred": predict(model, mev),
                    "eval_matrix": mev,
                }
        result.matrices = {}
        return result

    # ------------------------------------------------------------ full run

    def run(self) -> Path:
        from . import report

        cfg = self.cfg
        self.out.mkdir(parents=True, exist_ok=True)
        self._check_manifest()

        cleaned = self.cleaned()
        plans = self.plans()
        self.row_counts["splits"] = len(plans)
        split_results = [self.run_split(p) for p in plans]

        report.write_cleaning(self.out, cleaned, split_results)
        report.write_splits(self.out, split_results)
        report.write_partitions(self.out, split_results)
        metrics_df = report.write_metrics(self.out, split_results)
        report.write_stratified(self.out, split_results)
        report.write_monthly(self.out, split_results)
        report.write_tests(self.out, metrics_df, cfg)
        report.write_diagnostics(self.out, split_results)
        report.write_error_demand(self.out, split_results, self)
        imp = self._importance(split_results)
        if imp is not None:
            imp.to_csv(self.out / "importance.csv", index=False)
        if cfg.figures:
            report.render_figures(self.out, split_results, metrics_df, imp)
        if cfg.save_models:
            report.write_models(self.out, split_results)
        self._write_manifest()
        return self.out

    def primary_target(self):
        fw = "polygon" if "polygon" in self.cfg.frameworks() else self.cfg.frameworks()[0]
        rg = "without_id" if "without_id" in self.cfg.regimes() else self.cfg.regimes()[0]
        return fw, rg

    def _importance(self, split_results):
        cfg = self.cfg
        fw, rg = self.primary_target()
        last = split_results[-1]
        entry = last.results.get((fw, rg))
        if entry is None:
            return None
        matrix = entry["eval_matrix"]
        if cfg.importance_rows and len(matrix) > cfg.importance_rows:
            rng = np.random.default_rng(cfg.seed)
            rows = np.sort(rng.choice(len(matrix), size=cfg.importance_rows, replace=False))
            matrix = matrix.take(rows)
        imp = permutation_importance(
            entry["model"], matrix, repeats=cfg.importance_repeats, seed=cfg.seed
        )
        imp.insert(0, "regime", rg)
        imp.insert(0, "framework", fw)
        return imp

    # ------------------------------------------------------------ manifest

    def _check_manifest(self):
        path = self.out / MANIFEST_NAME
        if path.exists():
            doc = json.loads(path.read_text())
            if doc.get("config_hash") != self.cfg.config_hash():
                raise DataError(
                    f"output dir {self.out} holds artifacts of a different config "
                    f"(hash {doc.get('config_hash')}); refusing to mix"
                )

    def _write_manifest(self):
        (self.out / "config.echo").write_text(self.cfg.echo())
        doc = {
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.seed,
            "versions": _versions(),
            "row_counts": {k: int(v) for k, v in sorted(self.row_counts.items())},
        }
        (self.out / MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True))


def run_pipeline(cfg: RunConfig) -> Path:
    """Execute every stage; raises BuscastError subclasses on failure."""
    return Pipeline(cfg).run()


def metric_row(label, framework, regime, model_kind, m: MetricSet) -> dict:
    return {
        "split": label, "framework": framework, "regime": regime,
        "model": model_kind, **m.as_dict(),
    }
