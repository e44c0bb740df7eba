"""Experiment runner: the four data cases crossed with the forecasting models.

Case A and C fit one model per product group, B and D fit one model on the
whole category; C and D train on the seasonally imputed arm. Every cell is
scored on originally observed validation rows only.
"""
from __future__ import annotations

import logging
import os
import platform
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .baseline import make_forecaster
from .config import CASES, ExperimentConfig, to_dict
from .featselect import FeatureDecision, boruta_select_matrix
from .gbdt import GbdtConfig
from .metrics import REPORT_COLUMNS, SUMMARY_COLUMNS, MetricReport, masked_evaluate, report_row, rmsse
from .panelgen import generate_panel, read_panel_csv
from .preprocess import FeatureMatrix, SplitSpec, build_feature_matrix, prefilter_features

log = logging.getLogger(__name__)

# retained regardless of the selector, as economic theory predicts them
KEY_FEATURES = ("real_price", "real_competitor_price", "out_store", "in_store", "promo")

FLOAT_FORMAT = "%.10g"

DEFAULT_SPACE = {
    "learning_rate": ("log", 0.02, 0.3),
    "max_leaves": ("int", 7, 63),
    "min_child_samples": ("int", 5, 100),
    "lambda_l2": ("log", 1e-3, 10.0),
    "colsample": ("float", 0.5, 1.0),
    "subsample": ("float", 0.5, 1.0),
}


@dataclass
class TimingStats:
    """Fit durations (minutes) for one model and case."""

    model: str
    case: str
    minutes: list[float] = field(default_factory=list)

    def row(self) -> dict:
        m = np.asarray(self.minutes, dtype=float)
        if m.size == 0:
            return {"Model": self.model, "Case": self.case, "Mean": np.nan, "Min": np.nan, "Max": np.nan}
        return {"Model": self.model, "Case": self.case, "Mean": m.mean(), "Min": m.min(), "Max": m.max()}


@dataclass
class CellResult:
    case: str
    model: str
    groups: pd.DataFrame | None = None
    pooled: MetricReport | None = None
    timing: TimingStats | None = None
    predictions: pd.DataFrame | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunReport:
    cells: list[CellResult]
    features: list[str]
    selection: FeatureDecision | None
    tuned: GbdtConfig | None
    out_dir: Path | None = None

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def summary(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            row = {"Case": c.case, "Model": c.model}
            for col in SUMMARY_COLUMNS:
                row[col] = c.pooled.by_label(col) if c.pooled is not None else np.nan
            row["Status"] = "ok" if c.ok else "failed"
            rows.append(row)
        return pd.DataFrame(rows, columns=["Case", "Model", *SUMMARY_COLUMNS, "Status"])

    def timings(self) -> pd.DataFrame:
        rows = [c.timing.row() for c in self.cells if c.timing is not None]
        return pd.DataFrame(rows, columns=["Model", "Case", "Mean", "Min", "Max"])


# ---------------------------------------------------------------- helpers

def train_history(matrix: FeatureMatrix) -> dict[str, np.ndarray]:
    """Raw (never imputed) training sales per series, used for naive scales."""
    tr = matrix.train
    return {k: g.to_numpy(dtype=float) for k, g in tr.groupby("series_key", sort=True)["sales_true"]}


def eval_frame(valid: pd.DataFrame, pred: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({
        "series_key": valid["series_key"].to_numpy(),
        "product_id": valid["product_id"].to_numpy(),
        "group_id": valid["group_id"].to_numpy(),
        "zone_id": valid["zone_id"].to_numpy(),
        "date": valid["date"].to_numpy(),
        "true_sales": valid["sales_true"].to_numpy(dtype=float),
        "pred_sales": np.asarray(pred, dtype=float),
        "real_price": valid["real_price"].to_numpy(dtype=float),
        "cogs": valid["real_cogs"].to_numpy(dtype=float),
        "rebate": valid["real_rebate"].to_numpy(dtype=float),
        "observed": valid["observed"].to_numpy(dtype=bool),
    })


def _nan_report() -> MetricReport:
    nan = float("nan")
    return MetricReport(*([nan] * 15))


def _model_kwargs(model: str, gbdt_cfg: GbdtConfig) -> dict:
    return {"config": gbdt_cfg} if model == "gbdt" else {}


def run_case(case: str, model: str, matrix: FeatureMatrix, features: Sequence[str],
             history: Mapping[str, np.ndarray], gbdt_cfg: GbdtConfig = GbdtConfig(),
             bucket_days: int = 7, pooled_scale: bool = False) -> CellResult:
    """Fit and score one (case, model) cell on an already prepared arm."""
    scope, _ = CASES[case]
    timing = TimingStats(model=model, case=case)
    train, valid = matrix.train, matrix.valid
    if scope == "per_group":
        parts = [(g, train[train["group_id"] == g], valid[valid["group_id"] == g])
                 for g in sorted(valid["group_id"].unique())]
    else:
        parts = [(None, train, valid)]
    preds = []
    for _, tr, va in parts:
        fc = make_forecaster(model, **_model_kwargs(model, gbdt_cfg))
        t0 = time.perf_counter()
        fc.fit(tr, list(features))
        timing.minutes.append((time.perf_counter() - t0) / 60.0)
        preds.append(pd.Series(fc.predict(va), index=va.index))
    pred = pd.concat(preds).reindex(valid.index).to_numpy()
    ev = eval_frame(valid, pred)

    rows = []
    for g in sorted(ev["group_id"].unique()):
        sub = ev[ev["group_id"] == g].reset_index(drop=True)
        try:
            rep = masked_evaluate(sub, sub["observed"].to_numpy(), history, bucket_days, pooled_scale)
        except ValueError as exc:
            log.warning("case %s model %s group %s not scored: %s", case, model, g, exc)
            rep = _nan_report()
        rows.append(report_row(str(g), rep))
    pooled = masked_evaluate(ev, ev["observed"].to_numpy(), history, bucket_days, pooled_scale)
    rows.append(report_row("All", pooled))
    groups = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return CellResult(case=case, model=model, groups=groups, pooled=pooled, timing=timing, predictions=ev)


# ---------------------------------------------------------------- tuning

def _sample(spec, rng: np.random.Generator):
    kind = spec[0]
    if kind == "float":
        return float(rng.uniform(spec[1], spec[2]))
    if kind == "log":
        return float(np.exp(rng.uniform(np.log(spec[1]), np.log(spec[2]))))
    if kind == "int":
        return int(rng.integers(spec[1], spec[2] + 1))
    if kind == "choice":
        opts = list(spec[1])
        return opts[int(rng.integers(len(opts)))]
    raise ValueError(f"unknown search dimension kind {kind!r}")


def tune_random_search(matrix: FeatureMatrix, features: Sequence[str], space: Mapping | None = None,
                       budget: int = 8, fraction: float = 0.1, base: GbdtConfig = GbdtConfig(),
                       seed: int = 0, history: Mapping[str, np.ndarray] | None = None
                       ) -> tuple[GbdtConfig, pd.DataFrame]:
    """Random search scored by series-averaged validation RMSSE.

    Trains on a ``fraction`` subsample of series (whole series, so lags stay
    meaningful) and scores on their observed validation rows. Ties keep the
    earliest trial.
    """
    space = DEFAULT_SPACE if space is None else space
    if not space:
        raise ValueError("search space is empty")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    keys = np.array(sorted(matrix.frame["series_key"].unique()))
    n = max(1, int(round(fraction * keys.size)))
    chosen = set(rng.choice(keys, n, replace=False).tolist())
    sub = matrix.frame[matrix.frame["series_key"].isin(chosen)]
    tr = sub[(sub["split_tag"] == "train") & sub["target"].notna()]
    va = sub[(sub["split_tag"] == "valid") & sub["observed"]]
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("tuning subsample has no training or validation rows")
    history = history if history is not None else train_history(matrix)
    va_keys = va["series_key"].to_numpy()
    y_va = va["sales_true"].to_numpy(dtype=float)

    trials = []
    best, best_score = None, np.inf
    for i in range(budget):
        params = {k: _sample(space[k], rng) for k in sorted(space)}
        cfg = replace(base, **params)
        fc = make_forecaster("gbdt", config=cfg).fit(tr, list(features))
        pred = fc.predict(va)
        scores = []
        for key in np.unique(va_keys):
            m = va_keys == key
            s = rmsse(history.get(key, ()), y_va[m], pred[m])
            if np.isfinite(s):
                scores.append(s)
        score = float(np.mean(scores)) if scores else np.inf
        trials.append({"trial": i, **params, "rmsse": score})
        if score < best_score:
            best, best_score = cfg, score
    if best is None:
        best = replace(base, **{k: v for k, v in trials[0].items() if k in space})
    return best, pd.DataFrame(trials)


# ---------------------------------------------------------------- output

def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_csv(path: Path, frame: pd.DataFrame) -> None:
    atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep="NaN",
                                         lineterminator="\n"))


def _provenance(cfg: ExperimentConfig, features, dropped, report: RunReport) -> str:
    import numba
    import scipy
    lines = [
        f"retailcast {__version__}",
        f"python {platform.python_version()}",
        f"numpy {np.__version__}",
        f"pandas {pd.__version__}",
        f"scipy {scipy.__version__}",
        f"numba {numba.__version__}",
        f"seed {cfg.seed}",
        f"config_digest {cfg.digest()}",
        f"panel {cfg.panel_path or 'generated'}",
        f"features {','.join(features)}",
        f"dropped_series {dropped}",
        f"tuned {to_dict(report.tuned) if report.tuned is not None else 'none'}",
        f"failed_cells {','.join(f'{c.case}/{c.model}' for c in report.failed) or 'none'}",
    ]
    return "\n".join(lines) + "\n"


def write_outputs(report: RunReport, cfg: ExperimentConfig, out_dir: Path, dropped=None) -> None:
    out_dir = Path(out_dir)
    for c in report.cells:
        cell_dir = out_dir / c.case / c.model
        if c.groups is not None:
            atomic_write_csv(cell_dir / "groups.csv", c.groups)
        if cfg.plot and c.predictions is not None:
            p = c.predictions[c.predictions["observed"]]
            for g, part in p.groupby("group_id", sort=True):
                plot = pd.DataFrame({
                    "series_key": part["series_key"],
                    "date": pd.to_datetime(part["date"]).dt.strftime("%Y-%m-%d"),
                    "actual": part["true_sales"], "predicted": part["pred_sales"],
                })
                atomic_write_csv(cell_dir / "plots" / f"{g}.csv", plot)
        if c.error is not None:
            atomic_write_text(cell_dir / "error.txt", c.error)
    if report.selection is not None:
        atomic_write_csv(out_dir / "selection.csv", report.selection.to_frame())
    atomic_write_csv(out_dir / "timings.csv", report.timings())
    atomic_write_text(out_dir / "provenance.txt", _provenance(cfg, report.features, dropped, report))
    # summary last: its presence marks a completed run
    atomic_write_csv(out_dir / "summary.csv", report.summary())


# ---------------------------------------------------------------- orchestration

def load_panel(cfg: ExperimentConfig) -> pd.DataFrame:
    if cfg.panel_path:
        return read_panel_csv(cfg.panel_path)
    return generate_panel(cfg.profile)


def split_spec(cfg: ExperimentConfig, panel: pd.DataFrame) -> SplitSpec:
    if cfg.cutoff_date is not None:
        cutoff = pd.Timestamp(cfg.cutoff_date)
    else:
        dates = pd.to_datetime(panel["date"])
        start, end = dates.min(), dates.max()
        span = (end - start).days + 1
        cutoff = start + pd.Timedelta(days=int(round(cfg.cutoff_fraction * span)))
    return SplitSpec(cutoff, cfg.min_train_points, cfg.require_both_periods)


def select_features(matrix: FeatureMatrix, cfg: ExperimentConfig) -> tuple[list[str], FeatureDecision | None]:
    """Prefilter, then Boruta; key economic drivers are always kept."""
    keep = [f for f in KEY_FEATURES if f in matrix.feature_names]
    kept, reasons = prefilter_features(matrix.train, matrix.feature_names, keep=keep)
    for f, why in reasons.items():
        log.info("prefilter dropped %s (%s)", f, why)
    if not cfg.run_boruta:
        return kept, None
    sub = FeatureMatrix(frame=matrix.frame, feature_names=kept)
    decision = boruta_select_matrix(sub, cfg.boruta, sample_rows=cfg.boruta_rows)
    chosen = set(decision.selected()) | set(keep)
    return [f for f in kept if f in chosen], decision


def run_all(cfg: ExperimentConfig, panel: pd.DataFrame | None = None, out_dir=None) -> RunReport:
    """Run every requested (case, model) cell and write the result files.

    A failing cell is recorded and reported; the remaining cells still run.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "summary.csv"
    if stale.exists():
        stale.unlink()

    panel = load_panel(cfg) if panel is None else panel
    spec = split_spec(cfg, panel)
    arms: dict[bool, FeatureMatrix] = {}
    for imputed in sorted({CASES[c][1] for c in cfg.cases}):
        arms[imputed] = build_feature_matrix(panel, spec, cfg.features, imputed=imputed, seed=cfg.seed)
    selector_arm = arms.get(False) or build_feature_matrix(panel, spec, cfg.features, seed=cfg.seed)
    history = train_history(selector_arm)

    features, decision = select_features(selector_arm, cfg)
    gbdt_cfg = cfg.gbdt
    tuned = None
    if "gbdt" in cfg.models and cfg.tune_budget > 0:
        tuned, trials = tune_random_search(selector_arm, features, budget=cfg.tune_budget,
                                           fraction=cfg.tune_fraction, base=cfg.gbdt,
                                           seed=cfg.seed, history=history)
        atomic_write_csv(out / "tuning.csv", trials)
        gbdt_cfg = tuned

    jobs = [(case, model) for case in cfg.cases for model in cfg.models]

    def job(cm):
        case, model = cm
        try:
            return run_case(case, model, arms[CASES[case][1]], features, history, gbdt_cfg,
                            cfg.bucket_days, cfg.pooled_scale)
        except Exception:
            log.error("cell %s/%s failed", case, model)
            return CellResult(case=case, model=model, error=traceback.format_exc())

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(job, jobs))
    else:
        cells = [job(j) for j in jobs]

    report = RunReport(cells=cells, features=features, selection=decision, tuned=tuned, out_dir=out)
    dropped = {k: v for k, v in selector_arm.dropped.items()}
    write_outputs(report, cfg, out, dropped)
    return report
