"""Boruta all-relevant feature selection with the boosted trees as background model."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from .gbdt import GbdtConfig, fit

# fit(X, y, seed) -> importance per column of X
Trainer = Callable[[pd.DataFrame, np.ndarray, int], Mapping[str, float]]

BORUTA_TRAINER_CONFIG = GbdtConfig(n_rounds=20, learning_rate=0.1, max_leaves=15,
                                   n_bins=64, min_child_samples=20)


class Decision(str, enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    TENTATIVE = "Tentative"


@dataclass(frozen=True)
class BorutaConfig:
    max_iters: int = 50
    p_value: float = 0.05
    importance: str = "gain"
    shadow_percentile: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.p_value < 1:
            raise ValueError("p_value must lie in (0, 1)")
        if self.importance not in ("gain", "split"):
            raise ValueError(f"unknown importance {self.importance!r}")
        if not 0 <= self.shadow_percentile <= 100:
            raise ValueError("shadow_percentile must lie in [0, 100]")


@dataclass
class FeatureDecision:
    decisions: dict[str, Decision]
    hits: dict[str, int]
    n_iters: int
    trace: list[np.ndarray] = field(default_factory=list)

    def selected(self, include_tentative: bool = True) -> list[str]:
        ok = {Decision.ACCEPTED, Decision.TENTATIVE} if include_tentative else {Decision.ACCEPTED}
        return [f for f, d in self.decisions.items() if d in ok]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "feature": list(self.decisions),
            "decision": [d.value for d in self.decisions.values()],
            "hits": [self.hits[f] for f in self.decisions],
            "iters": self.n_iters,
        })


def gbdt_trainer(cfg: GbdtConfig = BORUTA_TRAINER_CONFIG, importance: str = "gain") -> Trainer:
    def train(X: pd.DataFrame, y: np.ndarray, seed: int) -> Mapping[str, float]:
        model = fit(X, y, GbdtConfig(**{**cfg.__dict__, "seed": seed}))
        return model.feature_importance(importance)
    return train


def boruta_select(X: pd.DataFrame, y, cfg: BorutaConfig = BorutaConfig(),
                  trainer: Trainer | None = None) -> FeatureDecision:
    """Label every column of ``X`` Accepted, Rejected or Tentative.

    Each iteration appends an independently row-shuffled copy of every
    feature, fits the trainer and scores a hit for each real feature whose
    importance beats the ``shadow_percentile`` of shadow importances. After
    ``max_iters`` rounds a two-sided binomial test against p = 1/2 decides.
    """
    if X.shape[1] == 0:
        raise ValueError("no features to select from")
    if X.shape[0] == 0:
        raise ValueError("no rows to select on")
    y = np.asarray(y, dtype=float)
    trainer = trainer or gbdt_trainer(importance=cfg.importance)
    names = list(X.columns)
    shadow_names = [f"__shadow_{i}" for i in range(len(names))]
    rng = np.random.default_rng(cfg.seed)
    values = X.to_numpy(dtype=float)
    hits = np.zeros(len(names), dtype=int)
    trace = []
    for it in range(cfg.max_iters):
        shadow = np.column_stack([rng.permutation(values[:, j]) for j in range(values.shape[1])])
        aug = pd.DataFrame(np.hstack([values, shadow]), columns=names + shadow_names)
        try:
            imp = trainer(aug, y, int(rng.integers(2**31)))
        except Exception as exc:
            raise RuntimeError(f"background model failed at iteration {it}") from exc
        real = np.array([imp.get(n, 0.0) for n in names], dtype=float)
        shad = np.array([imp.get(n, 0.0) for n in shadow_names], dtype=float)
        bar = np.percentile(shad, cfg.shadow_percentile)
        hit = real > bar
        hits += hit
        trace.append(hit)
    decisions = {}
    for name, h in zip(names, hits):
        p = binomtest(int(h), cfg.max_iters, 0.5, alternative="two-sided").pvalue
        if p < cfg.p_value:
            decisions[name] = Decision.ACCEPTED if h > cfg.max_iters / 2 else Decision.REJECTED
        else:
            decisions[name] = Decision.TENTATIVE
    return FeatureDecision(decisions=decisions, hits=dict(zip(names, hits.tolist())),
                           n_iters=cfg.max_iters, trace=trace)


def boruta_select_matrix(matrix, cfg: BorutaConfig = BorutaConfig(), trainer: Trainer | None = None,
                         sample_rows: int | None = None, per_group: bool = False) -> FeatureDecision:
    """Run Boruta on the training rows (with a target) of a FeatureMatrix.

    ``per_group`` runs one selection per product group and accepts a feature
    if any group accepts it (rejected only if every group rejects it).
    """
    train = matrix.train
    train = train[train["target"].notna()]
    if not matrix.feature_names:
        raise ValueError("no features to select from")
    if len(train) == 0:
        raise ValueError("no training rows with a target")
    rng = np.random.default_rng(cfg.seed)

    def subset(df):
        if sample_rows is not None and len(df) > sample_rows:
            idx = np.sort(rng.choice(len(df), sample_rows, replace=False))
            df = df.iloc[idx]
        return df

    if not per_group:
        t = subset(train)
        return boruta_select(t[matrix.feature_names], t["target"].to_numpy(), cfg, trainer)
    per = [boruta_select(t[matrix.feature_names], t["target"].to_numpy(), cfg, trainer)
           for _, g in train.groupby("group_id", sort=True) for t in [subset(g)]]
    decisions, hits = {}, {}
    for f in matrix.feature_names:
        labels = [d.decisions[f] for d in per]
        if Decision.ACCEPTED in labels:
            decisions[f] = Decision.ACCEPTED
        elif all(lab is Decision.REJECTED for lab in labels):
            decisions[f] = Decision.REJECTED
        else:
            decisions[f] = Decision.TENTATIVE
        hits[f] = int(sum(d.hits[f] for d in per))
    return FeatureDecision(decisions=decisions, hits=hits, n_iters=cfg.max_iters * len(per))
