"""Synthetic brick-and-mortar sales panels.

The generator draws a store/product catalogue, a lifecycle for every product
(eliminated before the cutoff, continuing across it, or newly introduced after
it), a demand class for every product-store series and then daily demand
whose intensity responds to promotions, real price, competitor price and the
weekday. Missing values are injected afterwards in contiguous bursts.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Union

import numpy as np
import pandas as pd

from .demandclass import DemandClass, classify, demand_stats

PANEL_COLUMNS = [
    "product_id", "store_id", "date", "sales", "price", "cogs", "rebate",
    "promo_flag", "promo_count", "stock", "competitor_price", "cpi",
    "salary_regional", "population", "group_id", "uon_id", "zone_id",
]
MISSABLE = ("sales", "price", "competitor_price")

# share of series per demand class in the reference dataset
REFERENCE_CLASS_MIX = {
    DemandClass.INTERMITTENT: 0.7006,
    DemandClass.LUMPY: 0.2348,
    DemandClass.ERRATIC: 0.0311,
    DemandClass.SMOOTH: 0.0243,
    DemandClass.NO_DEMAND: 0.0092,
}

BurstLength = Union[int, Callable[[np.random.Generator, int], np.ndarray]]


class ProfileError(ValueError):
    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        super().__init__("invalid profile: " + "; ".join(f"{k}: {v}" for k, v in problems.items()))


@dataclass(frozen=True)
class StoreSpec:
    store_id: str
    zone_id: int
    competitor_count: int
    region_id: int


@dataclass(frozen=True)
class ProductSpec:
    product_id: str
    group_id: str
    uon_id: str
    base_price: float
    cogs: float
    rebate: float
    intro_date: pd.Timestamp
    elim_date: pd.Timestamp | None


@dataclass(frozen=True)
class GeneratorProfile:
    n_stores: int = 10
    n_groups: int = 8
    n_products: int = 500
    horizon_days: int = 730
    uons_per_group: int = 4
    n_zones: int = 3
    n_regions: int = 4
    start_date: str = "2022-01-03"
    cutoff_fraction: float = 0.8
    class_mix: dict = field(default_factory=lambda: dict(REFERENCE_CLASS_MIX))
    missing_rate: float = 0.50
    valid_missing_rate: float = 0.30
    burst_mean: float = 14.0
    eliminated_ratio: float = 0.30
    new_ratio: float = 0.10
    lifespan_days: float = 180.0
    promo_rate: float = 0.12
    promo_len: int = 7
    promo_discount: float = 0.2
    promo_uplift: float = 1.8
    price_elasticity: float = 1.5
    competitor_elasticity: float = 0.8
    weekly_amplitude: float = 0.25
    competitor_sigma: float = 0.12
    cpi_drift: float = 0.004
    cpi_vol: float = 0.003
    ar_phi: float = 0.9
    ar_sigma: float = 0.12
    seed: int = 0

    def __post_init__(self):
        problems = {}
        for name in ("n_stores", "n_groups", "n_products", "horizon_days", "uons_per_group",
                     "n_zones", "n_regions", "promo_len"):
            if getattr(self, name) < 1:
                problems[name] = "must be >= 1"
        for name in ("cutoff_fraction", "missing_rate", "valid_missing_rate", "eliminated_ratio",
                     "new_ratio", "promo_rate", "promo_discount"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                problems[name] = f"{v} outside [0, 1]"
        if self.eliminated_ratio >= 1:
            problems["eliminated_ratio"] = "must be < 1"
        if self.new_ratio >= 1:
            problems["new_ratio"] = "must be < 1"
        mix = self.class_mix
        try:
            keys = {DemandClass(k) for k in mix}
        except ValueError as exc:
            problems["class_mix"] = str(exc)
        else:
            if len(keys) != len(mix):
                problems["class_mix"] = "duplicate classes"
            elif any(not 0 <= v <= 1 for v in mix.values()):
                problems["class_mix"] = "fractions must lie in [0, 1]"
            elif abs(sum(mix.values()) - 1.0) > 1e-9:
                problems["class_mix"] = f"sums to {sum(mix.values())}, not 1"
        if self.burst_mean < 1:
            problems["burst_mean"] = "must be >= 1"
        if self.horizon_days < 60:
            problems["horizon_days"] = "must be >= 60"
        if problems:
            raise ProfileError(problems)

    @property
    def cutoff_day(self) -> int:
        return int(round(self.cutoff_fraction * self.horizon_days))

    @property
    def cutoff_date(self) -> pd.Timestamp:
        return pd.Timestamp(self.start_date) + pd.Timedelta(days=self.cutoff_day)


def signal_profile(**overrides) -> GeneratorProfile:
    """Small panel whose demand is dominated by observable drivers.

    Smooth series only, strong promotion, price and weekday effects, light
    missingness and no assortment churn. Useful for checking that a
    feature-based model beats a level-only benchmark.
    """
    base = dict(
        n_products=20, n_stores=5, n_groups=4, horizon_days=365,
        class_mix={DemandClass.SMOOTH.value: 1.0},
        missing_rate=0.1, valid_missing_rate=0.1, burst_mean=3.0,
        eliminated_ratio=0.0, new_ratio=0.0,
        promo_rate=0.25, promo_uplift=2.5, promo_discount=0.25,
        price_elasticity=2.0, weekly_amplitude=0.6, ar_sigma=0.05,
    )
    base.update(overrides)
    return GeneratorProfile(**base)


@dataclass(frozen=True)
class PanelStats:
    series_count: int
    avg_missingness: float
    avg_coverage_ratio: float
    eliminated_count: int
    new_count: int
    eliminated_ratio: float
    new_ratio: float
    class_distribution: dict


# ------------------------------------------------------------------ helpers

def series_keys(panel: pd.DataFrame) -> pd.Series:
    return panel["product_id"].astype(str) + "|" + panel["store_id"].astype(str)


def _exact_counts(fracs: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder rounding of ``fracs * n``."""
    raw = fracs * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _nb_sizes(rng, mean, k):
    """Negative-binomial draws via the gamma-Poisson mixture."""
    mean = np.maximum(mean, 1e-9)
    return rng.poisson(rng.gamma(k, mean / k))


def _ar1(rng, n, phi, sigma):
    eps = rng.normal(0.0, sigma, n)
    a = np.empty(n)
    a[0] = eps[0] / np.sqrt(max(1e-12, 1 - phi * phi))
    for t in range(1, n):
        a[t] = phi * a[t - 1] + eps[t]
    return a


def _geometric_bursts(mean: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    p = 1.0 / mean

    def draw(rng, size):
        return rng.geometric(p, size)
    return draw


def _burst_mask(length: int, rate: float, burst: BurstLength, rng) -> np.ndarray:
    """Alternating observed/missing runs; missing runs follow ``burst``."""
    out = np.zeros(length, dtype=bool)
    if rate <= 0 or length == 0:
        return out
    if rate >= 1:
        out[:] = True
        return out
    if isinstance(burst, (int, np.integer)):
        const = int(burst)
        mean_b = float(const)

        def draw(r, size):
            return np.full(size, const)
    else:
        draw = burst
        mean_b = float(np.mean(draw(np.random.default_rng(0), 4096)))
    mean_o = mean_b * (1 - rate) / rate
    # gaps of length >= 1 keep bursts separate whenever the rate allows it
    if mean_o >= 1:
        gp, shift = 1.0 / mean_o, 0
    else:
        gp, shift = 1.0 / (1.0 + mean_o), 1
    pos = 0
    missing = rng.random() < rate
    while pos < length:
        n_pairs = max(4, int(2 * length / (mean_b + mean_o)) + 2)
        bursts = np.asarray(draw(rng, n_pairs), dtype=int)
        gaps = rng.geometric(gp, n_pairs) - shift
        for b, g in zip(bursts, gaps):
            if missing:
                out[pos:pos + b] = True
                pos += b
                missing = False
                if pos >= length:
                    break
            pos += g
            missing = True
            if pos >= length:
                break
    return out


# ------------------------------------------------------------------ catalogue

def build_catalog(profile: GeneratorProfile, rng: np.random.Generator | None = None):
    rng = rng or np.random.default_rng(profile.seed)
    start = pd.Timestamp(profile.start_date)
    stores = [
        StoreSpec(
            store_id=f"S{i:03d}",
            zone_id=int(rng.integers(1, profile.n_zones + 1)),
            competitor_count=int(rng.poisson(3.0)),
            region_id=int(rng.integers(1, profile.n_regions + 1)),
        )
        for i in range(profile.n_stores)
    ]
    groups = np.resize(np.arange(profile.n_groups), profile.n_products)
    rng.shuffle(groups)

    e, nw = profile.eliminated_ratio, profile.new_ratio
    weights = np.array([e / (1 - e), nw / (1 - nw), 1.0])
    life_counts = _exact_counts(weights / weights.sum(), profile.n_products)
    life = np.repeat(np.array(["eliminated", "new", "continuing"]), life_counts)
    rng.shuffle(life)

    H, cut = profile.horizon_days, profile.cutoff_day
    products = []
    for i in range(profile.n_products):
        g = int(groups[i])
        base = float(np.round(np.exp(rng.normal(np.log(5.0), 0.7)), 2)) + 0.1
        cogs = float(np.round(base * rng.uniform(0.55, 0.85), 4))
        rebate = float(np.round(base * rng.uniform(0.0, 0.05), 4)) if rng.random() < 0.3 else 0.0
        kind = life[i]
        if kind == "eliminated":
            s = 0 if rng.random() < 0.4 else int(rng.integers(0, max(1, cut - 60)))
            dur = int(np.clip(rng.lognormal(np.log(profile.lifespan_days), 0.4), 45, 2 * profile.lifespan_days))
            e_day = min(s + dur, cut - 1)
            s = min(s, e_day - 29) if e_day - 29 >= 0 else 0
        elif kind == "new":
            s = int(rng.integers(cut, max(cut + 1, H - 45)))
            e_day = H - 1
        else:
            s = 0 if rng.random() < 0.6 else int(rng.integers(0, max(1, cut - 90)))
            e_day = H - 1 if rng.random() < 0.85 else int(rng.integers(min(cut + 14, H - 1), H))
        products.append(ProductSpec(
            product_id=f"P{i:05d}",
            group_id=f"G{g:02d}",
            uon_id=f"G{g:02d}U{int(rng.integers(1, profile.uons_per_group + 1))}",
            base_price=base,
            cogs=cogs,
            rebate=rebate,
            intro_date=start + pd.Timedelta(days=s),
            elim_date=None if e_day >= H - 1 else start + pd.Timedelta(days=e_day),
        ))
    return stores, products


# ------------------------------------------------------------------ generation

def _demand(cls: DemandClass, rng, mult, size_factor, profile):
    n = mult.size
    if cls is DemandClass.NO_DEMAND:
        return np.zeros(n)
    if cls is DemandClass.SMOOTH:
        lam = rng.uniform(4.0, 15.0) * size_factor
        a = _ar1(rng, n, profile.ar_phi, profile.ar_sigma)
        return rng.poisson(lam * np.exp(a) * mult).astype(float)
    if cls is DemandClass.ERRATIC:
        mu = rng.uniform(3.0, 8.0) * size_factor
        k = rng.uniform(0.3, 0.6)
        a = _ar1(rng, n, profile.ar_phi, profile.ar_sigma)
        occur = rng.random(n) < rng.uniform(0.88, 1.0)
        return occur * (1.0 + _nb_sizes(rng, mu * np.exp(a) * mult, k))
    p0 = rng.uniform(0.08, 0.45)
    occur = rng.random(n) < np.clip(p0 * mult**0.7, 0.0, 0.7)
    if cls is DemandClass.INTERMITTENT:
        sizes = 1.0 + rng.poisson(rng.uniform(0.2, 1.0) * size_factor * mult**0.3)
    else:
        sizes = 1.0 + _nb_sizes(rng, rng.uniform(1.5, 6.0) * size_factor * mult, rng.uniform(0.25, 0.6))
    return occur * sizes


def generate_panel(profile: GeneratorProfile | None = None) -> pd.DataFrame:
    """Draw a full panel, one row per (product, store, day) inside each lifespan.

    The result is sorted by product, store and date. Missing cells are NaN in
    the ``sales``, ``price`` and ``competitor_price`` columns.
    """
    profile = profile or GeneratorProfile()
    rng = np.random.default_rng(profile.seed)
    stores, products = build_catalog(profile, rng)
    H, cut = profile.horizon_days, profile.cutoff_day
    start = np.datetime64(pd.Timestamp(profile.start_date).date())
    all_dates = start + np.arange(H).astype("timedelta64[D]")

    n_months = H // 30 + 2
    cpi_month = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(rng.normal(profile.cpi_drift, profile.cpi_vol, n_months - 1))]))
    cpi_day = cpi_month[np.arange(H) // 30]
    salary_base = 1500.0 * np.exp(rng.normal(0.0, 0.2, profile.n_regions + 1))
    salary_growth = np.exp(0.003 * (np.arange(H) // 30))
    population = rng.integers(20_000, 400_000, profile.n_stores)
    store_size = np.exp(rng.normal(0.0, 0.3, profile.n_stores))
    zone_factor = {z: f for z, f in zip(range(1, profile.n_zones + 1), np.linspace(0.95, 1.05, profile.n_zones))}
    dow = (np.arange(H) + int(pd.Timestamp(profile.start_date).dayofweek)) % 7
    weekly = 1.0 + profile.weekly_amplitude * np.array([-0.3, -0.2, -0.1, 0.0, 0.4, 0.9, -0.8])[dow]

    n_series = profile.n_products * profile.n_stores
    mix = {DemandClass(k): v for k, v in profile.class_mix.items()}
    classes = list(DemandClass)
    counts = _exact_counts(np.array([mix.get(c, 0.0) for c in classes]), n_series)
    series_class = np.repeat(np.arange(len(classes)), counts)
    rng.shuffle(series_class)

    cols: dict[str, list] = {c: [] for c in PANEL_COLUMNS}
    rate_segments = []
    for pi, prod in enumerate(products):
        s = int((np.datetime64(prod.intro_date.date()) - start).astype(int))
        e = H - 1 if prod.elim_date is None else int((np.datetime64(prod.elim_date.date()) - start).astype(int))
        days = np.arange(s, e + 1)
        L = days.size
        # nominal shelf price path shared by all stores before zone/promo effects
        n_steps = L // 90 + 1
        steps = np.exp(np.cumsum(rng.normal(0.0, 0.05, n_steps)))[np.arange(L) // 90]
        comp_noise = np.exp(rng.normal(0.0, profile.competitor_sigma, L // 30 + 1))[np.arange(L) // 30]
        for si, store in enumerate(stores):
            cls = classes[series_class[pi * profile.n_stores + si]]
            starts = rng.random(L) < profile.promo_rate / profile.promo_len
            promo = np.convolve(starts, np.ones(profile.promo_len), mode="full")[:L] > 0
            zf = zone_factor[store.zone_id]
            cpi = cpi_day[days]
            shelf = prod.base_price * zf * steps * cpi / 100.0
            price = shelf * np.where(promo, 1.0 - profile.promo_discount, 1.0)
            comp = shelf * comp_noise * np.exp(rng.normal(0.0, 0.02, L))
            real_rel = (price * 100.0 / cpi) / (prod.base_price * zf)
            mult = (weekly[days]
                    * np.where(promo, profile.promo_uplift, 1.0)
                    * real_rel ** (-profile.price_elasticity)
                    * (price / comp) ** (-profile.competitor_elasticity))
            sales = _demand(cls, rng, mult, store_size[si], profile)
            stock = rng.poisson(7.0 * max(1.0, float(sales.mean())) + 3.0, L)

            cols["product_id"].append(np.full(L, prod.product_id, dtype=object))
            cols["store_id"].append(np.full(L, store.store_id, dtype=object))
            cols["date"].append(all_dates[days])
            cols["sales"].append(sales.astype(float))
            cols["price"].append(np.round(price, 4))
            cols["cogs"].append(np.round(prod.cogs * cpi / 100.0, 4))
            cols["rebate"].append(np.round(prod.rebate * cpi / 100.0, 4))
            cols["promo_flag"].append(promo)
            cols["promo_count"].append(np.where(promo, rng.integers(1, 4, L), 0))
            cols["stock"].append(stock.astype(float))
            cols["competitor_price"].append(np.round(comp, 4))
            cols["cpi"].append(np.round(cpi, 6))
            cols["salary_regional"].append(np.round(salary_base[store.region_id] * salary_growth[days], 2))
            cols["population"].append(np.full(L, population[si]))
            cols["group_id"].append(np.full(L, prod.group_id, dtype=object))
            cols["uon_id"].append(np.full(L, prod.uon_id, dtype=object))
            cols["zone_id"].append(np.full(L, store.zone_id))
            n_train = int(np.sum(days < cut))
            rate_segments.append((n_train, L - n_train))

    panel = pd.DataFrame({c: np.concatenate(v) for c, v in cols.items()})
    panel["promo_flag"] = panel["promo_flag"].astype(bool)
    panel["promo_count"] = panel["promo_count"].astype(np.int64)
    panel["population"] = panel["population"].astype(np.int64)
    panel["zone_id"] = panel["zone_id"].astype(np.int64)
    panel["date"] = panel["date"].astype("datetime64[ns]")

    # missingness: separate rates before and after the cutoff
    burst = _geometric_bursts(profile.burst_mean)
    for fld in MISSABLE:
        miss_parts = []
        for n_train, n_valid in rate_segments:
            miss_parts.append(_burst_mask(n_train, profile.missing_rate, burst, rng))
            miss_parts.append(_burst_mask(n_valid, profile.valid_missing_rate, burst, rng))
        miss = np.concatenate(miss_parts)
        col = panel[fld].to_numpy(dtype=float).copy()
        col[miss] = np.nan
        panel[fld] = col
    return panel


def observed_mask(panel: pd.DataFrame, fields=MISSABLE) -> pd.DataFrame:
    """Per-cell mask over the missable fields; True where a value is present."""
    return panel[list(fields)].notna()


def inject_missingness(panel: pd.DataFrame, rate: float, burst_len: BurstLength = 14,
                       seed: int = 0, fields=MISSABLE):
    """Blank out values in contiguous bursts within every series.

    ``burst_len`` is either a constant run length or a callable
    ``(rng, size) -> lengths``. Rows are never removed. Returns the new panel
    and its observed mask (True = value present).
    """
    if not 0 <= rate <= 1:
        raise ValueError(f"rate {rate} outside [0, 1]")
    rng = np.random.default_rng(seed)
    out = panel.copy()
    keys = series_keys(out).to_numpy()
    # rows of a series are contiguous in a sorted panel
    bounds = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1], True])
    lengths = np.diff(bounds)
    for fld in fields:
        miss = np.concatenate([_burst_mask(int(L), rate, burst_len, rng) for L in lengths]) \
            if lengths.size else np.zeros(0, dtype=bool)
        col = out[fld].to_numpy(dtype=float).copy()
        col[miss] = np.nan
        out[fld] = col
    return out, observed_mask(out, fields)


def summarize_panel(panel: pd.DataFrame, cutoff, period: str = "train") -> PanelStats:
    """Series-level statistics of a panel relative to a split cutoff.

    Missingness and coverage concern the ``sales`` field over rows of the
    chosen period (``train`` = before the cutoff, ``valid`` = on/after it,
    ``all``). Eliminated series end before the cutoff; new series start on or
    after it. Their ratios are taken over train and valid series
    respectively. Demand classes are computed from each series' observed
    sales within the period.
    """
    if len(panel) == 0:
        raise ValueError("panel is empty")
    cutoff = pd.Timestamp(cutoff)
    df = pd.DataFrame({
        "key": series_keys(panel).to_numpy(),
        "date": panel["date"].to_numpy(),
        "sales": panel["sales"].to_numpy(dtype=float),
    })
    life = df.groupby("key", sort=True)["date"].agg(["min", "max"])
    train_series = life["min"] < cutoff
    valid_series = life["max"] >= cutoff
    eliminated = int((life["max"] < cutoff).sum())
    new = int((life["min"] >= cutoff).sum())

    if period == "train":
        sel = df[df["date"] < cutoff]
    elif period == "valid":
        sel = df[df["date"] >= cutoff]
    elif period == "all":
        sel = df
    else:
        raise ValueError(f"unknown period {period!r}")
    if len(sel) == 0:
        raise ValueError(f"no rows in period {period!r}")
    g = sel.groupby("key", sort=True)
    n_rows = g["sales"].size()
    n_obs = g["sales"].count()
    span = (g["date"].max() - g["date"].min()).dt.days + 1
    missingness = 1.0 - n_obs / n_rows
    coverage = n_obs / span

    labels = []
    for _, s in g["sales"]:
        st = demand_stats(s.to_numpy()) if s.notna().any() else None
        labels.append(classify(st) if st is not None else DemandClass.NO_DEMAND)
    dist = {c: 0.0 for c in DemandClass}
    for lab in labels:
        dist[lab] += 1.0 / len(labels)

    return PanelStats(
        series_count=int(n_rows.size),
        avg_missingness=float(missingness.mean()),
        avg_coverage_ratio=float(coverage.mean()),
        eliminated_count=eliminated,
        new_count=new,
        eliminated_ratio=eliminated / max(1, int(train_series.sum())),
        new_ratio=new / max(1, int(valid_series.sum())),
        class_distribution=dist,
    )


# ------------------------------------------------------------------ CSV

def write_panel_csv(panel: pd.DataFrame, path) -> None:
    out = panel[PANEL_COLUMNS].copy()
    out["date"] = pd.to_datetime(out["date"]).dt.strftime("%Y-%m-%d")
    out["promo_flag"] = out["promo_flag"].astype(int)
    out.to_csv(path, index=False, na_rep="", float_format="%.10g")


def read_panel_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"product_id": str, "store_id": str, "group_id": str, "uon_id": str},
                     keep_default_na=False, na_values=[""])
    missing = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"panel file lacks columns {missing}")
    df = df[PANEL_COLUMNS].copy()
    df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
    df["promo_flag"] = df["promo_flag"].astype(bool)
    for c in ("sales", "price", "competitor_price", "cogs", "rebate", "stock", "cpi", "salary_regional"):
        df[c] = df[c].astype(float)
    return df.sort_values(["product_id", "store_id", "date"], kind="stable").reset_index(drop=True)


def profile_fields() -> list[str]:
    return [f.name for f in fields(GeneratorProfile)]
