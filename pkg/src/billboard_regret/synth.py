"""Advertiser workloads over the demand-supply / individual-demand grid."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable

import numpy as np

from .core import Advertiser, InfluenceModel
from .errors import ConfigError, InputDomainError

log = logging.getLogger(__name__)

ALPHAS = (0.4, 0.6, 0.8, 1.0, 1.2)
DEMAND_RATIOS = (0.01, 0.02, 0.05, 0.10)
GAMMAS = (0.0, 0.25, 0.5, 0.75, 1.0)

_REDRAWS = 10
# guards floor() against products like 0.29 * 100 = 28.999999999999996
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class ScenarioParams:
    alpha: float = 0.6
    avg_demand_ratio: float = 0.05
    gamma: float = 0.5
    lambda_m: float = 100.0
    beta_range: tuple[float, float] = (0.8, 1.2)
    tau_range: tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if not 0 < self.avg_demand_ratio <= 1:
            raise ConfigError("avg_demand_ratio must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not self.lambda_m > 0:
            raise ConfigError("lambda_m must be positive")
        for name in ("beta_range", "tau_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} bounds out of order")
        object.__setattr__(self, "beta_range", tuple(map(float, self.beta_range)))
        object.__setattr__(self, "tau_range", tuple(map(float, self.tau_range)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_range"] = list(self.beta_range)
        d["tau_range"] = list(self.tau_range)
        return d

    @classmethod
    def from_dict(cls, data) -> "ScenarioParams":
        data = dict(data)
        for k in ("beta_range", "tau_range"):
            if k in data:
                data[k] = tuple(data[k])
        return cls(**data)


@dataclass(frozen=True)
class SupplyStats:
    total_supply: float
    advertiser_count: int
    global_demand: float


def derive_supply(
    model: InfluenceModel, slots=None, params: ScenarioParams | None = None, **count_opts
) -> SupplyStats:
    """Provider supply I^H (sum of individual slot influences).

    Without ``params`` the advertiser count and global demand are left at 0.
    """
    if slots is not None and not np.isnan(slots.influence).any():
        total = math.fsum(slots.influence.tolist())
    else:
        total = math.fsum(model.individual_influence.tolist())
    if params is None:
        return SupplyStats(total, 0, 0.0)
    n = advertiser_count(params, **count_opts)
    return SupplyStats(total, n, params.alpha * total)


def advertiser_count(
    params: ScenarioParams,
    *,
    fixed_advertiser_count: bool = False,
    max_advertisers: int | None = None,
) -> int:
    """round(alpha / p), or round(1 / p) under the fixed-count protocol; capped."""
    raw = (1.0 if fixed_advertiser_count else params.alpha) / params.avg_demand_ratio
    n = max(1, int(round(raw)))
    if abs(raw - round(raw)) > 1e-6:
        log.warning("alpha / p = %.6g is not integral; using %d advertisers", raw, n)
    if max_advertisers is not None:
        n = min(n, int(max_advertisers))
    return n


def generate_advertisers(stats: SupplyStats, params: ScenarioParams, rng=None) -> list[Advertiser]:
    """Demand floor(beta * I^H * r), payment floor(tau * demand), fresh draws each.

    ``r`` is the average-individual demand ratio; when the advertiser count was
    overridden (fixed-count protocol or a cap) it becomes ``alpha / n`` so the
    global demand still tracks ``alpha``.  Zero draws are redrawn, then
    clamped to 1.
    """
    if not stats.total_supply > 0:
        raise InputDomainError("total supply must be positive to generate advertisers")
    n = stats.advertiser_count
    natural = params.alpha / params.avg_demand_ratio
    if abs(natural - n) < 1e-6:
        ratio = params.avg_demand_ratio
    else:
        ratio = params.alpha / n
    if rng is None:
        rng = np.random.default_rng(params.seed)
    out = []
    for i in range(n):
        demand = payment = 0
        for _ in range(_REDRAWS):
            beta = rng.uniform(*params.beta_range)
            demand = math.floor(beta * stats.total_supply * ratio + _FLOOR_EPS)
            if demand > 0:
                break
        demand = max(demand, 1)
        for _ in range(_REDRAWS):
            tau = rng.uniform(*params.tau_range)
            payment = math.floor(tau * demand + _FLOOR_EPS)
            if payment > 0:
                break
        payment = max(payment, 1)
        out.append(Advertiser(i, float(demand), float(payment)))
    return out


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def scenario_grid(
    base: ScenarioParams,
    alphas: Iterable[float] = ALPHAS,
    ratios: Iterable[float] = DEMAND_RATIOS,
) -> list[ScenarioParams]:
    """alpha x p product, row-major in alpha.

    Each cell's seed derives from the base seed and the cell's own values, so
    a restricted grid reuses the seeds of the full one.
    """
    cells = []
    for a in alphas:
        for p in ratios:
            seed = derive_seed(base.seed, round(a * 10_000), round(p * 10_000))
            cells.append(replace(base, alpha=float(a), avg_demand_ratio=float(p), seed=seed))
    return cells


def gamma_grid(base: ScenarioParams, gammas: Iterable[float] = GAMMAS) -> list[ScenarioParams]:
    return [replace(base, gamma=float(g)) for g in gammas]
