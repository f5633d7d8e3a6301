"""Light-traffic limits, traffic-intensity sweeps, and the dedicated-pair baseline."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .analytic import RateReport, matching_rates
from .delays import DelayReport, delay_moments
from .errors import DomainError, DuplicateType, UnknownIdentifier, UnstableGridPoint
from .model import MatchingModel, max_stable_rho, validate

THREADS_ENV = "FCFS_MATCH_THREADS"


@dataclass(frozen=True)
class LightTrafficLimit:
    """Vanishing-traffic limits: each agent is served by the first compatible good.

    theta maps each edge (good, agent) to the limiting conditional fraction
    mu_good / mu_{S(agent)}, which is exact and normalization-free. rates
    scales theta by the agent frequency (the limit of the per-pair rate under
    the convention that almost all goods are lost as traffic vanishes).
    """

    rates: dict[tuple[str, str], float]
    theta: dict[tuple[str, str], float]


def light_traffic_rates(model: MatchingModel) -> LightTrafficLimit:
    validate(model)
    rates: dict[tuple[str, str], float] = {}
    theta: dict[tuple[str, str], float] = {}
    for i, (a, alpha_i) in enumerate(model.agent_types):
        mu_nbhd = sum(
            model.good_rates[j]
            for j in range(model.n_good_types)
            if model.goods_of_agent[i] >> j & 1
        )
        for j, g in enumerate(model.good_names):
            if model.is_edge(g, a):
                frac = model.good_rates[j] / mu_nbhd
                theta[(g, a)] = frac
                rates[(g, a)] = alpha_i * frac
    return LightTrafficLimit(rates=rates, theta=theta)


@dataclass(frozen=True)
class SweepSeries:
    """Aligned per-grid-point series of rates and delay moments.

    Every grid point holds mu_bar and the type frequencies fixed and rescales
    lambda_bar to rho * mu_bar.
    """

    rho_grid: tuple[float, ...]
    rates: dict[tuple[str, str], tuple[float, ...]]
    loss: dict[str, tuple[float, ...]]
    delay_mean: dict[tuple[str, str], tuple[float, ...]]
    delay_var: dict[tuple[str, str], tuple[float, ...]]

    def to_csv(self) -> str:
        from ._format import fmt12

        lines = ["rho,good,agent,rate,delay_mean,delay_var"]
        for t, rho in enumerate(self.rho_grid):
            for (g, a) in self.rates:
                lines.append(
                    f"{fmt12(rho)},{g},{a},{fmt12(self.rates[(g, a)][t])},"
                    f"{fmt12(self.delay_mean[(g, a)][t])},{fmt12(self.delay_var[(g, a)][t])}"
                )
            for g in self.loss:
                lines.append(f"{fmt12(rho)},{g},LOST,{fmt12(self.loss[g][t])},,")
        return "\n".join(lines) + "\n"


def _sweep_point(model: MatchingModel, rho: float, cap: int | None):
    point = model.with_lambda_bar(rho * model.mu_bar)
    return matching_rates(point, cap=cap), delay_moments(point, cap=cap)


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sweep(model: MatchingModel, rho_grid, *, cap: int | None = None) -> SweepSeries:
    """Compute rates and delay moments on a grid of traffic intensities.

    Grid points are independent; with FCFS_MATCH_THREADS > 1 they are computed
    by a process pool and reassembled in grid order, so output is identical to
    the serial run.
    """
    validate(model)
    grid = tuple(float(r) for r in rho_grid)
    if not grid:
        raise DomainError("rho grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("rho grid must be strictly increasing")
    limit = max_stable_rho(model).value
    for rho in grid:
        if not 0.0 < rho < limit:
            raise UnstableGridPoint(rho, limit)

    workers = min(_worker_count(), len(grid))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, [model] * len(grid), grid, [cap] * len(grid)))
    else:
        results = [_sweep_point(model, rho, cap) for rho in grid]

    first_rates: RateReport = results[0][0]
    first_delays: DelayReport = results[0][1]
    rates = {
        pair: tuple(res[0].rates[pair] for res in results) for pair in first_rates.rates
    }
    loss = {g: tuple(res[0].loss[g] for res in results) for g in first_rates.loss}
    delay_mean = {
        pair: tuple(res[1].pair_mean[pair] for res in results) for pair in first_delays.pair_mean
    }
    delay_var = {
        pair: tuple(res[1].pair_var[pair] for res in results) for pair in first_delays.pair_var
    }
    return SweepSeries(grid, rates, loss, delay_mean, delay_var)


@dataclass(frozen=True)
class DedicatedPair:
    """M/M/1 baseline for one good type reserved to one agent type."""

    stable: bool
    wait_mean: float | None  # 1 / (mu_good - lambda_agent); None when unstable


def dedicated_baseline(model: MatchingModel, pairing) -> dict[tuple[str, str], DedicatedPair]:
    """Expected waits when each good type in the pairing serves only its agent.

    pairing maps good identifiers to agent identifiers, one-to-one, along
    compatibility edges. Pairs with lambda_agent >= mu_good are reported
    unstable rather than raising.
    """
    validate(model)
    pairs = dict(pairing)
    if len(set(pairs.values())) != len(pairs):
        raise DuplicateType("pairing must map distinct goods to distinct agents")
    out: dict[tuple[str, str], DedicatedPair] = {}
    for g, a in pairs.items():
        if g not in model.good_index or a not in model.agent_index:
            raise UnknownIdentifier(f"unknown pair ({g!r}, {a!r})")
        if not model.is_edge(g, a):
            raise UnknownIdentifier(f"({g!r}, {a!r}) is not a compatibility edge")
        mu = model.good_rates[model.good_index[g]]
        lam = model.agent_rates[model.agent_index[a]]
        if lam < mu:
            out[(g, a)] = DedicatedPair(stable=True, wait_mean=1.0 / (mu - lam))
        else:
            out[(g, a)] = DedicatedPair(stable=False, wait_mean=None)
    return out
