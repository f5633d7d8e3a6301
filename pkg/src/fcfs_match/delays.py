"""Delay and waiting-time distributions for matched pairs.

Conditional on the waiting-type order, the distance between a matched agent
and its good is a sum of independent geometric stage variables, one per type
appearing at or after the match position; under Poisson arrivals each stage
becomes exponential. Moments therefore come out of the same enumeration pass
as the matching rates, and the generating functions are evaluated pointwise
by a dedicated pass.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

from .analytic import _cached_pass, matching_rates
from .errors import DomainError, DuplicateType, UnknownIdentifier, UnstableModel, ZeroRate
from .model import MatchingModel


@dataclass(frozen=True)
class GeometricStage:
    """One stage of a delay: success probability of draining the current prefix."""

    p: float

    @property
    def mean(self) -> float:
        return 1.0 / self.p

    @property
    def variance(self) -> float:
        return (1.0 - self.p) / (self.p * self.p)


def geometric_stage(model: MatchingModel, prefix) -> GeometricStage:
    """Stage parameter (mu_{S(prefix)} - lambda_prefix) / (lambda_bar + mu_bar)."""
    names = tuple(prefix)
    if not names:
        raise DomainError("prefix must be a nonempty sequence of agent types")
    if len(set(names)) != len(names):
        raise DuplicateType(f"prefix {names} repeats an agent type")
    lam_set = 0.0
    s_mask = 0
    for nm in names:
        i = model.agent_index.get(nm)
        if i is None:
            raise UnknownIdentifier(f"unknown agent type {nm!r}")
        lam_set += model.agent_rates[i]
        s_mask |= model.goods_of_agent[i]
    mu_set = sum(
        model.good_rates[j] for j in range(model.n_good_types) if s_mask >> j & 1
    )
    p = (mu_set - lam_set) / model.total_rate
    if p <= 0.0:
        raise UnstableModel(f"prefix {names} has nonpositive drain margin")
    return GeometricStage(p)


@dataclass(frozen=True)
class DelayReport:
    """Per-pair and per-agent-type delay moments, plus the Poisson-wait analogues.

    Pair keys are compatibility edges (good, agent). Delay entries count
    sequence positions; wait entries are in time units. A pair whose matching
    rate is zero is simply absent.
    """

    pair_mean: dict[tuple[str, str], float]
    pair_var: dict[tuple[str, str], float]
    agent_mean: dict[str, float]
    agent_var: dict[str, float]
    wait_pair_mean: dict[tuple[str, str], float]
    wait_pair_var: dict[tuple[str, str], float]
    wait_agent_mean: dict[str, float]
    wait_agent_var: dict[str, float]

    def _tables(self, kind: str):
        if kind == "delay":
            return self.pair_mean, self.pair_var, self.agent_mean, self.agent_var
        if kind == "wait":
            return self.wait_pair_mean, self.wait_pair_var, self.wait_agent_mean, self.wait_agent_var
        raise ValueError(f"kind must be 'delay' or 'wait', not {kind!r}")

    def to_json_dict(self, kind: str = "delay") -> dict:
        from ._format import round12

        pm, pv, am, av = self._tables(kind)
        return {
            "pairs": {
                f"{g},{a}": {"mean": round12(pm[(g, a)]), "variance": round12(pv[(g, a)])}
                for (g, a) in pm
            },
            "agents": {
                a: {"mean": round12(am[a]), "variance": round12(av[a])} for a in am
            },
        }

    def to_csv(self, kind: str = "delay") -> str:
        from ._format import fmt12

        pm, pv, am, av = self._tables(kind)
        lines = ["good,agent,mean,variance"]
        for (g, a) in pm:
            lines.append(f"{g},{a},{fmt12(pm[(g, a)])},{fmt12(pv[(g, a)])}")
        lines.append("")
        lines.append("agent,mean,variance")
        for a in am:
            lines.append(f"{a},{fmt12(am[a])},{fmt12(av[a])}")
        return "\n".join(lines) + "\n"


def _moment_report(model: MatchingModel, cap: int | None) -> DelayReport:
    result = _cached_pass(model, cap, True)
    report = matching_rates(model, cap=cap)
    n = model.n_agent_types
    mu_bar = model.mu_bar

    pair_mean: dict[tuple[str, str], float] = {}
    pair_var: dict[tuple[str, str], float] = {}
    wait_pair_mean: dict[tuple[str, str], float] = {}
    wait_pair_var: dict[tuple[str, str], float] = {}
    for (g, a), r in report.rates.items():
        if r <= 0.0:
            continue  # structurally possible only with zero-rate edges; reported absent
        j = model.good_index[g]
        i = model.agent_index[a]
        flat = j * n + i
        scale = result.b * (model.good_rates[j] / mu_bar) / r
        e = scale * result.de[flat]
        e2 = scale * result.de2[flat]
        v = scale * result.dv[flat]
        pair_mean[(g, a)] = e
        pair_var[(g, a)] = v + e2 - e * e
        we = scale * result.we[flat]
        we2 = scale * result.we2[flat]
        wv = scale * result.wv[flat]
        wait_pair_mean[(g, a)] = we
        wait_pair_var[(g, a)] = wv + we2 - we * we

    agent_mean: dict[str, float] = {}
    agent_var: dict[str, float] = {}
    wait_agent_mean: dict[str, float] = {}
    wait_agent_var: dict[str, float] = {}
    for a in model.agent_names:
        weights = report.theta.get(a, {})
        pairs = [(g, w) for g, w in weights.items() if (g, a) in pair_mean]
        if not pairs:
            continue
        m = sum(w * pair_mean[(g, a)] for g, w in pairs)
        second = sum(w * (pair_var[(g, a)] + pair_mean[(g, a)] ** 2) for g, w in pairs)
        agent_mean[a] = m
        agent_var[a] = second - m * m
        wm = sum(w * wait_pair_mean[(g, a)] for g, w in pairs)
        wsecond = sum(w * (wait_pair_var[(g, a)] + wait_pair_mean[(g, a)] ** 2) for g, w in pairs)
        wait_agent_mean[a] = wm
        wait_agent_var[a] = wsecond - wm * wm

    return DelayReport(
        pair_mean=pair_mean,
        pair_var=pair_var,
        agent_mean=agent_mean,
        agent_var=agent_var,
        wait_pair_mean=wait_pair_mean,
        wait_pair_var=wait_pair_var,
        wait_agent_mean=wait_agent_mean,
        wait_agent_var=wait_agent_var,
    )


def delay_moments(model: MatchingModel, *, cap: int | None = None) -> DelayReport:
    """Means and variances of per-pair and per-agent delays.

    The wait fields of the returned report are filled as well: both sets of
    moments fall out of the same enumeration pass.
    """
    return _moment_report(model, cap)


def wait_moments(model: MatchingModel, *, cap: int | None = None) -> DelayReport:
    """Waiting-time moments under the Poisson interpretation (same full report)."""
    return _moment_report(model, cap)


def _pair_context(model: MatchingModel, pair, cap):
    g, a = pair
    if g not in model.good_index or a not in model.agent_index:
        raise UnknownIdentifier(f"unknown pair ({g!r}, {a!r})")
    if not model.is_edge(g, a):
        raise ZeroRate(f"({g!r}, {a!r}) is not a compatibility edge; its rate is zero")
    report = matching_rates(model, cap=cap)
    r = report.rates[(g, a)]
    if r <= 0.0:
        raise ZeroRate(f"pair ({g!r}, {a!r}) has zero matching rate")
    return model.good_index[g], model.agent_index[a], report.b, r


def _mixture_value(model, j, i, cap, stage_factor):
    """Sum over ordered subsets of weight * product of per-stage factors from
    the match position onward, for matches of good j to agent i."""
    n = model.n_agent_types
    lam = model.agent_rates
    mu = model.good_rates
    good_masks = model.goods_of_agent
    agents_of_good = model.agents_of_good[j]

    total = 0.0
    comp = 0.0

    def walk(used, lam_set, s_mask, mu_set, weight, match_depth, factor):
        nonlocal total, comp
        for k in range(n):
            if used >> k & 1:
                continue
            nls = lam_set + lam[k]
            nmask = s_mask | good_masks[k]
            nmu = mu_set
            add_mask = nmask & ~s_mask
            jj = 0
            while add_mask:
                if add_mask & 1:
                    nmu += mu[jj]
                add_mask >>= 1
                jj += 1
            theta = nmu - nls
            x = weight * lam[k] / theta
            depth_matches = match_depth
            nfactor = factor
            if depth_matches == -1 and agents_of_good >> k & 1:
                if k == i:
                    depth_matches = 1  # matched to the requested agent here
                else:
                    continue  # matched to another agent: no deeper term contributes
            if depth_matches == 1:
                nfactor = factor * stage_factor(theta)
                y = x * nfactor - comp
                t = total + y
                comp = (t - total) - y
                total = t
            walk(used | 1 << k, nls, nmask, nmu, x, depth_matches, nfactor)

    walk(0, 0.0, 0, 0.0, 1.0, -1, 1.0)
    return total


def delay_pgf(model: MatchingModel, pair, z: float, *, cap: int | None = None) -> float:
    """Probability generating function of the pair delay, for z in [0, 1]."""
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"z = {z!r} outside [0, 1]")
    j, i, b, r = _pair_context(model, pair, cap)
    total_rate = model.total_rate

    def factor(theta: float) -> float:
        p = theta / total_rate
        return z * p / (1.0 - z * (1.0 - p))

    mix = _mixture_value(model, j, i, cap, factor)
    return (1.0 / r) * (model.good_rates[j] / model.mu_bar) * b * mix


@functools.lru_cache(maxsize=64)
def min_stage_rate(model: MatchingModel) -> float:
    """Smallest drain rate mu_{S(C)} - lambda_C over nonempty agent subsets."""
    best = float("inf")
    n = model.n_agent_types
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            lam_set = 0.0
            s_mask = 0
            for idx in combo:
                lam_set += model.agent_rates[idx]
                s_mask |= model.goods_of_agent[idx]
            mu_set = sum(
                model.good_rates[jj] for jj in range(model.n_good_types) if s_mask >> jj & 1
            )
            best = min(best, mu_set - lam_set)
    return best


def wait_mgf(model: MatchingModel, pair, s: float, *, cap: int | None = None) -> float:
    """Moment generating function of the pair waiting time, for s below the
    smallest stage rate reachable in the enumeration."""
    limit = min_stage_rate(model)
    if not s < limit:
        raise DomainError(f"s = {s!r} must lie strictly below the smallest stage rate {limit!r}")
    j, i, b, r = _pair_context(model, pair, cap)

    def factor(theta: float) -> float:
        return theta / (theta - s)

    mix = _mixture_value(model, j, i, cap, factor)
    return (1.0 / r) * (model.good_rates[j] / model.mu_bar) * b * mix
