"""Ordered-subset enumeration: normalizing constant, stationary weights, matching rates.

Every quantity here is a sum over ordered subsets (C_1, ..., C_k) of agent
types. A depth-first walk in declared type order visits each ordered subset
exactly once while maintaining incremental prefix sums, so the normalizing
constant, the matching rates, and the delay/wait moment accumulators all come
out of a single pass. The walk count grows like e * I!, so the agent-type
count is capped (default 12) unless explicitly overridden.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .errors import DomainError, DuplicateType, TooManyTypes, UnknownIdentifier, UnstableModel
from .model import MatchingModel, check_stability, validate

DEFAULT_TYPE_CAP = 12

# Prefixes whose drain margin (mu_set - lambda_set) / (lambda_bar + mu_bar) falls
# below this are treated as unstable rather than producing astronomical weights.
STABILITY_MARGIN = 1e-12


class PermutationTerm(NamedTuple):
    """One ordered subset of agent types with its incremental rate sums.

    weight is the product over prefixes of lambda_{C_l} / (prefix_mu[l] -
    prefix_lambda[l]); the stationary probability of observing exactly these
    types, in this first-appearance order, is the normalizing constant times
    weight.
    """

    order: tuple[str, ...]
    prefix_lambda: tuple[float, ...]
    prefix_mu: tuple[float, ...]
    weight: float


class _Kahan:
    """Compensated scalar accumulator."""

    __slots__ = ("total", "comp")

    def __init__(self):
        self.total = 0.0
        self.comp = 0.0

    def add(self, value: float) -> None:
        y = value - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


def _check_enumerable(model: MatchingModel, cap: int | None) -> None:
    validate(model)
    limit = DEFAULT_TYPE_CAP if cap is None else cap
    if model.n_agent_types > limit:
        raise TooManyTypes(
            f"{model.n_agent_types} agent types exceeds the enumeration cap {limit}; "
            "pass a larger cap explicitly to override"
        )
    report = check_stability(model)
    if not report.stable:
        raise UnstableModel(
            f"model is unstable: agent subset {report.witness.names} has arrival rate "
            f"{report.witness.rate!r} >= compatible good rate",
            witness=report.witness,
        )


def enumerate_terms(
    model: MatchingModel,
    visit: Callable[[PermutationTerm], None],
    *,
    cap: int | None = None,
    first_type: str | None = None,
) -> int:
    """Visit every nonempty ordered subset of agent types once; return the count.

    Visitation is depth-first, extending prefixes in declared type order, so
    two runs see identical term sequences. With first_type the walk is
    restricted to orders starting at that type; the full enumeration is the
    disjoint union of these branches (in declared order), which is the unit of
    partitioned evaluation: per-branch accumulations merge by addition.
    """
    _check_enumerable(model, cap)
    n = model.n_agent_types
    names = model.agent_names
    lam = model.agent_rates
    good_masks = model.goods_of_agent
    mu = model.good_rates
    total_rate = model.total_rate

    if first_type is not None:
        if first_type not in model.agent_index:
            raise UnknownIdentifier(f"unknown agent type {first_type!r}")
        roots = (model.agent_index[first_type],)
    else:
        roots = tuple(range(n))

    nj = model.n_good_types
    count = 0
    make = PermutationTerm

    def extend(order, p_lam, p_mu, weight, lam_set, s_mask, mu_set, used, choices):
        nonlocal count
        for i in choices:
            if used >> i & 1:
                continue
            nls = lam_set + lam[i]
            nmask = s_mask | good_masks[i]
            nmu = mu_set
            add = nmask & ~s_mask
            j = 0
            while add:
                if add & 1:
                    nmu += mu[j]
                add >>= 1
                j += 1
            theta = nmu - nls
            if theta / total_rate < STABILITY_MARGIN:
                raise UnstableModel(
                    f"prefix {order + (names[i],)} has drain margin below {STABILITY_MARGIN:g}"
                )
            x = weight * lam[i] / theta
            norder = order + (names[i],)
            npl = p_lam + (nls,)
            npm = p_mu + (nmu,)
            visit(make(norder, npl, npm, x))
            count += 1
            extend(norder, npl, npm, x, nls, nmask, nmu, used | 1 << i, all_types)

    all_types = tuple(range(n))
    extend((), (), (), 1.0, 0.0, 0, 0.0, 0, roots)
    return count


@dataclass(frozen=True)
class _PassResult:
    b: float
    rate_raw: list[float]  # flat (good j * I + agent i) first-compatible credit sums
    # delay-moment accumulators (position counts), same flat indexing
    de: list[float] | None
    de2: list[float] | None
    dv: list[float] | None
    # wait-moment accumulators (time units)
    we: list[float] | None
    we2: list[float] | None
    wv: list[float] | None


def _rate_pass(model: MatchingModel, *, cap: int | None, moments: bool) -> _PassResult:
    """One depth-first pass accumulating B, the per-pair rate sums and, when
    requested, the per-pair delay and wait moment sums."""
    _check_enumerable(model, cap)
    n = model.n_agent_types
    nj = model.n_good_types
    lam = model.agent_rates
    mu = model.good_rates
    good_masks = model.goods_of_agent
    total_rate = model.total_rate

    b_acc = _Kahan()
    size = nj * n
    r_sum = [0.0] * size
    r_comp = [0.0] * size
    if moments:
        de_sum = [0.0] * size
        de_comp = [0.0] * size
        de2_sum = [0.0] * size
        de2_comp = [0.0] * size
        dv_sum = [0.0] * size
        dv_comp = [0.0] * size
        we_sum = [0.0] * size
        we_comp = [0.0] * size
        we2_sum = [0.0] * size
        we2_comp = [0.0] * size
        wv_sum = [0.0] * size
        wv_comp = [0.0] * size

    # Cumulative per-depth stage sums along the current path (index d+1 = depth d).
    cum_invp = [0.0] * (n + 1)
    cum_vgeo = [0.0] * (n + 1)
    cum_invth = [0.0] * (n + 1)
    cum_vexp = [0.0] * (n + 1)
    weights = [1.0] * (n + 1)
    lam_sets = [0.0] * (n + 1)
    s_masks = [0] * (n + 1)
    mu_sets = [0.0] * (n + 1)
    match_pos = [-1] * nj  # depth at which each good type first became matchable
    matched: list[tuple[int, int, int]] = []  # (good j, flat j*n+agent, match depth)
    matched_at: list[int] = [0] * (n + 1)  # matched-list length at each depth

    order_idx: list[int] = []
    used = 0
    pending = [list(range(n - 1, -1, -1))]
    while pending:
        frame = pending[-1]
        if not frame:
            pending.pop()
            if order_idx:
                d = len(order_idx) - 1
                used &= ~(1 << order_idx.pop())
                while len(matched) > matched_at[d]:
                    match_pos[matched.pop()[0]] = -1
            continue
        i = frame.pop()
        d = len(order_idx)  # depth of the node being created
        lam_set = lam_sets[d] + lam[i]
        s_mask = s_masks[d] | good_masks[i]
        mu_set = mu_sets[d]
        new_mask = s_mask & ~s_masks[d]
        for j in range(nj):
            if new_mask >> j & 1:
                mu_set += mu[j]
        theta = mu_set - lam_set
        if theta / total_rate < STABILITY_MARGIN:
            raise UnstableModel(
                f"prefix ending at {model.agent_names[i]!r} has drain margin below "
                f"{STABILITY_MARGIN:g}"
            )
        x = weights[d] * lam[i] / theta
        order_idx.append(i)
        used |= 1 << i
        lam_sets[d + 1] = lam_set
        s_masks[d + 1] = s_mask
        mu_sets[d + 1] = mu_set
        weights[d + 1] = x
        if moments:
            p = theta / total_rate
            cum_invp[d + 1] = cum_invp[d] + 1.0 / p
            cum_vgeo[d + 1] = cum_vgeo[d] + (1.0 - p) / (p * p)
            cum_invth[d + 1] = cum_invth[d] + 1.0 / theta
            cum_vexp[d + 1] = cum_vexp[d] + 1.0 / (theta * theta)

        b_acc.add(x)
        matched_at[d] = len(matched)
        agent_mask = model.agents_of_good
        for j in range(nj):
            if match_pos[j] < 0 and agent_mask[j] >> i & 1:
                match_pos[j] = d
                matched.append((j, j * n + i, d))

        for j, flat, l in matched:
            y = x - r_comp[flat]
            t = r_sum[flat] + y
            r_comp[flat] = (t - r_sum[flat]) - y
            r_sum[flat] = t
            if moments:
                ae = cum_invp[d + 1] - cum_invp[l]
                av = cum_vgeo[d + 1] - cum_vgeo[l]
                wme = cum_invth[d + 1] - cum_invth[l]
                wmv = cum_vexp[d + 1] - cum_vexp[l]
                for sums, comps, v in (
                    (de_sum, de_comp, x * ae),
                    (de2_sum, de2_comp, x * ae * ae),
                    (dv_sum, dv_comp, x * av),
                    (we_sum, we_comp, x * wme),
                    (we2_sum, we2_comp, x * wme * wme),
                    (wv_sum, wv_comp, x * wmv),
                ):
                    y = v - comps[flat]
                    t = sums[flat] + y
                    comps[flat] = (t - sums[flat]) - y
                    sums[flat] = t
        pending.append([k for k in range(n - 1, -1, -1) if not used >> k & 1])

    b = 1.0 / (1.0 + b_acc.total)
    if moments:
        return _PassResult(b, r_sum, de_sum, de2_sum, dv_sum, we_sum, we2_sum, wv_sum)
    return _PassResult(b, r_sum, None, None, None, None, None, None)


@functools.lru_cache(maxsize=64)
def _cached_pass(model: MatchingModel, cap: int | None, moments: bool) -> _PassResult:
    return _rate_pass(model, cap=cap, moments=moments)


def normalizing_constant(model: MatchingModel, *, cap: int | None = None) -> float:
    """Probability of a perfect match (no agent waiting): 1 / (1 + sum of weights)."""
    return _cached_pass(model, cap, False).b


def pi_y_perm(model: MatchingModel, order, *, cap: int | None = None) -> float:
    """Stationary probability that the waiting agent types, in first-appearance
    order, are exactly the given sequence."""
    names = tuple(order)
    if not names:
        raise DomainError("order must be a nonempty sequence of agent types")
    if len(set(names)) != len(names):
        raise DuplicateType(f"order {names} repeats an agent type")
    for nm in names:
        if nm not in model.agent_index:
            raise UnknownIdentifier(f"unknown agent type {nm!r}")
    b = normalizing_constant(model, cap=cap)
    lam_set = 0.0
    s_mask = 0
    weight = 1.0
    for nm in names:
        i = model.agent_index[nm]
        lam_set += model.agent_rates[i]
        s_mask |= model.goods_of_agent[i]
        mu_set = 0.0
        for j in range(model.n_good_types):
            if s_mask >> j & 1:
                mu_set += model.good_rates[j]
        if mu_set <= lam_set:
            raise UnstableModel(f"prefix {names} is not drained under this model")
        weight *= model.agent_rates[i] / (mu_set - lam_set)
    return b * weight


@dataclass(frozen=True)
class RateReport:
    """Matching and loss rates plus the per-type conditional outcome fractions.

    rates maps each compatibility edge (good, agent) to the long-run fraction
    of all goods producing that match; loss maps each good type to its lost
    fraction. eta conditions on the good type (None key = lost); theta
    conditions on the agent type.
    """

    b: float
    rates: dict[tuple[str, str], float]
    loss: dict[str, float]
    eta: dict[str, dict[str | None, float]]
    theta: dict[str, dict[str, float]]

    def agent_throughput(self, agent: str) -> float:
        return sum(v for (_, a), v in self.rates.items() if a == agent)

    def to_json_dict(self) -> dict:
        from ._format import round12

        return {
            "b": round12(self.b),
            "rates": {g: {a: round12(v) for (gg, a), v in self.rates.items() if gg == g}
                      for g in self.loss},
            "loss": {g: round12(v) for g, v in self.loss.items()},
            "eta": {g: {("LOST" if a is None else a): round12(v) for a, v in dist.items()}
                    for g, dist in self.eta.items()},
            "theta": {a: {g: round12(v) for g, v in dist.items()}
                      for a, dist in self.theta.items()},
        }

    def to_csv(self) -> str:
        from ._format import fmt12

        lines = ["good,agent,rate"]
        for (g, a), v in self.rates.items():
            lines.append(f"{g},{a},{fmt12(v)}")
        for g, v in self.loss.items():
            lines.append(f"{g},LOST,{fmt12(v)}")
        return "\n".join(lines) + "\n"


def matching_rates(model: MatchingModel, *, cap: int | None = None) -> RateReport:
    """Single-pass computation of all matching rates and loss rates.

    Each enumerated term credits its weight to the first compatible agent type
    in first-appearance order, per good type; scaling by B and the good-type
    frequency turns the sums into rates, and the lost fraction is the good's
    frequency share minus its matched rates.
    """
    result = _cached_pass(model, cap, False)
    return _build_rate_report(model, result)


def _build_rate_report(model: MatchingModel, result: _PassResult) -> RateReport:
    n = model.n_agent_types
    mu = model.good_rates
    mu_bar = model.mu_bar
    rates: dict[tuple[str, str], float] = {}
    loss: dict[str, float] = {}
    eta: dict[str, dict[str | None, float]] = {}
    theta: dict[str, dict[str, float]] = {}
    for j, g in enumerate(model.good_names):
        share = mu[j] / mu_bar
        matched_total = 0.0
        for i, a in enumerate(model.agent_names):
            if not model.is_edge(g, a):
                continue
            r = result.b * share * result.rate_raw[j * n + i]
            rates[(g, a)] = r
            matched_total += r
        loss[g] = share - matched_total
        dist: dict[str | None, float] = {None: loss[g] / share}
        for i, a in enumerate(model.agent_names):
            if model.is_edge(g, a):
                dist[a] = rates[(g, a)] / share
        eta[g] = dist
    for a in model.agent_names:
        through = sum(rates.get((g, a), 0.0) for g in model.good_names)
        if through > 0.0:
            theta[a] = {g: rates[(g, a)] / through for g in model.good_names if (g, a) in rates}
        else:
            theta[a] = {}
    return RateReport(b=result.b, rates=rates, loss=loss, eta=eta, theta=theta)
