"""Monte Carlo verification: batch simulator, estimates, analytic comparison.

run() drives the compiled kernel over a seeded uniform stream and returns raw
per-batch counters; every estimate (matching rates, loss rates, empty-state
probability, delay moments, waiting-list-order occupancies) carries a
batch-means standard error. compare_with_analytic() lines the estimates up
against the enumeration results as z-scores.

The item-level reference machinery (exchange transform, reversed-time
re-matching, detailed states) is re-exported here from the detailed module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernel
from .analytic import enumerate_terms, matching_rates, normalizing_constant
from .delays import delay_moments
from .errors import DomainError, UnknownIdentifier, UnstableModel
from .model import MatchingModel, check_stability, validate
from .detailed import (  # noqa: F401  (public simulator surface)
    AGENT,
    GOOD,
    MARK_AGENT,
    MARK_EX_AGENT,
    MARK_EX_GOOD,
    DetailedTracker,
    ExchangedSequence,
    Lost,
    MatchWindow,
    Matched,
    Queued,
    ReversibilityReport,
    SequenceItem,
    UnmatchedList,
    detailed_state,
    exchange_transform,
    generate_item,
    is_admissible,
    rematch_reversed,
    simulate_window,
    step_fcfs,
    verify_reversibility,
    window_from_uniforms,
)

DEFAULT_BATCHES = 50
MIN_BURN_IN = 10_000
OCCUPANCY_TYPE_LIMIT = 12  # projection packing uses 4 bits per type


class Estimate(NamedTuple):
    value: float
    stderr: float


def _ratio_estimate(num: np.ndarray, den: np.ndarray) -> Estimate:
    total = den.sum()
    if total <= 0:
        return Estimate(math.nan, math.inf)
    value = float(num.sum() / total)
    valid = den > 0
    if valid.sum() < 2:
        return Estimate(value, math.inf)
    ests = num[valid] / den[valid]
    stderr = float(ests.std(ddof=1) / math.sqrt(int(valid.sum())))
    return Estimate(value, stderr)


@dataclass
class SimStats:
    """Raw per-batch counters of one simulation run (or a merge of runs)."""

    agent_names: tuple[str, ...]
    good_names: tuple[str, ...]
    seeds: tuple[int, ...]
    n_events: int
    burn_in: int
    n_batches: int
    match_counts: np.ndarray  # (batches, goods, agents) int64
    loss_counts: np.ndarray  # (batches, goods) int64
    delay_sums: np.ndarray  # (batches, goods, agents) int64
    delay_sqs: np.ndarray  # (batches, goods, agents) float64
    goods_counts: np.ndarray  # (batches,) int64
    events_counts: np.ndarray  # (batches,) int64
    occupancy: dict[tuple[str, ...], np.ndarray]  # order tuple -> (batches,) int64
    total_agents: int
    total_goods: int
    final_unmatched: int
    tracks_occupancy: bool

    # --- estimates ---

    def _pair(self, good: str, agent: str) -> tuple[int, int]:
        try:
            return self.good_names.index(good), self.agent_names.index(agent)
        except ValueError as exc:
            raise UnknownIdentifier(f"unknown pair ({good!r}, {agent!r})") from exc

    def rate(self, good: str, agent: str) -> Estimate:
        j, i = self._pair(good, agent)
        return _ratio_estimate(self.match_counts[:, j, i], self.goods_counts)

    def loss_rate(self, good: str) -> Estimate:
        j = self.good_names.index(good)
        return _ratio_estimate(self.loss_counts[:, j], self.goods_counts)

    def b_hat(self) -> Estimate:
        return self.pi_y(())

    def pi_y(self, order) -> Estimate:
        if not self.tracks_occupancy:
            raise DomainError("waiting-order occupancy was not tracked for this run")
        counts = self.occupancy.get(tuple(order), np.zeros(self.n_batches, dtype=np.int64))
        return _ratio_estimate(counts, self.events_counts)

    def delay_mean(self, good: str, agent: str) -> Estimate:
        j, i = self._pair(good, agent)
        return _ratio_estimate(
            self.delay_sums[:, j, i].astype(np.float64), self.match_counts[:, j, i]
        )

    def delay_var(self, good: str, agent: str) -> Estimate:
        j, i = self._pair(good, agent)
        m = self.match_counts[:, j, i]
        total_m = m.sum()
        if total_m <= 0:
            return Estimate(math.nan, math.inf)
        mean = self.delay_sums[:, j, i].sum() / total_m
        value = float(self.delay_sqs[:, j, i].sum() / total_m - mean * mean)
        valid = m > 1
        if valid.sum() < 2:
            return Estimate(value, math.inf)
        bm = self.delay_sums[valid, j, i] / m[valid]
        bv = self.delay_sqs[valid, j, i] / m[valid] - bm * bm
        stderr = float(bv.std(ddof=1) / math.sqrt(int(valid.sum())))
        return Estimate(value, stderr)

    def agent_delay_mean(self, agent: str) -> Estimate:
        i = self.agent_names.index(agent)
        return _ratio_estimate(
            self.delay_sums[:, :, i].sum(axis=1).astype(np.float64),
            self.match_counts[:, :, i].sum(axis=1),
        )

    @property
    def total_matches(self) -> int:
        return int(self.match_counts.sum())

    @property
    def total_losses(self) -> int:
        return int(self.loss_counts.sum())

    @property
    def events_post_burn_in(self) -> int:
        return int(self.events_counts.sum())

    # --- composition and serialization ---

    @classmethod
    def merge(cls, parts) -> "SimStats":
        """Associative counter addition across replications (fixed seed order)."""
        parts = list(parts)
        head = parts[0]
        for p in parts[1:]:
            if (p.agent_names, p.good_names, p.n_batches) != (
                head.agent_names,
                head.good_names,
                head.n_batches,
            ):
                raise DomainError("cannot merge stats from differently shaped runs")
        occupancy: dict[tuple[str, ...], np.ndarray] = {}
        for p in parts:
            for key, arr in p.occupancy.items():
                if key in occupancy:
                    occupancy[key] = occupancy[key] + arr
                else:
                    occupancy[key] = arr.copy()
        return cls(
            agent_names=head.agent_names,
            good_names=head.good_names,
            seeds=tuple(s for p in parts for s in p.seeds),
            n_events=sum(p.n_events for p in parts),
            burn_in=head.burn_in,
            n_batches=head.n_batches,
            match_counts=sum(p.match_counts for p in parts),
            loss_counts=sum(p.loss_counts for p in parts),
            delay_sums=sum(p.delay_sums for p in parts),
            delay_sqs=sum(p.delay_sqs for p in parts),
            goods_counts=sum(p.goods_counts for p in parts),
            events_counts=sum(p.events_counts for p in parts),
            occupancy=occupancy,
            total_agents=sum(p.total_agents for p in parts),
            total_goods=sum(p.total_goods for p in parts),
            final_unmatched=sum(p.final_unmatched for p in parts),
            tracks_occupancy=all(p.tracks_occupancy for p in parts),
        )

    def to_json_dict(self) -> dict:
        from ._format import round12

        def est(e: Estimate):
            return {"value": round12(e.value), "stderr": round12(e.stderr) if math.isfinite(e.stderr) else None}

        rates = {}
        delays = {}
        for j, g in enumerate(self.good_names):
            for i, a in enumerate(self.agent_names):
                if self.match_counts[:, j, i].sum() > 0:
                    rates[f"{g},{a}"] = est(self.rate(g, a))
                    delays[f"{g},{a}"] = {
                        "mean": est(self.delay_mean(g, a)),
                        "variance": est(self.delay_var(g, a)),
                    }
        return {
            "seeds": list(self.seeds),
            "n_events": self.n_events,
            "burn_in": self.burn_in,
            "n_batches": self.n_batches,
            "total_agents": self.total_agents,
            "total_goods": self.total_goods,
            "final_unmatched": self.final_unmatched,
            "events_post_burn_in": self.events_post_burn_in,
            "empty_state": est(self.b_hat()) if self.tracks_occupancy else None,
            "rates": rates,
            "loss": {g: est(self.loss_rate(g)) for g in self.good_names},
            "delays": delays,
            "occupancy": {
                ">".join(key): [int(v) for v in arr] for key, arr in sorted(self.occupancy.items())
            },
        }


def default_burn_in(n_events: int) -> int:
    """One percent of the run, at least 10^4, but always below the run length."""
    burn = max(MIN_BURN_IN, n_events // 100)
    if burn >= n_events:
        burn = n_events // 10
    return burn


def run(
    model: MatchingModel,
    n_events: int,
    seed: int,
    burn_in: int | None = None,
    n_batches: int = DEFAULT_BATCHES,
    queue_capacity: int = 65_536,
) -> SimStats:
    """Simulate n_events items from the empty state and tally outcomes.

    Statistics ignore the first burn_in events. The uniform stream is drawn
    from numpy's default generator in fixed-size chunks, two uniforms per item
    (kind, then type), so identical arguments give bit-identical stats.
    """
    validate(model)
    report = check_stability(model)
    if not report.stable:
        raise UnstableModel("refusing to simulate an unstable model", witness=report.witness)
    if burn_in is None:
        burn_in = default_burn_in(n_events)
    if not 0 <= burn_in < n_events:
        raise DomainError(f"need 0 <= burn_in < n_events, got {burn_in} / {n_events}")
    if not 1 < n_batches < (1 << _kernel.BATCH_BITS):
        raise DomainError(f"n_batches must be in (1, {1 << _kernel.BATCH_BITS})")
    if n_events - burn_in < n_batches:
        raise DomainError("need at least one post-burn-in event per batch")

    n_agent = model.n_agent_types
    n_good = model.n_good_types
    track = n_agent <= OCCUPANCY_TYPE_LIMIT
    alpha_cum = np.cumsum(np.asarray(model.alpha))
    beta_cum = np.cumsum(np.asarray(model.beta))
    compat = np.zeros((n_good, n_agent), dtype=np.bool_)
    for g, a in model.edges:
        compat[model.good_index[g], model.agent_index[a]] = True
    p_agent = model.lambda_bar / model.total_rate

    queues = np.zeros((n_agent, max(2, queue_capacity)), dtype=np.int64)
    qhead = np.zeros(n_agent, dtype=np.int64)
    qlen = np.zeros(n_agent, dtype=np.int64)
    match_counts = np.zeros((n_batches, n_good, n_agent), dtype=np.int64)
    loss_counts = np.zeros((n_batches, n_good), dtype=np.int64)
    delay_sums = np.zeros((n_batches, n_good, n_agent), dtype=np.int64)
    delay_sqs = np.zeros((n_batches, n_good, n_agent), dtype=np.float64)
    goods_counts = np.zeros(n_batches, dtype=np.int64)
    events_counts = np.zeros(n_batches, dtype=np.int64)
    occupancy = _kernel.make_occupancy_dict()
    totals = np.zeros(4, dtype=np.int64)

    rng = np.random.default_rng(seed)
    done = 0
    while done < n_events:
        m = min(_kernel.CHUNK, n_events - done)
        draws = rng.random((2, m))
        offset = 0
        while offset < m:
            rc = _kernel.sim_chunk(
                draws[0, offset:], draws[1, offset:], done + offset, n_events, burn_in,
                n_batches, p_agent, alpha_cum, beta_cum, compat,
                queues, qhead, qlen,
                match_counts, loss_counts, delay_sums, delay_sqs,
                goods_counts, events_counts, occupancy, totals, track,
            )
            if rc == 0:
                offset = m
            else:
                offset += int(totals[3])
                queues = _kernel.grow_queues(queues, qhead, qlen)
        done += m

    occ: dict[tuple[str, ...], np.ndarray] = {}
    mask = (1 << _kernel.BATCH_BITS) - 1
    for key, count in occupancy.items():
        b = int(key) & mask
        code = int(key) >> _kernel.BATCH_BITS
        order = []
        while code:
            order.append(model.agent_names[(code & 0xF) - 1])
            code >>= 4
        tup = tuple(order)
        if tup not in occ:
            occ[tup] = np.zeros(n_batches, dtype=np.int64)
        occ[tup][b] += int(count)

    return SimStats(
        agent_names=model.agent_names,
        good_names=model.good_names,
        seeds=(seed,),
        n_events=n_events,
        burn_in=burn_in,
        n_batches=n_batches,
        match_counts=match_counts,
        loss_counts=loss_counts,
        delay_sums=delay_sums,
        delay_sqs=delay_sqs,
        goods_counts=goods_counts,
        events_counts=events_counts,
        occupancy=occ,
        total_agents=int(totals[0]),
        total_goods=int(totals[1]),
        final_unmatched=int(qlen.sum()),
        tracks_occupancy=track,
    )


class VerifyRow(NamedTuple):
    quantity: str
    analytic: float
    empirical: float
    stderr: float
    z: float


def _z(analytic: float, est: Estimate) -> float:
    if est.stderr == 0.0:
        return 0.0 if est.value == analytic else math.inf
    if not math.isfinite(est.stderr):
        return math.nan
    return (est.value - analytic) / est.stderr


def analytic_pi_y(model: MatchingModel, *, cap: int | None = None) -> dict[tuple[str, ...], float]:
    """Stationary probability of every first-appearance order, plus the empty one."""
    b = normalizing_constant(model, cap=cap)
    table: dict[tuple[str, ...], float] = {(): b}

    def visit(term):
        table[term.order] = b * term.weight

    enumerate_terms(model, visit, cap=cap)
    return table


def compare_with_analytic(
    model: MatchingModel,
    stats: SimStats,
    *,
    pi_y_threshold: float = 1e-4,
    cap: int | None = None,
) -> list[VerifyRow]:
    """Side-by-side rows (quantity, analytic, empirical, stderr, z) for every
    analytically computed quantity the simulator estimates."""
    report = matching_rates(model, cap=cap)
    delays = delay_moments(model, cap=cap)
    rows: list[VerifyRow] = []

    if stats.tracks_occupancy:
        est = stats.b_hat()
        rows.append(VerifyRow("B", report.b, est.value, est.stderr, _z(report.b, est)))
    for (g, a), r in report.rates.items():
        e = stats.rate(g, a)
        rows.append(VerifyRow(f"rate[{g},{a}]", r, e.value, e.stderr, _z(r, e)))
    for g, r in report.loss.items():
        e = stats.loss_rate(g)
        rows.append(VerifyRow(f"loss[{g}]", r, e.value, e.stderr, _z(r, e)))
    for (g, a), m in delays.pair_mean.items():
        e = stats.delay_mean(g, a)
        rows.append(VerifyRow(f"delay_mean[{g},{a}]", m, e.value, e.stderr, _z(m, e)))
    for (g, a), v in delays.pair_var.items():
        e = stats.delay_var(g, a)
        rows.append(VerifyRow(f"delay_var[{g},{a}]", v, e.value, e.stderr, _z(v, e)))
    if stats.tracks_occupancy:
        for order, prob in sorted(analytic_pi_y(model, cap=cap).items()):
            if prob <= pi_y_threshold:
                continue
            e = stats.pi_y(order)
            label = ">".join(order) if order else "(empty)"
            rows.append(VerifyRow(f"pi_y[{label}]", prob, e.value, e.stderr, _z(prob, e)))
    return rows
