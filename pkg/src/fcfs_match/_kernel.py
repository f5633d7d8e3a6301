"""Batch simulation kernel, JIT-compiled when numba is available.

The kernel consumes pre-generated uniform draws in fixed-size chunks so the
random stream, and therefore every counter, is bit-identical whether or not
the JIT is active. Waiting agents live in per-type circular index buffers;
the first-appearance projection of the waiting list is re-derived each event
from the buffer heads and recorded in a flat int dictionary keyed by
(packed order) << 6 | batch.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, types
    from numba.typed import Dict as _TypedDict

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


CHUNK = 1_000_000
BATCH_BITS = 6  # batch count must stay below 1 << BATCH_BITS


def make_occupancy_dict():
    if HAVE_NUMBA:
        return _TypedDict.empty(types.int64, types.int64)
    return {}


@njit(cache=True)
def sim_chunk(kind_u, type_u, start_n, n_events, burn_in, n_batches,
              p_agent, alpha_cum, beta_cum, compat,
              queues, qhead, qlen,
              match_counts, loss_counts, delay_sums, delay_sqs,
              goods_counts, events_counts, occupancy, totals, track_occupancy):
    n_agent = alpha_cum.shape[0]
    n_good = beta_cum.shape[0]
    cap = queues.shape[1]
    span = n_events - burn_in
    order = np.empty(n_agent, dtype=np.int64)
    heads = np.empty(n_agent, dtype=np.int64)
    for e in range(kind_u.shape[0]):
        n = start_n + e
        post = n >= burn_in
        b = 0
        if post:
            b = (n - burn_in) * n_batches // span
        if kind_u[e] < p_agent:
            u = type_u[e]
            t = 0
            while t < n_agent - 1 and u >= alpha_cum[t]:
                t += 1
            if qlen[t] == cap:
                totals[3] = e  # buffer full: caller grows and resumes here
                return 1
            queues[t, (qhead[t] + qlen[t]) % cap] = n
            qlen[t] += 1
            totals[0] += 1
        else:
            u = type_u[e]
            j = 0
            while j < n_good - 1 and u >= beta_cum[j]:
                j += 1
            totals[1] += 1
            best = -1
            best_idx = np.int64(1) << 62
            for i in range(n_agent):
                if compat[j, i] and qlen[i] > 0:
                    h = queues[i, qhead[i]]
                    if h < best_idx:
                        best_idx = h
                        best = i
            if post:
                goods_counts[b] += 1
            if best >= 0:
                qhead[best] = (qhead[best] + 1) % cap
                qlen[best] -= 1
                if post:
                    d = n - best_idx
                    match_counts[b, j, best] += 1
                    delay_sums[b, j, best] += d
                    delay_sqs[b, j, best] += float(d) * float(d)
            elif post:
                loss_counts[b, j] += 1
        if post:
            events_counts[b] += 1
            if track_occupancy:
                m = 0
                for i in range(n_agent):
                    if qlen[i] > 0:
                        h = queues[i, qhead[i]]
                        k = m
                        while k > 0 and heads[k - 1] > h:
                            order[k] = order[k - 1]
                            heads[k] = heads[k - 1]
                            k -= 1
                        order[k] = i
                        heads[k] = h
                        m += 1
                code = np.int64(0)
                for k in range(m):
                    code |= (order[k] + 1) << (4 * k)
                key = (code << BATCH_BITS) | b
                if key in occupancy:
                    occupancy[key] += 1
                else:
                    occupancy[key] = 1
    return 0


def grow_queues(queues, qhead, qlen):
    """Double the per-type circular buffers, rebasing each queue at offset 0."""
    n_types, cap = queues.shape
    out = np.zeros((n_types, cap * 2), dtype=np.int64)
    for t in range(n_types):
        for k in range(qlen[t]):
            out[t, k] = queues[t, (qhead[t] + k) % cap]
        qhead[t] = 0
    return out
