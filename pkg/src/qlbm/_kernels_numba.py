"""Numba kernels mirroring :mod:`qlbm._kernels_numpy`.

Each parallel task seeds numba's thread-local generator from its own task
seed before drawing, so results depend on the task partition and seeds but
not on which thread ran a task.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .stats import N_COUNTERS, PAIR_MEAS, REST, SEL_MEAS, SEL_RY, SHIFTS, STREAM, UCRY


@njit(cache=True)
def _binomial(n, p):
    if p <= 0.0 or n == 0:
        return 0
    if p >= 1.0:
        return n
    return np.random.binomial(n, p)


@njit(cache=True)
def _select_entry(stop_p, counters):
    """Walk the selection chain for one shot; returns the chosen entry."""
    n_pairs = stop_p.shape[0]
    for m in range(n_pairs):
        counters[SEL_RY] += 1
        counters[SEL_MEAS] += 1
        if np.random.random() < stop_p[m]:
            return m
    return n_pairs


@njit(cache=True)
def _norms(a, cos_row):
    total = 0.0
    plus = 0.0
    for k in range(a.shape[0]):
        x = a[k]
        y = x * cos_row[k]
        total += x * x
        plus += y * y
    return total, plus


@njit(cache=True)
def _collapse_shift(src, dst, fac, perm, scale):
    for k in range(dst.shape[0]):
        j = perm[k]
        dst[k] = src[j] * fac[j] * scale


@njit(cache=True)
def _sample_one(a):
    total = 0.0
    for k in range(a.shape[0]):
        total += a[k] * a[k]
    u = np.random.random() * total
    acc = 0.0
    for k in range(a.shape[0]):
        acc += a[k] * a[k]
        if u < acc:
            return k
    # rounding put u at the very top; take the last occupied site
    for k in range(a.shape[0] - 1, -1, -1):
        if a[k] != 0.0:
            return k
    return a.shape[0] - 1


@njit(cache=True)
def _sample_many(a, pop, counts):
    total = 0.0
    for k in range(a.shape[0]):
        total += a[k] * a[k]
    if pop < 16:
        for _ in range(pop):
            counts[_sample_one(a)] += 1
        return
    remaining = pop
    mass = total
    for k in range(a.shape[0]):
        if remaining == 0:
            break
        pk = a[k] * a[k]
        if k == a.shape[0] - 1 or mass <= pk:
            counts[k] += remaining
            return
        c = _binomial(remaining, pk / mass)
        counts[k] += c
        remaining -= c
        mass -= pk


@njit(cache=True)
def _step_pair(cur, nxt, q, cos_h, sin_h, source, n_shifts, counters):
    total, pp = _norms(cur, cos_h[q])
    counters[UCRY] += 1
    counters[PAIR_MEAS] += 1
    counters[STREAM] += 1
    if np.random.random() * total < pp:
        _collapse_shift(cur, nxt, cos_h[q], source[q, 0], 1.0 / np.sqrt(pp))
        counters[SHIFTS] += n_shifts[q, 0]
    else:
        _collapse_shift(cur, nxt, sin_h[q], source[q, 1], 1.0 / np.sqrt(total - pp))
        counters[SHIFTS] += n_shifts[q, 1]


@njit(cache=True)
def _walk_single(a, spare, step, steps, stop_p, cos_h, sin_h, source, n_shifts, counts, counters):
    """Single-shot trajectory from ``step`` to the final measurement."""
    cur = a
    nxt = spare
    while step < steps:
        entry = _select_entry(stop_p, counters)
        if entry == 0:
            counters[REST] += 1
        else:
            _step_pair(cur, nxt, entry - 1, cos_h, sin_h, source, n_shifts, counters)
            cur, nxt = nxt, cur
        step += 1
    counts[_sample_one(cur)] += 1


@njit(cache=True)
def _ensemble_task(root, root_pop, root_step, steps, stop_p, cos_h, sin_h, source, n_shifts, seed, counts, counters):
    np.random.seed(seed)
    n = root.shape[0]
    n_pairs = stop_p.shape[0]
    cap = 1 + (steps - root_step + 1) * (2 * n_pairs + 1)
    states = np.empty((cap + 2, n))
    scratch = states[cap]
    spare = states[cap + 1]
    node_step = np.empty(cap, dtype=np.int64)
    node_pop = np.empty(cap, dtype=np.int64)
    alloc = np.empty(n_pairs + 1, dtype=np.int64)
    states[0, :] = root
    node_step[0] = root_step
    node_pop[0] = root_pop
    top = 1
    while top > 0:
        top -= 1
        slot = top
        step = node_step[slot]
        pop = node_pop[slot]
        if pop == 1:
            _walk_single(states[slot], spare, step, steps, stop_p, cos_h, sin_h, source, n_shifts, counts, counters)
            continue
        if step == steps:
            _sample_many(states[slot], pop, counts)
            continue
        scratch[:] = states[slot]
        remaining = pop
        for m in range(n_pairs):
            if remaining == 0:
                alloc[m] = 0
                continue
            counters[SEL_RY] += remaining
            counters[SEL_MEAS] += remaining
            k = _binomial(remaining, stop_p[m])
            alloc[m] = k
            remaining -= k
        if n_pairs > 0:
            alloc[n_pairs] = remaining
        else:
            alloc[0] = pop
        if alloc[0] > 0:
            # rest: identity on the register, the slot keeps its state
            counters[REST] += alloc[0]
            node_step[slot] = step + 1
            node_pop[slot] = alloc[0]
            top = slot + 1
        for q in range(n_pairs):
            nq = alloc[q + 1]
            if nq == 0:
                continue
            counters[UCRY] += nq
            counters[PAIR_MEAS] += nq
            counters[STREAM] += nq
            total, pp = _norms(scratch, cos_h[q])
            p_plus = min(max(pp / total, 0.0), 1.0)
            n_plus = _binomial(nq, p_plus)
            if n_plus > 0:
                _collapse_shift(scratch, states[top], cos_h[q], source[q, 0], 1.0 / np.sqrt(pp))
                node_step[top] = step + 1
                node_pop[top] = n_plus
                top += 1
                counters[SHIFTS] += n_plus * n_shifts[q, 0]
            n_minus = nq - n_plus
            if n_minus > 0:
                _collapse_shift(scratch, states[top], sin_h[q], source[q, 1], 1.0 / np.sqrt(total - pp))
                node_step[top] = step + 1
                node_pop[top] = n_minus
                top += 1
                counters[SHIFTS] += n_minus * n_shifts[q, 1]


@njit(parallel=True, cache=True)
def ensemble_tasks(roots, root_pops, root_steps, steps, stop_p, cos_h, sin_h, source, n_shifts, seeds):
    n_tasks, n = roots.shape
    counts = np.zeros((n_tasks, n), dtype=np.int64)
    counters = np.zeros((n_tasks, N_COUNTERS), dtype=np.int64)
    for f in prange(n_tasks):
        _ensemble_task(
            roots[f], root_pops[f], root_steps[f], steps, stop_p, cos_h, sin_h, source, n_shifts,
            seeds[f], counts[f], counters[f],
        )
    return counts.sum(axis=0), counters.sum(axis=0)


@njit(cache=True)
def _hybrid_block(a0, instructions, lo, hi, cos_h, sin_h, source, n_shifts, seed, counts, counters):
    np.random.seed(seed)
    n = a0.shape[0]
    buf = np.empty((2, n))
    steps = instructions.shape[0]
    for s in range(lo, hi):
        cur = buf[0]
        nxt = buf[1]
        cur[:] = a0
        for t in range(steps):
            e = instructions[t, s]
            if e == 0:
                counters[REST] += 1
                continue
            _step_pair(cur, nxt, e - 1, cos_h, sin_h, source, n_shifts, counters)
            cur, nxt = nxt, cur
        counts[_sample_one(cur)] += 1


@njit(parallel=True, cache=True)
def hybrid_blocks(a0, instructions, bounds, cos_h, sin_h, source, n_shifts, seeds):
    n_blocks = bounds.shape[0] - 1
    n = a0.shape[0]
    counts = np.zeros((n_blocks, n), dtype=np.int64)
    counters = np.zeros((n_blocks, N_COUNTERS), dtype=np.int64)
    for b in prange(n_blocks):
        _hybrid_block(
            a0, instructions, bounds[b], bounds[b + 1], cos_h, sin_h, source, n_shifts,
            seeds[b], counts[b], counters[b],
        )
    return counts.sum(axis=0), counters.sum(axis=0)
