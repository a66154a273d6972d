"""Vectorised numpy kernels.

Shot populations are carried as rows of a ``(B, n_sites)`` matrix of grid
amplitudes (the ancilla is always back in ``|0>`` between steps, so it is not
stored). All rows of one call sit at the same time step.
"""

from __future__ import annotations

import numpy as np

from .stats import N_COUNTERS, PAIR_MEAS, REST, SEL_MEAS, SEL_RY, SHIFTS, STREAM, UCRY

# Upper bound on float64 entries held per tree level by the numpy traversal.
_LEVEL_BUDGET = 1 << 22


def _row_norm2(states: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", states, states)


def _collide_measure(states, counts, cos_h, sin_h, source, n_shifts, rng, counters):
    """UCRY + ancilla measurement + conditional streaming for one pair.

    ``counts[r]`` shots in row ``r`` take this pair; returns the surviving
    child rows and their populations.
    """
    total = _row_norm2(states)
    amp_plus = states * cos_h
    p_plus = np.clip(_row_norm2(amp_plus) / total, 0.0, 1.0)
    n_plus = rng.binomial(counts, p_plus)
    n_minus = counts - n_plus
    counters[UCRY] += counts.sum()
    counters[PAIR_MEAS] += counts.sum()
    counters[STREAM] += counts.sum()
    counters[SHIFTS] += n_plus.sum() * n_shifts[0] + n_minus.sum() * n_shifts[1]
    out_states, out_pops = [], []
    keep = n_plus > 0
    if keep.any():
        a = amp_plus[keep] / np.sqrt(p_plus[keep] * total[keep])[:, None]
        out_states.append(a[:, source[0]])
        out_pops.append(n_plus[keep])
    keep = n_minus > 0
    if keep.any():
        a = states[keep] * sin_h
        a /= np.sqrt((1.0 - p_plus[keep]) * total[keep])[:, None]
        out_states.append(a[:, source[1]])
        out_pops.append(n_minus[keep])
    return out_states, out_pops


def select_entries(pops: np.ndarray, stop_p: np.ndarray, rng, counters) -> np.ndarray:
    """Split each row's population along the selection chain; shape ``(B, P + 1)``."""
    n_pairs = stop_p.shape[0]
    alloc = np.zeros((pops.shape[0], n_pairs + 1), dtype=np.int64)
    remaining = pops.astype(np.int64).copy()
    for m in range(n_pairs):
        reached = remaining.sum()
        counters[SEL_RY] += reached
        counters[SEL_MEAS] += reached
        k = rng.binomial(remaining, stop_p[m])
        alloc[:, m] = k
        remaining -= k
    alloc[:, n_pairs] += remaining
    return alloc


def expand_level(states, pops, stop_p, cos_h, sin_h, source, n_shifts, rng, counters):
    """Advance every row by one time step, splitting populations over the branch tree."""
    alloc = select_entries(pops, stop_p, rng, counters)
    counters[REST] += alloc[:, 0].sum()
    keep = alloc[:, 0] > 0
    out_states = [states[keep]]
    out_pops = [alloc[keep, 0]]
    for q in range(stop_p.shape[0]):
        sel = alloc[:, q + 1] > 0
        if not sel.any():
            continue
        s, p = _collide_measure(
            states[sel], alloc[sel, q + 1], cos_h[q], sin_h[q], source[q], n_shifts[q], rng, counters
        )
        out_states += s
        out_pops += p
    return np.concatenate(out_states), np.concatenate(out_pops)


def sample_leaves(states: np.ndarray, pops: np.ndarray, rng) -> np.ndarray:
    """Final full-register measurement of ``pops[r]`` shots per row; summed site counts."""
    probs = states**2
    probs /= probs.sum(axis=1, keepdims=True)
    return rng.multinomial(pops, probs).sum(axis=0)


def ensemble(a0, shots, steps, stop_p, cos_h, sin_h, source, n_shifts, rng, max_live=None):
    """Depth-first walk over the shot-population tree, one level chunk at a time.

    Sibling nodes are independent, so a level wider than the row budget is
    split and each chunk's subtree finished before the next one starts; this
    keeps the number of live rows bounded by ``max_live``.
    """
    n = a0.shape[0]
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    branching = 2 * stop_p.shape[0] + 1
    max_rows = max(1, _LEVEL_BUDGET // (n * branching * (steps + 1)))
    if max_live is not None:
        max_rows = max(1, min(max_rows, max_live // (branching * (steps + 1))))

    def descend(states, pops, t):
        if t == steps:
            counts[:] += sample_leaves(states, pops, rng)
            return
        cs, cp = expand_level(states, pops, stop_p, cos_h, sin_h, source, n_shifts, rng, counters)
        for lo in range(0, cp.shape[0], max_rows):
            descend(cs[lo : lo + max_rows], cp[lo : lo + max_rows], t + 1)

    descend(a0[None, :].copy(), np.array([shots], dtype=np.int64), 0)
    return counts, counters


def hybrid(a0, instructions, cos_h, sin_h, source, n_shifts, rng, block=1 << 16):
    """Execute presampled instruction columns, one shot per column, in row batches."""
    steps, shots = instructions.shape
    n = a0.shape[0]
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for lo in range(0, shots, block):
        instr = instructions[:, lo : lo + block]
        b = instr.shape[1]
        states = np.broadcast_to(a0, (b, n)).copy()
        for t in range(steps):
            row = instr[t]
            counters[REST] += int(np.count_nonzero(row == 0))
            for q in range(cos_h.shape[0]):
                sel = np.flatnonzero(row == q + 1)
                if sel.size == 0:
                    continue
                sub = states[sel]
                total = _row_norm2(sub)
                amp_plus = sub * cos_h[q]
                p_plus = np.clip(_row_norm2(amp_plus) / total, 0.0, 1.0)
                plus = rng.random(sel.size) < p_plus
                new = np.where(plus[:, None], amp_plus, sub * sin_h[q])
                new /= np.sqrt(np.where(plus, p_plus, 1.0 - p_plus) * total)[:, None]
                # gather through the shift permutation of the measured direction
                shifted = np.where(plus[:, None], new[:, source[q, 0]], new[:, source[q, 1]])
                states[sel] = shifted
                n_plus = int(plus.sum())
                counters[UCRY] += sel.size
                counters[PAIR_MEAS] += sel.size
                counters[STREAM] += sel.size
                counters[SHIFTS] += n_plus * n_shifts[q, 0] + (sel.size - n_plus) * n_shifts[q, 1]
        cdf = np.cumsum(states**2, axis=1)
        u = rng.random(b) * cdf[:, -1]
        idx = np.minimum((cdf <= u[:, None]).sum(axis=1), n - 1)
        counts += np.bincount(idx, minlength=n)
    return counts, counters
