"""Dynamic-circuit QLBM: shot simulation, branch-tree ensembles, exact enumeration, hybrid mode.

Three routes produce the same distribution of final samples:

* :func:`estimate_density` runs every shot through the statevector simulator,
  gate by gate (slow, literal).
* :func:`run_ensemble` walks the measurement-outcome tree once, splitting the
  shot population binomially at each measurement, and simulates every reached
  node a single time (fast path, numba or numpy kernels).
* :func:`run_hybrid` presamples the state-independent selection outcomes on
  the classical side and only keeps the within-pair measurement on the device.

:func:`enumerate_branches` sums over every outcome sequence with its exact
probability and is the oracle that must coincide with the digital solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from . import _kernels_numpy as knp
from .errors import UsageError
from .lattice import LatticeGrid, VelocitySet, as_velocity_field, grid_of
from .plan import DynamicCircuit, PairSelectionPlan, build_pair_selection_plan, prepare_circuit
from .statevector import (
    MeasurementRecord,
    QuantumRegister,
    amplitude_encode,
    apply_cnot,
    apply_cry,
    apply_cyclic_shift,
    apply_ry,
    apply_ucry,
    measure_qubit,
    prob_zero,
    project_qubit,
    reset_qubit,
    sample_basis_state,
)
from .stats import N_COUNTERS, GateStats

log = logging.getLogger(__name__)

ANCILLA = 0
DEFAULT_MAX_LEAVES = 10**6
DEFAULT_MAX_LIVE_NODES = 10**6


@dataclass
class ShotEstimate:
    """Sampled site counts and the density estimate they imply.

    The estimate rescales empirical frequencies by the known initial mass,
    which the dynamics conserve.
    """

    counts: np.ndarray
    shots: int
    total_mass: float
    seed: int | None
    stats: GateStats
    steps: int
    mode: str = "ensemble"

    @property
    def density(self) -> np.ndarray:
        return self.counts * (self.total_mass / self.shots)


@dataclass
class InstructionArray:
    """Presampled branch entries, shape ``(steps, shots)``; 0 is rest, ``m`` is pair ``m-1``."""

    entries: np.ndarray
    plan: PairSelectionPlan = field(repr=False)

    @property
    def steps(self) -> int:
        return self.entries.shape[0]

    @property
    def shots(self) -> int:
        return self.entries.shape[1]


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Counter-based stream for one shot: Philox keyed by the seed, counter offset by the shot index."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(shot), 0]))


def _prepare(rho0, u, vs: VelocitySet) -> tuple[np.ndarray, LatticeGrid, DynamicCircuit]:
    rho0 = np.asarray(rho0, dtype=np.float64)
    grid = grid_of(rho0)
    circuit = prepare_circuit(as_velocity_field(u, grid), vs, grid)
    return rho0, grid, circuit


# ---------------------------------------------------------------------------
# literal per-shot simulation


def run_selection_chain(
    reg: QuantumRegister,
    plan: PairSelectionPlan,
    rng: np.random.Generator,
    stats: GateStats | None = None,
    records: list[MeasurementRecord] | None = None,
) -> int:
    """RY / measure / reset on the ancilla until a 0 is measured or the chain ends."""
    outcomes: list[int] = []
    for theta in plan.angles:
        apply_ry(reg, ANCILLA, theta)
        bit, rec = measure_qubit(reg, ANCILLA, rng)
        reset_qubit(reg, ANCILLA)
        if stats is not None:
            stats.selection_ry += 1
            stats.selection_measurements += 1
        if records is not None:
            records.append(rec)
        outcomes.append(bit)
        if bit == 0:
            break
    return plan.decode[tuple(outcomes)]


def _stream(reg: QuantumRegister, c: np.ndarray, stats: GateStats) -> None:
    # x before y before z; the shifts commute, the order only fixes the accounting
    for axis, comp in enumerate(c):
        if comp:
            apply_cyclic_shift(reg, axis, int(comp))
            stats.cyclic_shifts += 1


def _shot(reg: QuantumRegister, circuit: DynamicCircuit, steps: int, rng, stats: GateStats, records=None) -> int:
    plan = circuit.plan
    for _ in range(steps):
        entry = run_selection_chain(reg, plan, rng, stats, records)
        if entry == 0:
            stats.rest_steps += 1
            continue
        ang = circuit.angles[entry - 1]
        apply_ucry(reg, ang.theta, ANCILLA)
        stats.ucry += 1
        stats.cnot_equivalents += circuit.cnots_per_ucry
        bit, rec = measure_qubit(reg, ANCILLA, rng)
        reset_qubit(reg, ANCILLA)
        stats.pair_measurements += 1
        if records is not None:
            records.append(rec)
        _stream(reg, circuit.vs.c[ang.pair[bit]], stats)
        stats.streaming += 1
    return sample_basis_state(reg, rng) >> reg.n_anc


def run_shot(rho0, u, vs: VelocitySet, steps: int, rng: np.random.Generator, records=None) -> tuple[int, GateStats]:
    """One end-to-end shot; returns the sampled flat grid index and its gate counts."""
    if steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")
    rho0, _, circuit = _prepare(rho0, u, vs)
    stats = GateStats()
    site = _shot(amplitude_encode(rho0), circuit, steps, rng, stats, records)
    return site, stats


def estimate_density(rho0, u, vs: VelocitySet, steps: int, shots: int, seed: int = 0) -> ShotEstimate:
    """Aggregate ``shots`` independent statevector shots into a density estimate."""
    if shots < 1:
        raise UsageError("shots must be >= 1")
    if steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")
    rho0, grid, circuit = _prepare(rho0, u, vs)
    reg0 = amplitude_encode(rho0)
    counts = np.zeros(grid.n_sites, dtype=np.int64)
    stats = GateStats()
    for s in range(shots):
        counts[_shot(reg0.copy(), circuit, steps, shot_rng(seed, s), stats)] += 1
    return ShotEstimate(counts.reshape(grid.shape), shots, float(rho0.sum()), seed, stats, steps, "sampled")


# ---------------------------------------------------------------------------
# branch-tree ensemble


def _kernel_arrays(circuit: DynamicCircuit):
    return (
        np.ascontiguousarray(circuit.plan.stop_probabilities, dtype=np.float64),
        np.ascontiguousarray(circuit.cos_half),
        np.ascontiguousarray(circuit.sin_half),
        np.ascontiguousarray(circuit.source),
        np.ascontiguousarray(circuit.n_shifts),
    )


def _initial_amplitudes(rho0: np.ndarray) -> np.ndarray:
    # grid amplitudes of the encoded register (ancilla bit 0 dropped)
    return amplitude_encode(rho0).amplitudes[0::2].copy()


def _task_seeds(seed: int, stream: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed), stream])
    return ss.generate_state(n, dtype=np.uint32).astype(np.int64)


def run_ensemble(
    rho0,
    u,
    vs: VelocitySet,
    steps: int,
    shots: int,
    seed: int = 0,
    *,
    backend: str | None = None,
    threads: int | None = None,
    max_live_nodes: int = DEFAULT_MAX_LIVE_NODES,
) -> ShotEstimate:
    """Shot-population tree traversal; same distribution as :func:`estimate_density`."""
    if shots < 1:
        raise UsageError("shots must be >= 1")
    if steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")
    backend = _backend.resolve_backend(backend)
    rho0, grid, circuit = _prepare(rho0, u, vs)
    a0 = _initial_amplitudes(rho0)
    arrays = _kernel_arrays(circuit)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    if backend == "numpy":
        counts, counters = knp.ensemble(a0, shots, steps, *arrays, rng, max_live=max_live_nodes)
    else:
        from . import _kernels_numba as knb

        n_threads = _backend.set_threads(threads)
        counters = np.zeros(N_COUNTERS, dtype=np.int64)
        states = a0[None, :].copy()
        pops = np.array([shots], dtype=np.int64)
        t = 0
        # breadth-first until there is enough independent work per thread
        target = min(8 * n_threads, max_live_nodes)
        while t < steps and pops.size < target and pops.max() > 1:
            states, pops = knp.expand_level(states, pops, *arrays, rng, counters)
            t += 1
        seeds = _task_seeds(seed, 1, pops.size)
        roots_step = np.full(pops.size, t, dtype=np.int64)
        counts, task_counters = knb.ensemble_tasks(
            np.ascontiguousarray(states), pops, roots_step, steps, *arrays, seeds
        )
        counters = counters + task_counters
    stats = GateStats.from_counters(counters, circuit.cnots_per_ucry)
    log.debug("ensemble %s: %s", backend, stats)
    return ShotEstimate(counts.reshape(grid.shape), shots, float(rho0.sum()), seed, stats, steps, "ensemble")


def sample_selection_chain(plan: PairSelectionPlan, executions: int, seed: int = 0) -> np.ndarray:
    """Entry chosen by each of ``executions`` independent selection-chain runs."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    stop = plan.stop_probabilities
    if plan.n_pairs == 0:
        return np.zeros(executions, dtype=np.int64)
    hits = rng.random((executions, plan.n_pairs)) < stop
    first = np.argmax(hits, axis=1)
    return np.where(hits.any(axis=1), first, plan.n_pairs)


# ---------------------------------------------------------------------------
# exact enumeration oracle


def count_leaves(vs: VelocitySet, steps: int) -> int:
    return (1 + 2 * len(vs.pairs)) ** steps


def enumerate_branches(rho0, u, vs: VelocitySet, steps: int, max_leaves: int = DEFAULT_MAX_LEAVES) -> np.ndarray:
    """Exact expected density over every measurement-outcome sequence.

    Each branch runs through the statevector gates; its weight is the product
    of the projection probabilities met on the way. The result is scaled by
    the initial mass.
    """
    if steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")
    leaves = count_leaves(vs, steps)
    if leaves > max_leaves:
        raise UsageError(
            f"branch enumeration over {steps} steps has {leaves} leaves (limit {max_leaves}); reduce the steps"
        )
    rho0, grid, circuit = _prepare(rho0, u, vs)
    acc = np.zeros(grid.shape)
    plan = circuit.plan

    def selections(reg: QuantumRegister, weight: float):
        chain = reg.copy()
        for m, theta in enumerate(plan.angles):
            apply_ry(chain, ANCILLA, theta)
            p0 = prob_zero(chain, ANCILLA)
            if p0 > 0.0:
                yield m, weight * p0
            if p0 >= 1.0:
                return
            weight *= project_qubit(chain, ANCILLA, 1)
            reset_qubit(chain, ANCILLA)
        yield plan.n_pairs, weight

    def descend(reg: QuantumRegister, weight: float, t: int) -> None:
        if t == steps:
            acc[...] += weight * reg.grid_probabilities()
            return
        for entry, w in selections(reg, weight):
            if entry == 0:
                descend(reg, w, t + 1)
                continue
            ang = circuit.angles[entry - 1]
            collided = apply_ucry(reg.copy(), ang.theta, ANCILLA)
            p0 = prob_zero(collided, ANCILLA)
            for bit, p in ((0, p0), (1, 1.0 - p0)):
                if p <= 0.0:
                    continue
                child = collided.copy()
                project_qubit(child, ANCILLA, bit)
                reset_qubit(child, ANCILLA)
                _stream(child, vs.c[ang.pair[bit]], GateStats())
                descend(child, w * p, t + 1)

    descend(amplitude_encode(rho0), 1.0, 0)
    return acc * rho0.sum()


# ---------------------------------------------------------------------------
# hybrid classical-quantum variant


def presample_instructions(vs_or_plan, steps: int, shots: int, rng: np.random.Generator) -> InstructionArray:
    """I.i.d. classical draws of the branch entry for every (step, shot)."""
    if steps < 1 or shots < 1:
        raise UsageError("steps and shots must both be >= 1")
    plan = vs_or_plan if isinstance(vs_or_plan, PairSelectionPlan) else build_pair_selection_plan(vs_or_plan)
    p = plan.branch_probabilities / plan.branch_probabilities.sum()
    entries = rng.choice(p.size, size=(steps, shots), p=p).astype(np.int8)
    return InstructionArray(entries, plan)


def run_hybrid(
    rho0,
    u,
    vs: VelocitySet,
    instructions: InstructionArray,
    seed: int = 0,
    *,
    backend: str | None = None,
    threads: int | None = None,
    block: int = 1 << 14,
) -> ShotEstimate:
    """Execute each presampled column as one shot: rest is the identity, a pair runs UCRY + measure + stream."""
    backend = _backend.resolve_backend(backend)
    rho0, grid, circuit = _prepare(rho0, u, vs)
    if instructions.plan.pairs != circuit.plan.pairs:
        raise UsageError("instruction array was drawn for a different velocity set")
    entries = np.ascontiguousarray(instructions.entries)
    if entries.size and (entries.min() < 0 or entries.max() > circuit.plan.n_pairs):
        raise UsageError("instruction entries out of range for this velocity set")
    a0 = _initial_amplitudes(rho0)
    _, cos_h, sin_h, source, n_shifts = _kernel_arrays(circuit)
    if backend == "numpy":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
        counts, counters = knp.hybrid(a0, entries, cos_h, sin_h, source, n_shifts, rng)
    else:
        from . import _kernels_numba as knb

        _backend.set_threads(threads)
        shots = entries.shape[1]
        bounds = np.unique(np.append(np.arange(0, shots, block), shots)).astype(np.int64)
        seeds = _task_seeds(seed, 2, bounds.size - 1)
        counts, counters = knb.hybrid_blocks(a0, entries, bounds, cos_h, sin_h, source, n_shifts, seeds)
    stats = GateStats.from_counters(counters, circuit.cnots_per_ucry)
    return ShotEstimate(
        counts.reshape(grid.shape), instructions.shots, float(rho0.sum()), seed, stats, instructions.steps, "hybrid"
    )


# ---------------------------------------------------------------------------
# accounting and the static single-step circuit


def gate_accounting(estimate: ShotEstimate, vs: VelocitySet, n_q: int) -> dict:
    """Summary of gate and measurement usage for a finished run."""
    s = estimate.stats
    shot_steps = estimate.steps * estimate.shots
    w0 = float(vs.weights_exact[0])
    return {
        "shot_steps": shot_steps,
        "ucry_applications": s.ucry,
        "rest_steps": s.rest_steps,
        "ucry_fraction": s.ucry / shot_steps if shot_steps else 0.0,
        "expected_ucry_fraction": 1.0 - w0,
        "cnot_equivalents": s.ucry * (1 << n_q),
        "selection_ry": s.selection_ry,
        "selection_measurements": s.selection_measurements,
        "pair_measurements": s.pair_measurements,
        "measurements": s.measurements,
        "resets": s.resets,
        "streaming_blocks": s.streaming,
        "cyclic_shifts": s.cyclic_shifts,
    }


def static_collision_circuit(rho, u: float, vs: VelocitySet) -> QuantumRegister:
    """Single-step D1Q3 collision on a two-qubit direction register (uniform ``u``).

    Qubits 0 and 1 are the direction register, the grid sits above them. The
    final state carries ``sqrt(w0 rho_k)`` on ``|00>``, ``sqrt(w1 (1+u/cs2) rho_k)``
    on qubit1=1, qubit0=0, and ``sqrt(w2 (1-u/cs2) rho_k)`` on ``|11>``.
    """
    if vs.q != 3 or vs.d != 1:
        raise UsageError("the static collision circuit is defined for D1Q3 only")
    ratio = float(u) / vs.cs2
    if abs(ratio) > 1.0:
        from .errors import DomainError

        raise DomainError(f"u/cs2 = {ratio:.6g} violates |u|/cs2 <= 1")
    theta0 = 2.0 * np.arccos(np.sqrt(float(vs.weights_exact[0])))
    theta1 = 2.0 * np.arccos(np.sqrt(0.5 * (1.0 + ratio)))
    reg = amplitude_encode(rho, n_anc=2)
    apply_ry(reg, 0, theta0)
    # move the excitation onto qubit 1 so the controlled rotation starts from |0>
    apply_cnot(reg, 0, 1)
    apply_cnot(reg, 1, 0)
    apply_cry(reg, 1, 0, theta1)
    return reg
