"""Classical preprocessing for the dynamic circuit.

A time step first runs a chain of RY / measure / reset stages on the ancilla
that picks either the rest population or one opposite-direction pair with
probability ``w_0`` resp. ``w_i + w_ibar``. A chosen pair then gets a
per-site uniformly controlled RY whose angles split each site's amplitude
between ``c_i`` and ``c_ibar`` according to the local equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InternalError, UsageError
from .lattice import LatticeGrid, VelocitySet, as_velocity_field, check_velocity_constraint, stream_periodic


@dataclass(frozen=True)
class PairSelectionPlan:
    """Chain of selection angles and the outcome decode table.

    Entry 0 is the rest population, entry ``m >= 1`` is ``pairs[m - 1]``.
    Stage ``m`` stops the chain at entry ``m`` when it measures 0; measuring 1
    on every stage selects the last pair.
    """

    pairs: tuple[tuple[int, int], ...]
    angles: np.ndarray
    branch_probabilities: np.ndarray
    branch_probabilities_exact: tuple[Fraction, ...]
    decode: dict[tuple[int, ...], int] = field(repr=False)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def stop_probabilities(self) -> np.ndarray:
        """``cos^2(theta_m / 2)``: probability of measuring 0 at stage ``m`` given it is reached."""
        return np.cos(self.angles / 2) ** 2

    def measurements_for(self, entry: int) -> int:
        """Selection measurements a shot performs before landing on ``entry``."""
        return min(entry + 1, self.n_pairs)

    def entry_label(self, entry: int) -> str:
        return "rest" if entry == 0 else "pair{}-{}".format(*self.pairs[entry - 1])


def build_pair_selection_plan(vs: VelocitySet) -> PairSelectionPlan:
    probs = [vs.weights_exact[0]] + vs.pair_weights()
    n_pairs = len(vs.pairs)
    angles = []
    residual = Fraction(1)
    # the final pair takes whatever is left after the last stage, so it needs no angle
    for m in range(n_pairs):
        p = probs[m]
        if residual <= 0 or p > residual:
            raise InternalError(f"selection chain residual underflow at stage {m} for {vs.name}")
        angles.append(2.0 * np.arccos(np.sqrt(float(p / residual))))
        residual -= p
    if n_pairs and residual != probs[-1]:
        raise InternalError(f"selection chain does not close for {vs.name}")
    decode: dict[tuple[int, ...], int] = {}
    for m in range(n_pairs):
        decode[(1,) * m + (0,)] = m
    if n_pairs:
        decode[(1,) * n_pairs] = n_pairs
    else:
        decode[()] = 0
    return PairSelectionPlan(
        pairs=vs.pairs,
        angles=np.array(angles, dtype=np.float64),
        branch_probabilities=np.array([float(p) for p in probs]),
        branch_probabilities_exact=tuple(probs),
        decode=decode,
    )


@dataclass(frozen=True)
class CollisionAngles:
    """Per-site UCRY angles for one ordered pair ``(i, ibar)``.

    ``cos_half**2 = (1 + c_i.u/cs2) / 2`` is the share of each site's amplitude
    that goes to direction ``i``; ``sin_half`` covers ``ibar``.
    """

    pair: tuple[int, int]
    theta: np.ndarray
    cos_half: np.ndarray
    sin_half: np.ndarray


def collision_angles(i: int, u, vs: VelocitySet, grid: LatticeGrid | None = None) -> CollisionAngles:
    u = np.asarray(u, dtype=np.float64)
    if grid is None:
        if u.ndim == 0:
            raise UsageError("a scalar velocity needs an explicit grid")
        if vs.d == 1 and u.shape[-1] != 1:
            grid = LatticeGrid.from_shape(u.shape)
        else:
            grid = LatticeGrid.from_shape(u.shape[:-1])
    ratio = check_velocity_constraint(u, vs, grid)[i].reshape(-1)
    ibar = vs.opposite(i)
    plus = np.clip(0.5 * (1.0 + ratio), 0.0, 1.0)
    cos_half = np.sqrt(plus)
    sin_half = np.sqrt(1.0 - plus)
    theta = 2.0 * np.arccos(cos_half)
    return CollisionAngles((i, ibar), theta, cos_half, sin_half)


@dataclass(frozen=True)
class DynamicCircuit:
    """Everything a shot needs, precomputed once per (grid, velocity field, velocity set)."""

    grid: LatticeGrid
    vs: VelocitySet
    plan: PairSelectionPlan
    angles: tuple[CollisionAngles, ...]
    # source[p, o, k]: grid index that lands on k when pair p streams with outcome o
    source: np.ndarray
    # per-axis cyclic shifts applied for (pair, outcome)
    n_shifts: np.ndarray

    @property
    def cos_half(self) -> np.ndarray:
        return np.array([a.cos_half for a in self.angles]).reshape(len(self.angles), self.grid.n_sites)

    @property
    def sin_half(self) -> np.ndarray:
        return np.array([a.sin_half for a in self.angles]).reshape(len(self.angles), self.grid.n_sites)

    @property
    def cnots_per_ucry(self) -> int:
        # UCRY over n = n_q + 1 qubits decomposes into 2^(n-1) CNOTs
        return 1 << self.grid.n_qubits


def prepare_circuit(u, vs: VelocitySet, grid: LatticeGrid) -> DynamicCircuit:
    uf = as_velocity_field(u, grid)
    check_velocity_constraint(uf, vs, grid)
    plan = build_pair_selection_plan(vs)
    angles = tuple(collision_angles(i, uf, vs, grid) for i, _ in vs.pairs)
    n_pairs = len(vs.pairs)
    idx = np.arange(grid.n_sites).reshape(grid.shape)
    source = np.zeros((n_pairs, 2, grid.n_sites), dtype=np.int64)
    n_shifts = np.zeros((n_pairs, 2), dtype=np.int64)
    for p, pair in enumerate(vs.pairs):
        for o, direction in enumerate(pair):
            source[p, o] = stream_periodic(idx, vs.c[direction]).reshape(-1)
            n_shifts[p, o] = int(np.count_nonzero(vs.c[direction]))
    return DynamicCircuit(grid, vs, plan, angles, source, n_shifts)
