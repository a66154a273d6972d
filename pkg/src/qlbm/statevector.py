"""Real-amplitude statevector simulator for the gate set the QLBM circuits use.

Qubit ``q`` is bit ``q`` of the basis index. The ``n_anc`` ancilla qubits are
the least significant bits, the grid index occupies the bits above them, so
basis index ``b`` holds grid site ``b >> n_anc``. Every gate acts in place and
returns the register so calls can be chained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InternalError, UsageError
from .lattice import LatticeGrid, grid_of

_DEGENERATE_NORM = 1e-9
_DEFINITE_TOL = 1e-12


@dataclass
class MeasurementRecord:
    qubit: int
    outcome: int
    probability: float

    @property
    def p_zero(self) -> float:
        return self.probability if self.outcome == 0 else 1.0 - self.probability


class QuantumRegister:
    """``n_q`` grid qubits plus ``n_anc`` ancillas over real amplitudes."""

    def __init__(self, grid: LatticeGrid, amplitudes: np.ndarray | None = None, n_anc: int = 1):
        self.grid = grid
        self.n_anc = int(n_anc)
        size = 1 << (grid.n_qubits + self.n_anc)
        if amplitudes is None:
            amplitudes = np.zeros(size)
            amplitudes[0] = 1.0
        amplitudes = np.asarray(amplitudes, dtype=np.float64)
        if amplitudes.shape != (size,):
            raise UsageError(f"expected {size} amplitudes, got shape {amplitudes.shape}")
        self.amplitudes = amplitudes

    @property
    def n_q(self) -> int:
        return self.grid.n_qubits

    @property
    def n_qubits(self) -> int:
        return self.grid.n_qubits + self.n_anc

    def copy(self) -> "QuantumRegister":
        return QuantumRegister(self.grid, self.amplitudes.copy(), self.n_anc)

    def norm2(self) -> float:
        return float(np.dot(self.amplitudes, self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return self.amplitudes**2

    def grid_probabilities(self) -> np.ndarray:
        """Born probabilities summed over the ancillas, shaped like a grid field."""
        p = self.probabilities().reshape(self.grid.n_sites, 1 << self.n_anc).sum(axis=1)
        return p.reshape(self.grid.shape)

    def _check_qubit(self, qubit: int) -> None:
        if not 0 <= qubit < self.n_qubits:
            raise UsageError(f"qubit {qubit} out of range for {self.n_qubits} qubits")

    def _planes(self, qubit: int) -> np.ndarray:
        """View with axis 1 selecting the value of ``qubit``."""
        self._check_qubit(qubit)
        return self.amplitudes.reshape(-1, 2, 1 << qubit)

    def __repr__(self) -> str:
        return f"QuantumRegister(extents={self.grid.extents}, n_anc={self.n_anc})"


def amplitude_encode(rho: np.ndarray, n_anc: int = 1) -> QuantumRegister:
    """``|psi> = sum_k sqrt(rho_k / sum rho) |k>|0>_a``."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise DomainError("density must be finite and nonnegative to amplitude-encode")
    total = rho.sum()
    if not total > 0:
        raise DomainError("cannot amplitude-encode an all-zero density")
    grid = grid_of(rho)
    amps = np.zeros((grid.n_sites, 1 << n_anc))
    amps[:, 0] = np.sqrt(rho.reshape(-1) / total)
    return QuantumRegister(grid, amps.reshape(-1), n_anc)


def _rotate(a0: np.ndarray, a1: np.ndarray, c, s) -> None:
    t0 = c * a0 - s * a1
    a1[...] = s * a0 + c * a1
    a0[...] = t0


def apply_ry(reg: QuantumRegister, qubit: int, theta: float) -> QuantumRegister:
    v = reg._planes(qubit)
    _rotate(v[:, 0, :], v[:, 1, :], np.cos(theta / 2), np.sin(theta / 2))
    return reg


def apply_x(reg: QuantumRegister, qubit: int) -> QuantumRegister:
    v = reg._planes(qubit)
    v[...] = v[:, ::-1, :].copy()
    return reg


def _control_mask(reg: QuantumRegister, control: int, target: int) -> np.ndarray:
    reg._check_qubit(control)
    reg._check_qubit(target)
    if control == target:
        raise UsageError("control and target must be distinct qubits")
    idx = np.arange(reg.amplitudes.size)
    return ((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)


def apply_cnot(reg: QuantumRegister, control: int, target: int) -> QuantumRegister:
    lo = np.flatnonzero(_control_mask(reg, control, target))
    hi = lo | (1 << target)
    a = reg.amplitudes
    a[lo], a[hi] = a[hi], a[lo].copy()
    return reg


def apply_cry(reg: QuantumRegister, control: int, target: int, theta: float) -> QuantumRegister:
    lo = np.flatnonzero(_control_mask(reg, control, target))
    hi = lo | (1 << target)
    a = reg.amplitudes
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    a0, a1 = a[lo], a[hi]
    a[lo] = c * a0 - s * a1
    a[hi] = s * a0 + c * a1
    return reg


def apply_ucry(reg: QuantumRegister, angles, target: int = 0) -> QuantumRegister:
    """Uniformly controlled RY on an ancilla: block ``j`` of the grid gets ``RY(angles[j])``.

    The operator is block diagonal over grid index ``j``; other ancillas (if
    any) act as spectators.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    if angles.size != reg.grid.n_sites:
        raise UsageError(f"UCRY needs {reg.grid.n_sites} angles, got {angles.size}")
    if not 0 <= target < reg.n_anc:
        raise UsageError("UCRY target must be an ancilla qubit")
    v = reg.amplitudes.reshape(reg.grid.n_sites, -1, 2, 1 << target)
    c = np.cos(angles / 2)[:, None, None]
    s = np.sin(angles / 2)[:, None, None]
    _rotate(v[:, :, 0, :], v[:, :, 1, :], c, s)
    return reg


def prob_zero(reg: QuantumRegister, qubit: int) -> float:
    v = reg._planes(qubit)
    return float(np.sum(v[:, 0, :] ** 2))


def project_qubit(reg: QuantumRegister, qubit: int, outcome: int) -> float:
    """Project onto ``qubit == outcome`` and renormalise; returns the outcome's probability."""
    v = reg._planes(qubit)
    norm = reg.norm2()
    if norm < _DEGENERATE_NORM:
        raise InternalError(f"degenerate register norm {norm:.3g} before measurement")
    p = float(np.sum(v[:, outcome, :] ** 2)) / norm
    if p <= 0.0:
        raise InternalError(f"projection onto zero-probability outcome {outcome} of qubit {qubit}")
    v[:, 1 - outcome, :] = 0.0
    reg.amplitudes /= np.sqrt(p * norm)
    return p


def measure_qubit(reg: QuantumRegister, qubit: int, rng: np.random.Generator) -> tuple[int, MeasurementRecord]:
    norm = reg.norm2()
    if norm < _DEGENERATE_NORM:
        raise InternalError(f"degenerate register norm {norm:.3g} before measurement")
    p0 = prob_zero(reg, qubit) / norm
    outcome = 0 if rng.random() < p0 else 1
    p = project_qubit(reg, qubit, outcome)
    return outcome, MeasurementRecord(qubit, outcome, p)


def reset_qubit(reg: QuantumRegister, qubit: int) -> QuantumRegister:
    """Map a classically known qubit back to ``|0>``.

    Only defined after a measurement (or on a qubit that is otherwise in a
    definite basis state); a qubit in superposition raises :class:`UsageError`.
    """
    norm = reg.norm2()
    p0 = prob_zero(reg, qubit) / norm
    if p0 >= 1.0 - _DEFINITE_TOL:
        return reg
    if p0 <= _DEFINITE_TOL:
        return apply_x(reg, qubit)
    raise UsageError(f"qubit {qubit} is in superposition (p0={p0:.6g}); measure before reset")


def apply_cyclic_shift(reg: QuantumRegister, axis: int | str, direction: int) -> QuantumRegister:
    """Increment (``+1``) or decrement (``-1``) the grid coordinate along ``axis`` modulo its extent."""
    if isinstance(axis, str):
        axis = "xyz".index(axis.lower())
    grid = reg.grid
    ax = grid.numpy_axis(axis)
    v = reg.amplitudes.reshape(grid.shape + (1 << reg.n_anc,))
    reg.amplitudes = np.roll(v, int(direction), axis=ax).reshape(-1)
    return reg


def sample_basis_state(reg: QuantumRegister, rng: np.random.Generator) -> int:
    """Draw a basis index with Born probabilities; the register is not modified."""
    cdf = np.cumsum(reg.amplitudes**2)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, cdf.size - 1)
