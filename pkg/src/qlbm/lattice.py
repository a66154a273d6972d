"""Classical lattice-Boltzmann reference solver for linear advection-diffusion.

BGK collision with ``dt / tau = 1`` reduces one update to "relax to the
linearised equilibrium, then stream", so the distribution functions never need
to be stored between steps and the state is the density field alone.

Fields are plain numpy arrays whose shape follows numpy's C order for the grid:
``(Nx,)`` in 1D, ``(Ny, Nx)`` in 2D and ``(Nz, Ny, Nx)`` in 3D. Flattening such
an array in C order gives site index ``k = x + Nx * (y + Ny * z)`` (x fastest),
which is also the grid index used by the quantum register. Velocity fields
carry one trailing axis with the ``d`` Cartesian components ``(ux, uy, uz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

# Constraint slack for |c.u|/cs2 <= 1; absorbs rounding in user-built fields.
_CONSTRAINT_TOL = 1e-12


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LatticeGrid:
    """Periodic grid with power-of-two extents ``(Nx[, Ny[, Nz]])``."""

    extents: tuple[int, ...]

    def __post_init__(self) -> None:
        ext = tuple(int(e) for e in self.extents)
        if not 1 <= len(ext) <= 3:
            raise ConfigurationError(f"grid must have 1 to 3 extents, got {len(ext)}")
        for axis, n in zip("xyz", ext):
            if not _is_power_of_two(n):
                raise ConfigurationError(
                    f"extent N{axis}={n} is not a power of two; lattice cells per "
                    "dimension are restricted to powers of two so the grid maps onto qubits"
                )
        object.__setattr__(self, "extents", ext)

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> "LatticeGrid":
        return cls(tuple(reversed(tuple(shape))))

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        """Numpy array shape of a scalar field on this grid."""
        return tuple(reversed(self.extents))

    @property
    def n_sites(self) -> int:
        return math.prod(self.extents)

    @property
    def n_qubits(self) -> int:
        return self.n_sites.bit_length() - 1

    def numpy_axis(self, axis: int) -> int:
        """Array axis of Cartesian axis ``axis`` (0=x, 1=y, 2=z)."""
        if not 0 <= axis < self.dim:
            raise ConfigurationError(f"axis {axis} does not exist on a {self.dim}D grid")
        return self.dim - 1 - axis

    def coordinates(self) -> np.ndarray:
        """Integer coordinates ``(x, y, z)[:dim]`` of every site in flat order."""
        k = np.arange(self.n_sites)
        out = np.empty((self.n_sites, self.dim), dtype=np.int64)
        stride = 1
        for a, n in enumerate(self.extents):
            out[:, a] = (k // stride) % n
            stride *= n
        return out


@dataclass(frozen=True)
class VelocitySet:
    """Discrete velocity set ``DdQq`` with exact rational weights.

    ``pairs`` lists the opposite-direction pairs ``(i, ibar)`` in the order the
    pair-selection chain visits them; index 0 is the rest population.
    """

    name: str
    c: np.ndarray
    weights_exact: tuple[Fraction, ...]
    pairs: tuple[tuple[int, int], ...]
    cs2: float = 1.0 / 3.0
    w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=np.int64)
        if c.ndim != 2:
            raise ConfigurationError("velocity table must be a (q, d) integer array")
        object.__setattr__(self, "c", c)
        wx = tuple(Fraction(x) for x in self.weights_exact)
        object.__setattr__(self, "weights_exact", wx)
        if len(wx) != c.shape[0]:
            raise ConfigurationError("one weight per discrete velocity is required")
        if sum(wx) != 1:
            raise ConfigurationError(f"weights of {self.name} sum to {sum(wx)}, not 1")
        if any(x < 0 for x in wx):
            raise ConfigurationError("weights must be nonnegative")
        if not self.cs2 > 0:
            raise ConfigurationError(f"cs2 must be positive, got {self.cs2}")
        if np.any(c[0] != 0):
            raise ConfigurationError("index 0 must be the rest velocity")
        seen = {0}
        for i, ib in self.pairs:
            if not np.array_equal(c[ib], -c[i]):
                raise ConfigurationError(f"pair ({i}, {ib}) is not opposite: c_ibar != -c_i")
            if wx[i] != wx[ib]:
                raise ConfigurationError(f"pair ({i}, {ib}) has unequal weights")
            seen.update((i, ib))
        if seen != set(range(c.shape[0])):
            raise ConfigurationError("pairs plus the rest index must cover every direction once")
        object.__setattr__(self, "pairs", tuple((int(i), int(ib)) for i, ib in self.pairs))
        object.__setattr__(self, "w", np.array([float(x) for x in wx]))

    @property
    def q(self) -> int:
        return self.c.shape[0]

    @property
    def d(self) -> int:
        return self.c.shape[1]

    def opposite(self, i: int) -> int:
        if i == 0:
            return 0
        for a, b in self.pairs:
            if i == a:
                return b
            if i == b:
                return a
        raise ConfigurationError(f"direction {i} not in velocity set {self.name}")

    def pair_weights(self) -> list[Fraction]:
        """Exact combined weights ``w_i + w_ibar`` per pair."""
        return [self.weights_exact[i] + self.weights_exact[ib] for i, ib in self.pairs]


_D2Q9_C = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)]


def make_velocity_set(name: str, cs2: float = 1.0 / 3.0) -> VelocitySet:
    """Build ``D1Q3`` or ``D2Q9``.

    D2Q9 uses the ordering rest, E, N, W, S, NE, NW, SW, SE so the pairs are
    (1,3), (2,4), (5,7), (6,8).
    """
    key = str(name).upper()
    if key == "D1Q3":
        return VelocitySet(
            "D1Q3",
            np.array([[0], [1], [-1]]),
            (Fraction(2, 3), Fraction(1, 6), Fraction(1, 6)),
            ((1, 2),),
            cs2,
        )
    if key == "D2Q9":
        w = [Fraction(4, 9)] + [Fraction(1, 9)] * 4 + [Fraction(1, 36)] * 4
        return VelocitySet("D2Q9", np.array(_D2Q9_C), tuple(w), ((1, 3), (2, 4), (5, 7), (6, 8)), cs2)
    raise ConfigurationError(f"unknown velocity set {name!r}; expected one of D1Q3, D2Q9")


def grid_of(field: np.ndarray) -> LatticeGrid:
    return LatticeGrid.from_shape(np.shape(field))


def as_velocity_field(u, grid: LatticeGrid) -> np.ndarray:
    """Broadcast scalar / vector / per-site input to shape ``grid.shape + (d,)``."""
    u = np.asarray(u, dtype=np.float64)
    d = grid.dim
    if u.ndim == 0:
        return np.broadcast_to(u, grid.shape + (d,)).copy()
    if u.shape == (d,):
        return np.broadcast_to(u, grid.shape + (d,)).copy()
    if u.shape == grid.shape + (d,):
        return u.copy()
    if d == 1 and u.shape == grid.shape:
        return u[..., None].copy()
    raise ConfigurationError(
        f"velocity field of shape {u.shape} does not match grid shape {grid.shape} with d={d}"
    )


def advection_ratio(u: np.ndarray, vs: VelocitySet, grid: LatticeGrid) -> np.ndarray:
    """``c_i . u(x) / cs2`` with shape ``(q,) + grid.shape``."""
    uf = as_velocity_field(u, grid)
    if vs.d != grid.dim:
        raise ConfigurationError(f"{vs.name} is {vs.d}D but the grid is {grid.dim}D")
    return np.einsum("qd,...d->q...", vs.c.astype(np.float64), uf) / vs.cs2


def check_velocity_constraint(u, vs: VelocitySet, grid: LatticeGrid) -> np.ndarray:
    """Raise :class:`DomainError` unless ``|c_i . u| / cs2 <= 1`` everywhere."""
    ratio = advection_ratio(u, vs, grid)
    bad = np.abs(ratio) > 1.0 + _CONSTRAINT_TOL
    if np.any(bad):
        i, *site = np.argwhere(bad)[0]
        coords = tuple(int(v) for v in reversed(site))
        raise DomainError(
            f"velocity constraint |c_i.u|/cs2 <= 1 violated at site {coords}, "
            f"direction {i}: ratio {ratio[(i, *site)]:.6g}"
        )
    return ratio


def equilibrium(rho: np.ndarray, u, vs: VelocitySet) -> np.ndarray:
    """Linearised equilibrium ``f_i = w_i rho (1 + c_i.u / cs2)``, shape ``(q,) + rho.shape``."""
    rho = np.asarray(rho, dtype=np.float64)
    grid = grid_of(rho)
    ratio = check_velocity_constraint(u, vs, grid)
    feq = vs.w.reshape((-1,) + (1,) * grid.dim) * rho * (1.0 + ratio)
    # ratio == -1 exactly may leave -0.0 / tiny negatives from rounding
    np.maximum(feq, 0.0, out=feq)
    return feq


def stream_periodic(field: np.ndarray, c) -> np.ndarray:
    """Cyclic shift: ``out(x) = field(x - c)`` with periodic wraparound."""
    field = np.asarray(field)
    c = np.atleast_1d(np.asarray(c, dtype=np.int64))
    grid = grid_of(field)
    if c.shape != (grid.dim,):
        raise ConfigurationError(f"lattice vector {tuple(c)} does not match a {grid.dim}D grid")
    shifts = tuple(int(s) for s in c)
    axes = tuple(grid.numpy_axis(a) for a in range(grid.dim))
    if not any(shifts):
        return field.copy()
    return np.roll(field, shifts, axis=axes)


def digital_step(rho: np.ndarray, u, vs: VelocitySet) -> np.ndarray:
    """One BGK step at ``dt/tau = 1``: collide to equilibrium, stream every population."""
    feq = equilibrium(rho, u, vs)
    out = np.zeros_like(feq[0])
    for i in range(vs.q):
        out += stream_periodic(feq[i], vs.c[i])
    return out


def run_digital(rho0: np.ndarray, u, vs: VelocitySet, steps: int) -> np.ndarray:
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    rho = np.array(rho0, dtype=np.float64, copy=True)
    if np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    grid = grid_of(rho)
    uf = as_velocity_field(u, grid)
    check_velocity_constraint(uf, vs, grid)
    for _ in range(steps):
        rho = digital_step(rho, uf, vs)
    return rho
