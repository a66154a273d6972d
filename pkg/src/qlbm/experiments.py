"""Initial conditions, velocity fields, error metrics and runnable validation cases."""

from __future__ import annotations

import csv
import difflib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import engine
from .errors import ConfigurationError, DomainError
from .lattice import LatticeGrid, VelocitySet, check_velocity_constraint, make_velocity_set, run_digital
from .stats import GateStats

MODES = ("digital", "sampled", "ensemble", "hybrid", "oracle")


# ---------------------------------------------------------------------------
# fields


def boxcar_ic(extents, background: float = 0.1, amplitude: float = 0.2, width: int = 6) -> np.ndarray:
    """Background density with a centred plateau ``width`` sites wide along every axis.

    The plateau covers sites ``N//2 - width//2 .. N//2 + width//2 - 1``.
    """
    ext = (int(extents),) if np.isscalar(extents) else tuple(int(e) for e in extents)
    grid = LatticeGrid(ext)
    for n in ext:
        if n < 8 or n < width + 2:
            raise ConfigurationError(f"extent {n} is too small for a width-{width} boxcar plateau (need >= 8)")
    rho = np.full(grid.shape, float(background))
    window = tuple(slice(n // 2 - width // 2, n // 2 - width // 2 + width) for n in grid.shape)
    rho[window] = float(amplitude)
    return rho


def uniform_ic(extents, value: float = 1.0) -> np.ndarray:
    if not value > 0:
        raise ConfigurationError(f"uniform density must be positive, got {value}")
    ext = (int(extents),) if np.isscalar(extents) else tuple(int(e) for e in extents)
    return np.full(LatticeGrid(ext).shape, float(value))


def _normalized(n: int, convention: str) -> np.ndarray:
    j = np.arange(n, dtype=np.float64)
    if convention == "endpoints":
        return j / (n - 1) if n > 1 else j
    if convention == "cell":
        return j / n
    raise ConfigurationError(f"unknown coordinate convention {convention!r}; expected 'endpoints' or 'cell'")


def linear_velocity(n: int, slope: float = 0.1, offset: float = 0.1, coordinates: str = "endpoints") -> np.ndarray:
    """1D field ``u(x) = slope * x + offset`` on normalised ``x in [0, 1]``; shape ``(n, 1)``."""
    LatticeGrid((n,))
    x = _normalized(n, coordinates)
    return (slope * x + offset)[:, None]


def double_vortex(
    nx: int,
    ny: int,
    s1: float = 0.2,
    s2: float = 0.1,
    centers=((0.25, 0.5), (0.75, 0.5)),
    eps: float = 1e-8,
    coordinates: str = "cell",
    vs: VelocitySet | None = None,
) -> np.ndarray:
    """Two counter-rotating vortices split at ``x = 1/2``; shape ``(ny, nx, 2)``."""
    grid = LatticeGrid((nx, ny))
    x = _normalized(nx, coordinates)
    y = _normalized(ny, coordinates)
    X, Y = np.meshgrid(x, y)
    (x1, y1), (x2, y2) = centers
    r1 = np.sqrt((X - x1) ** 2 + (Y - y1) ** 2 + eps)
    r2 = np.sqrt((X - x2) ** 2 + (Y - y2) ** 2 + eps)
    left = X <= 0.5
    u = np.empty(grid.shape + (2,))
    u[..., 0] = np.where(left, -s1 * (Y - y1) / r1, s2 * (Y - y2) / r2)
    u[..., 1] = np.where(left, s1 * (X - x1) / r1, -s2 * (X - x2) / r2)
    check_velocity_constraint(u, vs or make_velocity_set("D2Q9"), grid)
    return u


def mape(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Mean absolute percentage error, in percent."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise DomainError(f"shape mismatch {reference.shape} vs {estimate.shape}")
    if np.any(reference == 0):
        raise DomainError("MAPE is undefined where the reference density is zero")
    return float(100.0 * np.mean(np.abs(reference - estimate) / np.abs(reference)))


def relative_error(reference: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    return np.abs(reference - estimate) / np.abs(reference)


# ---------------------------------------------------------------------------
# configuration

_ALIASES = {
    "set": "velocity_set",
    "N": "grid",
    "ic": "initial_condition",
    "u": "velocity_field",
    "T": "steps",
    "S": "shots",
}


def _as_int(name: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigurationError(f"field '{name}' must be an integer, got bool")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            f = float(value)
        except ValueError:
            pass
        else:
            if f.is_integer():
                return int(f)
    raise ConfigurationError(f"field '{name}' must be an integer, got {value!r} ({type(value).__name__})")


def _as_float(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"field '{name}' must be a number, got {value!r} ({type(value).__name__})")
    return float(value)


def _as_field_spec(name: str, value: Any) -> dict:
    """Normalise ``"boxcar"`` / ``{"uniform": 0.1}`` / ``{"type":..., "params":...}``."""
    if isinstance(value, str):
        return {"type": value, "params": {}}
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return {"type": "uniform", "params": {"value": float(value)}}
    if isinstance(value, dict):
        if "type" in value:
            params = value.get("params", {})
            if not isinstance(params, dict):
                raise ConfigurationError(f"field '{name}.params' must be an object")
            return {"type": str(value["type"]), "params": dict(params)}
        if len(value) == 1:
            (kind, arg), = value.items()
            if isinstance(arg, dict):
                return {"type": kind, "params": dict(arg)}
            return {"type": kind, "params": {"value": arg}}
    raise ConfigurationError(f"field '{name}' must be a string or an object with 'type' and 'params'")


@dataclass
class CaseConfig:
    velocity_set: str
    grid: tuple[int, ...]
    initial_condition: dict
    velocity_field: dict
    steps: int
    shots: int = 10**6
    mode: str = "ensemble"
    seed: int = 0
    cs2: float = 1.0 / 3.0
    output_dir: str | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        self.velocity_set = str(self.velocity_set).upper()
        make_velocity_set(self.velocity_set)
        self.grid = tuple(self.grid)
        LatticeGrid(self.grid)
        if self.steps < 0:
            raise ConfigurationError("field 'steps' must be >= 0")
        if self.shots < 1:
            raise ConfigurationError("field 'shots' must be >= 1")
        if self.mode not in MODES:
            hint = difflib.get_close_matches(self.mode, MODES, n=1)
            extra = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigurationError(f"unknown mode {self.mode!r}{extra}; choose from {', '.join(MODES)}")
        if not self.cs2 > 0:
            raise ConfigurationError("field 'cs2' must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "CaseConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        d = {}
        for k, v in data.items():
            key = _ALIASES.get(k, k)
            if key in d:
                raise ConfigurationError(f"field '{key}' given twice (alias '{k}')")
            d[key] = v
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        for required in ("velocity_set", "grid", "initial_condition", "velocity_field", "steps"):
            if required not in d:
                raise ConfigurationError(f"missing required field '{required}'")
        if not isinstance(d["velocity_set"], str):
            raise ConfigurationError("field 'velocity_set' must be a string")
        grid = d["grid"]
        if isinstance(grid, (int, float)) and not isinstance(grid, bool):
            grid = [grid]
        if not isinstance(grid, (list, tuple)) or not grid:
            raise ConfigurationError("field 'grid' must be an integer or a list of integers")
        kwargs = {
            "velocity_set": d["velocity_set"],
            "grid": tuple(_as_int("grid", g) for g in grid),
            "initial_condition": _as_field_spec("initial_condition", d["initial_condition"]),
            "velocity_field": _as_field_spec("velocity_field", d["velocity_field"]),
            "steps": _as_int("steps", d["steps"]),
        }
        if "shots" in d:
            kwargs["shots"] = _as_int("shots", d["shots"])
        if "seed" in d:
            kwargs["seed"] = _as_int("seed", d["seed"])
        if "cs2" in d and d["cs2"] is not None:
            kwargs["cs2"] = _as_float("cs2", d["cs2"])
        if "mode" in d:
            if not isinstance(d["mode"], str):
                raise ConfigurationError("field 'mode' must be a string")
            kwargs["mode"] = d["mode"]
        for opt in ("output_dir", "name"):
            if d.get(opt) is not None:
                if not isinstance(d[opt], str):
                    raise ConfigurationError(f"field '{opt}' must be a string")
                kwargs[opt] = d[opt]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    def replace(self, **changes) -> "CaseConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return CaseConfig.from_dict(d)

    def velocity_set_obj(self) -> VelocitySet:
        return make_velocity_set(self.velocity_set, self.cs2)

    def build_density(self) -> np.ndarray:
        kind, p = self.initial_condition["type"], self.initial_condition["params"]
        try:
            if kind == "boxcar":
                return boxcar_ic(self.grid, **p)
            if kind == "uniform":
                return uniform_ic(self.grid, **p)
            if kind == "array":
                rho = np.asarray(p["values"], dtype=np.float64).reshape(LatticeGrid(self.grid).shape)
                if np.any(rho < 0):
                    raise DomainError("initial density must be nonnegative")
                return rho
        except TypeError as exc:
            raise ConfigurationError(f"bad initial_condition params: {exc}") from None
        raise ConfigurationError(f"unknown initial_condition type {kind!r}; expected boxcar, uniform or array")

    def build_velocity(self) -> np.ndarray:
        kind, p = self.velocity_field["type"], self.velocity_field["params"]
        grid = LatticeGrid(self.grid)
        vs = self.velocity_set_obj()
        try:
            if kind == "uniform":
                value = np.asarray(p.get("value", 0.0), dtype=np.float64)
                u = np.broadcast_to(value, grid.shape + (grid.dim,)).copy()
            elif kind == "zero":
                u = np.zeros(grid.shape + (grid.dim,))
            elif kind == "linear":
                if grid.dim != 1:
                    raise ConfigurationError("linear velocity field needs a 1D grid")
                u = linear_velocity(grid.extents[0], **p)
            elif kind == "double_vortex":
                if grid.dim != 2:
                    raise ConfigurationError("double_vortex velocity field needs a 2D grid")
                p = dict(p)
                if "centers" in p:
                    p["centers"] = tuple(tuple(c) for c in p["centers"])
                u = double_vortex(grid.extents[0], grid.extents[1], vs=vs, **p)
            elif kind == "array":
                u = np.asarray(p["values"], dtype=np.float64).reshape(grid.shape + (grid.dim,))
            else:
                raise ConfigurationError(
                    f"unknown velocity_field type {kind!r}; expected uniform, zero, linear, double_vortex or array"
                )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, (ConfigurationError, DomainError)):
                raise
            raise ConfigurationError(f"bad velocity_field params: {exc}") from None
        check_velocity_constraint(u, vs, grid)
        return u


def load_config(path: str | os.PathLike) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return CaseConfig.from_dict(data)


def shipped_cases() -> dict[str, CaseConfig]:
    """Shipped validation cases keyed by name."""
    out = {}
    for entry in sorted(resources.files("qlbm.cases").iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            cfg = CaseConfig.from_dict(json.loads(entry.read_text()))
            out[cfg.name or entry.name[:-5]] = cfg
    return out


# ---------------------------------------------------------------------------
# running


@dataclass
class CaseReport:
    config: CaseConfig
    rho_digital: np.ndarray
    rho_estimate: np.ndarray
    rel_error: np.ndarray
    mape_percent: float
    stats: GateStats | None
    accounting: dict | None
    wall_time_s: float
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "mape_percent": self.mape_percent,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "steps": self.config.steps,
            "shots": self.config.shots,
            "total_mass": float(self.rho_digital.sum()),
            "estimate_mass": float(self.rho_estimate.sum()),
            "gate_stats": None if self.stats is None else self.stats.to_dict(),
            "accounting": self.accounting,
            "config": self.config.to_dict(),
            **self.extra,
            "wall_time_s": self.wall_time_s,
        }


def estimate_for(config: CaseConfig, rho0: np.ndarray, u: np.ndarray, backend: str | None = None, threads=None):
    """Run the configured quantum mode; returns ``(density, ShotEstimate | None)``."""
    vs = config.velocity_set_obj()
    T, S, seed = config.steps, config.shots, config.seed
    if config.mode == "digital":
        return run_digital(rho0, u, vs, T), None
    if config.mode == "oracle":
        return engine.enumerate_branches(rho0, u, vs, T), None
    if config.mode == "sampled":
        est = engine.estimate_density(rho0, u, vs, T, S, seed)
    elif config.mode == "ensemble":
        est = engine.run_ensemble(rho0, u, vs, T, S, seed, backend=backend, threads=threads)
    else:
        if T == 0:
            est = engine.run_ensemble(rho0, u, vs, 0, S, seed, backend=backend, threads=threads)
            est.mode = "hybrid"
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
            instr = engine.presample_instructions(vs, T, S, rng)
            est = engine.run_hybrid(rho0, u, vs, instr, seed, backend=backend, threads=threads)
    return est.density, est


def run_case(config: CaseConfig, backend: str | None = None, threads: int | None = None) -> CaseReport:
    t0 = time.perf_counter()
    rho0 = config.build_density()
    u = config.build_velocity()
    vs = config.velocity_set_obj()
    rho_digital = run_digital(rho0, u, vs, config.steps)
    rho_est, est = estimate_for(config, rho0, u, backend, threads)
    rel = relative_error(rho_digital, rho_est)
    m = mape(rho_digital, rho_est)
    accounting = None
    if est is not None:
        accounting = engine.gate_accounting(est, vs, LatticeGrid(config.grid).n_qubits)
    return CaseReport(
        config, rho_digital, rho_est, rel, m, None if est is None else est.stats, accounting,
        time.perf_counter() - t0,
    )


def two_sample_chi2(counts_a: np.ndarray, counts_b: np.ndarray) -> dict:
    """Homogeneity test of two site-count histograms; flags tables too thin to test."""
    from scipy.stats import chi2_contingency

    table = np.vstack([np.ravel(counts_a), np.ravel(counts_b)]).astype(np.float64)
    table = table[:, table.sum(axis=0) > 0]
    result = {"statistic": None, "p_value": None, "dof": None, "degenerate": True}
    if table.shape[1] < 2 or np.any(table.sum(axis=1) == 0):
        return result
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    stat, p, dof, _ = chi2_contingency(table, correction=False)
    result.update(statistic=float(stat), p_value=float(p), dof=int(dof), degenerate=bool(expected.min() < 1.0))
    return result


def compare_hybrid(config: CaseConfig, backend: str | None = None, threads: int | None = None) -> dict:
    """Run the dynamic (ensemble) and hybrid modes on one case and compare them."""
    dyn = run_case(config.replace(mode="ensemble"), backend, threads)
    hyb = run_case(config.replace(mode="hybrid"), backend, threads)
    mass = dyn.rho_digital.sum()
    counts_d = np.rint(dyn.rho_estimate * config.shots / mass).astype(np.int64)
    counts_h = np.rint(hyb.rho_estimate * config.shots / mass).astype(np.int64)
    sd, sh = dyn.stats.to_dict(), hyb.stats.to_dict()
    return {
        "dynamic": dyn,
        "hybrid": hyb,
        "mape_dynamic": dyn.mape_percent,
        "mape_hybrid": hyb.mape_percent,
        "chi2": two_sample_chi2(counts_d, counts_h),
        "gate_stats_delta": {k: sh[k] - sd[k] for k in sd},
        "selection_measurements_saved": sd["selection_measurements"] - sh["selection_measurements"],
    }


# ---------------------------------------------------------------------------
# output


def density_csv(report: CaseReport) -> str:
    grid = LatticeGrid(report.config.grid)
    coords = grid.coordinates()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", *"xyz"[: grid.dim], "rho_digital", "rho_estimate", "rel_error"])
    rd, re_, err = (a.reshape(-1) for a in (report.rho_digital, report.rho_estimate, report.rel_error))
    for k in range(grid.n_sites):
        w.writerow([k, *coords[k].tolist(), repr(float(rd[k])), repr(float(re_[k])), repr(float(err[k]))])
    return buf.getvalue()


def report_json(report: CaseReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"


def write_files(out_dir: str | os.PathLike, files: dict[str, str]) -> None:
    """Write every file or none: stage to temporaries, then rename into place."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            dst = out / name
            dst.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dst.parent, prefix=f".{dst.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, dst))
        for tmp, dst in staged:
            os.replace(tmp, dst)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def write_report(report: CaseReport, out_dir: str | os.PathLike) -> None:
    write_files(out_dir, {"density.csv": density_csv(report), "report.json": report_json(report)})


def strip_wall_time(report_text: str) -> dict:
    d = json.loads(report_text)
    d.pop("wall_time_s", None)
    return d


def log_log_slope(shots, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(shots)``."""
    x = np.log(np.asarray(shots, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def expected_mape_multinomial(reference: np.ndarray, shots: int) -> float:
    """Large-shot MAPE of an unbiased multinomial estimator: ``100 sqrt(2/pi) mean sqrt((1-p)/(S p))``."""
    p = np.ravel(reference) / np.sum(reference)
    return float(100.0 * math.sqrt(2.0 / math.pi) * np.mean(np.sqrt((1.0 - p) / (shots * p))))
