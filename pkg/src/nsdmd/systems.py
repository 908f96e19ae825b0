"""Benchmark dynamical systems, time integration, and snapshot sampling.

Continuous-time systems are plain vector fields ``xdot = f(x)``; discrete-time
systems are one-step maps ``x -> T(x)``.  Snapshot data is the list of
consecutive state pairs ``(x_m, y_m)`` harvested from simulated trajectories,
which is the only input the operator-fitting code ever sees.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DivergenceError",
    "VectorField",
    "DiscreteMap",
    "SnapshotSet",
    "integrate",
    "builtin_system",
    "sample_trajectories",
    "sample_snapshots",
    "save_snapshots",
    "load_snapshots",
]


class DivergenceError(RuntimeError):
    """A trajectory left the representable range.

    Carries ``step``, the index of the first non-finite state.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = int(step)
        super().__init__(message or f"trajectory diverged: non-finite state at step {self.step}")


@dataclass(frozen=True)
class VectorField:
    """Continuous-time dynamics ``xdot = eval(x)``.

    ``eval`` must accept arrays of shape ``(..., dimension)`` and return the
    derivative with the same shape, so that batches of states can be advanced
    together.
    """

    dimension: int
    eval: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@dataclass(frozen=True)
class DiscreteMap:
    """Discrete-time dynamics ``x_next = step(x)``, vectorized like VectorField."""

    dimension: int
    step: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@dataclass
class SnapshotSet:
    """Paired snapshots ``Y[m] = flow_dt(X[m])`` stacked as rows.

    Parameters
    ----------
    X, Y : ndarray, shape (M, N)
        Current and one-step-later states.
    dt : float
        Sampling interval (0.0 for discrete maps).
    meta : dict
        Provenance: system name, seed, horizon, integrator, warnings.
    """

    X: np.ndarray
    Y: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if self.X.shape != self.Y.shape:
            raise ValueError(f"X and Y shapes differ: {self.X.shape} vs {self.Y.shape}")
        if self.X.shape[0] == 0:
            raise ValueError("snapshot set is empty")
        if not (np.isfinite(self.X).all() and np.isfinite(self.Y).all()):
            raise ValueError("snapshot set contains non-finite entries")

    @property
    def n_pairs(self) -> int:
        return self.X.shape[0]

    @property
    def state_dim(self) -> int:
        return self.X.shape[1]


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    system: VectorField,
    x0: Sequence[float] | np.ndarray,
    dt: float,
    steps: int,
    method: str = "rk4",
    tol: float = 1e-8,
) -> np.ndarray:
    """Integrate a vector field from ``x0`` for ``steps`` intervals of ``dt``.

    Parameters
    ----------
    system : VectorField
    x0 : array_like, shape (dimension,)
    dt : float
        Positive step size.
    steps : int
        Number of intervals; the result has ``steps + 1`` rows.
    method : {"rk4", "adaptive"}
        Classical fixed-step RK4, or an embedded adaptive scheme that keeps the
        local error below ``tol`` and reports states on the same fixed grid.
    tol : float
        Local error tolerance for the adaptive method.

    Returns
    -------
    ndarray, shape (steps + 1, dimension)
        ``result[0]`` is ``x0`` exactly; row k is the state at time ``k * dt``.

    Raises
    ------
    DivergenceError
        If a non-finite state appears; ``.step`` is the offending index.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != system.dimension:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {system.dimension}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 0:
        raise ValueError("steps must be nonnegative")

    if method == "rk4":
        out = np.empty((steps + 1, system.dimension))
        out[0] = x0
        x = x0
        for k in range(steps):
            x = _rk4_step(system.eval, x, dt)
            if not np.isfinite(x).all():
                raise DivergenceError(k + 1)
            out[k + 1] = x
        return out
    if method == "adaptive":
        from scipy.integrate import solve_ivp

        t_eval = np.arange(steps + 1) * dt
        sol = solve_ivp(
            lambda t, y: system.eval(y),
            (0.0, steps * dt),
            x0,
            method="RK45",
            t_eval=t_eval,
            rtol=tol,
            atol=tol,
        )
        if not sol.success or sol.y.shape[1] != steps + 1:
            raise DivergenceError(sol.y.shape[1], f"adaptive integration stopped early: {sol.message}")
        out = sol.y.T.copy()
        out[0] = x0
        bad = ~np.isfinite(out).all(axis=1)
        if bad.any():
            raise DivergenceError(int(np.argmax(bad)))
        return out
    raise ValueError(f"unknown integration method {method!r}")


# ---------------------------------------------------------------------------
# benchmark systems
# ---------------------------------------------------------------------------

def _two_well(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 - x1**3 + x2, 2.0 * x1 - x2], axis=-1)


def _duffing(x):
    pos, vel = x[..., 0], x[..., 1]
    return np.stack([vel, -0.5 * vel - pos * (pos**2 - 1.0)], axis=-1)


def _vanderpol(x):
    pos, vel = x[..., 0], x[..., 1]
    return np.stack([vel, (1.0 - pos**2) * vel - pos], axis=-1)


def _lorenz_standard(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [10.0 * (x2 - x1), x1 * (28.0 - x3) - x2, x1 * x2 - (8.0 / 3.0) * x3], axis=-1
    )


def _lorenz_literal(x):
    # Same three coefficients with the rho/beta placement swapped; kept for
    # reproducing runs that used that parameterization.
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [10.0 * (x2 - x1), x1 * (8.0 / 3.0 - x3) - x2, x1 * x2 - 28.0 * x3], axis=-1
    )


def _henon(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([1.0 - 1.4 * x1**2 + x2, 0.3 * x1], axis=-1)


def builtin_system(name: str, variant: str = "standard") -> VectorField | DiscreteMap:
    """Return one of the named benchmark systems.

    ``two_well``, ``duffing``, ``vanderpol`` and ``lorenz`` are vector fields;
    ``henon`` is a discrete map.  ``variant="literal"`` selects the alternate
    Lorenz parameter placement (only meaningful for ``lorenz``).
    """
    if name == "two_well":
        return VectorField(2, _two_well, name)
    if name == "duffing":
        return VectorField(2, _duffing, name)
    if name == "vanderpol":
        return VectorField(2, _vanderpol, name)
    if name == "lorenz":
        if variant == "standard":
            return VectorField(3, _lorenz_standard, name)
        if variant == "literal":
            return VectorField(3, _lorenz_literal, "lorenz_literal")
        raise ValueError(f"unknown lorenz variant {variant!r}")
    if name == "henon":
        return DiscreteMap(2, _henon, name)
    raise ValueError(f"unknown system {name!r}")


# ---------------------------------------------------------------------------
# snapshot sampling
# ---------------------------------------------------------------------------

def _batched_rk4(f, states: np.ndarray, dt: float, substeps: int) -> np.ndarray:
    h = dt / substeps
    for _ in range(substeps):
        states = _rk4_step(f, states, h)
    return states


def sample_trajectories(
    system: VectorField | DiscreteMap,
    n_init: int,
    horizon: float | int,
    dt: float,
    domain: Sequence[Sequence[float]],
    seed: int,
    method: str = "rk4",
    substeps: int | None = None,
) -> tuple[list[np.ndarray], dict]:
    """Simulate ``n_init`` trajectories from uniform initial conditions.

    For a vector field, ``horizon`` is a duration and each trajectory holds
    ``round(horizon/dt) + 1`` states at t = 0, dt, ..., round(horizon/dt)*dt.
    For a discrete map, ``horizon`` is the number of states per trajectory.
    Diverging trajectories are truncated at their last finite state (recorded
    in the returned meta dict).  Identical arguments give bit-identical
    output.

    Returns ``(trajectories, meta)`` where each trajectory is an (L_i, N)
    array.
    """
    domain = np.asarray(domain, dtype=float)
    if domain.ndim != 2 or domain.shape[1] != 2:
        raise ValueError("domain must be a sequence of (low, high) pairs")
    if domain.shape[0] != system.dimension:
        raise ValueError(f"domain has {domain.shape[0]} axes, system has {system.dimension}")
    if (domain[:, 1] <= domain[:, 0]).any():
        raise ValueError("domain bounds must satisfy low < high on every axis")
    if n_init < 1:
        raise ValueError("n_init must be positive")

    rng = np.random.default_rng(seed)
    x0 = rng.uniform(domain[:, 0], domain[:, 1], size=(n_init, system.dimension))

    warnings: list[str] = []
    is_map = isinstance(system, DiscreteMap)
    if is_map:
        n_states = int(horizon)
        if n_states < 2:
            raise ValueError("horizon must give at least 2 states per trajectory")
        n_steps = n_states - 1
        advance = system.step
        dt_out = 0.0
        sub = 1
    else:
        if dt <= 0:
            raise ValueError("dt must be positive for a vector field")
        n_steps = int(round(float(horizon) / dt))
        if n_steps < 1:
            raise ValueError("horizon must cover at least one dt interval")
        sub = max(1, int(round(dt / 0.02)) if substeps is None else int(substeps))
        dt_out = dt
        if method == "rk4":
            advance = lambda s: _batched_rk4(system.eval, s, dt, sub)
        elif method == "adaptive":
            advance = None  # handled per-trajectory below
        else:
            raise ValueError(f"unknown integration method {method!r}")

    trajectories: list[np.ndarray] = []
    if not is_map and method == "adaptive":
        for i in range(n_init):
            try:
                traj = integrate(system, x0[i], dt, n_steps, method="adaptive")
            except DivergenceError as err:
                warnings.append(f"trajectory {i} diverged at step {err.step}; truncated")
                if err.step < 1:
                    trajectories.append(x0[i][None, :])
                    continue
                traj = integrate(system, x0[i], dt, err.step - 1, method="adaptive")
            trajectories.append(traj)
    else:
        # March all trajectories together; diverged ones freeze in place and
        # their tails are cut afterwards.
        states = x0.copy()
        length = np.full(n_init, 1, dtype=int)
        alive = np.ones(n_init, dtype=bool)
        hist = np.empty((n_steps + 1, n_init, system.dimension))
        hist[0] = x0
        for k in range(n_steps):
            nxt = advance(states)
            ok = np.isfinite(nxt).all(axis=1)
            for i in np.flatnonzero(alive & ~ok):
                warnings.append(f"trajectory {i} diverged at step {k + 1}; truncated")
            alive &= ok
            states = np.where(ok[:, None], nxt, states)
            hist[k + 1] = states
            length[alive] = k + 2
            if not alive.any():
                break
        trajectories = [hist[: length[i], i, :] for i in range(n_init)]

    meta = {
        "system": system.name,
        "seed": int(seed),
        "dt": float(dt_out),
        "n_init": int(n_init),
        "horizon": horizon if is_map else float(horizon),
        "method": "map" if is_map else method,
        "substeps": int(sub),
        "warnings": warnings,
    }
    return trajectories, meta


def sample_snapshots(
    system: VectorField | DiscreteMap,
    n_init: int,
    horizon: float | int,
    dt: float,
    domain: Sequence[Sequence[float]],
    seed: int,
    method: str = "rk4",
    substeps: int | None = None,
) -> SnapshotSet:
    """Draw initial conditions uniformly on a box and harvest snapshot pairs.

    Every consecutive pair within a trajectory becomes a row of (X, Y); pairs
    never straddle two trajectories.  With a vector field and duration
    ``horizon`` this yields ``round(horizon/dt)`` pairs per initial condition;
    with a discrete map, ``horizon - 1``.  See :func:`sample_trajectories`
    for the simulation conventions (determinism, divergence handling).
    """
    trajectories, meta = sample_trajectories(
        system, n_init, horizon, dt, domain, seed, method, substeps
    )
    xs = [t[:-1] for t in trajectories if t.shape[0] >= 2]
    ys = [t[1:] for t in trajectories if t.shape[0] >= 2]
    if not xs:
        raise DivergenceError(0, "every trajectory diverged before producing a pair")
    return SnapshotSet(
        X=np.concatenate(xs, axis=0),
        Y=np.concatenate(ys, axis=0),
        dt=meta["dt"],
        meta=meta,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_snapshots(snapshots: SnapshotSet, path: str | Path) -> Path:
    """Write pairs as CSV (x1..xN,y1..yN, 17 significant digits) plus a
    ``<stem>.meta.json`` sidecar.  Returns the CSV path."""
    path = Path(path)
    n = snapshots.state_dim
    header = ",".join([f"x{i+1}" for i in range(n)] + [f"y{i+1}" for i in range(n)])
    rows = [header]
    for xr, yr in zip(snapshots.X, snapshots.Y):
        rows.append(",".join(f"{v:.17g}" for v in (*xr, *yr)))
    _atomic_write_text(path, "\n".join(rows) + "\n")
    meta = dict(snapshots.meta)
    meta.setdefault("dt", snapshots.dt)
    _atomic_write_text(_meta_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_snapshots(path: str | Path) -> SnapshotSet:
    """Inverse of :func:`save_snapshots`; tolerates a missing sidecar."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if len(header) % 2 != 0 or not header[0].startswith("x"):
        raise ValueError(f"{path}: not a snapshot CSV (header {header[:4]}...)")
    n = len(header) // 2
    meta_file = _meta_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return SnapshotSet(X=data[:, :n], Y=data[:, n:], dt=float(meta.get("dt", 0.0)), meta=meta)
