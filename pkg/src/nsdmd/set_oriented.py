"""Set-oriented (box partition) transition matrices and density comparison.

A box partition chops an axis-aligned domain into a regular grid of half-open
cells.  Counting one-step transitions of trajectory points between cells, or
propagating a cloud of sample points from each cell, yields a row-stochastic
matrix that is a derivative-free reference approximation of the
Perron-Frobenius operator; its stationary density cross-checks the
dictionary-based fits.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .systems import DiscreteMap, VectorField, _batched_rk4

__all__ = [
    "BoxPartition",
    "UlamMatrix",
    "ulam_from_trajectory",
    "ulam_from_sampling",
    "stationary_density",
    "compare_densities",
    "save_ulam",
    "load_ulam",
]


@dataclass(frozen=True)
class BoxPartition:
    """Regular grid of half-open boxes [lo, hi) covering a rectangular domain.

    The top face of the last cell along each axis is closed, so the domain's
    upper boundary belongs to the partition.  Flat indices are row-major
    (last axis fastest).
    """

    domain: np.ndarray       # (N, 2)
    divisions: tuple[int, ...]

    def __post_init__(self):
        domain = np.asarray(self.domain, dtype=float)
        if domain.ndim != 2 or domain.shape[1] != 2:
            raise ValueError("domain must have shape (N, 2)")
        if (domain[:, 1] <= domain[:, 0]).any():
            raise ValueError("domain bounds must satisfy lo < hi")
        divisions = tuple(int(d) for d in np.atleast_1d(self.divisions))
        if len(divisions) == 1 and domain.shape[0] > 1:
            divisions = divisions * domain.shape[0]
        if len(divisions) != domain.shape[0]:
            raise ValueError("divisions must give one count per axis")
        if any(d < 1 for d in divisions):
            raise ValueError("divisions must be positive")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "divisions", divisions)

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    @property
    def n_boxes(self) -> int:
        return int(np.prod(self.divisions))

    @property
    def box_volume(self) -> float:
        widths = (self.domain[:, 1] - self.domain[:, 0]) / np.asarray(self.divisions)
        return float(np.prod(widths))

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat box index for each point; -1 for points outside the domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.domain[:, 0]
        hi = self.domain[:, 1]
        divs = np.asarray(self.divisions)
        widths = (hi - lo) / divs
        inside = ((pts >= lo) & (pts <= hi)).all(axis=1)
        axis_idx = np.floor((pts - lo) / widths).astype(int)
        # Close the top boundary: points exactly at hi fall in the last cell.
        axis_idx = np.minimum(axis_idx, divs - 1)
        axis_idx = np.maximum(axis_idx, 0)
        flat = np.ravel_multi_index(axis_idx.T, divs, mode="clip")
        out = np.where(inside, flat, -1)
        return out if np.asarray(points).ndim > 1 else out[0]

    def centers(self) -> np.ndarray:
        """Box centers, (n_boxes, N), in flat-index order."""
        axes = [
            self.domain[a, 0] + (np.arange(d) + 0.5) * (self.domain[a, 1] - self.domain[a, 0]) / d
            for a, d in enumerate(self.divisions)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass
class UlamMatrix:
    """Box-to-box transition estimate.

    ``counts`` holds raw transition tallies (trajectory mode) or landing
    tallies (sampling mode); ``Pprime`` is the row-normalized matrix.  Rows of
    boxes with no data are set to the self-loop e_i and flagged False in
    ``visited``.  ``leak[i]`` is the fraction of samples from box i that left
    the domain (always 0 in trajectory mode, where such transitions are
    dropped and tallied in ``dropped``).
    """

    partition: BoxPartition
    counts: np.ndarray
    Pprime: np.ndarray
    visited: np.ndarray
    leak: np.ndarray
    dropped: int = 0
    mode: str = "trajectory"


def _normalize_rows(counts: np.ndarray, totals: np.ndarray):
    n = counts.shape[0]
    visited = totals > 0
    pprime = np.zeros_like(counts, dtype=float)
    pprime[visited] = counts[visited] / totals[visited, None]
    for i in np.flatnonzero(~visited):
        pprime[i, i] = 1.0
    return pprime, visited


def ulam_from_trajectory(
    trajectories: np.ndarray | Sequence[np.ndarray], partition: BoxPartition
) -> UlamMatrix:
    """Count one-step transitions between boxes along trajectories.

    Accepts one (L, N) trajectory or a sequence of them; consecutive pairs are
    counted within each trajectory only, so nothing flows between separate
    trajectories.  Pairs with either endpoint outside the domain are dropped
    (tallied in ``dropped``).  Raises when no usable transition remains.
    """
    if isinstance(trajectories, np.ndarray) and trajectories.ndim == 2:
        trajectories = [trajectories]
    n = partition.n_boxes
    counts = np.zeros((n, n), dtype=np.int64)
    dropped = 0
    for traj in trajectories:
        traj = np.atleast_2d(np.asarray(traj, dtype=float))
        if traj.shape[0] < 2:
            continue
        idx = partition.locate(traj)
        src, dst = idx[:-1], idx[1:]
        ok = (src >= 0) & (dst >= 0)
        dropped += int((~ok).sum())
        np.add.at(counts, (src[ok], dst[ok]), 1)
    totals = counts.sum(axis=1)
    if totals.sum() == 0:
        raise ValueError("no transition falls inside the partition domain")
    pprime, visited = _normalize_rows(counts.astype(float), totals.astype(float))
    return UlamMatrix(
        partition=partition,
        counts=counts,
        Pprime=pprime,
        visited=visited,
        leak=np.zeros(n),
        dropped=dropped,
        mode="trajectory",
    )


def ulam_from_sampling(
    system: DiscreteMap | VectorField,
    partition: BoxPartition,
    samples_per_box: int,
    seed: int,
    dt: float | None = None,
    substeps: int = 1,
) -> UlamMatrix:
    """Monte Carlo transition matrix: propagate uniform samples from each box.

    Each box gets its own deterministic substream derived from (seed, box
    index), so results are reproducible and independent of evaluation order.
    Samples landing outside the domain accumulate in ``leak``; rows satisfy
    row_sum + leak = 1 exactly.  For a vector field, one step means advancing
    time ``dt`` (RK4 with ``substeps`` internal stages).
    """
    if samples_per_box < 1:
        raise ValueError("samples_per_box must be positive")
    is_map = isinstance(system, DiscreteMap)
    if not is_map and (dt is None or dt <= 0):
        raise ValueError("a positive dt is required for a vector field")
    n = partition.n_boxes
    counts = np.zeros((n, n), dtype=np.int64)
    leak_counts = np.zeros(n, dtype=np.int64)
    lo = partition.domain[:, 0]
    widths = (partition.domain[:, 1] - lo) / np.asarray(partition.divisions)
    corners = partition.centers() - widths / 2.0
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        pts = corners[i] + rng.uniform(0.0, 1.0, size=(samples_per_box, partition.dim)) * widths
        if is_map:
            out = system.step(pts)
        else:
            out = _batched_rk4(system.eval, pts, dt, max(1, substeps))
        finite = np.isfinite(out).all(axis=1)
        dest = np.full(samples_per_box, -1, dtype=int)
        dest[finite] = partition.locate(out[finite])
        landed = dest >= 0
        np.add.at(counts[i], dest[landed], 1)
        leak_counts[i] = int((~landed).sum())
    pprime = counts / float(samples_per_box)
    leak = leak_counts / float(samples_per_box)
    visited = np.ones(n, dtype=bool)
    return UlamMatrix(
        partition=partition,
        counts=counts,
        Pprime=pprime,
        visited=visited,
        leak=leak,
        dropped=int(leak_counts.sum()),
        mode="sampling",
    )


def stationary_density(
    ulam: UlamMatrix, tol: float = 1e-10, max_iter: int = 200_000
) -> tuple[np.ndarray, np.ndarray]:
    """Stationary mass and density of the Ulam matrix by power iteration.

    Iterates the lazy chain (I + P)/2, which has the same stationary vector
    and always converges on periodic chains, until ||pi P - pi||_1 <= tol on
    the original matrix.  Unvisited boxes start with zero mass.  Returns
    ``(mass, density)`` with density = mass / box volume.

    The default ``tol`` leaves headroom above the float64 accumulation floor
    of the L1 residual (roughly n^2 * machine eps for an n-box partition);
    tightening it much below 1e-11 can make convergence unreachable on
    partitions of a few hundred boxes even when the iteration is fine.
    """
    p = ulam.Pprime
    n = p.shape[0]
    pi = np.where(ulam.visited, 1.0, 0.0)
    if pi.sum() == 0:
        raise ValueError("no visited box; cannot compute a stationary density")
    pi /= pi.sum()
    for _ in range(max_iter):
        nxt = 0.5 * (pi + pi @ p)
        s = nxt.sum()
        if s <= 0:
            raise RuntimeError("mass vanished during power iteration (leaky matrix)")
        nxt /= s
        if np.abs(nxt @ p - nxt).sum() <= tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise RuntimeError(f"power iteration did not reach residual {tol:g} in {max_iter} steps")
    return pi, pi / ulam.partition.box_volume


def compare_densities(ulam: UlamMatrix, grid_density, tol: float = 1e-10) -> float:
    """L1 distance between the Ulam stationary density and a lattice density.

    The lattice values are averaged over each partition cell, both densities
    are normalized to unit mass over the partition, and the distance is
    sum |difference| * cell volume.  ``tol`` is forwarded to the stationary
    solve.  Raises when the lattice does not intersect the partition or
    carries no mass there.
    """
    part = ulam.partition
    pts = grid_density.grid.points()
    idx = part.locate(pts)
    inside = idx >= 0
    if not inside.any():
        raise ValueError("evaluation lattice does not overlap the partition domain")
    vals = np.real(np.asarray(grid_density.values))
    sums = np.bincount(idx[inside], weights=vals[inside], minlength=part.n_boxes)
    hits = np.bincount(idx[inside], minlength=part.n_boxes)
    cell_avg = np.zeros(part.n_boxes)
    nz = hits > 0
    cell_avg[nz] = sums[nz] / hits[nz]
    vol = part.box_volume
    mass = cell_avg.sum() * vol
    if mass <= 0:
        raise ValueError("lattice density has no positive mass over the partition")
    rho_grid = cell_avg / mass
    pi, rho_ulam = stationary_density(ulam, tol=tol)
    return float(np.abs(rho_grid - rho_ulam).sum() * vol)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_ulam(ulam: UlamMatrix, path: str | Path) -> Path:
    """Sparse triplet CSV (i,j,count,prob) plus a JSON sidecar with the
    partition, visited mask, and leak column."""
    path = Path(path)
    lines = ["i,j,count,prob"]
    src, dst = np.nonzero((ulam.counts > 0) | (ulam.Pprime > 0))
    for i, j in zip(src, dst):
        lines.append(f"{i},{j},{int(ulam.counts[i, j])},{ulam.Pprime[i, j]:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")
    sidecar = {
        "domain": ulam.partition.domain.tolist(),
        "divisions": list(ulam.partition.divisions),
        "visited": ulam.visited.astype(int).tolist(),
        "leak": ulam.leak.tolist(),
        "dropped": int(ulam.dropped),
        "mode": ulam.mode,
    }
    _atomic_write_text(path.with_name(path.stem + ".partition.json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_ulam(path: str | Path) -> UlamMatrix:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.stem + ".partition.json").read_text())
    part = BoxPartition(domain=np.asarray(sidecar["domain"]), divisions=tuple(sidecar["divisions"]))
    n = part.n_boxes
    counts = np.zeros((n, n), dtype=np.int64)
    pprime = np.zeros((n, n))
    with open(path) as fh:
        next(fh)
        for line in fh:
            i_s, j_s, c_s, p_s = line.strip().split(",")
            counts[int(i_s), int(j_s)] = int(c_s)
            pprime[int(i_s), int(j_s)] = float(p_s)
    return UlamMatrix(
        partition=part,
        counts=counts,
        Pprime=pprime,
        visited=np.asarray(sidecar["visited"], dtype=bool),
        leak=np.asarray(sidecar["leak"], dtype=float),
        dropped=int(sidecar["dropped"]),
        mode=sidecar.get("mode", "trajectory"),
    )
