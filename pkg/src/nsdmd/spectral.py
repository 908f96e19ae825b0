"""Spectra of fitted operators and eigenfunction evaluation on lattices.

A Koopman eigenfunction is a dictionary combination phi_j(x) = Psi(x) v_j with
v_j a right eigenvector of K; the dual objects (densities) combine left
eigenvectors of P.  The left eigenvector of P at eigenvalue 1, when it exists,
is the coefficient vector of an invariant density.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .edmd import TransferModel

__all__ = [
    "SpectralError",
    "Spectrum",
    "GridSpec",
    "EigenfunctionGrid",
    "eig_sorted",
    "koopman_eigenfunction",
    "pf_eigenfunction",
    "invariant_density",
    "unit_eigenvalue_index",
    "save_grid",
    "load_grid",
    "eigenvalue_table",
    "save_eigenvalue_table",
]


class SpectralError(RuntimeError):
    """A requested spectral object does not exist (e.g. no eigenvalue 1)."""


def _sorted_eig(mat: np.ndarray):
    """Eigendecomposition sorted by modulus desc, ties by real then imag desc."""
    w, v = np.linalg.eig(mat)
    order = np.lexsort((-w.imag, -w.real, -np.abs(w)))
    return w[order], v[:, order]


@dataclass
class Spectrum:
    """Sorted eigenstructure of a model's K and P matrices.

    ``right_vectors`` holds unit-norm right eigenvectors of K in columns;
    ``left_vectors_P`` holds unit-norm left eigenvectors of P in rows, sorted
    by the matching rule on P's own eigenvalues (``eigenvalues_P``).
    ``residuals[j]`` is ||K v_j - lambda_j v_j||.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors_P: np.ndarray
    eigenvalues_P: np.ndarray
    residuals: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]


def eig_sorted(model: TransferModel) -> Spectrum:
    """Full eigendecomposition of K and of P with a fixed ordering.

    Sorting is by modulus descending, ties broken by real part then imaginary
    part descending.  All eigenvectors are normalized to unit 2-norm.
    """
    w_k, v_k = _sorted_eig(model.K)
    v_k = v_k / np.linalg.norm(v_k, axis=0, keepdims=True)
    # Left eigenvectors of P are right eigenvectors of P^T.
    w_p, v_pt = _sorted_eig(model.P.T)
    v_pt = v_pt / np.linalg.norm(v_pt, axis=0, keepdims=True)
    residuals = np.linalg.norm(model.K @ v_k - v_k * w_k[None, :], axis=0)
    return Spectrum(
        eigenvalues=w_k,
        right_vectors=v_k,
        left_vectors_P=v_pt.T,
        eigenvalues_P=w_p,
        residuals=residuals,
    )


# ---------------------------------------------------------------------------
# evaluation lattices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """A rectangular evaluation lattice: per-axis (min, max, count)."""

    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        axes = tuple((float(a), float(b), int(c)) for a, b, c in self.axes)
        for lo, hi, count in axes:
            if count < 2:
                raise ValueError("each axis needs at least 2 points")
            if hi <= lo:
                raise ValueError("axis bounds must satisfy min < max")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c for _, _, c in self.axes)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, c) for lo, hi, c in self.axes]

    def points(self) -> np.ndarray:
        """All lattice points, row-major (last axis varies fastest), (n, N)."""
        mesh = np.meshgrid(*self.coordinates(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_volume(self) -> float:
        steps = [(hi - lo) / (c - 1) for lo, hi, c in self.axes]
        return float(np.prod(steps))


@dataclass
class EigenfunctionGrid:
    """Eigenfunction (or density) values on a lattice, plus bookkeeping.

    ``which`` tags the object ("koopman:j", "pf:j", or "density");
    ``normalization`` records how the raw eigenvector was scaled.
    """

    grid: GridSpec
    values: np.ndarray
    which: str
    normalization: dict = field(default_factory=dict)


def _phase_normalize(values: np.ndarray) -> tuple[np.ndarray, dict]:
    """Scale so the maximum modulus is 1 and that value is real positive."""
    idx = int(np.argmax(np.abs(values)))
    peak = values[idx]
    if np.abs(peak) == 0:
        raise SpectralError("eigenfunction vanishes at every requested point")
    return values / peak, {"mode": "peak", "peak_index": idx, "peak_modulus": float(np.abs(peak))}


def _eval_on_points(model: TransferModel, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    from .dictionary import eval_dictionary

    if model.dictionary is None:
        raise ValueError("model has no dictionary attached; cannot evaluate eigenfunctions")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("no evaluation points given")
    feats = eval_dictionary(model.dictionary, points)
    return feats.astype(complex) @ coeffs


def koopman_eigenfunction(
    model: TransferModel, spectrum: Spectrum, j: int, points: np.ndarray
) -> np.ndarray:
    """Values of the j-th (sorted) Koopman eigenfunction at the given points,
    normalized so the largest modulus is 1 and attained at a positive real."""
    vals = _eval_on_points(model, spectrum.right_vectors[:, j], points)
    out, _ = _phase_normalize(vals)
    return out


def pf_eigenfunction(
    model: TransferModel, spectrum: Spectrum, j: int, points: np.ndarray
) -> np.ndarray:
    """Same as :func:`koopman_eigenfunction` for the j-th left eigenvector of
    P (density-side eigenfunction)."""
    vals = _eval_on_points(model, spectrum.left_vectors_P[j, :], points)
    out, _ = _phase_normalize(vals)
    return out


def unit_eigenvalue_index(spectrum: Spectrum, tol: float = 1e-6) -> int:
    """Index of P's eigenvalue closest to 1 within ``tol``.

    Raises SpectralError when no eigenvalue of P lies within ``tol`` of 1.
    """
    dist = np.abs(spectrum.eigenvalues_P - 1.0)
    idx = int(np.argmin(dist))
    if dist[idx] > tol:
        raise SpectralError(
            f"no eigenvalue within {tol:g} of 1 (closest: {spectrum.eigenvalues_P[idx]:.8g})"
        )
    return idx


def invariant_density(
    model: TransferModel, spectrum: Spectrum, grid: GridSpec, tol: float = 1e-6
) -> EigenfunctionGrid:
    """Invariant density on a lattice from the eigenvalue-1 left eigenvector
    of P.

    The sign is fixed so the lattice Riemann sum is positive and the values
    are scaled to integrate to 1.  Any residual negative part is reported in
    ``normalization["negative_mass_fraction"]`` (fraction of total absolute
    mass sitting below -1e-6).
    """
    idx = unit_eigenvalue_index(spectrum, tol)
    coeffs = spectrum.left_vectors_P[idx, :]
    points = grid.points()
    vals = _eval_on_points(model, coeffs, points)
    vals = np.real_if_close(vals, tol=1e6)
    real_vals = vals.real.astype(float)
    vol = grid.cell_volume()
    total = real_vals.sum() * vol
    if total == 0:
        raise SpectralError("candidate invariant density integrates to zero on the grid")
    if total < 0:
        real_vals = -real_vals
        total = -total
    real_vals = real_vals / total
    neg = real_vals < -1e-6
    neg_mass = float(np.abs(real_vals[neg]).sum() / max(np.abs(real_vals).sum(), 1e-300))
    record = {
        "mode": "integral",
        "eigenvalue": complex(spectrum.eigenvalues_P[idx]),
        "negative_mass_fraction": neg_mass,
        "cell_volume": vol,
    }
    return EigenfunctionGrid(grid=grid, values=real_vals.astype(complex), which="density", normalization=record)


def eigenfunction_grid(
    model: TransferModel, spectrum: Spectrum, which: str, grid: GridSpec
) -> EigenfunctionGrid:
    """Evaluate a tagged spectral object on a lattice.

    ``which`` is "koopman:j" or "pf:j" with j a 1-based rank in the sorted
    spectrum, or "density" for the invariant density.
    """
    if which == "density":
        return invariant_density(model, spectrum, grid)
    try:
        kind, rank_s = which.split(":")
        rank = int(rank_s)
    except ValueError:
        raise ValueError(f"bad spectral request {which!r}; expected 'koopman:j', 'pf:j' or 'density'")
    if not 1 <= rank <= spectrum.size:
        raise SpectralError(f"rank {rank} out of range 1..{spectrum.size}")
    points = grid.points()
    if kind == "koopman":
        vals = _eval_on_points(model, spectrum.right_vectors[:, rank - 1], points)
    elif kind == "pf":
        vals = _eval_on_points(model, spectrum.left_vectors_P[rank - 1, :], points)
    else:
        raise ValueError(f"bad spectral request {which!r}")
    out, record = _phase_normalize(vals)
    return EigenfunctionGrid(grid=grid, values=out, which=which, normalization=record)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_grid(grid: EigenfunctionGrid, path: str | Path) -> Path:
    """CSV rows x1..xN,re,im in row-major lattice order, plus a JSON sidecar
    describing the lattice."""
    path = Path(path)
    points = grid.grid.points()
    n = points.shape[1]
    header = ",".join([f"x{i+1}" for i in range(n)] + ["re", "im"])
    lines = [header]
    for pt, val in zip(points, grid.values):
        cols = [f"{c:.17g}" for c in pt] + [f"{val.real:.17g}", f"{val.imag:.17g}"]
        lines.append(",".join(cols))
    _atomic_write_text(path, "\n".join(lines) + "\n")
    norm = {k: (repr(v) if isinstance(v, complex) else v) for k, v in grid.normalization.items()}
    sidecar = {
        "axes": [list(ax) for ax in grid.grid.axes],
        "which": grid.which,
        "normalization": norm,
    }
    _atomic_write_text(path.with_name(path.stem + ".lattice.json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_grid(path: str | Path) -> EigenfunctionGrid:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.stem + ".lattice.json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = data[:, -2] + 1j * data[:, -1]
    return EigenfunctionGrid(
        grid=GridSpec(axes=tuple(tuple(ax) for ax in sidecar["axes"])),
        values=values,
        which=sidecar["which"],
        normalization=sidecar.get("normalization", {}),
    )


def eigenvalue_table(spectrum: Spectrum) -> list[tuple[int, float, float, float, float]]:
    """Rows (index, re, im, modulus, residual) for the sorted K spectrum."""
    rows = []
    for i, (w, r) in enumerate(zip(spectrum.eigenvalues, spectrum.residuals), start=1):
        rows.append((i, float(w.real), float(w.imag), float(np.abs(w)), float(r)))
    return rows


def save_eigenvalue_table(spectrum: Spectrum, path: str | Path) -> Path:
    path = Path(path)
    lines = ["index,re,im,modulus,residual"]
    for idx, re, im, mod, res in eigenvalue_table(spectrum):
        lines.append(f"{idx},{re:.17g},{im:.17g},{mod:.17g},{res:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return path
