"""Almost-everywhere stability certificates from the density-side matrix.

Restricting the Markov matrix P to the complement of an attractor set gives a
substochastic matrix P1.  When its spectral radius is below one, the series
u = m (I - P1)^-1 = m + m P1 + m P1^2 + ... converges to a nonnegative row
vector: a discrete Lyapunov measure certifying that mass injected outside the
attractor is eventually absorbed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .edmd import TransferModel
from .spectral import Spectrum, unit_eigenvalue_index

__all__ = [
    "LyapunovResult",
    "identify_attractor",
    "lyapunov_measure",
    "save_lyapunov",
    "load_lyapunov",
]


@dataclass
class LyapunovResult:
    """Outcome of the certificate computation.

    ``measure`` is indexed by ``complement_indices`` (all states outside the
    attractor).  ``converged`` is False when the restricted spectral radius is
    not safely below one, in which case ``measure`` is empty.
    """

    attractor_indices: np.ndarray
    complement_indices: np.ndarray
    sub_spectral_radius: float
    measure: np.ndarray
    converged: bool

    def to_dict(self) -> dict:
        return {
            "attractor_indices": self.attractor_indices.tolist(),
            "complement_indices": self.complement_indices.tolist(),
            "sub_spectral_radius": self.sub_spectral_radius,
            "measure": self.measure.tolist(),
            "converged": self.converged,
        }


def identify_attractor(
    model: TransferModel, spectrum: Spectrum, threshold_fraction: float = 0.1
) -> np.ndarray:
    """Indices whose invariant-density coefficient exceeds a fraction of the
    largest one.

    The coefficient vector is the eigenvalue-1 left eigenvector of P, sign
    fixed so its sum is positive.  Raises when P has no eigenvalue near 1 or
    the threshold is out of (0, 1).
    """
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold_fraction must lie strictly between 0 and 1")
    idx = unit_eigenvalue_index(spectrum)
    coeffs = np.real(spectrum.left_vectors_P[idx, :])
    if coeffs.sum() < 0:
        coeffs = -coeffs
    peak = coeffs.max()
    if peak <= 0:
        raise ValueError("invariant-density coefficients are not one-signed; no attractor found")
    selected = np.flatnonzero(coeffs > threshold_fraction * peak)
    if selected.size == 0:
        raise ValueError("threshold selected no state; lower threshold_fraction")
    return selected


def lyapunov_measure(
    model: TransferModel,
    attractor: Sequence[int] | np.ndarray,
    source_mass: Sequence[float] | np.ndarray | None = None,
    radius_margin: float = 1e-8,
) -> LyapunovResult:
    """Solve u (I - P1) = m on the complement of the attractor.

    ``source_mass`` defaults to the all-ones row.  When the spectral radius of
    the restricted matrix P1 is below ``1 - radius_margin`` the linear system
    is solved exactly, the result is checked nonnegative (to -1e-10), and the
    Neumann identity u = m + u P1 holds to solver precision.  Otherwise the
    result is returned with ``converged=False`` and an empty measure.
    """
    n = model.P.shape[0]
    attractor = np.unique(np.asarray(attractor, dtype=int))
    if attractor.size == 0:
        raise ValueError("attractor set is empty")
    if attractor.min() < 0 or attractor.max() >= n:
        raise ValueError(f"attractor indices must lie in [0, {n})")
    mask = np.ones(n, dtype=bool)
    mask[attractor] = False
    complement = np.flatnonzero(mask)
    if complement.size == 0:
        raise ValueError("complement is empty; attractor covers every state")
    p1 = model.P[np.ix_(complement, complement)]
    radius = float(np.abs(np.linalg.eigvals(p1)).max()) if complement.size else 0.0

    if source_mass is None:
        m = np.ones(complement.size)
    else:
        m = np.asarray(source_mass, dtype=float).reshape(-1)
        if m.shape[0] != complement.size:
            raise ValueError(
                f"source_mass has length {m.shape[0]}, complement has {complement.size}"
            )
        if (m < 0).any():
            raise ValueError("source_mass must be nonnegative")

    if radius >= 1.0 - radius_margin:
        return LyapunovResult(
            attractor_indices=attractor,
            complement_indices=complement,
            sub_spectral_radius=radius,
            measure=np.empty(0),
            converged=False,
        )
    # u (I - P1) = m  <=>  (I - P1)^T u^T = m^T
    u = np.linalg.solve(np.eye(complement.size) - p1.T, m)
    if u.min() < -1e-10:
        raise ArithmeticError(
            f"Lyapunov measure has a negative entry ({u.min():.3e}) beyond tolerance"
        )
    return LyapunovResult(
        attractor_indices=attractor,
        complement_indices=complement,
        sub_spectral_radius=radius,
        measure=u,
        converged=True,
    )


def save_lyapunov(result: LyapunovResult, path: str | Path) -> Path:
    path = Path(path)
    payload = result.to_dict()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def load_lyapunov(path: str | Path) -> LyapunovResult:
    payload = json.loads(Path(path).read_text())
    return LyapunovResult(
        attractor_indices=np.asarray(payload["attractor_indices"], dtype=int),
        complement_indices=np.asarray(payload["complement_indices"], dtype=int),
        sub_spectral_radius=float(payload["sub_spectral_radius"]),
        measure=np.asarray(payload["measure"], dtype=float),
        converged=bool(payload["converged"]),
    )
