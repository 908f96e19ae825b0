"""Least-squares operator fits: EDMD on dictionary moments, DMD on raw states.

Conventions used across the package: the Koopman matrix K acts on coefficient
columns (observables advance as v_next = K v), and the Perron-Frobenius matrix
P = Lambda K Lambda^-1 acts on coefficient rows (densities advance as
u_next = u P).  The DMD matrix Y X^+ acts directly on state columns and equals
the transpose of the EDMD matrix obtained with the coordinate dictionary on
the same data.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dictionary import (
    Dictionary,
    GramPair,
    coordinates,
    dictionary_from_payload,
    dictionary_hash,
    dictionary_to_payload,
)

__all__ = [
    "TransferModel",
    "lambda_eig",
    "apply_similarity",
    "fit_edmd",
    "fit_dmd",
    "save_model",
    "load_model",
]

DEFAULT_SVD_TOL = 1e-10


@dataclass
class TransferModel:
    """A fitted operator pair (K, P) with its inner-product weight Lambda.

    ``objective`` is the Frobenius residual ||G K - A||_F of the fit (for DMD,
    the state-space residual ||K X - Y||_F).  ``solver_stats`` carries
    iteration counts, residuals and wall time; ``converged`` is False only for
    iterative fits that hit their iteration cap.
    """

    K: np.ndarray
    P: np.ndarray
    Lambda: np.ndarray
    dictionary: Dictionary | None
    objective: float
    method: str
    solver_stats: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def size(self) -> int:
        return self.K.shape[0]


def lambda_eig(Lambda: np.ndarray, floor: float = 0.0):
    """Guarded symmetric eigendecomposition of Lambda.

    Eigenvalues are floored at ``max(floor, max_eig * 1e-15)`` so the inverse
    is always defined; returns (Q, d) with Lambda ~= Q diag(d) Q^T.
    """
    lam = 0.5 * (Lambda + Lambda.T)
    d, q = np.linalg.eigh(lam)
    lo = max(float(floor), float(d[-1]) * 1e-15) if d[-1] > 0 else max(float(floor), 1e-300)
    return q, np.maximum(d, lo)


def apply_similarity(K: np.ndarray, Lambda: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """P = Lambda K Lambda^-1 through the guarded eigendecomposition."""
    q, d = lambda_eig(Lambda, floor)
    kt = q.T @ K @ q
    return q @ (kt * (d[:, None] / d[None, :])) @ q.T


def fit_edmd(gram: GramPair, svd_tol: float = DEFAULT_SVD_TOL, dictionary: Dictionary | None = None) -> TransferModel:
    """Unconstrained least-squares fit K = G^+ A.

    The pseudoinverse truncates singular values below ``svd_tol`` relative to
    the largest, so rank-deficient dictionaries are handled without blowing
    up.  The fit minimizes ||G K - A||_F; with a singular G the minimum-norm
    solution is returned.
    """
    t0 = time.perf_counter()
    u, s, vt = np.linalg.svd(gram.G)
    keep = s > svd_tol * (s[0] if s.size else 0.0)
    rank = int(keep.sum())
    ginv = (vt[:rank].T / s[:rank]) @ u[:, :rank].T
    K = ginv @ gram.A
    objective = float(np.linalg.norm(gram.G @ K - gram.A))
    P = apply_similarity(K, gram.Lambda, gram.ridge)
    stats = {
        "rank": rank,
        "svd_tol": float(svd_tol),
        "wall_time_s": time.perf_counter() - t0,
    }
    return TransferModel(
        K=K,
        P=P,
        Lambda=gram.Lambda.copy(),
        dictionary=dictionary,
        objective=objective,
        method="edmd",
        solver_stats=stats,
    )


def fit_dmd(X: np.ndarray, Y: np.ndarray, svd_tol: float = DEFAULT_SVD_TOL) -> TransferModel:
    """Plain DMD on snapshot matrices with states in columns: K = Y X^+.

    The returned K advances states directly (x_next = K x) and is the
    transpose of the coordinate-dictionary EDMD matrix on the same data.
    Lambda is the identity, so P coincides with K.
    """
    t0 = time.perf_counter()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise ValueError(f"X and Y shapes differ: {X.shape} vs {Y.shape}")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    keep = s > svd_tol * (s[0] if s.size else 0.0)
    rank = int(keep.sum())
    xinv = (vt[:rank].T / s[:rank]) @ u[:, :rank].T
    K = Y @ xinv
    n = X.shape[0]
    stats = {
        "rank": rank,
        "svd_tol": float(svd_tol),
        "wall_time_s": time.perf_counter() - t0,
        "objective_kind": "state_residual",
    }
    return TransferModel(
        K=K,
        P=K.copy(),
        Lambda=np.eye(n),
        dictionary=coordinates(n),
        objective=float(np.linalg.norm(K @ X - Y)),
        method="dmd",
        solver_stats=stats,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_model(model: TransferModel, path: str | Path) -> Path:
    """Write the model as JSON (full double precision via repr round-trip)."""
    path = Path(path)
    payload = {
        "method": model.method,
        "K": model.K.tolist(),
        "P": model.P.tolist(),
        "Lambda": model.Lambda.tolist(),
        "objective": model.objective,
        "converged": model.converged,
        "solver_stats": _jsonable(model.solver_stats),
        "dictionary": None if model.dictionary is None else dictionary_to_payload(model.dictionary),
        "dictionary_hash": None if model.dictionary is None else dictionary_hash(model.dictionary),
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def load_model(path: str | Path) -> TransferModel:
    payload = json.loads(Path(path).read_text())
    dict_payload = payload.get("dictionary")
    return TransferModel(
        K=np.asarray(payload["K"], dtype=float),
        P=np.asarray(payload["P"], dtype=float),
        Lambda=np.asarray(payload["Lambda"], dtype=float),
        dictionary=None if dict_payload is None else dictionary_from_payload(dict_payload),
        objective=float(payload["objective"]),
        method=payload["method"],
        solver_stats=payload.get("solver_stats", {}),
        converged=bool(payload.get("converged", True)),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
