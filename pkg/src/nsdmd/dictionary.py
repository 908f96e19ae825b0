"""Observable dictionaries and the empirical Gram structures built from data.

A dictionary is a finite set of scalar functions psi_1..psi_K on state space.
Evaluating it on snapshot pairs yields the two cross moments

    G = (1/M) sum_m Psi(x_m)^T Psi(x_m),   A = (1/M) sum_m Psi(x_m)^T Psi(y_m),

with Psi(x) the 1 x K row of dictionary values, plus a symmetric positive
definite weight matrix Lambda encoding the inner product between dictionary
elements.  Everything downstream (least-squares fits, constrained fits,
spectra) consumes only (G, A, Lambda).
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .systems import SnapshotSet

__all__ = [
    "Dictionary",
    "GramPair",
    "gaussian_rbf",
    "indicator_boxes",
    "coordinates",
    "monomials",
    "eval_dictionary",
    "kmeans_centers",
    "gram_matrices",
    "lambda_matrix",
    "dictionary_to_payload",
    "dictionary_from_payload",
    "save_dictionary",
    "load_dictionary",
    "dictionary_hash",
]


@dataclass(frozen=True)
class Dictionary:
    """A finite function dictionary.

    kind is one of ``gaussian_rbf``, ``indicator_boxes``, ``coordinates``,
    ``monomials``; only the fields relevant to the kind are set.  ``ridge`` is
    an optional default regularization used when Gram matrices are assembled
    with this dictionary.
    """

    kind: str
    state_dim: int
    centers: np.ndarray | None = None       # (K, N), gaussian_rbf
    sigma: float | None = None              # gaussian_rbf width
    rbf_exponent: str = "squared"           # "squared" or "absolute"
    boxes: np.ndarray | None = None         # (K, N, 2), indicator_boxes
    degree: int | None = None               # monomials
    ridge: float | None = None

    @property
    def size(self) -> int:
        if self.kind == "gaussian_rbf":
            return self.centers.shape[0]
        if self.kind == "indicator_boxes":
            return self.boxes.shape[0]
        if self.kind == "coordinates":
            return self.state_dim
        if self.kind == "monomials":
            return math.comb(self.state_dim + self.degree, self.degree)
        raise ValueError(f"unknown dictionary kind {self.kind!r}")

    @property
    def assumption_nonnegative(self) -> bool:
        """True when every dictionary element is pointwise nonnegative, the
        structural assumption behind the positivity-constrained fits."""
        return self.kind in ("gaussian_rbf", "indicator_boxes")


def gaussian_rbf(
    centers: np.ndarray,
    sigma: float,
    rbf_exponent: str = "squared",
    ridge: float | None = None,
) -> Dictionary:
    """Gaussian radial basis dictionary.

    With the default squared exponent, psi_i(x) = exp(-||x - c_i||^2 / sigma^2);
    ``rbf_exponent="absolute"`` uses the unsquared distance in the exponent.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if rbf_exponent not in ("squared", "absolute"):
        raise ValueError(f"unknown rbf_exponent {rbf_exponent!r}")
    return Dictionary(
        kind="gaussian_rbf",
        state_dim=centers.shape[1],
        centers=centers,
        sigma=float(sigma),
        rbf_exponent=rbf_exponent,
        ridge=ridge,
    )


def indicator_boxes(boxes: np.ndarray | Sequence, ridge: float | None = None) -> Dictionary:
    """Indicator dictionary over half-open axis-aligned boxes [lo, hi)."""
    boxes = np.asarray(boxes, dtype=float)
    if boxes.ndim == 2:  # 1D convenience: (K, 2) -> (K, 1, 2)
        boxes = boxes[:, None, :]
    if boxes.ndim != 3 or boxes.shape[2] != 2:
        raise ValueError("boxes must have shape (K, N, 2)")
    if (boxes[..., 1] <= boxes[..., 0]).any():
        raise ValueError("box bounds must satisfy lo < hi")
    return Dictionary(kind="indicator_boxes", state_dim=boxes.shape[1], boxes=boxes, ridge=ridge)


def coordinates(state_dim: int) -> Dictionary:
    """The coordinate functions psi_i(x) = x_i (K = state_dim)."""
    return Dictionary(kind="coordinates", state_dim=int(state_dim))


def _monomial_exponents(state_dim: int, degree: int) -> np.ndarray:
    exps = []
    for total in range(degree + 1):
        block = [
            e
            for e in itertools.product(range(total + 1), repeat=state_dim)
            if sum(e) == total
        ]
        exps.extend(sorted(block))
    return np.asarray(exps, dtype=int)


def monomials(state_dim: int, degree: int) -> Dictionary:
    """All monomials of total degree <= degree, graded lexicographic order."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    return Dictionary(kind="monomials", state_dim=int(state_dim), degree=int(degree))


def eval_dictionary(dictionary: Dictionary, x: np.ndarray) -> np.ndarray:
    """Evaluate all dictionary elements at one state or a batch of states.

    Parameters
    ----------
    dictionary : Dictionary
    x : ndarray, shape (N,) or (M, N)

    Returns
    -------
    ndarray, shape (K,) or (M, K)
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != dictionary.state_dim:
        raise ValueError(
            f"points have dimension {pts.shape[1]}, dictionary expects {dictionary.state_dim}"
        )
    kind = dictionary.kind
    if kind == "gaussian_rbf":
        diff = pts[:, None, :] - dictionary.centers[None, :, :]
        sq = np.einsum("mkn,mkn->mk", diff, diff)
        if dictionary.rbf_exponent == "squared":
            vals = np.exp(-sq / dictionary.sigma**2)
        else:
            vals = np.exp(-np.sqrt(sq) / dictionary.sigma**2)
    elif kind == "indicator_boxes":
        lo = dictionary.boxes[:, :, 0]
        hi = dictionary.boxes[:, :, 1]
        inside = (pts[:, None, :] >= lo[None]) & (pts[:, None, :] < hi[None])
        vals = inside.all(axis=2).astype(float)
    elif kind == "coordinates":
        vals = pts.copy()
    elif kind == "monomials":
        exps = _monomial_exponents(dictionary.state_dim, dictionary.degree)
        vals = np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)
    else:
        raise ValueError(f"unknown dictionary kind {kind!r}")
    return vals[0] if single else vals


# ---------------------------------------------------------------------------
# k-means center selection
# ---------------------------------------------------------------------------

def _sq_dists_to(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("mkn,mkn->mk", diff, diff)


def kmeans_centers(
    data: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    return_info: bool = False,
):
    """Lloyd's algorithm with k-means++ seeding; deterministic for a given seed.

    If a cluster empties during an update, its center is re-seeded at the point
    farthest from every current center and the event is recorded in the info
    dict.  Returns the (k, N) center array, or ``(centers, info)`` when
    ``return_info`` is set; ``info["wcss"]`` holds the within-cluster sum of
    squares after every Lloyd update.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    m = data.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(m)]
    closest = _sq_dists_to(data, centers[:1]).min(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = data[rng.integers(m)]
        else:
            centers[j] = data[rng.choice(m, p=closest / total)]
        closest = np.minimum(closest, _sq_dists_to(data, centers[j : j + 1])[:, 0])

    wcss_history: list[float] = []
    reseeded: list[int] = []
    labels = np.zeros(m, dtype=int)
    for it in range(max_iter):
        d2 = _sq_dists_to(data, centers)
        new_labels = d2.argmin(axis=1)
        for j in range(k):
            mask = new_labels == j
            if mask.any():
                centers[j] = data[mask].mean(axis=0)
            else:
                far = d2.min(axis=1).argmax()
                centers[j] = data[far]
                new_labels[far] = j
                reseeded.append(j)
        wcss_history.append(float(_sq_dists_to(data, centers).min(axis=1).sum()))
        if it > 0 and (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
    info = {"iterations": len(wcss_history), "wcss": wcss_history, "reseeded": reseeded}
    return (centers, info) if return_info else centers


# ---------------------------------------------------------------------------
# Gram structures
# ---------------------------------------------------------------------------

@dataclass
class GramPair:
    """The data moments (G, A) plus the inner-product weight Lambda.

    G and Lambda are K x K symmetric; Lambda is positive definite after its
    ridge.  ``M`` is the number of snapshot pairs behind the moments and
    ``ridge`` the regularization that was added to Lambda's diagonal.
    """

    G: np.ndarray
    A: np.ndarray
    Lambda: np.ndarray
    M: int
    ridge: float = 0.0

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        k = self.G.shape[0]
        for name, mat in (("G", self.G), ("A", self.A), ("Lambda", self.Lambda)):
            if mat.shape != (k, k):
                raise ValueError(f"{name} must be square of size {k}, got {mat.shape}")
            if not np.isfinite(mat).all():
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def size(self) -> int:
        return self.G.shape[0]


def _empirical_gram(dictionary: Dictionary, points: np.ndarray) -> np.ndarray:
    vals = eval_dictionary(dictionary, points)
    g = vals.T @ vals / points.shape[0]
    return 0.5 * (g + g.T)


def default_ridge(G: np.ndarray) -> float:
    """The default Lambda regularization, 1e-10 * trace(G) / K."""
    k = G.shape[0]
    return 1e-10 * float(np.trace(G)) / k


def gram_matrices(
    dictionary: Dictionary,
    data: SnapshotSet,
    ridge: float | None = None,
    g_ridge: float = 0.0,
) -> GramPair:
    """Assemble (G, A, Lambda) from snapshot pairs.

    Lambda defaults to the empirical Gram G plus ``ridge * I``; ``ridge=None``
    resolves to the dictionary's configured ridge, else to
    ``1e-10 * trace(G)/K``.  ``g_ridge`` optionally regularizes G itself (it is
    added after A is formed, so the unconstrained normal equations stay
    consistent with the recorded G).
    """
    if data.state_dim != dictionary.state_dim:
        raise ValueError("snapshot dimension does not match dictionary")
    px = eval_dictionary(dictionary, data.X)
    py = eval_dictionary(dictionary, data.Y)
    m = data.n_pairs
    g = px.T @ px / m
    g = 0.5 * (g + g.T)
    a = px.T @ py / m
    if ridge is None:
        ridge = dictionary.ridge if dictionary.ridge is not None else default_ridge(g)
    ridge = float(ridge)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    lam = g + ridge * np.eye(g.shape[0])
    if g_ridge:
        g = g + float(g_ridge) * np.eye(g.shape[0])
    return GramPair(G=g, A=a, Lambda=lam, M=m, ridge=ridge)


def lambda_matrix(
    dictionary: Dictionary,
    data: SnapshotSet,
    mode: str = "empirical",
    ridge: float = 0.0,
) -> np.ndarray:
    """Inner-product weight matrix for the dictionary.

    ``empirical`` returns the data Gram (identical, bit for bit, to the G of
    :func:`gram_matrices` when ridge is 0).  ``analytic_rbf`` evaluates the
    closed-form Gaussian product integral over R^N, normalized by the volume
    of the data's bounding box; it requires a squared-exponent Gaussian
    dictionary.  Raises if the result is not positive definite after the
    ridge, with a hint to increase it.
    """
    ridge = float(ridge)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if mode == "empirical":
        lam = _empirical_gram(dictionary, data.X)
        if ridge:
            lam = lam + ridge * np.eye(lam.shape[0])
    elif mode == "analytic_rbf":
        if dictionary.kind != "gaussian_rbf" or dictionary.rbf_exponent != "squared":
            raise ValueError("analytic_rbf requires a squared-exponent gaussian_rbf dictionary")
        c = dictionary.centers
        s2 = dictionary.sigma**2
        n = dictionary.state_dim
        d2 = _sq_dists_to(c, c)
        widths = data.X.max(axis=0) - data.X.min(axis=0)
        volume = float(np.prod(widths))
        if volume <= 0:
            raise ValueError("data bounding box has zero volume; cannot normalize")
        lam = np.exp(-d2 / (2.0 * s2)) * (math.pi * s2 / 2.0) ** (n / 2.0) / volume
        lam = 0.5 * (lam + lam.T)
        if ridge:
            lam = lam + ridge * np.eye(lam.shape[0])
    else:
        raise ValueError(f"unknown lambda mode {mode!r}")
    smallest = float(np.linalg.eigvalsh(lam)[0])
    if smallest <= 0:
        raise ValueError(
            f"Lambda is not positive definite (min eigenvalue {smallest:.3e}); increase ridge"
        )
    return lam


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def dictionary_to_payload(dictionary: Dictionary) -> dict:
    payload = {
        "kind": dictionary.kind,
        "state_dim": dictionary.state_dim,
        "sigma": dictionary.sigma,
        "rbf_exponent": dictionary.rbf_exponent,
        "centers": None if dictionary.centers is None else dictionary.centers.tolist(),
        "boxes": None if dictionary.boxes is None else dictionary.boxes.tolist(),
        "degree": dictionary.degree,
        "ridge": dictionary.ridge,
    }
    return payload


def dictionary_from_payload(payload: dict) -> Dictionary:
    return Dictionary(
        kind=payload["kind"],
        state_dim=int(payload["state_dim"]),
        centers=None if payload.get("centers") is None else np.asarray(payload["centers"], dtype=float),
        sigma=payload.get("sigma"),
        rbf_exponent=payload.get("rbf_exponent", "squared"),
        boxes=None if payload.get("boxes") is None else np.asarray(payload["boxes"], dtype=float),
        degree=payload.get("degree"),
        ridge=payload.get("ridge"),
    )


def dictionary_hash(dictionary: Dictionary) -> str:
    import hashlib

    blob = json.dumps(dictionary_to_payload(dictionary), sort_keys=True)
    return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()


def save_dictionary(dictionary: Dictionary, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(dictionary_to_payload(dictionary), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def load_dictionary(path: str | Path) -> Dictionary:
    return dictionary_from_payload(json.loads(Path(path).read_text()))
