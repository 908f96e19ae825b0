"""Sample snapshot pairs from a built-in system and fit linear operator models.

Walks the most basic pipeline: simulate short bursts of the Duffing
oscillator, lift the states through a Gaussian radial-basis dictionary,
assemble the Gram matrices, and fit the unconstrained least-squares operator
(EDMD).  Also fits plain DMD on the raw states and checks the classical
identity that DMD equals transposed EDMD under the coordinate dictionary.

Runs in a few seconds; prints everything, plots nothing.
"""

import numpy as np

from nsdmd.dictionary import coordinates, gaussian_rbf, gram_matrices, kmeans_centers
from nsdmd.edmd import fit_dmd, fit_edmd
from nsdmd.spectral import eig_sorted
from nsdmd.systems import builtin_system, sample_snapshots


def main():
    print("=== 1. Snapshot data ===")
    system = builtin_system("duffing")
    data = sample_snapshots(
        system,
        n_init=500,
        horizon=2.5,
        dt=0.25,
        domain=[[-2, 2], [-2, 2]],
        seed=42,
    )
    print(f"system: {data.meta['system']}, dt = {data.dt}")
    print(f"snapshot pairs: {data.X.shape[0]}  (state dimension {data.X.shape[1]})")
    print(f"X range per axis: {np.round(data.X.min(axis=0), 2)} .. {np.round(data.X.max(axis=0), 2)}")

    print()
    print("=== 2. Dictionary and Gram matrices ===")
    centers = kmeans_centers(data.X, 64, seed=7)
    dictionary = gaussian_rbf(centers, sigma=0.5)
    gram = gram_matrices(dictionary, data, ridge=1e-8)
    print(f"dictionary: {dictionary.size} Gaussian bumps, width sigma = 0.5")
    print(f"Gram matrix G is {gram.G.shape}, condition number {np.linalg.cond(gram.G):.2e}")

    print()
    print("=== 3. EDMD fit ===")
    edmd = fit_edmd(gram)
    spectrum = eig_sorted(edmd)
    print(f"method = {edmd.method}, residual ||G K - A||_F = {edmd.objective:.3e}")
    print("leading eigenvalues of K (sorted by closeness to 1, then magnitude):")
    for lam, res in zip(spectrum.eigenvalues[:5], spectrum.residuals[:5]):
        print(f"  {lam.real:+.6f} {lam.imag:+.6f}i   |lambda| = {abs(lam):.6f}   eigres = {res:.1e}")
    print("the Duffing flow preserves nothing to force |lambda| <= 1 here,")
    print(f"so the raw spectral radius may exceed one: {np.abs(spectrum.eigenvalues).max():.6f}")

    print()
    print("=== 4. DMD and the transpose identity ===")
    # DMD works on states in columns; the snapshot set stores samples in rows.
    dmd = fit_dmd(data.X.T, data.Y.T)
    edmd_coord = fit_edmd(gram_matrices(coordinates(2), data, ridge=0.0))
    gap = np.abs(dmd.K.T - edmd_coord.K).max()
    print("DMD state matrix (advances x directly):")
    with np.printoptions(precision=4, suppress=True):
        print(dmd.K)
    print(f"max |DMD.K^T - EDMD_coordinate.K| = {gap:.2e}")
    print("the two agree because coordinate observables make EDMD literally DMD transposed")


if __name__ == "__main__":
    main()
