"""Certify attraction to the Van der Pol limit cycle with a Lyapunov measure.

A Lyapunov measure is the measure-theoretic cousin of a Lyapunov function:
a nonnegative vector u on the states away from the attractor satisfying
u (I - P1) = m with m > 0, where P1 is the transition matrix restricted to
the complement of the attractor.  Its existence certifies that mass leaks
from the complement into the attractor, i.e. almost-everywhere attraction at
the resolution of the basis.  The script shows the object on a tiny handmade
chain first, then runs the real pipeline on a case II Van der Pol fit.

Runs in a few seconds on one core.
"""

from types import SimpleNamespace

import numpy as np

from nsdmd.dictionary import gaussian_rbf, gram_matrices, kmeans_centers
from nsdmd.lyapunov import identify_attractor, lyapunov_measure
from nsdmd.nsdmd import NsdmdConfig, fit_nsdmd
from nsdmd.spectral import eig_sorted
from nsdmd.systems import builtin_system, sample_snapshots


def main():
    print("=== 1. Warm-up on a 3-state chain ===")
    # State 0 is absorbing; states 1 and 2 push a quarter of their mass
    # into it each step and shuffle the rest between themselves.
    P = np.array([
        [1.00, 0.00, 0.00],
        [0.25, 0.50, 0.25],
        [0.25, 0.25, 0.50],
    ])
    result = lyapunov_measure(SimpleNamespace(P=P), attractor=[0])
    print("P1 (complement block):")
    print(P[1:, 1:])
    print(f"spectral radius of P1 = {result.sub_spectral_radius:.3f}  (< 1, so solvable)")
    print(f"Lyapunov measure u = {result.measure}")
    print("u = (4, 4) says mass at either transient state takes 4 expected")
    print("visits (weighted by the unit source) before being absorbed")

    print()
    print("=== 2. Van der Pol fit ===")
    system = builtin_system("vanderpol")
    data = sample_snapshots(
        system, n_init=100, horizon=10.0, dt=0.1,
        domain=[[-3, 3], [-3, 3]], seed=42,
    )
    centers = kmeans_centers(data.X, 100, seed=7)
    dictionary = gaussian_rbf(centers, sigma=0.21)
    gram = gram_matrices(dictionary, data, ridge=1e-1)
    model = fit_nsdmd(gram, NsdmdConfig(case="II", max_iter=40_000), dictionary=dictionary)
    print(f"converged = {model.converged}")

    print()
    print("=== 3. Attractor states from the invariant density ===")
    spectrum = eig_sorted(model)
    attractor = identify_attractor(model, spectrum, threshold_fraction=0.1)
    print(f"{attractor.size} of {model.size} dictionary states carry the invariant mass")
    radii = np.linalg.norm(centers[attractor], axis=1)
    on_cycle = float(((radii > 1.0) & (radii < 2.9)).mean())
    print(f"radii of their centers: min {radii.min():.2f}, "
          f"median {np.median(radii):.2f}, max {radii.max():.2f}")
    print(f"{on_cycle:.0%} sit in the limit-cycle band of radii; the smooth basis")
    print("keeps a little invariant mass just inside the loop as well")

    print()
    print("=== 4. Certificate ===")
    result = lyapunov_measure(model, attractor)
    print(f"spectral radius of the restricted matrix: {result.sub_spectral_radius:.6f}")
    print(f"converged = {result.converged}")
    comp = result.complement_indices
    P1 = model.P[np.ix_(comp, comp)]
    resid = np.abs(result.measure - (1.0 + result.measure @ P1)).max()
    print(f"identity u = 1 + u P1 holds to {resid:.1e}")
    print(f"measure range: {result.measure.min():.2f} .. {result.measure.max():.2f}")
    print("every transient state has finite expected occupation, so the fitted")
    print("chain is certified to drain into the limit-cycle states")


if __name__ == "__main__":
    main()
