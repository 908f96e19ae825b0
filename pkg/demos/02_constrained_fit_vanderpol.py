"""Fit the constrained operator on Van der Pol data and compare the cases.

The unconstrained least-squares operator routinely lands just outside the
unit disc, which ruins long-horizon predictions of statistics.  The
constrained fit solves the same least-squares problem over a structured set:

  case I    entrywise nonnegative K
  case II   row-stochastic P = Lambda K Lambda^-1  (Markov structure)
  case III  both at once

Cases II and III pin the spectral radius at exactly one by Gershgorin, no
matter how noisy the data.  This script fits all three cases plus EDMD on
one Van der Pol data set and prints radii, feasibility diagnostics, and the
nesting of the least-squares objectives.

Runs in about ten seconds on one core (three ADMM solves at K = 64).
"""

import numpy as np

from nsdmd.dictionary import gaussian_rbf, gram_matrices, kmeans_centers
from nsdmd.edmd import fit_edmd
from nsdmd.nsdmd import NsdmdConfig, check_feasibility, fit_nsdmd
from nsdmd.spectral import eig_sorted
from nsdmd.systems import builtin_system, sample_snapshots


def radius(model):
    return float(np.abs(eig_sorted(model).eigenvalues).max())


def main():
    print("=== 1. Data and dictionary ===")
    data = sample_snapshots(
        builtin_system("vanderpol"),
        n_init=100,
        horizon=10.0,
        dt=0.1,
        domain=[[-3, 3], [-3, 3]],
        seed=42,
    )
    centers = kmeans_centers(data.X, 64, seed=7)
    dictionary = gaussian_rbf(centers, sigma=0.25)
    gram = gram_matrices(dictionary, data, ridge=1e-1)
    print(f"{data.X.shape[0]} snapshot pairs, {dictionary.size} dictionary functions")

    print()
    print("=== 2. Four fits ===")
    models = {"edmd": fit_edmd(gram)}
    for case in ("I", "II", "III"):
        cfg = NsdmdConfig(case=case, max_iter=30_000)
        models[f"case {case}"] = fit_nsdmd(gram, cfg)
        stats = models[f"case {case}"].solver_stats
        print(f"case {case}: {stats['iterations']} iterations, "
              f"{stats['wall_time_s']:.1f} s, converged = {models[f'case {case}'].converged}")
    print("a capped case III run is still usable when its reported constraint")
    print("violations are inside the tolerance, which section 4 confirms")

    print()
    print("=== 3. Spectral radius ===")
    for name, model in models.items():
        r = radius(model)
        flag = "  <- drifts outside the unit disc" if r > 1 + 1e-9 else ""
        print(f"  {name:8s}  radius = {r:.12f}{flag}")
    print("cases II and III sit at 1 to machine precision because P is row")
    print("stochastic by construction and K is its exact similarity transform")

    print()
    print("=== 4. Feasibility diagnostics (eps = 1e-6) ===")
    for name, model in models.items():
        own = "III" if name == "edmd" else name.split()[-1]
        rep = check_feasibility(model, eps=1e-6, case=own)
        print(f"  {name:8s} vs case {own:3s}  min K = {rep.min_K_entry:+.2e}  "
              f"min P = {rep.min_P_entry:+.2e}  "
              f"max |row sum - 1| = {rep.max_rowsum_dev:.2e}  pass = {rep.passed}")
    print("EDMD violates the full case III set; each constrained fit passes its own case")

    print()
    print("=== 5. Objective nesting ===")
    for name in ("edmd", "case I", "case II", "case III"):
        print(f"  J({name:8s}) = {models[name].objective:.4e}")
    print("smaller feasible sets can only raise the least-squares residual,")
    print("so J(edmd) <= J(case I) <= J(case III) and J(edmd) <= J(case II) <= J(case III)")


if __name__ == "__main__":
    main()
