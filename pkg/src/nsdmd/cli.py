"""Command-line front end.

Subcommands: simulate, fit, spectrum, lyapunov, ulam, compare.  All read one
JSON config (see :mod:`nsdmd.config`) and write their outputs into ``--out-dir``
atomically, along with a fully resolved copy of the config so any run can be
reproduced from its output directory alone.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 spectral error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dictionary as dict_mod
from . import systems
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .edmd import fit_dmd, fit_edmd, load_model, save_model
from .lyapunov import identify_attractor, lyapunov_measure, save_lyapunov
from .nsdmd import NsdmdConfig, fit_nsdmd
from .set_oriented import (
    BoxPartition,
    compare_densities,
    load_ulam,
    save_ulam,
    ulam_from_sampling,
    ulam_from_trajectory,
)
from .spectral import (
    GridSpec,
    SpectralError,
    eig_sorted,
    eigenfunction_grid,
    save_eigenvalue_table,
    save_grid,
)

log = logging.getLogger("nsdmd")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_SPECTRAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsdmd",
        description="Data-driven transfer operator approximation with structure-preserving fits.",
    )
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override system.seed")
    parser.add_argument("--out-dir", default=".", help="directory for all outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="sample snapshot pairs and write them as CSV")
    p_fit = sub.add_parser("fit", help="fit an operator model from snapshots")
    p_fit.add_argument("--snapshots", default=None, help="snapshot CSV (default: <out-dir>/snapshots.csv)")
    p_spec = sub.add_parser("spectrum", help="eigenvalues and eigenfunction grids of a fitted model")
    p_spec.add_argument("--model", default=None, help="model JSON (default: <out-dir>/model.json)")
    p_spec.add_argument(
        "--which", action="append", default=None,
        help="spectral object to grid ('koopman:j', 'pf:j', 'density'); repeatable",
    )
    p_lyap = sub.add_parser("lyapunov", help="stability certificate from a fitted model")
    p_lyap.add_argument("--model", default=None)
    sub.add_parser("ulam", help="box-partition transition matrix for the configured system")
    p_cmp = sub.add_parser("compare", help="L1 distance between model density and Ulam density")
    p_cmp.add_argument("--model", default=None)
    p_cmp.add_argument("--ulam", default=None, help="Ulam CSV (default: <out-dir>/ulam.csv)")
    return parser


def _system_from_config(cfg: ExperimentConfig):
    return systems.builtin_system(cfg.system.name, cfg.system.variant)


def _snapshots_from_config(cfg: ExperimentConfig):
    s = cfg.system
    return systems.sample_snapshots(
        _system_from_config(cfg), s.n_init, s.horizon, s.dt, s.domain, s.seed,
        method=s.method, substeps=s.substeps,
    )


def _dictionary_from_config(cfg: ExperimentConfig, data) -> dict_mod.Dictionary:
    d = cfg.dictionary
    domain = np.asarray(cfg.system.domain, dtype=float)
    if d.kind == "gaussian_rbf":
        if d.center_policy == "kmeans":
            centers = dict_mod.kmeans_centers(data.X, d.size, seed=[cfg.system.seed, 7])
        else:
            n_axis = max(2, int(np.floor(d.size ** (1.0 / domain.shape[0]))))
            axes = [np.linspace(lo, hi, n_axis) for lo, hi in domain]
            mesh = np.meshgrid(*axes, indexing="ij")
            centers = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return dict_mod.gaussian_rbf(centers, d.sigma, d.rbf_exponent, ridge=d.ridge)
    if d.kind == "indicator_boxes":
        part = BoxPartition(domain=domain, divisions=(max(1, round(d.size ** (1 / domain.shape[0]))),) * domain.shape[0])
        widths = (domain[:, 1] - domain[:, 0]) / np.asarray(part.divisions)
        lo = part.centers() - widths / 2
        boxes = np.stack([lo, lo + widths], axis=2)
        return dict_mod.indicator_boxes(boxes, ridge=d.ridge)
    if d.kind == "coordinates":
        return dict_mod.coordinates(domain.shape[0])
    return dict_mod.monomials(domain.shape[0], d.degree)


def _grid_from_config(cfg: ExperimentConfig, domain=None) -> GridSpec:
    dom = domain if domain is not None else np.asarray(cfg.system.domain, dtype=float)
    n = cfg.output.grid_points
    if cfg.output.grid_domain is not None:
        dom = np.asarray(cfg.output.grid_domain, dtype=float)
    return GridSpec(axes=tuple((float(lo), float(hi), int(n)) for lo, hi in dom))


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, args, out: Path) -> int:
    snaps = _snapshots_from_config(cfg)
    path = systems.save_snapshots(snaps, out / "snapshots.csv")
    log.info("wrote %d pairs to %s", snaps.n_pairs, path)
    print(f"simulate: {snaps.n_pairs} pairs -> {path}")
    return EXIT_OK


def cmd_fit(cfg: ExperimentConfig, args, out: Path) -> int:
    snap_path = Path(args.snapshots) if args.snapshots else out / "snapshots.csv"
    if not snap_path.exists():
        raise ConfigError(f"snapshot file not found: {snap_path} (run 'simulate' first?)")
    data = systems.load_snapshots(snap_path)
    method = cfg.fit.method
    if method == "dmd":
        model = fit_dmd(data.X.T, data.Y.T, svd_tol=cfg.fit.svd_tol)
    else:
        dct = _dictionary_from_config(cfg, data)
        dict_mod.save_dictionary(dct, out / "dictionary.json")
        gram = dict_mod.gram_matrices(dct, data)
        if method == "edmd":
            model = fit_edmd(gram, svd_tol=cfg.fit.svd_tol, dictionary=dct)
        else:
            solver_cfg = NsdmdConfig(
                case=method.removeprefix("nsdmd_case"),
                max_iter=cfg.fit.max_iter,
                tol_primal=cfg.fit.tol_primal,
                tol_dual=cfg.fit.tol_dual,
                rho=cfg.fit.rho,
                feasibility_eps=cfg.fit.feasibility_eps,
            )
            model = fit_nsdmd(gram, solver_cfg, dictionary=dct)
    path = save_model(model, out / "model.json")
    print(f"fit: method={model.method} objective={model.objective:.6e} converged={model.converged} -> {path}")
    if not model.converged:
        log.warning("solver did not converge; residuals %s", model.solver_stats)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, args, out: Path) -> int:
    model_path = Path(args.model) if args.model else out / "model.json"
    if not model_path.exists():
        raise ConfigError(f"model file not found: {model_path}")
    model = load_model(model_path)
    spectrum = eig_sorted(model)
    table_path = save_eigenvalue_table(spectrum, out / "eigenvalues.csv")
    written = [str(table_path)]
    for which in args.which or []:
        grid = eigenfunction_grid(model, spectrum, which, _grid_from_config(cfg))
        fname = "grid_" + which.replace(":", "_") + ".csv"
        written.append(str(save_grid(grid, out / fname)))
    print(f"spectrum: top eigenvalue {spectrum.eigenvalues[0]:.8g}; wrote {', '.join(written)}")
    return EXIT_OK


def cmd_lyapunov(cfg: ExperimentConfig, args, out: Path) -> int:
    model_path = Path(args.model) if args.model else out / "model.json"
    if not model_path.exists():
        raise ConfigError(f"model file not found: {model_path}")
    model = load_model(model_path)
    spectrum = eig_sorted(model)
    attractor = identify_attractor(model, spectrum, cfg.lyapunov.threshold_fraction)
    result = lyapunov_measure(model, attractor)
    path = save_lyapunov(result, out / "lyapunov.json")
    print(
        f"lyapunov: |attractor|={attractor.size} sub_spectral_radius={result.sub_spectral_radius:.8g} "
        f"converged={result.converged} -> {path}"
    )
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_ulam(cfg: ExperimentConfig, args, out: Path) -> int:
    system = _system_from_config(cfg)
    domain = np.asarray(cfg.system.domain, dtype=float)
    part = BoxPartition(domain=domain, divisions=(cfg.ulam.divisions,) * domain.shape[0])
    if cfg.ulam.mode == "trajectory":
        trajs, _ = systems.sample_trajectories(
            system, cfg.system.n_init, cfg.system.horizon, cfg.system.dt,
            domain, cfg.system.seed, method=cfg.system.method, substeps=cfg.system.substeps,
        )
        ulam = ulam_from_trajectory(trajs, part)
    else:
        ulam = ulam_from_sampling(
            system, part, cfg.ulam.samples_per_box, cfg.system.seed,
            dt=None if cfg.system.name == "henon" else cfg.system.dt,
            substeps=cfg.system.substeps or 1,
        )
    path = save_ulam(ulam, out / "ulam.csv")
    print(f"ulam: {int(ulam.visited.sum())}/{part.n_boxes} boxes visited -> {path}")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args, out: Path) -> int:
    model_path = Path(args.model) if args.model else out / "model.json"
    ulam_path = Path(args.ulam) if args.ulam else out / "ulam.csv"
    for p in (model_path, ulam_path):
        if not p.exists():
            raise ConfigError(f"input file not found: {p}")
    model = load_model(model_path)
    ulam = load_ulam(ulam_path)
    spectrum = eig_sorted(model)
    grid = _grid_from_config(cfg, domain=ulam.partition.domain)
    density = eigenfunction_grid(model, spectrum, "density", grid)
    distance = compare_densities(ulam, density)
    _write_json(out / "compare.json", {"l1_distance": distance})
    print(f"compare: L1 distance {distance:.6f} -> {out / 'compare.json'}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "spectrum": cmd_spectrum,
    "lyapunov": cmd_lyapunov,
    "ulam": cmd_ulam,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("NSDMD_LOG_LEVEL", "WARNING").upper())
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.system.seed = int(args.seed)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.resolved.json")
        return _COMMANDS[args.command](cfg, args, out)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except SpectralError as err:
        print(f"spectral error: {err}", file=sys.stderr)
        return EXIT_SPECTRAL
    except (ValueError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
