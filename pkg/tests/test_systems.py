import math

import numpy as np
import pytest

from nsdmd.systems import (
    DiscreteMap,
    DivergenceError,
    SnapshotSet,
    VectorField,
    builtin_system,
    integrate,
    load_snapshots,
    sample_snapshots,
    sample_trajectories,
    save_snapshots,
)

SQRT3 = math.sqrt(3.0)


def decay_field():
    return VectorField(1, lambda x: -x, "decay")


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

def test_integrate_shape_and_initial_row():
    out = integrate(decay_field(), [2.0], dt=0.1, steps=7)
    assert out.shape == (8, 1)
    assert out[0, 0] == 2.0


def test_integrate_exponential_decay_rk4():
    out = integrate(decay_field(), [1.0], dt=0.01, steps=100)
    assert abs(out[-1, 0] - math.exp(-1.0)) < 1e-9


def test_integrate_exponential_decay_adaptive():
    out = integrate(decay_field(), [1.0], dt=0.01, steps=100, method="adaptive", tol=1e-10)
    assert out.shape == (101, 1)
    assert abs(out[-1, 0] - math.exp(-1.0)) < 1e-7


def test_rk4_fourth_order_convergence():
    # Halving dt should shrink the terminal error by about 2^4; require >= 14.
    exact = math.exp(-1.0)
    errs = []
    for steps in (10, 20, 40):
        out = integrate(decay_field(), [1.0], dt=1.0 / steps, steps=steps)
        errs.append(abs(out[-1, 0] - exact))
    assert errs[0] / errs[1] > 14.0
    assert errs[1] / errs[2] > 14.0


def test_integrate_validation():
    f = decay_field()
    with pytest.raises(ValueError):
        integrate(f, [1.0, 2.0], dt=0.1, steps=1)
    with pytest.raises(ValueError):
        integrate(f, [1.0], dt=0.0, steps=1)
    with pytest.raises(ValueError):
        integrate(f, [1.0], dt=0.1, steps=-1)
    with pytest.raises(ValueError):
        integrate(f, [1.0], dt=0.1, steps=1, method="euler")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_error_carries_step():
    blowup = VectorField(1, lambda x: x**2, "blowup")
    with pytest.raises(DivergenceError) as exc:
        integrate(blowup, [3.0], dt=1.0, steps=10)
    assert 1 <= exc.value.step <= 10


# ---------------------------------------------------------------------------
# benchmark systems
# ---------------------------------------------------------------------------

def test_two_well_equilibria():
    f = builtin_system("two_well")
    assert f.dimension == 2
    for point in ([SQRT3, 2 * SQRT3], [-SQRT3, -2 * SQRT3], [0.0, 0.0]):
        assert np.abs(f.eval(np.array(point))).max() < 1e-12


def test_duffing_equilibria():
    f = builtin_system("duffing")
    for point in ([1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]):
        assert np.abs(f.eval(np.array(point))).max() < 1e-14


def test_vanderpol_field_values():
    f = builtin_system("vanderpol")
    assert np.allclose(f.eval(np.array([0.0, 0.0])), [0.0, 0.0])
    # at (2, 1): xdot = 1, vdot = (1 - 4)*1 - 2 = -5
    assert np.allclose(f.eval(np.array([2.0, 1.0])), [1.0, -5.0])


def test_henon_step_values():
    h = builtin_system("henon")
    assert isinstance(h, DiscreteMap)
    assert np.array_equal(h.step(np.array([0.0, 0.0])), [1.0, 0.0])
    # (1, 0) -> (1 - 1.4, 0.3)
    out = h.step(np.array([1.0, 0.0]))
    assert np.allclose(out, [-0.4, 0.3], atol=1e-15)


def test_lorenz_variants():
    std = builtin_system("lorenz")
    lit = builtin_system("lorenz", variant="literal")
    x = np.array([1.0, 1.0, 1.0])
    assert np.allclose(std.eval(x), [0.0, 26.0, 1.0 - 8.0 / 3.0])
    assert np.allclose(lit.eval(x), [0.0, 8.0 / 3.0 - 2.0, 1.0 - 28.0])
    with pytest.raises(ValueError):
        builtin_system("lorenz", variant="wat")
    with pytest.raises(ValueError):
        builtin_system("rossler")


def test_lorenz_trajectory_bounded_and_matches_fine_reference():
    lorenz = builtin_system("lorenz")
    coarse = integrate(lorenz, [1.0, 1.0, 1.0], dt=0.02, steps=5000)
    assert np.linalg.norm(coarse, axis=1).max() < 100.0
    fine = integrate(lorenz, [1.0, 1.0, 1.0], dt=0.001, steps=100_000)
    assert np.linalg.norm(fine, axis=1).max() < 100.0
    # Chaos caps how long pointwise agreement can last; over the first two
    # time units the two step sizes still track each other closely.
    assert np.abs(coarse[:100] - fine[:2000:20]).max() < 5e-2


def test_systems_vectorized_batch_eval():
    f = builtin_system("two_well")
    pts = np.array([[SQRT3, 2 * SQRT3], [0.0, 0.0], [1.0, 2.0]])
    vals = f.eval(pts)
    assert vals.shape == (3, 2)
    assert np.abs(vals[:2]).max() < 1e-12
    assert np.allclose(vals[2], [1.0 - 1.0 + 2.0, 2.0 - 2.0])


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_sample_trajectories_initial_conditions_and_shapes():
    f = builtin_system("two_well")
    domain = [[-2.0, 2.0], [-2.0, 2.0]]
    trajs, meta = sample_trajectories(f, n_init=3, horizon=1.0, dt=0.1, domain=domain, seed=11)
    assert len(trajs) == 3
    expected_x0 = np.random.default_rng(11).uniform([-2.0, -2.0], [2.0, 2.0], size=(3, 2))
    for i, traj in enumerate(trajs):
        assert traj.shape == (11, 2)
        assert np.array_equal(traj[0], expected_x0[i])
    assert meta["warnings"] == []
    assert meta["substeps"] == 5  # auto: round(0.1 / 0.02)


def test_sample_snapshot_pair_counts_flow():
    f = builtin_system("two_well")
    snaps = sample_snapshots(f, n_init=3, horizon=10.0, dt=0.1, domain=[[-2, 2], [-2, 2]], seed=0)
    assert snaps.n_pairs == 300  # round(10/0.1) pairs per initial condition
    assert snaps.state_dim == 2
    assert snaps.dt == 0.1


def test_sample_snapshot_pair_counts_map():
    h = builtin_system("henon")
    snaps = sample_snapshots(h, n_init=1, horizon=5000, dt=0.0, domain=[[-0.1, 0.1], [-0.1, 0.1]], seed=3)
    assert snaps.n_pairs == 4999
    assert snaps.dt == 0.0
    # Every pair satisfies the map relation exactly (same vectorized kernel).
    assert np.array_equal(snaps.Y, h.step(snaps.X))


def test_sample_snapshots_decay_pairs():
    snaps = sample_snapshots(decay_field(), n_init=2, horizon=0.3, dt=0.1, domain=[[1.0, 2.0]], seed=1)
    assert snaps.n_pairs == 6
    assert np.abs(snaps.Y - snaps.X * math.exp(-0.1)).max() < 1e-8


def test_sample_determinism_and_seed_sensitivity():
    f = builtin_system("vanderpol")
    kw = dict(n_init=4, horizon=1.0, dt=0.1, domain=[[-3, 3], [-3, 3]])
    a = sample_snapshots(f, seed=7, **kw)
    b = sample_snapshots(f, seed=7, **kw)
    c = sample_snapshots(f, seed=8, **kw)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.X, c.X)


def test_sample_adaptive_close_to_rk4():
    f = builtin_system("two_well")
    kw = dict(n_init=2, horizon=1.0, dt=0.1, domain=[[-1, 1], [-1, 1]], seed=2)
    fixed, _ = sample_trajectories(f, **kw)
    adaptive, meta = sample_trajectories(f, method="adaptive", **kw)
    assert meta["method"] == "adaptive"
    for ta, tb in zip(fixed, adaptive):
        assert ta.shape == tb.shape
        assert np.abs(ta - tb).max() < 1e-5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_trajectories_truncated():
    blowup = VectorField(1, lambda x: x**3, "blowup")
    trajs, meta = sample_trajectories(
        blowup, n_init=4, horizon=5.0, dt=0.5, domain=[[2.0, 3.0]], seed=0, substeps=1
    )
    assert len(meta["warnings"]) == 4
    for traj in trajs:
        assert np.isfinite(traj).all()
        assert traj.shape[0] < 11


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_all_divergent_snapshots_raise():
    blowup = VectorField(1, lambda x: x**3, "blowup")
    # Initial conditions so large the very first step overflows: no
    # trajectory ever produces a finite pair.
    with pytest.raises(DivergenceError):
        sample_snapshots(blowup, n_init=2, horizon=5.0, dt=1.0, domain=[[1e30, 2e30]], seed=0, substeps=1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mixed_divergence_keeps_surviving_pairs():
    # Cubic growth blows up inside the horizon only for large-enough |x0|.
    blowup = VectorField(1, lambda x: x**3, "blowup")
    snaps = sample_snapshots(
        blowup, n_init=12, horizon=2.0, dt=0.5, domain=[[-2.0, 2.0]], seed=5, substeps=1
    )
    assert len(snaps.meta["warnings"]) > 0
    assert snaps.n_pairs < 12 * 4
    assert np.isfinite(snaps.X).all() and np.isfinite(snaps.Y).all()


def test_sampling_validation():
    f = decay_field()
    with pytest.raises(ValueError):
        sample_trajectories(f, n_init=0, horizon=1.0, dt=0.1, domain=[[0, 1]], seed=0)
    with pytest.raises(ValueError):
        sample_trajectories(f, n_init=1, horizon=1.0, dt=0.1, domain=[[1, 0]], seed=0)
    with pytest.raises(ValueError):
        sample_trajectories(f, n_init=1, horizon=1.0, dt=0.1, domain=[[0, 1], [0, 1]], seed=0)
    h = builtin_system("henon")
    with pytest.raises(ValueError):
        sample_trajectories(h, n_init=1, horizon=1, dt=0.0, domain=[[0, 1], [0, 1]], seed=0)


def test_snapshotset_validation():
    with pytest.raises(ValueError):
        SnapshotSet(X=np.zeros((2, 1)), Y=np.zeros((3, 1)), dt=0.1)
    with pytest.raises(ValueError):
        SnapshotSet(X=np.array([[np.nan]]), Y=np.array([[1.0]]), dt=0.1)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_snapshot_csv_roundtrip(tmp_path, rng):
    snaps = SnapshotSet(
        X=rng.normal(size=(5, 2)),
        Y=rng.normal(size=(5, 2)),
        dt=0.25,
        meta={"system": "unit", "seed": 9},
    )
    path = save_snapshots(snaps, tmp_path / "snap.csv")
    loaded = load_snapshots(path)
    assert np.array_equal(loaded.X, snaps.X)
    assert np.array_equal(loaded.Y, snaps.Y)
    assert loaded.dt == 0.25
    assert loaded.meta["system"] == "unit"
    # Re-saving the loaded data must reproduce the file byte for byte.
    again = save_snapshots(loaded, tmp_path / "snap2.csv")
    assert again.read_bytes() == path.read_bytes()


def test_snapshot_csv_single_pair_and_missing_sidecar(tmp_path):
    snaps = SnapshotSet(X=[[1.0]], Y=[[2.0]], dt=0.5)
    path = save_snapshots(snaps, tmp_path / "one.csv")
    (tmp_path / "one.meta.json").unlink()
    loaded = load_snapshots(path)
    assert loaded.X.shape == (1, 1)
    assert loaded.dt == 0.0  # sidecar gone, dt falls back
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        load_snapshots(bad)
