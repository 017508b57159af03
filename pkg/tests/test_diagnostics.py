import numpy as np
import pytest

from intermap.diagnostics import (
    correlation_decay,
    distortion_check,
    expansion_check,
    fit_power_law,
    memory_loss_curve,
    return_time_tail,
    simulate,
)
from intermap.map_core import ParamPoint, map_eval
from intermap.mesh import GridFunction, build_mesh
from intermap.transfer import assemble_ulam, invariant_density

P = ParamPoint(0.5, 1.5)


def test_fit_power_law_exact_synthetic():
    xs = np.arange(1, 200, dtype=float)
    ys = 3.7 * xs ** -1.25
    fit = fit_power_law(xs, ys, (5, 150))
    assert fit.exponent == pytest.approx(-1.25, abs=1e-12)
    assert fit.amplitude == pytest.approx(3.7, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_power_law(xs, -ys, (5, 150))


def test_simulate_orbit_exact():
    rec = simulate(P, 0.3, 50)
    assert rec.points[0] == 0.3
    x = 0.3
    for k in range(50):
        x = map_eval(P, x)
        assert rec.points[k + 1] == x
    # episodes partition the below-threshold indices
    total = sum(l for _, l in rec.laminar_episodes)
    assert total == int(np.sum(rec.points < rec.threshold))


def test_simulate_csv(tmp_path):
    rec = simulate(P, 0.3, 10)
    path = tmp_path / "orbit.csv"
    rec.to_csv(str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,x_k"
    assert len(lines) == 12
    assert float(lines[1].split(",")[1]) == 0.3


def test_return_time_tail_deterministic_and_sane():
    r1 = return_time_tail(P, 100_000, n_max=500, rng_seed=9)
    r2 = return_time_tail(P, 100_000, n_max=500, rng_seed=9)
    assert np.array_equal(r1["tail"], r2["tail"])
    assert r1["tail"][1] == 1.0
    assert np.all(np.diff(r1["tail"][1:]) <= 0)
    # exponent near -1/(alpha*beta) = -4/3
    assert r1["fit"].exponent == pytest.approx(-4.0 / 3.0, abs=0.2)


def test_expansion_check_beta_one_exact():
    # beta = 1: on J_0 = (bhat_1, 1) the map is linear with slope 2
    rep = expansion_check(ParamPoint(0.5, 1.0), 30)
    assert rep["passed"]
    assert rep["min"] >= 1.5
    assert rep["per_n_min"][0] == pytest.approx(2.0, rel=1e-9)


def test_distortion_check_structure():
    rep = distortion_check(P, n_list=(10, 50), pairs_per_n=20,
                           sup_samples=5000, m_list=np.array([5, 20, 80]))
    assert set(rep["per_n_max"]) == {10, 50}
    assert all(v > 0 for v in rep["per_n_max"].values())
    assert rep["sup_fit"].exponent < 0  # derivative sup decays


def test_memory_loss_curve():
    p = ParamPoint(0.5, 1.0)
    mesh = build_mesh(1024, 3.0)
    U = assemble_ulam(p, mesh)
    h = invariant_density(p, mesh, operator=U, max_iter=6000).density
    flat = GridFunction.constant(mesh, 1.0, "cell")
    norms, fit = memory_loss_curve(U, flat, h, 200, window=(20, 200))
    assert norms[0] > norms[50] > norms[200] > 0
    assert fit.exponent == pytest.approx(-1.0, abs=0.3)
    with pytest.raises(ValueError):
        memory_loss_curve(U, flat, GridFunction.constant(mesh, 2.0, "cell"), 10)


def test_correlation_decay_zero_for_constant():
    # parameter point with a fast-converging density so h is a genuine
    # discrete fixed point and the constant observable decorrelates exactly
    p = ParamPoint(0.2, 1.2)
    mesh = build_mesh(512, 3.0)
    U = assemble_ulam(p, mesh)
    h = invariant_density(p, mesh, operator=U, max_iter=20000).density
    values, fit = correlation_decay(U, lambda x: np.ones_like(x),
                                    lambda x: x, h, 20)
    assert np.max(np.abs(values)) < 1e-6
    values2, _ = correlation_decay(U, lambda x: x, lambda x: x, h, 50)
    assert abs(values2[50]) < abs(values2[0])
