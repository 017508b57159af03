import numpy as np
import pytest

from intermap.map_core import ParamBox, ParamPoint, map_eval
from intermap.mesh import GridFunction, build_mesh
from intermap.transfer import (
    UlamOperator,
    WeightedOperatorContext,
    apply_pointwise,
    assemble_ulam,
    invariant_density,
    push_density,
    weighted_apply,
)

P = ParamPoint(0.5, 1.5)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(1024, 3.0)


@pytest.fixture(scope="module")
def U(mesh):
    return assemble_ulam(P, mesh)


def test_row_stochastic(U):
    rs = np.asarray(U.rows.sum(axis=1)).ravel()
    assert np.max(np.abs(rs - 1.0)) < 1e-12
    assert U.rows.min() >= 0.0
    # preimage structure keeps the matrix very sparse
    assert U.rows.nnz < 4 * U.mesh.cell_count


def test_push_preserves_mass(U, mesh):
    d = GridFunction(mesh, 1.0 + mesh.midpoints, "cell")
    m0 = d.integrate()
    out = push_density(U, d)
    assert out.integrate() == pytest.approx(m0, rel=1e-13)


def test_ulam_entries_against_direct_measure(mesh, U):
    """Row i, column j holds m(I_i ∩ T^{-1} I_j) / m(I_i); spot-check by
    dense sampling of a few cells."""
    rng = np.random.default_rng(0)
    rows = U.rows.tocoo()
    dense = U.rows.toarray()
    for i in (5, 200, 700, 1000):
        lo, hi = mesh.nodes[i], mesh.nodes[i + 1]
        xs = rng.uniform(lo, hi, 20000)
        img = mesh.cell_of(map_eval(P, xs))
        frac = np.bincount(img, minlength=mesh.cell_count) / len(xs)
        assert np.max(np.abs(frac - dense[i])) < 0.02


def test_pointwise_operator_normalization():
    # L maps the constant 1 to a density of mass 1: int L1 dm = 1
    xs = np.linspace(1e-6, 1.0, 20001)
    vals = apply_pointwise(P, lambda t: np.ones_like(t), xs)
    assert np.trapezoid(vals, xs) == pytest.approx(1.0, rel=1e-3)


def test_pointwise_vs_ulam(mesh, U):
    phi = lambda t: 1.0 + np.cos(3 * t)
    d = GridFunction(mesh, phi(mesh.midpoints), "cell")
    pushed = push_density(U, d)
    xs = np.array([0.12, 0.35, 0.6, 0.85])
    exact = apply_pointwise(P, phi, xs)
    assert pushed.evaluate(xs) == pytest.approx(exact, rel=0.05)


def test_invariant_density_fixed_point(mesh, U):
    res = invariant_density(P, mesh, operator=U, max_iter=20000, tol=1e-10)
    h = res.density
    assert h.integrate() == pytest.approx(1.0, rel=1e-12)
    out = push_density(U, h)
    assert np.max(np.abs(out.values - h.values) * mesh.widths) < 1e-6
    assert res.iterations > 0
    assert res.report["tolerance"] == 1e-10


def test_invariant_density_nonconvergence_reported(mesh, U):
    res = invariant_density(P, mesh, operator=U, max_iter=20, tol=1e-14)
    assert not res.converged
    assert res.final_increment > 1e-14


def test_save_load_roundtrip(tmp_path, mesh, U):
    path = tmp_path / "op.ulam"
    U.save(str(path))
    V = UlamOperator.load(str(path), mesh, P)
    assert (U.rows != V.rows).nnz == 0
    s = V.summary()
    assert s["size"] == mesh.cell_count
    assert s["alpha"] == P.alpha


def test_load_rejects_bad_magic(tmp_path, mesh):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTULAM" + b"\x00" * 64)
    with pytest.raises(ValueError):
        UlamOperator.load(str(path), mesh, P)


def test_weighted_operator_bound(mesh):
    box = ParamBox(0.2, 0.5, 1.5)
    ctx = WeightedOperatorContext(box=box, mesh=mesh)
    e = ctx.weight_exponent
    assert -1.0 < e < 0.0
    phi = GridFunction.constant(mesh, 1.0, "cell")
    cur = phi
    for _ in range(50):
        cur = weighted_apply(ctx, ParamPoint(0.3, 1.2), cur)
    # conjugated operator keeps bounded functions bounded
    assert np.max(np.abs(cur.values)) < 10.0


def test_weighted_context_rejects_outside_box(mesh):
    ctx = WeightedOperatorContext(box=ParamBox(0.2, 0.5, 1.5), mesh=mesh)
    with pytest.raises(ValueError):
        ctx.operator(ParamPoint(0.1, 1.2))
