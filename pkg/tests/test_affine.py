from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from dfworkbench import affine as A
from dfworkbench.errors import GridError, NotYetResolved, OracleResolutionError, WindowError


def chi12(y):
    y = np.asarray(y, dtype=float)
    return np.where((y >= 1) & (y <= 2), 1.0, 0.0)


def smooth(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.log(np.abs(x)) ** 2) * (1 + 0.3 * np.sign(x))


@pytest.fixture(scope="module")
def grid():
    return A.QuadratureGrid()


@pytest.fixture(scope="module")
def bundle(grid):
    return A.assemble_Sh(grid)


# ---------------------------------------------------------------- the group

def test_group_axioms():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g, h, k = (A.AffElement(rng.choice([-1, 1]) * math.exp(rng.normal()), rng.normal()) for _ in range(3))
        l, r = (g * h) * k, g * (h * k)
        assert l.a == pytest.approx(r.a) and l.b == pytest.approx(r.b)
        e = g * g.inv()
        assert e.a == pytest.approx(1) and e.b == pytest.approx(0, abs=1e-12)
        assert np.allclose((g * h).matrix(), g.matrix() @ h.matrix())
    with pytest.raises(ValueError):
        A.AffElement(0.0, 1.0)


def test_modular_function():
    assert A.modular(A.AffElement(1, 3.5)) == 1
    assert A.modular(A.AffElement(2, 0)) == 0.5
    # right translation by g0 scales the integral by Delta(g0^-1) = |a0|
    assert A.right_translation_ratio(A.AffElement(2, 0)) == pytest.approx(2, rel=1e-9)
    assert A.verify_modular_convention(seed=3) < 1e-8


def test_left_haar_invariance():
    rng = np.random.default_rng(1)
    for _ in range(5):
        g0 = A.AffElement(rng.choice([-1, 1]) * math.exp(rng.uniform(-1, 1)), rng.uniform(-2, 2))
        assert A.left_invariance_defect(g0) < 1e-8


def test_diep_h_values():
    assert A.diep_h(2, 0) == 0
    assert A.diep_h(1, 0) == pytest.approx(2 / math.sqrt(2 * math.pi))
    assert A.diep_h(1, 60) == pytest.approx(0, abs=1e-300)


def test_involution():
    rng = np.random.default_rng(2)
    a = rng.choice([-1, 1], 50) * np.exp(rng.uniform(-2, 2, 50))
    b = rng.normal(size=50)
    hss = A.l1_involution(A.l1_involution(A.diep_h))
    assert np.allclose(hss(a, b), A.diep_h(a, b))
    expected = np.where(np.abs(a) >= 1, 2 / (np.abs(a) * math.sqrt(2 * math.pi)) * np.exp(-(b**2) / (2 * a**2)), 0)
    assert np.allclose(A.diep_h_star(a, b), expected)


def test_involution_fixed_point():
    # f(a,b) = |a|^{1/2} phi(ln|a|) exp(-b^2/|a|) with phi even is real and satisfies f* = f
    def f(a, b):
        a = np.asarray(a, dtype=float)
        return np.abs(a) ** 0.5 * np.exp(-np.log(np.abs(a)) ** 2) * np.exp(-np.asarray(b) ** 2 / np.abs(a))

    a = np.array([0.3, 2.0, -5.0, 1.0])
    b = np.array([0.4, -1.0, 2.0, 0.0])
    assert np.allclose(A.l1_involution(f)(a, b), f(a, b))


# ---------------------------------------------------------------- the grid and S_g

def test_grid_errors():
    for kw in ({"x_min": 0.0}, {"x_min": 2.0, "x_max": 1.0}, {"x_max": 100.0}, {"x_min": 1e-200}, {"ncell": 0}):
        with pytest.raises(GridError):
            A.QuadratureGrid(**kw)


def test_grid_nodes_and_refinement():
    g = A.QuadratureGrid.from_n(200)
    assert g.n_per_sign == 201 and g.size == 402
    assert g.refine().n_per_sign == 402
    assert g.weights.sum() == pytest.approx(2 * math.log(g.x_max / g.x_min))
    c = g.project(smooth)
    fine = g.refine()
    # refinement nests the spaces, so embedding is exact and isometric
    assert np.linalg.norm(g.embed(c, fine)) == pytest.approx(np.linalg.norm(c), rel=1e-12)


def test_apply_sg_identity_and_phase(grid):
    c = grid.project(smooth)
    assert np.allclose(A.apply_Sg(A.AffElement(1, 0), c, grid), c)
    out = A.apply_Sg(A.AffElement(1, 2.5), c, grid)
    assert np.allclose(out, np.exp(2.5j * grid.nodes) * c)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(c), rel=1e-14)


def test_apply_sg_dilation_moves_support():
    # cells of width ln2/8, so dilation by 2 is an exact shift of 8 cells
    g = A.QuadratureGrid(2.0**-10, 2.0**4, 112, 3)
    x = g.nodes
    c = g.ell2map * np.where((x > 1) & (x < 2), np.sin(np.pi * np.log2(np.abs(x))) ** 2, 0)
    out = A.apply_Sg(A.AffElement(2, 0), c, g)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(c), rel=1e-12)
    moved = np.abs(out) > 1e-14
    assert np.all((x[moved] > 0.5) & (x[moved] < 1))


def test_apply_sg_window_error(grid):
    with pytest.raises(WindowError):
        A.apply_Sg(A.AffElement(1e4, 0), grid.project(smooth), grid)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-1.0, 1.0), st.sampled_from([-1.0, 1.0]), st.floats(-3.0, 3.0),
    st.floats(-1.5, 1.5), st.floats(0.7, 1.5),
)
def test_property_sg_unitary(log_a, sign, b, centre, width):
    grid = A.QuadratureGrid()

    def f(x):
        return np.exp(-((np.log(np.abs(x)) - centre) / width) ** 2) * (1 + 0.5j * np.sign(x))

    c = grid.project(f)
    try:
        out, loss = A.apply_Sg(A.AffElement(sign * math.exp(log_a), b), c, grid, return_loss=True)
    except WindowError:
        loss = 1.0
    assume(loss < 1e-8)
    assert abs(np.linalg.norm(out) / np.linalg.norm(c) - 1) < 1e-3


# ---------------------------------------------------------------- S(h): closed form and oracles

def test_closed_form_point_values():
    assert A.sh_closed_form(chi12, 2.0, (1, 2)) == pytest.approx(math.exp(-2), rel=1e-12)
    assert A.sh_closed_form(chi12, 1.0, (1, 2)) == 0
    assert A.sh_closed_form(chi12, 4.0, (1, 2)) == pytest.approx(0.5 * math.exp(-8), rel=1e-12)


@pytest.mark.parametrize("x", [2.0, 4.0, 1.5, -3.0])
def test_closed_form_matches_definition(x):
    direct = A.sh_oracle_point(chi12, x, breakpoints=(1, 2))
    assert direct.real == pytest.approx(A.sh_closed_form(chi12, x, (1, 2)), rel=1e-9, abs=1e-15)
    assert abs(direct.imag) < 1e-12


def test_b_integral_reproduces_gaussian():
    a = np.array([0.2, 0.5, -0.9, 1.0])
    for x in (0.5, 2.0, 5.0):
        H = A.oracle_b_integral(A.diep_h, a, np.full(4, x))
        assert np.allclose(H, 2 * a**2 * math.exp(-x * x / 2), atol=1e-13)


def test_oracle_resolution_error():
    with pytest.raises(OracleResolutionError):
        A.oracle_Sh(A.QuadratureGrid(ncell=4), A.Quad2D(B=5.0))


def test_oracle_zero_function():
    O = A.oracle_Sh(A.QuadratureGrid(ncell=6), f=lambda a, b: np.zeros(np.broadcast(a, b).shape))
    assert np.count_nonzero(O) == 0


def test_oracle_agreement(grid, bundle):
    assert A.oracle_error(grid, bundle=bundle) <= 1e-4


def test_star_representation(grid, bundle):
    Ostar = A.oracle_Sh(grid, f=A.diep_h_star, support="outer")
    rel = np.linalg.norm(Ostar - bundle.S_h.T) / np.linalg.norm(bundle.S_h)
    assert rel <= 1e-3


def test_galerkin_action_matches_closed_form(grid, bundle):
    y = bundle.S_h @ grid.project(smooth)
    for x in (0.5, 1.0, 2.0, -1.5, 3.0):
        ref = A.sh_closed_form(smooth, x, (0.0,))
        assert grid.evaluate(y, x) == pytest.approx(ref, rel=1e-3)


@pytest.mark.parametrize("t, u", [(-1.0, 0.5), (0.3, 0.3), (1.2, -2.0), (-3.0, -4.0)])
def test_composed_kernels_match_numerical_composition(t, u):
    # (S*S)(t,u) = int K(v,t) K(v,u) dv and (SS*)(t,u) = int K(t,v) K(u,v) dv in log coordinates;
    # the middle variable runs over both signs of the line, hence the factor 2
    lo = max(t, u)
    sss = 2 * integrate.quad(lambda v: A.kernel_S(v, t) * A.kernel_S(v, u), lo, 5, limit=200, epsabs=1e-15)[0]
    assert A.kernel_SstarS(t, u) == pytest.approx(sss, rel=1e-9)
    hi = min(t, u)
    sst = 2 * integrate.quad(lambda v: A.kernel_S(t, v) * A.kernel_S(u, v), -60, hi, limit=200, epsabs=1e-15)[0]
    assert A.kernel_SSstar(t, u) == pytest.approx(sst, rel=1e-9)


def test_crosscheck_and_resolution_gate():
    b = A.assemble_Sh(A.QuadratureGrid.from_n(100))
    cc = A.require_resolved(b)
    assert max(cc.values()) < 1e-2
    with pytest.raises(NotYetResolved):
        A.require_resolved(A.assemble_Sh(A.QuadratureGrid.from_n(30)))


# ---------------------------------------------------------------- refinement study

def test_identity_control_study():
    rep = A.diep_refinement_study(A.QuadratureGrid.from_n(60), 3, scale=0.0, quad=None)
    assert rep.verdict == "invertible"
    for lv in rep.levels:
        assert lv.lambda_min_TstarT == pytest.approx(1) and lv.lambda_min_TTstar == pytest.approx(1)


def test_small_multiple_is_invertible():
    rep = A.diep_refinement_study(A.QuadratureGrid.from_n(60), 3, scale=0.1, quad=None)
    assert rep.verdict == "invertible"
    assert min(lv.lambda_min_TstarT for lv in rep.levels) > 0.1


def test_dichotomy_on_coarse_grids():
    rep = A.diep_refinement_study(A.QuadratureGrid.from_n(60), 3, quad=None)
    assert rep.verdict == "left-invertible-not-invertible"
    assert all(r <= 0.5 for r in rep.checks["TstarT_ratios"])
    assert all(lv.lambda_min_TTstar >= A.TTSTAR_FLOOR for lv in rep.levels)


def test_study_needs_three_levels():
    with pytest.raises(ValueError):
        A.diep_refinement_study(A.QuadratureGrid.from_n(60), 2, quad=None)


def test_study_report_serialises():
    rep = A.diep_refinement_study(A.QuadratureGrid.from_n(60), 3, quad=None, seed=7)
    d = rep.to_dict()
    assert set(d["levels"][0]) >= {"n", "lambda_min_TstarT", "lambda_min_TTstar", "kernel_overlap", "oracle_frobenius_err"}
    assert rep.to_json() == A.diep_refinement_study(A.QuadratureGrid.from_n(60), 3, quad=None, seed=7).to_json()


# ---------------------------------------------------------------- left inverse

def test_left_inverse_identity_control_is_rank_zero():
    rep = A.left_inverse_verify(A.assemble_Sh(A.QuadratureGrid.from_n(60), 0.0))
    assert rep.left_inverse_defect == 0
    assert max(rep.singular_values) == 0


def test_left_inverse_precondition():
    b = A.assemble_Sh(A.QuadratureGrid.from_n(60))
    b.TTstar = b.TTstar - np.eye(b.TTstar.shape[0])  # break positivity
    with pytest.raises(NotYetResolved):
        A.left_inverse_verify(b)


@pytest.fixture(scope="module")
def finest_bundle():
    return A.assemble_Sh(A.QuadratureGrid.from_n(800))


def test_left_inverse_projector_consistency(finest_bundle):
    rep = A.left_inverse_verify(finest_bundle)
    assert rep.idempotency_defect <= 1e-6, rep.idempotency_defect


def test_left_inverse_at_finest_level(finest_bundle):
    ev, evec = np.linalg.eigh(finest_bundle.TstarT)
    rep = A.left_inverse_verify(finest_bundle, evec[:, 0])
    assert rep.checks["top_singular_value"]
    assert rep.checks["alignment"]
    assert rep.passed, rep.checks
