from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfworkbench import fingroup, qalg
from dfworkbench.errors import (
    ContextError,
    InvalidTrace,
    NotAQuasiInversePair,
    NotIdempotent,
    NotQuasiInvertible,
    PerturbationTooLarge,
    SeriesDiverges,
)

C1 = qalg.AlgContext.matrix(1)


def scalar(z) -> qalg.AlgElement:
    return qalg.AlgElement(C1, np.array([[z]]))


def z2_context():
    return qalg.AlgContext.group_algebra(fingroup.cyclic(2))


# ---------------------------------------------------------------- qprod

def test_qprod_diagonal_case_is_zero():
    ctx = qalg.AlgContext.matrix(2)
    a = qalg.AlgElement(ctx, np.diag([2.0, 0.0]))
    assert np.allclose(qalg.qprod(a, a).data, 0)


def test_qprod_with_zero_is_identity():
    a = scalar(3 - 1j)
    assert np.allclose(qalg.qprod(a, qalg.AlgElement.zero(C1)).data, a.data)


def test_context_mismatch_raises():
    with pytest.raises(ContextError):
        qalg.qprod(scalar(1), qalg.AlgElement.zero(qalg.AlgContext.matrix(2)))
    with pytest.raises(ContextError):
        qalg.AlgElement(qalg.AlgContext.matrix(2), np.zeros(3))


# ---------------------------------------------------------------- quasi-inverses

def test_qinv_exact_scalars():
    assert np.allclose(qalg.qinv_exact(scalar(0)).data, 0)
    b = qalg.qinv_exact(scalar(2))
    assert np.allclose(b.data, 2)
    assert abs(qalg.qprod(scalar(2), b).data[0, 0]) < 1e-15


def test_qinv_exact_z2_matches_fourier_oracle():
    # a = 2 delta_g has transform (2, -2); b_hat = 1 - 1/(1 - a_hat) = (2, 2/3)
    ctx = z2_context()
    a = qalg.AlgElement(ctx, np.array([0.0, 2.0]))
    b = qalg.qinv_exact(a)
    assert np.allclose(b.data, [4 / 3, 2 / 3], atol=1e-14)
    assert qalg.qprod(a, b).norm() < 1e-14
    assert qalg.qprod(b, a).norm() < 1e-14


def test_qinv_exact_singular_raises_with_sigma():
    with pytest.raises(NotQuasiInvertible) as exc:
        qalg.qinv_exact(scalar(1))
    assert exc.value.sigma_min == 0.0
    ctx = qalg.AlgContext.matrix(2)
    with pytest.raises(NotQuasiInvertible):
        qalg.qinv_exact(qalg.AlgElement(ctx, np.diag([1.0, 0.3])))


def test_qinv_neumann_examples():
    assert np.allclose(qalg.qinv_neumann(scalar(0.5)).data, -1, atol=1e-12)
    assert np.allclose(qalg.qinv_neumann(scalar(0)).data, 0)
    with pytest.raises(SeriesDiverges):
        qalg.qinv_neumann(scalar(1.0))


def test_qinv_neumann_agrees_with_exact_4x4():
    rng = np.random.default_rng(1)
    ctx = qalg.AlgContext.matrix(4)
    a = qalg.random_element(ctx, rng)
    a = a * (0.3 / a.norm())
    assert (qalg.qinv_neumann(a, tol=1e-13) - qalg.qinv_exact(a)).norm() < 1e-12


def test_perturb_left_qinv_scalar_oracle():
    b, cp = scalar(2), scalar(2.1)
    u = qalg.qprod(b, cp)
    assert np.isclose(u.data[0, 0], -0.1)
    a = qalg.perturb_left_qinv(b, cp)
    assert np.isclose(a.data[0, 0], 1 / 11, atol=1e-13)
    assert abs(qalg.qprod(a, u).data[0, 0]) < 1e-13


def test_perturb_left_qinv_exact_pair_gives_zero():
    b = qalg.qinv_exact(scalar(2))
    assert np.allclose(qalg.perturb_left_qinv(b, scalar(2)).data, 0, atol=1e-15)


def test_perturb_left_qinv_random_6x6():
    rng = np.random.default_rng(2)
    ctx = qalg.AlgContext.matrix(6)
    for _ in range(20):
        c = qalg.random_element(ctx, rng)
        c = c * (0.6 / c.norm())
        b = qalg.qinv_exact(c)
        E = qalg.random_element(ctx, rng)
        cp = c + E * (0.5 / (1 + b.norm()) / E.norm())
        a = qalg.perturb_left_qinv(b, cp)
        assert qalg.qprod(a, qalg.qprod(b, cp)).norm() <= 1e-8


def test_perturb_too_large():
    with pytest.raises(PerturbationTooLarge):
        qalg.perturb_left_qinv(scalar(2), scalar(5))


# ---------------------------------------------------------------- range projection

def test_range_projection_examples():
    ctx = qalg.AlgContext.matrix(2)
    p = qalg.AlgElement(ctx, np.diag([1.0, 0.0]))
    assert np.allclose(qalg.range_projection(p).data, p.data)
    q = qalg.AlgElement(ctx, np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert np.allclose(qalg.range_projection(q).data, [[1, 0], [0, 0]], atol=1e-14)
    assert np.allclose(qalg.range_projection(qalg.AlgElement.zero(ctx)).data, 0)


def test_range_projection_rejects_non_idempotent():
    ctx = qalg.AlgContext.matrix(2)
    with pytest.raises(NotIdempotent):
        qalg.range_projection(qalg.AlgElement(ctx, np.array([[1.0, 0.0], [0.0, 0.5]])))


def test_range_projection_in_group_algebra():
    # the averaging idempotent of S3 is already a projection
    G = fingroup.symmetric(3)
    ctx = qalg.AlgContext.group_algebra(G)
    p = qalg.AlgElement(ctx, np.full(6, 1 / 6))
    e = qalg.range_projection(p)
    assert np.allclose(e.data, p.data, atol=1e-14)


# ---------------------------------------------------------------- unitization and trace

def test_unitization_dictionary_example():
    rng = np.random.default_rng(3)
    ctx = qalg.AlgContext.matrix(3)
    a, b = qalg.random_element(ctx, rng), qalg.random_element(ctx, rng)
    one = qalg.UnitizedElement.one(ctx)
    lhs = one - qalg.UnitizedElement.embed(qalg.qprod(a, b))
    rhs = (one - qalg.UnitizedElement.embed(a)) * (one - qalg.UnitizedElement.embed(b))
    assert (lhs - rhs).norm() < 1e-14


def test_trace_validation():
    qalg.TraceFunctional.normalized(qalg.AlgContext.matrix(4)).validate()
    qalg.TraceFunctional.normalized(qalg.AlgContext.group_algebra(fingroup.symmetric(3))).validate()
    with pytest.raises(InvalidTrace):
        qalg.TraceFunctional(qalg.AlgContext.matrix(3), np.array([0.5, 0.3, 0.2])).validate()
    with pytest.raises(InvalidTrace):
        qalg.TraceFunctional(qalg.AlgContext.matrix(2), np.array([1.0, 0.0])).validate()


# ---------------------------------------------------------------- df_certify

def test_df_certify_vacuous():
    ctx = qalg.AlgContext.matrix(3)
    z = qalg.AlgElement.zero(ctx)
    rep = qalg.df_certify(z, z, qalg.TraceFunctional.normalized(ctx))
    assert rep.passed and rep.p_norm == 0


def test_df_certify_z2():
    ctx = z2_context()
    a = qalg.AlgElement(ctx, np.array([0.0, 2.0]))
    rep = qalg.df_certify(a, qalg.qinv_exact(a), qalg.TraceFunctional.normalized(ctx))
    assert rep.passed and rep.p_norm < 1e-12


def test_df_certify_m4():
    rng = np.random.default_rng(4)
    ctx = qalg.AlgContext.matrix(4)
    tau = qalg.TraceFunctional.normalized(ctx)
    for _ in range(20):
        a, b = qalg.random_quasi_inverse_pair(ctx, rng)
        rep = qalg.df_certify(a, b, tau, seed=4)
        assert rep.passed, rep.to_json()


def test_df_certify_rejects_non_pair():
    ctx = qalg.AlgContext.matrix(2)
    a = qalg.AlgElement(ctx, np.eye(2) * 0.5)
    with pytest.raises(NotAQuasiInversePair):
        qalg.df_certify(a, a, qalg.TraceFunctional.normalized(ctx))


def test_shift_truncation_is_directly_finite():
    # every truncation of the unilateral shift is nilpotent, so 1 - V is invertible
    n = 6
    ctx = qalg.AlgContext.matrix(n)
    a = qalg.AlgElement(ctx, qalg.shift_truncation(n))
    b = qalg.qinv_exact(a)
    assert qalg.qprod(a, b).norm() < 1e-12
    assert qalg.qprod(b, a).norm() < 1e-12
    V = qalg.shift_truncation(n)
    assert np.allclose((V.T @ V)[: n - 1, : n - 1], np.eye(n - 1))


# ---------------------------------------------------------------- properties

dims = st.integers(min_value=1, max_value=5)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(dims, seeds)
def test_property_qprod_associative(n, seed):
    rng = np.random.default_rng(seed)
    ctx = qalg.AlgContext.matrix(n)
    a, b, c = (qalg.random_element(ctx, rng) for _ in range(3))
    d = qalg.qprod(qalg.qprod(a, b), c) - qalg.qprod(a, qalg.qprod(b, c))
    assert d.norm() <= 1e-12 * (1 + a.norm()) * (1 + b.norm()) * (1 + c.norm())


@settings(max_examples=60, deadline=None)
@given(dims, seeds)
def test_property_quasi_inverse_two_sided(n, seed):
    rng = np.random.default_rng(seed)
    ctx = qalg.AlgContext.matrix(n)
    u = qalg.random_invertible(ctx, rng)
    a = qalg.AlgElement.unit(ctx) - u
    b = qalg.qinv_exact(a)
    scale = 1 + a.norm() * b.norm()
    assert qalg.qprod(a, b).norm() <= 1e-11 * scale
    assert qalg.qprod(b, a).norm() <= 1e-11 * scale


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=8), seeds)
def test_property_range_projection(n, seed):
    rng = np.random.default_rng(seed)
    p = qalg.random_idempotent(n, rng)
    ctx = qalg.AlgContext.matrix(n)
    e = qalg.range_projection(qalg.AlgElement(ctx, p)).data
    assert np.allclose(e, e.conj().T, atol=1e-9)
    assert np.allclose(e @ e, e, atol=1e-9)
    assert np.allclose(e @ p, p, atol=1e-9)
    assert np.allclose(p @ e, e, atol=1e-9)
    assert np.isclose(np.trace(e).real, np.trace(p).real, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["Z2", "Z6", "D4", "S3"]), seeds)
def test_property_df_group_algebra(name, seed):
    rng = np.random.default_rng(seed)
    ctx = qalg.AlgContext.group_algebra(fingroup.build_group(name))
    a, b = qalg.random_quasi_inverse_pair(ctx, rng)
    rep = qalg.df_certify(a, b, qalg.TraceFunctional.normalized(ctx), check_trace=False)
    assert rep.passed
