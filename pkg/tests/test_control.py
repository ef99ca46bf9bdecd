import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tonelli_gl.control import (
    TRACE_COLUMNS,
    AdmissibleSet,
    ControlBasis,
    ControlScenario,
    fd_gradient,
    pairing_slope,
    projected_gradient_descent,
    reduced_gradient,
    reduced_objective,
    stationarity_residual,
)
from tonelli_gl.errors import EnvelopeInvalid, PreconditionViolation
from tonelli_gl.green import RenormalizedEnergy, control_correction
from tonelli_gl.torus import VortexConfig


def _pair():
    return VortexConfig(np.array([[0.25, 0.25], [0.75, 0.75]]), np.array([1, -1]))


@pytest.fixture(scope="module")
def scen(table32):
    return ControlScenario(table32, _pair(), name="pair")


def test_basis_sizes():
    assert ControlBasis(2).size == 48
    assert ControlBasis(2, divergence_free=True).size == 24
    assert ControlBasis(0).size == 0
    with pytest.raises(PreconditionViolation):
        ControlBasis(-1)


def test_divergence_free_basis(rng):
    b = ControlBasis(2, divergence_free=True)
    u = b.field(rng.normal(size=b.size))
    assert np.max(np.abs(u.divergence(rng.uniform(0, 1, (50, 2))))) < 1e-12


def test_wrong_length_rejected():
    with pytest.raises(PreconditionViolation):
        ControlBasis(1).field(np.zeros(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16), st.floats(0.1, 10))
def test_projection_idempotent(c, M):
    A = AdmissibleSet(ControlBasis(1), M)
    p = A.project(np.array(c))
    assert A.contains(p)
    assert np.allclose(A.project(p), p)


def test_zero_vortices_give_zero_gradient(table32):
    empty = VortexConfig(np.zeros((0, 2)), np.zeros(0, dtype=int))
    sc = ControlScenario(table32, empty)
    b = ControlBasis(1)
    A = AdmissibleSet(b, 1.0)
    c = A.random_point(np.random.default_rng(0), 0.5)
    g = reduced_gradient(b, c, sc)
    assert np.array_equal(g.gradient, np.zeros(b.size))
    res = projected_gradient_descent(b, c, sc, A)
    assert res.converged and len(res.trace) <= 2
    assert np.array_equal(res.c, c)


def test_divergence_free_controls_do_not_change_objective(scen, rng):
    # K = 1 modes are axis-orthogonal or diagonal, so their lattice divergence is exactly zero too
    b = ControlBasis(1, divergence_free=True)
    c = AdmissibleSet(b, 0.5).random_point(rng, 0.5)
    assert reduced_objective(b, c, scen).value == pytest.approx(reduced_objective(b, np.zeros(b.size), scen).value, abs=1e-9)


def test_control_enters_through_weighted_correction(table32, rng):
    # W_v - W_0 = sum_i (3/2 d_i - 1/2 d_i^2) h_v(a_i) for a balanced configuration
    b = ControlBasis(2)
    v = b.field(rng.normal(size=b.size) * 0.05)
    cfg = VortexConfig(np.array([[0.2, 0.3], [0.7, 0.6], [0.4, 0.85]]), np.array([1, 1, -2]))
    h = control_correction(table32, v)(cfg.positions)
    d = cfg.degrees
    lin = RenormalizedEnergy(table32, v)(cfg) - RenormalizedEnergy(table32, None)(cfg)
    assert lin == pytest.approx(np.sum((1.5 * d - 0.5 * d**2) * h), abs=1e-12)


def test_pairing_slope_equals_correction(table32, rng):
    b = ControlBasis(1)
    v = b.field(rng.normal(size=b.size))
    cfg = _pair()
    h = control_correction(table32, v)(cfg.positions)
    assert pairing_slope(table32, v, cfg) == pytest.approx(np.sum(cfg.degrees * h), abs=1e-10)


def test_envelope_needs_nondegenerate_minimum(scen):
    b = ControlBasis(1)
    with pytest.raises(EnvelopeInvalid):
        reduced_gradient(b, np.zeros(b.size), scen, strict=True)
    assert reduced_gradient(b, np.zeros(b.size), scen).method == "fd"


def test_envelope_matches_finite_differences(table32, rng):
    # the position minimum is soft (lambda_min ~ 1e-3): small steps, tight relaxation
    sc = ControlScenario(table32, _pair(), relax_tol=1e-10)
    b = ControlBasis(1)
    c = AdmissibleSet(b, 1.0).random_point(rng, 0.3)
    g = reduced_gradient(b, c, sc, strict=True)
    assert g.method == "envelope" and g.min_hessian_eig > 0
    fd = fd_gradient(b, c, sc, step=1e-6, start=g.objective.config)
    assert np.linalg.norm(g.gradient - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_descent_never_leaves_admissible_set(scen):
    b = ControlBasis(1)
    A = AdmissibleSet(b, 0.4)
    res = projected_gradient_descent(b, np.zeros(b.size), scen, A, tol=1e-4, max_iter=60)
    assert A.contains(res.c)
    objs = [row[TRACE_COLUMNS.index("objective")] for row in res.trace]
    assert objs[-1] < objs[0]
    assert all(y <= x + 1e-12 for x, y in zip(objs, objs[1:]))
    assert stationarity_residual(A, res.c, reduced_gradient(b, res.c, scen, start=res.config).gradient) >= 0
