import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tonelli_gl.control_field import ControlField
from tonelli_gl.errors import BoxTooSmall, InvalidSpecError
from tonelli_gl.finsler import FinslerSpec, busemann_hausdorff_density, eval_F, eval_F_dual
from tonelli_gl.tonelli import (
    ellipticity_constant,
    hessian_dual,
    legendre_forward,
    legendre_inverse,
    phi_u,
    phi_u_conj,
    phi_u_conj_bruteforce,
)

angles = st.floats(0, 2 * np.pi)
small = st.floats(-0.6, 0.6)


def _metric(t, s, r):
    c, d = np.cos(t), np.sin(t)
    R = np.array([[c, -d], [d, c]])
    return R @ np.diag([s, r]) @ R.T


@settings(max_examples=60, deadline=None)
@given(angles, st.floats(0.4, 3.0), st.floats(0.4, 3.0), small, small, angles)
def test_randers_dual_is_support_function(t, s, r, b1, b2, phi):
    a = _metric(t, s, r)
    beta = np.array([b1, b2])
    if beta @ np.linalg.solve(a, beta) >= 0.8:
        beta *= 0.5
    spec = FinslerSpec.randers(a, beta)
    xi = np.array([np.cos(phi), np.sin(phi)])
    ths = np.linspace(0, 2 * np.pi, 20001)
    ys = np.stack([np.cos(ths), np.sin(ths)], axis=-1)
    sup = np.max(ys @ xi / eval_F(spec, np.zeros(2), ys))
    assert eval_F_dual(spec, np.zeros(2), xi) == pytest.approx(sup, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(angles, st.floats(0.4, 3.0), st.floats(0.4, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_quadratic_dual_closed_form(t, s, r, x1, x2):
    a = _metric(t, s, r)
    spec = FinslerSpec.quadratic(a)
    xi = np.array([x1, x2])
    assert eval_F_dual(spec, np.zeros(2), xi) == pytest.approx(np.sqrt(xi @ np.linalg.solve(a, xi)), abs=1e-12)


def test_busemann_hausdorff_of_quadratic_is_sqrt_det():
    a = np.array([[4.0, 1.0], [1.0, 1.0]])
    d = busemann_hausdorff_density(FinslerSpec.quadratic(a), np.zeros((1, 2)))
    assert d[0] == pytest.approx(np.sqrt(np.linalg.det(a)), rel=1e-6)


def test_bh_density_euclidean_is_one():
    assert busemann_hausdorff_density(FinslerSpec.quadratic(), np.zeros((3, 2))) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("variant", ["quadratic", "randers"])
def test_conjugate_translation_rule_against_bruteforce(variant, rng):
    a = _metric(0.3, 1.5, 0.7)
    spec = FinslerSpec.quadratic(a) if variant == "quadratic" else FinslerSpec.randers(a, (0.2, -0.3))
    u = ControlField.from_real_modes([((1, 0), [0.3, -0.1], [0.2, 0.4])])
    for _ in range(4):
        x = rng.uniform(0, 1, 2)
        xi = rng.normal(size=2)
        assert phi_u_conj(spec, u, x, xi) == pytest.approx(phi_u_conj_bruteforce(spec, u, x, xi), abs=1e-4)


def test_conjugate_of_constant_translation_adds_pairing():
    spec = FinslerSpec.randers(np.eye(2), (0.1, 0.2))
    xi = np.array([0.4, -0.7])
    u = np.array([0.3, 0.5])
    assert phi_u_conj(spec, u, np.zeros(2), xi) - phi_u_conj(spec, None, np.zeros(2), xi) == pytest.approx(xi @ u)


def test_bruteforce_box_too_small():
    spec = FinslerSpec.quadratic(np.eye(2) * 0.01)
    with pytest.raises(BoxTooSmall):
        phi_u_conj_bruteforce(spec, None, np.zeros(2), np.array([1.0, 0.0]), search_box=2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), small, small)
def test_legendre_roundtrip_randers(y1, y2, b1, b2):
    spec = FinslerSpec.randers(_metric(0.7, 2.0, 0.8), np.array([b1, b2]) * 0.5)
    u = np.array([0.2, -0.1])
    y = np.array([y1, y2])
    if np.linalg.norm(y - u) < 1e-3:
        return
    xi = legendre_forward(spec, u, np.zeros(2), y)
    assert np.allclose(legendre_inverse(spec, u, np.zeros(2), xi), y, atol=1e-8)
    fy = phi_u(spec, u, np.zeros(2), y) + phi_u_conj(spec, u, np.zeros(2), xi) - xi @ y
    assert abs(fy) < 1e-8


def test_hessian_quadratic_is_inverse_metric():
    a = _metric(0.2, 2.5, 0.5)
    h = hessian_dual(FinslerSpec.quadratic(a), np.zeros(2), np.array([0.3, 1.0]))
    assert np.allclose(h, np.linalg.inv(a), atol=1e-14)


def test_ellipticity_independent_of_control(rng):
    spec = FinslerSpec.randers(_metric(1.0, 1.2, 0.9), (0.2, 0.1))
    pts = rng.uniform(0, 1, (10, 2))
    xis = rng.normal(size=(10, 2))
    us = [ControlField.from_real_modes([((0, 1), rng.normal(size=2), rng.normal(size=2))]) for _ in range(3)]
    c = ellipticity_constant(spec, pts, xis, controls=us)
    assert c > 0


def test_randers_hessian_undefined_at_zero():
    with pytest.raises(InvalidSpecError):
        hessian_dual(FinslerSpec.randers(np.eye(2), (0.1, 0.0)), np.zeros(2), np.zeros(2))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(variant="randers", metric=np.eye(2), drift=(1.2, 0.0)),
        dict(variant="quadratic", metric=[[1.0, 0.5], [0.0, 1.0]]),
        dict(variant="quadratic", metric=[[1.0, 0.0], [0.0, -1.0]]),
        dict(variant="elliptic"),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(InvalidSpecError):
        FinslerSpec(**kwargs)


def test_randers_smallness_message_names_violation():
    with pytest.raises(InvalidSpecError, match="Randers smallness"):
        FinslerSpec.randers(np.eye(2), (1.2, 0.0))


# -- control fields --------------------------------------------------------------


def test_control_field_is_real_and_samples_match(grid32, rng):
    u = ControlField.from_real_modes([((1, 2), rng.normal(size=2), rng.normal(size=2)), ((0, 0), [0.1, 0.2], [0, 0])])
    s = u.sample(grid32)
    v = ControlField.from_samples(s)
    x = rng.uniform(0, 1, (20, 2))
    assert np.allclose(u(x), v(x), atol=1e-12)
    assert np.isrealobj(u(x))


def test_conjugate_symmetry_enforced():
    with pytest.raises(InvalidSpecError):
        ControlField([(1, 0)], [[1.0 + 1j, 0.0]])


def test_rotated_gradient_is_divergence_free(rng):
    k = np.array([2, -1])
    amp = np.array([-k[1], k[0]], dtype=float)
    u = ControlField.from_real_modes([(tuple(k), amp, 0.5 * amp)])
    assert u.max_divergence() == 0.0
    assert np.max(np.abs(u.divergence(rng.uniform(0, 1, (10, 2))))) < 1e-12


def test_c1_bound_dominates_samples(grid32, rng):
    u = ControlField.from_real_modes([((1, 1), rng.normal(size=2), rng.normal(size=2)), ((2, 0), [0.3, 0], [0, 0.1])])
    x = grid32.nodes().reshape(-1, 2)
    val = np.max(np.linalg.norm(u(x), axis=-1)) + np.max(np.linalg.norm(u.jacobian(x), axis=(-2, -1), ord=2))
    assert val <= u.c1_bound() + 1e-12


def test_control_algebra():
    u = ControlField.from_real_modes([((1, 0), [1.0, 0.0], [0.0, 0.0])])
    v = ControlField.constant([0.5, 0.0])
    x = np.array([[0.25, 0.1]])
    assert np.allclose((u + v * 2)(x), u(x) + 2 * v(x))
    assert np.allclose((u - u)(x), 0.0)
