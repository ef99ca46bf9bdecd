import warnings

import numpy as np
import pytest

from tonelli_gl.control_field import ControlField
from tonelli_gl.energy import (
    EnergyParams,
    el_residual,
    energy,
    energy_conjugate_path,
    energy_gradient,
    gamma_continuity_gap,
    minimize,
)
from tonelli_gl.errors import ConfigRejected, InvalidSpecError
from tonelli_gl.finsler import FinslerSpec
from tonelli_gl.torus import (
    FieldState,
    TorusGrid,
    VortexConfig,
    coulomb_project,
    extract_vortices,
    gauge_transform,
    link_divergence,
    load_state,
    mirror_indices_for,
    pinning_mirrors,
    reflect_conjugate,
    save_state,
    seed_vortices,
    supercurrent,
    symmetrize,
    vorticity,
    winding_numbers,
    wrap_delta,
)


def _random_state(grid, rng):
    n = grid.n
    psi = rng.uniform(0.3, 1.2, (n, n)) * np.exp(1j * rng.uniform(0, 2 * np.pi, (n, n)))
    return FieldState(psi, rng.normal(size=(n, n)) * 0.4, rng.normal(size=(n, n)) * 0.4, grid)


def _params(eps=0.2, lam=1.0, u=None, a=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return EnergyParams(eps, lam, FinslerSpec.quadratic(a) if a is not None else FinslerSpec.quadratic(), u)


def _pair(grid, offset=(0.5, 0.0)):
    a = np.array([0.25 + grid.h / 2, 0.5 + grid.h / 2])
    return VortexConfig(np.array([a, (a + offset) % 1.0]), np.array([1, -1]))


# -- torus ------------------------------------------------------------------------


def test_vacuum_has_zero_energy(grid32):
    assert energy(FieldState.vacuum(grid32), _params()).total == 0.0


def test_gauge_invariance(grid32, rng):
    s = _random_state(grid32, rng)
    chi = rng.normal(size=(32, 32))
    t = gauge_transform(s, chi)
    u = ControlField.from_real_modes([((1, 1), [0.2, 0.1], [0.0, 0.3])])
    p = _params(u=u, a=[[1.5, 0.2], [0.2, 0.8]])
    assert energy(t, p).total == pytest.approx(energy(s, p).total, rel=1e-12)
    for a, b in zip(supercurrent(s), supercurrent(t)):
        assert np.allclose(a, b, atol=1e-12)
    assert np.array_equal(winding_numbers(s), winding_numbers(t))


def test_seed_extract_roundtrip():
    g = TorusGrid(1.0, 64)
    # a single plaquette winds at most once, so only unit degrees roundtrip
    cfg = VortexConfig(np.array([[0.2, 0.3], [0.7, 0.4], [0.5, 0.8], [0.1, 0.75]]), np.array([1, 1, -1, -1]))
    s = seed_vortices(g, cfg, 0.05)
    found = extract_vortices(s)
    assert sorted(found.degrees.tolist()) == [-1, -1, 1, 1]
    assert int(np.nansum(vorticity(s))) == 0
    for p, d in zip(cfg.positions, cfg.degrees):
        k = np.argmin(np.linalg.norm(wrap_delta(found.positions - p, 1.0), axis=1))
        assert found.degrees[k] == d
        assert np.linalg.norm(wrap_delta(found.positions[k] - p, 1.0)) <= g.h


def test_seed_rejects_close_or_unbalanced():
    g = TorusGrid(1.0, 32)
    with pytest.raises(ConfigRejected):
        seed_vortices(g, VortexConfig(np.array([[0.2, 0.2], [0.25, 0.2]]), np.array([1, -1])), 0.05)
    with pytest.raises(ConfigRejected):
        seed_vortices(g, VortexConfig(np.array([[0.2, 0.2]]), np.array([1]), balanced=False), 0.05)


def test_coulomb_projection_divergence_free(grid32, rng):
    s = coulomb_project(_random_state(grid32, rng))
    assert np.max(np.abs(link_divergence(s))) < 1e-10


def test_state_roundtrip(tmp_path, grid32, rng):
    s = _random_state(grid32, rng)
    save_state(tmp_path / "s.txt", s)
    t = load_state(tmp_path / "s.txt")
    assert np.array_equal(t.psi, s.psi) and np.array_equal(t.ax, s.ax) and np.array_equal(t.ay, s.ay)


def test_reflection_is_involution(grid32, rng):
    s = _random_state(grid32, rng)
    for axis in (0, 1):
        t = reflect_conjugate(reflect_conjugate(s, axis, 7), axis, 7)
        assert np.allclose(t.psi, s.psi) and np.allclose(t.ax, s.ax) and np.allclose(t.ay, s.ay)


def test_reflection_preserves_energy(grid32, rng):
    s = _random_state(grid32, rng)
    p = _params()
    assert energy(reflect_conjugate(s, 1, 5), p).total == pytest.approx(energy(s, p).total, rel=1e-12)


def test_pinned_seed_is_symmetric():
    g = TorusGrid(1.0, 64)
    cfg = _pair(g)
    s = seed_vortices(g, cfg, 0.08, flat_connection=True)
    t = symmetrize(s, pinning_mirrors(s, *mirror_indices_for(cfg, g)))
    assert np.max(np.abs(t.psi - s.psi)) < 1e-10


# -- energy ------------------------------------------------------------------------


def test_gradient_matches_finite_differences(rng):
    g = TorusGrid(1.0, 16)
    s = _random_state(g, rng)
    u = ControlField.from_real_modes([((1, 0), [0.3, 0.1], [0.2, -0.2])])
    p = _params(0.3, 0.7, u, [[1.3, 0.2], [0.2, 0.9]])
    gp, gx, gy = energy_gradient(s, p)
    d = _random_state(g, rng)
    lin = np.sum(np.real(np.conj(gp) * d.psi)) + np.sum(gx * d.ax) + np.sum(gy * d.ay)
    f = lambda t: energy(FieldState(s.psi + t * d.psi, s.ax + t * d.ax, s.ay + t * d.ay, g), p).total
    fd = (f(1e-6) - f(-1e-6)) / 2e-6
    assert abs(fd - lin) <= 1e-5 * abs(fd)


def test_two_path_identity(rng):
    g = TorusGrid(1.0, 16)
    u = ControlField.from_real_modes([((0, 1), [0.4, 0.0], [0.1, 0.2])])
    p = _params(0.3, 1.0, u, [[2.0, 0.3], [0.3, 1.0]])
    for _ in range(5):
        s = _random_state(g, rng)
        br = energy(s, p)
        assert energy_conjugate_path(s, p) == pytest.approx(br.kinetic + br.coupling, rel=1e-12)


def test_energy_affine_in_control(grid32, rng):
    s = _random_state(grid32, rng)
    u1 = ControlField.from_real_modes([((1, 0), [0.3, 0.1], [0.2, -0.2])])
    u2 = ControlField.constant([0.1, -0.4])
    gamma_continuity_gap(s, _params(), u1, u2)


def test_randers_energy_rejected():
    with pytest.raises(InvalidSpecError):
        EnergyParams(0.1, 1.0, FinslerSpec.randers(np.eye(2), (0.1, 0.0)))


def test_vacuum_is_fixed_point(grid32):
    r = minimize(FieldState.vacuum(grid32), _params())
    assert r.converged and r.energy <= 1e-10


def test_pinned_pair_minimization():
    g = TorusGrid(1.0, 64)
    cfg = _pair(g)
    p = _params(0.08)
    s = seed_vortices(g, cfg, 0.08, flat_connection=True)
    r = minimize(s, p, grad_tol=1e-8, mirrors=pinning_mirrors(s, *mirror_indices_for(cfg, g)))
    assert r.converged
    assert el_residual(r.state, p) <= 1e-6
    assert r.energy < energy(s, p).total
    found = extract_vortices(r.state)
    assert sorted(found.degrees.tolist()) == [-1, 1]
    energies = [row["energy"] for row in r.trace]
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(energies, energies[1:]))
