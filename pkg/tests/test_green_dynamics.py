import numpy as np
import pytest

from tonelli_gl.control_field import ControlField
from tonelli_gl.dynamics import gradient_flow, grad_W, hamiltonian_flow, relax
from tonelli_gl.errors import InvalidSpecError, PreconditionViolation, SingularConfiguration
from tonelli_gl.finsler import FinslerSpec
from tonelli_gl.green import (
    GreenTable,
    RenormalizedEnergy,
    apply_operator,
    control_correction,
    pairing_integral_nodes,
    phi_u_potential,
    solve_green_base,
)
from tonelli_gl.scenario import spectral_sum_green
from tonelli_gl.torus import TorusGrid, VortexConfig, wrap_delta

EULER_GAMMA = 0.5772156649015329


def _u():
    return ControlField.from_real_modes([((1, 0), [0.3, -0.2], [0.1, 0.25]), ((1, -1), [0.0, 0.2], [0.15, 0.0])])


def _pair(p, q):
    return VortexConfig(np.array([p, q], dtype=float), np.array([1, -1]))


# -- Green kernel ------------------------------------------------------------------


def test_kernel_mean_zero_and_equation(table64):
    g = table64.grid
    k = table64.kernel
    assert abs(np.sum(k)) * g.h**2 < 1e-12
    delta = np.zeros_like(k)
    delta[0, 0] = 1 / g.h**2
    assert np.max(np.abs(apply_operator(k, table64.b, g.h) - (delta - 1.0))) < 1e-8


def test_kernel_matches_cosine_sum(table64):
    for node in [(0, 0), (1, 0), (5, 9), (32, 32)]:
        assert table64.kernel[node] == pytest.approx(spectral_sum_green(table64.grid, 1.0, node), abs=1e-12)


def test_robin_against_exact_lattice_constant(table64):
    # on the square lattice G(0) = (ln h - gamma - 3/2 ln 2) / (2 pi) + S + o(1)
    g = table64.grid
    exact = table64.kernel[0, 0] - (np.log(g.h) - EULER_GAMMA - 1.5 * np.log(2)) / (2 * np.pi)
    assert table64.robin_at_node((0, 0)) == pytest.approx(exact, abs=1e-3)


def test_scaling_with_constant_metric():
    g = TorusGrid(1.0, 32)
    t1 = solve_green_base(g, FinslerSpec.quadratic())
    t4 = solve_green_base(g, FinslerSpec.quadratic(np.eye(2) / 4.0))  # b = 4 I
    assert np.allclose(t4.kernel, t1.kernel / 4, atol=1e-14)
    assert t4.robin_at_node((0, 0)) == pytest.approx(t1.robin_at_node((0, 0)) / 4 + np.log(2) / (8 * np.pi), abs=1e-10)


def test_varying_metric_symmetric_and_mean_zero():
    g = TorusGrid(1.0, 16)
    spec = FinslerSpec.quadratic(np.eye(2), metric_modes=[((1, 0), [[0.3, 0.1], [0.1, 0.2]])])
    t = solve_green_base(g, spec)
    nodes = [(0, 0), (3, 7), (10, 2), (15, 15)]
    for a in nodes:
        assert abs(np.sum(t.column(a))) * g.h**2 < 1e-12
        for b in nodes:
            assert t.column(a)[b] == pytest.approx(t.column(b)[a], abs=1e-10)


def test_randers_refused():
    with pytest.raises(InvalidSpecError):
        solve_green_base(TorusGrid(1.0, 16), FinslerSpec.randers(np.eye(2), (0.1, 0.0)))


def test_cache_roundtrip(tmp_path, table32):
    table32.save(tmp_path / "g.npz")
    t = GreenTable.load(tmp_path / "g.npz", expected_hash=table32.hash)
    assert np.array_equal(t.kernel, table32.kernel)
    assert GreenTable.load(tmp_path / "g.npz", expected_hash="0" * 64) is None


def test_h_identity(table64):
    u = _u()
    h = control_correction(table64, u).values
    assert np.max(np.abs(pairing_integral_nodes(table64, u) - h)) < 1e-12


def test_constant_control_has_no_effect(table32):
    u = ControlField.constant([0.3, -0.1])
    x = np.array([[0.1, 0.2], [0.6, 0.9]])
    assert np.allclose(control_correction(table32, u).values, 0.0)
    assert np.allclose(phi_u_potential(table32, u, x), phi_u_potential(table32, None, x), atol=1e-14)


def test_divergence_free_control_leaves_W_unchanged(table32):
    # for k = (1, 1) the centred lattice divergence of an amplitude orthogonal to k vanishes exactly
    u = ControlField.from_real_modes([((1, 1), [-1.0, 1.0], [0.4, -0.4])])
    cfg = _pair([0.2, 0.3], [0.6, 0.8])
    assert RenormalizedEnergy(table32, u)(cfg) == pytest.approx(RenormalizedEnergy(table32, None)(cfg), abs=1e-14)


# -- grad W ---------------------------------------------------------------------------


def test_grad_W_matches_fd(table64):
    u = _u()
    W = RenormalizedEnergy(table64, u)
    cfg = _pair([0.2, 0.3], [0.6, 0.75])
    g = grad_W(table64, u, cfg)
    step = 1e-4
    for i in range(2):
        for c in range(2):
            e = np.zeros((2, 2))
            e[i, c] = step
            fd = (W(cfg.moved(cfg.positions + e)) - W(cfg.moved(cfg.positions - e))) / (2 * step)
            assert g[i, c] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_grad_W_zero_at_antipodes(table64):
    assert np.max(np.abs(grad_W(table64, None, _pair([0.25, 0.25], [0.75, 0.75])))) < 1e-10


def test_grad_W_permutation_equivariant(table64):
    cfg = VortexConfig(np.array([[0.1, 0.2], [0.5, 0.5], [0.8, 0.3]]), np.array([1, -2, 1]))
    g = grad_W(table64, _u(), cfg)
    gp = grad_W(table64, _u(), cfg.permuted([2, 0, 1]))
    assert np.allclose(gp, g[[2, 0, 1]], atol=1e-14)


def test_coincident_vortices_rejected(table32):
    with pytest.raises(SingularConfiguration):
        grad_W(table32, None, _pair([0.3, 0.3], [0.3, 0.3]))


# -- dynamics -----------------------------------------------------------------------


def test_stationary_pair_stays_put(table32):
    cfg = _pair([0.25, 0.25], [0.75, 0.75])
    tr = gradient_flow(table32, None, cfg, 0.01, 1.0)
    assert np.max(np.abs(wrap_delta(tr.positions[-1] - cfg.positions, 1.0))) < 1e-8


def test_like_charges_attract_until_collision_stop(table32):
    cfg = VortexConfig(np.array([[0.4, 0.5], [0.55, 0.5]]), np.array([1, 1]), balanced=False)
    tr = gradient_flow(table32, None, cfg, 1e-3, 2.0)
    assert tr.collided
    e = np.array(tr.energies)
    e = e[np.isfinite(e)]
    assert np.all(np.diff(e) <= 1e-10)


def test_gradient_flow_precondition(table32):
    with pytest.raises(PreconditionViolation):
        gradient_flow(table32, None, _pair([0.45, 0.5], [0.55, 0.5]), 1.0, 1.0)


def test_hamiltonian_needs_divergence_free(table32):
    with pytest.raises(PreconditionViolation):
        hamiltonian_flow(table32, _u(), _pair([0.3, 0.5], [0.6, 0.5]), 1e-3, 0.01)


def test_hamiltonian_dipole_invariants(table32):
    cfg = _pair([0.4, 0.5], [0.6, 0.5])
    tr = hamiltonian_flow(table32, None, cfg, 2e-3, 0.2)
    pos = np.array(tr.positions)
    com = wrap_delta(pos[:, 0] + wrap_delta(pos[:, 1] - pos[:, 0], 1.0) / 2 - 0.5, 1.0)
    assert np.max(np.abs(com)) < 1e-12
    assert tr.max_h_drift < 1e-6
    back = hamiltonian_flow(table32, None, tr.final, 2e-3, 0.2, reverse=True)
    assert np.max(np.abs(wrap_delta(back.positions[-1] - cfg.positions, 1.0))) < 1e-6


def test_trajectory_csv(tmp_path, table32):
    tr = hamiltonian_flow(table32, None, _pair([0.3, 0.5], [0.7, 0.5]), 1e-2, 0.05)
    tr.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,a1x,a1y,a2x,a2y,W_u,H_drift"
    assert len(lines) == len(tr.times) + 1


def test_relax_reaches_critical_point(table32):
    r = relax(RenormalizedEnergy(table32, None), _pair([0.3, 0.4], [0.6, 0.55]))
    assert r.converged and r.grad_norm <= 1e-6
    d = wrap_delta(r.config.positions[0] - r.config.positions[1], 1.0)
    assert np.allclose(np.abs(d), 0.5, atol=1e-5)


def test_small_control_moves_relaxed_pair_continuously(table32):
    v = ControlField.from_real_modes([((1, 1), [0.3, 0.0], [0.0, 0.2])])
    W0 = RenormalizedEnergy(table32, None)
    start = _pair([0.25, 0.25], [0.75, 0.75])
    devs = []
    for s in (0.01, 0.02):
        r = relax(RenormalizedEnergy(table32, v * s), start, dt=1e-2)
        devs.append(np.linalg.norm(wrap_delta(r.config.positions - start.positions, 1.0)))
    assert W0(start) == pytest.approx(RenormalizedEnergy(table32, v * 0.0)(start))
    assert devs[1] <= 10 * max(devs[0], 1e-12) * 2
