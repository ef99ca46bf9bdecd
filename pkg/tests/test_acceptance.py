"""The twelve acceptance criteria, each driven through its named preset.

Every test records one line "criterion N: PASS|FAIL ..." which the
terminal summary prints under "acceptance criteria".
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from tonelli_gl import presets, scenario


def _run(name, tmp_path):
    code, summary, _ = scenario.execute(presets.get(name), tmp_path / name)
    assert code == 0, summary
    return summary


def _record(n, title, checks):
    """checks: (label, measured, bound text, ok)."""
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{label}={val:.3g} ({bound})" for label, val, bound, _ in checks)
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [c[0] for c in checks if not c[3]]
    assert ok, f"{title}: out of bounds: {', '.join(failed)}"


def _le(label, val, bound):
    return (label, float(val), f"<= {bound:g}", bool(val <= bound))


def _positive(label, val):
    return (label, float(val), "> 0", bool(val > 0))


def _ge(label, val, bound):
    return (label, float(val), f">= {bound:g}", bool(val >= bound))


def test_criterion_01_conjugate_rule(tmp_path):
    s = _run("c01-conjugate", tmp_path)["conjugate"]
    assert s["samples"] == 200
    _record(1, "conjugate translation rule", [_le("max_err", s["max_abs_err"], 1e-4), _le("seconds", s["seconds"], 60)])


def test_criterion_02_legendre(tmp_path):
    s = _run("c02-legendre", tmp_path)["legendre"]
    q, r = s["quadratic"], s["randers"]
    _record(
        2,
        "Legendre duality",
        [
            _le("roundtrip_quadratic", q["max_roundtrip"], 1e-10),
            _le("roundtrip_randers", r["max_roundtrip"], 1e-6),
            _le("fenchel_young", max(q["max_fenchel_young"], r["max_fenchel_young"]), 1e-8),
        ],
    )


def test_criterion_03_ellipticity(tmp_path):
    s = _run("c03-ellipticity", tmp_path)["ellipticity"]
    q, r = s["quadratic"], s["randers"]
    _record(
        3,
        "ellipticity and control invariance",
        [
            _le("closed_form_err", q["max_closed_form_err"], 1e-10),
            _positive("min_eig_quadratic", q["min_eigenvalue"]),
            _positive("min_eig_randers", r["min_eigenvalue"]),
            _le("control_deviation", max(q["control_deviation"], r["control_deviation"]), 1e-8),
        ],
    )


def test_criterion_04_decomposition(tmp_path):
    s = _run("c04-decomposition", tmp_path)
    assert s["samples"] == 50
    _record(4, "two-path energy evaluation", [_le("max_rel_diff", s["max_rel_diff"], 1e-12)])


def test_criterion_05_stationarity(tmp_path):
    s = _run("c05-stationarity", tmp_path)
    assert s["converged"]
    _record(
        5,
        "discrete stationarity",
        [
            _le("el_residual", s["el_residual"], 1e-6),
            _le("fd_rel_err", s["fd_rel_err"], 1e-5),
            _le("seconds", s["seconds"], 600),
        ],
    )


def test_criterion_06_continuity(tmp_path):
    s = _run("c06-continuity", tmp_path)
    lip = s["lipschitz"]
    _record(
        6,
        "affinity and continuity in u",
        [_le("collinearity", s["collinearity"], 1e-10), ("lipschitz", lip, "finite", bool(np.isfinite(lip)))],
    )


def test_criterion_07_green(tmp_path):
    s = _run("c07-green", tmp_path)
    _record(
        7,
        "Green kernel",
        [
            _le("mean_zero", s["mean_zero"], 1e-10),
            _le("symmetry", s["symmetry"], 1e-10),
            _le("oracle_err", s["oracle_err"], 1e-8),
            _le("robin_mesh_diff", s["robin_mesh_diff"], 1e-4),
        ],
    )


def test_criterion_08_h_identity(tmp_path):
    s = _run("c08-h-identity", tmp_path)
    _record(8, "h-identity", [_le("max_err", s["h_identity_err"], 1e-6)])


@pytest.fixture(scope="module")
def gamma_scan(tmp_path_factory):
    return _run("c09-gamma-scan", tmp_path_factory.mktemp("c09"))


def test_criterion_09_gamma_intercept(gamma_scan):
    s = gamma_scan
    _record(
        9,
        "gamma-intercept",
        [
            _le("rel_gap_smallest_eps", s["rel_gap"][-1], 0.1),
            _ge("r2_min", min(s["r2"]), 0.999),
            _le("seconds", s["seconds"], 7200),
        ],
    )


def test_gamma_scan_energy_scale(gamma_scan):
    # diagnostic: the minimized-energy differences track -4 pi^2 dW, and the core slope is 2 pi
    s = gamma_scan
    ratio = np.array(s["ratio_dE_dW"])
    target = -4 * np.pi**2
    assert abs(ratio[-1] - target) <= 0.1 * abs(target)
    assert np.all(np.diff(np.abs(ratio - target)) < 0)
    assert np.allclose(s["slopes"], 2 * np.pi, rtol=0.1)


@pytest.fixture(scope="module")
def first_order(tmp_path_factory):
    return _run("c10-first-order", tmp_path_factory.mktemp("c10"))


def test_criterion_10_first_order(first_order):
    s = first_order
    C = s["lipschitz_constant"]
    _record(
        10,
        "first-order correction",
        [_le("slope_rel_error", s["slope_rel_error"], 0.05), ("deviation_constant", C, "finite", bool(np.isfinite(C)))],
    )


def test_first_order_slope_matches_envelope(first_order):
    # diagnostic: the fitted slope equals W_v(a0) - W_0(a0) = sum_i (3/2 d_i - 1/2 d_i^2) h_v(a0_i)
    s = first_order
    assert s["slope_fit"] == pytest.approx(s["slope_envelope"], rel=0.05)
    assert s["flags"] == []


def test_criterion_11_hamiltonian(tmp_path):
    s = _run("c11-hamiltonian", tmp_path)
    assert not s["collided"] and not s["gradient_collided"]
    _record(
        11,
        "Hamiltonian conservation",
        [
            _le("rel_H_drift", s["max_h_drift"], 1e-6),
            _ge("observed_order", s["observed_order"], 3.5),
            _le("gradient_W_increase", s["gradient_max_increase"], 1e-10),
        ],
    )


def test_criterion_12_control(tmp_path):
    s = _run("c12-control", tmp_path)
    _record(
        12,
        "reduced optimal control",
        [
            ("converged", float(s["converged"]), "true", bool(s["converged"])),
            _le("residual", s["residual"], 1e-5),
            _le("objective_minus_baseline", s["objective"] - s["baseline"], 0.0),
            _le("gradient_fd_rel_err", s["gradient_fd_rel_err"], 0.05),
            _le("restart_max_dev", s["restart_max_dev"], 1e-3),
        ],
    )
