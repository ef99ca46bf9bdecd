"""Scenario orchestration: one runner per run kind, artifacts plus manifest.

Every runner returns a JSON-able summary dict; :func:`run` wraps it with
output-directory handling, CSV stamping and the manifest.
"""

import json
import os
import platform
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ScenarioConfig, load, parse_text
from .control import (
    AdmissibleSet,
    ControlBasis,
    ControlScenario,
    first_order_correction_check,
    fd_gradient,
    projected_gradient_descent,
    reduced_gradient,
    reduced_objective,
)
from .control_field import ControlField
from .dynamics import gradient_flow, hamiltonian_flow
from .energy import (
    EnergyParams,
    el_residual,
    energy,
    energy_conjugate_path,
    energy_gradient,
    minimize,
    write_trace_csv,
)
from .errors import ConfigParseError, PreconditionViolation, TonelliError
from .finsler import FinslerSpec
from .green import (
    GreenTable,
    RenormalizedEnergy,
    coefficient_field,
    control_correction,
    field_hash,
    pairing_integral_nodes,
    solve_green_base,
)
from .tonelli import (
    ellipticity_constant,
    legendre_forward,
    legendre_inverse,
    numeric_hessian_dual,
    phi_u,
    phi_u_conj,
    phi_u_conj_bruteforce,
)
from .torus import (
    FieldState,
    extract_vortices,
    mirror_indices_for,
    pinning_mirrors,
    save_state,
    seed_vortices,
    snap_to_plaquettes,
    vorticity,
    wrap_delta,
    write_grid_csv,
)

OUT_ENV = "TONELLI_GL_OUT"
CACHE_ENV = "TONELLI_GL_CACHE"


def output_root():
    return Path(os.environ.get(OUT_ENV, "runs"))


class RunContext:
    def __init__(self, cfg, outdir):
        self.cfg = cfg
        self.dir = Path(outdir)
        self.artifacts = []

    def path(self, name):
        self.artifacts.append(name)
        return self.dir / name

    def stamp(self, name):
        """Prepend the seed / config-hash comment line to a CSV artifact."""
        p = self.dir / name
        body = p.read_text()
        p.write_text(f"# seed={self.cfg.seed} config_sha256={self.cfg.sha256}\n" + body)

    def write_csv(self, name, header, rows):
        p = self.path(name)
        with open(p, "w") as fh:
            fh.write(f"# seed={self.cfg.seed} config_sha256={self.cfg.sha256}\n")
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return str(v)


# -- shared builders -----------------------------------------------------------


def build_control(cfg):
    if cfg.control_modes is not None:
        return cfg.control_modes
    if cfg.coefficients is not None:
        return ControlBasis(cfg.K, cfg.grid.side, cfg.divergence_free).field(cfg.coefficients)
    return None


def green_table(cfg, spec=None, grid=None):
    """Base Green table, cached on disk under the b-field hash."""
    spec = spec or cfg.spec
    grid = grid or cfg.grid
    b = coefficient_field(grid, spec)
    key = field_hash(grid, b)
    cache_dir = Path(os.environ.get(CACHE_ENV, output_root() / ".green-cache"))
    path = cache_dir / f"{key}.npz"
    if path.exists():
        t = GreenTable.load(path, expected_hash=key)
        if t is not None:
            return t
    t = solve_green_base(grid, spec)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        t.save(path)
    except OSError:
        pass
    return t


def _is_symmetric_pair(config):
    return len(config) == 2 and sorted(config.degrees.tolist()) == [-1, 1]


def minimize_config(cfg, config, eps, u=None, pin=None):
    """Seed and minimise one vortex configuration at one eps."""
    grid = cfg.grid
    p = EnergyParams(eps, cfg.lam, cfg.spec, u)
    if config is None or len(config) == 0:
        state = FieldState.vacuum(grid)
        mirrors = ()
    else:
        if pin is None:
            pin = u is None and cfg.spec.is_constant and _is_symmetric_pair(config)
        state = seed_vortices(grid, config, eps, flat_connection=pin)
        mirrors = pinning_mirrors(state, *mirror_indices_for(config, grid)) if pin else ()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(state, p, max_iters=cfg.max_iters, grad_tol=cfg.grad_tol, mirrors=mirrors)
    return res, p


def _random_spec(rng, variant):
    m = rng.normal(size=(2, 2)) * 0.4
    metric = m @ m.T + rng.uniform(0.5, 1.5) * np.eye(2)
    lo = np.linalg.eigvalsh(metric)[0]
    amp = rng.normal(size=(2, 2)) * 0.1 * lo
    modes = (((int(rng.integers(-2, 3)), 1), 0.5 * (amp + amp.T)),)
    if variant == "quadratic":
        return FinslerSpec.quadratic(metric, metric_modes=modes)
    d = rng.normal(size=2)
    d *= rng.uniform(0.05, 0.5) * np.sqrt(0.9 * lo) / np.linalg.norm(d)
    return FinslerSpec.randers(metric, d, metric_modes=modes)


def _random_control(rng, scale=0.5):
    return ControlField.from_real_modes(
        [
            ((0, 0), rng.normal(size=2) * scale, np.zeros(2)),
            ((1, int(rng.integers(-1, 2))), rng.normal(size=2) * scale, rng.normal(size=2) * scale),
        ]
    )


# -- run kinds -------------------------------------------------------------------


def run_conjugate_audit(cfg, ctx):
    rng = np.random.default_rng(cfg.seed)
    checks = cfg.option("checks", "conjugate legendre ellipticity").split()
    out = {}
    if "conjugate" in checks:
        n = cfg.option("samples", 200, int)
        rows, errs = [], []
        t0 = time.perf_counter()
        for k in range(n):
            variant = "quadratic" if k % 2 == 0 else "randers"
            spec = _random_spec(rng, variant)
            u = _random_control(rng)
            x = rng.uniform(0, 1, 2)
            xi = rng.normal(size=2) * 0.7
            closed = float(phi_u_conj(spec, u, x, xi))
            brute = float(phi_u_conj_bruteforce(spec, u, x, xi))
            errs.append(abs(closed - brute))
            rows.append((k, variant, x[0], x[1], xi[0], xi[1], closed, brute, errs[-1]))
        ctx.write_csv("conjugate_audit.csv", ("sample", "variant", "x", "y", "xi1", "xi2", "closed", "brute", "abs_err"), rows)
        out["conjugate"] = dict(samples=n, max_abs_err=max(errs), seconds=time.perf_counter() - t0)
    if "legendre" in checks:
        n = cfg.option("legendre_samples", 100, int)
        res = {}
        for variant in ("quadratic", "randers"):
            rt, fy = [], []
            for _ in range(n):
                spec = _random_spec(rng, variant)
                u = _random_control(rng)
                x = rng.uniform(0, 1, 2)
                y = rng.normal(size=2)
                xi = legendre_forward(spec, u, x, y)
                yb = legendre_inverse(spec, u, x, xi)
                rt.append(float(np.linalg.norm(yb - y) / max(1.0, np.linalg.norm(y))))
                fy.append(abs(float(phi_u(spec, u, x, y) + phi_u_conj(spec, u, x, xi) - xi @ y)))
            res[variant] = dict(max_roundtrip=max(rt), max_fenchel_young=max(fy))
        out["legendre"] = res
    if "ellipticity" in checks:
        n = cfg.option("ellipticity_samples", 50, int)
        res = {}
        for variant in ("quadratic", "randers"):
            mins, closed_err, inv_dev = [], [], 0.0
            for _ in range(n):
                spec = _random_spec(rng, variant)
                x = rng.uniform(0, 1, 2)
                xi = rng.normal(size=2)
                num = numeric_hessian_dual(spec, x, xi)
                lo = float(np.linalg.eigvalsh(num)[0])
                mins.append(lo)
                if variant == "quadratic":
                    closed_err.append(abs(lo - float(np.linalg.eigvalsh(np.linalg.inv(spec.metric_at(x)))[0])))
                us = [_random_control(rng) for _ in range(3)]
                ellipticity_constant(spec, x, xi, controls=us)
                for uu in us:
                    inv_dev = max(inv_dev, float(np.max(np.abs(numeric_hessian_dual(spec, x, xi, u=uu) - num))))
            res[variant] = dict(min_eigenvalue=min(mins), control_deviation=inv_dev)
            if closed_err:
                res[variant]["max_closed_form_err"] = max(closed_err)
        out["ellipticity"] = res
    return out


def _random_state(grid, rng):
    amp = rng.uniform(0.2, 1.2, (grid.n, grid.n))
    ph = rng.uniform(0, 2 * np.pi, (grid.n, grid.n))
    return FieldState(amp * np.exp(1j * ph), rng.normal(size=(grid.n, grid.n)) * 0.3, rng.normal(size=(grid.n, grid.n)) * 0.3, grid)


def _fd_directional(state, p, rng, step=1e-6):
    d = _random_state(state.grid, rng)
    g, gax, gay = energy_gradient(state, p)
    lin = float(np.sum(np.real(np.conj(g) * d.psi)) + np.sum(gax * d.ax) + np.sum(gay * d.ay))

    def at(t):
        return energy(FieldState(state.psi + t * d.psi, state.ax + t * d.ax, state.ay + t * d.ay, state.grid), p).total

    fd = (at(step) - at(-step)) / (2 * step)
    return abs(fd - lin) / max(abs(fd), 1e-300), lin, fd


def run_minimize(cfg, ctx):
    rng = np.random.default_rng(cfg.seed)
    audit = cfg.option("audit", "none")
    u = build_control(cfg)
    out = {}
    if audit == "decomposition":
        n = cfg.option("samples", 50, int)
        worst = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for k in range(n):
                p = EnergyParams(cfg.eps[0], cfg.lam, cfg.spec, u if u is not None else _random_control(rng, 0.3))
                s = _random_state(cfg.grid, rng)
                br = energy(s, p)
                e1 = br.kinetic + br.coupling  # the part the conjugate path assembles
                e2 = energy_conjugate_path(s, p)
                worst = max(worst, abs(e1 - e2) / max(abs(e1), 1e-300))
        return dict(samples=n, max_rel_diff=worst)
    if audit == "continuity":
        return _continuity_audit(cfg, ctx, rng, u)

    config = cfg.vortices[0] if cfg.vortices else None
    t0 = time.perf_counter()
    res, p = minimize_config(cfg, config, cfg.eps[0], u)
    out["seconds"] = time.perf_counter() - t0
    write_trace_csv(ctx.path("trace.csv"), res.trace)
    ctx.stamp("trace.csv")
    save_state(ctx.path("state.txt"), res.state)
    with np.errstate(invalid="ignore"):
        write_grid_csv(ctx.path("vorticity.csv"), np.nan_to_num(vorticity(res.state)), cfg.grid, "vorticity")
    ctx.stamp("vorticity.csv")
    br = energy(res.state, p)
    found = extract_vortices(res.state)
    out.update(
        energy=br.total,
        breakdown=br.as_dict(),
        converged=res.converged,
        iterations=len(res.trace) - 1,
        grad_norm=res.grad_norm,
        el_residual=el_residual(res.state, p),
        vortices=dict(positions=np.asarray(found.positions).tolist(), degrees=np.asarray(found.degrees).tolist()),
    )
    if cfg.option("fd_check", False, bool):
        # at the minimiser both sides vanish; probe the (non-stationary) seed instead
        probe = seed_vortices(cfg.grid, config, cfg.eps[0]) if config is not None and len(config) else _random_state(cfg.grid, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out["fd_rel_err"] = _fd_directional(probe, p, rng)[0]
    return out


def _continuity_audit(cfg, ctx, rng, u):
    """Collinearity of E_{u + t v} in t, and minimised energy against u."""
    p0 = EnergyParams(cfg.eps[0], cfg.lam, cfg.spec, u)
    base = u if u is not None else ControlField.zero(cfg.grid.side)
    v = _random_control(rng, 0.2)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(cfg.option("samples", 5, int)):
            s = _random_state(cfg.grid, rng)
            e = [energy(s, p0.with_control(base + v * t)).total for t in (0.0, 1.0, 2.0)]
            worst = max(worst, abs(e[0] - 2 * e[1] + e[2]) / max(1.0, max(abs(x) for x in e)))
    scales = cfg.option("scales", [0.0, 0.05, 0.1, 0.2], list)
    config = cfg.vortices[0] if cfg.vortices else None
    rows, energies = [], []
    for s in scales:
        uu = base + v * s if s else (u if u is not None else None)
        res, _ = minimize_config(cfg, config, cfg.eps[0], uu, pin=False)
        energies.append(res.energy)
        rows.append((s, res.energy, res.grad_norm))
    ctx.write_csv("continuity.csv", ("scale", "min_energy", "grad_norm"), rows)
    c1 = v.c1_bound()
    lips = [abs(energies[i + 1] - energies[i]) / ((scales[i + 1] - scales[i]) * c1) for i in range(len(scales) - 1)]
    return dict(collinearity=worst, lipschitz=max(lips), min_energies=energies, scales=scales)


def _fit_log(eps, E):
    x = np.abs(np.log(eps))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, E, rcond=None)
    resid = E - A @ coef
    ss = float(np.sum((E - E.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def run_gamma_scan(cfg, ctx):
    eps = list(cfg.eps)
    if eps != sorted(eps, reverse=True):
        raise PreconditionViolation("gamma-scan eps list must be sorted descending", module="scenario")
    if len(cfg.vortices) < 2:
        raise PreconditionViolation("gamma-scan needs two vortex configurations", module="scenario")
    u = build_control(cfg)
    table = green_table(cfg)
    Wfun = RenormalizedEnergy(table, u)
    configs = [snap_to_plaquettes(c, cfg.grid) for c in cfg.vortices[:2]]
    W = [Wfun(c) for c in configs]
    E = np.zeros((2, len(eps)))
    rows = []
    t0 = time.perf_counter()
    for ci, c in enumerate(configs):
        for ei, e in enumerate(eps):
            res, _ = minimize_config(cfg, c, e, u)
            E[ci, ei] = res.energy
            rows.append((ci + 1, e, res.energy, res.grad_norm, int(res.converged)))
    ctx.write_csv("gamma_scan.csv", ("config", "eps", "energy", "grad_norm", "converged"), rows)
    fits = [_fit_log(np.array(eps), E[i]) for i in range(2)]
    dE = E[0] - E[1]
    dW = W[0] - W[1]
    gaps = np.abs(dE - dW) / abs(dW)
    return dict(
        seconds=time.perf_counter() - t0,
        eps=eps,
        energies=E.tolist(),
        W=W,
        dW=dW,
        dE=dE.tolist(),
        rel_gap=gaps.tolist(),
        ratio_dE_dW=(dE / dW).tolist(),
        slopes=[f[0] for f in fits],
        intercepts=[f[1] for f in fits],
        r2=[f[2] for f in fits],
        intercept_difference=fits[0][1] - fits[1][1],
    )


def spectral_sum_green(grid, b, node):
    """G(x_node, 0) by an explicit cosine sum over lattice modes (no FFT)."""
    n = grid.n
    k = np.arange(n)
    s = 4 / grid.h**2 * np.sin(np.pi * k / n) ** 2
    sym = -b * (s[:, None] + s[None, :])
    sym[0, 0] = np.inf
    phase = 2 * np.pi * (k[:, None] * node[0] + k[None, :] * node[1]) / n
    return float(np.sum(np.cos(phase) / sym) / (n * n * grid.h**2))


def run_green(cfg, ctx):
    t0 = time.perf_counter()
    table = green_table(cfg)
    g = cfg.grid
    col = table.column((0, 0))
    write_grid_csv(ctx.path("green_column.csv"), col, g, "G")
    ctx.stamp("green_column.csv")
    out = dict(seconds=time.perf_counter() - t0, constant=table.constant)
    out["mean_zero"] = float(abs(np.sum(col)) * g.h**2)
    rng = np.random.default_rng(cfg.seed)
    nodes = [tuple(rng.integers(0, g.n, 2)) for _ in range(cfg.option("symmetry_samples", 6, int))]
    sym = 0.0
    for a in nodes:
        for bnode in nodes:
            sym = max(sym, abs(table.column(a)[bnode] - table.column(bnode)[a]))
    out["symmetry"] = sym
    robin = np.array([table.robin_at_node(nd) for nd in nodes[:2]])
    out["robin"] = robin.tolist()
    out["robin_error_estimate"] = table.robin_error
    if table.constant and np.allclose(table.b[0, 0], np.eye(2)):
        probes = [(0, 1), (3, 5), (g.n // 2, g.n // 3), (g.n // 2, g.n // 2)]
        out["oracle_err"] = max(abs(spectral_sum_green(g, 1.0, pr) - col[pr]) for pr in probes)
    n2 = cfg.option("compare_n", 0, int)
    if n2:
        fine = green_table(cfg, grid=type(g)(g.side, n2))
        ratio = n2 // g.n
        fr = np.array([fine.robin_at_node((nd[0] * ratio, nd[1] * ratio)) for nd in nodes[:2]])
        out["robin_fine"] = fr.tolist()
        out["robin_mesh_diff"] = float(np.max(np.abs(fr - robin)))
    return out


def run_renorm(cfg, ctx):
    table = green_table(cfg)
    u = build_control(cfg)
    Wfun = RenormalizedEnergy(table, u)
    out = {"configs": []}
    for c in cfg.vortices:
        rep = Wfun.report(c)
        out["configs"].append(dict(pair=rep.pair_term, self=rep.self_term, total=rep.total, phi=rep.phi.tolist()))
    g = cfg.grid
    write_grid_csv(ctx.path("phi.csv"), Wfun.phi(g.nodes()), g, "Phi_u")
    ctx.stamp("phi.csv")
    n = cfg.option("h_identity_controls", 0, int)
    if n:
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        rows = []
        for k in range(n):
            uk = _random_control(rng, 0.5) + ControlField.from_real_modes(
                [((2, 1), rng.normal(size=2) * 0.3, rng.normal(size=2) * 0.3)], g.side
            )
            h = control_correction(table, uk).values
            quad = _pairing_by_columns(table, uk, rng)
            err = max(abs(h[nd] - q) for nd, q in quad)
            conv = float(np.max(np.abs(pairing_integral_nodes(table, uk) - h)))
            worst = max(worst, err, conv)
            rows.append((k, err, conv))
        ctx.write_csv("h_identity.csv", ("control", "column_quadrature_err", "convolution_err"), rows)
        out["h_identity_err"] = worst
    return out


def _pairing_by_columns(table, u, rng, samples=6):
    """sum_y <u(y), grad_y G_b(x, y)> h^2 at a few nodes x, grad_y by centred differences of G(x, .)."""
    g = table.grid
    un = u.sample(g)
    out = []
    for _ in range(samples):
        nd = tuple(int(v) for v in rng.integers(0, g.n, 2))
        col = table.column(nd)  # G(x_nd, y) = G(y, x_nd) as a function of y
        gx = (np.roll(col, -1, axis=0) - np.roll(col, 1, axis=0)) / (2 * g.h)
        gy = (np.roll(col, -1, axis=1) - np.roll(col, 1, axis=1)) / (2 * g.h)
        out.append((nd, float(np.sum(un[..., 0] * gx + un[..., 1] * gy) * g.h**2)))
    return out


def run_dynamics(cfg, ctx):
    table = green_table(cfg)
    u = build_control(cfg)
    W = RenormalizedEnergy(table, u)
    c0 = cfg.vortices[0]
    out = {}
    t0 = time.perf_counter()
    if cfg.flow == "hamiltonian":
        if u is not None and u.max_divergence() > 1e-10:
            raise PreconditionViolation("Hamiltonian flow needs a divergence-free control", module="vortex-dynamics")
        tr = hamiltonian_flow(W, u, c0, cfg.dt, cfg.T)
        tr.write_csv(ctx.path("trajectory.csv"))
        ctx.stamp("trajectory.csv")
        pos = np.array(tr.positions)
        sep0 = wrap_delta(pos[0, 0] - pos[0, 1], c0.side)
        seps = [np.linalg.norm(wrap_delta(p[0] - p[1], c0.side)) for p in pos] if len(c0) == 2 else [0.0]
        com = [np.linalg.norm(wrap_delta(p.mean(axis=0) - pos[0].mean(axis=0), c0.side)) for p in pos]
        out.update(
            max_h_drift=tr.max_h_drift,
            separation_drift=float(np.max(np.abs(np.array(seps) - np.linalg.norm(sep0)))),
            centre_drift=float(max(com)),
            collided=tr.collided,
            notes=tr.notes,
        )
        if cfg.option("order_check", False, bool):
            coarse = hamiltonian_flow(W, u, c0, 2 * cfg.dt, cfg.T)
            out["h_drift_2dt"] = coarse.max_h_drift
            out["observed_order"] = float(np.log2(coarse.max_h_drift / tr.max_h_drift))
        if cfg.option("reverse_check", False, bool):
            back = hamiltonian_flow(W, u, tr.final, cfg.dt, cfg.T, reverse=True)
            out["reverse_err"] = float(np.max(np.abs(wrap_delta(back.positions[-1] - np.asarray(c0.positions), c0.side))))
    else:
        tr = gradient_flow(W, u, c0, cfg.dt, cfg.T)
        tr.write_csv(ctx.path("trajectory.csv"))
        ctx.stamp("trajectory.csv")
        e = np.array(tr.energies)
        e = e[np.isfinite(e)]
        out.update(max_increase=float(np.max(np.diff(e), initial=0.0)), collided=tr.collided, notes=tr.notes)
    if cfg.option("monotone_check", False, bool):
        gc = cfg.vortices[1] if len(cfg.vortices) > 1 else c0
        gtr = gradient_flow(W, u, gc, cfg.option("gradient_dt", 1e-3, float), cfg.option("gradient_T", 0.5, float))
        e = np.array(gtr.energies)
        e = e[np.isfinite(e)]
        out["gradient_max_increase"] = float(np.max(np.diff(e), initial=0.0))
        out["gradient_collided"] = gtr.collided
    out["seconds"] = time.perf_counter() - t0
    return out


def run_optimize_control(cfg, ctx):
    table = green_table(cfg)
    basis = ControlBasis(cfg.K, cfg.grid.side, cfg.divergence_free)
    adm = AdmissibleSet(basis, cfg.M)
    sc = ControlScenario(table, cfg.vortices[0] if cfg.vortices else _empty(cfg), cfg.name)
    rng = np.random.default_rng(cfg.seed)
    task = cfg.option("task", "optimize")
    if task == "first-order":
        if cfg.coefficients is not None:
            v = np.asarray(cfg.coefficients, dtype=float)
        else:
            v = rng.standard_normal(basis.size)
            v /= adm.estimate(v)
        ts = cfg.option("t_list", [0.02, 0.04, 0.08], list)
        rep = first_order_correction_check(basis, v, sc, ts)
        ctx.write_csv("first_order.csv", ("t", "W_min", "deviation"), list(zip(rep.t, rep.W, rep.deviation)))
        return dict(
            W0=rep.W0,
            slope_fit=rep.slope_fit,
            slope_predicted=rep.slope_predicted,
            slope_envelope=rep.slope_envelope,
            slope_rel_error=rep.slope_rel_error,
            curvature_fit=rep.curvature_fit,
            lipschitz_constant=rep.lipschitz_constant,
            fit_residual=rep.fit_residual,
            flags=rep.flags,
        )
    t0 = time.perf_counter()
    if cfg.coefficients is not None:
        c0 = adm.project(cfg.coefficients)
    else:
        c0 = adm.random_point(rng, 0.1 * cfg.M)
    tol = cfg.option("tol", 1e-5, float)
    res = projected_gradient_descent(basis, c0, sc, adm, tol=tol)
    res.write_trace(ctx.path("optimization_trace.csv"))
    ctx.stamp("optimization_trace.csv")
    ctx.write_csv("control_coefficients.csv", ("kx", "ky", "kind", "component", "coefficient"), basis.table_rows(res.c))
    baseline = reduced_objective(basis, np.zeros(basis.size), sc).value
    out = dict(
        objective=res.objective,
        baseline=baseline,
        residual=res.residual,
        converged=res.converged,
        iterations=len(res.trace) - 1,
        est_c1=adm.estimate(res.c),
    )
    if cfg.option("fd_check", False, bool):
        gr = reduced_gradient(basis, res.c, sc)
        fd = fd_gradient(basis, res.c, sc)
        out["gradient_method"] = gr.method
        out["min_hessian_eig"] = gr.min_hessian_eig
        out["gradient_fd_rel_err"] = float(np.linalg.norm(gr.gradient - fd) / max(np.linalg.norm(fd), 1e-300))
    n = cfg.option("restarts", 0, int)
    if n:
        dev = []
        for _ in range(n):
            d = rng.standard_normal(basis.size)
            d *= rng.uniform(0.2, 1.0) * 0.1 * cfg.M / adm.estimate(d)
            r = projected_gradient_descent(basis, adm.project(res.c + d), sc, adm, tol=tol)
            dev.append(float(np.linalg.norm(r.c - res.c)))
        out["restart_max_dev"] = max(dev)
    out["seconds"] = time.perf_counter() - t0
    return out


def _empty(cfg):
    from .torus import VortexConfig

    return VortexConfig(np.zeros((0, 2)), np.zeros(0, dtype=int), cfg.grid.side, balanced=False)


RUNNERS = {
    "conjugate-audit": run_conjugate_audit,
    "minimize": run_minimize,
    "gamma-scan": run_gamma_scan,
    "green": run_green,
    "renorm": run_renorm,
    "dynamics": run_dynamics,
    "optimize-control": run_optimize_control,
}


# -- entry points ------------------------------------------------------------------


def versions():
    return {"tonelli_gl": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def unique_dir(root, stem):
    root.mkdir(parents=True, exist_ok=True)
    k = 0
    while True:
        d = root / (stem if k == 0 else f"{stem}-{k}")
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def execute(cfg, outdir=None):
    """Run ``cfg``; returns (exit_code, summary or error dict, run directory)."""
    outdir = unique_dir(output_root(), f"{cfg.name}-{cfg.sha256[:12]}") if outdir is None else Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, outdir)
    (outdir / "config.ini").write_text(cfg.text)
    t0 = time.perf_counter()
    manifest = dict(config_sha256=cfg.sha256, name=cfg.name, kind=cfg.kind, seed=cfg.seed, versions=versions())
    try:
        summary = RUNNERS[cfg.kind](cfg, ctx)
        ctx.write_json("summary.json", summary)
        code, payload = 0, summary
        manifest["status"] = "ok"
    except TonelliError as exc:
        code, payload = exc.exit_code, exc.to_json()
        ctx.write_json("error.json", payload)
        manifest["status"] = "error"
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["artifacts"] = ctx.artifacts
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return code, payload, outdir


def run(config_path, outdir=None):
    return execute(load(config_path), outdir)


# -- validation -------------------------------------------------------------------------


def validate_text(text):
    """Check invariants without running; never raises."""
    report = {"violations": [], "warnings": []}
    try:
        cfg = parse_text(text)
    except ConfigParseError as exc:
        report["violations"].append(f"parse: {exc}")
        return report
    except TonelliError as exc:
        report["violations"].append(f"{exc.module}: {exc}")
        return report
    return _validate_cfg(cfg, report)


def validate(config_path):
    try:
        with open(config_path) as fh:
            text = fh.read()
    except OSError as exc:
        return {"violations": [f"parse: cannot read config: {exc}"], "warnings": []}
    return validate_text(text)


def _validate_cfg(cfg, report):
    v, w = report["violations"], report["warnings"]
    g = cfg.grid
    v.extend(f"finsler: {m}" for m in cfg.spec.violations(g.nodes()))
    needs_quadratic = cfg.kind in ("minimize", "gamma-scan", "green", "renorm", "dynamics", "optimize-control")
    if needs_quadratic and cfg.spec.is_randers:
        v.append("finsler: run kind needs a quadratic spec (Randers not supported here)")
    if cfg.kind in ("minimize", "gamma-scan"):
        for e in cfg.eps:
            if e < 2 * g.h:
                w.append(f"resolution: eps={e:g} below 2h={2 * g.h:g}")
        for i, c in enumerate(cfg.vortices):
            if int(np.sum(c.degrees)) != 0:
                v.append(f"vortices[{i}]: degrees must sum to zero")
            if len(c) > 1 and c.min_separation() <= 4 * max(cfg.eps):
                v.append(f"vortices[{i}]: separation must exceed 4 eps")
    if cfg.kind == "gamma-scan":
        if list(cfg.eps) != sorted(cfg.eps, reverse=True):
            v.append("energy: eps list must be sorted descending for gamma-scan")
        if len(cfg.vortices) < 2:
            v.append("vortices: gamma-scan needs two configurations")
    if cfg.coefficients is not None:
        basis = ControlBasis(cfg.K, g.side, cfg.divergence_free)
        if len(cfg.coefficients) != basis.size:
            v.append(f"control: {basis.size} coefficients expected, got {len(cfg.coefficients)}")
        elif np.isfinite(cfg.M) and AdmissibleSet(basis, cfg.M).estimate(cfg.coefficients) > cfg.M:
            v.append("control: coefficients outside the admissible C1 ball")
    if cfg.kind == "dynamics":
        if cfg.dt <= 0 or cfg.T <= 0:
            v.append("dynamics: dt and T must be positive")
        u = None
        try:
            u = build_control(cfg)
        except TonelliError as exc:
            v.append(f"control: {exc}")
        if cfg.flow == "hamiltonian" and u is not None and u.max_divergence() > 1e-10:
            v.append("control: Hamiltonian flow needs a divergence-free control")
    if cfg.kind in ("dynamics", "renorm", "optimize-control") and not cfg.vortices:
        w.append("vortices: no configuration given")
    return report
