"""Control-translated Ginzburg-Landau energy on the link lattice.

Per node n with weight w_n = sqrt(det a(x_n)) h^2 and covariant differences
xi = (D_x psi, D_y psi) on the two links leaving n:

    kinetic   = 1/2 w  [F*(Re xi)^2 + F*(Im xi)^2]      (= 1/2 w Re(xi^H b xi))
    coupling  = w <j, u(x_n)>
    magnetic  = w curl^2 / (2 lam)        (plaquette with lower-left corner n)
    potential = w (1 - |psi|^2)^2 / (4 eps^2)

Only the quadratic Finsler family is accepted: the split of a complex
covector into real and imaginary parts is gauge-covariant only when F*^2 is
a quadratic form.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .control_field import ControlField
from .errors import InvalidSpecError, NumericFailure
from .finsler import FinslerSpec, busemann_hausdorff_density
from .tonelli import phi_u_conj
from .torus import FieldState, coulomb_project, symmetrize, covariant_derivative, plaquette_curl, supercurrent


@dataclass(frozen=True, eq=False)
class EnergyParams:
    eps: float
    lam: float = 1.0
    spec: FinslerSpec = field(default_factory=FinslerSpec.quadratic)
    u: ControlField = None

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidSpecError("eps must be positive", module="gl-energy")
        if not self.lam > 0:
            raise InvalidSpecError("lambda must be positive", module="gl-energy")
        if self.spec.is_randers:
            raise InvalidSpecError(
                "lattice energy needs a quadratic dual norm; Randers specs are not supported", module="gl-energy"
            )

    def with_control(self, u):
        return EnergyParams(self.eps, self.lam, self.spec, u)

    def resolution_ok(self, grid):
        return self.eps >= 2 * grid.h


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    coupling: float
    magnetic: float
    potential: float

    @property
    def total(self):
        return self.kinetic + self.coupling + self.magnetic + self.potential

    def as_dict(self):
        return dict(
            kinetic=self.kinetic, coupling=self.coupling, magnetic=self.magnetic, potential=self.potential, total=self.total
        )


class _Coefficients:
    """Per-node weight, inverse metric and control samples for one (grid, params)."""

    def __init__(self, grid, p):
        nodes = grid.nodes()
        self.w = busemann_hausdorff_density(p.spec, nodes) * grid.h**2
        self.b = p.spec.dual_metric_at(nodes)
        if p.u is None:
            self.u = np.zeros(nodes.shape)
        elif isinstance(p.u, ControlField):
            self.u = p.u.sample(grid)
        else:
            self.u = np.broadcast_to(np.asarray(p.u, dtype=float), nodes.shape).copy()
        self.eps = p.eps
        self.lam = p.lam
        self.h = grid.h
        if not p.resolution_ok(grid):
            warnings.warn(f"eps={p.eps:g} is below 2h={2 * grid.h:g}; cores are under-resolved", stacklevel=3)


def node_weights(grid, spec):
    return busemann_hausdorff_density(spec, grid.nodes()) * grid.h**2


def _b_apply(b, dx, dy):
    return b[..., 0, 0] * dx + b[..., 0, 1] * dy, b[..., 1, 0] * dx + b[..., 1, 1] * dy


def _breakdown(state, co):
    dx, dy = covariant_derivative(state)
    bx, by = _b_apply(co.b, dx, dy)
    kin = 0.5 * np.sum(co.w * np.real(np.conj(dx) * bx + np.conj(dy) * by))
    jx, jy = supercurrent(state)
    cpl = np.sum(co.w * (jx * co.u[..., 0] + jy * co.u[..., 1]))
    mag = np.sum(co.w * plaquette_curl(state) ** 2) / (2 * co.lam)
    pot = np.sum(co.w * (1 - np.abs(state.psi) ** 2) ** 2) / (4 * co.eps**2)
    return EnergyBreakdown(float(kin), float(cpl), float(mag), float(pot))


def energy(state, p):
    return _breakdown(state, _Coefficients(state.grid, p))


def energy_conjugate_path(state, p):
    """kinetic + coupling assembled from phi_u* evaluations.

    Rotating xi by the local phase of psi gives zeta = e^{-i arg psi} xi with
    j = |psi| Im(zeta); the node density is then
    phi_0*(Re zeta) + phi_{|psi| u}*(Im zeta).
    """
    grid = state.grid
    co = _Coefficients(grid, p)
    dx, dy = covariant_derivative(state)
    mod = np.abs(state.psi)
    phase = np.where(mod > 0, np.conj(state.psi) / np.where(mod > 0, mod, 1.0), 1.0)
    zeta = np.stack([phase * dx, phase * dy], axis=-1)
    nodes = grid.nodes()
    dens = phi_u_conj(p.spec, None, nodes, zeta.real) + phi_u_conj(p.spec, mod[..., None] * co.u, nodes, zeta.imag)
    return float(np.sum(co.w * dens))


def _gradient(state, co):
    h = co.h
    psi = state.psi
    psx = np.roll(psi, -1, axis=0)
    psy = np.roll(psi, -1, axis=1)
    ex = np.exp(-1j * state.ax)
    ey = np.exp(-1j * state.ay)
    dx = (psx * ex - psi) / h
    dy = (psy * ey - psi) / h
    bx, by = _b_apply(co.b, dx, dy)
    Wx, Wy = co.w * bx, co.w * by

    g = -(Wx + Wy) / h
    g += np.roll(Wx / ex, 1, axis=0) / h
    g += np.roll(Wy / ey, 1, axis=1) / h
    gax = np.imag(np.conj(Wx) * ex * psx) / h
    gay = np.imag(np.conj(Wy) * ey * psy) / h

    kx = co.w * co.u[..., 0] / h
    ky = co.w * co.u[..., 1] / h
    g += np.roll(1j * kx * psi / ex, 1, axis=0) + np.roll(1j * ky * psi / ey, 1, axis=1)
    g += -1j * (kx * ex * psx + ky * ey * psy)
    gax -= kx * np.real(np.conj(psi) * ex * psx)
    gay -= ky * np.real(np.conj(psi) * ey * psy)

    g -= co.w * (1 - np.abs(psi) ** 2) * psi / co.eps**2

    r = co.w * plaquette_curl(state) / (co.lam * h**2)
    gax += r - np.roll(r, 1, axis=1)
    gay += np.roll(r, 1, axis=0) - r
    return g, gax, gay


def energy_gradient(state, p):
    """(g_psi, g_ax, g_ay) with g_psi = dE/dRe(psi) + i dE/dIm(psi)."""
    return _gradient(state, _Coefficients(state.grid, p))


def _flat_grad(g, gax, gay):
    return np.concatenate([g.real.ravel(), g.imag.ravel(), gax.ravel(), gay.ravel()])


def el_residual(state, p):
    """Max-norm of the energy gradient in the Coulomb gauge."""
    return float(np.max(np.abs(_flat_grad(*energy_gradient(coulomb_project(state), p)))))


def gamma_continuity_gap(state, p, u1, u2, rtol=1e-10):
    """E_{u1} - E_{u2} at a fixed state, checked against sum w <j, u1 - u2>."""
    e1 = energy(state, p.with_control(u1)).total
    e2 = energy(state, p.with_control(u2)).total
    co1 = _Coefficients(state.grid, p.with_control(u1))
    co2 = _Coefficients(state.grid, p.with_control(u2))
    jx, jy = supercurrent(state)
    du = co1.u - co2.u
    direct = float(np.sum(co1.w * (jx * du[..., 0] + jy * du[..., 1])))
    gap = e1 - e2
    scale = max(1.0, abs(e1), abs(e2))
    if abs(gap - direct) > rtol * scale:
        raise NumericFailure("energy is not affine in the control", module="gl-energy", residual=abs(gap - direct))
    return gap


# -- minimisation -------------------------------------------------------------


@dataclass
class MinimizeResult:
    state: FieldState
    trace: list
    converged: bool
    grad_norm: float

    @property
    def energy(self):
        return self.trace[-1]["energy"]


class _Preconditioner:
    """Spectral inverse of a constant-coefficient model of the Hessian."""

    def __init__(self, grid, co):
        n = grid.n
        lam_k = -grid.lattice_symbol()
        wbar = float(np.mean(co.w))
        bbar = float(np.mean(co.b[..., 0, 0] + co.b[..., 1, 1])) / 2
        h2 = grid.h**2
        self.psi_sym = wbar * (bbar * lam_k / h2 + 1.0 / co.eps**2)
        self.a_sym = wbar * (lam_k / (co.lam * h2**2) + bbar / h2)
        self.m = n * n
        self.shape = (n, n)

    def __call__(self, v):
        m, s = self.m, self.shape
        out = np.empty_like(v)
        for k, sym in ((0, self.psi_sym), (1, self.psi_sym), (2, self.a_sym), (3, self.a_sym)):
            blk = v[k * m : (k + 1) * m].reshape(s)
            out[k * m : (k + 1) * m] = np.real(np.fft.ifft2(np.fft.fft2(blk) / sym)).ravel()
        return out


def minimize(state0, p, max_iters=50000, grad_tol=1e-6, precondition=True, mirrors=(), callback=None):
    """Preconditioned Polak-Ribiere+ conjugate gradient with a monotone line search.

    Each trial step is followed by one secant correction along the search
    direction; a step is kept only if the energy does not increase (Armijo
    with c1 = 1e-4, or a rounding-level tie with a smaller gradient).
    Stops when the max-norm of the gradient is below ``grad_tol``.

    ``mirrors`` (see torus.pinning_mirrors) restricts the search to the
    states fixed by those reflections.  Such constrained critical points are
    critical for the full energy, which lets symmetric saddle
    configurations of vortices be relaxed without drifting.
    """
    grid = state0.grid
    co = _Coefficients(grid, p)
    base_prec = _Preconditioner(grid, co) if precondition else (lambda v: v)
    template = state0
    mirrors = list(mirrors)
    if mirrors:
        state0 = symmetrize(state0, mirrors)

        def prec(v):
            return symmetrize(template.unpack(base_prec(v)), mirrors, linear=True).pack()

    else:
        prec = base_prec

    def fg(v):
        s = template.unpack(v)
        return _breakdown(s, co), _flat_grad(*_gradient(s, co))

    x = state0.pack()
    parts, g = fg(x)
    f = parts.total
    trace = [dict(iter=0, energy=f, grad_norm=float(np.max(np.abs(g))), **_parts(parts))]
    z = prec(g)
    d = -z
    gz = g @ z
    alpha = None
    converged = trace[-1]["grad_norm"] <= grad_tol
    it = 0
    while not converged and it < max_iters:
        it += 1
        slope = g @ d
        if slope >= 0:
            d, slope = -z, -gz
        if alpha is None:
            alpha = min(1.0, 0.1 / max(np.max(np.abs(d)), 1e-300))
        step = _line_search(fg, x, f, g, d, slope, alpha)
        if step is None:
            if np.array_equal(d, -z):
                break
            d = -z
            continue
        a_acc, parts_new, g_new = step
        x = x + a_acc * d
        if mirrors and it % 50 == 0:
            x = symmetrize(template.unpack(x), mirrors).pack()
            parts_new, g_new = fg(x)
        f_new = parts_new.total
        z_new = prec(g_new)
        gz_new = g_new @ z_new
        beta = max(0.0, (gz_new - g @ z_new) / gz)
        d = -z_new + beta * d
        g, z, gz, f, alpha = g_new, z_new, gz_new, f_new, a_acc
        gn = float(np.max(np.abs(g)))
        trace.append(dict(iter=it, energy=f, grad_norm=gn, **_parts(parts_new)))
        if callback is not None:
            callback(it, f, gn)
        converged = gn <= grad_tol
    return MinimizeResult(template.unpack(x), trace, converged, trace[-1]["grad_norm"])


def _parts(b):
    return dict(kinetic=b.kinetic, coupling=b.coupling, magnetic=b.magnetic, potential=b.potential)


def _line_search(fg, x, f0, g0, d, slope0, alpha, c1=1e-4, max_halvings=40):
    gn0 = np.max(np.abs(g0))

    def accept(a, pa, ga):
        fa = pa.total
        if fa <= f0 + c1 * a * slope0:
            return True
        return fa <= f0 and np.max(np.abs(ga)) < gn0

    p1, g1 = fg(x + alpha * d)
    s1 = g1 @ d
    cands = [(alpha, p1, g1)]
    if s1 > slope0:
        a2 = float(np.clip(alpha * slope0 / (slope0 - s1), 0.05 * alpha, 20 * alpha))
    else:
        a2 = 4 * alpha
    p2, g2 = fg(x + a2 * d)
    cands.append((a2, p2, g2))
    good = [c for c in cands if accept(*c)]
    if good:
        return min(good, key=lambda c: c[1].total)
    a = min(alpha, a2)
    for _ in range(max_halvings):
        a *= 0.5
        pa, ga = fg(x + a * d)
        if accept(a, pa, ga):
            return a, pa, ga
    return None


TRACE_COLUMNS = ("iter", "energy", "grad_norm", "kinetic", "coupling", "magnetic", "potential")


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for row in trace:
            wr.writerow([row["iter"]] + [repr(float(row[c])) for c in TRACE_COLUMNS[1:]])
