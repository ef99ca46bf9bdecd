"""Reduced optimal control over a finite Fourier family of controls.

The admissible set is a weighted l1 ball in coefficient space,
est(c) = sum_j (1 + 2 pi |k_j| / L) |c_j| <= M, and projection is radial
rescaling.  The reduced objective J(c) is W_u at vortex positions relaxed
under u = u(c).

Since u -> W_u(a) is affine at fixed positions, the envelope gradient is
dJ/dc_j = W_{e_j}(a*) - W_0(a*), with a* the relaxed positions.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as sp_minimize

from .control_field import ControlField
from .dynamics import position_hessian, relax
from .errors import EnvelopeInvalid, PreconditionViolation
from .green import RenormalizedEnergy
from .torus import VortexConfig, wrap_delta


class ControlBasis:
    """Real sine/cosine modes with 0 < |k|_inf <= K, one per +-k pair.

    Without the divergence-free flag each wavevector carries four unit
    fields (cos e_x, sin e_x, cos e_y, sin e_y).  With it, two: the
    rotated gradient direction k^perp/|k| times cos or sin.
    """

    def __init__(self, K, side=1.0, divergence_free=False):
        if K < 0:
            raise PreconditionViolation("mode cutoff must be nonnegative", module="control-opt", K=K)
        self.K = int(K)
        self.side = float(side)
        self.divergence_free = bool(divergence_free)
        ks = [(kx, ky) for kx in range(0, K + 1) for ky in range(-K, K + 1) if kx > 0 or (kx == 0 and ky > 0)]
        self.wavevectors = ks
        lab = []
        for k in ks:
            if self.divergence_free:
                lab += [(k, "cos", "perp"), (k, "sin", "perp")]
            else:
                lab += [(k, "cos", "x"), (k, "sin", "x"), (k, "cos", "y"), (k, "sin", "y")]
        self.labels = lab
        self.weights = np.array([1 + 2 * np.pi * np.hypot(*k) / self.side for k, _, _ in lab])

    @property
    def size(self):
        return len(self.labels)

    def _direction(self, k, comp):
        if comp == "x":
            return np.array([1.0, 0.0])
        if comp == "y":
            return np.array([0.0, 1.0])
        return np.array([-k[1], k[0]], dtype=float) / np.hypot(*k)

    def field(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape != (self.size,):
            raise PreconditionViolation("coefficient vector has wrong length", module="control-opt", got=c.shape)
        modes = []
        for cj, (k, kind, comp) in zip(c, self.labels):
            if cj == 0.0:
                continue
            amp = cj * self._direction(k, comp)
            zero = np.zeros(2)
            modes.append((k, amp, zero) if kind == "cos" else (k, zero, amp))
        return ControlField.from_real_modes(modes, self.side)

    def unit(self, j):
        e = np.zeros(self.size)
        e[j] = 1.0
        return self.field(e)

    def table_rows(self, c):
        """Rows (kx, ky, kind, component, coefficient) for export."""
        return [(k[0], k[1], kind, comp, float(cj)) for cj, (k, kind, comp) in zip(c, self.labels)]


@dataclass(frozen=True)
class AdmissibleSet:
    basis: ControlBasis
    M: float

    def estimate(self, c):
        return float(np.sum(self.basis.weights * np.abs(c)))

    def contains(self, c):
        return self.estimate(c) <= self.M * (1 + 1e-12)

    def project(self, c):
        c = np.asarray(c, dtype=float)
        est = self.estimate(c)
        if est <= self.M:
            return c.copy()
        return c * (self.M / est)

    def random_point(self, rng, radius):
        """Uniform direction, est-radius drawn in [0, radius]."""
        d = rng.standard_normal(self.basis.size)
        d /= self.estimate(d)
        return self.project(d * radius * rng.uniform())


@dataclass
class ControlScenario:
    """Green table plus the initial vortex configuration the relaxations start from."""

    table: object
    config0: VortexConfig
    name: str = "scenario"
    relax_tol: float = 1e-6
    _base: object = field(default=None, repr=False)
    _modes: dict = field(default_factory=dict, repr=False)

    @property
    def base_energy(self):
        if self._base is None:
            self._base = RenormalizedEnergy(self.table, None)
        return self._base

    def mode_energies(self, basis):
        key = (basis.K, basis.side, basis.divergence_free)
        if key not in self._modes:
            self._modes[key] = [RenormalizedEnergy(self.table, basis.unit(j)) for j in range(basis.size)]
        return self._modes[key]

    def energy(self, basis, c):
        if not np.any(c):
            return self.base_energy
        return RenormalizedEnergy(self.table, basis.field(c))


@dataclass
class ObjectiveValue:
    value: float
    config: VortexConfig
    grad_norm: float
    converged: bool
    collided: bool


def reduced_objective(basis, c, scenario, admissible=None, start=None):
    if admissible is not None:
        c = admissible.project(c)
    W = scenario.energy(basis, c)
    cfg = scenario.config0 if start is None else start
    if len(cfg) == 0:
        return ObjectiveValue(W(cfg), cfg, 0.0, True, False)
    r = relax(W, cfg, tol=scenario.relax_tol)
    if r.collided:
        warnings.warn("relaxation hit the collision cutoff; objective at last valid configuration", stacklevel=2)
    return ObjectiveValue(r.energy, r.config, r.grad_norm, r.converged, r.collided)


@dataclass
class GradientValue:
    gradient: np.ndarray
    method: str
    objective: ObjectiveValue
    min_hessian_eig: float = np.nan


def envelope_gradient(basis, scenario, config):
    base = scenario.base_energy(config)
    return np.array([Wj(config) - base for Wj in scenario.mode_energies(basis)])


def fd_gradient(basis, c, scenario, step=1e-5, start=None):
    c = np.asarray(c, dtype=float)
    g = np.zeros_like(c)
    for j in range(c.size):
        e = np.zeros_like(c)
        e[j] = step
        fp = reduced_objective(basis, c + e, scenario, start=start).value
        fm = reduced_objective(basis, c - e, scenario, start=start).value
        g[j] = (fp - fm) / (2 * step)
    return g


def reduced_gradient(basis, c, scenario, obj=None, strict=False, hess_rtol=1e-7, start=None):
    """Envelope gradient at the relaxed positions.

    The envelope formula needs a nondegenerate minimum in the positions; if
    the FD Hessian has a nonpositive (relative to its scale) eigenvalue the
    result falls back to full central differences of the objective, or
    raises ``EnvelopeInvalid`` when ``strict``.
    """
    c = np.asarray(c, dtype=float)
    if obj is None:
        obj = reduced_objective(basis, c, scenario, start=start)
    if len(obj.config) == 0:
        return GradientValue(np.zeros_like(c), "envelope", obj, np.inf)
    W = scenario.energy(basis, c)
    ev = np.linalg.eigvalsh(position_hessian(W, obj.config))
    lam = float(ev[0])
    if lam <= hess_rtol * max(1.0, float(np.abs(ev).max())):
        if strict:
            raise EnvelopeInvalid(
                "relaxed configuration is not a nondegenerate minimum", module="control-opt", min_eig=lam
            )
        return GradientValue(fd_gradient(basis, c, scenario, start=start), "fd", obj, lam)
    return GradientValue(envelope_gradient(basis, scenario, obj.config), "envelope", obj, lam)


def stationarity_residual(admissible, c, g):
    return float(np.linalg.norm(c - admissible.project(c - g)))


TRACE_COLUMNS = ("iter", "objective", "residual", "step", "est_c1")


@dataclass
class DescentResult:
    c: np.ndarray
    objective: float
    residual: float
    converged: bool
    trace: list
    config: VortexConfig

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_COLUMNS)
            for row in self.trace:
                wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def projected_gradient_descent(basis, c0, scenario, admissible, tol=1e-5, max_iter=500, eta0=1.0, armijo=1e-4):
    """c <- Pi(c - eta g) with backtracking on the projected arc.

    Relaxations are warm-started from the previous relaxed positions.
    """
    c = admissible.project(c0)
    obj = reduced_objective(basis, c, scenario)
    grad = reduced_gradient(basis, c, scenario, obj=obj)
    trace = []
    eta = eta0
    best = (obj.value, c, obj.config)
    for it in range(max_iter):
        g = grad.gradient
        res = stationarity_residual(admissible, c, g)
        trace.append((it, obj.value, res, eta, admissible.estimate(c)))
        if res <= tol:
            return DescentResult(c, obj.value, res, True, trace, obj.config)
        eta = min(2 * eta, 1e6)
        while True:
            cn = admissible.project(c - eta * g)
            on = reduced_objective(basis, cn, scenario, start=obj.config)
            if on.value <= obj.value - armijo / eta * float(np.sum((cn - c) ** 2)):
                break
            eta *= 0.5
            if eta < 1e-14:
                warnings.warn("line search stalled; returning best iterate", stacklevel=2)
                return DescentResult(best[1], best[0], res, False, trace, best[2])
        c, obj = cn, on
        grad = reduced_gradient(basis, c, scenario, obj=obj, start=obj.config)
        if obj.value < best[0]:
            best = (obj.value, c, obj.config)
    res = stationarity_residual(admissible, c, grad.gradient)
    trace.append((max_iter, obj.value, res, eta, admissible.estimate(c)))
    warnings.warn("iteration cap reached before stationarity tolerance", stacklevel=2)
    return DescentResult(best[1], best[0], res, res <= tol, trace, best[2])


# -- first-order correction --------------------------------------------------


def pairing_slope(table, v, config):
    """sum_i d_i sum_y <v(y), grad_y G(a_i, y)> h^2, centred grad_y, directly from the kernel."""
    g = table.grid
    nodes = g.nodes()
    vn = v.sample(g)
    total = 0.0
    for a, d in zip(np.asarray(config.positions), config.degrees):
        col = table(np.broadcast_to(a, nodes.shape), nodes)
        gx = (np.roll(col, -1, axis=0) - np.roll(col, 1, axis=0)) / (2 * g.h)
        gy = (np.roll(col, -1, axis=1) - np.roll(col, 1, axis=1)) / (2 * g.h)
        total += d * np.sum(vn[..., 0] * gx + vn[..., 1] * gy) * g.h**2
    return float(total)


def select_translation(scenario, v, config):
    """Among rigid translates of ``config`` (all equally good when b is
    constant), pick the one minimizing the first-order control term."""
    base = scenario.base_energy
    Wv = RenormalizedEnergy(scenario.table, v)
    pos = np.asarray(config.positions, dtype=float)
    side = config.side

    def lin(tau):
        cfg = config.moved((pos + tau) % side)
        return Wv(cfg) - base(cfg)

    n = 16
    taus = [np.array([i, j]) * side / n for i in range(n) for j in range(n)]
    t0 = min(taus, key=lin)
    r = sp_minimize(lin, t0, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14, maxiter=4000))
    return config.moved((pos + r.x) % side)


@dataclass
class CorrectionReport:
    t: np.ndarray
    W: np.ndarray
    W0: float
    slope_fit: float
    curvature_fit: float
    slope_predicted: float
    slope_envelope: float
    deviation: np.ndarray
    fit_residual: float
    flags: list

    @property
    def slope_rel_error(self):
        return abs(self.slope_fit - self.slope_predicted) / max(abs(self.slope_predicted), 1e-300)

    @property
    def lipschitz_constant(self):
        return float(np.max(self.deviation / self.t))


def first_order_correction_check(basis, v, scenario, t_list=(0.02, 0.04, 0.08), translate=True):
    """Fit W^min(t v) = W_0 + s t + q t^2 over ``t_list`` and compare s with
    the pairing of v against the vortex current of the baseline minimizer.

    ``v`` is a coefficient vector of ``basis`` or a ControlField.  With
    constant b the uncontrolled minimizers form a translation family; the
    member selected by v is used as baseline when ``translate`` is set.
    """
    vf = v if isinstance(v, ControlField) else basis.field(v)
    flags = []
    r0 = relax(scenario.base_energy, scenario.config0, tol=scenario.relax_tol)
    a0 = r0.config
    if not r0.converged:
        flags.append("baseline relaxation not converged")
    if translate and scenario.table.constant:
        a0 = select_translation(scenario, vf, a0)
    W0 = scenario.base_energy(a0)
    ts = np.asarray(t_list, dtype=float)
    Ws, dev = [], []
    for t in ts:
        r = relax(RenormalizedEnergy(scenario.table, vf * t), a0, tol=scenario.relax_tol)
        if not r.converged:
            flags.append(f"relaxation failed at t={t:g}")
        Ws.append(r.energy)
        dev.append(np.linalg.norm(wrap_delta(np.asarray(r.config.positions) - np.asarray(a0.positions), a0.side)))
    Ws = np.array(Ws)
    A = np.column_stack([ts, ts**2])
    coef, *_ = np.linalg.lstsq(A, Ws - W0, rcond=None)
    fit_res = float(np.max(np.abs(A @ coef - (Ws - W0)))) if len(ts) > 2 else 0.0
    env = RenormalizedEnergy(scenario.table, vf)(a0) - W0
    return CorrectionReport(
        ts, Ws, W0, float(coef[0]), float(coef[1]), pairing_slope(scenario.table, vf, a0), float(env),
        np.array(dev), fit_res, flags,
    )
