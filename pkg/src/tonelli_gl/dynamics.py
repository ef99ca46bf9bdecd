"""Point-vortex motion driven by the renormalized energy W_u.

Gradient flow   da_i/dt = -grad_{a_i} W_u + drift(a_i)   (adaptive RK4)
Hamiltonian     da_i/dt =  J grad_{a_i} W_u,  J = [[0, 1], [-1, 0]]   (fixed-step RK4)
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .control_field import ControlField
from .errors import NumericFailure, PreconditionViolation, SingularConfiguration
from .green import RenormalizedEnergy
from .torus import VortexConfig, wrap_delta

J = np.array([[0.0, 1.0], [-1.0, 0.0]])

GRADIENT_FLOW = "gradient-flow"
HAMILTONIAN = "hamiltonian"


@dataclass
class VortexTrajectory:
    kind: str
    degrees: np.ndarray
    side: float
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    collided: bool = False
    notes: list = field(default_factory=list)

    def append(self, t, pos, w):
        self.times.append(float(t))
        self.positions.append(np.asarray(pos, dtype=float) % self.side)
        self.energies.append(float(w))

    @property
    def final(self):
        return VortexConfig(self.positions[-1], self.degrees, self.side, balanced=False)

    def h_drift(self):
        e = np.asarray(self.energies)
        return np.abs(e - e[0]) / max(abs(e[0]), 1e-300)

    @property
    def max_h_drift(self):
        return float(np.max(self.h_drift()))

    def write_csv(self, path):
        m = len(self.degrees)
        cols = ["t"] + [f"a{i + 1}{c}" for i in range(m) for c in "xy"] + ["W_u", "H_drift"]
        drift = self.h_drift()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for t, p, w, d in zip(self.times, self.positions, self.energies, drift):
                wr.writerow([repr(t)] + [repr(float(v)) for v in p.ravel()] + [repr(w), repr(float(d))])


def _energy(table, u):
    if isinstance(table, RenormalizedEnergy):
        return table
    return RenormalizedEnergy(table, u)


def grad_W(table, u, config):
    """grad_{a_i} W_u for every vortex, shape (M, 2)."""
    return _energy(table, u).gradient(config)


def _min_distance(pos, side):
    if pos.shape[0] < 2:
        return np.inf
    d = wrap_delta(pos[:, None, :] - pos[None, :, :], side)
    r = np.hypot(d[..., 0], d[..., 1])
    r[np.diag_indices_from(r)] = np.inf
    return float(r.min())


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def gradient_flow(
    table, u, config0, dt, T, drift=None, local_tol=1e-8, record_every=1, stop_grad=None, dt_max=None
):
    """Adaptive RK4 (step doubling) for the dissipative law.

    A step is accepted when a full step and two half steps agree to
    ``local_tol`` in max-norm, otherwise it is halved; after easy steps it
    grows back towards ``dt_max`` (default ``dt``).  Integration stops early when two vortices come
    within 2h (flagged) or when |grad W| drops below ``stop_grad``.
    """
    W = _energy(table, u)
    side = config0.side
    h = W.table.grid.h
    deg = np.asarray(config0.degrees)
    base = np.asarray(config0.positions, dtype=float).copy()

    def cfg(p):
        return VortexConfig(p % side, deg, side, balanced=False)

    def rhs(y):
        v = -W.gradient(cfg(y))
        if drift is not None:
            v = v + np.asarray(drift(y % side), dtype=float)
        return v

    traj = VortexTrajectory(GRADIENT_FLOW, deg.copy(), side)
    y = base
    g0 = rhs(y)
    if dt * np.max(np.abs(g0), initial=0.0) > 0.1 * _min_distance(y, side):
        raise PreconditionViolation(
            "time step too large for the initial configuration", module="vortex-dynamics", dt=dt
        )
    traj.append(0.0, y, W(cfg(y)))
    t, step, k = 0.0, dt, 0
    while t < T - 1e-14 * max(T, 1.0):
        step = min(step, T - t)
        full = _rk4(rhs, y, step)
        half = _rk4(rhs, _rk4(rhs, y, 0.5 * step), 0.5 * step)
        err = float(np.max(np.abs(full - half)))
        if err > local_tol:
            step *= 0.5
            if step < 1e-14 * max(T, 1.0):
                raise NumericFailure("gradient-flow step underflow", module="vortex-dynamics", residual=err)
            continue
        y = half
        t += step
        k += 1
        if _min_distance(y % side, side) < 2 * h:
            traj.append(t, y, W(cfg(y)) if _min_distance(y % side, side) > 0 else np.nan)
            traj.collided = True
            traj.notes.append(f"collision-stop at t={t:.6g}")
            return traj
        if k % record_every == 0 or t >= T - 1e-14:
            traj.append(t, y, W(cfg(y)))
        if stop_grad is not None and np.max(np.abs(rhs(y))) <= stop_grad:
            if traj.times[-1] != t:
                traj.append(t, y, W(cfg(y)))
            break
        if err < local_tol / 32:
            step = min(2 * step, dt_max or dt)
    return traj


def hamiltonian_flow(table, u, config0, dt, T, reverse=False):
    """Classical RK4 at fixed dt for da_i/dt = J grad_{a_i} W_u (or -J if ``reverse``).

    The control must be divergence-free; the standard J is used even when b
    varies, and such runs carry a note.
    """
    if isinstance(u, ControlField) and u.max_divergence() > 1e-10:
        raise PreconditionViolation(
            "Hamiltonian flow needs a divergence-free control",
            module="vortex-dynamics",
            max_divergence=u.max_divergence(),
        )
    W = _energy(table, u)
    side = config0.side
    deg = np.asarray(config0.degrees)
    Jm = -J if reverse else J

    def cfg(p):
        return VortexConfig(p % side, deg, side, balanced=False)

    def rhs(y):
        return W.gradient(cfg(y)) @ Jm.T

    traj = VortexTrajectory(HAMILTONIAN, deg.copy(), side)
    if not W.table.constant:
        traj.notes.append("non-constant b: standard symplectic matrix used")
    y = np.asarray(config0.positions, dtype=float).copy()
    traj.append(0.0, y, W(cfg(y)))
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * T:
        warnings.warn("T is not a multiple of dt; final time rounded", stacklevel=2)
    h = W.table.grid.h
    for k in range(1, nsteps + 1):
        y = _rk4(rhs, y, dt)
        if _min_distance(y % side, side) < 2 * h:
            traj.collided = True
            traj.notes.append(f"collision-stop at t={k * dt:.6g}")
            traj.append(k * dt, y, np.nan)
            break
        traj.append(k * dt, y, W(cfg(y)))
    return traj


def position_hessian(W, config, step=1e-5):
    """Finite-difference Hessian of W in the flattened positions (from the analytic gradient)."""
    pos = np.asarray(config.positions, dtype=float)
    m = pos.size
    H = np.zeros((m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = step
        gp = W.gradient(config.moved((pos.ravel() + e).reshape(pos.shape))).ravel()
        gm = W.gradient(config.moved((pos.ravel() - e).reshape(pos.shape))).ravel()
        H[:, k] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.T)


@dataclass
class Relaxation:
    config: VortexConfig
    grad_norm: float
    converged: bool
    collided: bool
    energy: float


def _newton_direction(H, g, sep, null_rtol):
    """Saddle-free Newton step: |lambda| in place of lambda, near-null
    (symmetry) directions dropped, a push along negative curvature when the
    gradient has no component there.  Length capped at sep / 4."""
    lam, V = np.linalg.eigh(H)
    scale = max(float(np.abs(lam).max()), 1e-300)
    gv = V.T @ g
    keep = np.abs(lam) > null_rtol * scale
    step = -V[:, keep] @ (gv[keep] / np.abs(lam[keep]))
    neg = lam < -null_rtol * scale
    if np.any(neg):
        k = int(np.argmin(lam))
        sgn = -np.sign(gv[k]) if gv[k] != 0 else 1.0
        step = step + sgn * 0.05 * sep * V[:, k]
    n = np.linalg.norm(step)
    if n > sep / 4:
        step *= sep / 4 / n
    return step, float(lam[0]), scale


def relax(W, config0, tol=1e-6, dt=1e-3, T_max=200.0, newton_from=1e-2, max_newton=60, null_rtol=1e-6):
    """Gradient flow to |grad W| <= newton_from, then saddle-free Newton.

    Converged means |grad W| <= tol with no direction of negative curvature
    beyond ``null_rtol`` (relative); near-null directions such as rigid
    translations are ignored.  Steps must lower W; when the line search
    fails a stretch of gradient flow is run instead.
    """
    config = config0
    side = config0.side

    def flow(cfg, stop):
        g = W.gradient(cfg)
        dt0 = min(dt, 0.05 * cfg.min_separation() / max(np.max(np.abs(g)), 1e-300))
        return gradient_flow(W, None, cfg, dt0, T_max, local_tol=1e-8, record_every=10**9, stop_grad=stop, dt_max=0.5)

    g = W.gradient(config)
    if np.max(np.abs(g), initial=0.0) > newton_from:
        tr = flow(config, newton_from)
        config = tr.final
        if tr.collided:
            return Relaxation(config, float(np.max(np.abs(W.gradient(config)))), False, True, W(config))
    if len(config) == 0:
        return Relaxation(config, 0.0, True, False, W(config))
    fallbacks = 0
    for _ in range(max_newton):
        g = W.gradient(config).ravel()
        gn = float(np.max(np.abs(g)))
        H = position_hessian(W, config)
        stepv, lam0, scale = _newton_direction(H, g, config.min_separation(), null_rtol)
        if gn <= tol and lam0 >= -null_rtol * scale:
            return Relaxation(config, gn, True, False, W(config))
        w0 = W(config)
        flat = 1e-13 * max(1.0, abs(w0))
        pos = np.asarray(config.positions)
        for _ in range(30):
            trial = config.moved((pos + stepv.reshape(-1, 2)) % side)
            try:
                if trial.min_separation() > 0:
                    wt = W(trial)
                    # below round-off in W the gradient norm decides
                    if wt < w0 - flat or (wt <= w0 + flat and np.max(np.abs(W.gradient(trial))) < gn):
                        break
            except SingularConfiguration:
                pass
            stepv *= 0.5
        else:
            # near a critical point only round-off is left; far from one the flow takes over
            if gn <= newton_from or fallbacks >= 3:
                break
            fallbacks += 1
            tr = flow(config, tol)
            config = tr.final
            if tr.collided:
                return Relaxation(config, float(np.max(np.abs(W.gradient(config)))), False, True, W(config))
            continue
        config = trial
    g = W.gradient(config)
    gn = float(np.max(np.abs(g), initial=0.0))
    lam = np.linalg.eigvalsh(position_hessian(W, config))
    ok = gn <= tol and lam[0] >= -null_rtol * max(float(np.abs(lam).max()), 1e-300)
    return Relaxation(config, gn, bool(ok), False, W(config))
