"""Position-dependent Finsler norms on the flat torus.

Two families are supported:

* ``quadratic``: F(x, y) = sqrt(y . a(x) y), dual F*(x, xi) = sqrt(xi . a(x)^-1 xi).
* ``randers``:   F(x, y) = sqrt(y . a(x) y) + beta(x) . y, with the dual norm
  obtained numerically as the support function of the unit F-ball.

All evaluators broadcast over leading axes: points ``x`` have shape (..., 2),
vectors and covectors shape (..., 2).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvexityViolation, InvalidSpecError, NumericFailure

QUADRATIC = "quadratic"
RANDERS = "randers"

_COARSE_ANGLES = 256
_NEWTON_CAP = 60


def _as_matrix_modes(modes, shape):
    out = []
    for k, amp in modes:
        k = tuple(int(v) for v in k)
        amp = np.asarray(amp, dtype=float).reshape(shape)
        out.append((k, amp))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class FinslerSpec:
    """Metric field a(x) and (for Randers) drift covector beta(x).

    ``a(x) = metric + sum_m A_m cos(2 pi k_m . x / period)`` and likewise for
    ``beta``; the constant part alone gives a translation-invariant norm.
    """

    variant: str = QUADRATIC
    metric: np.ndarray = field(default_factory=lambda: np.eye(2))
    drift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    metric_modes: tuple = ()
    drift_modes: tuple = ()
    period: float = 1.0

    def __post_init__(self):
        if self.variant not in (QUADRATIC, RANDERS):
            raise InvalidSpecError(f"unknown Finsler variant {self.variant!r}", module="tonelli-core")
        a = np.array(self.metric, dtype=float).reshape(2, 2)
        if not np.allclose(a, a.T, rtol=0, atol=1e-14):
            raise InvalidSpecError("metric matrix is not symmetric", module="tonelli-core")
        a.setflags(write=False)
        b = np.array(self.drift, dtype=float).reshape(2)
        b.setflags(write=False)
        object.__setattr__(self, "metric", a)
        object.__setattr__(self, "drift", b)
        object.__setattr__(self, "metric_modes", _as_matrix_modes(self.metric_modes, (2, 2)))
        object.__setattr__(self, "drift_modes", _as_matrix_modes(self.drift_modes, (2,)))
        if self.variant == QUADRATIC and (np.any(b != 0) or self.drift_modes):
            raise InvalidSpecError("quadratic spec cannot carry a drift covector", module="tonelli-core")
        self.validate(np.zeros(2))

    @classmethod
    def quadratic(cls, metric=None, **kw):
        return cls(QUADRATIC, np.eye(2) if metric is None else metric, **kw)

    @classmethod
    def randers(cls, metric=None, drift=(0.0, 0.0), **kw):
        return cls(RANDERS, np.eye(2) if metric is None else metric, drift, **kw)

    @property
    def is_randers(self):
        return self.variant == RANDERS

    @property
    def is_constant(self):
        return not self.metric_modes and not self.drift_modes

    def metric_at(self, x):
        x = np.asarray(x, dtype=float)
        a = np.broadcast_to(self.metric, x.shape[:-1] + (2, 2)).copy()
        for k, amp in self.metric_modes:
            c = np.cos(2 * np.pi * (x @ np.asarray(k, dtype=float)) / self.period)
            a = a + c[..., None, None] * amp
        return a

    def drift_at(self, x):
        x = np.asarray(x, dtype=float)
        b = np.broadcast_to(self.drift, x.shape[:-1] + (2,)).copy()
        for k, amp in self.drift_modes:
            c = np.cos(2 * np.pi * (x @ np.asarray(k, dtype=float)) / self.period)
            b = b + c[..., None] * amp
        return b

    def dual_metric_at(self, x):
        """b(x) = a(x)^-1, the coefficient field of the linear operator."""
        return inv2(self.metric_at(x))

    def violations(self, x):
        """List of human-readable invariant violations at sample points ``x``."""
        out = []
        a = self.metric_at(x)
        lo, _ = sym2_eigvalsh(a)
        if np.any(lo <= 0):
            out.append(f"metric not positive definite (min eigenvalue {float(np.min(lo)):.3g})")
        if self.is_randers and np.all(lo > 0):
            beta = self.drift_at(x)
            nb = np.einsum("...i,...ij,...j->...", beta, inv2(a), beta)
            if np.any(nb >= 1):
                out.append(f"Randers smallness violated (max beta.a^-1.beta = {float(np.max(nb)):.3g})")
        return out

    def validate(self, x):
        v = self.violations(x)
        if v:
            raise InvalidSpecError("; ".join(v), module="tonelli-core")


def inv2(a):
    """Inverse of (..., 2, 2) matrices in closed form."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / det[..., None, None]


def sym2_eigvalsh(m):
    """Ascending eigenvalues of symmetric (..., 2, 2) matrices."""
    p = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    q = 0.5 * (m[..., 0, 0] - m[..., 1, 1])
    r = np.hypot(q, 0.5 * (m[..., 0, 1] + m[..., 1, 0]))
    return p - r, p + r


def _quad(a, v):
    return np.einsum("...i,...ij,...j->...", v, a, v)


def _check_spd(a):
    lo, _ = sym2_eigvalsh(a)
    if np.any(lo <= 0):
        raise InvalidSpecError(
            "metric is not positive definite at the evaluation point",
            module="tonelli-core",
            min_eigenvalue=float(np.min(lo)),
        )


def eval_F(spec, x, y):
    """Finsler norm F(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = spec.metric_at(np.broadcast_to(x, np.broadcast_shapes(x.shape, y.shape)))
    _check_spd(a)
    val = np.sqrt(np.maximum(_quad(a, y), 0.0))
    if spec.is_randers:
        val = val + np.einsum("...i,...i->...", spec.drift_at(x), y)
    return val


def _randers_support(a, beta, xi):
    """Maximise <xi, y> over the unit Randers sphere, vectorised.

    Returns (F*(xi), argmax y) where y lies on {F = 1}; by Danskin's theorem
    the maximiser is the gradient of F* at xi.
    """
    shape = xi.shape[:-1]
    a = np.broadcast_to(a, shape + (2, 2)).reshape(-1, 2, 2)
    beta = np.broadcast_to(beta, shape + (2,)).reshape(-1, 2)
    xi = xi.reshape(-1, 2)
    m = xi.shape[0]
    val = np.zeros(m)
    arg = np.zeros((m, 2))
    live = np.hypot(xi[:, 0], xi[:, 1]) > 0
    if not np.any(live):
        return val.reshape(shape), arg.reshape(shape + (2,))
    a, beta, xi = a[live], beta[live], xi[live]

    th = np.linspace(0.0, 2 * np.pi, _COARSE_ANGLES, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)  # (K, 2)
    s = np.sqrt(np.einsum("ki,mij,kj->mk", e, a, e))
    q = s + beta @ e.T
    f = (xi @ e.T) / q
    theta = th[np.argmax(f, axis=1)]

    dth = 2 * np.pi / _COARSE_ANGLES
    resid = np.full(theta.shape, np.inf)
    for _ in range(_NEWTON_CAP):
        c, sn = np.cos(theta), np.sin(theta)
        e = np.stack([c, sn], axis=-1)
        ep = np.stack([-sn, c], axis=-1)
        p = np.einsum("mi,mi->m", xi, e)
        pp = np.einsum("mi,mi->m", xi, ep)
        Q = _quad(a, e)
        Qp = 2 * np.einsum("mi,mij,mj->m", e, a, ep)
        Qpp = 2 * (_quad(a, ep) - Q)
        s = np.sqrt(Q)
        sp = Qp / (2 * s)
        spp = Qpp / (2 * s) - Qp**2 / (4 * s**3)
        q = s + np.einsum("mi,mi->m", beta, e)
        qp = sp + np.einsum("mi,mi->m", beta, ep)
        qpp = spp - np.einsum("mi,mi->m", beta, e)
        # maximise log p - log q; p > 0 near the maximiser
        g1 = pp / p - qp / q
        g2 = (-p * p - pp * pp) / p**2 - (qpp * q - qp * qp) / q**2
        resid = np.abs(g1)
        if np.all(resid < 1e-14):
            break
        step = np.where(g2 < 0, -g1 / g2, np.sign(g1) * dth)
        theta = theta + np.clip(step, -dth, dth)
    else:
        if np.max(resid) > 1e-10:
            raise NumericFailure(
                "Randers dual norm solve did not converge",
                module="tonelli-core",
                residual=float(np.max(resid)),
            )
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    q = np.sqrt(_quad(a, e)) + np.einsum("mi,mi->m", beta, e)
    y = e / q[:, None]
    val[live] = np.einsum("mi,mi->m", xi, y)
    arg[live] = y
    return val.reshape(shape), arg.reshape(shape + (2,))


def eval_F_dual(spec, x, xi):
    """Dual norm F*(x, xi) = sup over F(x, y) = 1 of <xi, y>."""
    return dual_norm_and_gradient(spec, x, xi)[0]


def dual_norm_and_gradient(spec, x, xi):
    """F*(x, xi) and its xi-gradient (zero at xi = 0)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(x.shape, xi.shape)
    xb = np.broadcast_to(x, shape)
    xi = np.broadcast_to(xi, shape)
    a = spec.metric_at(xb)
    _check_spd(a)
    if not spec.is_randers:
        ainv = inv2(a)
        w = np.einsum("...ij,...j->...i", ainv, xi)
        n = np.sqrt(np.maximum(np.einsum("...i,...i->...", xi, w), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(n[..., None] > 0, w / n[..., None], 0.0)
        return n, g
    spec.validate(xb.reshape(-1, 2))
    return _randers_support(a, spec.drift_at(xb), np.ascontiguousarray(xi))


def busemann_hausdorff_density(spec, x, n_angles=512):
    """Density of the Busemann-Hausdorff measure w.r.t. Lebesgue measure.

    Equal to pi / area{y : F(x, y) < 1}; the area is integrated in polar
    form, which the trapezoid rule handles spectrally for smooth F.
    Reduces to sqrt(det a(x)) for the quadratic family.
    """
    x = np.asarray(x, dtype=float)
    a = spec.metric_at(x)
    if not spec.is_randers:
        return np.sqrt(a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0])
    th = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    Fe = np.sqrt(np.einsum("ki,...ij,kj->...k", e, a, e)) + spec.drift_at(x) @ e.T
    area = 0.5 * np.mean(1.0 / Fe**2, axis=-1) * 2 * np.pi
    return np.pi / area
