"""Control-translated Tonelli Lagrangian and its convex dual.

    phi_u(x, y)    = 1/2 F(x, y - u(x))^2
    phi_u*(x, xi)  = 1/2 F*(x, xi)^2 + <xi, u(x)>

The closed-form conjugate is cross-checked by :func:`phi_u_conj_bruteforce`,
a grid supremum that never calls the dual norm.
"""

import numpy as np

from .control_field import ControlField
from .errors import BoxTooSmall, ConvexityViolation, InvalidSpecError, NumericFailure
from .finsler import dual_norm_and_gradient, eval_F, inv2, sym2_eigvalsh

HESSIAN_STEP = 1e-5


def control_at(u, x):
    """Evaluate a control given as a ControlField, a constant vector or None."""
    x = np.asarray(x, dtype=float)
    if u is None:
        return np.zeros(x.shape)
    if isinstance(u, ControlField):
        return u(x)
    return np.broadcast_to(np.asarray(u, dtype=float), x.shape).copy()


def phi_u(spec, u, x, y):
    y = np.asarray(y, dtype=float)
    return 0.5 * eval_F(spec, x, y - control_at(u, np.broadcast_to(x, y.shape))) ** 2


def phi_u_conj(spec, u, x, xi):
    xi = np.asarray(xi, dtype=float)
    fs = dual_norm_and_gradient(spec, x, xi)[0]
    uu = control_at(u, np.broadcast_to(np.asarray(x, dtype=float), xi.shape))
    return 0.5 * fs**2 + np.einsum("...i,...i->...", xi, uu)


def phi_u_conj_bruteforce(spec, u, x, xi, search_box=8.0, step=1e-3, coarse_step=0.05):
    """sup_y <xi, y> - phi_u(x, y) over a square grid of half-width ``search_box``.

    The whole box is scanned at ``coarse_step``; windows around the running
    maximiser are then rescanned at successively finer spacing down to
    ``step`` (the objective is concave, so the window cannot miss the peak).
    Raises BoxTooSmall if the coarse maximiser sits on the box boundary.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)

    def objective(ys):
        return ys @ xi - phi_u(spec, u, x, ys)

    g = np.arange(-search_box, search_box + 0.5 * coarse_step, coarse_step)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    v = objective(Y)
    j = np.unravel_index(np.argmax(v), v.shape)
    best_val, best = v[j], Y[j]
    if min(j) == 0 or max(j) == g.size - 1:
        raise BoxTooSmall("brute-force maximiser touches the search box", module="tonelli-core", box=search_box)

    h = coarse_step
    while h > step * (1 + 1e-9):
        hn = max(h / 10.0, step)
        w = np.arange(-3 * h, 3 * h + 0.5 * hn, hn)
        for _ in range(50):
            Y = np.stack(np.meshgrid(best[0] + w, best[1] + w, indexing="ij"), axis=-1)
            v = objective(Y)
            j = np.unravel_index(np.argmax(v), v.shape)
            best_val, best = v[j], Y[j]
            if 0 < min(j) and max(j) < w.size - 1:
                break
        else:
            raise NumericFailure("brute-force refinement did not settle", module="tonelli-core", residual=hn)
        h = hn
    return float(best_val)


def _half_sq_grad(spec, x, z):
    """d/dz of 1/2 F(x, z)^2 and its Hessian."""
    a = spec.metric_at(x)
    az = np.einsum("...ij,...j->...i", a, z)
    s = np.sqrt(np.maximum(np.einsum("...i,...i->...", z, az), 0.0))
    if not spec.is_randers:
        return az, a
    beta = spec.drift_at(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        dF = az / s[..., None] + beta
        F = s + np.einsum("...i,...i->...", beta, z)
        hF = a / s[..., None, None] - np.einsum("...i,...j->...ij", az, az) / s[..., None, None] ** 3
    grad = F[..., None] * dF
    hess = np.einsum("...i,...j->...ij", dF, dF) + F[..., None, None] * hF
    zero = s == 0
    grad = np.where(zero[..., None], 0.0, grad)
    return grad, hess


def legendre_forward(spec, u, x, y):
    """Fibre derivative d_y phi_u(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = y - control_at(u, np.broadcast_to(x, y.shape))
    return _half_sq_grad(spec, np.broadcast_to(x, y.shape), z)[0]


def legendre_inverse(spec, u, x, xi, tol=1e-13, max_iter=30):
    """d_xi phi_u*(x, xi) = L_x^{-1}(xi) + u(x).

    Randers: the Danskin gradient F*(xi) * argmax seeds a Newton solve of
    d_z(1/2 F^2)(z) = xi.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xb = np.broadcast_to(x, xi.shape)
    uu = control_at(u, xb)
    if not spec.is_randers:
        return np.einsum("...ij,...j->...i", inv2(spec.metric_at(xb)), xi) + uu
    fs, g = dual_norm_and_gradient(spec, xb, xi)
    z = fs[..., None] * g
    scale = np.maximum(np.linalg.norm(xi, axis=-1), 1e-300)
    live = np.linalg.norm(xi, axis=-1) > 0
    for _ in range(max_iter):
        grad, hess = _half_sq_grad(spec, xb, z)
        r = np.where(live[..., None], grad - xi, 0.0)
        err = np.max(np.linalg.norm(r, axis=-1) / scale) if r.size else 0.0
        if err <= tol:
            return z + uu
        hess = np.where(live[..., None, None], hess, np.eye(2))
        z = z - np.einsum("...ij,...j->...i", inv2(hess), r)
    raise NumericFailure("Randers Legendre inverse did not converge", module="tonelli-core", residual=float(err))


def hessian_dual(spec, x, xi):
    """d^2/dxi^2 of 1/2 F*(x, xi)^2; independent of any control by construction.

    Quadratic: the inverse metric.  Randers: central differences (step 1e-5)
    of the analytic gradient F* * dF*; rejected at xi = 0 where the squared
    Randers norm has no Hessian.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if not spec.is_randers:
        h = inv2(spec.metric_at(np.broadcast_to(x, xi.shape)))
    else:
        if np.any(np.linalg.norm(xi, axis=-1) == 0):
            raise InvalidSpecError("Randers dual Hessian undefined at xi = 0", module="tonelli-core")
        h = numeric_hessian_dual(spec, x, xi)
    lo, _ = sym2_eigvalsh(h)
    if np.any(lo <= 0):
        raise ConvexityViolation(
            "dual Hessian is not positive definite", module="tonelli-core", min_eigenvalue=float(np.min(lo))
        )
    return h


def dual_half_sq_gradient(spec, x, xi):
    fs, g = dual_norm_and_gradient(spec, x, xi)
    return fs[..., None] * g


def numeric_hessian_dual(spec, x, xi, step=HESSIAN_STEP, u=None):
    """Central-difference Hessian of phi_u*(x, .) from its gradient.

    With ``u`` given the control term is included, so the result should not
    depend on it beyond rounding.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xb = np.broadcast_to(x, xi.shape)
    uu = control_at(u, xb) if u is not None else 0.0
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        gp = dual_half_sq_gradient(spec, xb, xi + e) + uu
        gm = dual_half_sq_gradient(spec, xb, xi - e) + uu
        cols.append((gp - gm) / (2 * step))
    h = np.stack(cols, axis=-1)
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def ellipticity_constant(spec, points, covectors, controls=(), audit_tol=1e-6):
    """Minimum eigenvalue of the dual Hessian over the sample set.

    For every control in ``controls`` the Hessian of the full phi_u* (control
    term included) is rebuilt by finite differences and compared with the
    control-free one; a mismatch beyond rounding raises.
    """
    h = hessian_dual(spec, points, covectors)
    lo, _ = sym2_eigvalsh(h)
    c = float(np.min(lo))
    if controls:
        ref = numeric_hessian_dual(spec, points, covectors)
        for u in controls:
            hu = numeric_hessian_dual(spec, points, covectors, u=u)
            scale = 1.0 + np.max(np.abs(control_at(u, np.broadcast_to(points, np.shape(covectors)))))
            if np.max(np.abs(hu - ref)) > audit_tol * scale:
                raise ConvexityViolation(
                    "dual Hessian changed under a control translation",
                    module="tonelli-core",
                    deviation=float(np.max(np.abs(hu - ref))),
                )
    return c
