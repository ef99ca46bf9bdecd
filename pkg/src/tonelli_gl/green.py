"""Green kernel of f -> div(b grad f) on the torus lattice, b = a^-1.

Discrete operator:  L f = div_back(b D_+ f)  with D_+ the forward link
differences at a node and b(x_n) mixing the two links leaving n.  For each
source node y the kernel solves

    L G(., y) = e_y / h^2 - 1 / |M|,      sum_x G(x, y) h^2 = 0,

so G ~ (1 / (2 pi sqrt(det b))) ln|b^{-1/2}(x - y)| near the diagonal.  The
cell area h^2 is used for all quadratures here: it is the measure in which L
is self-adjoint, which keeps G symmetric when sqrt(det a) varies.

Constant b is inverted spectrally with the exact lattice symbol; varying b
uses a sparse LU factorisation of L (one pinned node) and solves columns on
demand.  Off-grid values use the trigonometric interpolant for constant b
(smooth in both arguments) and bilinear interpolation otherwise.
"""

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .control_field import ControlField
from .errors import InvalidSpecError, NumericFailure, SingularConfiguration
from .finsler import FinslerSpec, inv2
from .torus import TorusGrid, VortexConfig, wrap_delta

SOLVE_TOL = 1e-10
ROBIN_OFFSETS = (2, 4, 8)


# -- trigonometric interpolation ---------------------------------------------


class TrigInterpolant:
    """Band-limited interpolant of periodic node samples (N, N), with gradient."""

    def __init__(self, values, side):
        values = np.asarray(values, dtype=float)
        self.n = values.shape[0]
        self.side = float(side)
        self.coef = np.fft.fft2(values) / self.n**2
        self.freq = np.rint(np.fft.fftfreq(self.n) * self.n)
        self._nyq = self.n // 2

    def _basis(self, t, deriv=False):
        w = 2 * np.pi / self.side
        arg = w * np.multiply.outer(t, self.freq)
        e = np.exp(1j * arg)
        # the Nyquist column must stay real: cos instead of exp
        e[..., self._nyq] = np.cos(arg[..., self._nyq])
        if not deriv:
            return e
        d = 1j * w * self.freq * e
        d[..., self._nyq] = -w * self.freq[self._nyq] * np.sin(arg[..., self._nyq])
        return d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e1 = self._basis(x[..., 0])
        e2 = self._basis(x[..., 1])
        return np.real(np.einsum("...k,kl,...l->...", e1, self.coef, e2))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        e1 = self._basis(x[..., 0])
        e2 = self._basis(x[..., 1])
        d1 = self._basis(x[..., 0], deriv=True)
        d2 = self._basis(x[..., 1], deriv=True)
        gx = np.real(np.einsum("...k,kl,...l->...", d1, self.coef, e2))
        gy = np.real(np.einsum("...k,kl,...l->...", e1, self.coef, d2))
        return np.stack([gx, gy], axis=-1)


def bilinear(values, side, x):
    """Periodic bilinear interpolation of node samples at points x (..., 2)."""
    n = values.shape[0]
    h = side / n
    s = np.asarray(x, dtype=float) / h
    i0 = np.floor(s).astype(int)
    f = s - i0
    i0 %= n
    i1 = (i0 + 1) % n
    fx, fy = f[..., 0], f[..., 1]
    return (
        (1 - fx) * (1 - fy) * values[i0[..., 0], i0[..., 1]]
        + fx * (1 - fy) * values[i1[..., 0], i0[..., 1]]
        + (1 - fx) * fy * values[i0[..., 0], i1[..., 1]]
        + fx * fy * values[i1[..., 0], i1[..., 1]]
    )


def _bilinear_stencil(side, n, x):
    """Corner node indices and weights of the bilinear stencil at one point."""
    h = side / n
    s = np.asarray(x, dtype=float) / h
    i0 = np.floor(s).astype(int)
    fx, fy = s - i0
    out = []
    for di, dj, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        out.append((((i0[0] + di) % n, (i0[1] + dj) % n), wt))
    return out


# -- operator ----------------------------------------------------------------


def coefficient_field(grid, spec):
    if spec.is_randers:
        raise InvalidSpecError(
            "Randers norms give a nonlinear operator with no Green kernel; use a quadratic spec",
            module="green-kernel",
        )
    b = spec.dual_metric_at(grid.nodes())
    lo = 0.5 * (b[..., 0, 0] + b[..., 1, 1]) - np.hypot(0.5 * (b[..., 0, 0] - b[..., 1, 1]), b[..., 0, 1])
    if np.any(lo <= 0):
        raise InvalidSpecError("coefficient field b is not positive definite", module="green-kernel")
    return b


def lattice_symbol(grid, b):
    """Eigenvalues (<= 0) of L for constant b, in FFT order."""
    n, h = grid.n, grid.h
    k1, k2 = grid.wavenumbers()
    v1 = np.exp(2j * np.pi * k1 / n) - 1
    v2 = np.exp(2j * np.pi * k2 / n) - 1
    q = b[0, 0] * np.abs(v1) ** 2 + b[1, 1] * np.abs(v2) ** 2 + 2 * b[0, 1] * np.real(np.conj(v1) * v2)
    return -q / h**2


def apply_operator(f, b, h):
    """L f for node fields f (N, N) and coefficients b (N, N, 2, 2)."""
    dx = (np.roll(f, -1, axis=0) - f) / h
    dy = (np.roll(f, -1, axis=1) - f) / h
    fx = b[..., 0, 0] * dx + b[..., 0, 1] * dy
    fy = b[..., 1, 0] * dx + b[..., 1, 1] * dy
    return (fx - np.roll(fx, 1, axis=0) + fy - np.roll(fy, 1, axis=1)) / h


def sparse_operator(grid, b):
    n, h = grid.n, grid.h
    m = n * n
    idx = np.arange(m).reshape(n, n)
    ex = np.roll(idx, -1, axis=0).ravel()
    ey = np.roll(idx, -1, axis=1).ravel()
    r = idx.ravel()
    ones = np.ones(m)
    Dx = sp.csr_matrix((np.r_[ones, -ones], (np.r_[r, r], np.r_[ex, r])), shape=(m, m)) / h
    Dy = sp.csr_matrix((np.r_[ones, -ones], (np.r_[r, r], np.r_[ey, r])), shape=(m, m)) / h
    B = [[sp.diags(b[..., i, j].ravel()) for j in range(2)] for i in range(2)]
    D = sp.vstack([Dx, Dy])
    return -(D.T @ sp.bmat(B) @ D).tocsc()


def centered_divergence(u_nodes, h):
    ux, uy = u_nodes[..., 0], u_nodes[..., 1]
    return (np.roll(ux, -1, axis=0) - np.roll(ux, 1, axis=0) + np.roll(uy, -1, axis=1) - np.roll(uy, 1, axis=1)) / (
        2 * h
    )


def singular_kernel(b, z):
    """K_b(z) = ln|b^{-1/2} z| / (2 pi sqrt(det b)), b frozen (2, 2)."""
    det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    q = np.einsum("...i,ij,...j->...", z, inv2(b), z)
    return 0.5 * np.log(q) / (2 * np.pi * np.sqrt(det))


def _cutoff(r, side, inner=0.1, outer=0.4):
    """C-infinity cutoff equal to 1 for r <= inner*side and 0 beyond outer*side; value and d/dr."""
    r0, r1 = inner * side, outer * side
    s = np.clip((np.asarray(r, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        fa = np.where(s < 1, np.exp(-1 / np.where(s < 1, 1 - s, 1)), 0.0)
        fb = np.where(s > 0, np.exp(-1 / np.where(s > 0, s, 1)), 0.0)
        chi = fa / (fa + fb)
        dfa = np.where(s < 1, fa / np.where(s < 1, (1 - s) ** 2, 1), 0.0) * -1
        dfb = np.where(s > 0, fb / np.where(s > 0, s**2, 1), 0.0)
        dchi = (dfa * fb - fa * dfb) / (fa + fb) ** 2 / (r1 - r0)
    return chi, dchi


# -- table -------------------------------------------------------------------


def field_hash(grid, b):
    hsh = hashlib.sha256()
    hsh.update(np.array([grid.side, grid.n], dtype=float).tobytes())
    hsh.update(np.ascontiguousarray(b, dtype=float).tobytes())
    return hsh.hexdigest()


@dataclass(eq=False)
class GreenTable:
    grid: TorusGrid
    b: np.ndarray
    constant: bool
    kernel: np.ndarray = None  # G(x_n, 0) by offset, constant b only
    robin_nodes: np.ndarray = None
    robin_error: float = 0.0
    robin_offsets: tuple = ROBIN_OFFSETS
    _columns: dict = field(default_factory=dict, repr=False)
    _lu: object = field(default=None, repr=False)
    _interp: object = field(default=None, repr=False)

    @property
    def hash(self):
        return field_hash(self.grid, self.b)

    # columns ---------------------------------------------------------------

    def column(self, node):
        """G(., y) on the grid for source node y = (i, j)."""
        i, j = int(node[0]) % self.grid.n, int(node[1]) % self.grid.n
        if self.constant:
            return np.roll(np.roll(self.kernel, i, axis=0), j, axis=1)
        key = (i, j)
        if key not in self._columns:
            self._columns[key] = self._solve_column(i, j)
        return self._columns[key]

    def _factor(self):
        if self._lu is None:
            A = sparse_operator(self.grid, self.b).tolil()
            A[0, :] = 0
            A[0, 0] = 1.0
            self._lu = spla.splu(A.tocsc())
        return self._lu

    def solve(self, rhs):
        """Mean-zero solution of L f = rhs (rhs is projected to mean zero)."""
        g = self.grid
        rhs = rhs - rhs.mean()
        if self.constant:
            sym = lattice_symbol(g, self.b[0, 0])
            sym[0, 0] = 1.0
            fh = np.fft.fft2(rhs) / sym
            fh[0, 0] = 0.0
            f = np.real(np.fft.ifft2(fh))
        else:
            lu = self._factor()
            r = rhs.ravel().copy()
            r[0] = 0.0
            f = lu.solve(r).reshape(rhs.shape)
            f -= f.mean()
        res = np.max(np.abs(apply_operator(f, self.b, g.h) - rhs))
        scale = max(1.0, np.max(np.abs(rhs)))
        if res > SOLVE_TOL * scale:
            raise NumericFailure("Green solve residual above tolerance", module="green-kernel", residual=float(res))
        return f

    def _solve_column(self, i, j):
        g = self.grid
        rhs = np.full((g.n, g.n), -1.0 / g.area)
        rhs[i, j] += 1.0 / g.h**2
        return self.solve(rhs)

    # off-grid evaluation -----------------------------------------------------

    def __call__(self, x, y):
        """G(x, y) for points x, y (..., 2)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.constant:
            return self._split_kernel(x - y)[0]
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        xb = np.broadcast_to(x, shape + (2,)).reshape(-1, 2)
        yb = np.broadcast_to(y, shape + (2,)).reshape(-1, 2)
        out = np.empty(xb.shape[0])
        for k in range(xb.shape[0]):
            out[k] = sum(
                wt * bilinear(self.column(node), self.grid.side, xb[k]) for node, wt in _bilinear_stencil(self.grid.side, self.grid.n, yb[k])
            )
        return out.reshape(shape)

    def grad_x(self, x, y):
        """Gradient of G(x, y) in its first argument (constant b: exact for the interpolant)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.constant:
            return self._split_kernel(x - y, grad=True)[1]
        h = self.grid.h
        out = []
        for e in np.eye(2):
            out.append((self(x + h * e, y) - self(x - h * e, y)) / (2 * h))
        return np.stack(out, axis=-1)

    def _kernel_interp(self):
        # trig interpolation of the log core rings for a few h around the
        # source, so only the smooth remainder G - chi K_b is interpolated
        if self._interp is None:
            g = self.grid
            z = wrap_delta(g.nodes() - g.nodes()[0, 0], g.side)
            z[0, 0] = g.h  # placeholder, overwritten below
            chi, _ = _cutoff(np.hypot(z[..., 0], z[..., 1]), g.side)
            rem = self.kernel - chi * singular_kernel(self.b[0, 0], z)
            rem[0, 0] = self.robin_nodes[0, 0]
            self._interp = TrigInterpolant(rem, g.side)
        return self._interp

    def _split_kernel(self, d, grad=False):
        """G(d) = chi K_b(d) + R(d) on wrapped offsets d; value and optionally gradient."""
        g = self.grid
        b = self.b[0, 0]
        z = wrap_delta(np.asarray(d, dtype=float), g.side)
        r = np.hypot(z[..., 0], z[..., 1])
        at0 = r == 0
        # zero offset: keep the lattice value (the diagonal of the table), gradient 0 by symmetry
        z = np.where(at0[..., None], g.h, z)
        r = np.where(at0, g.h, r)
        interp = self._kernel_interp()
        chi, dchi = _cutoff(r, g.side)
        k = singular_kernel(b, z)
        val = np.where(at0, self.kernel[0, 0], chi * k + interp(z % g.side))
        if not grad:
            return val, None
        det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
        q = np.einsum("...i,ij,...j->...", z, inv2(b), z)
        dk = (z @ inv2(b)) / (q * 2 * np.pi * np.sqrt(det))[..., None]
        gr = chi[..., None] * dk + (dchi * k / r)[..., None] * z + interp.gradient(z % g.side)
        return val, np.where(at0[..., None], 0.0, gr)

    def robin(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.full(x.shape[:-1], float(self.robin_nodes[0, 0]))
        vals = np.zeros(x.shape[:-1]).reshape(-1)
        for k, pt in enumerate(x.reshape(-1, 2)):
            vals[k] = sum(wt * self.robin_at_node(node) for node, wt in _bilinear_stencil(self.grid.side, self.grid.n, pt))
        return vals.reshape(x.shape[:-1])

    def robin_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.zeros(x.shape)
        h = self.grid.h
        return np.stack([(self.robin(x + h * e) - self.robin(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)

    def robin_at_node(self, node):
        i, j = int(node[0]) % self.grid.n, int(node[1]) % self.grid.n
        if self.robin_nodes is None:
            self.robin_nodes = np.full((self.grid.n, self.grid.n), np.nan)
        if np.isnan(self.robin_nodes[i, j]):
            s, err = _richardson_robin(self.column((i, j)), self.b[i, j], (i, j), self.grid, self.robin_offsets)
            self.robin_nodes[i, j] = s
            self.robin_error = max(self.robin_error, err)
        return self.robin_nodes[i, j]

    # cache -------------------------------------------------------------------

    def save(self, path):
        data = dict(side=self.grid.side, n=self.grid.n, b=self.b, constant=self.constant, hash=self.hash)
        if self.constant:
            data.update(kernel=self.kernel, robin=self.robin_nodes, robin_error=self.robin_error)
        else:
            keys = np.array(sorted(self._columns), dtype=int).reshape(-1, 2)
            data.update(keys=keys, columns=np.array([self._columns[tuple(k)] for k in keys]).reshape(-1, self.grid.n, self.grid.n))
            data.update(robin=self.robin_nodes if self.robin_nodes is not None else np.full((self.grid.n,) * 2, np.nan))
        np.savez_compressed(path, **data)

    @classmethod
    def load(cls, path, expected_hash=None):
        with np.load(path, allow_pickle=False) as z:
            grid = TorusGrid(float(z["side"]), int(z["n"]))
            if expected_hash is not None and str(z["hash"]) != expected_hash:
                return None
            b = z["b"]
            if bool(z["constant"]):
                return cls(grid, b, True, kernel=z["kernel"], robin_nodes=z["robin"], robin_error=float(z["robin_error"]))
            t = cls(grid, b, False, robin_nodes=z["robin"])
            for k, col in zip(z["keys"], z["columns"]):
                t._columns[tuple(int(v) for v in k)] = col
            return t


def _axis_fit(column, b, node, grid, offsets):
    """Three-offset fit S + A (h/r)^2 + B r^2 along each axis; returns both S."""
    i, j = node
    n, h = grid.n, grid.h
    ks = np.asarray(offsets, dtype=float)
    M = np.column_stack([np.ones_like(ks), 1 / ks**2, (ks * h) ** 2])
    out = []
    for e in ((1, 0), (0, 1)):
        f = [
            column[(i + e[0] * k) % n, (j + e[1] * k) % n] - singular_kernel(b, np.array(e, dtype=float) * k * h)
            for k in offsets
        ]
        out.append(np.linalg.solve(M, np.array(f))[0])
    return out


def _richardson_robin(column, b, node, grid, offsets=ROBIN_OFFSETS):
    """Extrapolate G(x, x + r e) - K_b(r e) to r -> 0 along both lattice axes.

    The fit absorbs the (h/r)^2 lattice anisotropy and the smooth r^2 part;
    the leftover bias decays like (h/r_min)^4, so comparing against the fit
    on halved offsets gives the error estimate.
    """
    est = _axis_fit(column, b, node, grid, offsets)
    s = float(np.mean(est))
    err = abs(est[0] - est[1])
    if min(offsets) >= 2 and all(k % 2 == 0 for k in offsets):
        coarse = float(np.mean(_axis_fit(column, b, node, grid, tuple(k // 2 for k in offsets))))
        err = max(err, abs(s - coarse) / 15.0)
    return s, float(err)


def solve_green_base(grid, spec, robin_warn=1e-3, robin_offsets=ROBIN_OFFSETS):
    """Assemble the base Green table for the quadratic spec on ``grid``.

    ``robin_offsets`` are the diagonal offsets (in units of h) used to
    extrapolate the regular part.
    """
    b = coefficient_field(grid, spec)
    if spec.is_constant:
        bc = b[0, 0]
        sym = lattice_symbol(grid, bc)
        sym[0, 0] = 1.0
        ghat = np.full((grid.n, grid.n), 1.0 / grid.h**2, dtype=complex)
        ghat[0, 0] = 0.0
        kernel = np.real(np.fft.ifft2(ghat / sym))
        table = GreenTable(grid, b, True, kernel=kernel)
        res = np.max(np.abs(apply_operator(kernel, b, grid.h) - (_delta(grid) - 1.0 / grid.area)))
        if res > SOLVE_TOL * grid.n**2:
            raise NumericFailure("spectral Green solve inconsistent", module="green-kernel", residual=float(res))
        s, err = _richardson_robin(kernel, bc, (0, 0), grid, robin_offsets)
        table.robin_nodes = np.full((grid.n, grid.n), s)
        table.robin_error = err
    else:
        table = GreenTable(grid, b, False, robin_offsets=tuple(robin_offsets))
    if table.robin_error > robin_warn:
        warnings.warn(f"Robin extrapolation error estimate {table.robin_error:.2e}", stacklevel=2)
    return table


def _delta(grid):
    d = np.zeros((grid.n, grid.n))
    d[0, 0] = 1.0 / grid.h**2
    return d


def robin_part(table, x):
    return table.robin(x)


# -- control correction and self-potential -------------------------------------


def _control_nodes(u, grid):
    if u is None:
        return np.zeros((grid.n, grid.n, 2))
    if isinstance(u, ControlField):
        return u.sample(grid)
    arr = np.asarray(u, dtype=float)
    return np.broadcast_to(arr, (grid.n, grid.n, 2)).copy()


class ControlCorrection:
    """h_u on the grid (mean zero) with smooth off-grid evaluation."""

    def __init__(self, table, values):
        self.table = table
        self.values = values
        self._interp = TrigInterpolant(values, table.grid.side)

    def __call__(self, x):
        if self.table.constant:
            return self._interp(x)
        return bilinear(self.values, self.table.grid.side, x)

    def gradient(self, x):
        if self.table.constant:
            return self._interp.gradient(x)
        h = self.table.grid.h
        x = np.asarray(x, dtype=float)
        return np.stack([(self(x + h * e) - self(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)


def control_correction(table, u):
    """Solve L h = -div u (centred divergence), mean-zero h."""
    g = table.grid
    un = _control_nodes(u, g)
    if not np.any(un):
        return ControlCorrection(table, np.zeros((g.n, g.n)))
    return ControlCorrection(table, table.solve(-centered_divergence(un, g.h)))


def pairing_integral_nodes(table, u):
    """I(x) = sum_y <u(y), grad_y G(x, y)> h^2 at every node x (centred grad_y).

    Constant b: a periodic convolution done by FFT.  Varying b: column by
    column (G symmetric, so grad_y G(x, y) is read from the column of x).
    """
    g = table.grid
    un = _control_nodes(u, g)
    if table.constant:
        k = table.kernel
        # grad_y G(x - y) = -(grad K)(x - y); centred differences of the offset kernel
        kx = (np.roll(k, -1, axis=0) - np.roll(k, 1, axis=0)) / (2 * g.h)
        ky = (np.roll(k, -1, axis=1) - np.roll(k, 1, axis=1)) / (2 * g.h)
        conv = lambda a, c: np.real(np.fft.ifft2(np.fft.fft2(a) * np.fft.fft2(c)))
        return -(conv(kx, un[..., 0]) + conv(ky, un[..., 1])) * g.h**2
    out = np.zeros((g.n, g.n))
    for i in range(g.n):
        for j in range(g.n):
            col = table.column((i, j))
            gx = (np.roll(col, -1, axis=0) - np.roll(col, 1, axis=0)) / (2 * g.h)
            gy = (np.roll(col, -1, axis=1) - np.roll(col, 1, axis=1)) / (2 * g.h)
            out[i, j] = np.sum(un[..., 0] * gx + un[..., 1] * gy) * g.h**2
    return out


def phi_u_potential(table, u, x, correction=None):
    """Phi_u(x) = 1/2 (S_b(x) + h_u(x)) + sum_y <u(y), grad_y G_u(x, y)> h^2.

    grad_y G_u = grad_y G_b because h_u(x) does not depend on y.  The
    pairing integral is evaluated on the grid and interpolated like h_u.
    """
    x = np.asarray(x, dtype=float)
    hc = correction if correction is not None else control_correction(table, u)
    integral = ControlCorrection(table, pairing_integral_nodes(table, u))
    return 0.5 * (table.robin(x) + hc(x)) + integral(x)


@dataclass(frozen=True)
class RenormEnergyReport:
    pair_term: float
    self_term: float
    phi: np.ndarray
    pair_matrix: np.ndarray

    @property
    def total(self):
        return self.pair_term + self.self_term

    @property
    def pair_symmetrized(self):
        """Same double sum with G_u replaced by its symmetric part."""
        return 0.5 * float(np.sum(0.5 * (self.pair_matrix + self.pair_matrix.T)))


class RenormalizedEnergy:
    """W_u for one (table, u); reusable across configurations.

    W_u = 1/2 sum_{i != j} d_i d_j G_u(a_i, a_j) + sum_i d_i Phi_u(a_i),
    G_u(x, y) = G_b(x, y) + h_u(x).
    """

    def __init__(self, table, u=None):
        self.table = table
        self.u = u
        self.h = control_correction(table, u)
        self.integral = ControlCorrection(table, pairing_integral_nodes(table, u))

    def phi(self, x):
        return 0.5 * (self.table.robin(x) + self.h(x)) + self.integral(x)

    def phi_gradient(self, x):
        return 0.5 * (self.table.robin_gradient(x) + self.h.gradient(x)) + self.integral.gradient(x)

    def report(self, config):
        pos = np.asarray(config.positions, dtype=float)
        d = np.asarray(config.degrees, dtype=float)
        m = len(d)
        if m > 1 and config.min_separation() <= 0:
            raise SingularConfiguration("coincident vortices", module="green-kernel")
        pm = np.zeros((m, m))
        if m > 1:
            iu, ju = np.nonzero(~np.eye(m, dtype=bool))
            gb = self.table(pos[iu], pos[ju])
            pm[iu, ju] = d[iu] * d[ju] * (gb + self.h(pos[iu]))
        phi = self.phi(pos) if m else np.zeros(0)
        pair = 0.5 * float(np.sum(pm))
        self_term = float(np.sum(d * phi))
        return RenormEnergyReport(pair, self_term, np.asarray(phi), pm)

    def __call__(self, config):
        return self.report(config).total

    def gradient(self, config):
        """d W / d a_k for every vortex, shape (M, 2)."""
        pos = np.asarray(config.positions, dtype=float)
        d = np.asarray(config.degrees, dtype=float)
        m = len(d)
        out = np.zeros((m, 2))
        if m == 0:
            return out
        if m > 1 and config.min_separation() <= 0:
            raise SingularConfiguration("coincident vortices", module="green-kernel")
        dh = self.h.gradient(pos)
        for k in range(m):
            others = [j for j in range(m) if j != k]
            if others:
                gx = self.table.grad_x(pos[k][None, :], pos[others])
                # G_b(a_j, a_k) term: gradient in the second argument
                gy = self._grad_second(pos[others], pos[k])
                out[k] += 0.5 * np.sum((d[k] * d[others])[:, None] * (gx + gy), axis=0)
                out[k] += 0.5 * d[k] * np.sum(d[others]) * dh[k]
        out += d[:, None] * self.phi_gradient(pos)
        return out

    def _grad_second(self, x, y):
        if self.table.constant:
            return -self.table.grad_x(x, y)
        h = self.table.grid.h
        return np.stack(
            [(self.table(x, y + h * e) - self.table(x, y - h * e)) / (2 * h) for e in np.eye(2)], axis=-1
        )


def renormalized_energy(table, u, config):
    return RenormalizedEnergy(table, u).report(config)
