"""Lattice-gauge discretisation on the periodic N x N grid over [0, L)^2.

Layout (all arrays indexed ``[i, j]`` with i along x, j along y):

* ``psi[i, j]``  order parameter at node (i h, j h)
* ``ax[i, j]``   line integral of A along the link (i, j) -> (i+1, j)
* ``ay[i, j]``   line integral of A along the link (i, j) -> (i, j+1)
* plaquette ``[i, j]`` has lower-left corner at node (i, j)
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigRejected, InvalidSpecError, SingularConfiguration


def wrap_delta(d, side):
    """Shortest periodic displacement, componentwise in (-L/2, L/2]."""
    return d - side * np.round(d / side)


@dataclass(frozen=True)
class TorusGrid:
    side: float
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n % 2:
            raise InvalidSpecError("grid resolution must be even and at least 16", module="torus-fields")
        if not self.side > 0:
            raise InvalidSpecError("torus side must be positive", module="torus-fields")

    @property
    def h(self):
        return self.side / self.n

    @property
    def area(self):
        return self.side**2

    def nodes(self):
        g = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)

    def plaquette_centers(self):
        return self.nodes() + 0.5 * self.h

    def wavenumbers(self):
        """Integer wavenumbers in FFT order, as an (N, N) pair."""
        f = np.rint(np.fft.fftfreq(self.n) * self.n)
        return np.meshgrid(f, f, indexing="ij")

    def lattice_symbol(self):
        """Eigenvalues (<= 0) of the 5-point Laplacian, lattice units (no 1/h^2)."""
        k1, k2 = self.wavenumbers()
        return -4 * (np.sin(np.pi * k1 / self.n) ** 2 + np.sin(np.pi * k2 / self.n) ** 2)


@dataclass(frozen=True, eq=False)
class FieldState:
    psi: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    grid: TorusGrid

    def __post_init__(self):
        shape = (self.grid.n, self.grid.n)
        for name in ("psi", "ax", "ay"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise InvalidSpecError(f"{name} must have shape {shape}", module="torus-fields")
            if not np.all(np.isfinite(arr)):
                raise InvalidSpecError(f"{name} contains non-finite values", module="torus-fields")

    @classmethod
    def vacuum(cls, grid):
        z = np.zeros((grid.n, grid.n))
        return cls(np.ones((grid.n, grid.n), dtype=complex), z, z.copy(), grid)

    def copy(self, **changes):
        base = dict(psi=self.psi.copy(), ax=self.ax.copy(), ay=self.ay.copy())
        base.update(changes)
        return replace(self, **base)

    def pack(self):
        return np.concatenate([self.psi.real.ravel(), self.psi.imag.ravel(), self.ax.ravel(), self.ay.ravel()])

    def unpack(self, v):
        m = self.grid.n**2
        psi = (v[:m] + 1j * v[m : 2 * m]).reshape(self.psi.shape)
        return FieldState(psi, v[2 * m : 3 * m].reshape(self.ax.shape).copy(), v[3 * m :].reshape(self.ay.shape).copy(), self.grid)


@dataclass(frozen=True, eq=False)
class VortexConfig:
    positions: np.ndarray
    degrees: np.ndarray
    side: float = 1.0
    balanced: bool = field(default=True, repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2) % self.side
        deg = np.array(self.degrees, dtype=int).reshape(-1)
        if pos.shape[0] != deg.shape[0]:
            raise ConfigRejected("one degree per vortex position required", module="torus-fields")
        if self.balanced and deg.sum() != 0:
            raise ConfigRejected(f"vortex degrees sum to {deg.sum()}, expected 0", module="torus-fields")
        if pos.shape[0] > 1 and self.min_separation(pos) <= 0:
            raise SingularConfiguration("coincident vortex positions", module="torus-fields")
        pos.setflags(write=False)
        deg.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "degrees", deg)

    def __len__(self):
        return self.degrees.shape[0]

    def min_separation(self, pos=None):
        pos = self.positions if pos is None else pos
        if pos.shape[0] < 2:
            return np.inf
        d = wrap_delta(pos[:, None, :] - pos[None, :, :], self.side)
        r = np.hypot(d[..., 0], d[..., 1])
        r[np.diag_indices_from(r)] = np.inf
        return float(r.min())

    def moved(self, positions):
        return VortexConfig(positions, self.degrees, self.side, self.balanced)

    def permuted(self, order):
        order = np.asarray(order)
        return VortexConfig(self.positions[order], self.degrees[order], self.side, self.balanced)


# -- link and plaquette operators ------------------------------------------


def _shift(a, axis):
    """a[n + e_axis] with periodic wrap."""
    return np.roll(a, -1, axis=axis)


def covariant_derivative(state):
    """(psi_head e^{-i A} - psi_tail) / h on x-links and y-links."""
    h = state.grid.h
    psi = state.psi
    dx = (_shift(psi, 0) * np.exp(-1j * state.ax) - psi) / h
    dy = (_shift(psi, 1) * np.exp(-1j * state.ay) - psi) / h
    return dx, dy


def plaquette_circulation(ax, ay):
    """Oriented (counter-clockwise) sum of link values around each plaquette."""
    return ax + _shift(ay, 0) - _shift(ax, 1) - ay


def plaquette_curl(state):
    return plaquette_circulation(state.ax, state.ay) / state.grid.h**2


def _transport_products(state):
    psi = state.psi
    qx = np.conj(psi) * np.exp(-1j * state.ax) * _shift(psi, 0)
    qy = np.conj(psi) * np.exp(-1j * state.ay) * _shift(psi, 1)
    return qx, qy


def supercurrent(state):
    """Im(conj(psi_mid) D_A psi) per link, psi_mid the transported endpoint average.

    With psi_mid = (psi_tail + e^{-iA} psi_head) / 2 the expression collapses
    to Im(conj(psi_tail) e^{-iA} psi_head) / h, which is what is evaluated.
    """
    qx, qy = _transport_products(state)
    h = state.grid.h
    return qx.imag / h, qy.imag / h


def gauge_transform(state, chi):
    """psi -> psi e^{i chi}, A_link -> A_link + (chi_head - chi_tail)."""
    chi = np.asarray(chi, dtype=float)
    return FieldState(
        state.psi * np.exp(1j * chi),
        state.ax + _shift(chi, 0) - chi,
        state.ay + _shift(chi, 1) - chi,
        state.grid,
    )


def lattice_gradient(f, h):
    """Forward differences of a node field, one value per x-link and y-link."""
    return (_shift(f, 0) - f) / h, (_shift(f, 1) - f) / h


def lattice_divergence(vx, vy, h):
    """Backward-difference divergence; minus the adjoint of lattice_gradient."""
    return (vx - np.roll(vx, 1, axis=0) + vy - np.roll(vy, 1, axis=1)) / h


def _reduced_link_phases(state):
    qx, qy = _transport_products(state)
    rx = np.where(qx == 0, np.nan, np.angle(qx))
    ry = np.where(qy == 0, np.nan, np.angle(qy))
    return rx, ry


def vorticity(state):
    """Winding number per plaquette (NaN where psi vanishes on a corner).

    Each link contributes the principal value of the gauge-invariant phase
    difference arg(conj(psi_tail) e^{-iA} psi_head); adding the plaquette
    circulation of A makes the sum an integer multiple of 2 pi.
    """
    rx, ry = _reduced_link_phases(state)
    return (plaquette_circulation(rx, ry) + plaquette_circulation(state.ax, state.ay)) / (2 * np.pi)


def winding_numbers(state):
    """Integer vorticity with singular plaquettes set to zero."""
    w = vorticity(state)
    return np.where(np.isnan(w), 0, np.rint(np.nan_to_num(w))).astype(int)


def _clusters(mask):
    """4-connected components of a boolean periodic mask, as index lists."""
    n = mask.shape[0]
    seen = np.zeros_like(mask, dtype=bool)
    out = []
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            i, j = stack.pop()
            comp.append((i, j))
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                q = ((i + di) % n, (j + dj) % n)
                if mask[q] and not seen[q]:
                    seen[q] = True
                    stack.append(q)
        out.append(comp)
    return out


def extract_vortices(state, threshold=0.5):
    """Cluster plaquettes with |winding| >= threshold into integer vortices.

    Singular plaquettes join clusters; their link terms touching a zero of
    psi cancel inside the cluster, so the cluster sum is the winding of its
    boundary loop.  Positions are winding-weighted centroids (unwrapped
    relative to the first plaquette of the cluster).
    """
    grid = state.grid
    rx, ry = _reduced_link_phases(state)
    w = vorticity(state)
    singular = np.isnan(w)
    w0 = (plaquette_circulation(np.nan_to_num(rx), np.nan_to_num(ry)) + plaquette_circulation(state.ax, state.ay)) / (
        2 * np.pi
    )
    mask = singular | (np.abs(np.nan_to_num(w)) >= threshold)
    centers = grid.plaquette_centers()
    pos, deg = [], []
    for comp in _clusters(mask):
        idx = tuple(np.array(comp).T)
        weights = w0[idx]
        d = int(np.rint(weights.sum()))
        if d == 0:
            continue
        c = centers[idx]
        c = c[0] + wrap_delta(c - c[0], grid.side)
        wt = weights / weights.sum()
        pos.append((wt[:, None] * c).sum(axis=0) % grid.side)
        deg.append(d)
    return VortexConfig(np.array(pos).reshape(-1, 2), np.array(deg, dtype=int), grid.side, balanced=False)


def coulomb_project(state):
    """Gauge-equivalent state with zero lattice divergence of A.

    Solves  Lap chi = -div A  spectrally; the mean of each link component
    (the harmonic part) cannot be gauged away and is kept.
    """
    grid = state.grid
    div = state.ax - np.roll(state.ax, 1, axis=0) + state.ay - np.roll(state.ay, 1, axis=1)
    lam = grid.lattice_symbol()
    lam[0, 0] = 1.0
    chat = -np.fft.fft2(div) / lam
    chat[0, 0] = 0.0
    chi = np.real(np.fft.ifft2(chat))
    return gauge_transform(state, chi)


def link_divergence(state):
    """Lattice divergence d*A at every node (link units)."""
    return state.ax - np.roll(state.ax, 1, axis=0) + state.ay - np.roll(state.ay, 1, axis=1)


def seed_vortices(grid, config, eps, flat_connection=False):
    """Order parameter carrying the given vortices, with A = 0.

    Vortices are snapped to plaquette centres.  The link phase increments are
    the flux of grad(phi) across dual edges, where phi solves the dual-lattice
    Poisson problem Lap phi = 2 pi d at vortex plaquettes; a constant per
    direction fixes the torus holonomies to multiples of 2 pi.  The modulus is
    prod_i tanh(r_i / eps).

    With ``flat_connection`` A is set to the constant per direction that
    makes the mean gauge-invariant holonomy vanish.  Quantised holonomies of
    psi alone cannot do this (a pair half a period apart wants +-pi), and
    the reflection-symmetric states used for pinned minimisation need it.
    """
    if config.degrees.sum() != 0:
        raise ConfigRejected("vortex degrees must sum to zero on the torus", module="torus-fields")
    n, h = grid.n, grid.h
    if len(config) > 1 and config.min_separation() <= 4 * eps:
        raise ConfigRejected("vortex separations must exceed 4 eps", module="torus-fields", eps=eps)
    if len(config) == 0:
        return FieldState.vacuum(grid)

    cells = np.floor(np.asarray(config.positions) / h).astype(int) % n
    src = np.zeros((n, n))
    for (i, j), d in zip(cells, config.degrees):
        src[i, j] += 2 * np.pi * d
    lam = grid.lattice_symbol()
    lam[0, 0] = 1.0
    phat = np.fft.fft2(src) / lam
    phat[0, 0] = 0.0
    phi = np.real(np.fft.ifft2(phat))

    # x-link (i,j) sits between plaquettes (i,j-1) and (i,j); y-link between (i-1,j) and (i,j)
    tx = -(phi - np.roll(phi, 1, axis=1))
    ty = phi - np.roll(phi, 1, axis=0)
    hx = tx[:, 0].sum()
    hy = ty[0, :].sum()
    tx -= (hx - 2 * np.pi * np.round(hx / (2 * np.pi))) / n
    ty -= (hy - 2 * np.pi * np.round(hy / (2 * np.pi))) / n

    theta = np.zeros((n, n))
    theta[1:, 0] = np.cumsum(tx[:-1, 0])
    theta[:, 1:] = theta[:, :1] + np.cumsum(ty[:, :-1], axis=1)

    snapped = (cells + 0.5) * h
    mod = np.ones((n, n))
    nodes = grid.nodes()
    for p in snapped:
        r = np.linalg.norm(wrap_delta(nodes - p, grid.side), axis=-1)
        mod *= np.tanh(r / eps)
    ax = np.zeros((n, n))
    ay = np.zeros((n, n))
    if flat_connection:
        ax += tx.sum(axis=0).mean() / n
        ay += ty.sum(axis=1).mean() / n
    return FieldState(mod * np.exp(1j * theta), ax, ay, grid)


def snap_to_plaquettes(config, grid):
    cells = np.floor(np.asarray(config.positions) / grid.h).astype(int) % grid.n
    return config.moved((cells + 0.5) * grid.h)


# -- snapshot I/O ------------------------------------------------------------

SNAPSHOT_COLUMNS = ("i", "j", "psi_re", "psi_im", "ax", "ay")


def save_state(path, state):
    """Text dump: '# L= N=' header, then one row per node in SNAPSHOT_COLUMNS order."""
    g = state.grid
    i, j = np.meshgrid(np.arange(g.n), np.arange(g.n), indexing="ij")
    rows = np.column_stack(
        [i.ravel(), j.ravel(), state.psi.real.ravel(), state.psi.imag.ravel(), state.ax.ravel(), state.ay.ravel()]
    )
    header = f"L={g.side!r} N={g.n}\n" + " ".join(SNAPSHOT_COLUMNS)
    np.savetxt(path, rows, header=header, fmt=["%d", "%d", "%.17g", "%.17g", "%.17g", "%.17g"])


def load_state(path):
    with open(path) as fh:
        first = fh.readline().lstrip("# ").split()
    meta = dict(item.split("=") for item in first)
    grid = TorusGrid(float(meta["L"]), int(meta["N"]))
    rows = np.loadtxt(path, ndmin=2)
    shape = (grid.n, grid.n)
    i = rows[:, 0].astype(int)
    j = rows[:, 1].astype(int)
    cols = [np.zeros(shape) for _ in range(4)]
    for c, k in zip(cols, range(2, 6)):
        c[i, j] = rows[:, k]
    return FieldState(cols[0] + 1j * cols[1], cols[2], cols[3], grid)


def write_grid_csv(path, values, grid, name="value"):
    """Gnuplot-friendly CSV: x,y,value per plaquette/node, blank line between rows."""
    values = np.asarray(values)
    with open(path, "w") as fh:
        fh.write(f"x,y,{name}\n")
        for i in range(grid.n):
            for j in range(grid.n):
                fh.write(f"{i * grid.h:.10g},{j * grid.h:.10g},{values[i, j]:.17g}\n")
            fh.write("\n")


# -- reflection symmetries ----------------------------------------------------


def reflect_conjugate(state, axis, m):
    """Mirror node index k -> m - k along ``axis`` and conjugate psi.

    Mirroring reverses orientation, conjugation undoes the resulting sign of
    the winding, so the map preserves vortex degrees.  Links along the mirror
    axis keep their value (reversal and conjugation cancel); links across it
    change sign.  The energy is invariant whenever a(x) and u(x) share the
    symmetry.  ``m`` odd puts the mirror through plaquette centres.
    """
    n = state.grid.n
    idx = (m - np.arange(n)) % n
    idx_link = (m - 1 - np.arange(n)) % n
    psi = np.conj(np.take(state.psi, idx, axis=axis))
    along, across = (state.ax, state.ay) if axis == 0 else (state.ay, state.ax)
    new_along = np.take(along, idx_link, axis=axis)
    new_across = -np.take(across, idx, axis=axis)
    ax, ay = (new_along, new_across) if axis == 0 else (new_across, new_along)
    return FieldState(psi, ax, ay, state.grid)


def _mirror_map(state, mirror, linear=False):
    """Reflection-conjugation followed by the large gauge move that undoes
    the holonomy flip: chi = 2 pi k (c - c0) / N along the other axis, with
    c0 the other mirror's centre so that the two maps commute."""
    axis, m, k, c0, alpha = mirror
    t = reflect_conjugate(state, axis, m)
    n = state.grid.n
    c = np.arange(n) - 0.5 * c0
    chi1 = 2 * np.pi * k * c / n
    chi = chi1[None, :] if axis == 0 else chi1[:, None]
    chi = np.broadcast_to(chi, (n, n))
    # the ramp wraps by 2 pi k; the link increment across the seam is the same as elsewhere
    dchi = 0.0 if linear else 2 * np.pi * k / n
    ax, ay = t.ax, t.ay
    if axis == 0:
        ay = ay + dchi
    else:
        ax = ax + dchi
    return FieldState(t.psi * np.exp(1j * (chi + alpha)), ax, ay, state.grid)


def mirror_indices_for(config, grid):
    """Mirror indices (mx, my) through the plaquette holding the first vortex."""
    cell = np.floor(np.asarray(config.positions[0]) / grid.h).astype(int) % grid.n
    return 2 * int(cell[0]) + 1, 2 * int(cell[1]) + 1


def pinning_mirrors(state, mx, my):
    """Mirror maps (axis, m, k, c0, alpha) approximately fixing ``state``.

    k is read off from the phase ramp between the state and its reflection,
    alpha from the leftover constant phase.  A constant phase keeps each map
    an involution; the two maps commute when the alphas differ by 0 or pi,
    which is enforced (it holds for the seeds to rounding).
    """
    out = []
    n = state.grid.n
    for axis, m, other in ((0, mx, my), (1, my, mx)):
        t = reflect_conjugate(state, axis, m)
        ratio = t.psi * np.conj(state.psi)
        step = np.sum(ratio * np.conj(np.roll(ratio, 1, axis=1 - axis)))
        k = -int(np.rint(np.angle(step) * n / (2 * np.pi)))
        mirror = (axis, m, k, other, 0.0)
        c = np.angle(np.vdot(_mirror_map(state, mirror).psi, state.psi))
        out.append((axis, m, k, other, float(c)))
    a0 = out[0][4]
    d = np.pi * np.rint((out[1][4] - a0) / np.pi)
    out[1] = out[1][:4] + (a0 + d,)
    return out


def symmetrize(state, mirrors, linear=False):
    """Project onto states fixed by every mirror map in ``mirrors``.

    Each map is an affine involution and the maps commute, so one
    averaging pass per map is an exact projection.  ``linear`` applies the
    linear part only, for projecting tangent vectors (search directions).
    """
    for mirror in mirrors:
        t = _mirror_map(state, mirror, linear)
        state = FieldState(0.5 * (state.psi + t.psi), 0.5 * (state.ax + t.ax), 0.5 * (state.ay + t.ay), state.grid)
    return state
