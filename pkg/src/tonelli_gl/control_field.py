"""Real vector fields u(x) on the torus [0, L)^2.

A field is stored as a finite Fourier series

    u(x) = sum_k c_k exp(2 pi i k . x / L),     c_{-k} = conj(c_k),

with ``c_k`` a complex pair (one entry per component).  Grid samples are
converted to the same form (their trigonometric interpolant), so every field
can be evaluated and differentiated off-grid.
"""

import numpy as np

from .errors import InvalidSpecError


class ControlField:
    def __init__(self, wavevectors, coefficients, period=1.0, samples=None):
        k = np.asarray(wavevectors, dtype=int).reshape(-1, 2)
        c = np.asarray(coefficients, dtype=complex).reshape(-1, 2)
        if k.shape[0] != c.shape[0]:
            raise InvalidSpecError("one coefficient pair per wavevector required", module="tonelli-core")
        if period <= 0:
            raise InvalidSpecError("torus side must be positive", module="tonelli-core")
        self.period = float(period)
        self.wavevectors = k
        self.coefficients = c
        self.samples = samples
        self._check_real()
        k.setflags(write=False)
        c.setflags(write=False)

    def _check_real(self):
        lookup = {tuple(kk): cc for kk, cc in zip(self.wavevectors, self.coefficients)}
        scale = max(1.0, float(np.max(np.abs(self.coefficients), initial=0.0)))
        for kk, cc in lookup.items():
            mirror = lookup.get((-kk[0], -kk[1]))
            if mirror is None or np.max(np.abs(mirror - np.conj(cc))) > 1e-12 * scale:
                raise InvalidSpecError(
                    f"coefficients at k={kk} break conjugate symmetry (field not real)",
                    module="tonelli-core",
                )

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, period=1.0):
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), period)

    @classmethod
    def constant(cls, value, period=1.0):
        return cls([(0, 0)], [np.asarray(value, dtype=complex)], period)

    @classmethod
    def from_real_modes(cls, modes, period=1.0):
        """Build from ``[(k, cos_amp, sin_amp), ...]``.

        Each entry adds ``cos_amp * cos(2 pi k.x/L) + sin_amp * sin(2 pi k.x/L)``
        with 2-vector amplitudes; the conjugate partner is generated here.
        """
        acc = {}
        for k, ca, sa in modes:
            k = (int(k[0]), int(k[1]))
            ca = np.asarray(ca, dtype=float)
            sa = np.asarray(sa, dtype=float)
            if k == (0, 0):
                acc[k] = acc.get(k, 0) + ca.astype(complex)
                continue
            c = 0.5 * (ca - 1j * sa)
            acc[k] = acc.get(k, 0) + c
            m = (-k[0], -k[1])
            acc[m] = acc.get(m, 0) + np.conj(c)
        if not acc:
            return cls.zero(period)
        ks = list(acc)
        return cls(ks, [acc[k] for k in ks], period)

    @classmethod
    def from_samples(cls, samples, period=1.0):
        """Trigonometric interpolant of node samples of shape (N, N, 2)."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if samples.shape != (n, n, 2):
            raise InvalidSpecError("grid samples must have shape (N, N, 2)", module="tonelli-core")
        chat = np.fft.fft2(samples, axes=(0, 1)) / n**2
        f = np.rint(np.fft.fftfreq(n) * n).astype(int)
        k1, k2 = np.meshgrid(f, f, indexing="ij")
        ks = np.stack([k1.ravel(), k2.ravel()], axis=-1)
        cs = chat.reshape(-1, 2)
        if n % 2 == 0:
            # split Nyquist modes symmetrically so the interpolant stays real
            h = n // 2
            ks_l, cs_l = [], []
            for kk, cc in zip(ks, cs):
                parts = [kk]
                if kk[0] == -h:
                    parts = [p for q in parts for p in ((q[0], q[1]), (h, q[1]))]
                if kk[1] == -h:
                    parts = [p for q in parts for p in ((q[0], q[1]), (q[0], h))]
                for p in parts:
                    ks_l.append(p)
                    cs_l.append(cc / len(parts))
            ks, cs = np.array(ks_l), np.array(cs_l)
        keep = np.max(np.abs(cs), axis=1) > 0
        if not np.any(keep):
            keep[:] = False
        field = cls(ks[keep], cs[keep], period)
        field.samples = samples.copy()
        return field

    # -- algebra ----------------------------------------------------------

    def _merged(self, other, sign):
        if abs(self.period - other.period) > 1e-15:
            raise InvalidSpecError("cannot combine fields on different tori", module="tonelli-core")
        acc = {}
        for kk, cc in zip(self.wavevectors, self.coefficients):
            acc[tuple(kk)] = acc.get(tuple(kk), 0) + cc
        for kk, cc in zip(other.wavevectors, other.coefficients):
            acc[tuple(kk)] = acc.get(tuple(kk), 0) + sign * cc
        if not acc:
            return ControlField.zero(self.period)
        ks = list(acc)
        return ControlField(ks, [acc[k] for k in ks], self.period)

    def __add__(self, other):
        return self._merged(other, 1.0)

    def __sub__(self, other):
        return self._merged(other, -1.0)

    def scaled(self, t):
        return ControlField(self.wavevectors, float(t) * self.coefficients, self.period)

    def __mul__(self, t):
        return self.scaled(t)

    __rmul__ = __mul__

    @property
    def is_zero(self):
        return not np.any(self.coefficients != 0)

    # -- evaluation -------------------------------------------------------

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(2j * np.pi / self.period * (x @ self.wavevectors.T.astype(float)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.wavevectors.shape[0] == 0:
            return np.zeros(x.shape)
        return np.real(self._phase(x) @ self.coefficients)

    def jacobian(self, x):
        """J[..., a, b] = d u_a / d x_b."""
        x = np.asarray(x, dtype=float)
        if self.wavevectors.shape[0] == 0:
            return np.zeros(x.shape + (2,))
        kk = 2j * np.pi / self.period * self.wavevectors.astype(float)
        ph = self._phase(x)
        return np.real(np.einsum("...m,ma,mb->...ab", ph, self.coefficients, kk))

    def divergence(self, x):
        j = self.jacobian(x)
        return j[..., 0, 0] + j[..., 1, 1]

    def sample(self, grid):
        """Values at grid nodes, shape (N, N, 2)."""
        if self.samples is not None and self.samples.shape[0] == grid.n and abs(grid.side - self.period) < 1e-15:
            return self.samples.copy()
        return self(grid.nodes())

    # -- norms ------------------------------------------------------------

    def c1_bound(self):
        """Spectral bound sum_k |c_k| (1 + 2 pi |k| / L) >= ||u||_{C^1}."""
        if self.wavevectors.shape[0] == 0:
            return 0.0
        kn = np.hypot(self.wavevectors[:, 0], self.wavevectors[:, 1])
        amp = np.linalg.norm(self.coefficients, axis=1)
        return float(np.sum(amp * (1 + 2 * np.pi * kn / self.period)))

    def sup_bound(self):
        return float(np.sum(np.linalg.norm(self.coefficients, axis=1)))

    def max_divergence(self):
        """Spectral bound on sup |div u|; zero iff every mode is divergence-free."""
        if self.wavevectors.shape[0] == 0:
            return 0.0
        d = np.abs(np.einsum("ma,ma->m", self.coefficients, self.wavevectors.astype(float)))
        return float(2 * np.pi / self.period * np.sum(d))

    def __repr__(self):
        return f"ControlField(modes={self.wavevectors.shape[0]}, L={self.period})"
