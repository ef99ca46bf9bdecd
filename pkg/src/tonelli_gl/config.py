"""Sectioned key=value scenario files.

Grammar (``configparser`` INI, keys case-sensitive, ``#`` comments)::

    [run]       kind, name, seed
    [grid]      L, N
    [finsler]   variant, metric (a11 a12 a21 a22), drift (b1 b2),
                metric_mode.<n> = kx ky : a11 a12 a21 a22
                drift_mode.<n>  = kx ky : b1 b2
    [control]   K, M, divergence_free, coefficients (basis vector) | preset,
                mode.<n> = kx ky : cos_x cos_y sin_x sin_y
    [energy]    eps (list), lam, grad_tol, max_iters
    [vortices]  positions = x1 y1; x2 y2 ...   degrees = d1 d2 ...
    [vortices.<n>]  further configurations (gamma-scan compares them)
    [dynamics]  flow (hamiltonian | gradient), dt, T
    [options]   free-form, interpreted per run kind

Lists are whitespace separated; point lists use ``;`` between points.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .control_field import ControlField
from .errors import ConfigParseError
from .finsler import QUADRATIC, FinslerSpec
from .torus import TorusGrid, VortexConfig

RUN_KINDS = ("conjugate-audit", "minimize", "gamma-scan", "green", "renorm", "dynamics", "optimize-control")


def _floats(text, n=None, what="value"):
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigParseError(f"cannot parse {what}: {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigParseError(f"{what} needs {n} numbers, got {len(vals)}")
    return vals


def _mode_line(text, n, what):
    if ":" not in text:
        raise ConfigParseError(f"{what} must look like 'kx ky : amplitudes'")
    k, amp = text.split(":", 1)
    kk = _floats(k, 2, what)
    if any(v != int(v) for v in kk):
        raise ConfigParseError(f"{what} wavevector must be integer")
    return (int(kk[0]), int(kk[1])), _floats(amp, n, what)


def _indexed(section, prefix):
    keys = [k for k in section if k == prefix or k.startswith(prefix + ".")]
    return [section[k] for k in sorted(keys, key=lambda s: (len(s), s))]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigParseError(f"not a boolean: {text!r}")


# -- Finsler spec and control ------------------------------------------------


def spec_from_section(sec, period):
    variant = sec.get("variant", QUADRATIC).strip()
    metric = np.array(_floats(sec.get("metric", "1 0 0 1"), 4, "metric")).reshape(2, 2)
    drift = _floats(sec.get("drift", "0 0"), 2, "drift")
    mm = [(k, np.array(a).reshape(2, 2)) for k, a in (_mode_line(t, 4, "metric_mode") for t in _indexed(sec, "metric_mode"))]
    dm = [(k, np.array(a)) for k, a in (_mode_line(t, 2, "drift_mode") for t in _indexed(sec, "drift_mode"))]
    return FinslerSpec(variant, metric, drift, tuple(mm), tuple(dm), period)


def spec_to_items(spec):
    items = {"variant": spec.variant, "metric": " ".join(repr(float(v)) for v in spec.metric.ravel())}
    if spec.is_randers:
        items["drift"] = " ".join(repr(float(v)) for v in spec.drift)
    for n, (k, a) in enumerate(spec.metric_modes, 1):
        items[f"metric_mode.{n}"] = f"{k[0]} {k[1]} : " + " ".join(repr(float(v)) for v in a.ravel())
    for n, (k, a) in enumerate(spec.drift_modes, 1):
        items[f"drift_mode.{n}"] = f"{k[0]} {k[1]} : " + " ".join(repr(float(v)) for v in a)
    return items


def control_modes_from_section(sec, period):
    modes = []
    for t in _indexed(sec, "mode"):
        k, a = _mode_line(t, 4, "control mode")
        modes.append((k, a[:2], a[2:]))
    return ControlField.from_real_modes(modes, period) if modes else None


def control_to_items(u):
    """Real cos/sin amplitudes, one line per +-k pair."""
    items = {}
    n = 0
    for k, c in zip(u.wavevectors, u.coefficients):
        k = (int(k[0]), int(k[1]))
        if k[0] < 0 or (k[0] == 0 and k[1] < 0):
            continue  # conjugate partner of a listed mode
        n += 1
        if k == (0, 0):
            ca, sa = np.real(c), np.zeros(2)
        else:
            ca, sa = 2 * np.real(c), -2 * np.imag(c)
        items[f"mode.{n}"] = f"{k[0]} {k[1]} : " + " ".join(repr(float(v)) for v in (*ca, *sa))
    return items


# -- the scenario -----------------------------------------------------------


@dataclass
class ScenarioConfig:
    kind: str
    name: str
    seed: int
    grid: TorusGrid
    spec: FinslerSpec
    eps: list
    lam: float
    vortices: list
    control_modes: object = None
    K: int = 0
    M: float = np.inf
    divergence_free: bool = False
    coefficients: object = None
    control_preset: str = "none"
    dt: float = 1e-3
    T: float = 1.0
    flow: str = "hamiltonian"
    grad_tol: float = 1e-8
    max_iters: int = 50000
    options: dict = field(default_factory=dict)
    text: str = ""

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def option(self, key, default=None, cast=str):
        if key not in self.options:
            return default
        raw = self.options[key]
        if cast is bool:
            return _bool(raw)
        if cast is list:
            return _floats(raw, what=key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigParseError(f"option {key}: cannot parse {raw!r}") from exc


def parse_text(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(f"malformed config: {exc}") from exc
    run = cp["run"] if cp.has_section("run") else {}
    kind = run.get("kind", "").strip()
    if kind not in RUN_KINDS:
        raise ConfigParseError(f"unknown run kind {kind!r}", allowed=" ".join(RUN_KINDS))
    try:
        seed = int(run.get("seed", "0"))
        gsec = cp["grid"] if cp.has_section("grid") else {}
        L = float(gsec.get("L", "1.0"))
        N = int(gsec.get("N", "64"))
    except ValueError as exc:
        raise ConfigParseError(f"bad scalar: {exc}") from exc
    if L <= 0 or N < 4:
        raise ConfigParseError("grid needs L > 0 and N >= 4")
    grid = TorusGrid(L, N)
    # an invalid (but parseable) spec raises InvalidSpecError, exit code 3
    spec = spec_from_section(cp["finsler"] if cp.has_section("finsler") else {}, L)

    esec = cp["energy"] if cp.has_section("energy") else {}
    eps = _floats(esec.get("eps", "0.1"), what="eps")
    vortices = []
    for sname in sorted((s for s in cp.sections() if s == "vortices" or s.startswith("vortices.")), key=lambda s: (len(s), s)):
        sec = cp[sname]
        pos = [_floats(p, 2, "position") for p in sec.get("positions", "").split(";") if p.strip()]
        deg = [int(v) for v in _floats(sec.get("degrees", ""), len(pos), "degrees")]
        vortices.append(VortexConfig(np.array(pos, dtype=float).reshape(-1, 2), np.array(deg, dtype=int), L, balanced=False))

    csec = cp["control"] if cp.has_section("control") else {}
    try:
        cfg = ScenarioConfig(
            kind=kind,
            name=run.get("name", kind).strip(),
            seed=seed,
            grid=grid,
            spec=spec,
            eps=eps,
            lam=float(esec.get("lam", "1.0")),
            vortices=vortices,
            control_modes=control_modes_from_section(csec, L),
            K=int(csec.get("K", "0")),
            M=float(csec.get("M", "inf")),
            divergence_free=_bool(csec.get("divergence_free", "false")),
            coefficients=np.array(_floats(csec["coefficients"], what="coefficients")) if "coefficients" in csec else None,
            control_preset=csec.get("preset", "none").strip(),
            grad_tol=float(esec.get("grad_tol", "1e-8")),
            max_iters=int(esec.get("max_iters", "50000")),
            options=dict(cp["options"]) if cp.has_section("options") else {},
            text=text,
        )
        if cp.has_section("dynamics"):
            d = cp["dynamics"]
            cfg.flow = d.get("flow", "hamiltonian").strip()
            cfg.dt = float(d.get("dt", "1e-3"))
            cfg.T = float(d.get("T", "1.0"))
    except ValueError as exc:
        raise ConfigParseError(f"bad value: {exc}") from exc
    if cfg.flow not in ("hamiltonian", "gradient"):
        raise ConfigParseError(f"unknown flow {cfg.flow!r}")
    return cfg


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config: {exc}", path=str(path)) from exc
    return parse_text(text)


def dump_spec_and_control(spec, u=None):
    """Minimal INI text for a spec (and optional control field)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["finsler"] = spec_to_items(spec)
    if u is not None:
        cp["control"] = control_to_items(u)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
