"""Named scenario presets, one per acceptance criterion plus a few extras.

Positions sit at plaquette centres of the stated grid so that seeded
vortices are not moved by snapping.
"""

from .config import parse_text

_PAIR_128 = "0.25390625 0.50390625; 0.75390625 0.50390625"
_A_256 = "0.251953125 0.501953125"

PRESETS = {
    "c01-conjugate": (
        "closed-form conjugate vs brute-force supremum, 200 random samples",
        """
[run]
kind = conjugate-audit
seed = 11
[options]
checks = conjugate
samples = 200
""",
    ),
    "c02-legendre": (
        "Legendre roundtrip and Fenchel-Young equality, 100 samples per variant",
        """
[run]
kind = conjugate-audit
seed = 12
[options]
checks = legendre
legendre_samples = 100
""",
    ),
    "c03-ellipticity": (
        "numeric dual Hessians: SPD, closed-form minimum eigenvalue, control invariance",
        """
[run]
kind = conjugate-audit
seed = 13
[options]
checks = ellipticity
ellipticity_samples = 50
""",
    ),
    "c04-decomposition": (
        "two-path energy evaluation on 50 random states at N=64",
        """
[run]
kind = minimize
seed = 14
[grid]
N = 64
[energy]
eps = 0.1
[options]
audit = decomposition
samples = 50
""",
    ),
    "c05-stationarity": (
        "pinned minimisation of the +-1 pair at N=128, eps=0.05; FD gradient check",
        f"""
[run]
kind = minimize
seed = 15
[grid]
N = 128
[energy]
eps = 0.05
lam = 1.0
grad_tol = 1e-8
[vortices]
positions = {_PAIR_128}
degrees = 1 -1
[options]
fd_check = true
""",
    ),
    "c06-continuity": (
        "affinity of the energy in u and Lipschitz dependence of the minimum",
        """
[run]
kind = minimize
seed = 16
[grid]
N = 32
[energy]
eps = 0.15
grad_tol = 1e-9
[options]
audit = continuity
samples = 5
scales = 0 0.05 0.1 0.2
""",
    ),
    "c07-green": (
        "Green kernel checks at N=128 with Robin comparison against N=256",
        """
[run]
kind = green
seed = 17
[grid]
N = 128
[options]
compare_n = 256
""",
    ),
    "c08-h-identity": (
        "h_u against the pairing quadrature for 3 Fourier controls",
        f"""
[run]
kind = renorm
seed = 18
[grid]
N = 128
[vortices]
positions = {_PAIR_128}
degrees = 1 -1
[options]
h_identity_controls = 3
""",
    ),
    "c09-gamma-scan": (
        "minimised energies of two +-1 configurations over four eps at N=256",
        f"""
[run]
kind = gamma-scan
seed = 19
[grid]
N = 256
[energy]
eps = 0.1 0.07 0.05 0.035
lam = 0.01
grad_tol = 1e-8
[vortices]
positions = {_A_256}; 0.751953125 0.501953125
degrees = 1 -1
[vortices.2]
positions = {_A_256}; 0.751953125 0.001953125
degrees = 1 -1
""",
    ),
    "c10-first-order": (
        "first-order correction of the minimal renormalized energy, t in {0.02, 0.04, 0.08}",
        """
[run]
kind = optimize-control
seed = 20
[grid]
N = 64
[control]
K = 2
M = 0.5
[vortices]
positions = 0.25 0.25; 0.75 0.75
degrees = 1 -1
[options]
task = first-order
t_list = 0.02 0.04 0.08
""",
    ),
    "c11-hamiltonian": (
        "dipole Hamiltonian run with drift, order and reversal checks; gradient-flow monotonicity",
        """
[run]
kind = dynamics
seed = 21
[grid]
N = 64
[dynamics]
flow = hamiltonian
dt = 1e-3
T = 1.0
[vortices]
positions = 0.4 0.5; 0.6 0.5
degrees = 1 -1
[vortices.2]
positions = 0.3 0.4; 0.6 0.55
degrees = 1 -1
[options]
order_check = true
reverse_check = true
monotone_check = true
gradient_dt = 1e-3
gradient_T = 0.5
""",
    ),
    "c12-control": (
        "projected gradient descent, K=2, M=0.5, with FD gradient check and 10 restarts",
        """
[run]
kind = optimize-control
seed = 22
[grid]
N = 64
[control]
K = 2
M = 0.5
[vortices]
positions = 0.25 0.25; 0.75 0.75
degrees = 1 -1
[options]
fd_check = true
restarts = 10
""",
    ),
    "vacuum": (
        "minimisation from the vacuum state (psi = 1, A = 0)",
        """
[run]
kind = minimize
[grid]
N = 32
[energy]
eps = 0.1
""",
    ),
    "gradient-flow": (
        "dissipative flow of an off-equilibrium +-1 pair",
        """
[run]
kind = dynamics
[grid]
N = 64
[dynamics]
flow = gradient
dt = 1e-3
T = 0.5
[vortices]
positions = 0.3 0.4; 0.6 0.55
degrees = 1 -1
""",
    ),
}


def names():
    return sorted(PRESETS)


def text(name):
    return PRESETS[name][1].lstrip()


def get(name):
    t = text(name)
    if "name =" not in t:
        t = t.replace("[run]\n", f"[run]\nname = {name}\n", 1)
    return parse_text(t)
