"""Weierstrass functions and complete elliptic integrals on a torus C/(Z + tau Z).

Everything is evaluated through rapidly convergent nome series: the
log-derivative of the odd theta function gives zeta, its next two
derivatives give wp and wp', and Eisenstein series give the quasi-period
eta1 and the invariants g2, g3.  Arguments are first reduced to the
fundamental parallelogram, so accuracy is uniform over the plane.

All evaluators accept scalars or numpy arrays and are pure functions of
their inputs; a `Lattice` is immutable and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial

import numpy as np

__all__ = [
    "Lattice",
    "TorusPoint",
    "PoleError",
    "zeta",
    "wp_eval",
    "wp_derivs",
    "xi",
    "xi_raw",
    "lattice_coords",
    "reduce_centered",
    "torus_distance",
    "elliptic_KE",
    "theta_star",
]

DEFAULT_SERIES_TOL = 1e-13
DEFAULT_POLE_RADIUS = 1e-6


class PoleError(ValueError):
    """Evaluation was requested too close to a lattice point."""


def _eisenstein(tau: complex, weight: int) -> complex:
    """Normalized Eisenstein series E2, E4 or E6 at Q = exp(2 pi i tau)."""
    Q = np.exp(2j * np.pi * tau)
    coeff = {2: -24.0, 4: 240.0, 6: -504.0}[weight]
    acc = 1.0 + 0j
    n = 1
    while True:
        Qn = Q**n
        term = coeff * n ** (weight - 1) * Qn / (1.0 - Qn)
        acc += term
        if abs(term) < 1e-18 * abs(acc) or n > 400:
            break
        n += 1
    return complex(acc)


@dataclass(frozen=True)
class Lattice:
    """Torus modulus with derived quasi-periods and nome.

    Fields beyond `tau` and `series_tol` are computed at construction:
    eta1 from the weight-2 Eisenstein series, eta2 forced by the Legendre
    relation eta1*tau - eta2 = 2 pi i, and the nome q = exp(i pi tau).
    """

    tau: complex
    series_tol: float = DEFAULT_SERIES_TOL
    pole_radius: float = DEFAULT_POLE_RADIUS
    eta1: complex = field(init=False)
    eta2: complex = field(init=False)
    nome: complex = field(init=False)
    g2: complex = field(init=False)
    g3: complex = field(init=False)
    n_terms: int = field(init=False)

    def __post_init__(self):
        tau = complex(self.tau)
        if not tau.imag > 0:
            raise ValueError(f"modulus must satisfy Im tau > 0, got {tau}")
        object.__setattr__(self, "tau", tau)
        eta1 = (np.pi**2 / 3.0) * _eisenstein(tau, 2)
        object.__setattr__(self, "eta1", complex(eta1))
        object.__setattr__(self, "eta2", complex(eta1 * tau - 2j * np.pi))
        object.__setattr__(self, "nome", complex(np.exp(1j * np.pi * tau)))
        object.__setattr__(self, "g2", complex((4 * np.pi**4 / 3.0) * _eisenstein(tau, 4)))
        object.__setattr__(self, "g3", complex((8 * np.pi**6 / 27.0) * _eisenstein(tau, 6)))
        # |q|^(N^2) ~ 1e-18 at N = sqrt(40 / (pi Im tau)); margin for the
        # derivative ladders which lose a few digits to (2n+1)^3 factors.
        n = max(6, int(math.sqrt(40.0 / (np.pi * tau.imag))) + 4)
        object.__setattr__(self, "n_terms", n)


@lru_cache(maxsize=256)
def _lattice_cached(tau: complex) -> Lattice:
    return Lattice(tau)


def lattice_for(tau: complex) -> Lattice:
    """Memoized Lattice constructor keyed on the exact complex modulus."""
    return _lattice_cached(complex(tau))


def lattice_coords(z, tau: complex):
    """Real coordinates (x, y) with z = x + y*tau; unreduced, array-safe."""
    z = np.asarray(z, dtype=complex)
    y = z.imag / tau.imag
    x = z.real - y * tau.real
    return x, y


def reduce_centered(z, tau: complex):
    """Reduce to the centered parallelogram, coordinates in [-1/2, 1/2).

    Returns (z_red, m, n) with z = z_red + m + n*tau.  Ties at the
    boundary resolve by round-half-to-even, which keeps the reduction
    deterministic across platforms.
    """
    x, y = lattice_coords(z, tau)
    m = np.round(x)
    n = np.round(y)
    return np.asarray(z, dtype=complex) - m - n * tau, m, n


def torus_distance(z1, z2, tau: complex) -> float:
    """Distance on C/(Z + tau Z) between representatives z1, z2."""
    d, _, _ = reduce_centered(np.asarray(z1, dtype=complex) - z2, tau)
    # the centered representative may miss the true minimum for sheared
    # moduli, so compare against the four neighboring translates
    cands = [d, d + 1, d - 1, d + tau, d - tau, d + 1 + tau, d - 1 - tau, d + 1 - tau, d - 1 + tau]
    return float(np.min(np.abs(cands), axis=0))


@dataclass(frozen=True)
class TorusPoint:
    """A point of the torus with its representative and lattice coordinates.

    x, y lie in [0, 1) and satisfy z = x + y*tau up to the reduction.
    """

    z: complex
    x: float
    y: float

    @classmethod
    def from_z(cls, z: complex, lat: Lattice) -> "TorusPoint":
        x, y = lattice_coords(complex(z), lat.tau)
        x = float(x - math.floor(x))
        y = float(y - math.floor(y))
        if x >= 1.0:
            x = 0.0
        if y >= 1.0:
            y = 0.0
        return cls(z=x + y * lat.tau, x=x, y=y)


def _theta_sums(v, q: complex, n_terms: int, kmax: int):
    """Partial sums u_k = sum (-1)^n q^(n(n+1)) (2n+1)^k trig((2n+1)v).

    trig cycles through sin, cos, -sin, -cos as k increases; u_0 is
    proportional to the odd theta function at v and u_k to its k-th
    derivative.  v is the already-scaled argument (pi times the reduced
    torus coordinate).
    """
    v = np.asarray(v, dtype=complex)
    out = [np.zeros(v.shape, dtype=complex) for _ in range(kmax + 1)]
    sign = 1.0
    for n in range(n_terms):
        w = (2 * n + 1) * v
        qf = sign * q ** (n * (n + 1))
        s, c = np.sin(w), np.cos(w)
        trig = (s, c, -s, -c)
        for k in range(kmax + 1):
            out[k] += qf * (2 * n + 1) ** k * trig[k % 4]
        sign = -sign
    return out


def _check_poles(zr, lat: Lattice):
    if np.any(np.abs(zr) < lat.pole_radius):
        raise PoleError(
            f"argument within {lat.pole_radius:g} of a lattice point of tau={lat.tau}"
        )


def zeta(z, lat: Lattice):
    """Weierstrass zeta at z for the lattice Z + tau Z.

    Odd, quasi-periodic with increments eta1 and eta2 along the two
    generators.  Raises PoleError within pole_radius of a lattice point.
    """
    zr, m, n = reduce_centered(z, lat.tau)
    _check_poles(zr, lat)
    v = np.pi * zr
    u0, u1 = _theta_sums(v, lat.nome, lat.n_terms, 1)
    val = lat.eta1 * zr + np.pi * u1 / u0 + m * lat.eta1 + n * lat.eta2
    return val if val.shape else complex(val)


def wp_eval(z, lat: Lattice, order: int = 0):
    """Weierstrass wp (order=0) or wp' (order=1)."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    zr, _, _ = reduce_centered(z, lat.tau)
    _check_poles(zr, lat)
    v = np.pi * zr
    if order == 0:
        u0, u1, u2 = _theta_sums(v, lat.nome, lat.n_terms, 2)
        r1 = u1 / u0
        val = -lat.eta1 - np.pi**2 * (u2 / u0 - r1 * r1)
    else:
        u0, u1, u2, u3 = _theta_sums(v, lat.nome, lat.n_terms, 3)
        r1 = u1 / u0
        val = -np.pi**3 * (u3 / u0 - 3 * r1 * (u2 / u0) + 2 * r1**3)
    return val if val.shape else complex(val)


def wp_derivs(z, lat: Lattice, jmax: int):
    """Stack of wp, wp', ..., wp^(jmax) at z, shape (jmax+1,) + z.shape.

    Orders beyond 1 come from the differentiated algebraic relation
    wp'' = 6 wp^2 - g2/2, which stays well conditioned for the orders
    needed here (jmax <= 10 in practice).
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty((jmax + 1,) + z.shape, dtype=complex)
    out[0] = wp_eval(z, lat, 0)
    if jmax >= 1:
        out[1] = wp_eval(z, lat, 1)
    if jmax >= 2:
        out[2] = 6.0 * out[0] ** 2 - lat.g2 / 2.0
    for j in range(3, jmax + 1):
        acc = np.zeros(z.shape, dtype=complex)
        for i in range(j - 1):
            acc += comb(j - 2, i) * out[i] * out[j - 2 - i]
        out[j] = 6.0 * acc
    return out


def xi_raw(w, lat: Lattice):
    """R-linear lattice-coordinate form: x*eta1 + y*eta2 for w = x + y*tau.

    Not reduced; this is the branch that makes zeta - xi_raw honestly
    periodic, so it is what the balance form and the node data use.
    """
    w = np.asarray(w, dtype=complex)
    val = lat.eta1 * w - 2j * np.pi * (w.imag / lat.tau.imag)
    return val if val.shape else complex(val)


def xi(p: TorusPoint, lat: Lattice) -> complex:
    """Lattice-coordinate form on reduced coordinates: x*eta1 + y*eta2."""
    return p.x * lat.eta1 + p.y * lat.eta2


def elliptic_KE(m: float) -> tuple[float, float]:
    """Complete elliptic integrals (K(m), E(m)) by the arithmetic-geometric mean.

    Parameter convention: K(m) = int_0^(pi/2) dt / sqrt(1 - m sin^2 t).
    Valid for 0 < m < 1.
    """
    if not 0.0 < m < 1.0:
        raise ValueError(f"parameter must lie in (0, 1), got {m}")
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    csum = 0.5 * c * c
    n = 0
    # hard cap: the AGM gains digits quadratically, 60 rounds is far past
    # double precision even for m within 1e-15 of the endpoints
    for n in range(1, 61):
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        csum += 2 ** (n - 1) * c * c
        if c <= 1e-16 * a:
            break
    K = math.pi / (2.0 * a)
    E = K * (1.0 - csum)
    return K, E


def theta_star() -> float:
    """Rhombic-angle threshold 2*arctan(K(1-m)/K(m)) at the root of 2E = K."""
    from scipy.optimize import brentq

    def h(m):
        K, E = elliptic_KE(m)
        return 2.0 * E - K

    m = brentq(h, 1e-6, 1.0 - 1e-9, xtol=1e-15)
    K, _ = elliptic_KE(m)
    Kp, _ = elliptic_KE(1.0 - m)
    return 2.0 * math.atan2(Kp, K)
