"""The balance form G(q) = zeta(q) - xi(q) on a torus and its root structure.

G is doubly periodic but only R-linear in disguise: writing
G(q) = zeta(q) + a q + b conj(q) with a = pi/Im(tau) - eta1 and
b = -pi/Im(tau) shows it is not meromorphic, so all root finding here
works on the real 2-system (Re G - Re C, Im G - Im C) with the honest
2x2 real Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    Lattice,
    TorusPoint,
    reduce_centered,
    torus_distance,
    wp_eval,
    xi_raw,
    zeta,
)

ROOT_TOL = 1e-10
DEDUP_RADIUS = 1e-6
DEGENERACY_TOL = 1e-9

HALF_PERIOD_COORDS = ((0.5, 0.0), (0.0, 0.5), (0.5, 0.5))


def _ab(lat: Lattice) -> tuple[complex, complex]:
    b = -np.pi / lat.tau.imag
    return -b - lat.eta1, b


def hecke_G(q, lat: Lattice):
    """Evaluate G(q) = zeta(q) - xi(q); lattice-periodic in q, odd, array-safe."""
    if isinstance(q, TorusPoint):
        q = q.z
    q = np.asarray(q, dtype=complex)
    a, b = _ab(lat)
    val = zeta(q, lat) + a * q + b * np.conj(q)
    return val if val.shape else complex(val)


@dataclass(frozen=True)
class HeckeJacobian:
    """Differential of G at a point, as a real 2x2 matrix on (Re q, Im q)."""

    m: np.ndarray
    det: float

    @classmethod
    def at(cls, q: complex, lat: Lattice) -> "HeckeJacobian":
        A, B = _gradient_pair(complex(q), lat)
        m = np.array(
            [
                [(A + B).real, -(A - B).imag],
                [(A + B).imag, (A - B).real],
            ]
        )
        return cls(m=m, det=float(abs(A) ** 2 - abs(B) ** 2))

    def min_singular_value(self) -> float:
        return float(np.linalg.svd(self.m, compute_uv=False)[-1])


def _gradient_pair(q, lat: Lattice):
    """Coefficients (A, B) of dG = A dq + B d(conj q)."""
    a, b = _ab(lat)
    return a - wp_eval(q, lat, 0), b


def hecke_jacobian(q: complex, lat: Lattice) -> HeckeJacobian:
    return HeckeJacobian.at(q, lat)


@dataclass
class SolutionSet:
    """Deduplicated roots of G = C with their Jacobians.

    `failures` lists seed points whose Newton iteration did not converge;
    a nonempty list is informational, not an error.
    """

    roots: list[TorusPoint]
    C: complex
    count: int
    jacobians: list[HeckeJacobian] = field(default_factory=list)
    failures: list[complex] = field(default_factory=list)


def _masked_G_step(z: np.ndarray, lat: Lattice, C: complex):
    """One vectorized Newton update; near-lattice entries are flagged dead."""
    zr, _, _ = reduce_centered(z, lat.tau)
    alive = np.abs(zr) > 10 * lat.pole_radius
    dz = np.zeros_like(z)
    F = np.full_like(z, np.inf)
    if np.any(alive):
        za = z[alive]
        a, b = _ab(lat)
        Fa = zeta(za, lat) + a * za + b * np.conj(za) - C
        A = a - wp_eval(za, lat, 0)
        det = np.abs(A) ** 2 - abs(b) ** 2
        with np.errstate(all="ignore"):
            det = np.where(np.abs(det) < 1e-14, np.nan, det)
            step = (-Fa * np.conj(A) + np.conj(Fa) * b) / det
            mag = np.abs(step)
            step = np.where(mag > 0.5, step * (0.5 / np.maximum(mag, 1e-300)), step)
        full_step = np.zeros_like(z)
        full_step[alive] = np.nan_to_num(step, nan=0.0)
        dz = full_step
        Ff = np.full_like(z, np.inf)
        Ff[alive] = Fa
        F = Ff
    return F, dz, alive


def solve_G_equals_C(lat: Lattice, C: complex, grid: int = 32, max_iter: int = 50) -> SolutionSet:
    """All solutions of G(q) = C from a seeded, deduplicated Newton sweep.

    Seeds are a half-cell-offset grid on the fundamental domain (so no
    seed starts on the lattice) plus the three half-periods, which are
    exact roots whenever C = 0.
    """
    C = complex(C)
    ii = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(ii, ii)
    seeds = (X + Y * lat.tau).ravel()
    seeds = np.concatenate([seeds, [0.5, lat.tau / 2, (1 + lat.tau) / 2]])

    z = seeds.astype(complex)
    converged = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        F, dz, alive = _masked_G_step(z, lat, C)
        newly = alive & (np.abs(F) < ROOT_TOL) & (np.abs(dz) < 1e-12)
        converged |= newly
        z = np.where(converged | ~alive, z, z + dz)
        if np.all(converged | ~alive):
            break

    roots: list[TorusPoint] = []
    for zc in z[converged]:
        if any(torus_distance(zc, r.z, lat.tau) < DEDUP_RADIUS for r in roots):
            continue
        roots.append(TorusPoint.from_z(complex(zc), lat))
    # stable ordering for reproducible output
    roots.sort(key=lambda p: (round(p.y, 9), round(p.x, 9)))
    jacs = [HeckeJacobian.at(r.z, lat) for r in roots]
    failures = [complex(s) for s, ok in zip(seeds, converged) if not ok]
    return SolutionSet(roots=roots, C=C, count=len(roots), jacobians=jacs, failures=failures)


def antiholomorphic_iterate(lat: Lattice, C: complex, z0: complex, max_iter: int = 800):
    """Fixed-point iteration z -> z - (conj(G(z)) - conj(C))/b.

    Converges exactly at attracting roots of G = C and returns None
    otherwise; an independent check on the Newton sweep for those roots.
    """
    z = complex(z0)
    b = _ab(lat)[1]
    for _ in range(max_iter):
        zr, _, _ = reduce_centered(z, lat.tau)
        if abs(complex(zr)) < 10 * lat.pole_radius:
            return None
        G = hecke_G(z, lat)
        z_next = z - (np.conj(G) - np.conj(C)) / b
        if abs(z_next - z) < 1e-13:
            z = z_next
            break
        z = z_next
    else:
        return None
    if abs(hecke_G(z, lat) - C) < ROOT_TOL:
        return TorusPoint.from_z(z, lat)
    return None


def degeneracy_2division(lat: Lattice, which: int) -> tuple[complex, bool]:
    """Degeneracy test for a 2-division point.

    which selects 1 -> 1/2, 2 -> tau/2, 3 -> (1+tau)/2.  The point is a
    degenerate critical point exactly when the period quotient
    (tau*wp(w) + eta2)/(wp(w) + eta1) is real.
    """
    if which not in (1, 2, 3):
        raise ValueError("which must be 1, 2 or 3")
    x, y = HALF_PERIOD_COORDS[which - 1]
    w = x + y * lat.tau
    p = wp_eval(w, lat, 0)
    quotient = (lat.tau * p + lat.eta2) / (p + lat.eta1)
    return complex(quotient), bool(abs(quotient.imag) < DEGENERACY_TOL)
