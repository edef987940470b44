"""Stacking sequences: windows with periodic tails, balance and the catalog.

A configuration is the step sequence (q_k); consecutive node positions
differ by q_k, so uniform separation of nodes is exactly q_k staying away
from 0 on the torus.  Bi-infinite sequences are stored as an explicit
window for |k| <= K plus one periodic pattern per side, indexed by the
absolute k so that relabeling the window does not move the tails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import Lattice, TorusPoint, lattice_for, theta_star, torus_distance
from .hecke import hecke_G, hecke_jacobian

BALANCE_TOL = 1e-10
NONDEG_TOL = 1e-8
MIN_SEPARATION = 1e-3


class UnknownConfigError(ValueError):
    """Raised for a catalog name that does not exist; carries the valid names."""

    def __init__(self, name: str, names: tuple[str, ...]):
        self.name = name
        self.names = names
        super().__init__(f"unknown configuration {name!r}; valid names: {', '.join(names)}")


@dataclass(frozen=True)
class Configuration:
    tau: complex
    window: tuple[complex, ...]
    left_tail: tuple[complex, ...]
    right_tail: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "tau", complex(self.tau))
        object.__setattr__(self, "window", tuple(complex(q) for q in self.window))
        object.__setattr__(self, "left_tail", tuple(complex(q) for q in self.left_tail))
        object.__setattr__(self, "right_tail", tuple(complex(q) for q in self.right_tail))
        if self.tau.imag <= 0:
            raise ValueError("Im tau must be positive")
        if len(self.window) % 2 != 1:
            raise ValueError("window must have odd length 2K+1")
        if not self.left_tail or not self.right_tail:
            raise ValueError("tails must be non-empty periodic patterns")
        for k in self.ks():
            d = torus_distance(self.q(k), 0.0, self.tau)
            if d < MIN_SEPARATION:
                raise ValueError(f"step q_{k} is within {MIN_SEPARATION} of the lattice (distance {d:.2e})")

    @property
    def K(self) -> int:
        return (len(self.window) - 1) // 2

    def q(self, k: int) -> complex:
        """Step value at any integer index; tails cycle by absolute index."""
        K = self.K
        if -K <= k <= K:
            return self.window[k + K]
        if k > K:
            return self.right_tail[k % len(self.right_tail)]
        return self.left_tail[k % len(self.left_tail)]

    def ks(self, pad: int | None = None) -> range:
        """Window indices, optionally padded by one tail period per side."""
        K = self.K
        if pad is None:
            return range(-K, K + 1)
        return range(-K - len(self.left_tail), K + len(self.right_tail) + 1)

    @property
    def lattice(self) -> Lattice:
        return lattice_for(self.tau)

    def is_periodic(self) -> bool:
        """True when window and both tails repeat one common pattern."""
        n = len(self.right_tail)
        if len(self.left_tail) != n:
            return False
        every = all(abs(self.q(k) - self.right_tail[k % n]) < 1e-15 for k in self.ks(pad=1))
        return every

    def period(self) -> int:
        if not self.is_periodic():
            raise ValueError("configuration is not periodic")
        return len(self.right_tail)


def positions(cfg: Configuration, p0: complex = 0.0) -> list[TorusPoint]:
    """Node positions over the window from cumulative sums of the steps."""
    lat = cfg.lattice
    K = cfg.K
    acc = {0: complex(p0)}
    for k in range(1, K + 1):
        acc[k] = acc[k - 1] + cfg.q(k)
    for k in range(0, -K, -1):
        acc[k - 1] = acc[k] - cfg.q(k)
    return [TorusPoint.from_z(acc[k], lat) for k in range(-K, K + 1)]


@dataclass
class BalanceReport:
    G_values: dict[int, complex]
    forces: dict[int, complex]
    max_force: float
    balanced: bool


def balance_report(cfg: Configuration) -> BalanceReport:
    """Forces between consecutive layers over the window plus one tail period."""
    lat = cfg.lattice
    ks = list(cfg.ks(pad=1))
    G = {k: complex(hecke_G(cfg.q(k), lat)) for k in ks}
    forces = {k: G[k + 1] - G[k] for k in ks[:-1]}
    max_force = max(abs(f) for f in forces.values())
    return BalanceReport(G_values=G, forces=forces, max_force=max_force, balanced=max_force < BALANCE_TOL)


def nondegeneracy_check(cfg: Configuration) -> tuple[float, bool]:
    """Smallest singular value of the blockwise differential of (G_k).

    The differential with respect to (q_k) is diagonal per block, so the
    inverse is uniformly bounded exactly when the worst block is.
    """
    lat = cfg.lattice
    min_sv = min(hecke_jacobian(cfg.q(k), lat).min_singular_value() for k in cfg.ks(pad=1))
    return float(min_sv), min_sv > NONDEG_TOL


def _const(tau: complex, q0: complex, K: int) -> Configuration:
    return Configuration(tau, (q0,) * (2 * K + 1), (q0,), (q0,))


def _alternating(tau: complex, q_even: complex, q_odd: complex, K: int) -> Configuration:
    window = tuple(q_even if k % 2 == 0 else q_odd for k in range(-K, K + 1))
    return Configuration(tau, window, (q_even, q_odd), (q_even, q_odd))


def _split(tau: complex, left: tuple, right: tuple, K: int) -> Configuration:
    """Left pattern for k < 0, right pattern for k >= 0, absolute indexing."""
    window = tuple(
        left[k % len(left)] if k < 0 else right[k % len(right)] for k in range(-K, K + 1)
    )
    return Configuration(tau, window, tuple(left), tuple(right))


def _diagonal_root(theta: float) -> float:
    """The scale c in (0, 1/2) with G(c(1+tau)) = 0 on the unit-arc torus.

    Along the rhombic diagonal G keeps a fixed complex direction with a
    real coefficient changing sign once, so a projected bisection finds
    the root.  Exists only below the critical angle near 1.234.
    """
    from scipy.optimize import brentq

    tau = complex(np.exp(1j * theta))
    lat = lattice_for(tau)
    anchor = hecke_G(0.08 * (1 + tau), lat)
    d = anchor / abs(anchor)

    def h(c):
        return (hecke_G(c * (1 + tau), lat) / d).real

    lo, hi = 0.08, 0.48
    if h(lo) * h(hi) > 0:
        raise ValueError(f"no diagonal balance scale for theta={theta:.4f} (needs theta below {theta_star():.4f})")
    return float(brentq(h, lo, hi, xtol=1e-14))


_EQ = complex(np.exp(1j * np.pi / 3))


def _build_catalog(name: str, K: int, im: float, theta: float | None):
    t_im = 1j * im
    if name == "tP":
        return _const(1j, (1 + 1j) / 2, K)
    if name == "oPa":
        return _const(t_im, (1 + t_im) / 2, K)
    if name == "oPb":
        th = 1.4 if theta is None else theta
        tau = complex(np.exp(1j * th))
        return _const(tau, (1 + tau) / 2, K)
    if name == "oPb-degenerate":
        tau = complex(np.exp(1j * theta_star()))
        return _const(tau, (1 + tau) / 2, K)
    if name == "oCLP'":
        return _const(t_im, 0.5, K)
    if name == "rPD":
        return _const(_EQ, (1 + _EQ) / 3, K)
    if name == "H":
        q = (1 + _EQ) / 3
        return _alternating(_EQ, q, -q, K)
    if name == "oDelta":
        return _alternating(t_im, 0.5, t_im / 2, K)
    if name == "oH":
        th = 1.1 if theta is None else theta
        tau = complex(np.exp(1j * th))
        c = _diagonal_root(th)
        return _alternating(tau, c * (1 + tau), -c * (1 + tau), K)
    if name == "twin-rPD":
        q = (1 + _EQ) / 3
        return _split(_EQ, (q,), (-q,), K)
    if name == "rPD-H":
        q = (1 + _EQ) / 3
        return _split(_EQ, (q, -q), (-q,), K)
    if name == "H-H-shift":
        q = (1 + _EQ) / 3
        window = tuple(
            q if (k < 0 and k % 2 == 0) or (k > 0 and k % 2 == 1) else -q
            for k in range(-K, K + 1)
        )
        return Configuration(_EQ, window, (q, -q), (-q, q))
    if name == "oPa-oCLP":
        return _split(t_im, (0.5,), ((1 + t_im) / 2,), K)
    if name == "oCLP-rot-twin":
        return _split(t_im, (0.5,), (t_im / 2,), K)
    if name == "oPa-oDelta":
        return _split(t_im, (t_im / 2, 0.5), ((1 + t_im) / 2,), K)
    raise UnknownConfigError(name, CATALOG_NAMES)


CATALOG_NAMES = (
    "tP",
    "oPa",
    "oPb",
    "oCLP'",
    "rPD",
    "H",
    "oDelta",
    "oH",
    "twin-rPD",
    "rPD-H",
    "H-H-shift",
    "oPa-oCLP",
    "oCLP-rot-twin",
    "oPa-oDelta",
    "oPb-degenerate",
)

# entries that are balanced but sit at a degenerate critical point on purpose
DEGENERATE_NAMES = frozenset({"oPb-degenerate"})

# the diagonal-scale family is solved numerically at build time
EXPERIMENTAL_NAMES = frozenset({"oH"})


def catalog(name: str, K: int = 8, im: float = 1.25, theta: float | None = None) -> Configuration:
    """Named example configurations.

    im sets Im(tau) for the purely imaginary moduli families, theta the
    arc angle for the unit-modulus ones.  Defaults keep every entry away
    from degenerate parameters except `oPb-degenerate`, which pins the
    critical angle on purpose.
    """
    if name not in CATALOG_NAMES:
        raise UnknownConfigError(name, CATALOG_NAMES)
    return _build_catalog(name, K, im, theta)


def config_to_dict(cfg: Configuration) -> dict:
    c2 = lambda z: [z.real, z.imag]
    return {
        "tau": c2(cfg.tau),
        "window": [c2(q) for q in cfg.window],
        "left_tail": [c2(q) for q in cfg.left_tail],
        "right_tail": [c2(q) for q in cfg.right_tail],
    }


def config_from_dict(d: dict) -> Configuration:
    try:
        z = lambda p: complex(p[0], p[1])
        return Configuration(
            tau=z(d["tau"]),
            window=tuple(z(p) for p in d["window"]),
            left_tail=tuple(z(p) for p in d["left_tail"]),
            right_tail=tuple(z(p) for p in d["right_tail"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed configuration object: {exc}") from exc
