"""Opened-node surface data: Gauss-map components, neck charts, and the
glued 1-form obtained as a contraction fixed point.

Layer k carries a torus with modulus tau_k and marked points 0_k, v_k.
Necks identify the chart at v_k with the chart at 0_{k+1} through
w_k^+ * w_{k+1}^- = t^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .configs import Configuration
from .elliptic import (
    Lattice,
    lattice_coords,
    lattice_for,
    torus_distance,
    wp_derivs,
    wp_eval,
    xi_raw,
    zeta,
)

FIX_TOL = 1e-12
DEFAULT_N_MAX = 8
DEFAULT_CIRCLE_NODES = 256
CHART_MARGIN = 2.0  # charts are |1/g| < CHART_MARGIN * epsilon

_SIGNS = {"+": 0, "-": 1}


class ChartError(ValueError):
    """Point outside a neck chart, or chart inversion failed."""


class NonContractionError(RuntimeError):
    """Gluing scale too large for the fixed-point iteration."""


def mirror_conj(z: complex, k: int) -> complex:
    """Apply (-conj)^k, the alternating reflection between layers."""
    z = complex(z)
    return z if k % 2 == 0 else -z.conjugate()


@dataclass
class TorusData:
    """Parameters of one layer: g(z) = a*(zeta(z) - zeta(z - v)) + b.

    The additive constant is stored as the offset bhat from the balanced
    value, so b = -a*xi_raw(v) + bhat and bhat = 0 at central data.
    """

    a: complex
    bhat: complex
    tau: complex
    v: complex

    @property
    def lattice(self) -> Lattice:
        return lattice_for(self.tau)

    @property
    def b(self) -> complex:
        return -self.a * xi_raw(self.v, self.lattice) + self.bhat

    def g(self, z):
        lat = self.lattice
        return self.a * (zeta(z, lat) - zeta(z - self.v, lat)) + self.b

    def gp(self, z):
        lat = self.lattice
        return self.a * (wp_eval(z - self.v, lat) - wp_eval(z, lat))


def _shortest_vector(tau: complex) -> float:
    best = abs(tau)
    for m in range(-3, 4):
        for n in range(-3, 4):
            if m == 0 and n == 0:
                continue
            best = min(best, abs(m + n * tau))
    return best


def _invert_chart(T: TorusData, sign: str, w, newton_iters: int = 40):
    """Newton inversion of w = 1/g near one pole; w may be an array.

    Returns z with 1/g(z) = w.  Entries with w = 0 map to the pole itself.
    """
    w = np.asarray(w, dtype=complex)
    pole = T.v if _SIGNS[sign] == 0 else 0.0
    at_pole = w == 0
    ws = np.where(at_pole, np.nan, w)
    z = pole - T.a * ws if _SIGNS[sign] == 0 else T.a * ws
    target = 1.0 / ws
    res = np.full(w.shape, np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(newton_iters):
            gv = T.g(z)
            res = np.abs(1.0 / gv - ws)
            if np.all((res <= 1e-12 * np.abs(ws) + 1e-15) | at_pole):
                break
            z = z - (gv - target) / T.gp(z)
    if np.any((res > 1e-10 * np.abs(ws) + 1e-14) & ~at_pole):
        raise ChartError("chart inversion did not converge")
    z = np.where(at_pole, pole, z)
    return z if z.shape else complex(z)


def _charts_disjoint(tori: list[TorusData], eps: float) -> bool:
    th = np.exp(2j * np.pi * (np.arange(16) + 0.5) / 16)
    for T in tori:
        try:
            zp = _invert_chart(T, "+", CHART_MARGIN * eps * th)
            zm = _invert_chart(T, "-", CHART_MARGIN * eps * th)
        except ChartError:
            return False
        rp = max(torus_distance(z, T.v, T.tau) for z in zp)
        rm = max(torus_distance(z, 0.0, T.tau) for z in zm)
        d = torus_distance(0.0, T.v, T.tau)
        ell = _shortest_vector(T.tau)
        if rp + rm >= d or 2 * rp >= ell or 2 * rm >= ell:
            return False
    return True


def _chart_radius(tori: list[TorusData]) -> float:
    """Largest neck radius with pairwise disjoint charts, capped at
    0.2 times the minimal pole separation."""
    d = min(
        min(torus_distance(0.0, T.v, T.tau), _shortest_vector(T.tau))
        for T in tori
    )
    eps = 0.2 * d
    for _ in range(60):
        if _charts_disjoint(tori, eps):
            return eps
        eps *= 0.9
    raise ValueError("no admissible chart radius found")


@dataclass(frozen=True)
class SecondKindForm:
    """Meromorphic form with principal part dw/w^n in one neck chart and
    imaginary periods on both cycles.

    Built from derivatives of wp shifted to the pole; coeffs holds
    c_2..c_n multiplying wp, wp', ..., wp^(n-2).  mu is the constant
    that rotates the periods onto the imaginary axis; dropping it
    (alpha_normalized) gives the variant with vanishing first period.
    """

    lat: Lattice
    pole: complex
    order: int
    coeffs: tuple[complex, ...]
    mu: complex

    @property
    def period_alpha(self) -> complex:
        return self.mu

    @property
    def period_beta(self) -> complex:
        return self.lat.tau * self.mu + 2j * np.pi * self.coeffs[0]

    def value_from_derivs(self, derivs, alpha_normalized: bool = False):
        """Evaluate given a precomputed wp_derivs stack at z - pole."""
        val = self.coeffs[0] * derivs[0]
        for m in range(3, self.order + 1):
            val = val + self.coeffs[m - 2] * derivs[m - 2]
        val = val + self.coeffs[0] * self.lat.eta1
        if not alpha_normalized:
            val = val + self.mu
        return val

    def value(self, z, alpha_normalized: bool = False):
        derivs = wp_derivs(np.asarray(z, complex) - self.pole, self.lat, self.order - 2)
        val = self.value_from_derivs(derivs, alpha_normalized)
        return val if val.shape else complex(val)


def _circle_nodes(center: complex, radius: float, m: int):
    th = np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
    z = center + radius * th
    dz = 1j * radius * th * (2 * np.pi / m)
    return z, dz


def _build_forms(T: TorusData, n_max: int, radius: float, m: int) -> dict:
    """Principal-part matching at both poles by contour coefficient
    extraction of -g^(n-2) g' = target principal part of dw/w^n."""
    lat = T.lattice
    forms = {}
    for sign, pole in (("+", T.v), ("-", 0.0)):
        z, dz = _circle_nodes(pole, radius, m)
        gv = T.g(z)
        gp = T.gp(z)
        for n in range(2, n_max + 1):
            h = -(gv ** (n - 2)) * gp
            coeffs = []
            for mm in range(2, n + 1):
                a_mm = np.sum(h * (z - pole) ** (mm - 1) * dz) / (2j * np.pi)
                coeffs.append((-1.0) ** mm * a_mm / math.factorial(mm - 1))
            c2 = coeffs[0]
            mu = -2j * np.pi * c2.imag / lat.tau.imag
            forms[(_SIGNS[sign], n)] = SecondKindForm(
                lat=lat, pole=pole, order=n, coeffs=tuple(coeffs), mu=mu
            )
    return forms


@dataclass
class CircleCache:
    """Quadrature nodes around one pole with every field the contour
    integrals need: g, g', the base form, and the second-kind stack."""

    center: complex
    z: np.ndarray
    dz: np.ndarray
    g: np.ndarray
    gp: np.ndarray
    w0: np.ndarray
    fvals: np.ndarray  # (sign, n-2, node), not rho-weighted
    base: np.ndarray  # (n-2,): -(1/2 pi i) integral g^(n-1) w0 dz
    cols: np.ndarray  # (n-2, sign, m-2): same with rho^(m-1) f in place of w0


def _build_circle(T: TorusData, forms: dict, center: complex, n_max: int,
                  rho: float, radius: float, m: int) -> CircleCache:
    lat = T.lattice
    z, dz = _circle_nodes(center, radius, m)
    s = zeta(z, lat) - zeta(z - T.v, lat)
    gv = T.a * s + T.b
    gp = T.a * (wp_eval(z - T.v, lat) - wp_eval(z, lat))
    w0 = s - xi_raw(T.v, lat)
    dplus = wp_derivs(z - T.v, lat, n_max - 2)
    dminus = wp_derivs(z, lat, n_max - 2)
    width = n_max - 1
    fvals = np.empty((2, width, m), dtype=complex)
    for n in range(2, n_max + 1):
        fvals[0, n - 2] = forms[(0, n)].value_from_derivs(dplus)
        fvals[1, n - 2] = forms[(1, n)].value_from_derivs(dminus)
    powers = gv ** np.arange(1, n_max)[:, None]  # g^(n-1) for n = 2..n_max
    base = -np.sum(powers * w0 * dz, axis=1) / (2j * np.pi)
    rhow = rho ** np.arange(1, n_max)  # rho^(m-1)
    weighted = rhow[None, :, None] * fvals  # (sign, m-2, node)
    cols = -np.einsum("in,smn,n->ism", powers, weighted, dz) / (2j * np.pi)
    return CircleCache(center=center, z=z, dz=dz, g=gv, gp=gp, w0=w0,
                       fvals=fvals, base=base, cols=cols)


@dataclass
class GluingState:
    """All data of the opened surface at one parameter point.

    mode "cyclic" closes the layer sequence with period len(tori);
    mode "window" stores logical layers k_lo..k_lo+len(tori)-1 and folds
    indices beyond the ends back by the (even) tail periods, which
    preserves layer parity.
    """

    t: float
    tori: list[TorusData]
    mode: str
    k_lo: int
    epsilon: float
    rho: float
    n_max: int = DEFAULT_N_MAX
    tau_ref: complex = 0j
    q0_ref: complex = 0j
    left_period: int = 2
    right_period: int = 2
    n_buffer: int = 0
    circle_nodes: int = DEFAULT_CIRCLE_NODES
    _forms: list = field(default=None, repr=False, compare=False)
    _circles: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("cyclic", "window"):
            raise ValueError("mode must be 'cyclic' or 'window'")
        if self.t < 0:
            raise ValueError("gluing scale t must be nonnegative")
        if self.rho > self.epsilon / 4 + 1e-15:
            raise ValueError("series radius must satisfy rho <= epsilon/4")
        if self._forms is None:
            self.refresh()

    @classmethod
    def central(cls, cfg: Configuration, t: float, K: int | None = None,
                n_buffer: int = 3, n_max: int = DEFAULT_N_MAX,
                circle_nodes: int = DEFAULT_CIRCLE_NODES,
                force_window: bool = False,
                epsilon: float | None = None) -> "GluingState":
        """State at the central data of a configuration: a = -1/2,
        bhat = 0, tau_k and v_k the alternating reflections of tau, q_k."""

        def tail_period(tail):
            return len(tail) if len(tail) % 2 == 0 else 2 * len(tail)

        if cfg.is_periodic() and not force_window:
            n = math.lcm(cfg.period(), 2)
            ks = range(n)
            mode, k_lo, buf = "cyclic", 0, 0
            p_l = p_r = n
        else:
            if K is None:
                K = max(8, cfg.K + 1)
            if K < cfg.K:
                raise ValueError("window half-width K must cover the configuration")
            p_l = tail_period(cfg.left_tail)
            p_r = tail_period(cfg.right_tail)
            buf = max(n_buffer, p_l, p_r)
            ks = range(-K - buf, K + buf + 1)
            mode, k_lo = "window", -K - buf
        tori = [
            TorusData(a=-0.5, bhat=0j, tau=mirror_conj(cfg.tau, k),
                      v=mirror_conj(cfg.q(k), k))
            for k in ks
        ]
        eps = _chart_radius(tori) if epsilon is None else epsilon
        return cls(t=t, tori=tori, mode=mode, k_lo=k_lo, epsilon=eps,
                   rho=eps / 4, n_max=n_max, tau_ref=cfg.tau, q0_ref=cfg.q(0),
                   left_period=p_l, right_period=p_r, n_buffer=buf,
                   circle_nodes=circle_nodes)

    @property
    def n_tori(self) -> int:
        return len(self.tori)

    @property
    def k_hi(self) -> int:
        return self.k_lo + self.n_tori - 1

    @property
    def contour_radius(self) -> float:
        return 0.5 * self.epsilon

    def index_of(self, k: int) -> int:
        if self.mode == "cyclic":
            return k % self.n_tori
        if self.k_lo <= k <= self.k_hi:
            return k - self.k_lo
        if k > self.k_hi:
            return self.k_hi - ((self.k_hi - k) % self.right_period) - self.k_lo
        return (k - self.k_lo) % self.left_period

    def torus(self, k: int) -> TorusData:
        return self.tori[self.index_of(k)]

    def logical_range(self) -> range:
        return range(self.k_lo, self.k_hi + 1)

    def refresh(self, only: int | None = None) -> None:
        """Rebuild form and contour caches, for one stored torus or all.

        Must be called after mutating torus parameters; caches do not
        depend on t, so rescaling t alone needs no refresh.
        """
        if self._forms is None or only is None:
            self._forms = [None] * self.n_tori
            self._circles = [None] * self.n_tori
            todo = range(self.n_tori)
        else:
            todo = [only]
        r = self.contour_radius
        for j in todo:
            T = self.tori[j]
            forms = _build_forms(T, self.n_max, r, self.circle_nodes)
            self._forms[j] = forms
            self._circles[j] = {
                "node": _build_circle(T, forms, T.v, self.n_max, self.rho, r,
                                      self.circle_nodes),
                "zero": _build_circle(T, forms, 0.0, self.n_max, self.rho, r,
                                      self.circle_nodes),
            }

    def form(self, k: int, sign: str, n: int) -> SecondKindForm:
        if not 2 <= n <= self.n_max:
            raise ValueError(f"order must lie in [2, {self.n_max}]")
        return self._forms[self.index_of(k)][(_SIGNS[sign], n)]

    def circle(self, k: int, side: str) -> CircleCache:
        """Cached contour around 0_k (side 'zero') or v_k (side 'node')."""
        return self._circles[self.index_of(k)][side]


@dataclass(frozen=True)
class OmegaSeries:
    """Fixed-point coefficients of the glued 1-form.

    lam[j, s, n-2] is the coefficient for stored torus j, sign s
    (0 for +, 1 for -), order n.  update_norms records the sup-norm
    of each iteration's step; contraction_estimate is the operator
    norm of the linear part of the update map.
    """

    lam: np.ndarray
    n_max: int
    converged: bool
    contraction_estimate: float
    update_norms: tuple[float, ...]


def _fixed_point_system(st: GluingState):
    """Assemble lambda -> b + M lambda realizing the neck-matching map.

    Row (j,+,n) integrates over the circle at 0 of the next layer, row
    (j,-,n) over the circle at v of the previous one; both carry the
    prefactor (t^2/rho)^(n-1).
    """
    width = st.n_max - 1
    dim = st.n_tori * 2 * width
    mat = np.zeros((dim, dim), dtype=complex)
    vec = np.zeros(dim, dtype=complex)
    pref = (st.t ** 2 / st.rho) ** np.arange(1, st.n_max)
    for j in range(st.n_tori):
        k = st.k_lo + j
        for srow, (step, side) in enumerate(((1, "zero"), (-1, "node"))):
            jn = st.index_of(k + step)
            cc = st._circles[jn][side]
            rows = slice((j * 2 + srow) * width, (j * 2 + srow + 1) * width)
            cols = slice(jn * 2 * width, (jn + 1) * 2 * width)
            vec[rows] = pref * cc.base
            mat[rows, cols] += pref[:, None] * cc.cols.reshape(width, 2 * width)
    return mat, vec


def fix_omega(st: GluingState, fix_tol: float = FIX_TOL,
              max_iter: int = 500) -> OmegaSeries:
    """Iterate the neck-matching map from lambda = 0 to its fixed point.

    Raises NonContractionError outside the contraction regime
    (t^2 >= rho*epsilon, or estimated contraction factor >= 1).
    """
    if st.t ** 2 >= st.rho * st.epsilon:
        raise NonContractionError(
            f"t^2 = {st.t**2:.3e} is not below rho*epsilon = {st.rho * st.epsilon:.3e}"
        )
    mat, vec = _fixed_point_system(st)
    est = float(np.max(np.sum(np.abs(mat), axis=1)))
    if est >= 1.0:
        raise NonContractionError(f"contraction estimate {est:.3f} >= 1")
    width = st.n_max - 1
    lam = np.zeros(st.n_tori * 2 * width, dtype=complex)
    norms = []
    converged = False
    for _ in range(max_iter):
        new = vec + mat @ lam
        step = float(np.max(np.abs(new - lam))) if lam.size else 0.0
        norms.append(step)
        lam = new
        if step < fix_tol:
            converged = True
            break
    return OmegaSeries(lam=lam.reshape(st.n_tori, 2, width), n_max=st.n_max,
                       converged=converged, contraction_estimate=est,
                       update_norms=tuple(norms))


def _gap_midpoint(*fracs: float) -> float:
    """Offset in [0,1) farthest from the given fractional positions."""
    pts = sorted({f % 1.0 for f in fracs})
    best_gap, best = -1.0, 0.0
    for i, lo in enumerate(pts):
        hi = pts[i + 1] if i + 1 < len(pts) else pts[0] + 1.0
        if hi - lo > best_gap:
            best_gap, best = hi - lo, (lo + hi) / 2.0
    return best % 1.0


def path_base(T: TorusData) -> complex:
    """Base point whose straight cycle representatives stay as far as
    possible from both poles; the two lattice directions decouple."""
    vx, vy = lattice_coords(T.v, T.tau)
    x0 = _gap_midpoint(0.0, float(vx))
    y0 = _gap_midpoint(0.0, float(vy))
    return x0 + y0 * T.tau


def gauss_component(st: GluingState, k: int, z):
    """g_k, the degree-2 elliptic building block of the Gauss map."""
    return st.torus(k).g(z)


def neck_coordinate(st: GluingState, k: int, sign: str, z) -> complex:
    """Chart value w = 1/g_k(z) near v_k (sign +) or 0_k (sign -)."""
    T = st.torus(k)
    w = 1.0 / T.g(z)
    if abs(w) >= CHART_MARGIN * st.epsilon:
        raise ChartError(f"|1/g| = {abs(w):.3e} outside the chart")
    pole = T.v if _SIGNS[sign] == 0 else 0.0
    other = 0.0 if _SIGNS[sign] == 0 else T.v
    if torus_distance(z, pole, T.tau) > torus_distance(z, other, T.tau):
        raise ChartError("point belongs to the opposite chart")
    return complex(w)


def neck_point(st: GluingState, k: int, sign: str, w):
    """Inverse chart map; w may be an array inside |w| < 2 epsilon."""
    if np.any(np.abs(w) >= CHART_MARGIN * st.epsilon):
        raise ChartError("coordinate outside the chart radius")
    return _invert_chart(st.torus(k), sign, w)


def third_kind_form(st: GluingState, k: int, p: complex, q: complex, z):
    """Meromorphic form on layer k with residues +1 at p and -1 at q and
    imaginary periods; returned as its density against dz."""
    lat = st.torus(k).lattice
    val = zeta(z - p, lat) - zeta(z - q, lat) - xi_raw(q - p, lat)
    return val if np.asarray(val).shape else complex(val)


def second_kind_form(st: GluingState, k: int, sign: str, n: int, z,
                     alpha_normalized: bool = False):
    """Density of the order-n neck form on layer k.

    With alpha_normalized the first period vanishes instead of being
    imaginary; that variant feeds the slow integral cross-check.
    """
    return st.form(k, sign, n).value(z, alpha_normalized)


def _omega0(T: TorusData, z):
    lat = T.lattice
    return zeta(z, lat) - zeta(z - T.v, lat) - xi_raw(T.v, lat)


def omega_eval(st: GluingState, series: OmegaSeries, k: int, z):
    """Density of the glued form on layer k at points of that torus."""
    j = st.index_of(k)
    T = st.tori[j]
    lat = T.lattice
    za = np.asarray(z, dtype=complex)
    val = np.asarray(_omega0(T, za), dtype=complex)
    row = series.lam[j]
    if np.any(row != 0):
        dplus = wp_derivs(za - T.v, lat, st.n_max - 2)
        dminus = wp_derivs(za, lat, st.n_max - 2)
        for n in range(2, st.n_max + 1):
            lp, lm = row[0, n - 2], row[1, n - 2]
            w = st.rho ** (n - 1)
            if lp != 0:
                val = val + w * lp * st._forms[j][(0, n)].value_from_derivs(dplus)
            if lm != 0:
                val = val + w * lm * st._forms[j][(1, n)].value_from_derivs(dminus)
    return val if val.shape else complex(val)


def omega_on_circle(st: GluingState, series: OmegaSeries, k: int, side: str):
    """Density of the glued form at the cached contour nodes of layer k."""
    j = st.index_of(k)
    cc = st._circles[j][side]
    row = series.lam[j]
    rhow = st.rho ** np.arange(1, st.n_max)
    val = cc.w0 + np.einsum("s m, s m n -> n", row * rhow[None, :], cc.fvals)
    return val


@dataclass(frozen=True)
class NeckLaurent:
    """Laurent data of the glued form in the plus chart of one neck.

    The density against dw is c0/w + sum c_plus[n-1] w^(n-1)
    + sum t^(2n) c_minus[n-1] / w^(n+1); it converges on the annulus
    t^2/(2 epsilon) < |w| < 2 epsilon.
    """

    k: int
    t: float
    epsilon: float
    c0: complex
    c_plus: tuple[complex, ...]
    c_minus: tuple[complex, ...]

    def value(self, w):
        wa = np.asarray(w, dtype=complex)
        lo = self.t ** 2 / (CHART_MARGIN * self.epsilon)
        if np.any(np.abs(wa) >= CHART_MARGIN * self.epsilon) or np.any(np.abs(wa) <= lo):
            raise ChartError("outside the neck annulus")
        val = self.c0 / wa
        for n, c in enumerate(self.c_plus, start=1):
            val = val + c * wa ** (n - 1)
        for n, c in enumerate(self.c_minus, start=1):
            val = val + (self.t ** (2 * n) * c) * wa ** (-n - 1)
        return val if val.shape else complex(val)


def laurent_coeffs(st: GluingState, series: OmegaSeries, k: int,
                   max_n: int) -> NeckLaurent:
    """Contour-extracted Laurent data of the glued form in chart + of
    layer k; the singular side comes from layer k+1 through the neck."""
    ccv = st.circle(k, "node")
    wv = omega_on_circle(st, series, k, "node")
    c0 = complex(np.sum(wv * ccv.dz) / (2j * np.pi))
    c_plus = tuple(
        complex(np.sum(ccv.g ** n * wv * ccv.dz) / (2j * np.pi))
        for n in range(1, max_n + 1)
    )
    cc0 = st.circle(k + 1, "zero")
    w0v = omega_on_circle(st, series, k + 1, "zero")
    c_minus = tuple(
        complex(-np.sum(cc0.g ** n * w0v * cc0.dz) / (2j * np.pi))
        for n in range(1, max_n + 1)
    )
    return NeckLaurent(k=k, t=st.t, epsilon=st.epsilon, c0=c0,
                       c_plus=c_plus, c_minus=c_minus)
