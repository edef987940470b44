"""Paired solves and decay reports for stacks that straighten out.

A defect configuration that agrees with a periodic one on the upper half
k >= 0 produces a surface asymptotic to the periodic surface as the
height grows.  This module solves both problems on identical windows,
measures per-layer parameter and form differences, fits the geometric
decay rate, and compares the two meshes after unwinding whole periods.
"""

import math
from dataclasses import dataclass

import numpy as np

from .configs import Configuration
from .opening import GluingState, OmegaSeries, fix_omega, omega_on_circle
from .solver import newton_continuation
from .immersion import SurfaceMesh, weierstrass_phi

AGREE_TOL = 1e-12
FIT_FLOOR = 1e-14


class DegenerateFitError(RuntimeError):
    """Every fitted difference sits below the noise floor."""


@dataclass
class DecayReport:
    """Per-layer differences between a defect stack and its periodic
    reference, with the log-linear fit over the trusted upper half."""

    ks: list[int]
    d: np.ndarray
    w: np.ndarray
    rate: float
    r_squared: float
    fit_ks: list[int]
    t: float

    def rows(self) -> list[tuple[int, float, float]]:
        return [(k, float(self.d[i]), float(self.w[i]))
                for i, k in enumerate(self.ks)]

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "rate": self.rate,
            "r_squared": self.r_squared,
            "fit_ks": list(self.fit_ks),
            "rows": [{"k": k, "d": d, "w": w} for k, d, w in self.rows()],
        }


def upper_reference(cfg_defect: Configuration) -> Configuration:
    """Periodic configuration that extends the defect's upper tail to all
    layers; this is the reference the defect converges to going up."""
    tail = cfg_defect.right_tail
    n = len(tail)
    win = tuple(tail[k % n] for k in range(-n, n + 1))
    return Configuration(tau=cfg_defect.tau, window=win,
                         left_tail=tail, right_tail=tail)


def pair_solve(cfg: Configuration, cfg_defect: Configuration, t: float,
               K: int | None = None, tol: float = 1e-11,
               circle_nodes: int | None = None, callback=None):
    """Solve the periodic reference and the defect on identical windows.

    The reference is forced into window mode so both states share the
    window extent, clamped tails, and quadrature settings.  Returns the
    two solved states (reference first).
    """
    if not cfg.is_periodic():
        raise ValueError("reference configuration must be periodic")
    if K is None:
        K = max(8, cfg_defect.K + 1)
    if abs(cfg.tau - cfg_defect.tau) > AGREE_TOL:
        raise ValueError("pair must share the lattice")
    horizon = 3 * K + 6
    for k in range(horizon):
        if abs(cfg.q(k) - cfg_defect.q(k)) > AGREE_TOL:
            raise ValueError(
                f"configurations disagree at layer {k}; the defect must "
                "match the reference for k >= 0")
    # shared chart radius: the defect's separations are a superset of the
    # reference's, so the forms must be compared on the tighter circles
    eps = min(
        GluingState.central(cfg, 0.0, K=K, force_window=True).epsilon,
        GluingState.central(cfg_defect, 0.0, K=K, force_window=True).epsilon)
    rep_p = newton_continuation(cfg, t, K=K, tol=tol, epsilon=eps,
                                circle_nodes=circle_nodes, force_window=True,
                                callback=callback)
    rep_d = newton_continuation(cfg_defect, t, K=K, tol=tol, epsilon=eps,
                                circle_nodes=circle_nodes, force_window=True,
                                callback=callback)
    st_p, st_d = rep_p.state, rep_d.state
    if st_p.k_lo != st_d.k_lo or len(st_p.tori) != len(st_d.tori):
        raise RuntimeError("paired windows came out misaligned")
    return st_p, st_d


def parameter_rows(st_a: GluingState, st_b: GluingState) -> dict[int, float]:
    """Sup difference of the torus quadruple (a, bhat, tau, v) per layer."""
    shared = [k for k in st_a.logical_range() if k in st_b.logical_range()]
    out = {}
    for k in shared:
        Ta, Tb = st_a.torus(k), st_b.torus(k)
        out[k] = max(abs(Ta.a - Tb.a), abs(Ta.bhat - Tb.bhat),
                     abs(Ta.tau - Tb.tau), abs(Ta.v - Tb.v))
    return out


def form_rows(st_a: GluingState, series_a: OmegaSeries,
              st_b: GluingState, series_b: OmegaSeries) -> dict[int, float]:
    """Sup difference of the glued form over each layer's chart circles.

    Circles at matching chart angles are corresponding points of the two
    surfaces, so the pointwise gap is the pulled-back form difference.
    """
    shared = [k for k in st_a.logical_range() if k in st_b.logical_range()]
    out = {}
    for k in shared:
        gap = 0.0
        for side in ("zero", "node"):
            wa = omega_on_circle(st_a, series_a, k, side)
            wb = omega_on_circle(st_b, series_b, k, side)
            gap = max(gap, float(np.max(np.abs(wa - wb))))
        out[k] = gap
    return out


def differential_rows(st_a: GluingState, series_a: OmegaSeries,
                      st_b: GluingState, series_b: OmegaSeries
                      ) -> dict[int, float]:
    """Sup difference of the immersion differential on each layer."""
    shared = [k for k in st_a.logical_range() if k in st_b.logical_range()]
    out = {}
    for k in shared:
        za = st_a.circle(k, "node").z
        zb = st_b.circle(k, "node").z
        pa = np.asarray(weierstrass_phi(k, za, st_a, series_a))
        pb = np.asarray(weierstrass_phi(k, zb, st_b, series_b))
        out[k] = float(np.max(np.abs(pa - pb)))
    return out


def _window_halfwidth(st: GluingState) -> int:
    return st.k_lo + len(st.tori) - 1 - st.n_buffer


def _log_fit(ks: list[int], vals: np.ndarray) -> tuple[float, float]:
    y = np.log(vals)
    x = np.asarray(ks, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return -float(slope), r2


def decay_fit(st_periodic: GluingState, st_defect: GluingState,
              series_periodic: OmegaSeries | None = None,
              series_defect: OmegaSeries | None = None) -> DecayReport:
    """Fit log d_k against k over the trusted upper half of the window.

    The fit runs over 1 <= k <= K-2; layer 0 carries the defect itself
    and the last two layers feel the clamped tail.  Entries below
    FIT_FLOOR are dropped from the log fit (they are double-precision
    residue, not measurements); when every entry is below the floor the
    fit is refused with DegenerateFitError.
    """
    if series_periodic is None:
        series_periodic = fix_omega(st_periodic)
    if series_defect is None:
        series_defect = fix_omega(st_defect)
    d = parameter_rows(st_periodic, st_defect)
    w = form_rows(st_periodic, series_periodic, st_defect, series_defect)
    ks = sorted(d)
    half = _window_halfwidth(st_defect)
    fit_ks = [k for k in ks if 1 <= k <= half - 2]
    if not fit_ks:
        raise DegenerateFitError("window too narrow for a fit")
    fit_vals = np.array([d[k] for k in fit_ks])
    if np.all(fit_vals < FIT_FLOOR):
        raise DegenerateFitError(
            f"all fitted differences below {FIT_FLOOR:g}; nothing to fit")
    keep = fit_vals >= FIT_FLOOR
    kept_ks = [k for k, m in zip(fit_ks, keep) if m]
    if len(kept_ks) < 2:
        raise DegenerateFitError(
            f"fewer than two differences above {FIT_FLOOR:g}; cannot fit a rate")
    rate, r2 = _log_fit(kept_ks, fit_vals[keep])
    return DecayReport(ks=ks, d=np.array([d[k] for k in ks]),
                       w=np.array([w[k] for k in ks]), rate=rate,
                       r_squared=r2, fit_ks=kept_ks, t=st_defect.t)


def _frame_xyz(frame) -> np.ndarray:
    return np.asarray(frame.position, dtype=float)


def _layer_points(mesh: SurfaceMesh, k: int) -> np.ndarray:
    base = mesh.reports["layer_base"][k]
    count = mesh.reports["layer_len"][k]
    return mesh.raw[base:base + count]


def tpms_comparison(mesh_periodic: SurfaceMesh, mesh_defect: SurfaceMesh,
                    ell: int, period: int = 2) -> float:
    """Hausdorff-type gap after unwinding ell whole periods.

    The period vector comes from the periodic mesh frames; the defect
    mesh is translated by -ell periods and compared layer against layer
    (k versus k + ell*period), after aligning the frames at the largest
    shared k.  Meshes are cheaper to pass than re-deriving them from
    states for every ell.
    """
    from scipy.spatial import cKDTree

    if period % 2 != 0:
        raise ValueError("period must be even")
    fp = {f.k: f for f in mesh_periodic.frames}
    fd = {f.k: f for f in mesh_defect.frames}
    ks_p = sorted(fp)
    anchor = next(k for k in ks_p if k + period in fp)
    T = _frame_xyz(fp[anchor + period]) - _frame_xyz(fp[anchor])
    shift_ks = [k for k in ks_p
                if k >= 1 and k + ell * period in fd
                and k in mesh_periodic.reports["layer_base"]
                and k + ell * period in mesh_defect.reports["layer_base"]]
    if not shift_ks:
        raise ValueError(f"no comparable layers at ell={ell}")
    k_top = max(shift_ks)
    align = (_frame_xyz(fd[k_top + ell * period]) - ell * T
             - _frame_xyz(fp[k_top]))
    worst = 0.0
    for k in shift_ks:
        P = _layer_points(mesh_periodic, k)
        Q = _layer_points(mesh_defect, k + ell * period) - ell * T - align
        d_pq = float(np.max(cKDTree(P).query(Q)[0]))
        d_qp = float(np.max(cKDTree(Q).query(P)[0]))
        worst = max(worst, d_pq, d_qp)
    return worst
