"""Triangulated immersions of solved opened-node states.

The Weierstrass data on layer k is the Gauss map (t*g_k)^((-1)^(k+1))
together with the height differential t*omega.  Each layer contributes
a doubly periodic graph-like patch of its torus with the two chart
disks removed; consecutive patches are joined through neck annuli
integrated term by term in the chart coordinate.  Positions are
recovered from the antiderivative triple (F+, F-, H) with

    x1 + i x2 = (conj(F-) - F+) / 2,      x3 = Re H,

where F+- integrate the Gauss map to the power +-1 against the height
differential.  Per-layer frames track a base point on every torus and
carry the vertical spacing data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .elliptic import lattice_coords, reduce_centered
from .opening import (
    ChartError,
    GluingState,
    NeckLaurent,
    OmegaSeries,
    laurent_coeffs,
    mirror_conj,
    neck_point,
    omega_eval,
    path_base,
)

GRID_RES = 64
NECK_RINGS = 16
NECK_SPOKES = 64
# evaluation-side Laurent order; the seam sits at |w| = eps where the
# truncation error decays only like 2^-n, so this must exceed the order
# carried by the gluing solve
LAURENT_ORDER = 32
LOOP_TOL = 1e-8
TAIL_TOL = 1e-7
CUT_FACTOR = 1.25  # layer grids keep |1/g| >= CUT_FACTOR * epsilon
SEG_NODES = 12
SEG_STEP = 0.04
MESH_BUFFER = 3  # window states: clamped boundary layers are not meshed


class LoopResidualError(RuntimeError):
    """A contractible mesh loop picked up a nonzero period."""


class CoefficientDecayError(RuntimeError):
    """Truncated neck series tail exceeds the accuracy target."""


def _near_rep(p: complex, ref: complex, tau: complex) -> complex:
    """Lattice representative of p closest to ref."""
    red, _, _ = reduce_centered(p - ref, tau)
    return ref + complex(red)


def _cell_rep(p: complex, corner: complex, tau: complex) -> complex:
    """Representative of p in the cell with the given corner."""
    x, y = lattice_coords(p - corner, tau)
    return corner + float(x) % 1.0 + (float(y) % 1.0) * tau


def _positions(triples: np.ndarray) -> np.ndarray:
    tr = np.asarray(triples)
    x12 = 0.5 * (np.conj(tr[..., 1]) - tr[..., 0])
    return np.stack([x12.real, x12.imag, tr[..., 2].real], axis=-1)


def _lattice_triple(shift: complex, tau: complex, alpha: np.ndarray,
                    beta: np.ndarray) -> np.ndarray:
    """Period triple of the lattice vector shift = m + n*tau."""
    x, y = lattice_coords(shift, tau)
    return round(float(x)) * alpha + round(float(y)) * beta


def weierstrass_phi(k: int, z, st: GluingState, series: OmegaSeries):
    """Densities (phi1, phi2, phi3) of the Weierstrass forms against dz.

    phi3 is the height density t*omega; phi1, phi2 combine the Gauss
    map and its reciprocal.  Points inside the neck (|1/g| <= t) raise
    ChartError.
    """
    T = st.torus(k)
    za = np.asarray(z, dtype=complex)
    gv = np.asarray(T.g(za), dtype=complex)
    if np.any(np.abs(gv) * st.t >= 1.0):
        raise ChartError("point lies below the neck waist")
    W = np.asarray(omega_eval(st, series, k, za), dtype=complex)
    div = W / gv
    mul = (st.t * st.t) * gv * W
    gdh, gidh = (div, mul) if k % 2 == 0 else (mul, div)
    phi1 = 0.5 * (gidh - gdh)
    phi2 = 0.5j * (gidh + gdh)
    phi3 = st.t * W
    if phi1.shape == ():
        return complex(phi1), complex(phi2), complex(phi3)
    return phi1, phi2, phi3


def _diffs(st: GluingState, series: OmegaSeries, k: int, z) -> np.ndarray:
    """Integrand triple (F+', F-', H') against dz at layer-k points."""
    T = st.torus(k)
    za = np.asarray(z, dtype=complex)
    gv = np.asarray(T.g(za), dtype=complex)
    W = np.asarray(omega_eval(st, series, k, za), dtype=complex)
    div = W / gv
    mul = (st.t * st.t) * gv * W
    gdh, gidh = (div, mul) if k % 2 == 0 else (mul, div)
    return np.stack([gdh, gidh, st.t * W], axis=-1)


def _segment_triple(st: GluingState, series: OmegaSeries, k: int,
                    z0: complex, z1: complex) -> np.ndarray:
    """Integral of the triple along the straight segment z0 -> z1."""
    vec = z1 - z0
    pieces = max(1, int(math.ceil(abs(vec) / SEG_STEP)))
    x, wgt = leggauss(SEG_NODES)
    s = (np.arange(pieces)[:, None] + 0.5 * (x[None, :] + 1.0)) / pieces
    vals = _diffs(st, series, k, z0 + s.ravel() * vec)
    vals = vals.reshape(pieces, SEG_NODES, 3)
    return np.einsum("n, p n c -> c", 0.5 * wgt / pieces, vals) * vec


def _edge_triples(st: GluingState, series: OmegaSeries, k: int,
                  z0s: np.ndarray, vec: complex, nodes: int = 4) -> np.ndarray:
    """Batched straight-edge integrals sharing one direction vector."""
    x, wgt = leggauss(nodes)
    s = 0.5 * (x + 1.0)
    zs = z0s[:, None] + s[None, :] * vec
    vals = _diffs(st, series, k, zs.ravel()).reshape(len(z0s), nodes, 3)
    return np.einsum("n, e n c -> e c", 0.5 * wgt, vals) * vec


def _cycle_triples(st: GluingState, series: OmegaSeries, k: int):
    """Period triples of the two lattice cycles of layer k."""
    z0 = path_base(st.torus(k))
    alpha = _segment_triple(st, series, k, z0, z0 + 1.0)
    beta = _segment_triple(st, series, k, z0, z0 + st.torus(k).tau)
    return alpha, beta


# ---------------------------------------------------------------------------
# neck annuli


def _swap_laurent(nl: NeckLaurent) -> NeckLaurent:
    """Laurent data of the same neck seen from the minus chart.

    Under w * w' = t^2 the roles of the regular and singular tails
    exchange and every coefficient flips sign with the residue.
    """
    return NeckLaurent(k=nl.k, t=nl.t, epsilon=nl.epsilon, c0=-nl.c0,
                       c_plus=tuple(-c for c in nl.c_minus),
                       c_minus=tuple(-c for c in nl.c_plus))


def _power_coeffs(nl: NeckLaurent) -> dict[int, complex]:
    coeffs = {-1: nl.c0}
    for n, c in enumerate(nl.c_plus, start=1):
        coeffs[n - 1] = coeffs.get(n - 1, 0.0) + c
    for n, c in enumerate(nl.c_minus, start=1):
        coeffs[-n - 1] = coeffs.get(-n - 1, 0.0) + nl.t ** (2 * n) * c
    return coeffs


def _series_triple(nl: NeckLaurent, parity_even: bool):
    """Power coefficients of (F+', F-', H') against dw in one chart."""
    base = _power_coeffs(nl)
    t = nl.t
    div = {m + 1: c for m, c in base.items()}
    mul = {m - 1: t * t * c for m, c in base.items()}
    hgt = {m: t * c for m, c in base.items()}
    if parity_even:
        return div, mul, hgt
    return mul, div, hgt


def _antiderivative(alpha: dict[int, complex], r, theta) -> np.ndarray:
    """Antiderivative of sum alpha_m w^m on the cut chart theta in [0, 2pi)."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
    for m in sorted(alpha):
        c = alpha[m]
        if m == -1:
            out = out + c * (np.log(r) + 1j * theta)
        else:
            out = out + (c / (m + 1)) * r ** (m + 1) * np.exp(1j * (m + 1) * theta)
    return out


def _sheet_values(nl: NeckLaurent, parity_even: bool, radii: np.ndarray,
                  thetas: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Raw triples on the (ring, spoke) grid, anchored at (radii[0], 0)."""
    series = _series_triple(nl, parity_even)
    vals = np.empty((len(radii), len(thetas), 3), dtype=complex)
    for c, alpha in enumerate(series):
        av = _antiderivative(alpha, radii[:, None], thetas[None, :])
        vals[:, :, c] = av - _antiderivative(alpha, radii[0], 0.0)
    return vals + np.asarray(anchor, dtype=complex)[None, None, :]


def _tail_estimate(nl: NeckLaurent) -> tuple[float, float]:
    """Magnitude of the last retained density terms at the chart edges."""
    n = len(nl.c_plus)
    reg = abs(nl.c_plus[-1]) * nl.epsilon ** (n - 1) if n else 0.0
    sing = abs(nl.c_minus[-1]) * nl.t ** (n - 1) if len(nl.c_minus) else 0.0
    return reg * nl.epsilon, sing * nl.epsilon


@dataclass
class NeckField:
    """Integrated triples on both half-annuli of one neck.

    plus[j, s] sits at w = radii[j] exp(i thetas[s]) in the chart of
    layer k; minus[j, s] at w' = radii[j] exp(i thetas[s]) in the chart
    of layer k+1.  Row 0 is the seam |w| = epsilon, the last row the
    waist |w| = t.  Waist points pair by spoke s <-> (spokes - s) mod
    spokes.
    """

    k: int
    radii: np.ndarray
    thetas: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    laurent: NeckLaurent
    tail_plus: float
    tail_minus: float
    weld_defect: float

    def height_increment(self) -> float:
        lo = float(self.minus[0, 0, 2].real - self.minus[-1, 0, 2].real)
        hi = float(self.plus[-1, 0, 2].real - self.plus[0, 0, 2].real)
        return hi - lo


def _waist_transfer(nl: NeckLaurent, k: int, t: float,
                    eps: float) -> np.ndarray:
    """Triple increment from (eps, 0) on the plus sheet of neck k to
    (eps, 0) on the minus sheet, through the waist along spoke zero."""
    down = _series_triple(nl, k % 2 == 0)
    up = _series_triple(_swap_laurent(nl), (k + 1) % 2 == 0)
    out = np.array([_antiderivative(c, t, 0.0) - _antiderivative(c, eps, 0.0)
                    for c in down], dtype=complex)
    out += np.array([_antiderivative(c, eps, 0.0) - _antiderivative(c, t, 0.0)
                     for c in up], dtype=complex)
    return out


def integrate_neck(k: int, st: GluingState, series: OmegaSeries,
                   rings: int = NECK_RINGS, spokes: int = NECK_SPOKES,
                   plus_anchor=None, minus_anchor=None,
                   laurent: NeckLaurent | None = None) -> NeckField:
    """Integrate the neck between layers k and k+1 on a log-radial grid.

    Anchors are raw triples at the seam point (epsilon, theta=0) of each
    side.  A missing minus anchor is derived from the plus side by
    transporting through the waist, so a standalone neck welds cleanly;
    the weld defect then reports the residual of the two-chart matching
    over the remaining spokes.
    """
    if st.t <= 0.0:
        raise ValueError("neck integration needs t > 0")
    nl = laurent if laurent is not None else laurent_coeffs(
        st, series, k, LAURENT_ORDER)
    tail = _tail_estimate(nl)
    if max(tail) > TAIL_TOL:
        raise CoefficientDecayError(
            f"neck {k} series tail {max(tail):.2e} exceeds {TAIL_TOL:.0e}")
    eps = st.epsilon
    radii = eps * (st.t / eps) ** (np.arange(rings + 1) / rings)
    thetas = 2.0 * np.pi * np.arange(spokes) / spokes
    if plus_anchor is None:
        plus_anchor = np.zeros(3, dtype=complex)
    if minus_anchor is None:
        minus_anchor = plus_anchor + _waist_transfer(nl, k, st.t, eps)
    plus = _sheet_values(nl, k % 2 == 0, radii, thetas, plus_anchor)
    minus = _sheet_values(_swap_laurent(nl), (k + 1) % 2 == 0, radii, thetas,
                          minus_anchor)
    pair = (spokes - np.arange(spokes)) % spokes
    gap = _positions(plus[-1]) - _positions(minus[-1])[pair]
    weld = float(np.max(np.linalg.norm(gap, axis=-1)))
    return NeckField(k=k, radii=radii, thetas=thetas, plus=plus, minus=minus,
                     laurent=nl, tail_plus=tail[0], tail_minus=tail[1],
                     weld_defect=weld)


def neck_flux(nl: NeckLaurent, k_parity_even: bool) -> np.ndarray:
    """Flux vector of the waist cycle from the Laurent data."""
    t2 = nl.t * nl.t
    fp = 2j * np.pi * t2 * (nl.c_minus[0] if k_parity_even else nl.c_plus[0])
    fm = 2j * np.pi * t2 * (nl.c_plus[0] if k_parity_even else nl.c_minus[0])
    fh = 2j * np.pi * nl.t * nl.c0
    return np.array([(0.5 * (fm - fp)).imag, (0.5j * (fm + fp)).imag, fh.imag])


# ---------------------------------------------------------------------------
# layer patches


@dataclass
class LayerPatch:
    """Graph-like triangulated patch of one layer torus.

    Vertices carry unreduced plane coordinates of the cell spanned from
    corner; triples are raw (F+, F-, H) values anchored at the tree
    root.  seam maps each side to the ring vertex index array; faces
    index into the local vertex list.
    """

    k: int
    corner: complex
    verts_z: np.ndarray
    triples: np.ndarray
    faces: np.ndarray
    seam: dict[str, np.ndarray]
    centers: dict[str, complex]
    root_local: int
    root_z: complex
    alpha: np.ndarray
    beta: np.ndarray
    loop_defect: float
    stitch_defect: float


def _mesh_corner(T) -> complex:
    """Cell corner maximizing edge clearance from both chart centers."""
    edge = np.linspace(0.0, 1.0, 33)
    centers = (0.0, T.v)
    best, best_score = 0.0, -1.0
    for fx in np.linspace(0.0, 0.95, 20):
        for fy in np.linspace(0.0, 0.95, 20):
            z0 = fx + fy * T.tau
            pts = np.concatenate([z0 + edge, z0 + edge * T.tau,
                                  z0 + 1.0 + edge * T.tau, z0 + T.tau + edge])
            score = min(
                float(np.min(np.abs(reduce_centered(pts - c, T.tau)[0])))
                for c in centers)
            if score > best_score:
                best_score, best = score, z0
    return best


def _hole_cycles(faces_w: np.ndarray) -> list[list[int]]:
    """Closed boundary walks of the kept region, in wrapped vertex ids."""
    counts: dict[tuple[int, int], int] = {}
    for f in faces_w:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    nbrs: dict[int, list[int]] = {}
    for (a, b), c in counts.items():
        if c == 1:
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)
    for v, ns in nbrs.items():
        if len(ns) != 2:
            raise RuntimeError("hole boundary is not a simple cycle; "
                               "use a finer grid")
    cycles, seen = [], set()
    for start in sorted(nbrs):
        if start in seen:
            continue
        walk, prev, cur = [start], None, start
        while True:
            a, b = nbrs[cur]
            nxt = b if a == prev else a
            if nxt == start:
                break
            walk.append(nxt)
            prev, cur = cur, nxt
        seen.update(walk)
        cycles.append(walk)
    return cycles


def _zip_band(ids_a: np.ndarray, ang_a: np.ndarray,
              ids_b: np.ndarray, ang_b: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangle strip between two angularly ordered closed loops."""
    na, nb = len(ids_a), len(ids_b)
    ia = int(np.argmin(ang_a))
    ib = int(np.argmin((ang_b - ang_a[ia]) % (2.0 * np.pi)))

    def unwrapped(ang, start, count, origin):
        out = [origin + ((ang[start] - origin + np.pi) % (2 * np.pi)) - np.pi]
        for s in range(1, count + 1):
            raw = ang[(start + s) % len(ang)]
            step = ((raw - out[-1] + np.pi) % (2.0 * np.pi)) - np.pi
            out.append(out[-1] + step)
        return out

    ua = unwrapped(ang_a, ia, na, ang_a[ia])
    ub = unwrapped(ang_b, ib, nb, ua[0])
    faces = []
    ca = cb = 0
    while ca < na or cb < nb:
        va = ids_a[(ia + ca) % na]
        vb = ids_b[(ib + cb) % nb]
        if cb >= nb or (ca < na and ua[ca + 1] <= ub[cb + 1]):
            faces.append((va, ids_a[(ia + ca + 1) % na], vb))
            ca += 1
        else:
            faces.append((va, ids_b[(ib + cb + 1) % nb], vb))
            cb += 1
    return faces


def integrate_layer(k: int, st: GluingState, series: OmegaSeries,
                    grid_res: int = GRID_RES,
                    spokes: int = NECK_SPOKES) -> LayerPatch:
    """Integrate the triple over a layer grid with the chart disks cut out.

    A spanning tree of the wrapped grid graph accumulates the values;
    every non-tree edge is checked against the period triple its wrap
    class prescribes and LoopResidualError is raised past LOOP_TOL.
    Seam rings at |1/g| = epsilon are appended on both sides and joined
    to the jagged cut boundary; ring values follow the neck Laurent arc
    from the spoke-0 anchor, and the worst disagreement with the direct
    tree route is recorded as the stitch defect.
    """
    T = st.torus(k)
    n = grid_res
    corner = _mesh_corner(T)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    zg = corner + (ii + jj * T.tau) / n
    gv = T.g(zg.ravel()).reshape(n, n)
    kept = 1.0 / np.abs(gv) >= CUT_FACTOR * st.epsilon
    if kept.all():
        raise RuntimeError("grid does not resolve the chart disks; "
                           "use a finer grid")

    vid = -np.ones((n, n), dtype=int)
    vid[kept] = np.arange(int(kept.sum()))
    nkept = int(kept.sum())

    # wrapped edges in the two lattice directions
    edges = []
    for di, dj, vec in ((1, 0, 1.0 / n), (0, 1, T.tau / n)):
        i2, j2 = (ii + di) % n, (jj + dj) % n
        ok = kept & kept[i2, j2]
        u = vid[ii[ok], jj[ok]]
        v = vid[i2[ok], j2[ok]]
        wrap_a = (ii[ok] + di >= n).astype(int)
        wrap_b = (jj[ok] + dj >= n).astype(int)
        tri = _edge_triples(st, series, k, zg[ok].ravel(), vec)
        edges.append((u, v, wrap_a, wrap_b, tri))

    alpha, beta = _cycle_triples(st, series, k)

    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(nkept)]
    flat_u = np.concatenate([e[0] for e in edges])
    flat_v = np.concatenate([e[1] for e in edges])
    flat_wa = np.concatenate([e[2] for e in edges])
    flat_wb = np.concatenate([e[3] for e in edges])
    flat_tri = np.concatenate([e[4] for e in edges])
    for eix in range(len(flat_u)):
        adj[flat_u[eix]].append((flat_v[eix], eix, +1))
        adj[flat_v[eix]].append((flat_u[eix], eix, -1))

    O_k = path_base(T)
    kept_z = zg[kept]
    root = int(np.argmin(np.abs(reduce_centered(kept_z - O_k, T.tau)[0])))
    triples = np.zeros((nkept, 3), dtype=complex)
    in_tree = np.zeros(len(flat_u), dtype=bool)
    visited = np.zeros(nkept, dtype=bool)
    visited[root] = True
    queue = [root]
    while queue:
        cur = queue.pop()
        for nxt, eix, sgn in adj[cur]:
            if visited[nxt]:
                continue
            visited[nxt] = True
            in_tree[eix] = True
            triples[nxt] = triples[cur] + sgn * (
                flat_tri[eix] - flat_wa[eix] * alpha - flat_wb[eix] * beta)
            queue.append(nxt)
    if not visited.all():
        raise RuntimeError("cut layer grid is disconnected")

    # every non-tree edge closes a loop; its position defect must vanish
    loose = ~in_tree
    got = _positions(triples[flat_u[loose]] + flat_tri[loose]
                     - flat_wa[loose, None] * alpha - flat_wb[loose, None] * beta)
    want = _positions(triples[flat_v[loose]])
    loop_defect = float(np.max(np.linalg.norm(got - want, axis=-1)))
    if loop_defect > LOOP_TOL:
        raise LoopResidualError(
            f"layer {k} loop residual {loop_defect:.2e} exceeds {LOOP_TOL:.0e}")

    # duplicated boundary rows at i=n, j=n so faces close across the wrap
    # and lattice translates of the patch tile without seams
    full_id = -np.ones((n + 1, n + 1), dtype=int)
    full_id[:n, :n] = vid
    verts_list = [kept_z]
    tri_list = [triples]
    nextid = nkept

    col = vid[0, :]
    mask = col >= 0
    ids = np.full(n, -1, dtype=int)
    ids[mask] = nextid + np.arange(int(mask.sum()))
    nextid += int(mask.sum())
    full_id[n, :n] = ids
    verts_list.append(zg[0, mask] + 1.0)
    tri_list.append(triples[col[mask]] + alpha)

    row = vid[:, 0]
    mask = row >= 0
    ids = np.full(n, -1, dtype=int)
    ids[mask] = nextid + np.arange(int(mask.sum()))
    nextid += int(mask.sum())
    full_id[:n, n] = ids
    verts_list.append(zg[mask, 0] + T.tau)
    tri_list.append(triples[row[mask]] + beta)

    if vid[0, 0] >= 0:
        full_id[n, n] = nextid
        nextid += 1
        verts_list.append(np.array([zg[0, 0] + 1.0 + T.tau]))
        tri_list.append(triples[[vid[0, 0]]] + alpha + beta)

    verts_z = np.concatenate(verts_list)
    triples_all = np.concatenate(tri_list)

    faces = []
    faces_w = []
    for i in range(n):
        for j in range(n):
            q = (full_id[i, j], full_id[i + 1, j],
                 full_id[i + 1, j + 1], full_id[i, j + 1])
            qw = (vid[i, j], vid[(i + 1) % n, j],
                  vid[(i + 1) % n, (j + 1) % n], vid[i, (j + 1) % n])
            if q[0] >= 0 and q[1] >= 0 and q[2] >= 0:
                faces.append((q[0], q[1], q[2]))
                faces_w.append((qw[0], qw[1], qw[2]))
            if q[0] >= 0 and q[2] >= 0 and q[3] >= 0:
                faces.append((q[0], q[2], q[3]))
                faces_w.append((qw[0], qw[2], qw[3]))

    cycles = _hole_cycles(np.asarray(faces_w))
    if len(cycles) != 2:
        raise RuntimeError(f"expected 2 cut boundaries on layer {k}, "
                           f"found {len(cycles)}")

    # seam rings, one per side, valued along the Laurent arc
    nl_plus = laurent_coeffs(st, series, k, LAURENT_ORDER)
    nl_minus = _swap_laurent(laurent_coeffs(st, series, k - 1, LAURENT_ORDER))
    thetas = 2.0 * np.pi * np.arange(spokes) / spokes
    seam = {}
    stitch = 0.0
    centers = {"+": T.v, "-": 0.0}
    centers_cell: dict[str, complex] = {}
    for side, nl in (("+", nl_plus), ("-", nl_minus)):
        c_stored = centers[side]
        ring_chart = np.asarray(
            neck_point(st, k, side, st.epsilon * np.exp(1j * thetas)),
            dtype=complex)
        c_cell = _cell_rep(c_stored, corner, T.tau)
        centers_cell[side] = c_cell
        ring_z = c_cell + (ring_chart - c_stored)
        # direct tree route: nearest jagged vertex plus a short leg
        cyc = min(cycles, key=lambda w: abs(
            complex(reduce_centered(np.mean(kept_z[w]) - c_cell, T.tau)[0])))
        cyc_ids = np.asarray(cyc)
        cyc_z = kept_z[cyc_ids]
        legs = np.empty((spokes, 3), dtype=complex)
        near = np.empty(spokes, dtype=int)
        for s in range(spokes):
            near[s] = int(np.argmin(np.abs(cyc_z - ring_z[s])))
            legs[s] = triples[cyc_ids[near[s]]] + _segment_triple(
                st, series, k, cyc_z[near[s]], ring_z[s])
        arc = _sheet_values(nl, k % 2 == 0, np.array([st.epsilon]), thetas,
                            legs[0])[0]
        stitch = max(stitch, float(np.max(np.linalg.norm(
            _positions(arc) - _positions(legs), axis=-1))))
        ring_ids = nextid + np.arange(spokes)
        nextid += spokes
        verts_z = np.concatenate([verts_z, ring_z])
        triples_all = np.concatenate([triples_all, arc])
        ang_cyc = np.angle(cyc_z - c_cell)
        # orient the jagged walk counterclockwise around the hole
        if np.sum(np.diff(np.unwrap(ang_cyc))) < 0:
            cyc_ids = cyc_ids[::-1]
            cyc_z = cyc_z[::-1]
            ang_cyc = ang_cyc[::-1]
        # ring angles in the z plane; the chart angle is offset by arg(-a)
        ang_ring = np.angle(ring_z - c_cell)
        faces.extend(_zip_band(cyc_ids, ang_cyc, ring_ids, ang_ring))
        seam[side] = ring_ids

    return LayerPatch(k=k, corner=corner, verts_z=verts_z,
                      triples=triples_all, faces=np.asarray(faces, dtype=int),
                      seam=seam, centers=centers_cell, root_local=root,
                      root_z=complex(kept_z[root]),
                      alpha=alpha, beta=beta, loop_defect=loop_defect,
                      stitch_defect=stitch)


# ---------------------------------------------------------------------------
# frames and spacing


@dataclass(frozen=True)
class LayerFrame:
    """Base point of one layer with its accumulated position triple."""

    k: int
    base: complex
    triple: tuple[complex, complex, complex]

    @property
    def position(self) -> np.ndarray:
        return _positions(np.asarray(self.triple))

    @property
    def height(self) -> float:
        return float(self.triple[2].real)


def _default_range(st: GluingState) -> list[int]:
    if st.mode == "cyclic":
        return list(range(0, st.n_tori + 1))
    return list(range(st.k_lo + MESH_BUFFER, st.k_hi - MESH_BUFFER + 1))


def _walk_leg(st: GluingState, series: OmegaSeries, k: int, z0: complex,
              z1: complex) -> np.ndarray:
    """Straight frame leg with a clearance check against both charts."""
    T = st.torus(k)
    zs = z0 + np.linspace(0.05, 0.95, 19) * (z1 - z0)
    if np.max(np.abs(T.g(zs))) > 1.0 / (0.8 * st.epsilon):
        raise RuntimeError(f"frame leg on layer {k} passes through a chart")
    return _segment_triple(st, series, k, z0, z1)


def _neck_walk(st: GluingState, series: OmegaSeries, k: int,
               laurent: NeckLaurent | None = None):
    """Triple increment from base O_k to O_(k+1) through neck k.

    Returns (increment, waist_rel) where waist_rel is the value at the
    crossing waist point relative to O_k.
    """
    nl = laurent if laurent is not None else laurent_coeffs(
        st, series, k, LAURENT_ORDER)
    T0, T1 = st.torus(k), st.torus(k + 1)
    O0, O1 = path_base(T0), path_base(T1)
    O0n = _near_rep(O0, T0.v, T0.tau)
    a0, b0 = _cycle_triples(st, series, k)
    per0 = _lattice_triple(O0n - O0, T0.tau, a0, b0)
    th_p = float(np.angle((O0n - T0.v) / (-T0.a)))
    seam_p = complex(neck_point(st, k, "+", st.epsilon * np.exp(1j * th_p)))
    leg1 = _walk_leg(st, series, k, O0n, seam_p)

    sp, sm, sh = _series_triple(nl, k % 2 == 0)
    drop = np.array([_antiderivative(a, st.t, th_p)
                     - _antiderivative(a, st.epsilon, th_p)
                     for a in (sp, sm, sh)])
    waist_rel = per0 + leg1 + drop

    # the waist transfer w * w' = t^2 lands at chart angle -th_p; climb
    # back to the seam there, then rotate along it toward the next base
    th_m = -th_p
    tr2 = _series_triple(_swap_laurent(nl), (k + 1) % 2 == 0)
    climb = np.array([_antiderivative(a, st.epsilon, th_m)
                      - _antiderivative(a, st.t, th_m) for a in tr2])
    O1n = _near_rep(O1, 0.0, T1.tau)
    th_t = float(np.angle(O1n / T1.a))
    darc = ((th_t - th_m + np.pi) % (2.0 * np.pi)) - np.pi
    arc = np.array([_antiderivative(a, st.epsilon, th_m + darc)
                    - _antiderivative(a, st.epsilon, th_m) for a in tr2])
    seam_m = complex(neck_point(st, k + 1, "-",
                                st.epsilon * np.exp(1j * th_t)))
    a1, b1 = _cycle_triples(st, series, k + 1)
    per1 = _lattice_triple(O1n - O1, T1.tau, a1, b1)
    leg3 = _walk_leg(st, series, k + 1, seam_m, O1n)
    # values live at the canonical base points; shifting a base to the
    # representative used by a leg costs the corresponding period triple
    return per0 + leg1 + drop + climb + arc + leg3 - per1, waist_rel


def layer_frames(st: GluingState, series: OmegaSeries,
                 k_range=None) -> list[LayerFrame]:
    """Walk the layer chain and return one anchored frame per layer.

    The chain crosses each neck along the spoke aimed at the next base
    point; the accumulated triple is normalized so the first crossed
    waist sits at height zero.
    """
    if st.t <= 0.0:
        raise ValueError("frames need t > 0")
    ks = list(k_range) if k_range is not None else _default_range(st)
    if len(ks) < 2:
        raise ValueError("need at least two layers")
    vals = {ks[0]: np.zeros(3, dtype=complex)}
    waist0 = None
    for k in ks[:-1]:
        inc, waist_rel = _neck_walk(st, series, k)
        vals[k + 1] = vals[k] + inc
        if waist0 is None:
            waist0 = vals[k] + waist_rel
    shift = np.zeros(3, dtype=complex)
    shift[2] = -waist0[2].real
    w12 = 0.5 * (np.conj(waist0[1]) - waist0[0])
    shift[0] += w12
    shift[1] -= np.conj(w12)
    return [LayerFrame(k=k, base=path_base(st.torus(k)),
                       triple=tuple(vals[k] + shift)) for k in ks]


@dataclass(frozen=True)
class SpacingRow:
    k: int
    delta_height: float
    ratio: float


def spacing_report(st: GluingState, series: OmegaSeries,
                   k_range=None) -> list[SpacingRow]:
    """Per-neck vertical spacing against the -2 t log t reference."""
    frames = layer_frames(st, series, k_range)
    ref = -2.0 * st.t * math.log(st.t)
    rows = []
    for lo, hi in zip(frames, frames[1:]):
        dh = hi.height - lo.height
        rows.append(SpacingRow(k=hi.k, delta_height=dh, ratio=dh / ref))
    return rows


# ---------------------------------------------------------------------------
# mesh assembly


@dataclass
class SurfaceMesh:
    """Triangulated immersion of a run of layers and their necks.

    vertices carry horizontal coordinates reduced into the period cell;
    raw keeps the unreduced immersion.  provenance holds one
    ("layer", k, "") or ("neck", k, sign) tag per face.
    """

    tau_ref: complex
    t: float
    epsilon: float
    vertices: np.ndarray
    raw: np.ndarray
    faces: np.ndarray
    provenance: list[tuple[str, int, str]]
    frames: list[LayerFrame]
    reports: dict


def _reduce_horizontal(raw: np.ndarray, tau: complex) -> np.ndarray:
    z = raw[:, 0] + 1j * raw[:, 1]
    x, y = lattice_coords(z, tau)
    zr = (x % 1.0) + (y % 1.0) * tau
    out = raw.copy()
    out[:, 0], out[:, 1] = zr.real, zr.imag
    return out


def build_mesh(st: GluingState, series: OmegaSeries, k_range=None,
               grid_res: int = GRID_RES, rings: int = NECK_RINGS,
               spokes: int = NECK_SPOKES) -> SurfaceMesh:
    """Assemble layer patches and neck annuli into one SurfaceMesh.

    Layers are integrated independently and joined through shared seam
    rings; the two half-annuli of each neck merge at the waist.  Each
    patch picks cell representatives of its chart centers, so consecutive
    patches are branch-aligned by transporting the immersion through the
    neck itself (down the plus sheet, up the minus sheet along spoke 0).
    The mesh is translated so the first crossed waist centroid sits at
    the origin.
    """
    if st.t <= 0.0:
        raise ValueError("meshing needs t > 0")
    ks = list(k_range) if k_range is not None else _default_range(st)
    if len(ks) < 2:
        raise ValueError("need at least two layers to mesh a neck")

    laurents = {k: laurent_coeffs(st, series, k, LAURENT_ORDER)
                for k in ks[:-1]}
    patches = {k: integrate_layer(k, st, series, grid_res, spokes)
               for k in ks}

    offsets: dict[int, np.ndarray] = {ks[0]: np.zeros(3, dtype=complex)}
    for k in ks[:-1]:
        nl = laurents[k]
        plo, phi = patches[k], patches[k + 1]
        plus_val = offsets[k] + plo.triples[plo.seam["+"][0]]
        minus_val = plus_val + _waist_transfer(nl, k, st.t, st.epsilon)
        offsets[k + 1] = minus_val - phi.triples[phi.seam["-"][0]]

    # canonical per-layer frames in the mesh branch, for reporting
    frames = {}
    for k in ks:
        patch = patches[k]
        T = st.torus(k)
        On = _near_rep(path_base(T), patch.root_z, T.tau)
        per = _lattice_triple(On - path_base(T), T.tau, patch.alpha, patch.beta)
        frames[k] = offsets[k] - per - _segment_triple(st, series, k, On,
                                                      patch.root_z)

    verts, faces, prov = [], [], []
    base_of: dict[int, int] = {}
    total = 0
    for k in ks:
        p = patches[k]
        base_of[k] = total
        verts.append(p.triples + offsets[k][None, :])
        faces.append(p.faces + total)
        prov.extend([("layer", k, "")] * len(p.faces))
        total += len(p.triples)

    neck_grids: dict[int, dict[str, np.ndarray]] = {}
    necks: dict[int, NeckField] = {}
    for k in ks[:-1]:
        plo, phi = patches[k], patches[k + 1]
        plus_anchor = plo.triples[plo.seam["+"][0]] + offsets[k]
        minus_anchor = phi.triples[phi.seam["-"][0]] + offsets[k + 1]
        nf = integrate_neck(k, st, series, rings, spokes,
                            plus_anchor=plus_anchor,
                            minus_anchor=minus_anchor, laurent=laurents[k])
        necks[k] = nf
        ids_p = np.empty((rings + 1, spokes), dtype=int)
        ids_m = np.empty((rings + 1, spokes), dtype=int)
        ids_p[0] = plo.seam["+"] + base_of[k]
        ids_m[0] = phi.seam["-"] + base_of[k + 1]
        new_p = nf.plus[1:].reshape(-1, 3)
        ids_p[1:] = total + np.arange(rings * spokes).reshape(rings, spokes)
        verts.append(new_p)
        total += rings * spokes
        new_m = nf.minus[1:rings].reshape(-1, 3)
        ids_m[1:rings] = total + np.arange((rings - 1) * spokes).reshape(
            rings - 1, spokes)
        verts.append(new_m)
        total += (rings - 1) * spokes
        pair = (spokes - np.arange(spokes)) % spokes
        ids_m[rings] = ids_p[rings][pair]
        neck_grids[k] = {"plus": ids_p, "minus": ids_m}
        for side, ids in (("+", ids_p), ("-", ids_m)):
            for j in range(rings):
                a, b = ids[j], ids[j + 1]
                s1 = np.roll(np.arange(spokes), -1)
                fa = np.stack([a, a[s1], b[s1]], axis=1)
                fb = np.stack([a, b[s1], b], axis=1)
                faces.append(np.concatenate([fa, fb]))
                prov.extend([("neck", k, side)] * (2 * spokes))

    triples_all = np.concatenate(verts)
    faces_all = np.concatenate(faces)
    raw = _positions(triples_all)

    # normalize: first crossed waist centroid to the origin
    k0 = ks[0]
    centroid = raw[neck_grids[k0]["plus"][rings]].mean(axis=0)
    raw = raw - centroid[None, :]

    w12 = complex(centroid[0], centroid[1])
    frames_out = []
    for k in ks:
        tr = frames[k].copy()
        tr[0] += w12
        tr[1] -= np.conj(w12)
        tr[2] -= centroid[2]
        frames_out.append(LayerFrame(k=k, base=path_base(st.torus(k)),
                                     triple=tuple(tr)))

    # limit node positions in the mesh branch, anchored at neck ks[0];
    # lattice detours of the cell representatives ride the layer periods
    p_ref: dict[int, complex] = {k0: 0.0}
    for k in ks[1:-1]:
        patch = patches[k]
        T = st.torus(k)
        detour = patch.centers["+"] - patch.centers["-"] - T.v
        lat = _positions(_lattice_triple(detour, T.tau, patch.alpha,
                                         patch.beta)[None, :])[0]
        p_ref[k] = p_ref[k - 1] + mirror_conj(T.v, k) \
            + complex(lat[0], lat[1])
    drift = {}
    for k in ks[:-1]:
        cen = raw[neck_grids[k]["plus"][rings]].mean(axis=0)
        drift[k] = float(abs(complex(cen[0], cen[1]) - p_ref[k]))

    heights = [frames[k][2].real for k in ks]
    reports = {
        "loop_defect": {k: patches[k].loop_defect for k in ks},
        "stitch_defect": {k: patches[k].stitch_defect for k in ks},
        "weld_defect": {k: necks[k].weld_defect for k in necks},
        "tail": {k: (necks[k].tail_plus, necks[k].tail_minus) for k in necks},
        "wrap_continuity": {
            k: float(abs(np.pi * st.t ** 2
                         * (np.conj(necks[k].laurent.c_plus[0])
                            + necks[k].laurent.c_minus[0])))
            for k in necks},
        "flux": {k: neck_flux(necks[k].laurent, k % 2 == 0) for k in necks},
        "drift": drift,
        "heights_increasing": bool(np.all(np.diff(heights) > 0)),
        "neck_grids": neck_grids,
        "layer_base": base_of,
        "layer_len": {k: len(patches[k].triples) for k in ks},
        "settings": {"grid_res": grid_res, "rings": rings, "spokes": spokes,
                     "k_range": list(ks)},
    }
    mesh = SurfaceMesh(tau_ref=st.tau_ref, t=st.t, epsilon=st.epsilon,
                       vertices=_reduce_horizontal(raw, st.tau_ref), raw=raw,
                       faces=faces_all, provenance=prov, frames=frames_out,
                       reports=reports)
    return mesh


# ---------------------------------------------------------------------------
# diagnostics


def _polygon_diagnostics(poly: np.ndarray) -> dict:
    """Convexity and simplicity of a closed horizontal polygon."""
    pts = poly[:, :2]
    edges = np.roll(pts, -1, axis=0) - pts
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] \
        - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    scale = float(np.max(np.linalg.norm(edges, axis=1))) ** 2
    signs = cross[np.abs(cross) > 1e-9 * scale]
    convex = bool(len(signs) == 0 or np.all(signs > 0) or np.all(signs < 0))
    turning = float(np.sum(np.arctan2(
        cross, np.einsum("ij,ij->i", edges, np.roll(edges, -1, axis=0)))))
    def _cr(u, v):
        return u[0] * v[1] - u[1] * v[0]

    n = len(pts)
    simple = True
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            c, d = pts[j], pts[(j + 1) % n]
            if (_cr(b - a, c - a) * _cr(b - a, d - a) < 0
                    and _cr(d - c, a - c) * _cr(d - c, b - c) < 0):
                simple = False
    return {"convex": convex, "simple": simple, "turning": turning}


def _slice_polygon(mesh: SurfaceMesh, k: int, side: str,
                   height: float) -> np.ndarray | None:
    grid = mesh.reports["neck_grids"][k]["plus" if side == "+" else "minus"]
    pos = mesh.raw[grid]
    hs = pos[:, :, 2]
    poly = np.empty((grid.shape[1], 3))
    for s in range(grid.shape[1]):
        col = hs[:, s]
        lo = np.minimum(col[:-1], col[1:])
        hi = np.maximum(col[:-1], col[1:])
        hits = np.nonzero((lo <= height) & (height <= hi))[0]
        if len(hits) == 0:
            return None
        j = int(hits[0])
        denom = col[j + 1] - col[j]
        frac = 0.0 if denom == 0 else (height - col[j]) / denom
        poly[s] = pos[j, s] + frac * (pos[j + 1, s] - pos[j, s])
    return poly


def _tri_tri_intersect(p: np.ndarray, q: np.ndarray, eps: float) -> bool:
    """Moller interval test; coplanar pairs fall back to 2D separation."""
    n2 = np.cross(q[1] - q[0], q[2] - q[0])
    dp = (p - q[0]) @ n2
    if np.all(dp > eps) or np.all(dp < -eps):
        return False
    n1 = np.cross(p[1] - p[0], p[2] - p[0])
    dq = (q - p[0]) @ n1
    if np.all(dq > eps) or np.all(dq < -eps):
        return False
    d = np.cross(n1, n2)
    if np.linalg.norm(d) < eps * max(np.linalg.norm(n1), np.linalg.norm(n2)):
        axis = int(np.argmax(np.abs(n1)))
        keep = [a for a in range(3) if a != axis]
        return _poly_overlap_2d(p[:, keep], q[:, keep], eps)
    iv = []
    for tri, dist in ((p, dp), (q, dq)):
        proj = tri @ d
        pts = []
        for a in range(3):
            if abs(dist[a]) <= eps:
                pts.append(proj[a])
            b = (a + 1) % 3
            if dist[a] * dist[b] < -eps * eps:
                s = dist[a] / (dist[a] - dist[b])
                pts.append(proj[a] + s * (proj[b] - proj[a]))
        if not pts:
            return False
        iv.append((min(pts), max(pts)))
    return not (iv[0][1] < iv[1][0] + eps or iv[1][1] < iv[0][0] + eps)


def _poly_overlap_2d(a: np.ndarray, b: np.ndarray, eps: float) -> bool:
    for tri1, tri2 in ((a, b), (b, a)):
        for i in range(3):
            edge = tri1[(i + 1) % 3] - tri1[i]
            axis = np.array([-edge[1], edge[0]])
            pa = (tri1 - tri1[i]) @ axis
            pb = (tri2 - tri1[i]) @ axis
            if pb.min() > pa.max() + eps or pb.max() < pa.min() - eps:
                return False
    return True


def _intersecting_pairs(raw: np.ndarray, faces: np.ndarray) -> int:
    """Count intersecting face pairs that share no vertex."""
    tris = raw[faces]
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    cell = float(np.median(np.linalg.norm(tris[:, 1] - tris[:, 0], axis=1))) * 2
    cell = max(cell, 1e-9)
    buckets: dict[tuple[int, int, int], list[int]] = {}
    for f in range(len(faces)):
        c0 = np.floor(lo[f] / cell).astype(int)
        c1 = np.floor(hi[f] / cell).astype(int)
        for cx in range(c0[0], c1[0] + 1):
            for cy in range(c0[1], c1[1] + 1):
                for cz in range(c0[2], c1[2] + 1):
                    buckets.setdefault((cx, cy, cz), []).append(f)
    scale = cell * 1e-7
    seen = set()
    count = 0
    for ids in buckets.values():
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                if (a, b) in seen:
                    continue
                seen.add((a, b))
                if set(faces[a]) & set(faces[b]):
                    continue
                if np.any(lo[a] > hi[b]) or np.any(lo[b] > hi[a]):
                    continue
                if _tri_tri_intersect(tris[a], tris[b], scale):
                    count += 1
    return count


def embeddedness_diagnostics(mesh: SurfaceMesh, slice_offset: float | None = None,
                             graph_floor: float = 0.5) -> dict:
    """Diagnostic embeddedness battery; failures are reported, not fatal.

    Checks (i) that layer patches stay vertical graphs, (ii) that neck
    cross sections at heights h_k +- t*c are simple convex curves, and
    (iii) that no two faces of a layer slab intersect.
    """
    if slice_offset is None:
        slice_offset = 0.6 * math.log(mesh.epsilon / mesh.t)
    prov = mesh.provenance
    layer_ks = sorted({k for tag, k, _ in prov if tag == "layer"})
    neck_ks = sorted({k for tag, k, _ in prov if tag == "neck"})
    out: dict = {"graph": {}, "slices": {}, "intersections": {}}

    for k in layer_ks:
        ids = [i for i, (tag, kk, _) in enumerate(prov)
               if tag == "layer" and kk == k]
        tris = mesh.raw[mesh.faces[ids]]
        nrm = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        lens = np.linalg.norm(nrm, axis=1)
        ok = lens > 0
        n3 = np.abs(nrm[ok, 2]) / lens[ok]
        val = float(np.min(n3)) if len(n3) else 0.0
        out["graph"][k] = {"min_n3": val, "pass": bool(val >= graph_floor)}

    tc = mesh.t * slice_offset
    for k in neck_ks:
        grid = mesh.reports["neck_grids"][k]["plus"]
        waist_h = float(mesh.raw[grid[-1], 2].mean())
        for side, h in (("+", waist_h - tc), ("-", waist_h + tc)):
            poly = _slice_polygon(mesh, k, side, h)
            if poly is None:
                out["slices"][f"{k}{side}"] = {"status": "out_of_range",
                                               "pass": False}
                continue
            diag = _polygon_diagnostics(poly)
            diag["height"] = h
            diag["pass"] = bool(diag["convex"] and diag["simple"])
            out["slices"][f"{k}{side}"] = diag

    for k in layer_ks:
        ids = [i for i, (tag, kk, sd) in enumerate(prov)
               if (tag == "layer" and kk == k)
               or (tag == "neck" and kk == k and sd == "+")
               or (tag == "neck" and kk == k - 1 and sd == "-")]
        pairs = _intersecting_pairs(mesh.raw, mesh.faces[ids])
        out["intersections"][k] = {"pairs": pairs, "pass": pairs == 0}

    out["pass"] = bool(
        all(v["pass"] for v in out["graph"].values())
        and all(v["pass"] for v in out["slices"].values())
        and all(v["pass"] for v in out["intersections"].values()))
    return out


# ---------------------------------------------------------------------------
# output


def write_obj(mesh: SurfaceMesh, path: str, copies: int = 1) -> None:
    """ASCII OBJ export; copies tiles the horizontal period lattice."""
    tau = mesh.tau_ref
    shifts = [i + j * tau for i in range(copies) for j in range(copies)]
    with open(path, "w") as fh:
        fh.write(f"# stackedmin surface, t={mesh.t!r}\n")
        nv = len(mesh.raw)
        for ci, sh in enumerate(shifts):
            fh.write(f"g copy_{ci}\n")
            moved = mesh.raw.copy()
            moved[:, 0] += sh.real
            moved[:, 1] += sh.imag
            for v in moved:
                fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        last = None
        for ci in range(len(shifts)):
            off = 1 + ci * nv
            for f, tag in zip(mesh.faces, mesh.provenance):
                if tag != last:
                    name = f"{tag[0]}_{tag[1]}{tag[2]}".replace("+", "p")
                    fh.write(f"g {name.replace('-', 'm')}_copy{ci}\n")
                    last = tag
                fh.write(f"f {f[0] + off} {f[1] + off} {f[2] + off}\n")
            last = None


def mesh_summary(mesh: SurfaceMesh) -> dict:
    """JSON-ready sidecar payload describing one mesh."""
    rep = mesh.reports

    def _f(x):
        return float(x)

    return {
        "tau_ref": [mesh.tau_ref.real, mesh.tau_ref.imag],
        "t": mesh.t,
        "epsilon": mesh.epsilon,
        "n_vertices": int(len(mesh.raw)),
        "n_faces": int(len(mesh.faces)),
        "frames": [{"k": f.k, "base": [f.base.real, f.base.imag],
                    "position": [float(c) for c in f.position]}
                   for f in mesh.frames],
        "spacing": [{"k": hi.k, "delta_height": hi.height - lo.height,
                     "ratio": (hi.height - lo.height)
                     / (-2.0 * mesh.t * math.log(mesh.t))}
                    for lo, hi in zip(mesh.frames, mesh.frames[1:])],
        "reports": {
            "loop_defect": {str(k): _f(v) for k, v in rep["loop_defect"].items()},
            "stitch_defect": {str(k): _f(v)
                              for k, v in rep["stitch_defect"].items()},
            "weld_defect": {str(k): _f(v) for k, v in rep["weld_defect"].items()},
            "wrap_continuity": {str(k): _f(v)
                                for k, v in rep["wrap_continuity"].items()},
            "drift": {str(k): _f(v) for k, v in rep["drift"].items()},
            "flux": {str(k): [float(c) for c in v]
                     for k, v in rep["flux"].items()},
            "heights_increasing": rep["heights_increasing"],
        },
        "settings": rep["settings"],
    }


def write_sidecar(mesh: SurfaceMesh, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(mesh_summary(mesh), fh, indent=2, sort_keys=True)
        fh.write("\n")
