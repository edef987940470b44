"""Newton continuation on the opened-node parameter system."""

import numpy as np
import numpy.polynomial.legendre as leg
import pytest

import oracles
from stackedmin.configs import catalog
from stackedmin.elliptic import lattice_for
from stackedmin.hecke import hecke_jacobian
from stackedmin.opening import (
    GluingState,
    NonContractionError,
    fix_omega,
    mirror_conj,
    omega_eval,
    omega_on_circle,
)
from stackedmin.solver import (
    StepFailure,
    _block_residual,
    _cell_corner,
    _get_block,
    _reduce_into_cell,
    _set_block,
    auto_schedule,
    full_residual,
    newton_continuation,
    residual_E,
    residual_Gbal,
    residual_P,
    zeros_symmetric,
)


def central(name="rPD", t=0.0):
    return GluingState.central(catalog(name, K=1), t)


@pytest.fixture(scope="module")
def rpd_solved():
    return newton_continuation(catalog("rPD", K=1), 0.01, schedule=[0.005, 0.01])


# ---------------------------------------------------------------------------
# residuals at closed necks


@pytest.mark.parametrize("name", ["rPD", "H"])
def test_central_residual_vanishes(name):
    st = central(name)
    series = fix_omega(st)
    assert full_residual(st, series).sup_norm < 1e-9


def test_regularity_closed_form():
    st = central()
    st.tori[0].bhat = 0.03 - 0.015j
    st.tori[0].a = -0.48 + 0.01j
    st.tori[1].bhat = -0.01 + 0.02j
    st.refresh()
    series = fix_omega(st)
    for k in (0, 1):
        T = st.torus(k)
        err = abs(residual_E(k, st, series) - (-2.0 * T.bhat / T.a))
        assert err < 1e-9


def test_period_closed_forms():
    st = central()
    st.tori[0].a = -0.45 + 0.02j
    st.tori[1].a = -0.52 - 0.03j
    st.refresh()
    series = fix_omega(st)
    r1, r2 = residual_P(0, st, series)
    T0 = st.torus(0)
    assert abs((r1 + 2.0) - (-1.0 / T0.a)) < 1e-9
    assert abs((r2 + 2.0 * st.tau_ref) - (-T0.tau / T0.a)) < 1e-9
    r1, r2 = residual_P(1, st, series)
    T1 = st.torus(1)
    assert abs((r1 - 2.0) - np.conj(1.0 / T1.a)) < 1e-9
    assert abs((r2 + 2.0 * st.tau_ref) - np.conj(T1.tau / T1.a)) < 1e-9


@pytest.mark.parametrize("k", [0, 1])
def test_balance_linearization(k):
    # moving one node perturbs the balance residual through the gradient
    # of the balance function, composed with the layer reflection
    st = central()
    delta = 1e-5 * (1 + 0.7j)
    st.tori[k].v += delta
    st.refresh(k)
    series = fix_omega(st)
    r = residual_Gbal(k, st, series)
    J = hecke_jacobian(catalog("rPD").q(k), lattice_for(st.tau_ref))
    dm = mirror_conj(delta, k)
    pred = -2j * np.pi * complex(*(J.m @ [dm.real, dm.imag]))
    assert abs(r - pred) < 1e-6


# ---------------------------------------------------------------------------
# zeros of the Gauss component


def _tracked_roots(T, z0):
    xs = np.linspace(0.08, 0.92, 6)
    seeds = [z0 + x + y * T.tau for x in xs for y in xs]
    basis = np.array([[1.0, T.tau.real], [0.0, T.tau.imag]])
    uniq = {}
    for r in oracles.newton_roots_of(T.g, T.gp, seeds):
        c = r - z0
        al, be = np.linalg.solve(basis, [c.real, c.imag])
        uniq[(round(al % 1.0, 6), round(be % 1.0, 6))] = (al % 1.0, be % 1.0)
    return [z0 + al + be * T.tau for al, be in uniq.values()]


def test_zeros_match_tracked_roots():
    st = central(t=0.012)
    st.tori[0].bhat = 0.05 - 0.02j
    st.refresh(0)
    s1, s2 = zeros_symmetric(0, st)
    T = st.torus(0)
    roots = _tracked_roots(T, _cell_corner(T))
    assert len(roots) == 2
    assert abs(s1 - sum(roots)) < 1e-9
    assert abs(s2 - roots[0] * roots[1]) < 1e-9
    pair = np.roots([1.0, -s1, s2])
    mis = min(
        abs(pair[0] - roots[0]) + abs(pair[1] - roots[1]),
        abs(pair[0] - roots[1]) + abs(pair[1] - roots[0]),
    )
    assert mis < 1e-8


def test_regularity_sums_omega_over_zeros():
    st = central(t=0.012)
    st.tori[0].bhat = 0.05 - 0.02j
    st.refresh(0)
    series = fix_omega(st)
    T = st.torus(0)
    roots = _tracked_roots(T, _cell_corner(T))
    vals = omega_eval(st, series, 0, np.array(roots))
    assert abs(residual_E(0, st, series) - vals.sum()) < 1e-9


def _rational_kernel_E(st, series, k, s1, s2, nodes=96):
    # second route: the symmetric-function kernel (2z-s1)/(z^2-s1 z+s2)
    # integrated over the cell boundary minus the neck disks; the kernel
    # is not periodic, so each neck circle is shifted to its in-cell copy
    T = st.torus(k)
    z0 = _cell_corner(T)
    x, w = leg.leggauss(nodes)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    tot = 0j
    for base, vec, sign in (
        (z0, 1.0, 1.0),
        (z0 + 1, T.tau, 1.0),
        (z0 + T.tau, 1.0, -1.0),
        (z0, T.tau, -1.0),
    ):
        z = base + s * vec
        W = omega_eval(st, series, k, z)
        ker = (2 * z - s1) / (z * z - s1 * z + s2)
        tot += np.sum(w * ker * W) * (sign * vec)
    for side in ("zero", "node"):
        cc = st.circle(k, side)
        lam = _reduce_into_cell(cc.center, z0, T.tau) - cc.center
        W = omega_on_circle(st, series, k, side)
        z = cc.z + lam
        ker = (2 * z - s1) / (z * z - s1 * z + s2)
        tot -= np.sum(ker * W * cc.dz)
    return tot / (2j * np.pi)


def test_regularity_rational_kernel_route():
    st = central(t=0.012)
    st.tori[0].bhat = 0.05 - 0.02j
    st.refresh(0)
    series = fix_omega(st)
    s1, s2 = zeros_symmetric(0, st)
    other = _rational_kernel_E(st, series, 0, s1, s2)
    assert abs(residual_E(0, st, series) - other) < 1e-7


# ---------------------------------------------------------------------------
# Jacobian structure at closed necks


def _lin2(c):
    # real 2x2 of delta -> c*delta
    return np.array([[c.real, -c.imag], [c.imag, c.real]])


def _anti2(c):
    # real 2x2 of delta -> c*conj(delta)
    return np.array([[c.real, c.imag], [c.imag, -c.real]])


def _fd_block(st, series, k, h=1e-6):
    j = st.index_of(k)
    x0 = _get_block(st, j)
    out = np.empty((8, 8))
    for c in range(8):
        xp = x0.copy()
        xp[c] += h
        _set_block(st, j, xp)
        bp = _block_residual(st, series, k)
        xm = x0.copy()
        xm[c] -= h
        _set_block(st, j, xm)
        bm = _block_residual(st, series, k)
        col = np.empty(8)
        col[0::2] = (bp.real - bm.real) / (2 * h)
        col[1::2] = (bp.imag - bm.imag) / (2 * h)
        out[:, c] = col
    _set_block(st, j, x0)
    return out


def test_closed_neck_jacobian_blocks():
    st = central()
    series = fix_omega(st)
    lat = lattice_for(st.tau_ref)
    for k in (0, 1):
        blk = _fd_block(st, series, k)
        T = st.torus(k)
        a, tau = T.a, T.tau
        assert np.max(np.abs(blk[0:2, 0:2] - _lin2(-2.0 / a))) < 1e-5
        if k % 2 == 0:
            assert np.max(np.abs(blk[2:4, 2:4] - _lin2(1.0 / a**2))) < 1e-5
            assert np.max(np.abs(blk[4:6, 2:4] - _lin2(tau / a**2))) < 1e-5
            assert np.max(np.abs(blk[4:6, 4:6] - _lin2(-1.0 / a))) < 1e-5
        else:
            assert np.max(np.abs(blk[2:4, 2:4] - _anti2(-np.conj(1.0 / a**2)))) < 1e-5
            assert np.max(np.abs(blk[4:6, 2:4] - _anti2(-np.conj(tau / a**2)))) < 1e-5
            assert np.max(np.abs(blk[4:6, 4:6] - _anti2(np.conj(1.0 / a)))) < 1e-5
        gv = _lin2(-2j * np.pi) @ hecke_jacobian(catalog("rPD").q(k), lat).m
        if k % 2 == 1:
            gv = gv @ np.diag([-1.0, 1.0])
        assert np.max(np.abs(blk[6:8, 6:8] - gv)) < 1e-5


# ---------------------------------------------------------------------------
# continuation


def test_continuation_converges(rpd_solved):
    rep = rpd_solved
    assert rep.converged
    assert rep.t_schedule == (0.005, 0.01)
    assert rep.final_residual < 1e-9
    for step in rep.steps:
        assert step.iterations == len(step.residuals) - 1
        assert step.iterations <= 6
        assert all(b < a for a, b in zip(step.residuals, step.residuals[1:]))
    fresh = full_residual(rep.state, rep.series)
    assert fresh.sup_norm < 1e-9


def test_solved_layers_repeat_periodically(rpd_solved):
    st = rpd_solved.state
    assert st.mode == "cyclic"
    assert st.n_tori == 2
    assert st.torus(2) is st.torus(0)
    assert st.torus(-1) is st.torus(1)


def test_zero_target_returns_central():
    rep = newton_continuation(catalog("rPD", K=1), 0.0)
    assert rep.steps == ()
    assert rep.final_residual == 0.0
    assert rep.state.torus(0).a == -0.5
    assert rep.state.torus(0).bhat == 0


def test_schedule_validation():
    cfg = catalog("rPD", K=1)
    with pytest.raises(ValueError):
        newton_continuation(cfg, 0.005, schedule=[0.01, 0.005])
    with pytest.raises(ValueError):
        newton_continuation(cfg, 0.01, schedule=[0.004])


def test_auto_schedule():
    assert auto_schedule(0.02) == [0.005, 0.01, 0.02]
    assert auto_schedule(0.006) == [0.006]
    assert auto_schedule(0.0) == []
    sched = auto_schedule(0.08)
    assert sched[0] <= 0.0075
    assert all(b > a for a, b in zip(sched, sched[1:]))


def test_noncontraction_bubbles_up():
    with pytest.raises(NonContractionError):
        newton_continuation(catalog("rPD", K=1), 0.2, schedule=[0.2])


def test_stalled_newton_raises():
    with pytest.raises(StepFailure):
        newton_continuation(catalog("rPD", K=1), 0.01, schedule=[0.01], itmax=1)


def test_window_matches_cyclic():
    events = []
    cyc = newton_continuation(catalog("rPD", K=1), 0.008, schedule=[0.008],
                              callback=events.append)
    win = newton_continuation(catalog("rPD", K=1), 0.008, schedule=[0.008],
                              K=4, force_window=True)
    assert win.state.mode == "window"
    assert win.tail_reports is not None
    assert win.tail_reports["left"].converged
    assert win.tail_reports["right"].converged
    for k in (-1, 0, 1, 2):
        Tc, Tw = cyc.state.torus(k), win.state.torus(k)
        for name in ("bhat", "a", "tau", "v"):
            assert abs(getattr(Tc, name) - getattr(Tw, name)) < 1e-8
    assert events
    assert all(set(e) == {"t", "iteration", "residual", "step_scale"} for e in events)
    assert [e["iteration"] for e in events] == list(range(1, len(events) + 1))


def test_defect_window_solve():
    rep = newton_continuation(catalog("twin-rPD", K=2), 0.005,
                              schedule=[0.005], K=5)
    assert rep.converged
    assert rep.state.mode == "window"
    assert rep.final_residual < 1e-9
    tails = rep.tail_reports
    assert tails["left"].state.n_tori == 2
    assert tails["right"].converged
    # the two sides really carry opposite node families after the solve
    v0 = rep.state.torus(0).v
    vm = rep.state.torus(-1).v
    assert abs(v0 + np.conj(vm)) > 1e-3
