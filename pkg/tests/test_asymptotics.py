"""Paired solves, decay reports, and TPMS comparison distances."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stackedmin.configs import catalog
from stackedmin.elliptic import lattice_coords
from stackedmin.immersion import build_mesh
from stackedmin.opening import fix_omega
from stackedmin.solver import newton_continuation
from stackedmin.asymptotics import (
    DegenerateFitError,
    decay_fit,
    differential_rows,
    form_rows,
    pair_solve,
    parameter_rows,
    tpms_comparison,
    upper_reference,
)

DEFECT_NAMES = ("twin-rPD", "oPa-oCLP", "oCLP-rot-twin", "oPa-oDelta")


@pytest.fixture(scope="module")
def twin_pair():
    twin = catalog("twin-rPD")
    sp, sd = pair_solve(upper_reference(twin), twin, 0.01, K=10)
    return sp, fix_omega(sp), sd, fix_omega(sd)


@pytest.fixture(scope="module")
def cross_pair():
    cross = catalog("oPa-oCLP")
    sp, sd = pair_solve(upper_reference(cross), cross, 0.01)
    return sp, fix_omega(sp), sd, fix_omega(sd)


@pytest.fixture(scope="module")
def twin_meshes(twin_pair):
    sp, serp, sd, serd = twin_pair
    return build_mesh(sp, serp), build_mesh(sd, serd)


# ---------------------------------------------------------------- references


@given(name=st.sampled_from(DEFECT_NAMES), k=st.integers(0, 40))
@settings(max_examples=40, deadline=None)
def test_upper_reference_extends_the_right_tail(name, k):
    cfg = catalog(name)
    ref = upper_reference(cfg)
    assert ref.is_periodic()
    assert ref.period() == len(cfg.right_tail)
    assert ref.tau == cfg.tau
    assert abs(ref.q(k) - cfg.q(k)) < 1e-15


def test_upper_reference_of_crossover_is_the_upper_family():
    ref = upper_reference(catalog("oPa-oCLP"))
    opa = catalog("oPa")
    assert abs(ref.q(0) - opa.q(0)) < 1e-15


# ------------------------------------------------------------------- pairing


def test_pair_rejects_nonperiodic_reference():
    twin = catalog("twin-rPD")
    with pytest.raises(ValueError, match="periodic"):
        pair_solve(twin, twin, 0.01)


def test_pair_rejects_mismatched_upper_tail():
    # the twin's upper tail is the mirror rPD representative, not rPD itself
    with pytest.raises(ValueError, match="disagree"):
        pair_solve(catalog("rPD"), catalog("twin-rPD"), 0.01)


def test_pair_rejects_mixed_lattices():
    with pytest.raises(ValueError, match="lattice"):
        pair_solve(catalog("oPa"), catalog("twin-rPD"), 0.01)


def test_paired_windows_share_geometry(twin_pair, cross_pair):
    for sp, _, sd, _ in (twin_pair, cross_pair):
        assert sp.k_lo == sd.k_lo
        assert len(sp.tori) == len(sd.tori)
        assert sp.epsilon == sd.epsilon
        assert sp.t == sd.t


def test_identical_pair_is_flat():
    cfg = catalog("rPD", K=1)
    sp, sd = pair_solve(cfg, cfg, 0.02, K=6)
    d = parameter_rows(sp, sd)
    assert max(d.values()) == 0.0
    with pytest.raises(DegenerateFitError):
        decay_fit(sp, sd)


# --------------------------------------------------------------- twin decay


def test_twin_rows_collapse_above_the_defect(twin_pair):
    sp, _, sd, _ = twin_pair
    d = parameter_rows(sp, sd)
    below = [d[k] for k in d if k <= -1]
    assert min(below) > 1.0  # O(1) mismatch against the mirrored tail
    assert np.ptp(below) < 1e-9
    assert d[0] < 5e-11
    assert d[1] < 5e-12
    assert d[1] > d[2]
    assert all(d[k] < 1e-14 for k in range(3, 9))


def test_twin_fit_keeps_only_resolvable_layers(twin_pair):
    sp, serp, sd, serd = twin_pair
    rep = decay_fit(sp, sd, serp, serd)
    assert rep.fit_ks == [1, 2]
    assert 1.0 < rep.rate < 2.0
    assert rep.r_squared > 0.95
    assert rep.t == 0.01


def test_twin_differential_rate_is_comparable(twin_pair):
    sp, serp, sd, serd = twin_pair
    rep = decay_fit(sp, sd, serp, serd)
    m = differential_rows(sp, serp, sd, serd)
    assert all(m[k] < 1e-14 for k in range(4, 9))
    rate_m = np.log(m[1] / m[2])
    assert 0.5 * rep.rate < rate_m < 2.0 * rep.rate


def test_twin_fit_degenerates_at_smaller_t():
    # halving t drops every fitted difference below double precision
    twin = catalog("twin-rPD")
    sp, sd = pair_solve(upper_reference(twin), twin, 0.005, K=10)
    with pytest.raises(DegenerateFitError):
        decay_fit(sp, sd)


def test_reports_are_deterministic(twin_pair):
    sp, serp, sd, serd = twin_pair
    a = decay_fit(sp, sd, serp, serd)
    b = decay_fit(sp, sd, serp, serd)
    assert a.rate == b.rate
    assert np.array_equal(a.d, b.d)
    assert np.array_equal(a.w, b.w)


def test_report_serializes(twin_pair):
    sp, serp, sd, serd = twin_pair
    rep = decay_fit(sp, sd, serp, serd)
    blob = json.loads(json.dumps(rep.as_dict()))
    assert blob["t"] == 0.01
    assert len(blob["rows"]) == len(rep.ks)
    assert {"k", "d", "w"} <= set(blob["rows"][0])


# ---------------------------------------------------------- crossover decay


def test_crossover_rows_collapse_within_one_layer(cross_pair):
    sp, serp, sd, serd = cross_pair
    d = parameter_rows(sp, sd)
    assert d[-1] == pytest.approx(0.625, abs=1e-2)  # node offset oPa vs oCLP'
    assert 1e-9 < d[0] < 1e-6
    assert d[1] < 2e-14
    w = form_rows(sp, serp, sd, serd)
    assert 1e-5 < w[0] < 1e-3
    assert w[1] < 1e-10
    assert w[0] / w[1] > 1e6
    m = differential_rows(sp, serp, sd, serd)
    assert m[0] < 1e-6
    assert m[1] < 1e-13


def test_crossover_fit_is_degenerate(cross_pair):
    # the defect's influence on the quadruple dies below the floor by k=1
    sp, serp, sd, serd = cross_pair
    with pytest.raises(DegenerateFitError):
        decay_fit(sp, sd, serp, serd)


# ------------------------------------------------------------------- meshes


def test_tpms_identical_mesh_is_exact_zero(twin_meshes):
    mp, _ = twin_meshes
    assert tpms_comparison(mp, mp, 0) == 0.0


def test_tpms_rejects_odd_period(twin_meshes):
    mp, md = twin_meshes
    with pytest.raises(ValueError, match="even"):
        tpms_comparison(mp, md, 0, period=1)


def test_tpms_saturates_at_solver_noise(twin_meshes):
    # every unwound comparison sits at the Newton tolerance already;
    # the upper half of the twin is periodic to working precision
    mp, md = twin_meshes
    dists = [tpms_comparison(mp, md, ell) for ell in range(4)]
    assert max(dists) < 5e-11


def test_period_vector_is_a_third_of_the_lattice():
    rep = newton_continuation(catalog("rPD"), 0.01)
    mesh = build_mesh(rep.state, rep.series)
    frames = {f.k: f for f in mesh.frames}
    T = np.asarray(frames[2].position) - np.asarray(frames[0].position)
    assert T[2] > 0.1
    x, y = lattice_coords(complex(T[0], T[1]), rep.state.torus(0).tau)
    assert abs(3 * x - round(3 * x)) < 1e-9
    assert abs(3 * y - round(3 * y)) < 1e-9
    assert (x % 1.0, y % 1.0) == pytest.approx((2 / 3, 2 / 3), abs=1e-9)
