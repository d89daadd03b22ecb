import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import B1, K_SCAN, SHARP, WINDOW
from edgecurrent.errors import (
    InvalidArgument,
    MonotonicityViolation,
    SimplicityViolation,
    UnsupportedFamily,
)
from edgecurrent.model import FieldConfig, PotentialSpec, fiber_grid, make_problem
from edgecurrent.numerics import build_grid
from edgecurrent.spectra import (
    Window,
    check_disjointness,
    dirichlet_ladder,
    invert_dispersion,
    ordered_map,
    scan_dispersion,
    slope_feynman_hellmann,
    slope_trace_formula,
    solve_fiber,
)


def _fiber(spec, k, n=1, B=1.0, **kw):
    return solve_fiber(make_problem(spec, FieldConfig(B), k, **kw), n)


# --- solve_fiber ------------------------------------------------------------------

@pytest.mark.parametrize("k", [-2.0, 0.0, 3.0])
def test_free_fiber(k):
    p = _fiber(PotentialSpec("none"), k, 3, h=0.01)
    np.testing.assert_allclose(p.omega, [1, 3, 5], atol=1e-3)


def test_dirichlet_half_oscillator():
    p = _fiber(PotentialSpec("dirichlet_edge"), 0.0, h=0.005)
    assert p.omega[0] == pytest.approx(3.0, abs=1e-3)


def test_sharp_far_from_barrier():
    p = _fiber(SHARP, 4.0)
    w = p.omega[0]
    # the discrete free level on the same grid sits O(h^2) below 1; the barrier lifts it
    free = solve_fiber(make_problem(PotentialSpec("none"), B1, 4.0, p.grid), 1).omega[0]
    assert free < w < 1.01
    assert abs(w - 1.0) < 1e-6


def test_eigenfunctions_normalised_and_signed():
    p = _fiber(SHARP, 0.7, 3)
    for j in range(3):
        _, phi = p.level(j)
        assert np.sum(phi**2) * p.grid.h == pytest.approx(1.0, abs=1e-10)
        big = np.nonzero(np.abs(phi) >= 1e-6 * np.abs(phi).max())[0][0]
        assert phi[big] > 0
    assert np.all(np.diff(p.omega) > 0)


def test_level_out_of_range():
    p = _fiber(SHARP, 0.7)
    with pytest.raises(InvalidArgument):
        p.level(1)
    with pytest.raises(InvalidArgument):
        slope_feynman_hellmann(p, 3, B1)


def test_simplicity_violation_on_degenerate_problem():
    # a tall wall through the well centre leaves two mirror-image, degenerate halves
    g = build_grid(-8, 30, 3801)
    spec = PotentialSpec("none")
    wall = np.where(np.abs(g.nodes - 22.0) < 3.0, 1e9, 0.0)
    with pytest.raises(SimplicityViolation):
        solve_fiber(make_problem(spec, B1, 22.0, g, wall), 2)
    assert solve_fiber(make_problem(spec, B1, 22.0, g), 2).omega[0] == pytest.approx(1.0, abs=1e-3)


# --- slopes -------------------------------------------------------------------------

def test_free_slope_zero():
    for k in (-1.0, 0.5, 2.0):
        p = _fiber(PotentialSpec("none"), k, 2, h=0.01)
        for j in range(2):
            assert abs(slope_feynman_hellmann(p, j, B1)) < 1e-6


@pytest.mark.parametrize("spec,k", [(SHARP, 0.8), (SHARP, 0.0), (PotentialSpec("parabolic", 5.0), 1.0),
                                    (PotentialSpec("tanh", 30.0), 0.5)])
def test_feynman_hellmann_matches_finite_difference(spec, k):
    d = 1e-4
    g = fiber_grid(spec, B1, [k - d, k + d])
    p = solve_fiber(make_problem(spec, B1, k, g), 1)
    wp = solve_fiber(make_problem(spec, B1, k + d, g), 1).omega[0]
    wm = solve_fiber(make_problem(spec, B1, k - d, g), 1).omega[0]
    fh = slope_feynman_hellmann(p, 0, B1)
    assert fh < 0
    assert fh == pytest.approx((wp - wm) / (2 * d), rel=1e-5)


def test_trace_formula_agrees(sharp_preimage):
    for k in np.linspace(sharp_preimage.k_c, sharp_preimage.k_a, 5):
        p = _fiber(SHARP, k)
        tr = slope_trace_formula(p, 0, SHARP, B1)
        fh = slope_feynman_hellmann(p, 0, B1)
        assert tr <= 0
        assert tr == pytest.approx(fh, rel=1e-3)


def test_trace_formula_far_right_and_family():
    p = _fiber(SHARP, 8.0)
    assert abs(slope_trace_formula(p, 0, SHARP, B1)) < 1e-8
    with pytest.raises(UnsupportedFamily):
        slope_trace_formula(_fiber(PotentialSpec("parabolic", 5.0), 0.0), 0, PotentialSpec("parabolic", 5.0), B1)


# --- tables ---------------------------------------------------------------------------

def test_free_table_constant():
    t = scan_dispersion(PotentialSpec("none"), B1, np.linspace(-2, 2, 5), 2, h=0.01)
    np.testing.assert_allclose(t.omega[0], 1.0, atol=1e-3)
    np.testing.assert_allclose(t.omega[1], 3.0, atol=1e-3)


def test_sharp_table_shape_and_monotone(sharp_table):
    t = sharp_table
    assert t.monotone == [True, True]
    assert t.omega[0, 0] > 15 and t.omega[0, -1] < 1.001
    # O(h^2) discretisation lets the far-right levels dip just below E_0
    assert np.all(t.omega[0] > 1.0 - 1e-6) and np.all(t.omega[0] <= 101.0)
    # non-crossing and simplicity
    assert np.all(t.omega[1] - t.omega[0] > 1e-6)
    # slope magnitude bound |omega'| <= 2 sqrt(omega)
    assert np.all(np.abs(t.slope) <= 2 * np.sqrt(t.omega))
    assert np.all(t.slope[0][(t.k_grid > -2) & (t.k_grid < 3)] < 0)


def test_sharp_left_limit():
    # deep inside the barrier the level approaches E_0 + V0
    assert _fiber(SHARP, -16.0).omega[0] == pytest.approx(101.0, abs=1e-3)


def test_dirichlet_table_limits():
    t = scan_dispersion(PotentialSpec("dirichlet_edge"), B1, np.array([0.0, 2.0, 7.0]), 1, h=0.005)
    assert t.omega[0, 0] == pytest.approx(3.0, abs=1e-3)
    assert t.omega[0, -1] == pytest.approx(1.0, abs=1e-3)


def test_scan_rejects_bad_grid():
    for ks in ([1.0], [1.0, 0.0], [[0.0, 1.0]]):
        with pytest.raises(InvalidArgument):
            scan_dispersion(SHARP, B1, ks, 1)


def test_scan_is_worker_independent():
    ks = np.linspace(-1, 2, 7)
    a = scan_dispersion(SHARP, B1, ks, 2, h=0.01, workers=1)
    b = scan_dispersion(SHARP, B1, ks, 2, h=0.01, workers=4)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


def test_ordered_map_preserves_order():
    assert ordered_map(lambda v: v * v, list(range(50)), workers=8) == [v * v for v in range(50)]


def test_exports(sharp_table):
    csv_text = sharp_table.to_csv()
    assert csv_text.splitlines()[0] == "k,omega_0,slope_0,omega_1,slope_1"
    assert len(csv_text.splitlines()) == K_SCAN.size + 1
    doc = json.loads(sharp_table.to_json())
    assert doc["spec"]["family"] == "sharp" and len(doc["omega"][0]) == K_SCAN.size
    assert {"simplicity_rtol", "inversion_rtol"} <= set(doc["tolerances"])


def test_grid_refinement_is_second_order():
    ws = [_fiber(PotentialSpec("parabolic", 5.0), 0.8, h=h).omega[0] for h in (0.02, 0.01, 0.005)]
    assert abs(ws[0] - ws[1]) <= 4.0 * abs(ws[1] - ws[2]) * (1 + 1e-3)
    assert abs(ws[0] - ws[1]) >= 3.5 * abs(ws[1] - ws[2])


# --- windows and inversion --------------------------------------------------------------

@pytest.mark.parametrize("args", [(0, 1.0, 1.7), (0, 1.5, 3.0), (0, 1.8, 1.7), (-1, 1.5, 1.7),
                                  (0, 1.5, 1.7, 1.2, None), (0, 1.5, 1.7, 1.2, 2.8),
                                  (0, 1.5, 1.7, 1.6, 1.8)])
def test_window_rejects(args):
    with pytest.raises(InvalidArgument):
        Window(*args)


def test_window_bounds():
    w = Window(1, 1.9, 2.1, 1.2, 2.8)
    assert w.bounds(2.0) == pytest.approx((7.8, 8.2))
    assert w.outer_bounds(2.0) == pytest.approx((6.4, 9.6))
    assert w.outer() == Window(1, 1.2, 2.8)


def test_invert_sharp(sharp_table, sharp_preimage):
    p = sharp_preimage
    assert not p.empty and p.k_c < p.k_a and not p.clipped
    for k, target in ((p.k_c, 1.7), (p.k_a, 1.5)):
        assert abs(sharp_table.fiber(k, 1).omega[0] - target) <= 1e-8


def test_invert_empty_cases(sharp_table):
    assert invert_dispersion(sharp_table, 1, WINDOW).empty
    t = scan_dispersion(PotentialSpec("none"), B1, np.linspace(-2, 2, 5), 1, h=0.01)
    assert invert_dispersion(t, 0, WINDOW).empty
    with pytest.raises(InvalidArgument):
        invert_dispersion(sharp_table, 5, WINDOW)


def test_invert_monotonicity_violation(sharp_table):
    from dataclasses import replace
    bad = replace(sharp_table, omega=sharp_table.omega[:, ::-1].copy())
    with pytest.raises(MonotonicityViolation):
        invert_dispersion(bad, 0, WINDOW)


def test_disjointness_single_level(sharp_table):
    r = check_disjointness(sharp_table, WINDOW)
    assert r["disjoint"] and r["pairs"] == {}


@pytest.mark.parametrize("a,c", [(1.7, 1.9), (1.05, 2.95)])
def test_disjointness_two_levels(a, c):
    t = scan_dispersion(SHARP, B1, np.linspace(-5, 6, 56), 2)
    r = check_disjointness(t, Window(1, a, c))
    pair = r["pairs"]["0,1"]
    assert pair["consistent"]
    if pair["condition_empty1"]:
        assert pair["empty"]


# --- Dirichlet ladder ------------------------------------------------------------------

def test_dirichlet_ladder():
    lad = dirichlet_ladder(B1, WINDOW, [50, 200, 800, 3200])
    gaps = [r["gap"] for r in lad["rows"]]
    assert lad["gaps_positive"] and all(g > 0 for g in gaps)
    assert lad["gaps_strictly_decreasing"] and lad["omega_nondecreasing"]
    assert lad["gap_decay_exponent"] <= -0.4
    assert lad["overlap_defect_monotone"] and lad["rows"][-1]["overlap_defect"] < 1e-2


def test_dirichlet_ladder_arguments():
    with pytest.raises(InvalidArgument):
        dirichlet_ladder(B1, WINDOW, [200, 50])
    with pytest.raises(InvalidArgument):
        dirichlet_ladder(B1, WINDOW, [2.5, 50])
    with pytest.raises(InvalidArgument):
        dirichlet_ladder(B1, WINDOW, [50, 200], k_star=-5.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.5, 2.5))
def test_slope_bound_property(k):
    p = _fiber(SHARP, k, 2, h=0.005)
    for j in range(2):
        assert abs(slope_feynman_hellmann(p, j, B1)) <= 2 * math.sqrt(p.omega[j])
