import itertools
import math

import pytest

from gridfpr.expansion import reinforce, use_case_dispatch
from gridfpr.for_engine import (
    ForPolygon,
    InfeasibleBasePointError,
    SweepConfig,
    compute_for,
    feasible,
)
from gridfpr.geometry import contains, is_simple, signed_area
from gridfpr.power_flow import check_violations, solve

from conftest import single_bus_network, small_catalog, trafo_box_network, two_bus_network
from oracles import box_area, box_disk_intersection_area


TIGHT = SweepConfig(n_directions=16, bisection_tol_mw=0.002, max_bisection_steps=40)


def test_feasible_returns_known_point(lv_feeder):
    dispatch = use_case_dispatch(lv_feeder, "high_load")
    sol = solve(lv_feeder, dispatch)
    assert check_violations(lv_feeder, sol).is_clear()
    target = (sol.pcc_p_mw, sol.pcc_q_mvar)
    found = feasible(lv_feeder, target, TIGHT)
    assert found is not None
    check = solve(lv_feeder, found)
    assert check.converged
    assert check.pcc_p_mw == pytest.approx(target[0], abs=0.002)
    assert check.pcc_q_mvar == pytest.approx(target[1], abs=0.002)
    assert check_violations(lv_feeder, check).is_clear()


def test_feasible_rejects_beyond_capacity(lv_feeder):
    assert feasible(lv_feeder, (10.0, 0.0), TIGHT) is None
    assert feasible(lv_feeder, (-10.0, 0.0), TIGHT) is None
    assert feasible(lv_feeder, (0.0, 25.0), TIGHT) is None


def test_feasible_certificate_within_ranges(lv_feeder):
    found = feasible(lv_feeder, (0.05, 0.01), TIGHT)
    assert found is not None
    for unit in lv_feeder.units:
        p, q = found.setpoints[unit.id]
        assert unit.p_min_mw - 1e-9 <= p <= unit.p_max_mw + 1e-9
        assert unit.q_min_mvar - 1e-9 <= q <= unit.q_max_mvar + 1e-9


def test_degenerate_grid_against_brute_force():
    # one generator behind a 0.5 MVA transformer: brute-force the unit box
    net = trafo_box_network(s_rated=0.5, vk_percent=2.0, p_max=1.0, q_half=0.3)
    cfg = SweepConfig(n_directions=16, bisection_tol_mw=0.004, max_bisection_steps=40)
    unit = net.units[0]
    targets = []
    for p_gen in (0.0, 0.2, 0.45, 0.7, 1.0):
        for q_gen in (-0.3, 0.0, 0.3):
            targets.append((p_gen, q_gen))
    for p_gen, q_gen in targets:
        sol = solve(net, type(use_case_dispatch(net, "high_load"))(
            setpoints={unit.id: (p_gen, q_gen)}))
        assert sol.converged
        target = (sol.pcc_p_mw, sol.pcc_q_mvar)
        ok_by_pf = check_violations(net, sol).is_clear()
        found = feasible(net, target, cfg)
        if ok_by_pf:
            assert found is not None, f"oracle missed reachable point {target}"
        else:
            assert found is None, f"oracle accepted violating point {target}"


def test_box_region_no_network_limits():
    net = single_bus_network(p_max=1.0, q_half=0.3)
    cfg = SweepConfig(n_directions=72, bisection_tol_mw=0.002, max_bisection_steps=50)
    polygon = compute_for(net, cfg)
    # import convention: generator spans [-1, 0] x [-0.3, 0.3]
    assert polygon.base_point == pytest.approx((-0.5, 0.0), abs=1e-6)
    for p, q in polygon.vertices:
        assert -1.0 - 0.01 <= p <= 0.01
        assert -0.3 - 0.01 <= q <= 0.3 + 0.01
    assert polygon.area_mva2 == pytest.approx(box_area(-1.0, 0.0, -0.3, 0.3), rel=0.05)


def test_box_disk_intersection_region():
    # rating 0.6 keeps the sweep anchor (-0.5, ~0.02) strictly inside the disk
    net = trafo_box_network(s_rated=0.6, vk_percent=2.0, p_max=1.0, q_half=0.3)
    cfg = SweepConfig(n_directions=72, bisection_tol_mw=0.002, max_bisection_steps=50)
    polygon = compute_for(net, cfg)
    expected = box_disk_intersection_area(-1.0, 0.0, 0.3, 0.6)
    assert polygon.area_mva2 == pytest.approx(expected, rel=0.05)


def test_polygon_invariants(lv_feeder):
    polygon = compute_for(lv_feeder, TIGHT)
    assert len(polygon.vertices) == TIGHT.n_directions >= 8
    assert is_simple(polygon.vertices)
    assert signed_area(polygon.vertices) > 0  # counterclockwise
    # star-shaped by construction: vertices ordered by angle around the base
    angles = [
        math.atan2(q - polygon.base_point[1], p - polygon.base_point[0])
        for p, q in polygon.vertices
        if math.hypot(p - polygon.base_point[0], q - polygon.base_point[1]) > 1e-9
    ]
    unwrapped = angles[:1]
    for a in angles[1:]:
        while a < unwrapped[-1] - 1e-9:
            a += 2 * math.pi
        unwrapped.append(a)
    assert unwrapped[-1] - unwrapped[0] <= 2 * math.pi + 1e-6


def test_certificates_sound(lv_feeder):
    polygon = compute_for(lv_feeder, TIGHT)
    tol = TIGHT.bisection_tol_mw
    for vertex, cert in zip(polygon.vertices, polygon.certificates):
        sol = solve(lv_feeder, cert.dispatch)
        assert sol.converged
        assert check_violations(lv_feeder, sol).is_clear()
        assert sol.pcc_p_mw == pytest.approx(vertex[0], abs=tol + 1e-9)
        assert sol.pcc_q_mvar == pytest.approx(vertex[1], abs=tol + 1e-9)


def test_boundary_tightness(lv_feeder):
    polygon = compute_for(lv_feeder, TIGHT)
    tol = TIGHT.bisection_tol_mw
    base = polygon.base_point
    for vertex in polygon.vertices:
        dx, dy = vertex[0] - base[0], vertex[1] - base[1]
        dist = math.hypot(dx, dy)
        if dist < 1e-9:
            continue
        beyond = (
            vertex[0] + 2 * tol * dx / dist,
            vertex[1] + 2 * tol * dy / dist,
        )
        assert feasible(lv_feeder, beyond, TIGHT) is None


def test_determinism(lv_feeder):
    a = compute_for(lv_feeder, TIGHT)
    b = compute_for(lv_feeder, TIGHT)
    assert a.vertices == b.vertices
    assert a.area_mva2 == b.area_mva2


def test_parallel_matches_serial():
    net = single_bus_network(p_max=1.0, q_half=0.3)
    cfg = SweepConfig(n_directions=12, bisection_tol_mw=0.01, max_bisection_steps=30)
    serial = compute_for(net, cfg, jobs=1)
    parallel = compute_for(net, cfg, jobs=2)
    assert serial.vertices == parallel.vertices


def test_monotone_nesting_under_capacity_upgrade():
    catalog = small_catalog()
    p = 0.208
    congested = two_bus_network(
        r_ohm_per_km=0.04, x_ohm_per_km=0.01, load_p_mw=-p,
        i_max_ka=0.1, type_id="small", gen_p_max=0.15,
    )
    stage = reinforce(congested, catalog)
    assert all(m.kind in ("replace_line_type", "add_parallel_line") for m in stage.measures)
    cfg = SweepConfig(n_directions=12, bisection_tol_mw=0.005, max_bisection_steps=40)
    inner = compute_for(congested, cfg)
    outer = compute_for(stage.network, cfg)
    assert outer.area_mva2 >= inner.area_mva2 - 1e-6
    for vertex in inner.vertices:
        assert contains(outer.vertices, vertex, tol=3 * cfg.bisection_tol_mw)


def test_monotone_nesting_pure_ampacity_raise():
    import dataclasses

    p = 0.208
    tight = two_bus_network(
        r_ohm_per_km=0.04, x_ohm_per_km=0.01, load_p_mw=-p,
        i_max_ka=0.08, type_id="small", gen_p_max=0.15,
    )
    roomy = dataclasses.replace(
        tight, lines=(dataclasses.replace(tight.lines[0], i_max_ka=0.3),)
    )
    cfg = SweepConfig(n_directions=12, bisection_tol_mw=0.005, max_bisection_steps=40)
    inner = compute_for(tight, cfg)
    outer = compute_for(roomy, cfg)
    assert outer.area_mva2 >= inner.area_mva2 - 1e-9
    for vertex in inner.vertices:
        assert feasible(roomy, vertex, cfg) is not None


def test_infeasible_base_point_errors():
    net = two_bus_network(x_ohm_per_km=0.1, load_p_mw=-6.0)
    with pytest.raises(InfeasibleBasePointError):
        compute_for(net, TIGHT)
