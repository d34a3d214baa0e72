"""Feasible operation region of a grid in the PCC power-exchange plane.

The region boundary is found by sweeping rays from an interior anchor and
bisecting each ray against a feasibility oracle. The oracle asks for a
dispatch that realizes a target PCC exchange without thermal or voltage
violations; it searches a two-parameter dispatch family (active setpoints
interpolated between the two planning use cases, reactive setpoints scaled
proportionally to each unit's headroom) with alternating bisections on the
two coordinates. Every accepted boundary point therefore carries a
dispatch certificate that an AC power flow re-verifies independently; the
price is a possible inner approximation where only exotic dispatches would
reach further.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .expansion import use_case_dispatch
from .fileio import write_csv, write_json
from .geometry import project_inside, signed_area
from .grid_model import Network
from .power_flow import DispatchPoint, check_violations, solve

_INNER_ROUNDS = 4
_COORD_STEPS = 40


class InfeasibleBasePointError(Exception):
    """The sweep anchor itself admits no violation-free dispatch."""


@dataclass(frozen=True)
class SweepConfig:
    n_directions: int = 36
    bisection_tol_mw: float | None = None  # default: 1% of grid peak power
    max_bisection_steps: int = 40

    def check(self) -> None:
        if self.n_directions < 8:
            raise ValueError("n_directions must be >= 8")
        if self.bisection_tol_mw is not None and self.bisection_tol_mw <= 0:
            raise ValueError("bisection_tol_mw must be > 0")
        if self.max_bisection_steps < 1:
            raise ValueError("max_bisection_steps must be >= 1")


@dataclass(frozen=True)
class VertexCertificate:
    dispatch: DispatchPoint
    gap_mw: float


@dataclass(frozen=True)
class ForPolygon:
    vertices: tuple[tuple[float, float], ...]
    base_point: tuple[float, float]
    certificates: tuple[VertexCertificate, ...]
    area_mva2: float


def grid_peak_mw(network: Network) -> float:
    load = sum(-u.p_min_mw for u in network.units)
    gen = sum(u.p_max_mw for u in network.units)
    return max(load, gen, 1e-3)


def resolve_tol(network: Network, cfg: SweepConfig) -> float:
    if cfg.bisection_tol_mw is not None:
        return cfg.bisection_tol_mw
    return 0.01 * grid_peak_mw(network)


def _family_dispatch(network: Network, d_lo: DispatchPoint, d_hi: DispatchPoint,
                     alpha: float, beta: float) -> DispatchPoint:
    """alpha interpolates active power between use cases, beta scales Q."""
    setpoints = {}
    for unit in network.units:
        p = (1.0 - alpha) * d_lo.setpoints[unit.id][0] + alpha * d_hi.setpoints[unit.id][0]
        if beta >= 0.0:
            q = beta * unit.q_max_mvar
        else:
            q = -beta * unit.q_min_mvar
        q = min(unit.q_max_mvar, max(unit.q_min_mvar, q))
        if unit.kind == "equivalent_fpr" and unit.child_polygon:
            p, q = project_inside(unit.child_polygon, (p, q))
        setpoints[unit.id] = (p, q)
    return DispatchPoint(setpoints=setpoints)


def _pcc_flow(network: Network, dispatch: DispatchPoint):
    sol = solve(network, dispatch)
    if not sol.converged:
        return None, None
    return (sol.pcc_p_mw, sol.pcc_q_mvar), sol


def feasible(network: Network, target: tuple[float, float], cfg: SweepConfig) -> DispatchPoint | None:
    """Dispatch realizing the target PCC exchange without violations, or None."""
    cfg.check()
    tol = resolve_tol(network, cfg)
    p_target, q_target = target

    # quick reject far beyond the installed-capacity box
    p_reach = sum(max(abs(u.p_min_mw), abs(u.p_max_mw)) for u in network.units)
    q_reach = sum(max(abs(u.q_min_mvar), abs(u.q_max_mvar)) for u in network.units)
    if abs(p_target) > p_reach + 10 * tol + 1.0 or abs(q_target) > q_reach + 10 * tol + 1.0:
        return None

    d_lo = use_case_dispatch(network, "high_load")   # maximum import
    d_hi = use_case_dispatch(network, "high_feed_in")  # maximum export

    def probe(alpha: float, beta: float):
        return _pcc_flow(network, _family_dispatch(network, d_lo, d_hi, alpha, beta))

    inner_tol = tol / 4.0
    alpha, beta = 0.5, 0.0
    flow = None
    for _round in range(_INNER_ROUNDS):
        alpha, flow = _bisect_coordinate(
            probe, "alpha", alpha, beta, p_target, inner_tol
        )
        if alpha is None:
            return None
        beta, flow = _bisect_coordinate(
            probe, "beta", alpha, beta, q_target, inner_tol
        )
        if beta is None:
            return None
        if (abs(flow[0] - p_target) <= inner_tol and abs(flow[1] - q_target) <= inner_tol):
            break

    dispatch = _family_dispatch(network, d_lo, d_hi, alpha, beta)
    pcc, sol = _pcc_flow(network, dispatch)
    if pcc is None:
        return None
    if abs(pcc[0] - p_target) > tol or abs(pcc[1] - q_target) > tol:
        return None
    if not check_violations(network, sol).is_clear():
        return None
    return dispatch


def _bisect_coordinate(probe, which: str, alpha: float, beta: float, target: float, tol: float):
    """Monotone bisection of one family coordinate against a PCC component."""
    if which == "alpha":
        lo, hi = 0.0, 1.0
        component = 0

        def value(x):
            return probe(x, beta)
    else:
        lo, hi = -1.0, 1.0
        component = 1

        def value(x):
            return probe(alpha, x)

    flow_lo, _ = value(lo)
    flow_hi, _ = value(hi)
    if flow_lo is None or flow_hi is None:
        return None, None
    # PCC import decreases when units inject more: g(lo) >= g(hi)
    g_lo = flow_lo[component] - target
    g_hi = flow_hi[component] - target
    if abs(g_lo) <= tol:
        return lo, flow_lo
    if abs(g_hi) <= tol:
        return hi, flow_hi
    if g_lo < 0.0 or g_hi > 0.0:
        return None, None
    x_best, flow_best, err_best = lo, flow_lo, abs(g_lo)
    for _ in range(_COORD_STEPS):
        mid = 0.5 * (lo + hi)
        flow_mid, _ = value(mid)
        if flow_mid is None:
            return None, None
        g_mid = flow_mid[component] - target
        if abs(g_mid) < err_best:
            x_best, flow_best, err_best = mid, flow_mid, abs(g_mid)
        if abs(g_mid) <= tol:
            return mid, flow_mid
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
    return x_best, flow_best


def _use_case_flows(network: Network):
    flows = {}
    for case in ("high_load", "high_feed_in"):
        pcc, sol = _pcc_flow(network, use_case_dispatch(network, case))
        if pcc is None:
            raise InfeasibleBasePointError(
                f"power flow for use case {case} diverged; no sweep anchor"
            )
        flows[case] = pcc
    return flows


def _sweep_ray(network, cfg, base, base_dispatch, theta, tol, s_outer):
    direction = (math.cos(theta), math.sin(theta))
    lo, lo_dispatch = 0.0, base_dispatch
    hi = s_outer
    steps = 0
    while hi - lo > tol and steps < cfg.max_bisection_steps:
        mid = 0.5 * (lo + hi)
        target = (base[0] + mid * direction[0], base[1] + mid * direction[1])
        dispatch = feasible(network, target, cfg)
        if dispatch is not None:
            lo, lo_dispatch = mid, dispatch
        else:
            hi = mid
        steps += 1
    vertex = (base[0] + lo * direction[0], base[1] + lo * direction[1])
    return vertex, VertexCertificate(dispatch=lo_dispatch, gap_mw=hi - lo)


def _ray_task(args):
    network, cfg, base, theta, tol, s_outer = args
    base_dispatch = feasible(network, base, cfg)
    if base_dispatch is None:
        raise InfeasibleBasePointError("sweep anchor infeasible in worker")
    return _sweep_ray(network, cfg, base, base_dispatch, theta, tol, s_outer)


def compute_for(network: Network, cfg: SweepConfig = SweepConfig(), jobs: int = 1) -> ForPolygon:
    """Sweep the region boundary; the anchor is the use-case flow midpoint."""
    cfg.check()
    tol = resolve_tol(network, cfg)
    flows = _use_case_flows(network)
    p_hl, q_hl = flows["high_load"]
    p_hf, q_hf = flows["high_feed_in"]
    base = (0.5 * (p_hl + p_hf), 0.5 * (q_hl + q_hf))

    base_dispatch = feasible(network, base, cfg)
    if base_dispatch is None:
        raise InfeasibleBasePointError(
            f"anchor {base} admits no violation-free dispatch"
        )

    p_reach = sum(max(abs(u.p_min_mw), abs(u.p_max_mw)) for u in network.units)
    q_reach = sum(max(abs(u.q_min_mvar), abs(u.q_max_mvar)) for u in network.units)
    s_outer = math.hypot(abs(base[0]) + p_reach, abs(base[1]) + q_reach) + 10 * tol + 1.0

    thetas = [2.0 * math.pi * k / cfg.n_directions for k in range(cfg.n_directions)]
    if jobs > 1:
        tasks = [(network, cfg, base, theta, tol, s_outer) for theta in thetas]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ray_task, tasks))
    else:
        results = [
            _sweep_ray(network, cfg, base, base_dispatch, theta, tol, s_outer)
            for theta in thetas
        ]

    vertices = tuple(vertex for vertex, _cert in results)
    certificates = tuple(cert for _vertex, cert in results)
    area = signed_area(vertices)
    return ForPolygon(
        vertices=vertices,
        base_point=base,
        certificates=certificates,
        area_mva2=area,
    )


# --- serialization --------------------------------------------------------

def polygon_to_dict(polygon: ForPolygon) -> dict:
    return {
        "vertices": [{"p_mw": p, "q_mvar": q} for p, q in polygon.vertices],
        "base_point": {"p_mw": polygon.base_point[0], "q_mvar": polygon.base_point[1]},
        "area": polygon.area_mva2,
    }


def polygon_from_dict(data: dict) -> ForPolygon:
    vertices = tuple((float(v["p_mw"]), float(v["q_mvar"])) for v in data["vertices"])
    base = (float(data["base_point"]["p_mw"]), float(data["base_point"]["q_mvar"]))
    return ForPolygon(
        vertices=vertices,
        base_point=base,
        certificates=(),
        area_mva2=float(data["area"]),
    )


def save_polygon_json(polygon: ForPolygon, path) -> None:
    write_json(path, polygon_to_dict(polygon))


def save_polygon_csv(polygon: ForPolygon, path) -> None:
    n = len(polygon.vertices)
    rows = [
        (360.0 * k / n, p, q)
        for k, (p, q) in enumerate(polygon.vertices)
    ]
    write_csv(path, ["theta_deg", "p_mw", "q_mvar"], rows)
