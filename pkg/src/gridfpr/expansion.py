"""Worst-case grid use cases and heuristic reinforcement.

The planning loop alternates power-flow checks with repair measures until
both use cases (high load, high feed-in) run violation-free:

* thermal overloads are cleared first, by swapping the element for the
  smallest catalog type that covers the observed flow with a 20% planning
  margin, or by adding a parallel system when the largest type is not
  enough;
* remaining voltage-band violations are cleared per feeder by splitting
  the feeder at two-thirds of the cumulative impedance towards the worst
  bus and laying a new line (largest catalog type) from the substation to
  the split point.

Each stage's cost is the sum of material plus urbanization-dependent
installation cost over all newly laid or replaced line kilometres, plus
the catalog price of every new transformer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import networkx as nx

from .geometry import project_inside
from .grid_model import Bus, EquipmentCatalog, Line, Network, Transformer, Unit
from .power_flow import DispatchPoint, PfSolution, ViolationReport, check_violations, solve

USE_CASES = ("high_load", "high_feed_in")
THERMAL_MARGIN = 1.2
FEED_IN_LOAD_FRACTION = 0.1
MAX_REINFORCE_ITERATIONS = 25
SPLIT_POSITION = 2.0 / 3.0
# keep split points strictly inside a line segment
_MIN_SPLIT_FRACTION = 0.05

MEASURE_KINDS = (
    "replace_line_type",
    "add_parallel_line",
    "split_line_at_two_thirds",
    "replace_transformer",
    "add_parallel_transformer",
)


class UnplannableError(Exception):
    """Reinforcement could not reach a violation-free grid."""

    def __init__(self, message: str, report: ViolationReport | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Measure:
    kind: str
    target: str
    new_type: str | None = None
    length_km: float | None = None
    cost_delta: float = 0.0


@dataclass(frozen=True)
class ExpansionStage:
    network: Network
    measures: tuple[Measure, ...]
    total_cost: float
    scenario_id: int


def _clip(value: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, value))


def use_case_dispatch(
    network: Network, case: str, feed_in_load_fraction: float = FEED_IN_LOAD_FRACTION
) -> DispatchPoint:
    """Worst-case dispatch for planning checks."""
    if case not in USE_CASES:
        raise ValueError(f"unknown use case {case!r}")
    setpoints: dict[str, tuple[float, float]] = {}
    for unit in network.units:
        if case == "high_load":
            p = unit.p_min_mw
        elif unit.kind == "load":
            p = feed_in_load_fraction * unit.p_min_mw
        else:
            p = unit.p_max_mw
        q = _clip(0.0, unit.q_min_mvar, unit.q_max_mvar)
        if unit.kind == "equivalent_fpr" and unit.child_polygon:
            p, q = project_inside(unit.child_polygon, (p, q))
        setpoints[unit.id] = (p, q)
    return DispatchPoint(setpoints=setpoints)


def line_measure_cost(
    catalog: EquipmentCatalog, urbanization: str, type_id: str, length_km: float
) -> float:
    lt = catalog.line_types[type_id]
    return (catalog.install_cost_per_km[urbanization] + lt.c_mat_per_km) * length_km


def stage_cost(measures, catalog: EquipmentCatalog, urbanization: str) -> float:
    """Total cost of a measure list: line kilometres plus transformer prices."""
    total = 0.0
    for measure in measures:
        if measure.kind in ("replace_line_type", "add_parallel_line", "split_line_at_two_thirds"):
            if measure.new_type is None or measure.length_km is None:
                raise ValueError(f"line measure {measure.kind} on {measure.target} lacks type/length")
            total += line_measure_cost(catalog, urbanization, measure.new_type, measure.length_km)
        elif measure.kind in ("replace_transformer", "add_parallel_transformer"):
            if measure.new_type is None:
                raise ValueError(f"transformer measure on {measure.target} lacks new_type")
            total += catalog.transformer_types[measure.new_type].c_trafo
        else:
            raise ValueError(f"unknown measure kind {measure.kind!r}")
    return total


def _feeder_root(network: Network) -> str:
    """Grid-side anchor: the LV bus of the PCC transformer, or the PCC itself."""
    pcc = network.pcc_bus.id
    for trafo in network.transformers:
        if trafo.hv_bus == pcc:
            return trafo.lv_bus
    return pcc


def _line_graph(network: Network) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(b.id for b in network.buses)
    for line in network.lines:
        base_kv = network.bus_by_id[line.from_bus].base_kv
        z = abs(complex(line.r_ohm_per_km, line.x_ohm_per_km)) * line.length_km / line.parallel_count
        weight = z
        if graph.has_edge(line.from_bus, line.to_bus):
            # keep the lowest-impedance parallel path, deterministic by id
            existing = graph.edges[line.from_bus, line.to_bus]
            if (weight, line.id) >= (existing["weight"], existing["line"].id):
                continue
        graph.add_edge(line.from_bus, line.to_bus, weight=weight, line=line)
    return graph


def _upgrade_thermal(network, catalog, element_id, flow_mva, measures, urbanization):
    """Replace or parallel the overloaded element; returns the new network."""
    line = next((l for l in network.lines if l.id == element_id), None)
    if line is not None:
        base_kv = network.bus_by_id[line.from_bus].base_kv
        required_ka = THERMAL_MARGIN * flow_mva / (math.sqrt(3.0) * base_kv * line.parallel_count)
        candidate = None
        for type_id, lt in catalog.line_types_by_ampacity():
            if lt.i_max_ka >= required_ka:
                candidate = (type_id, lt)
                break
        if candidate is not None and candidate[0] != line.type_id:
            type_id, lt = candidate
            new_line = replace(
                line,
                type_id=type_id,
                r_ohm_per_km=lt.r_ohm_per_km,
                x_ohm_per_km=lt.x_ohm_per_km,
                i_max_ka=lt.i_max_ka,
            )
            length = line.length_km * line.parallel_count
            measures.append(Measure(
                kind="replace_line_type",
                target=line.id,
                new_type=type_id,
                length_km=length,
                cost_delta=line_measure_cost(catalog, urbanization, type_id, length),
            ))
        else:
            # largest type insufficient (or already installed): add one system
            new_line = replace(line, parallel_count=line.parallel_count + 1)
            measures.append(Measure(
                kind="add_parallel_line",
                target=line.id,
                new_type=line.type_id,
                length_km=line.length_km,
                cost_delta=line_measure_cost(catalog, urbanization, line.type_id, line.length_km),
            ))
        lines = tuple(new_line if l.id == line.id else l for l in network.lines)
        return replace(network, lines=lines)

    trafo = next((t for t in network.transformers if t.id == element_id), None)
    if trafo is None:
        raise UnplannableError(f"violated element {element_id!r} not found")
    required_mva = THERMAL_MARGIN * flow_mva
    candidate = None
    for type_id, tt in catalog.transformer_types_by_rating():
        if tt.s_rated_mva >= required_mva:
            candidate = (type_id, tt)
            break
    if candidate is not None and candidate[0] != trafo.type_id:
        type_id, tt = candidate
        new_trafo = replace(trafo, type_id=type_id, s_rated_mva=tt.s_rated_mva)
        measures.append(Measure(
            kind="replace_transformer",
            target=trafo.id,
            new_type=type_id,
            cost_delta=catalog.transformer_types[type_id].c_trafo,
        ))
        transformers = tuple(new_trafo if t.id == trafo.id else t for t in network.transformers)
        return replace(network, transformers=transformers)
    # duplicate the existing transformer as a parallel system
    n_existing = sum(1 for t in network.transformers if t.id.startswith(trafo.id))
    twin = replace(trafo, id=f"{trafo.id}~par{n_existing}")
    measures.append(Measure(
        kind="add_parallel_transformer",
        target=trafo.id,
        new_type=trafo.type_id,
        cost_delta=catalog.transformer_types[trafo.type_id].c_trafo,
    ))
    return replace(network, transformers=network.transformers + (twin,))


def _split_feeder(network, catalog, worst_bus, measures, urbanization):
    """Insert the two-thirds separation towards the worst-voltage bus."""
    root = _feeder_root(network)
    graph = _line_graph(network)
    if worst_bus == root or worst_bus not in graph or root not in graph:
        return None
    try:
        path = nx.shortest_path(graph, root, worst_bus, weight="weight")
    except nx.NetworkXNoPath:
        return None
    hops = [graph.edges[a, b]["line"] for a, b in zip(path, path[1:])]
    if not hops:
        return None
    z_hops = [graph.edges[a, b]["weight"] for a, b in zip(path, path[1:])]
    z_total = sum(z_hops)
    z_target = SPLIT_POSITION * z_total

    cum = 0.0
    route_km = 0.0
    for idx, (line, z_hop) in enumerate(zip(hops, z_hops)):
        if cum + z_hop >= z_target or idx == len(hops) - 1:
            fraction = (z_target - cum) / z_hop if z_hop > 0 else 0.5
            fraction = _clip(fraction, _MIN_SPLIT_FRACTION, 1.0 - _MIN_SPLIT_FRACTION)
            upstream_bus = path[idx]
            oriented = line.from_bus == upstream_bus
            split_line = line
            split_fraction = fraction if oriented else 1.0 - fraction
            route_km += fraction * line.length_km
            break
        cum += z_hop
        route_km += line.length_km
    else:  # pragma: no cover - loop always breaks
        return None

    n_marks = sum(1 for b in network.buses if b.id.startswith(f"{split_line.id}~mid"))
    suffix = "" if n_marks == 0 else str(n_marks)
    mid_id = f"{split_line.id}~mid{suffix}"
    template = network.bus_by_id[split_line.to_bus]
    mid_bus = Bus(
        id=mid_id,
        voltage_level=template.voltage_level,
        base_kv=template.base_kv,
        v_min_pu=template.v_min_pu,
        v_max_pu=template.v_max_pu,
        is_pcc=False,
    )
    seg_a = replace(
        split_line,
        id=f"{split_line.id}~a{suffix}",
        to_bus=mid_id,
        length_km=split_line.length_km * split_fraction,
    )
    seg_b = replace(
        split_line,
        id=f"{split_line.id}~b{suffix}",
        from_bus=mid_id,
        length_km=split_line.length_km * (1.0 - split_fraction),
    )
    largest_id, largest = catalog.largest_line_type()
    new_line = Line(
        id=f"{split_line.id}~sep{suffix}",
        from_bus=root,
        to_bus=mid_id,
        length_km=route_km,
        type_id=largest_id,
        r_ohm_per_km=largest.r_ohm_per_km,
        x_ohm_per_km=largest.x_ohm_per_km,
        i_max_ka=largest.i_max_ka,
        parallel_count=1,
    )
    measures.append(Measure(
        kind="split_line_at_two_thirds",
        target=split_line.id,
        new_type=largest_id,
        length_km=route_km,
        cost_delta=line_measure_cost(catalog, urbanization, largest_id, route_km),
    ))
    lines = [l for l in network.lines if l.id != split_line.id]
    lines += [seg_a, seg_b, new_line]
    return replace(network, buses=network.buses + (mid_bus,), lines=tuple(lines))


def _solve_use_cases(network: Network) -> dict[str, PfSolution]:
    solutions = {}
    for case in USE_CASES:
        sol = solve(network, use_case_dispatch(network, case))
        if not sol.converged:
            raise UnplannableError(
                f"power flow for use case {case} diverged "
                f"(mismatch {sol.max_mismatch_pu:.3e})"
            )
        solutions[case] = sol
    return solutions


def verify_stage(stage: ExpansionStage) -> bool:
    """Re-check that both use cases run violation-free on the stage network."""
    for case in USE_CASES:
        sol = solve(stage.network, use_case_dispatch(stage.network, case))
        if not sol.converged:
            return False
        if not check_violations(stage.network, sol).is_clear():
            return False
    return True


def reinforce(
    network: Network,
    catalog: EquipmentCatalog,
    scenario_id: int = 0,
    max_iterations: int = MAX_REINFORCE_ITERATIONS,
) -> ExpansionStage:
    """Iterate repair measures until both use cases are violation-free."""
    work = network
    measures: list[Measure] = []
    last_report: ViolationReport | None = None

    for _iteration in range(max_iterations):
        solutions = _solve_use_cases(work)
        reports = {case: check_violations(work, sol) for case, sol in solutions.items()}
        if all(r.is_clear() for r in reports.values()):
            total = stage_cost(measures, catalog, work.urbanization)
            return ExpansionStage(
                network=work,
                measures=tuple(measures),
                total_cost=total,
                scenario_id=scenario_id,
            )

        # worst loading per element over both use cases
        thermal: dict[str, float] = {}
        for report in reports.values():
            for element_id, loading in report.thermal:
                thermal[element_id] = max(loading, thermal.get(element_id, 0.0))
        if thermal:
            flows: dict[str, float] = {}
            for sol in solutions.values():
                for flow in sol.branch_flows:
                    s = max(flow.s_from_mva, flow.s_to_mva)
                    flows[flow.element_id] = max(s, flows.get(flow.element_id, 0.0))
            ordered = sorted(thermal.items(), key=lambda kv: (-kv[1], kv[0]))
            for element_id, _loading in ordered:
                work = _upgrade_thermal(
                    work, catalog, element_id, flows[element_id], measures, work.urbanization
                )
            continue

        # voltage pass: one separation per affected feeder
        worst: dict[str, tuple[float, str]] = {}
        for report in reports.values():
            for bus_id, v, bound in report.voltage:
                bus = work.bus_by_id[bus_id]
                deviation = bus.v_min_pu - v if bound == "v_min" else v - bus.v_max_pu
                if bus_id not in worst or deviation > worst[bus_id][0]:
                    worst[bus_id] = (deviation, bound)
        ordered_buses = sorted(worst.items(), key=lambda kv: (-kv[1][0], kv[0]))
        last_report = next(r for r in reports.values() if not r.is_clear())

        root = _feeder_root(work)
        graph = _line_graph(work)
        handled_feeders: set[str] = set()
        progressed = False
        for bus_id, _info in ordered_buses:
            try:
                path = nx.shortest_path(graph, root, bus_id, weight="weight")
            except (nx.NetworkXNoPath, nx.NodeNotFound):
                continue
            if len(path) < 2:
                continue
            feeder_key = graph.edges[path[0], path[1]]["line"].id
            if feeder_key in handled_feeders:
                continue
            handled_feeders.add(feeder_key)
            updated = _split_feeder(work, catalog, bus_id, measures, work.urbanization)
            if updated is not None:
                work = updated
                progressed = True
        if not progressed:
            raise UnplannableError(
                f"voltage violations not repairable by line separation: {last_report.describe()}",
                report=last_report,
            )

    solutions = _solve_use_cases(work)
    reports = {case: check_violations(work, sol) for case, sol in solutions.items()}
    residual = next((r for r in reports.values() if not r.is_clear()), None)
    if residual is None:
        total = stage_cost(measures, catalog, work.urbanization)
        return ExpansionStage(
            network=work, measures=tuple(measures), total_cost=total, scenario_id=scenario_id
        )
    raise UnplannableError(
        f"iteration cap reached with violations remaining: {residual.describe()}",
        report=residual,
    )


# --- serialization --------------------------------------------------------

def measure_to_dict(measure: Measure) -> dict:
    out = {"kind": measure.kind, "target": measure.target}
    if measure.new_type is not None:
        out["new_type"] = measure.new_type
    if measure.length_km is not None:
        out["length_km"] = measure.length_km
    out["cost_delta"] = measure.cost_delta
    return out


def measure_from_dict(data: dict) -> Measure:
    return Measure(
        kind=data["kind"],
        target=data["target"],
        new_type=data.get("new_type"),
        length_km=data.get("length_km"),
        cost_delta=float(data.get("cost_delta", 0.0)),
    )
