"""Assemble per-stage operation regions into a cost-indexed planning region.

Stages are sorted along the cost axis; when several stages land on the
same cost (within a relative tolerance) the polygon with the larger area
wins, so the kept entry always offers the most flexibility for its price.
The planning region is then linearized by ordinary least squares of cost
on a per-entry capacity metric, which yields the capital cost per MW of
interconnection capacity plus normalized flow bounds for the
capacity-expansion link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .expansion import ExpansionStage
from .fileio import write_csv, write_json
from .for_engine import ForPolygon, polygon_from_dict, polygon_to_dict
from .geometry import signed_area
from .grid_model import Network, Unit, grid_class

COST_EQUALITY_RTOL = 1e-6

CAPACITY_METRICS = ("max_abs_p", "max_apparent")


@dataclass(frozen=True)
class FprEntry:
    cost: float
    polygon: ForPolygon
    stage_ref: int
    scale_factor: float | None = None


@dataclass(frozen=True)
class Fpr:
    grid_class: tuple[str, str]
    entries: tuple[FprEntry, ...]


@dataclass(frozen=True)
class LinearFprModel:
    capex_per_mw: float
    base_cost: float
    m_min_mw: float
    m_max_mw: float
    f_min_pu: float
    f_max_pu: float
    opex_per_mwh: float = 0.0
    r_squared: float = 0.0
    degenerate: bool = False
    capacity_metric: str = "max_abs_p"


def embedded_child_cost(network: Network) -> float:
    return sum(u.child_cost for u in network.units if u.kind == "equivalent_fpr")


def assemble(stages, scale_factors=None) -> Fpr:
    """Cost-sort stage regions and resolve equal-cost conflicts by area.

    ``stages`` is a list of (ExpansionStage, ForPolygon); ``scale_factors``
    optionally maps scenario ids to the supply-task scale for later
    stage selection.
    """
    if not stages:
        raise ValueError("assemble requires at least one stage")
    classes = {grid_class(stage.network) for stage, _poly in stages}
    if len(classes) != 1:
        raise ValueError(f"stages span multiple grid classes: {sorted(classes)}")

    entries = []
    for stage, polygon in stages:
        cost = stage.total_cost + embedded_child_cost(stage.network)
        scale = None
        if scale_factors is not None:
            scale = scale_factors.get(stage.scenario_id)
        entries.append(FprEntry(
            cost=cost, polygon=polygon, stage_ref=stage.scenario_id, scale_factor=scale,
        ))
    entries.sort(key=lambda e: (e.cost, e.stage_ref))

    kept: list[FprEntry] = []
    for entry in entries:
        if kept and _costs_equal(kept[-1].cost, entry.cost):
            if entry.polygon.area_mva2 > kept[-1].polygon.area_mva2:
                kept[-1] = entry
        else:
            kept.append(entry)
    return Fpr(grid_class=classes.pop(), entries=tuple(kept))


def _costs_equal(a: float, b: float) -> bool:
    scale = max(abs(a), abs(b), 1e-12)
    return abs(a - b) <= COST_EQUALITY_RTOL * scale


def entry_capacity(polygon: ForPolygon, metric: str) -> float:
    if metric == "max_abs_p":
        return max(abs(p) for p, _q in polygon.vertices)
    if metric == "max_apparent":
        return max(math.hypot(p, q) for p, q in polygon.vertices)
    raise ValueError(f"unknown capacity metric {metric!r}")


def linearize(fpr: Fpr, capacity_metric: str = "max_abs_p", opex_per_mwh: float = 0.0) -> LinearFprModel:
    """Least-squares fit of entry cost against interconnection capacity."""
    if capacity_metric not in CAPACITY_METRICS:
        raise ValueError(f"unknown capacity metric {capacity_metric!r}")
    capacities = [entry_capacity(e.polygon, capacity_metric) for e in fpr.entries]
    costs = [e.cost for e in fpr.entries]
    n = len(capacities)
    m_min, m_max = min(capacities), max(capacities)

    distinct = len({round(c, 12) for c in capacities})
    if n < 2 or distinct < 2:
        slope, intercept, r_squared, degenerate = 0.0, _mean(costs), 0.0, True
    else:
        mean_r = _mean(capacities)
        mean_c = _mean(costs)
        var = sum((r - mean_r) ** 2 for r in capacities)
        cov = sum((r - mean_r) * (c - mean_c) for r, c in zip(capacities, costs))
        slope = cov / var
        if slope < 0.0:
            slope = 0.0
        intercept = mean_c - slope * mean_r
        sse = sum((c - slope * r - intercept) ** 2 for r, c in zip(capacities, costs))
        sst = sum((c - mean_c) ** 2 for c in costs)
        r_squared = 1.0 if sst == 0.0 else 1.0 - sse / sst
        degenerate = False
    intercept = max(intercept, 0.0)

    # normalized flow bounds from the largest-capacity entry
    idx = max(range(n), key=lambda i: (capacities[i], i))
    reference = capacities[idx]
    if reference <= 0.0:
        f_min_pu, f_max_pu = 0.0, 0.0
    else:
        ps = [p for p, _q in fpr.entries[idx].polygon.vertices]
        f_max_pu = max(ps) / reference
        f_min_pu = min(ps) / reference
    return LinearFprModel(
        capex_per_mw=slope,
        base_cost=intercept,
        m_min_mw=m_min,
        m_max_mw=m_max,
        f_min_pu=f_min_pu,
        f_max_pu=f_max_pu,
        opex_per_mwh=opex_per_mwh,
        r_squared=r_squared,
        degenerate=degenerate,
        capacity_metric=capacity_metric,
    )


def _mean(values) -> float:
    return sum(values) / len(values)


def select_entry(fpr: Fpr, selection: str, target_scale: float | None = None) -> FprEntry:
    if selection == "largest":
        return fpr.entries[-1]
    if selection == "by_scale":
        if target_scale is None:
            raise ValueError("by_scale selection requires a target scale factor")
        scored = [e for e in fpr.entries if e.scale_factor is not None]
        if not scored:
            raise ValueError("child entries carry no scale factors; use selection='largest'")
        return min(scored, key=lambda e: (abs(e.scale_factor - target_scale), e.cost))
    raise ValueError(f"unknown selection {selection!r}")


def embed_child(
    parent: Network,
    child_fpr: Fpr,
    attach_bus: str,
    selection: str = "largest",
    target_scale: float | None = None,
    child_ref: str | None = None,
) -> Network:
    """Attach a child grid as an equivalent unit clipped to its region.

    The child region is expressed in import coordinates at the child PCC;
    seen from the parent bus the child behaves as a unit injecting the
    negated exchange, so the stored polygon is point-mirrored.
    """
    if attach_bus not in parent.bus_by_id:
        raise ValueError(f"attach bus {attach_bus!r} not in network {parent.id}")
    if not child_fpr.entries:
        raise ValueError("child planning region is empty")
    entry = select_entry(child_fpr, selection, target_scale)
    polygon = tuple((-p, -q) for p, q in entry.polygon.vertices)
    ps = [p for p, _q in polygon]
    qs = [q for _p, q in polygon]
    n_existing = sum(
        1 for u in parent.units if u.kind == "equivalent_fpr" and u.bus == attach_bus
    )
    unit = Unit(
        id=f"eq_{attach_bus}_{n_existing}",
        bus=attach_bus,
        kind="equivalent_fpr",
        p_min_mw=min(ps),
        p_max_mw=max(ps),
        q_min_mvar=min(qs),
        q_max_mvar=max(qs),
        technology="equivalent",
        child_fpr_ref=child_ref,
        child_polygon=polygon,
        child_cost=entry.cost,
    )
    return parent.with_units(parent.units + (unit,))


# --- serialization --------------------------------------------------------

def fpr_to_dict(fpr: Fpr) -> dict:
    return {
        "grid_class": {
            "voltage_level": fpr.grid_class[0],
            "urbanization": fpr.grid_class[1],
        },
        "entries": [
            {
                "cost": e.cost,
                "stage_ref": e.stage_ref,
                "scale_factor": e.scale_factor,
                "polygon": polygon_to_dict(e.polygon),
            }
            for e in fpr.entries
        ],
    }


def fpr_from_dict(data: dict) -> Fpr:
    entries = tuple(
        FprEntry(
            cost=float(e["cost"]),
            polygon=polygon_from_dict(e["polygon"]),
            stage_ref=int(e["stage_ref"]),
            scale_factor=None if e.get("scale_factor") is None else float(e["scale_factor"]),
        )
        for e in data["entries"]
    )
    gc = data["grid_class"]
    return Fpr(grid_class=(gc["voltage_level"], gc["urbanization"]), entries=entries)


def save_fpr_json(fpr: Fpr, path) -> None:
    write_json(path, fpr_to_dict(fpr))


def save_fpr_csv(fpr: Fpr, path, capacity_metric: str = "max_abs_p") -> None:
    rows = [
        (e.cost, e.polygon.area_mva2, entry_capacity(e.polygon, capacity_metric))
        for e in fpr.entries
    ]
    write_csv(path, ["cost", "area", "R"], rows)


def linear_model_to_dict(model: LinearFprModel) -> dict:
    return {
        "capex_per_mw": model.capex_per_mw,
        "base_cost": model.base_cost,
        "m_min_mw": model.m_min_mw,
        "m_max_mw": model.m_max_mw,
        "f_min_pu": model.f_min_pu,
        "f_max_pu": model.f_max_pu,
        "opex_per_mwh": model.opex_per_mwh,
        "r_squared": model.r_squared,
        "degenerate": model.degenerate,
        "capacity_metric": model.capacity_metric,
    }


def linear_model_from_dict(data: dict) -> LinearFprModel:
    return LinearFprModel(
        capex_per_mw=float(data["capex_per_mw"]),
        base_cost=float(data["base_cost"]),
        m_min_mw=float(data["m_min_mw"]),
        m_max_mw=float(data["m_max_mw"]),
        f_min_pu=float(data["f_min_pu"]),
        f_max_pu=float(data["f_max_pu"]),
        opex_per_mwh=float(data.get("opex_per_mwh", 0.0)),
        r_squared=float(data.get("r_squared", 0.0)),
        degenerate=bool(data.get("degenerate", False)),
        capacity_metric=str(data.get("capacity_metric", "max_abs_p")),
    )


def save_linear_model(model: LinearFprModel, path) -> None:
    write_json(path, linear_model_to_dict(model))


def load_linear_model(path) -> LinearFprModel:
    from .fileio import read_json

    return linear_model_from_dict(read_json(path))
