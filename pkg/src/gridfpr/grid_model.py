"""Domain model for distribution grids and the equipment/cost catalog.

Networks are immutable value objects (buses, lines, transformers and
dispatchable units) built around one point of common coupling (PCC).
Sign convention: unit injections into the grid are positive, so loads
carry negative active power; PCC import into the distribution grid is
positive.

The JSON readers are strict: unknown keys are rejected, every reference
must resolve, and errors name the offending field. Writers emit a fixed
key order so files are golden-testable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import networkx as nx

from .fileio import write_json

VOLTAGE_LEVELS = ("LV", "MV", "HV")
URBANIZATION_LEVELS = ("rural", "suburban", "urban")
UNIT_KINDS = ("load", "generator", "equivalent_fpr")

# Defaults applied when a bus does not override its own band.
DEFAULT_VOLTAGE_BOUNDS = {"LV": (0.90, 1.10), "MV": (0.95, 1.05), "HV": (0.95, 1.05)}


class GridModelError(Exception):
    """Base class for grid model errors."""


class SchemaError(GridModelError):
    """Input document violates the grid schema."""


class TopologyError(GridModelError):
    """Grid graph is not electrically connected."""


class CatalogError(GridModelError):
    """A type_id does not resolve in the equipment catalog."""


@dataclass(frozen=True)
class Bus:
    id: str
    voltage_level: str
    base_kv: float
    v_min_pu: float
    v_max_pu: float
    is_pcc: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    length_km: float
    type_id: str
    r_ohm_per_km: float
    x_ohm_per_km: float
    i_max_ka: float
    parallel_count: int = 1


@dataclass(frozen=True)
class Transformer:
    id: str
    hv_bus: str
    lv_bus: str
    s_rated_mva: float
    vk_percent: float
    type_id: str


@dataclass(frozen=True)
class Unit:
    """Load, generator or an equivalent unit standing in for a child grid.

    Equivalent units carry the child operation-region polygon in injection
    coordinates plus the cost of the selected child expansion entry.
    """

    id: str
    bus: str
    kind: str
    p_min_mw: float
    p_max_mw: float
    q_min_mvar: float
    q_max_mvar: float
    technology: str = ""
    child_fpr_ref: str | None = None
    child_polygon: tuple[tuple[float, float], ...] | None = None
    child_cost: float = 0.0


@dataclass(frozen=True)
class LineType:
    r_ohm_per_km: float
    x_ohm_per_km: float
    i_max_ka: float
    c_mat_per_km: float


@dataclass(frozen=True)
class TransformerType:
    s_rated_mva: float
    c_trafo: float


@dataclass(frozen=True)
class EquipmentCatalog:
    line_types: dict[str, LineType]
    transformer_types: dict[str, TransformerType]
    install_cost_per_km: dict[str, float]

    def line_types_by_ampacity(self) -> list[tuple[str, LineType]]:
        return sorted(self.line_types.items(), key=lambda kv: (kv[1].i_max_ka, kv[0]))

    def largest_line_type(self) -> tuple[str, LineType]:
        return self.line_types_by_ampacity()[-1]

    def transformer_types_by_rating(self) -> list[tuple[str, TransformerType]]:
        return sorted(
            self.transformer_types.items(), key=lambda kv: (kv[1].s_rated_mva, kv[0])
        )


@dataclass(frozen=True)
class Network:
    id: str
    urbanization: str
    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    units: tuple[Unit, ...]

    @cached_property
    def bus_by_id(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def pcc_bus(self) -> Bus:
        pcc = [b for b in self.buses if b.is_pcc]
        if len(pcc) != 1:
            raise GridModelError(
                f"network {self.id}: expected exactly one PCC bus, found {len(pcc)}"
            )
        return pcc[0]

    @cached_property
    def units_by_bus(self) -> dict[str, tuple[Unit, ...]]:
        out: dict[str, list[Unit]] = {b.id: [] for b in self.buses}
        for u in self.units:
            out.setdefault(u.bus, []).append(u)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def unit_by_id(self) -> dict[str, Unit]:
        return {u.id: u for u in self.units}

    def with_units(self, units) -> "Network":
        return replace(self, units=tuple(units))


@dataclass(frozen=True, order=True)
class Violation:
    element_id: str
    message: str


# --- per-unit conversion -------------------------------------------------

def z_base_ohm(base_kv: float, base_mva: float) -> float:
    return base_kv * base_kv / base_mva


def line_impedance_pu(line: Line, base_kv: float, base_mva: float) -> complex:
    """Series impedance of all parallel systems combined, in per unit."""
    z_ohm = complex(line.r_ohm_per_km, line.x_ohm_per_km) * line.length_km
    return z_ohm / line.parallel_count / z_base_ohm(base_kv, base_mva)


def impedance_pu_to_ohm(z_pu: complex, base_kv: float, base_mva: float) -> complex:
    return z_pu * z_base_ohm(base_kv, base_mva)


def line_rating_mva(line: Line, base_kv: float) -> float:
    return math.sqrt(3.0) * base_kv * line.i_max_ka * line.parallel_count


def transformer_reactance_pu(trafo: Transformer, base_mva: float) -> float:
    """Short-circuit reactance on the system base, ideal ratio assumed."""
    return (trafo.vk_percent / 100.0) * (base_mva / trafo.s_rated_mva)


# --- validation ----------------------------------------------------------

def validate(network: Network) -> list[Violation]:
    """Collect invariant violations, ordered by element id then message."""
    findings: list[Violation] = []
    seen_ids: set[str] = set()

    def check_unique(element_id: str, collection: str):
        if element_id in seen_ids:
            findings.append(Violation(element_id, f"duplicate id in {collection}"))
        seen_ids.add(element_id)

    bus_ids = set()
    pcc_ids = []
    for bus in network.buses:
        check_unique(bus.id, "buses")
        bus_ids.add(bus.id)
        if bus.voltage_level not in VOLTAGE_LEVELS:
            findings.append(Violation(bus.id, f"unknown voltage_level {bus.voltage_level!r}"))
        if bus.base_kv <= 0:
            findings.append(Violation(bus.id, "base_kv must be > 0"))
        if not (0 < bus.v_min_pu < bus.v_max_pu):
            findings.append(Violation(bus.id, "voltage bounds must satisfy 0 < v_min_pu < v_max_pu"))
        if bus.is_pcc:
            pcc_ids.append(bus.id)
    if len(pcc_ids) != 1:
        findings.append(Violation(network.id, f"multiple PCC buses: {pcc_ids}" if pcc_ids else "no PCC bus"))

    for line in network.lines:
        check_unique(line.id, "lines")
        if line.length_km <= 0:
            findings.append(Violation(line.id, "length_km must be > 0"))
        if line.i_max_ka <= 0:
            findings.append(Violation(line.id, "i_max_ka must be > 0"))
        if line.parallel_count < 1:
            findings.append(Violation(line.id, "parallel_count must be >= 1"))
        if line.from_bus == line.to_bus:
            findings.append(Violation(line.id, "from_bus equals to_bus"))
        for end in (line.from_bus, line.to_bus):
            if end not in bus_ids:
                findings.append(Violation(line.id, f"references unknown bus {end!r}"))

    hv_side_ids = set()
    for trafo in network.transformers:
        check_unique(trafo.id, "transformers")
        if trafo.s_rated_mva <= 0:
            findings.append(Violation(trafo.id, "s_rated_mva must be > 0"))
        if not (0 < trafo.vk_percent < 100):
            findings.append(Violation(trafo.id, "vk_percent must be in (0, 100)"))
        for end in (trafo.hv_bus, trafo.lv_bus):
            if end not in bus_ids:
                findings.append(Violation(trafo.id, f"references unknown bus {end!r}"))
        hv_side_ids.add(trafo.hv_bus)

    levels = {
        bus.voltage_level
        for bus in network.buses
        if bus.id not in hv_side_ids
    }
    if len(levels) > 1:
        findings.append(
            Violation(network.id, f"buses span multiple voltage levels {sorted(levels)}")
        )

    for unit in network.units:
        check_unique(unit.id, "units")
        if unit.kind not in UNIT_KINDS:
            findings.append(Violation(unit.id, f"unknown unit kind {unit.kind!r}"))
        if unit.bus not in bus_ids:
            findings.append(Violation(unit.id, f"references unknown bus {unit.bus!r}"))
        if unit.p_min_mw > unit.p_max_mw:
            findings.append(Violation(unit.id, "p_min_mw must not exceed p_max_mw"))
        if unit.q_min_mvar > unit.q_max_mvar:
            findings.append(Violation(unit.id, "q_min_mvar must not exceed q_max_mvar"))
        if unit.kind == "load" and unit.p_max_mw > 0:
            findings.append(Violation(unit.id, "loads must have p_max_mw <= 0"))

    if network.urbanization not in URBANIZATION_LEVELS:
        findings.append(Violation(network.id, f"unknown urbanization {network.urbanization!r}"))
    if network.base_mva <= 0:
        findings.append(Violation(network.id, "base_mva must be > 0"))

    if not is_connected(network):
        findings.append(Violation(network.id, "grid graph is not connected"))

    return sorted(findings)


def is_connected(network: Network) -> bool:
    if len(network.buses) <= 1:
        return True
    graph = nx.Graph()
    graph.add_nodes_from(b.id for b in network.buses)
    for line in network.lines:
        if line.from_bus in graph and line.to_bus in graph:
            graph.add_edge(line.from_bus, line.to_bus)
    for trafo in network.transformers:
        if trafo.hv_bus in graph and trafo.lv_bus in graph:
            graph.add_edge(trafo.hv_bus, trafo.lv_bus)
    return nx.is_connected(graph)


def grid_class(network: Network) -> tuple[str, str]:
    """(voltage_level, urbanization) of the grid behind the PCC transformer."""
    hv_side = {t.hv_bus for t in network.transformers}
    levels = sorted({b.voltage_level for b in network.buses if b.id not in hv_side})
    if len(levels) != 1:
        raise GridModelError(f"network {network.id}: ambiguous voltage level {levels}")
    return levels[0], network.urbanization


# --- JSON I/O ------------------------------------------------------------

_BUS_FIELDS = {"id", "voltage_level", "base_kv", "v_min_pu", "v_max_pu", "is_pcc"}
_LINE_FIELDS = {
    "id", "from_bus", "to_bus", "length_km", "type_id",
    "r_ohm_per_km", "x_ohm_per_km", "i_max_ka", "parallel_count",
}
_TRAFO_FIELDS = {"id", "hv_bus", "lv_bus", "s_rated_mva", "vk_percent", "type_id"}
_UNIT_FIELDS = {
    "id", "bus", "kind", "p_min_mw", "p_max_mw", "q_min_mvar", "q_max_mvar",
    "technology", "child_fpr_ref", "child_polygon", "child_cost",
}


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(obj: dict, key: str, where: str) -> float:
    value = _require(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: field {key!r} must be a number, got {type(value).__name__}")
    return float(value)


def _text(obj: dict, key: str, where: str) -> str:
    value = _require(obj, key, where)
    if not isinstance(value, str):
        raise SchemaError(f"{where}: field {key!r} must be a string")
    return value


def _reject_unknown(obj: dict, allowed: set[str], where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown fields {unknown}")


def parse_network(data: dict, source: str = "<memory>") -> Network:
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: document must be a JSON object")
    _reject_unknown(data, {"meta", "buses", "lines", "transformers", "units"}, source)
    meta = _require(data, "meta", source)
    _reject_unknown(meta, {"id", "urbanization", "base_mva"}, f"{source}: meta")
    net_id = _text(meta, "id", f"{source}: meta")
    urbanization = _text(meta, "urbanization", f"{source}: meta")
    base_mva = _num(meta, "base_mva", f"{source}: meta")

    buses = []
    for i, raw in enumerate(_require(data, "buses", source)):
        where = f"{source}: buses[{i}]"
        _reject_unknown(raw, _BUS_FIELDS, where)
        buses.append(Bus(
            id=_text(raw, "id", where),
            voltage_level=_text(raw, "voltage_level", where),
            base_kv=_num(raw, "base_kv", where),
            v_min_pu=_num(raw, "v_min_pu", where),
            v_max_pu=_num(raw, "v_max_pu", where),
            is_pcc=bool(raw.get("is_pcc", False)),
        ))

    lines = []
    for i, raw in enumerate(data.get("lines", [])):
        where = f"{source}: lines[{i}]"
        _reject_unknown(raw, _LINE_FIELDS, where)
        lines.append(Line(
            id=_text(raw, "id", where),
            from_bus=_text(raw, "from_bus", where),
            to_bus=_text(raw, "to_bus", where),
            length_km=_num(raw, "length_km", where),
            type_id=_text(raw, "type_id", where),
            r_ohm_per_km=_num(raw, "r_ohm_per_km", where),
            x_ohm_per_km=_num(raw, "x_ohm_per_km", where),
            i_max_ka=_num(raw, "i_max_ka", where),
            parallel_count=int(raw.get("parallel_count", 1)),
        ))

    transformers = []
    for i, raw in enumerate(data.get("transformers", [])):
        where = f"{source}: transformers[{i}]"
        _reject_unknown(raw, _TRAFO_FIELDS, where)
        transformers.append(Transformer(
            id=_text(raw, "id", where),
            hv_bus=_text(raw, "hv_bus", where),
            lv_bus=_text(raw, "lv_bus", where),
            s_rated_mva=_num(raw, "s_rated_mva", where),
            vk_percent=_num(raw, "vk_percent", where),
            type_id=_text(raw, "type_id", where),
        ))

    units = []
    for i, raw in enumerate(data.get("units", [])):
        where = f"{source}: units[{i}]"
        _reject_unknown(raw, _UNIT_FIELDS, where)
        kind = _text(raw, "kind", where)
        polygon = raw.get("child_polygon")
        if polygon is not None:
            if kind != "equivalent_fpr":
                raise SchemaError(f"{where}: child_polygon only valid for equivalent_fpr units")
            polygon = tuple((float(p), float(q)) for p, q in polygon)
        units.append(Unit(
            id=_text(raw, "id", where),
            bus=_text(raw, "bus", where),
            kind=kind,
            p_min_mw=_num(raw, "p_min_mw", where),
            p_max_mw=_num(raw, "p_max_mw", where),
            q_min_mvar=_num(raw, "q_min_mvar", where),
            q_max_mvar=_num(raw, "q_max_mvar", where),
            technology=raw.get("technology", ""),
            child_fpr_ref=raw.get("child_fpr_ref"),
            child_polygon=polygon,
            child_cost=float(raw.get("child_cost", 0.0)),
        ))

    for collection, items in (
        ("buses", buses), ("lines", lines), ("transformers", transformers), ("units", units),
    ):
        seen: set[str] = set()
        for item in items:
            if item.id in seen:
                raise SchemaError(f"{source}: duplicate id {item.id!r} in {collection}")
            seen.add(item.id)

    return Network(
        id=net_id,
        urbanization=urbanization,
        base_mva=base_mva,
        buses=tuple(buses),
        lines=tuple(lines),
        transformers=tuple(transformers),
        units=tuple(units),
    )


def load_network(path, catalog: EquipmentCatalog) -> Network:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"grid file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    network = parse_network(data, source=str(path))

    for line in network.lines:
        if line.type_id not in catalog.line_types:
            raise CatalogError(f"{path}: line {line.id}: unresolved type_id {line.type_id!r}")
    for trafo in network.transformers:
        if trafo.type_id not in catalog.transformer_types:
            raise CatalogError(f"{path}: transformer {trafo.id}: unresolved type_id {trafo.type_id!r}")

    if not is_connected(network):
        raise TopologyError(f"{path}: grid graph is not connected")

    findings = validate(network)
    if findings:
        detail = "; ".join(f"{v.element_id}: {v.message}" for v in findings)
        raise SchemaError(f"{path}: invalid network: {detail}")
    return network


def network_to_dict(network: Network) -> dict:
    def bus_dict(b: Bus) -> dict:
        return {
            "id": b.id, "voltage_level": b.voltage_level, "base_kv": b.base_kv,
            "v_min_pu": b.v_min_pu, "v_max_pu": b.v_max_pu, "is_pcc": b.is_pcc,
        }

    def line_dict(l: Line) -> dict:
        return {
            "id": l.id, "from_bus": l.from_bus, "to_bus": l.to_bus,
            "length_km": l.length_km, "type_id": l.type_id,
            "r_ohm_per_km": l.r_ohm_per_km, "x_ohm_per_km": l.x_ohm_per_km,
            "i_max_ka": l.i_max_ka, "parallel_count": l.parallel_count,
        }

    def trafo_dict(t: Transformer) -> dict:
        return {
            "id": t.id, "hv_bus": t.hv_bus, "lv_bus": t.lv_bus,
            "s_rated_mva": t.s_rated_mva, "vk_percent": t.vk_percent,
            "type_id": t.type_id,
        }

    def unit_dict(u: Unit) -> dict:
        out = {
            "id": u.id, "bus": u.bus, "kind": u.kind,
            "p_min_mw": u.p_min_mw, "p_max_mw": u.p_max_mw,
            "q_min_mvar": u.q_min_mvar, "q_max_mvar": u.q_max_mvar,
            "technology": u.technology,
        }
        if u.child_fpr_ref is not None:
            out["child_fpr_ref"] = u.child_fpr_ref
        if u.child_polygon is not None:
            out["child_polygon"] = [[p, q] for p, q in u.child_polygon]
            out["child_cost"] = u.child_cost
        return out

    return {
        "meta": {
            "id": network.id,
            "urbanization": network.urbanization,
            "base_mva": network.base_mva,
        },
        "buses": [bus_dict(b) for b in network.buses],
        "lines": [line_dict(l) for l in network.lines],
        "transformers": [trafo_dict(t) for t in network.transformers],
        "units": [unit_dict(u) for u in network.units],
    }


def save_network(network: Network, path) -> None:
    write_json(path, network_to_dict(network))


def load_catalog(path) -> EquipmentCatalog:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"catalog file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return parse_catalog(data, source=str(path))


def parse_catalog(data: dict, source: str = "<memory>") -> EquipmentCatalog:
    _reject_unknown(data, {"line_types", "transformer_types", "install_cost_per_km"}, source)
    line_types = {}
    for type_id, raw in _require(data, "line_types", source).items():
        where = f"{source}: line_types[{type_id}]"
        _reject_unknown(raw, {"r", "x", "i_max_ka", "c_mat_per_km"}, where)
        lt = LineType(
            r_ohm_per_km=_num(raw, "r", where),
            x_ohm_per_km=_num(raw, "x", where),
            i_max_ka=_num(raw, "i_max_ka", where),
            c_mat_per_km=_num(raw, "c_mat_per_km", where),
        )
        if lt.c_mat_per_km < 0:
            raise SchemaError(f"{where}: costs must be >= 0")
        line_types[type_id] = lt
    transformer_types = {}
    for type_id, raw in _require(data, "transformer_types", source).items():
        where = f"{source}: transformer_types[{type_id}]"
        _reject_unknown(raw, {"s_rated_mva", "c_trafo"}, where)
        tt = TransformerType(
            s_rated_mva=_num(raw, "s_rated_mva", where),
            c_trafo=_num(raw, "c_trafo", where),
        )
        if tt.c_trafo < 0:
            raise SchemaError(f"{where}: costs must be >= 0")
        transformer_types[type_id] = tt
    install = {}
    raw_install = _require(data, "install_cost_per_km", source)
    for level in URBANIZATION_LEVELS:
        install[level] = _num(raw_install, level, f"{source}: install_cost_per_km")
        if install[level] < 0:
            raise SchemaError(f"{source}: install_cost_per_km[{level}] must be >= 0")
    _reject_unknown(raw_install, set(URBANIZATION_LEVELS), f"{source}: install_cost_per_km")
    return EquipmentCatalog(
        line_types=line_types,
        transformer_types=transformer_types,
        install_cost_per_km=install,
    )


def catalog_to_dict(catalog: EquipmentCatalog) -> dict:
    return {
        "line_types": {
            type_id: {
                "r": lt.r_ohm_per_km, "x": lt.x_ohm_per_km,
                "i_max_ka": lt.i_max_ka, "c_mat_per_km": lt.c_mat_per_km,
            }
            for type_id, lt in catalog.line_types.items()
        },
        "transformer_types": {
            type_id: {"s_rated_mva": tt.s_rated_mva, "c_trafo": tt.c_trafo}
            for type_id, tt in catalog.transformer_types.items()
        },
        "install_cost_per_km": dict(catalog.install_cost_per_km),
    }


def save_catalog(catalog: EquipmentCatalog, path) -> None:
    write_json(path, catalog_to_dict(catalog))
