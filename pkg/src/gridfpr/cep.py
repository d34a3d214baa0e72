"""Linear multi-node capacity expansion with distribution-grid links.

The model sizes generation, storage and transmission over a weighted
snapshot set and minimizes capital plus operating cost. Each DSO link
couples a distribution-grid node to its transmission node through a
capacity variable M and a signed exchange f per snapshot:

* the link capacity is priced at the linearized planning-region slope and
  bounded by the fitted capacity range,
* the exchange is bounded by f_min * M <= f <= f_max * M (two rows per
  link and snapshot),
* a fractional loss applies to delivered energy in either direction, and
  the operating price applies to imports into the distribution grid.

Import/export are modeled as a nonnegative pair so the objective stays
linear and sign-correct.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .fileio import write_csv
from .fpr_builder import LinearFprModel, linear_model_from_dict, linear_model_to_dict
from .lp import LinearProgram, LpSolution, solve_lp

INF = math.inf


@dataclass(frozen=True)
class CepGenerator:
    name: str
    node: str
    capex_per_mw: float
    marginal_cost_per_mwh: float
    availability: tuple[float, ...]
    p_nom_max: float = INF
    p_nom_min: float = 0.0
    technology: str = ""

    @property
    def tech(self) -> str:
        return self.technology or self.name


@dataclass(frozen=True)
class CepStorage:
    name: str
    node: str
    power_capex_per_mw: float
    energy_capex_per_mwh: float
    efficiency: float = 0.9  # round trip, split evenly between charge and discharge


@dataclass(frozen=True)
class TxLink:
    name: str
    from_node: str
    to_node: str
    capex_per_mw: float
    loss_factor: float = 0.0


@dataclass(frozen=True)
class DsoLink:
    name: str
    node: str
    fpr: LinearFprModel
    demand: tuple[float, ...]
    loss_factor: float = 0.02


@dataclass(frozen=True)
class CepModel:
    snapshot_weights: tuple[float, ...]
    nodes: tuple[str, ...]
    generators: tuple[CepGenerator, ...]
    storage_units: tuple[CepStorage, ...] = ()
    tx_links: tuple[TxLink, ...] = ()
    dso_links: tuple[DsoLink, ...] = ()
    demand: dict[str, tuple[float, ...]] = None  # per TSO node

    def __post_init__(self):
        if self.demand is None:
            object.__setattr__(self, "demand", {})


@dataclass(frozen=True)
class CepSolution:
    status: str
    objective: float | None
    capacities: dict[str, float]
    dispatch: dict[str, tuple[float, ...]]
    message: str = ""


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.cost: list[float] = []
        self.rows_ub: list[tuple[dict[int, float], float, str]] = []
        self.rows_eq: list[tuple[dict[int, float], float, str]] = []

    def var(self, name: str, lo: float = 0.0, hi: float = INF, cost: float = 0.0) -> int:
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        self.cost.append(cost)
        return len(self.names) - 1

    def le(self, coeffs: dict[int, float], rhs: float, tag: str) -> None:
        self.rows_ub.append((coeffs, rhs, tag))

    def eq(self, coeffs: dict[int, float], rhs: float, tag: str) -> None:
        self.rows_eq.append((coeffs, rhs, tag))

    def finish(self) -> LinearProgram:
        n = len(self.names)
        a_ub = np.zeros((len(self.rows_ub), n))
        b_ub = np.zeros(len(self.rows_ub))
        ub_tags = []
        for i, (coeffs, rhs, tag) in enumerate(self.rows_ub):
            for j, v in coeffs.items():
                a_ub[i, j] = v
            b_ub[i] = rhs
            ub_tags.append(tag)
        a_eq = np.zeros((len(self.rows_eq), n))
        b_eq = np.zeros(len(self.rows_eq))
        eq_tags = []
        for i, (coeffs, rhs, tag) in enumerate(self.rows_eq):
            for j, v in coeffs.items():
                a_eq[i, j] = v
            b_eq[i] = rhs
            eq_tags.append(tag)
        return LinearProgram(
            c=np.array(self.cost),
            a_ub=a_ub, b_ub=b_ub,
            a_eq=a_eq, b_eq=b_eq,
            lower=np.array(self.lower), upper=np.array(self.upper),
            names=self.names, ub_tags=ub_tags, eq_tags=eq_tags,
        )


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]", "_", name)


def _check_model(model: CepModel) -> None:
    n_t = len(model.snapshot_weights)
    if n_t == 0:
        raise ValueError("model needs at least one snapshot")
    if any(w <= 0 for w in model.snapshot_weights):
        raise ValueError("snapshot weights must be > 0")
    dso_nodes = {d.name for d in model.dso_links}
    locations = set(model.nodes) | dso_nodes
    for gen in model.generators:
        if len(gen.availability) != n_t:
            raise ValueError(f"generator {gen.name}: availability length != snapshots")
        if any(not (0.0 <= a <= 1.0) for a in gen.availability):
            raise ValueError(f"generator {gen.name}: availability outside [0, 1]")
        if gen.node not in locations:
            raise ValueError(f"generator {gen.name}: unknown node {gen.node!r}")
    for sto in model.storage_units:
        if sto.node not in locations:
            raise ValueError(f"storage {sto.name}: unknown node {sto.node!r}")
        if not (0.0 < sto.efficiency <= 1.0):
            raise ValueError(f"storage {sto.name}: efficiency must be in (0, 1]")
    for link in model.tx_links:
        if link.from_node not in model.nodes or link.to_node not in model.nodes:
            raise ValueError(f"tx link {link.name}: unknown endpoint")
        if link.from_node == link.to_node:
            raise ValueError(f"tx link {link.name}: endpoints must differ")
        if not (0.0 <= link.loss_factor < 1.0):
            raise ValueError(f"tx link {link.name}: loss factor outside [0, 1)")
    for dso in model.dso_links:
        if dso.node not in model.nodes:
            raise ValueError(f"dso link {dso.name}: unknown node {dso.node!r}")
        if len(dso.demand) != n_t:
            raise ValueError(f"dso link {dso.name}: demand length != snapshots")
        if any(d < 0 for d in dso.demand):
            raise ValueError(f"dso link {dso.name}: demand must be >= 0")
        if not (0.0 <= dso.loss_factor < 1.0):
            raise ValueError(f"dso link {dso.name}: loss factor outside [0, 1)")
    for node, profile in model.demand.items():
        if node not in model.nodes:
            raise ValueError(f"demand at unknown node {node!r}")
        if len(profile) != n_t:
            raise ValueError(f"demand at {node}: profile length != snapshots")
        if any(d < 0 for d in profile):
            raise ValueError(f"demand at {node}: must be >= 0")


def build(model: CepModel) -> LinearProgram:
    """Assemble the LP; every row is tagged with its origin."""
    _check_model(model)
    b = _Builder()
    weights = model.snapshot_weights
    n_t = len(weights)

    gen_cap = {}
    gen_disp = {}
    for gen in model.generators:
        s = _safe(gen.name)
        gen_cap[gen.name] = b.var(f"gencap_{s}", gen.p_nom_min, gen.p_nom_max, gen.capex_per_mw)
        gen_disp[gen.name] = [
            b.var(f"gen_{s}_t{t}", 0.0, INF, weights[t] * gen.marginal_cost_per_mwh)
            for t in range(n_t)
        ]
        for t in range(n_t):
            b.le(
                {gen_disp[gen.name][t]: 1.0, gen_cap[gen.name]: -gen.availability[t]},
                0.0,
                f"avail_{s}_t{t}",
            )

    sto_p, sto_e, sto_ch, sto_dis, sto_soc = {}, {}, {}, {}, {}
    for sto in model.storage_units:
        s = _safe(sto.name)
        eta = math.sqrt(sto.efficiency)
        sto_p[sto.name] = b.var(f"stop_{s}", 0.0, INF, sto.power_capex_per_mw)
        sto_e[sto.name] = b.var(f"stoe_{s}", 0.0, INF, sto.energy_capex_per_mwh)
        sto_ch[sto.name] = [b.var(f"stoch_{s}_t{t}") for t in range(n_t)]
        sto_dis[sto.name] = [b.var(f"stodis_{s}_t{t}") for t in range(n_t)]
        sto_soc[sto.name] = [b.var(f"stosoc_{s}_t{t}") for t in range(n_t)]
        for t in range(n_t):
            prev = sto_soc[sto.name][(t - 1) % n_t]
            b.eq(
                {
                    sto_soc[sto.name][t]: 1.0,
                    prev: -1.0,
                    sto_ch[sto.name][t]: -eta * weights[t],
                    sto_dis[sto.name][t]: weights[t] / eta,
                },
                0.0,
                f"soc_{s}_t{t}",
            )
            b.le({sto_soc[sto.name][t]: 1.0, sto_e[sto.name]: -1.0}, 0.0, f"emax_{s}_t{t}")
            b.le({sto_ch[sto.name][t]: 1.0, sto_p[sto.name]: -1.0}, 0.0, f"chmax_{s}_t{t}")
            b.le({sto_dis[sto.name][t]: 1.0, sto_p[sto.name]: -1.0}, 0.0, f"dismax_{s}_t{t}")

    tx_cap, tx_fwd, tx_rev = {}, {}, {}
    for link in model.tx_links:
        s = _safe(link.name)
        tx_cap[link.name] = b.var(f"txcap_{s}", 0.0, INF, link.capex_per_mw)
        tx_fwd[link.name] = [b.var(f"txf_{s}_t{t}") for t in range(n_t)]
        tx_rev[link.name] = [b.var(f"txr_{s}_t{t}") for t in range(n_t)]
        for t in range(n_t):
            b.le({tx_fwd[link.name][t]: 1.0, tx_cap[link.name]: -1.0}, 0.0, f"txfmax_{s}_t{t}")
            b.le({tx_rev[link.name][t]: 1.0, tx_cap[link.name]: -1.0}, 0.0, f"txrmax_{s}_t{t}")

    dso_m, dso_imp, dso_exp = {}, {}, {}
    for dso in model.dso_links:
        s = _safe(dso.name)
        fpr = dso.fpr
        dso_m[dso.name] = b.var(
            f"dsom_{s}", max(0.0, fpr.m_min_mw), fpr.m_max_mw, fpr.capex_per_mw
        )
        dso_imp[dso.name] = [
            b.var(f"dsoimp_{s}_t{t}", 0.0, INF, weights[t] * fpr.opex_per_mwh)
            for t in range(n_t)
        ]
        dso_exp[dso.name] = [b.var(f"dsoexp_{s}_t{t}") for t in range(n_t)]
        for t in range(n_t):
            # f - f_max * M <= 0 and -f + f_min * M <= 0 with f = imp - exp
            b.le(
                {
                    dso_imp[dso.name][t]: 1.0,
                    dso_exp[dso.name][t]: -1.0,
                    dso_m[dso.name]: -fpr.f_max_pu,
                },
                0.0,
                f"linkmax_{s}_t{t}",
            )
            b.le(
                {
                    dso_imp[dso.name][t]: -1.0,
                    dso_exp[dso.name][t]: 1.0,
                    dso_m[dso.name]: fpr.f_min_pu,
                },
                0.0,
                f"linkmin_{s}_t{t}",
            )

    # nodal balance rows
    for node in model.nodes:
        profile = model.demand.get(node, (0.0,) * n_t)
        for t in range(n_t):
            coeffs: dict[int, float] = {}
            for gen in model.generators:
                if gen.node == node:
                    coeffs[gen_disp[gen.name][t]] = 1.0
            for sto in model.storage_units:
                if sto.node == node:
                    coeffs[sto_dis[sto.name][t]] = 1.0
                    coeffs[sto_ch[sto.name][t]] = -1.0
            for link in model.tx_links:
                if link.to_node == node:
                    coeffs[tx_fwd[link.name][t]] = 1.0 - link.loss_factor
                    coeffs[tx_rev[link.name][t]] = coeffs.get(tx_rev[link.name][t], 0.0) - 1.0
                if link.from_node == node:
                    coeffs[tx_fwd[link.name][t]] = coeffs.get(tx_fwd[link.name][t], 0.0) - 1.0
                    coeffs[tx_rev[link.name][t]] = (
                        coeffs.get(tx_rev[link.name][t], 0.0) + 1.0 - link.loss_factor
                    )
            for dso in model.dso_links:
                if dso.node == node:
                    coeffs[dso_imp[dso.name][t]] = -1.0
                    coeffs[dso_exp[dso.name][t]] = 1.0 - dso.loss_factor
            b.eq(coeffs, profile[t], f"balance_{_safe(node)}_t{t}")

    # distribution-grid side balance rows
    for dso in model.dso_links:
        s = _safe(dso.name)
        for t in range(n_t):
            coeffs = {
                dso_imp[dso.name][t]: 1.0 - dso.loss_factor,
                dso_exp[dso.name][t]: -1.0,
            }
            for gen in model.generators:
                if gen.node == dso.name:
                    coeffs[gen_disp[gen.name][t]] = 1.0
            for sto in model.storage_units:
                if sto.node == dso.name:
                    coeffs[sto_dis[sto.name][t]] = 1.0
                    coeffs[sto_ch[sto.name][t]] = -1.0
            b.eq(coeffs, dso.demand[t], f"dsobalance_{s}_t{t}")

    return b.finish()


def solve(model: CepModel) -> CepSolution:
    lp = build(model)
    result = solve_lp(lp)
    if result.status != "optimal":
        return CepSolution(
            status=result.status, objective=None, capacities={}, dispatch={},
            message=result.message,
        )
    return extract_solution(model, lp, result)


def extract_solution(model: CepModel, lp: LinearProgram, result: LpSolution) -> CepSolution:
    index = {name: j for j, name in enumerate(lp.names)}
    x = result.x
    n_t = len(model.snapshot_weights)

    def val(name: str) -> float:
        return float(x[index[name]])

    capacities: dict[str, float] = {}
    dispatch: dict[str, tuple[float, ...]] = {}
    for gen in model.generators:
        s = _safe(gen.name)
        capacities[f"gen:{gen.name}"] = val(f"gencap_{s}")
        dispatch[f"gen:{gen.name}"] = tuple(val(f"gen_{s}_t{t}") for t in range(n_t))
    for sto in model.storage_units:
        s = _safe(sto.name)
        capacities[f"storage_p:{sto.name}"] = val(f"stop_{s}")
        capacities[f"storage_e:{sto.name}"] = val(f"stoe_{s}")
        dispatch[f"storage_ch:{sto.name}"] = tuple(val(f"stoch_{s}_t{t}") for t in range(n_t))
        dispatch[f"storage_dis:{sto.name}"] = tuple(val(f"stodis_{s}_t{t}") for t in range(n_t))
    for link in model.tx_links:
        s = _safe(link.name)
        capacities[f"tx:{link.name}"] = val(f"txcap_{s}")
        dispatch[f"tx:{link.name}"] = tuple(
            val(f"txf_{s}_t{t}") - val(f"txr_{s}_t{t}") for t in range(n_t)
        )
    for dso in model.dso_links:
        s = _safe(dso.name)
        capacities[f"dso:{dso.name}"] = val(f"dsom_{s}")
        dispatch[f"dso:{dso.name}"] = tuple(
            val(f"dsoimp_{s}_t{t}") - val(f"dsoexp_{s}_t{t}") for t in range(n_t)
        )
        dispatch[f"dso_gross:{dso.name}"] = tuple(
            val(f"dsoimp_{s}_t{t}") + val(f"dsoexp_{s}_t{t}") for t in range(n_t)
        )
    return CepSolution(
        status="optimal",
        objective=result.objective,
        capacities=capacities,
        dispatch=dispatch,
    )


def scenario_a_variant(model: CepModel) -> CepModel:
    """Free, unconstrained DSO links: no investment cost, unlimited capacity."""
    free_links = tuple(
        replace(
            dso,
            fpr=replace(
                dso.fpr,
                capex_per_mw=0.0,
                base_cost=0.0,
                opex_per_mwh=0.0,
                m_min_mw=0.0,
                m_max_mw=INF,
            ),
        )
        for dso in model.dso_links
    )
    return replace(model, dso_links=free_links)


# --- study comparison -----------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    scenario: str
    technology: str
    provided_mwh: float
    consumed_mwh: float


@dataclass(frozen=True)
class StudyReport:
    rows: tuple[StudyRow, ...]
    objectives: dict[str, float]
    link_energy_mwh: dict[str, float]
    link_loss_mwh: dict[str, float]
    dso_local_share: dict[str, float]


def run_study(
    model_a: CepModel, model_b: CepModel, labels: tuple[str, str] = ("A", "B")
) -> tuple[StudyReport, dict[str, CepSolution]]:
    """Solve both scenarios and tabulate energy balances and link losses."""
    solutions = {}
    for label, model in zip(labels, (model_a, model_b)):
        solution = solve(model)
        if solution.status != "optimal":
            raise RuntimeError(f"scenario {label} is not optimal: {solution.status} {solution.message}")
        solutions[label] = solution

    rows: list[StudyRow] = []
    objectives, link_energy, link_loss, dso_share = {}, {}, {}, {}
    for label, model in zip(labels, (model_a, model_b)):
        solution = solutions[label]
        weights = model.snapshot_weights
        dso_nodes = {d.name for d in model.dso_links}

        tech_provided: dict[str, float] = {}
        local_provided = 0.0
        total_provided = 0.0
        for gen in model.generators:
            energy = sum(w * g for w, g in zip(weights, solution.dispatch[f"gen:{gen.name}"]))
            tech_provided[gen.tech] = tech_provided.get(gen.tech, 0.0) + energy
            total_provided += energy
            if gen.node in dso_nodes:
                local_provided += energy
        for tech in sorted(tech_provided):
            rows.append(StudyRow(label, tech, tech_provided[tech], 0.0))

        for sto in model.storage_units:
            dis = sum(w * v for w, v in zip(weights, solution.dispatch[f"storage_dis:{sto.name}"]))
            ch = sum(w * v for w, v in zip(weights, solution.dispatch[f"storage_ch:{sto.name}"]))
            rows.append(StudyRow(label, f"storage:{sto.name}", dis, ch))
            total_provided += dis

        demand_energy = 0.0
        for node, profile in sorted(model.demand.items()):
            demand_energy += sum(w * d for w, d in zip(weights, profile))
        for dso in model.dso_links:
            demand_energy += sum(w * d for w, d in zip(weights, dso.demand))
        rows.append(StudyRow(label, "demand", 0.0, demand_energy))

        loss_total = 0.0
        gross_total = 0.0
        for dso in model.dso_links:
            gross = sum(
                w * g for w, g in zip(weights, solution.dispatch[f"dso_gross:{dso.name}"])
            )
            loss_total += dso.loss_factor * gross
            gross_total += gross
        rows.append(StudyRow(label, "tso_dso_link_losses", 0.0, loss_total))
        tx_loss = 0.0
        for link in model.tx_links:
            flows = solution.dispatch[f"tx:{link.name}"]
            tx_loss += link.loss_factor * sum(w * abs(f) for w, f in zip(weights, flows))
        if model.tx_links:
            rows.append(StudyRow(label, "transmission_losses", 0.0, tx_loss))

        objectives[label] = solution.objective
        link_energy[label] = gross_total
        link_loss[label] = loss_total
        dso_share[label] = 0.0 if total_provided == 0 else local_provided / total_provided

    report = StudyReport(
        rows=tuple(rows),
        objectives=objectives,
        link_energy_mwh=link_energy,
        link_loss_mwh=link_loss,
        dso_local_share=dso_share,
    )
    return report, solutions


def save_study_balances(report: StudyReport, path) -> None:
    rows = [(r.scenario, r.technology, r.provided_mwh, r.consumed_mwh) for r in report.rows]
    write_csv(path, ["scenario", "technology", "provided_mwh", "consumed_mwh"], rows)


def save_study_summary(report: StudyReport, path) -> None:
    rows = [
        (
            label,
            report.objectives[label],
            report.link_energy_mwh[label],
            report.link_loss_mwh[label],
            report.dso_local_share[label],
        )
        for label in report.objectives
    ]
    write_csv(
        path,
        ["scenario", "objective", "link_energy_mwh", "link_loss_mwh", "dso_local_share"],
        rows,
    )


# --- JSON schema ----------------------------------------------------------

def _availability(raw, n_t: int, where: str) -> tuple[float, ...]:
    if isinstance(raw, (int, float)):
        return (float(raw),) * n_t
    values = tuple(float(v) for v in raw)
    if len(values) != n_t:
        raise ValueError(f"{where}: profile length {len(values)} != snapshots {n_t}")
    return values


def model_from_dict(data: dict, fpr_loader=None) -> CepModel:
    weights = tuple(float(w) for w in data["snapshot_weights"])
    n_t = len(weights)
    nodes = tuple(data["nodes"])
    generators = tuple(
        CepGenerator(
            name=g["name"],
            node=g["node"],
            capex_per_mw=float(g["capex_per_mw"]),
            marginal_cost_per_mwh=float(g.get("marginal_cost_per_mwh", 0.0)),
            availability=_availability(g["availability"], n_t, f"generator {g['name']}"),
            p_nom_max=float(g["p_nom_max"]) if g.get("p_nom_max") is not None else INF,
            p_nom_min=float(g.get("p_nom_min", 0.0)),
            technology=g.get("technology", ""),
        )
        for g in data.get("generators", [])
    )
    storage = tuple(
        CepStorage(
            name=s["name"],
            node=s["node"],
            power_capex_per_mw=float(s["power_capex_per_mw"]),
            energy_capex_per_mwh=float(s["energy_capex_per_mwh"]),
            efficiency=float(s.get("efficiency", 0.9)),
        )
        for s in data.get("storage_units", [])
    )
    tx = tuple(
        TxLink(
            name=l["name"],
            from_node=l["from_node"],
            to_node=l["to_node"],
            capex_per_mw=float(l["capex_per_mw"]),
            loss_factor=float(l.get("loss_factor", 0.0)),
        )
        for l in data.get("tx_links", [])
    )
    dso = []
    for d in data.get("dso_links", []):
        if "fpr_file" in d:
            if fpr_loader is None:
                raise ValueError(f"dso link {d['name']}: fpr_file needs a loader")
            fpr = fpr_loader(d["fpr_file"])
        else:
            fpr = linear_model_from_dict(d["fpr"])
        dso.append(DsoLink(
            name=d["name"],
            node=d["node"],
            fpr=fpr,
            demand=tuple(float(v) for v in d["demand"]),
            loss_factor=float(d.get("loss_factor", 0.02)),
        ))
    demand = {
        node: tuple(float(v) for v in profile)
        for node, profile in data.get("demand", {}).items()
    }
    return CepModel(
        snapshot_weights=weights,
        nodes=nodes,
        generators=generators,
        storage_units=storage,
        tx_links=tx,
        dso_links=tuple(dso),
        demand=demand,
    )


def model_to_dict(model: CepModel) -> dict:
    return {
        "snapshot_weights": list(model.snapshot_weights),
        "nodes": list(model.nodes),
        "demand": {node: list(p) for node, p in model.demand.items()},
        "generators": [
            {
                "name": g.name, "node": g.node,
                "capex_per_mw": g.capex_per_mw,
                "marginal_cost_per_mwh": g.marginal_cost_per_mwh,
                "availability": list(g.availability),
                "p_nom_max": None if math.isinf(g.p_nom_max) else g.p_nom_max,
                "p_nom_min": g.p_nom_min,
                "technology": g.technology,
            }
            for g in model.generators
        ],
        "storage_units": [
            {
                "name": s.name, "node": s.node,
                "power_capex_per_mw": s.power_capex_per_mw,
                "energy_capex_per_mwh": s.energy_capex_per_mwh,
                "efficiency": s.efficiency,
            }
            for s in model.storage_units
        ],
        "tx_links": [
            {
                "name": l.name, "from_node": l.from_node, "to_node": l.to_node,
                "capex_per_mw": l.capex_per_mw, "loss_factor": l.loss_factor,
            }
            for l in model.tx_links
        ],
        "dso_links": [
            {
                "name": d.name, "node": d.node,
                "fpr": linear_model_to_dict(d.fpr),
                "demand": list(d.demand),
                "loss_factor": d.loss_factor,
            }
            for d in model.dso_links
        ],
    }
