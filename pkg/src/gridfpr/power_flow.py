"""Balanced AC power flow with the PCC as slack bus.

Newton-Raphson in polar coordinates from a flat start. Every non-slack bus
is a PQ bus; lines are series impedances (no shunt charging) and
transformers series reactances with ideal ratio, which is adequate for the
short LV/MV cable runs this toolkit targets.

``solve`` is a pure function of (network, dispatch); many solves may run
concurrently on a shared network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_model import (
    Network,
    line_impedance_pu,
    line_rating_mva,
    transformer_reactance_pu,
)

MISMATCH_TOL_PU = 1e-8
MAX_ITERATIONS = 50


@dataclass(frozen=True)
class DispatchPoint:
    """Active/reactive setpoints per unit id (injection positive)."""

    setpoints: dict[str, tuple[float, float]]

    def p_mw(self, unit_id: str) -> float:
        return self.setpoints[unit_id][0]

    def q_mvar(self, unit_id: str) -> float:
        return self.setpoints[unit_id][1]


@dataclass(frozen=True)
class BranchFlow:
    element_id: str
    p_from_mw: float
    q_from_mvar: float
    p_to_mw: float
    q_to_mvar: float
    s_from_mva: float
    s_to_mva: float
    loading_percent: float


@dataclass(frozen=True)
class PfSolution:
    v_pu: dict[str, float]
    theta_rad: dict[str, float]
    branch_flows: tuple[BranchFlow, ...]
    pcc_p_mw: float
    pcc_q_mvar: float
    converged: bool
    iterations: int
    max_mismatch_pu: float


@dataclass(frozen=True)
class ViolationReport:
    thermal: tuple[tuple[str, float], ...]
    voltage: tuple[tuple[str, float, str], ...]

    def is_clear(self) -> bool:
        return not self.thermal and not self.voltage

    def describe(self) -> str:
        parts = [f"{eid} at {pct:.1f}%" for eid, pct in self.thermal]
        parts += [f"{bid} v={v:.4f} ({bound})" for bid, v, bound in self.voltage]
        return "; ".join(parts) if parts else "no violations"


def _branch_list(network: Network):
    """(element_id, from_idx, to_idx, y_series_pu, rating_mva) per branch."""
    index = {bus.id: i for i, bus in enumerate(network.buses)}
    branches = []
    for line in network.lines:
        base_kv = network.bus_by_id[line.from_bus].base_kv
        z = line_impedance_pu(line, base_kv, network.base_mva)
        branches.append((
            line.id, index[line.from_bus], index[line.to_bus],
            1.0 / z, line_rating_mva(line, base_kv),
        ))
    for trafo in network.transformers:
        x = transformer_reactance_pu(trafo, network.base_mva)
        branches.append((
            trafo.id, index[trafo.hv_bus], index[trafo.lv_bus],
            1.0 / complex(0.0, x), trafo.s_rated_mva,
        ))
    return index, branches


def _ybus(n: int, branches) -> np.ndarray:
    y = np.zeros((n, n), dtype=complex)
    for _eid, i, j, y_series, _rating in branches:
        y[i, j] -= y_series
        y[j, i] -= y_series
        y[i, i] += y_series
        y[j, j] += y_series
    return y


def solve(
    network: Network,
    dispatch: DispatchPoint,
    tol: float = MISMATCH_TOL_PU,
    max_iter: int = MAX_ITERATIONS,
) -> PfSolution:
    """Solve the nodal power balance; never raises on divergence."""
    index, branches = _branch_list(network)
    n = len(network.buses)
    ybus = _ybus(n, branches)
    slack = index[network.pcc_bus.id]

    p_sched = np.zeros(n)
    q_sched = np.zeros(n)
    for unit in network.units:
        try:
            p_mw, q_mvar = dispatch.setpoints[unit.id]
        except KeyError:
            raise ValueError(f"dispatch misses setpoint for unit {unit.id!r}") from None
        i = index[unit.bus]
        p_sched[i] += p_mw / network.base_mva
        q_sched[i] += q_mvar / network.base_mva

    others = np.array([i for i in range(n) if i != slack], dtype=int)
    vm = np.ones(n)
    va = np.zeros(n)
    converged = False
    iterations = 0
    mismatch = 0.0

    for iteration in range(max_iter + 1):
        v = vm * np.exp(1j * va)
        s_calc = v * np.conj(ybus @ v)
        if others.size == 0:
            converged = True
            iterations = iteration
            mismatch = 0.0
            break
        dp = s_calc.real[others] - p_sched[others]
        dq = s_calc.imag[others] - q_sched[others]
        g = np.concatenate([dp, dq])
        mismatch = float(np.max(np.abs(g)))
        iterations = iteration
        if mismatch <= tol:
            converged = True
            break
        if iteration == max_iter:
            break
        ibus = ybus @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_vnorm = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
        j11 = ds_dva.real[np.ix_(others, others)]
        j12 = ds_dvm.real[np.ix_(others, others)]
        j21 = ds_dva.imag[np.ix_(others, others)]
        j22 = ds_dvm.imag[np.ix_(others, others)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)):
            break
        m = others.size
        va[others] -= dx[:m]
        vm[others] -= dx[m:]
        if np.any(vm <= 0) or not np.all(np.isfinite(vm)):
            # collapsed voltage, flag divergence
            iterations = iteration + 1
            break

    v = vm * np.exp(1j * va)
    flows = []
    if converged:
        for eid, i, j, y_series, rating in branches:
            s_from = v[i] * np.conj((v[i] - v[j]) * y_series) * network.base_mva
            s_to = v[j] * np.conj((v[j] - v[i]) * y_series) * network.base_mva
            loading = 100.0 * max(abs(s_from), abs(s_to)) / rating
            flows.append(BranchFlow(
                element_id=eid,
                p_from_mw=float(s_from.real), q_from_mvar=float(s_from.imag),
                p_to_mw=float(s_to.real), q_to_mvar=float(s_to.imag),
                s_from_mva=float(abs(s_from)), s_to_mva=float(abs(s_to)),
                loading_percent=float(loading),
            ))

    s_slack = v[slack] * np.conj((ybus @ v)[slack]) * network.base_mva
    local_p = sum(
        dispatch.setpoints[u.id][0] for u in network.units if u.bus == network.pcc_bus.id
    )
    local_q = sum(
        dispatch.setpoints[u.id][1] for u in network.units if u.bus == network.pcc_bus.id
    )

    return PfSolution(
        v_pu={bus.id: float(vm[index[bus.id]]) for bus in network.buses},
        theta_rad={bus.id: float(va[index[bus.id]]) for bus in network.buses},
        branch_flows=tuple(flows),
        pcc_p_mw=float(s_slack.real - local_p),
        pcc_q_mvar=float(s_slack.imag - local_q),
        converged=converged,
        iterations=iterations,
        max_mismatch_pu=mismatch,
    )


def check_violations(network: Network, sol: PfSolution) -> ViolationReport:
    """Thermal/voltage findings for a converged solution, in id order."""
    if not sol.converged:
        raise ValueError("check_violations requires a converged power-flow solution")
    thermal = [
        (flow.element_id, flow.loading_percent)
        for flow in sol.branch_flows
        if flow.loading_percent > 100.0
    ]
    thermal.sort(key=lambda item: item[0])
    voltage = []
    for bus in network.buses:
        v = sol.v_pu[bus.id]
        if v < bus.v_min_pu:
            voltage.append((bus.id, v, "v_min"))
        elif v > bus.v_max_pu:
            voltage.append((bus.id, v, "v_max"))
    voltage.sort(key=lambda item: item[0])
    return ViolationReport(thermal=tuple(thermal), voltage=tuple(voltage))


def total_losses_mw(sol: PfSolution) -> float:
    return sum(flow.p_from_mw + flow.p_to_mw for flow in sol.branch_flows)


def solution_bus_rows(sol: PfSolution):
    return [(bus_id, sol.v_pu[bus_id], sol.theta_rad[bus_id]) for bus_id in sol.v_pu]


def solution_branch_rows(sol: PfSolution):
    return [(flow.element_id, flow.loading_percent) for flow in sol.branch_flows]
