"""Randomized supply-task scenarios on a fixed topology.

Each draw reallocates the total load and generation capacity across the
non-PCC buses with normalized uniform weights, then a ladder of scale
factors grows both totals. Everything is keyed off one master seed, so a
configuration fully determines the emitted scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid_model import Network, Unit

# cos phi 0.9 band for derived reactive ranges
_TAN_PHI = math.tan(math.acos(0.9))

DEFAULT_SCALE_FACTORS = (1.0, 1.25, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class ScenarioConfig:
    n_random_draws: int
    scale_factors: tuple[float, ...] = DEFAULT_SCALE_FACTORS
    master_seed: int = 0
    technology_mix: dict[str, float] = field(default_factory=lambda: {"pv": 1.0})

    def check(self) -> None:
        if self.n_random_draws < 1:
            raise ValueError("n_random_draws must be >= 1")
        if not self.scale_factors or self.scale_factors[0] != 1.0:
            raise ValueError("scale_factors must start at 1.0")
        if any(b <= a for a, b in zip(self.scale_factors, self.scale_factors[1:])):
            raise ValueError("scale_factors must be strictly increasing")
        share_sum = sum(self.technology_mix.values())
        if abs(share_sum - 1.0) > 1e-9:
            raise ValueError(f"technology_mix shares must sum to 1, got {share_sum}")


@dataclass(frozen=True)
class SupplyTaskScenario:
    scenario_id: int
    seed: int
    scale_factor: float
    unit_overrides: dict[str, tuple[float, float, float, float, str]]


def _derived_seed(master_seed: int, draw: int, scale_index: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), int(draw), int(scale_index)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _q_band(p_abs: float) -> tuple[float, float]:
    q = _TAN_PHI * p_abs
    return -q, q


def generate(network: Network, cfg: ScenarioConfig) -> list[SupplyTaskScenario]:
    """Emit n_random_draws x len(scale_factors) scenarios for the network."""
    cfg.check()
    loads = [u for u in network.units if u.kind == "load"]
    generators = [u for u in network.units if u.kind == "generator"]
    if not loads and not generators:
        raise ValueError(f"network {network.id} has no units to redistribute")

    # Units at the PCC bus sit on the upstream side and are left untouched.
    pcc = network.pcc_bus.id
    loads = [u for u in loads if u.bus != pcc]
    generators = [u for u in generators if u.bus != pcc]
    load_buses = sorted({u.bus for u in loads})
    gen_buses = sorted({u.bus for u in generators})
    base_load_total = sum(-u.p_min_mw for u in loads)
    base_gen_total = sum(u.p_max_mw for u in generators)
    technologies = list(cfg.technology_mix.keys())
    tech_shares = np.array([cfg.technology_mix[t] for t in technologies])

    scenarios: list[SupplyTaskScenario] = []
    scenario_id = 0
    for draw in range(cfg.n_random_draws):
        for scale_index, scale in enumerate(cfg.scale_factors):
            seed = _derived_seed(cfg.master_seed, draw, scale_index)
            rng = np.random.default_rng(seed)
            overrides: dict[str, tuple[float, float, float, float, str]] = {}

            load_share = _bus_shares(rng, load_buses, base_load_total * scale)
            for unit in loads:
                if unit.bus not in load_share:
                    continue
                p_full = load_share[unit.bus] / _units_at(loads, unit.bus)
                q_min, q_max = _q_band(p_full)
                overrides[unit.id] = (-p_full, 0.0, q_min, q_max, unit.technology)

            gen_share = _bus_shares(rng, gen_buses, base_gen_total * scale)
            for unit in generators:
                if unit.bus not in gen_share:
                    continue
                p_full = gen_share[unit.bus] / _units_at(generators, unit.bus)
                q_min, q_max = _q_band(p_full)
                tech = technologies[int(rng.choice(len(technologies), p=tech_shares))]
                overrides[unit.id] = (0.0, p_full, q_min, q_max, tech)

            scenarios.append(SupplyTaskScenario(
                scenario_id=scenario_id,
                seed=seed,
                scale_factor=scale,
                unit_overrides=overrides,
            ))
            scenario_id += 1
    return scenarios


def _units_at(units, bus: str) -> int:
    return sum(1 for u in units if u.bus == bus)


def _bus_shares(rng, buses, total: float) -> dict[str, float]:
    if not buses or total == 0.0:
        return {bus: 0.0 for bus in buses}
    weights = rng.uniform(0.0, 1.0, size=len(buses))
    weights = weights / weights.sum()
    return {bus: total * w for bus, w in zip(buses, weights)}


def apply(network: Network, scenario: SupplyTaskScenario) -> Network:
    """Return a network with unit ranges replaced; topology untouched."""
    for unit_id in scenario.unit_overrides:
        if unit_id not in network.unit_by_id:
            raise ValueError(f"scenario overrides unknown unit {unit_id!r}")
    units = []
    for unit in network.units:
        override = scenario.unit_overrides.get(unit.id)
        if override is None:
            units.append(unit)
            continue
        p_min, p_max, q_min, q_max, tech = override
        units.append(replace(
            unit,
            p_min_mw=p_min, p_max_mw=p_max,
            q_min_mvar=q_min, q_max_mvar=q_max,
            technology=tech,
        ))
    return network.with_units(units)


def scenarios_to_list(scenarios) -> list[dict]:
    out = []
    for s in scenarios:
        overrides = {
            uid: {
                "p_min_mw": o[0], "p_max_mw": o[1],
                "q_min_mvar": o[2], "q_max_mvar": o[3],
                "technology": o[4],
            }
            for uid, o in sorted(s.unit_overrides.items())
        }
        out.append({
            "scenario_id": s.scenario_id,
            "seed": s.seed,
            "scale_factor": s.scale_factor,
            "unit_overrides": overrides,
        })
    return out


def scenarios_from_list(data) -> list[SupplyTaskScenario]:
    out = []
    for raw in data:
        overrides = {
            uid: (
                float(o["p_min_mw"]), float(o["p_max_mw"]),
                float(o["q_min_mvar"]), float(o["q_max_mvar"]),
                str(o["technology"]),
            )
            for uid, o in raw["unit_overrides"].items()
        }
        out.append(SupplyTaskScenario(
            scenario_id=int(raw["scenario_id"]),
            seed=int(raw["seed"]),
            scale_factor=float(raw["scale_factor"]),
            unit_overrides=overrides,
        ))
    return out
