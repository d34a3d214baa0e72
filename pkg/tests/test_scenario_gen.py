import json

import pytest

from gridfpr.scenario_gen import (
    ScenarioConfig,
    apply,
    generate,
    scenarios_from_list,
    scenarios_to_list,
)
from gridfpr.grid_model import Network, Bus, Unit

from conftest import two_bus_network


def _cfg(**kw):
    defaults = dict(n_random_draws=3, scale_factors=(1.0, 1.5), master_seed=7)
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def test_scenario_count(lv_feeder):
    scenarios = generate(lv_feeder, _cfg(n_random_draws=4, scale_factors=(1.0, 1.25, 2.0)))
    assert len(scenarios) == 12
    assert [s.scenario_id for s in scenarios] == list(range(12))


def test_totals_conserved(lv_feeder):
    base_gen = sum(u.p_max_mw for u in lv_feeder.units if u.kind == "generator")
    base_load = sum(-u.p_min_mw for u in lv_feeder.units if u.kind == "load")
    for scenario in generate(lv_feeder, _cfg(n_random_draws=5, scale_factors=(1.0, 1.5, 3.0))):
        applied = apply(lv_feeder, scenario)
        gen = sum(u.p_max_mw for u in applied.units if u.kind == "generator")
        load = sum(-u.p_min_mw for u in applied.units if u.kind == "load")
        assert gen == pytest.approx(scenario.scale_factor * base_gen, rel=1e-9)
        assert load == pytest.approx(scenario.scale_factor * base_load, rel=1e-9)


def test_identity_scenario_on_single_load():
    net = two_bus_network(load_p_mw=-0.5)
    base = [u for u in net.units if u.kind == "load"][0]
    scenarios = generate(net, _cfg(n_random_draws=1, scale_factors=(1.0,)))
    assert len(scenarios) == 1
    applied = apply(net, scenarios[0])
    load = [u for u in applied.units if u.kind == "load"][0]
    assert load.p_min_mw == pytest.approx(base.p_min_mw, rel=1e-12)


def test_seeded_determinism(lv_feeder):
    cfg = _cfg(n_random_draws=4, master_seed=42)
    a = scenarios_to_list(generate(lv_feeder, cfg))
    b = scenarios_to_list(generate(lv_feeder, cfg))
    assert json.dumps(a) == json.dumps(b)
    # different seed, different draws
    c = scenarios_to_list(generate(lv_feeder, _cfg(n_random_draws=4, master_seed=43)))
    assert json.dumps(a) != json.dumps(c)


def test_serialization_roundtrip(lv_feeder):
    scenarios = generate(lv_feeder, _cfg())
    rebuilt = scenarios_from_list(json.loads(json.dumps(scenarios_to_list(scenarios))))
    assert rebuilt == scenarios


def test_topology_preserved(lv_feeder):
    scenario = generate(lv_feeder, _cfg())[0]
    applied = apply(lv_feeder, scenario)
    assert hash((applied.buses, applied.lines, applied.transformers)) == hash(
        (lv_feeder.buses, lv_feeder.lines, lv_feeder.transformers)
    )
    assert applied.buses == lv_feeder.buses
    assert applied.lines == lv_feeder.lines


def test_coverage_every_bus_gets_generation(lv_feeder):
    scenarios = generate(lv_feeder, _cfg(n_random_draws=100, scale_factors=(1.0,)))
    gen_units = [u for u in lv_feeder.units if u.kind == "generator"]
    touched = {u.bus: False for u in gen_units}
    for scenario in scenarios:
        for unit in gen_units:
            if scenario.unit_overrides[unit.id][1] > 0:
                touched[unit.bus] = True
    assert all(touched.values())


def test_apply_empty_overrides_is_identity(lv_feeder):
    from gridfpr.scenario_gen import SupplyTaskScenario

    scenario = SupplyTaskScenario(scenario_id=0, seed=0, scale_factor=1.0, unit_overrides={})
    assert apply(lv_feeder, scenario) == lv_feeder


def test_apply_single_override_touches_one_unit(lv_feeder):
    from gridfpr.scenario_gen import SupplyTaskScenario

    scenario = SupplyTaskScenario(
        scenario_id=0, seed=0, scale_factor=1.0,
        unit_overrides={"ld2": (-0.08, 0.0, -0.03, 0.03, "household")},
    )
    applied = apply(lv_feeder, scenario)
    changed = [u.id for u, v in zip(lv_feeder.units, applied.units) if u != v]
    assert changed == ["ld2"]
    assert applied.unit_by_id["ld2"].p_min_mw == -0.08


def test_apply_unknown_unit_errors(lv_feeder):
    from gridfpr.scenario_gen import SupplyTaskScenario

    scenario = SupplyTaskScenario(
        scenario_id=0, seed=0, scale_factor=1.0,
        unit_overrides={"ghost": (0.0, 0.0, 0.0, 0.0, "")},
    )
    with pytest.raises(ValueError, match="ghost"):
        apply(lv_feeder, scenario)


def test_zero_unit_network_errors():
    net = Network(
        id="empty", urbanization="rural", base_mva=1.0,
        buses=(Bus("p", "LV", 0.4, 0.9, 1.1, is_pcc=True),),
        lines=(), transformers=(), units=(),
    )
    with pytest.raises(ValueError):
        generate(net, _cfg())


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(n_random_draws=0).check()
    with pytest.raises(ValueError):
        _cfg(scale_factors=(1.5, 2.0)).check()
    with pytest.raises(ValueError):
        _cfg(scale_factors=(1.0, 1.0)).check()
    with pytest.raises(ValueError):
        _cfg(technology_mix={"pv": 0.5}).check()


def test_technology_sampled_from_mix(lv_feeder):
    cfg = _cfg(n_random_draws=30, scale_factors=(1.0,),
               technology_mix={"pv": 0.5, "hp": 0.5})
    seen = set()
    for scenario in generate(lv_feeder, cfg):
        for unit in lv_feeder.units:
            if unit.kind == "generator":
                seen.add(scenario.unit_overrides[unit.id][4])
    assert seen == {"pv", "hp"}
