import json
import math

import pytest

from gridfpr.cep import (
    CepGenerator,
    CepModel,
    DsoLink,
    build,
    model_from_dict,
    model_to_dict,
    run_study,
    scenario_a_variant,
    solve,
)
from gridfpr.fileio import read_json
from gridfpr.fpr_builder import LinearFprModel
from gridfpr.lp import residual, solve_lp

INF = math.inf


def _fpr(capex=1000.0, opex=0.0, m_max=INF, f_min=-1.0, f_max=1.0):
    return LinearFprModel(
        capex_per_mw=capex, base_cost=0.0, m_min_mw=0.0, m_max_mw=m_max,
        f_min_pu=f_min, f_max_pu=f_max, opex_per_mwh=opex,
    )


def _one_node_model():
    return CepModel(
        snapshot_weights=(1.0,),
        nodes=("n1",),
        generators=(
            CepGenerator("gen", "n1", capex_per_mw=10.0, marginal_cost_per_mwh=2.0,
                         availability=(1.0,)),
        ),
        demand={"n1": (1.0,)},
    )


def test_smallest_model_shape():
    lp = build(_one_node_model())
    assert len(lp.names) == 2  # capacity + one dispatch variable
    assert lp.eq_tags == ["balance_n1_t0"]
    assert lp.ub_tags == ["avail_gen_t0"]
    out = solve_lp(lp)
    assert out.status == "optimal"
    assert out.objective == pytest.approx(12.0, abs=1e-9)  # 1 MW cap + 1 MWh at 2


def test_dso_link_rows_reference_capacity():
    model = CepModel(
        snapshot_weights=(1.0, 1.0, 1.0),
        nodes=("n1",),
        generators=(
            CepGenerator("gen", "n1", capex_per_mw=10.0, marginal_cost_per_mwh=0.0,
                         availability=(1.0, 1.0, 1.0)),
        ),
        dso_links=(DsoLink("d1", "n1", _fpr(), demand=(0.5, 0.5, 0.5), loss_factor=0.0),),
    )
    lp = build(model)
    link_rows = [t for t in lp.ub_tags if t.startswith("linkmax_") or t.startswith("linkmin_")]
    assert len(link_rows) == 2 * 3
    m_col = lp.names.index("dsom_d1")
    for tag in link_rows:
        row = lp.a_ub[lp.ub_tags.index(tag)]
        assert row[m_col] != 0.0


def test_scenario_a_objective_equals_linkless_cost():
    # with free unlimited links the dso terms add nothing to the optimum
    model = CepModel(
        snapshot_weights=(1.0, 1.0),
        nodes=("n1",),
        generators=(
            CepGenerator("gen", "n1", capex_per_mw=10.0, marginal_cost_per_mwh=1.0,
                         availability=(1.0, 1.0)),
        ),
        dso_links=(DsoLink("d1", "n1", _fpr(capex=500.0), demand=(1.0, 1.0),
                           loss_factor=0.0),),
    )
    free = scenario_a_variant(model)
    out = solve(free)
    assert out.status == "optimal"
    # 2 MWh demand: cap 1 MW (10) + 2 MWh marginal (2) = 12
    assert out.objective == pytest.approx(12.0, abs=1e-6)
    costed = solve(model)
    assert costed.objective >= out.objective - 1e-9


def test_objective_monotone_in_link_cost():
    def model_with(capex):
        return CepModel(
            snapshot_weights=(1.0,),
            nodes=("n1",),
            generators=(
                CepGenerator("gen", "n1", capex_per_mw=10.0, marginal_cost_per_mwh=0.0,
                             availability=(1.0,)),
            ),
            dso_links=(DsoLink("d1", "n1", _fpr(capex=capex), demand=(1.0,),
                               loss_factor=0.0),),
        )

    objectives = [solve(model_with(c)).objective for c in (0.0, 100.0, 500.0, 1000.0)]
    assert all(b >= a - 1e-9 for a, b in zip(objectives, objectives[1:]))
    # optimal M never increases as the link gets pricier
    capacities = [solve(model_with(c)).capacities["dso:d1"] for c in (0.0, 500.0)]
    assert capacities[1] <= capacities[0] + 1e-9


def test_link_flow_respects_capacity_coupling():
    model = CepModel(
        snapshot_weights=(1.0, 2.0),
        nodes=("n1",),
        generators=(
            CepGenerator("gen", "n1", capex_per_mw=10.0, marginal_cost_per_mwh=0.0,
                         availability=(1.0, 1.0)),
        ),
        dso_links=(DsoLink("d1", "n1", _fpr(capex=50.0, f_min=-0.8, f_max=0.9),
                           demand=(0.9, 0.45), loss_factor=0.0),),
    )
    out = solve(model)
    assert out.status == "optimal"
    m = out.capacities["dso:d1"]
    for f in out.dispatch["dso:d1"]:
        assert f <= 0.9 * m + 1e-6
        assert f >= -0.8 * m - 1e-6
    # binding snapshot forces M = demand / f_max
    assert m == pytest.approx(1.0, abs=1e-6)


def test_nodal_balance_at_optimum():
    model = _one_node_model()
    lp = build(model)
    out = solve_lp(lp)
    assert residual(lp, out.x) <= 1e-6


def test_run_study_identical_models_zero_delta(fixtures_dir):
    model = model_from_dict(read_json(fixtures_dir / "study.json"))
    report, _ = run_study(model, model)
    by_scenario = {}
    for row in report.rows:
        by_scenario.setdefault(row.scenario, []).append(
            (row.technology, row.provided_mwh, row.consumed_mwh)
        )
    assert by_scenario["A"] == by_scenario["B"]
    assert report.objectives["A"] == pytest.approx(report.objectives["B"])


def test_toy_study_directions(fixtures_dir):
    model_b = model_from_dict(read_json(fixtures_dir / "study.json"))
    model_a = scenario_a_variant(model_b)
    report, solutions = run_study(model_a, model_b)
    # added link costs can only raise the optimum
    assert report.objectives["B"] >= report.objectives["A"] - 1e-9
    # costed links push supply into the distribution grid
    assert report.link_energy_mwh["B"] < report.link_energy_mwh["A"] - 1e-6
    assert report.dso_local_share["B"] >= report.dso_local_share["A"] - 1e-9
    assert report.link_loss_mwh["B"] < report.link_loss_mwh["A"]


def test_study_balance_identity(fixtures_dir):
    model_b = model_from_dict(read_json(fixtures_dir / "study.json"))
    model_a = scenario_a_variant(model_b)
    report, _ = run_study(model_a, model_b)
    for label in ("A", "B"):
        provided = sum(r.provided_mwh for r in report.rows if r.scenario == label)
        consumed = sum(r.consumed_mwh for r in report.rows if r.scenario == label)
        assert provided == pytest.approx(consumed, abs=1e-6)


def test_model_json_roundtrip(fixtures_dir):
    model = model_from_dict(read_json(fixtures_dir / "study.json"))
    rebuilt = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
    assert rebuilt == model


def test_profile_length_mismatch_rejected():
    with pytest.raises(ValueError, match="availability"):
        build(CepModel(
            snapshot_weights=(1.0, 1.0),
            nodes=("n1",),
            generators=(
                CepGenerator("gen", "n1", 1.0, 0.0, availability=(1.0,)),
            ),
            demand={"n1": (1.0, 1.0)},
        ))


def test_storage_shifts_energy():
    # generation only in the first snapshot, demand only in the second
    model = CepModel(
        snapshot_weights=(1.0, 1.0),
        nodes=("n1",),
        generators=(
            CepGenerator("sun", "n1", capex_per_mw=1.0, marginal_cost_per_mwh=0.0,
                         availability=(1.0, 0.0)),
        ),
        storage_units=(
            __import__("gridfpr.cep", fromlist=["CepStorage"]).CepStorage(
                "batt", "n1", power_capex_per_mw=1.0, energy_capex_per_mwh=0.5,
                efficiency=0.81),
        ),
        demand={"n1": (0.0, 1.0)},
    )
    out = solve(model)
    assert out.status == "optimal"
    assert out.dispatch["storage_dis:batt"][1] == pytest.approx(1.0, abs=1e-6)
    # round-trip losses: charge = 1 / 0.81 of the delivered energy
    assert out.dispatch["storage_ch:batt"][0] == pytest.approx(1.0 / 0.81, abs=1e-6)
