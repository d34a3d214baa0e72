"""Command-line pipeline: grid variation, region sweeps, planning study.

Subcommands mirror the workflow stages so every intermediate artifact is
an inspectable file: ``variate`` writes reinforced expansion stages,
``for``/``fpr`` sweep operation regions and assemble the cost-indexed
planning region bottom-up across voltage levels, ``linearize`` fits the
link model and ``cep`` runs the two-scenario planning study. ``pipeline``
chains everything. One master seed determines every output byte,
independent of ``--jobs``. Logs go to stderr, data only to files.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import cep as cep_mod
from . import report
from .expansion import (
    ExpansionStage,
    UnplannableError,
    measure_from_dict,
    measure_to_dict,
    reinforce,
)
from .fileio import read_json, write_csv, write_json
from .for_engine import (
    InfeasibleBasePointError,
    SweepConfig,
    compute_for,
    feasible,
    save_polygon_csv,
    save_polygon_json,
)
from .fpr_builder import (
    Fpr,
    assemble,
    fpr_from_dict,
    linear_model_from_dict,
    linearize,
    load_linear_model,
    save_fpr_csv,
    save_fpr_json,
    save_linear_model,
    fpr_to_dict,
    embed_child,
)
from .grid_model import (
    CatalogError,
    GridModelError,
    SchemaError,
    TopologyError,
    grid_class,
    load_catalog,
    load_network,
    network_to_dict,
    parse_network,
)
from .lp import save_lp_text
from .power_flow import solve, solution_branch_rows, solution_bus_rows
from .scenario_gen import (
    ScenarioConfig,
    SupplyTaskScenario,
    apply as apply_scenario,
    generate,
    scenarios_to_list,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2

_LEVEL_RANK = {"LV": 0, "MV": 1, "HV": 2}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.exit_code = exit_code


def _log(message: str) -> None:
    print(f"[gridfpr] {message}", file=sys.stderr)


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"missing {what}: {path}", exit_code=EXIT_INPUT)
    return path


def _resolve_jobs(jobs: int | None) -> int:
    if jobs is None or jobs <= 0:
        return os.cpu_count() or 1
    return jobs


# --- stage files -----------------------------------------------------------

def stage_to_dict(stage: ExpansionStage, seed: int, scale_factor: float) -> dict:
    return {
        "scenario_id": stage.scenario_id,
        "seed": seed,
        "scale_factor": scale_factor,
        "total_cost": stage.total_cost,
        "measures": [measure_to_dict(m) for m in stage.measures],
        "network": network_to_dict(stage.network),
    }


def stage_from_dict(data: dict) -> tuple[ExpansionStage, int, float]:
    network = parse_network(data["network"], source="<stage>")
    stage = ExpansionStage(
        network=network,
        measures=tuple(measure_from_dict(m) for m in data["measures"]),
        total_cost=float(data["total_cost"]),
        scenario_id=int(data["scenario_id"]),
    )
    return stage, int(data["seed"]), float(data["scale_factor"])


# --- per-scenario worker ----------------------------------------------------

def _stage_task(args):
    """Apply a scenario, embed children, reinforce. Runs in worker processes."""
    network, catalog, scenario, children = args
    applied = apply_scenario(network, scenario)
    for child_name, child_fpr, attach_bus, selection in children:
        applied = embed_child(
            applied, child_fpr, attach_bus,
            selection=selection,
            target_scale=scenario.scale_factor,
            child_ref=child_name,
        )
    try:
        stage = reinforce(applied, catalog, scenario_id=scenario.scenario_id)
    except UnplannableError as exc:
        return ("unplannable", scenario, str(exc))
    return ("ok", scenario, stage)


def _stage_and_for_task(args):
    network, catalog, scenario, children, sweep = args
    outcome = _stage_task((network, catalog, scenario, children))
    if outcome[0] != "ok":
        return outcome
    _status, scenario, stage = outcome
    try:
        polygon = compute_for(stage.network, sweep)
    except InfeasibleBasePointError as exc:
        return ("unplannable", scenario, f"region anchor infeasible: {exc}")
    return ("ok", scenario, stage, polygon)


def _run_tasks(worker, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, tasks))
    return [worker(task) for task in tasks]


def _generate_stages(network, catalog, scen_cfg, children, jobs, skip_failed,
                     sweep=None):
    """Scenario list -> reinforced stages (optionally with their regions)."""
    scenarios = generate(network, scen_cfg)
    if sweep is None:
        tasks = [(network, catalog, s, children) for s in scenarios]
        results = _run_tasks(_stage_task, tasks, jobs)
    else:
        tasks = [(network, catalog, s, children, sweep) for s in scenarios]
        results = _run_tasks(_stage_and_for_task, tasks, jobs)
    kept = []
    for outcome in results:
        if outcome[0] == "unplannable":
            _scenario = outcome[1]
            message = f"scenario {_scenario.scenario_id} unplannable: {outcome[2]}"
            if skip_failed:
                _log(f"skipping {message}")
                continue
            raise CliError(message, exit_code=EXIT_RUNTIME)
        kept.append(outcome)
    return scenarios, kept


# --- subcommands -------------------------------------------------------------

def cmd_variate(args) -> int:
    catalog = load_catalog(_require_file(Path(args.catalog), "catalog file"))
    network = load_network(_require_file(Path(args.grid), "grid file"), catalog)
    scen_cfg = ScenarioConfig(
        n_random_draws=args.draws,
        scale_factors=tuple(float(s) for s in args.scales.split(",")),
        master_seed=args.seed,
    )
    out_dir = Path(args.out)
    stage_dir = out_dir / "stages" / network.id
    stage_dir.mkdir(parents=True, exist_ok=True)
    jobs = _resolve_jobs(args.jobs)

    scenarios, results = _generate_stages(
        network, catalog, scen_cfg, children=[], jobs=jobs, skip_failed=args.skip_failed
    )
    if args.scenarios:
        write_json(Path(args.scenarios), scenarios_to_list(scenarios))
    for _status, scenario, stage in results:
        path = stage_dir / f"stage_{stage.scenario_id:04d}.json"
        write_json(path, stage_to_dict(stage, scenario.seed, scenario.scale_factor))
    _log(f"variate: wrote {len(results)} stage files to {stage_dir}")
    return EXIT_OK


def cmd_for(args) -> int:
    catalog = load_catalog(_require_file(Path(args.catalog), "catalog file"))
    network = load_network(_require_file(Path(args.grid), "grid file"), catalog)
    sweep = SweepConfig(
        n_directions=args.directions,
        bisection_tol_mw=args.tol,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    polygon = compute_for(network, sweep, jobs=_resolve_jobs(args.jobs))
    save_polygon_json(polygon, out_dir / f"for_{network.id}.json")
    save_polygon_csv(polygon, out_dir / f"for_{network.id}.csv")
    report.save_for_figure(polygon, out_dir / f"for_{network.id}.png", title=network.id)
    if args.dump_pf:
        sol = solve(network, polygon.certificates[0].dispatch)
        write_csv(out_dir / f"pf_{network.id}_bus.csv", ["bus", "v_pu", "theta_rad"],
                  solution_bus_rows(sol))
        write_csv(out_dir / f"pf_{network.id}_branch.csv", ["element", "loading_percent"],
                  solution_branch_rows(sol))
    _log(f"for: region of {network.id} has area {polygon.area_mva2:.4f} MVA^2")
    return EXIT_OK


def _load_pipeline_config(path: Path) -> dict:
    config = read_json(_require_file(path, "config file"))
    base = path.parent

    def resolve(rel):
        return str((base / rel).resolve()) if rel else rel

    config["catalog"] = resolve(config.get("catalog"))
    for grid in config.get("grids", []):
        grid["path"] = resolve(grid["path"])
        if grid.get("catalog"):
            grid["catalog"] = resolve(grid["catalog"])
    if config.get("study"):
        config["study"] = resolve(config["study"])
    return config


def _ordered_grids(config: dict):
    """Grids sorted low to high voltage; children must precede parents."""
    grids = config.get("grids", [])
    if not grids:
        raise CliError("config contains no grids", exit_code=EXIT_INPUT)
    entries = []
    for spec in grids:
        catalog_path = spec.get("catalog") or config.get("catalog")
        if not catalog_path:
            raise CliError(f"grid {spec.get('name')}: no catalog configured", EXIT_INPUT)
        catalog = load_catalog(_require_file(Path(catalog_path), "catalog file"))
        network = load_network(_require_file(Path(spec["path"]), "grid file"), catalog)
        level = grid_class(network)[0]
        entries.append((spec, catalog, network, level))
    entries.sort(key=lambda e: _LEVEL_RANK[e[3]])
    names = {spec.get("name") or net.id for spec, _c, net, _l in entries}
    for spec, _catalog, network, level in entries:
        for child in spec.get("children", []):
            if child["fpr"] not in names:
                raise CliError(
                    f"grid {spec.get('name') or network.id}: unknown child {child['fpr']!r}",
                    EXIT_INPUT,
                )
    return entries


def _run_fpr_flow(config: dict, out_dir: Path, seed: int | None, jobs: int,
                  skip_failed: bool) -> dict[str, Fpr]:
    scen_raw = config.get("scenarios", {})
    sweep_raw = config.get("sweep", {})
    metric = config.get("linearization_metric", "max_abs_p")
    opex = float(config.get("dso_opex_per_mwh", 0.0))
    sweep = SweepConfig(
        n_directions=int(sweep_raw.get("n_directions", 36)),
        bisection_tol_mw=sweep_raw.get("bisection_tol_mw"),
        max_bisection_steps=int(sweep_raw.get("max_bisection_steps", 40)),
    )

    computed: dict[str, Fpr] = {}
    for spec, catalog, network, level in _ordered_grids(config):
        name = spec.get("name") or network.id
        _log(f"fpr: processing grid {name} ({level})")
        scen_cfg = ScenarioConfig(
            n_random_draws=int(scen_raw.get("n_random_draws", 1)),
            scale_factors=tuple(float(s) for s in scen_raw.get(
                "scale_factors", [1.0, 1.25, 1.5, 2.0, 3.0])),
            master_seed=seed if seed is not None else int(scen_raw.get("master_seed", 0)),
            technology_mix=scen_raw.get("technology_mix", {"pv": 1.0}),
        )
        children = []
        for child in spec.get("children", []):
            child_fpr = computed[child["fpr"]]
            children.append((
                child["fpr"], child_fpr, child["attach_bus"],
                child.get("selection", "largest"),
            ))
            _log(f"fpr: embedding child {child['fpr']} at {child['attach_bus']}")

        stage_dir = out_dir / "stages" / name
        for_dir = out_dir / "for" / name
        stage_dir.mkdir(parents=True, exist_ok=True)
        for_dir.mkdir(parents=True, exist_ok=True)

        scenarios, results = _generate_stages(
            network, catalog, scen_cfg, children, jobs, skip_failed, sweep=sweep
        )
        if not results:
            raise CliError(f"grid {name}: no plannable scenario", EXIT_RUNTIME)
        stages = []
        scales = {}
        for _status, scenario, stage, polygon in results:
            write_json(
                stage_dir / f"stage_{stage.scenario_id:04d}.json",
                stage_to_dict(stage, scenario.seed, scenario.scale_factor),
            )
            save_polygon_json(polygon, for_dir / f"for_{stage.scenario_id:04d}.json")
            save_polygon_csv(polygon, for_dir / f"for_{stage.scenario_id:04d}.csv")
            stages.append((stage, polygon))
            scales[stage.scenario_id] = scenario.scale_factor

        fpr = assemble(stages, scale_factors=scales)
        fpr_dir = out_dir / "fpr"
        linear_dir = out_dir / "linear"
        fpr_dir.mkdir(parents=True, exist_ok=True)
        linear_dir.mkdir(parents=True, exist_ok=True)
        save_fpr_json(fpr, fpr_dir / f"{name}.json")
        save_fpr_csv(fpr, fpr_dir / f"{name}.csv", capacity_metric=metric)
        report.save_fpr_figure(fpr, fpr_dir / f"{name}.png", title=name)
        model = linearize(fpr, capacity_metric=metric, opex_per_mwh=opex)
        save_linear_model(model, linear_dir / f"{name}.json")
        report.save_linear_fit_figure(fpr, model, linear_dir / f"{name}.png", title=name)
        computed[name] = fpr
        _log(
            f"fpr: {name}: {len(fpr.entries)} entries, "
            f"slope {model.capex_per_mw:.1f}/MW, r2 {model.r_squared:.4f}"
        )
    return computed


def cmd_fpr(args) -> int:
    config = _load_pipeline_config(Path(args.config))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_fpr_flow(config, out_dir, args.seed, _resolve_jobs(args.jobs), args.skip_failed)
    return EXIT_OK


def cmd_linearize(args) -> int:
    data = read_json(_require_file(Path(args.fpr), "planning region file"))
    fpr = fpr_from_dict(data)
    model = linearize(fpr, capacity_metric=args.metric, opex_per_mwh=args.opex)
    save_linear_model(model, Path(args.out))
    _log(f"linearize: slope {model.capex_per_mw:.2f}/MW intercept {model.base_cost:.2f}")
    return EXIT_OK


def _run_cep(study_path: Path, linear_path: Path | None, out_dir: Path,
             export_lp: bool) -> None:
    study_raw = read_json(_require_file(study_path, "study file"))

    def fpr_loader(rel):
        return load_linear_model(
            _require_file((study_path.parent / rel).resolve(), "linear model file")
        )

    model_b = cep_mod.model_from_dict(study_raw, fpr_loader=fpr_loader)
    if linear_path is not None:
        linear = load_linear_model(_require_file(linear_path, "linear model file"))
        import dataclasses

        model_b = dataclasses.replace(
            model_b,
            dso_links=tuple(
                dataclasses.replace(d, fpr=linear) for d in model_b.dso_links
            ),
        )
    model_a = cep_mod.scenario_a_variant(model_b)

    out_dir.mkdir(parents=True, exist_ok=True)
    if export_lp:
        save_lp_text(cep_mod.build(model_a), out_dir / "cep_scenario_a.lp")
        save_lp_text(cep_mod.build(model_b), out_dir / "cep_scenario_b.lp")
    study_report, _solutions = cep_mod.run_study(model_a, model_b)
    cep_mod.save_study_balances(study_report, out_dir / "study_balances.csv")
    cep_mod.save_study_summary(study_report, out_dir / "study_summary.csv")
    report.save_study_figure(study_report, out_dir / "study.png", title="planning study")
    delta = study_report.objectives["B"] - study_report.objectives["A"]
    _log(
        "cep: objective A "
        f"{study_report.objectives['A']:,.2f}, B {study_report.objectives['B']:,.2f} "
        f"(delta {delta:,.2f})"
    )


def cmd_cep(args) -> int:
    _run_cep(
        Path(args.study),
        Path(args.linear) if args.linear else None,
        Path(args.out),
        args.export_lp,
    )
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _load_pipeline_config(Path(args.config))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = _resolve_jobs(args.jobs)
    computed = _run_fpr_flow(config, out_dir, args.seed, jobs, args.skip_failed)
    if config.get("study"):
        last_name = list(computed.keys())[-1]
        linear_path = out_dir / "linear" / f"{last_name}.json"
        _run_cep(Path(config["study"]), linear_path, out_dir, args.export_lp)
    _log("pipeline: done")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridfpr",
        description="Aggregate distribution grids into cost-indexed operation regions "
                    "and run a linear capacity-expansion study.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("variate", help="generate reinforced expansion stages")
    p.add_argument("--grid", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--scales", default="1.0,1.25,1.5,2.0,3.0")
    p.add_argument("--scenarios", help="also write the scenario audit file")
    p.add_argument("--skip-failed", action="store_true")
    p.add_argument("--jobs", type=int, default=0)
    p.set_defaults(func=cmd_variate)

    p = sub.add_parser("for", help="sweep the operation region of one grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--directions", type=int, default=36)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--dump-pf", action="store_true")
    p.add_argument("--jobs", type=int, default=0)
    p.set_defaults(func=cmd_for)

    p = sub.add_parser("fpr", help="stages + regions + assembly, bottom-up over levels")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--skip-failed", action="store_true")
    p.add_argument("--jobs", type=int, default=0)
    p.set_defaults(func=cmd_fpr)

    p = sub.add_parser("linearize", help="fit the link cost model to a planning region")
    p.add_argument("--fpr", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", default="max_abs_p", choices=["max_abs_p", "max_apparent"])
    p.add_argument("--opex", type=float, default=0.0)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("cep", help="run the two-scenario planning study")
    p.add_argument("--study", required=True)
    p.add_argument("--linear", help="override all dso links with this linear model")
    p.add_argument("--out", required=True)
    p.add_argument("--export-lp", action="store_true")
    p.set_defaults(func=cmd_cep)

    p = sub.add_parser("pipeline", help="run the whole workflow from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--skip-failed", action="store_true")
    p.add_argument("--export-lp", action="store_true")
    p.add_argument("--jobs", type=int, default=0)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (SchemaError, TopologyError, CatalogError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnplannableError as exc:
        print(f"error: unplannable: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except InfeasibleBasePointError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, GridModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
