"""Distribution-grid aggregation into cost-indexed operation regions.

The package turns a grid model into a family of feasible PCC
power-exchange regions, one per reinforcement stage, and feeds the
linearized result into a linear multi-node capacity-expansion study.
"""

from .grid_model import (
    Bus,
    CatalogError,
    EquipmentCatalog,
    GridModelError,
    Line,
    Network,
    SchemaError,
    TopologyError,
    Transformer,
    Unit,
    Violation,
    grid_class,
    load_catalog,
    load_network,
    save_network,
    validate,
)
from .power_flow import DispatchPoint, PfSolution, ViolationReport, check_violations, solve
from .scenario_gen import ScenarioConfig, SupplyTaskScenario, apply, generate
from .expansion import (
    ExpansionStage,
    Measure,
    UnplannableError,
    reinforce,
    stage_cost,
    use_case_dispatch,
)
from .for_engine import (
    ForPolygon,
    InfeasibleBasePointError,
    SweepConfig,
    compute_for,
    feasible,
)
from .fpr_builder import Fpr, FprEntry, LinearFprModel, assemble, embed_child, linearize
from .cep import CepModel, CepSolution, build, run_study
from .lp import LinearProgram, solve_lp

__version__ = "0.1.0"
