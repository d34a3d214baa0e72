import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridfpr.grid_model import (
    Bus,
    EquipmentCatalog,
    Line,
    LineType,
    Network,
    Transformer,
    TransformerType,
    Unit,
    load_catalog,
    load_network,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def lv_catalog():
    return load_catalog(FIXTURES / "lv_catalog.json")


@pytest.fixture(scope="session")
def lv_feeder(lv_catalog):
    return load_network(FIXTURES / "lv_feeder.json", lv_catalog)


@pytest.fixture(scope="session")
def mv_catalog():
    return load_catalog(FIXTURES / "mv_catalog.json")


@pytest.fixture(scope="session")
def mv_ring(mv_catalog):
    return load_network(FIXTURES / "mv_ring.json", mv_catalog)


def small_catalog() -> EquipmentCatalog:
    return EquipmentCatalog(
        line_types={
            "small": LineType(0.4, 0.1, 0.1, 20000.0),
            "medium": LineType(0.2, 0.09, 0.2, 30000.0),
            "big": LineType(0.1, 0.08, 0.4, 50000.0),
        },
        transformer_types={
            "t0.3": TransformerType(0.3, 10000.0),
            "t0.6": TransformerType(0.6, 16000.0),
        },
        install_cost_per_km={"rural": 100000.0, "suburban": 120000.0, "urban": 150000.0},
    )


def two_bus_network(
    r_ohm_per_km=0.0,
    x_ohm_per_km=0.1,
    length_km=1.0,
    load_p_mw=-0.5,
    load_q_mvar=0.0,
    base_kv=1.0,
    base_mva=1.0,
    i_max_ka=1.0,
    v_min=0.5,
    v_max=1.5,
    type_id="small",
    gen_p_max=0.0,
) -> Network:
    """PCC -- line -- load bus; impedances default to 0.1 pu reactance."""
    units = [
        Unit("ld", "b2", "load", load_p_mw, 0.0, load_q_mvar, max(load_q_mvar, 0.0),
             technology="household"),
    ]
    if gen_p_max > 0:
        units.append(Unit("g", "b2", "generator", 0.0, gen_p_max, -0.3 * gen_p_max,
                          0.3 * gen_p_max, technology="pv"))
    return Network(
        id="two_bus",
        urbanization="rural",
        base_mva=base_mva,
        buses=(
            Bus("b1", "LV", base_kv, v_min, v_max, is_pcc=True),
            Bus("b2", "LV", base_kv, v_min, v_max),
        ),
        lines=(
            Line("l1", "b1", "b2", length_km, type_id, r_ohm_per_km, x_ohm_per_km,
                 i_max_ka),
        ),
        transformers=(),
        units=tuple(units),
    )


def single_bus_network(p_max=1.0, q_half=0.3) -> Network:
    """One PCC bus carrying one generator; no branches at all."""
    return Network(
        id="one_bus",
        urbanization="rural",
        base_mva=1.0,
        buses=(Bus("pcc", "LV", 0.4, 0.9, 1.1, is_pcc=True),),
        lines=(),
        transformers=(),
        units=(
            Unit("g", "pcc", "generator", 0.0, p_max, -q_half, q_half, technology="pv"),
        ),
    )


def trafo_box_network(s_rated=0.5, vk_percent=2.0, p_max=1.0, q_half=0.3) -> Network:
    """PCC -- transformer -- one generator bus; region is box cut by a disk."""
    return Network(
        id="trafo_box",
        urbanization="rural",
        base_mva=1.0,
        buses=(
            Bus("pcc", "MV", 20.0, 0.5, 1.5, is_pcc=True),
            Bus("lvb", "LV", 0.4, 0.5, 1.5),
        ),
        lines=(),
        transformers=(
            Transformer("tr", "pcc", "lvb", s_rated, vk_percent, "t0.6"),
        ),
        units=(
            Unit("g", "lvb", "generator", 0.0, p_max, -q_half, q_half, technology="pv"),
        ),
    )
