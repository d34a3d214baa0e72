import json

import pytest

from gridfpr.grid_model import (
    Bus,
    CatalogError,
    Line,
    Network,
    SchemaError,
    TopologyError,
    Unit,
    grid_class,
    impedance_pu_to_ohm,
    line_impedance_pu,
    load_network,
    parse_network,
    save_network,
    validate,
)

from conftest import two_bus_network


def test_load_lv_feeder(lv_feeder):
    assert lv_feeder.id == "lv_rural_5"
    assert len(lv_feeder.buses) == 5
    assert len(lv_feeder.lines) == 3
    assert lv_feeder.pcc_bus.id == "pcc"
    assert grid_class(lv_feeder) == ("LV", "rural")


def test_minimal_two_bus_roundtrip(tmp_path, lv_catalog):
    net = Network(
        id="mini",
        urbanization="rural",
        base_mva=1.0,
        buses=(
            Bus("p", "LV", 0.4, 0.9, 1.1, is_pcc=True),
            Bus("b", "LV", 0.4, 0.9, 1.1),
        ),
        lines=(Line("l", "p", "b", 0.2, "nayy150", 0.208, 0.08, 0.27),),
        transformers=(),
        units=(Unit("ld", "b", "load", -0.05, 0.0, -0.02, 0.02, technology="household"),),
    )
    path = tmp_path / "mini.json"
    save_network(net, path)
    loaded = load_network(path, lv_catalog)
    assert loaded == net
    assert len(loaded.buses) == 2
    assert len(loaded.lines) == 1
    # file is newline terminated and round-trips byte-identically
    text = path.read_text()
    assert text.endswith("\n")
    save_network(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_text() == text


def test_duplicate_bus_id_rejected(tmp_path, lv_catalog, fixtures_dir):
    data = json.loads((fixtures_dir / "lv_feeder.json").read_text())
    data["buses"][1]["id"] = "pcc"
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError, match="pcc"):
        load_network(path, lv_catalog)


def test_unknown_field_rejected(tmp_path, lv_catalog, fixtures_dir):
    data = json.loads((fixtures_dir / "lv_feeder.json").read_text())
    data["buses"][0]["colour"] = "red"
    path = tmp_path / "unknown.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError, match="colour"):
        load_network(path, lv_catalog)


def test_missing_field_names_field_and_path(tmp_path, lv_catalog, fixtures_dir):
    data = json.loads((fixtures_dir / "lv_feeder.json").read_text())
    del data["lines"][0]["length_km"]
    path = tmp_path / "missing.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaError) as err:
        load_network(path, lv_catalog)
    assert "length_km" in str(err.value)
    assert "lines[0]" in str(err.value)


def test_disconnected_graph_rejected(tmp_path, lv_catalog, fixtures_dir):
    data = json.loads((fixtures_dir / "lv_feeder.json").read_text())
    data["lines"] = data["lines"][:1]  # drop l2, l3: b3/b4 float
    path = tmp_path / "disc.json"
    path.write_text(json.dumps(data))
    with pytest.raises(TopologyError):
        load_network(path, lv_catalog)


def test_unresolved_type_id_rejected(tmp_path, lv_catalog, fixtures_dir):
    data = json.loads((fixtures_dir / "lv_feeder.json").read_text())
    data["lines"][0]["type_id"] = "unobtainium"
    path = tmp_path / "badtype.json"
    path.write_text(json.dumps(data))
    with pytest.raises(CatalogError, match="unobtainium"):
        load_network(path, lv_catalog)


def test_per_unit_conversion_lv_feeder(lv_feeder):
    # z_pu = r_ohm_per_km * length / z_base with z_base = kv^2 / s_base
    line = lv_feeder.lines[0]  # l1: 0.15 km of 0.208 + j0.08 ohm/km at 0.4 kV
    z = line_impedance_pu(line, 0.4, lv_feeder.base_mva)
    z_base = 0.4 * 0.4 / 1.0
    assert z.real == pytest.approx(0.208 * 0.15 / z_base, rel=1e-12)
    assert z.imag == pytest.approx(0.08 * 0.15 / z_base, rel=1e-12)


def test_per_unit_conversion_involutive(lv_feeder):
    for line in lv_feeder.lines:
        kv = lv_feeder.bus_by_id[line.from_bus].base_kv
        z_pu = line_impedance_pu(line, kv, lv_feeder.base_mva)
        z_ohm = impedance_pu_to_ohm(z_pu, kv, lv_feeder.base_mva)
        expected = complex(line.r_ohm_per_km, line.x_ohm_per_km) * line.length_km
        expected /= line.parallel_count
        assert abs(z_ohm - expected) <= 1e-12 * abs(expected)


def test_validate_clean_fixture(lv_feeder):
    assert validate(lv_feeder) == []


def test_validate_multiple_pcc():
    net = two_bus_network()
    buses = (net.buses[0], Bus("b2", "LV", 1.0, 0.5, 1.5, is_pcc=True))
    bad = Network(net.id, net.urbanization, net.base_mva, buses, net.lines,
                  net.transformers, net.units)
    findings = validate(bad)
    assert any("PCC" in f.message for f in findings)


def test_validate_degenerate_voltage_band():
    net = two_bus_network(v_min=1.0, v_max=1.0)
    findings = validate(net)
    offenders = [f for f in findings if "v_min_pu < v_max_pu" in f.message]
    assert len(offenders) == 2  # both buses carry the same degenerate band


def test_validate_is_pure(lv_feeder):
    assert validate(lv_feeder) == validate(lv_feeder)


def test_parse_rejects_non_numeric():
    data = {
        "meta": {"id": "x", "urbanization": "rural", "base_mva": "1.0"},
        "buses": [], "lines": [], "transformers": [], "units": [],
    }
    with pytest.raises(SchemaError, match="base_mva"):
        parse_network(data)
