import json
import math

import pytest

from nanomri.config import (RunConfig, config_from_dict, extended_config,
                            file_sha256, load_config, run_manifest,
                            save_config, scan_geometry, sectional_config)


def test_sectional_defaults():
    cfg = sectional_config()
    assert cfg.mode == "sectional"
    assert cfg.isotope == "13C"
    assert cfg.donor_depth_nm == 2.5
    assert cfg.r_max_nm == pytest.approx(1.4)
    assert cfg.b_ac_surface_t == pytest.approx(0.5e-6)
    assert cfg.t_control_cap_s is None


def test_extended_defaults():
    cfg = extended_config()
    assert cfg.isotope == "14N"
    assert cfg.r_max_nm == pytest.approx(4.0)
    assert cfg.theta_max_deg == pytest.approx(45.0)
    assert cfg.t_control_cap_s == pytest.approx(0.13)
    assert cfg.b_ac_surface_t == pytest.approx(1.25e-6)


def test_overrides():
    cfg = sectional_config(n_measure=100, seed=9)
    assert cfg.n_measure == 100
    assert cfg.seed == 9
    assert cfg.isotope == "13C"


def test_geometry_from_config():
    geom = scan_geometry(sectional_config())
    assert geom.theta_max == pytest.approx(math.radians(63.0))
    assert geom.r_max == pytest.approx(1.4e-9)
    assert geom.d_r == pytest.approx(0.25e-10)


def test_config_round_trip(tmp_path):
    cfg = extended_config(seed=4)
    path = str(tmp_path / "run.json")
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_unknown_key_rejected():
    with pytest.raises(ValueError):
        config_from_dict({"mode": "sectional", "not_a_field": 1})


def test_validation():
    with pytest.raises(ValueError):
        sectional_config(donor_depth_nm=-1.0)
    with pytest.raises(ValueError):
        sectional_config(n_measure=0)
    with pytest.raises(ValueError):
        sectional_config(mode="bogus")


def test_manifest_hashes_inputs(tmp_path):
    p = tmp_path / "input.xyz"
    p.write_text("1\nc\n1H 0 0 1\n")
    cfg = sectional_config()
    doc = run_manifest(cfg, inputs={"structure": str(p)})
    assert doc["inputs"]["structure"]["sha256"] == file_sha256(str(p))
    assert doc["config"]["isotope"] == "13C"
    json.dumps(doc)  # manifest must be serializable
