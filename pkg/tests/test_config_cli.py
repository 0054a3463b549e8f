import copy
import json
import os

import numpy as np
import pytest

from bimot.cli import EXIT_CONFIG, EXIT_OK, EXIT_PHYSICS, main
from bimot.config import (BUILTIN_CONFIGS, ConfigError, builtin_config, load_document, normalize,
                          parse_cases, parse_config, saturation_intensity, serialize)
from bimot.scheme import PRESETS, build_preset, validate


def minimal(**extra):
    doc = {
        "name": "mini",
        "scheme": {"preset": "lambda_1to0"},
        "field": {"kind": "linear_1d", "gradient_G_per_cm": 10},
        "layout": {"kind": "mot_1d", "components": [
            {"link": "main", "detuning_gamma": -1.0, "saturation": 1.0, "handedness": "mot"},
            {"link": "main", "detuning_gamma": 0.0, "saturation": 1.0, "handedness": "anti-mot"}]},
        "grid": {"axis": "z_at_v0", "z": {"min": -3, "max": 3, "n": 7, "unit": "zeeman_gamma"}},
    }
    doc.update(extra)
    return doc


def test_saturation_intensity_from_line_constants():
    gamma = 1 / 75e-9
    Is = saturation_intensity(gamma, 541e-9) / 10  # W/m^2 -> mW/cm^2
    assert Is == pytest.approx(1.7517, abs=5e-4)
    cfg = parse_cases(builtin_config("fig6"))[0]
    assert cfg.system.beams[0].saturation == pytest.approx(1.8 / Is, rel=1e-9)
    assert cfg.system.beams[0].saturation == pytest.approx(1.03, abs=0.005)


def test_detuning_units():
    doc = minimal()
    doc["layout"]["components"][0] = {"link": "main", "detuning": "-1.0 Gamma", "saturation": 1.0}
    cfg = parse_config(doc)
    assert cfg.system.beams[0].detuning == pytest.approx(-1 / 75e-9, rel=1e-12)
    assert cfg.system.beams[0].detuning == pytest.approx(-1.3333e7, rel=1e-4)
    doc["layout"]["components"][0]["detuning"] = "-2.1220659 MHz"
    assert parse_config(doc).system.beams[0].detuning == pytest.approx(-1 / 75e-9, rel=1e-7)


def test_explicit_beams_with_axis_polarization():
    doc = minimal()
    del doc["layout"]
    doc["beams"] = [
        {"link": "main", "detuning_gamma": -1, "saturation": 1, "direction": "+z", "polarization": "sigma+"},
        {"link": "main", "detuning_gamma": -1, "saturation": 1, "direction": "-z",
         "polarization": "sigma+_along_-z"},
    ]
    cfg = parse_config(doc)
    np.testing.assert_allclose(cfg.system.beams[1].direction, [0, 0, -1])
    doc["beams"][1]["polarization"] = "circular"
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.path == "beams[1].polarization"


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.update(scheme={"preset": "nope"}), "scheme"),
    (lambda d: d["field"].update(gradient_G_per_cm="10 furlongs"), "field.gradient"),
    (lambda d: d["layout"]["components"][0].update(colour="red"), "layout.components[0].colour"),
    (lambda d: d.update(mode="fast"), "mode"),
    (lambda d: d.update(jobs=0), "jobs"),
    (lambda d: d.update(mode="kmc-1d", kmc={"n_traj": 0}), "kmc.n_traj"),
    (lambda d: d.update(mode="kmc-1d", kmc={"seed": -4}), "kmc.seed"),
    (lambda d: d["layout"].update(kind="mot_3d"), "layout.kind"),
])
def test_schema_errors_carry_paths(mutate, path):
    doc = minimal()
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.path.startswith(path)


def test_normalization_is_idempotent():
    for name in BUILTIN_CONFIGS:
        for cfg in parse_cases(builtin_config(name)):
            again = parse_config(json.loads(serialize(cfg)))
            assert again.document == cfg.document
            assert again.hash == cfg.hash
            assert normalize(again.document) == cfg.document


def test_hash_ignores_output_and_jobs():
    a = parse_config(minimal())
    b = parse_config(minimal(jobs=4, output="elsewhere.csv"))
    c = parse_config(minimal(mass_u=40))
    assert a.hash == b.hash != c.hash


def test_cases_are_merged_over_base():
    cases = parse_cases(builtin_config("fig2"))
    assert [c.name for c in cases] == ["fig2_trap_bichromatic", "fig2_cool_bichromatic",
                                        "fig2_trap_reference", "fig2_cool_reference"]
    assert cases[2].system.scheme.name.startswith("type1")
    assert len(cases[0].system.beams) == 4 and len(cases[2].system.beams) == 2


def test_all_presets_validate():
    for name in PRESETS:
        assert validate(build_preset(name)) == []


def test_cli_fig2_writes_four_tables(tmp_path, capsys):
    assert main(["run", "--config", "fig2", "--out", str(tmp_path)]) == EXIT_OK
    files = sorted(os.listdir(tmp_path))
    assert len(files) == 4
    text = (tmp_path / "fig2_trap_bichromatic.csv").read_text()
    assert "# config_hash: " in text and "az_m_s2" in text
    rows = [l for l in text.splitlines() if not l.startswith("#")]
    assert rows[0] == "z_m,az_m_s2,az_hbar_k_gamma" and len(rows) == 82


def test_cli_reruns_from_csv(tmp_path):
    out = tmp_path / "a"
    assert main(["run", "--config", "fig4", "--out", str(out)]) == EXIT_OK
    src = out / "fig4_trap_bichromatic.csv"
    again = tmp_path / "b.csv"
    assert main(["run", "--config", str(src), "--out", str(again)]) == EXIT_OK
    assert again.read_bytes() == src.read_bytes()


def test_cli_bytes_independent_of_jobs(tmp_path):
    doc = builtin_config("fig2_kmc")
    doc["grid"]["z"]["n"] = 4
    doc["kmc"]["n_traj"] = 300
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(doc))
    a, b = tmp_path / "j1.csv", tmp_path / "j8.csv"
    assert main(["run", "--config", str(cfg), "--out", str(a), "--jobs", "1"]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--out", str(b), "--jobs", "8"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert "sigma_m_s2" in a.read_text()
    c = tmp_path / "s2.csv"
    assert main(["run", "--config", str(cfg), "--out", str(c), "--seed", "2"]) == EXIT_OK
    assert c.read_bytes() != a.read_bytes()


def test_cli_dark_manifold_exit(tmp_path, capsys):
    doc = minimal(scheme={"preset": "lambda_1to0_with_M0"})
    cfg = tmp_path / "dark.json"
    cfg.write_text(json.dumps(doc))
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "x.csv")])
    assert code == EXIT_PHYSICS
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "dark_manifold"
    assert record["sublevels"] and "grid_point" in record


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(minimal(mode="fast")))
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "config_error" and record["path"] == "mode"
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_presets_and_validate(capsys):
    assert main(["presets", "list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in list(PRESETS) + list(BUILTIN_CONFIGS):
        assert name in out
    assert main(["validate", "--config", "fig6"]) == EXIT_OK
    assert capsys.readouterr().out.count(": ok") == 6


def test_cli_steady_point(tmp_path):
    doc = minimal(mode="steady-3d-point", point={"r_mm": [0, 0, 1.0], "v_m_s": [0, 0, 0]})
    del doc["grid"]
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "p.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 2 and float(rows[1].split(",")[-1]) < 0


def test_load_document_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_document("no_such_builtin_or_file")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_document(str(bad))
    doc = copy.deepcopy(builtin_config("fig2"))
    doc["cases"][1]["name"] = doc["cases"][0]["name"]
    with pytest.raises(ConfigError):
        parse_cases(doc)
