import csv
import json
from pathlib import Path

import numpy as np
import pytest
try:
    import tomllib as tomli
except ImportError:
    import tomli

from phaseid import cli
from phaseid.config import HELP, SECTIONS, ConfigError, PipelineConfig, config_to_dict, dump_config, load_config
from phaseid.feeder import FeederSpec, bundled_feeder_text, generate_feeder
from phaseid.network import parse_network, validate_radial
from phaseid.study import StudyContext, make_zoning, run_cs1, run_cs2, write_report
from phaseid.synth.panel import read_panel_binary, read_panel_csv
from phaseid.synth.powerflow import PowerFlowError


def test_defaults_round_trip_through_toml(tmp_path):
    cfg = PipelineConfig()
    f = tmp_path / "c.toml"
    f.write_text(dump_config(cfg))
    assert load_config(f) == cfg
    assert set(HELP) == {k for keys in SECTIONS.values() for k in keys}


@pytest.mark.parametrize("text, key", [
    ("[simulation]\nT = 10\n", "T"),
    ("[simulation]\ntau_ref = -0.1\n", "tau_ref"),
    ("[simulation]\nneutral_mode = 'x'\n", "neutral_mode"),
    ("[clustering]\ncluster_range = [5, 3]\n", "cluster_range"),
    ("[identification]\nschemes = ['S9']\n", "schemes"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[seeds]\nnoise = 1\n", "noise"),
    ("[seeds]\nnoise_seed = 1.5\n", "noise_seed"),
    ("not toml = = \n", "c.toml"),
])
def test_config_errors_name_the_key(tmp_path, text, key):
    f = tmp_path / "c.toml"
    f.write_text(text)
    with pytest.raises(ConfigError, match=key):
        load_config(f)


def test_int_accepted_for_float_and_overrides(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("[simulation]\nv_slack = 1\n")
    cfg = load_config(f, Q=7, clusters=None)
    assert cfg.v_slack == 1.0 and isinstance(cfg.v_slack, float) and cfg.Q == 7 and cfg.clusters == 3


def test_help_documents_every_key(capsys):
    with pytest.raises(SystemExit):
        cli.main(["pipeline", "--help"])
    out = capsys.readouterr().out
    for key in HELP:
        assert f"{key} =" in out


def test_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.toml"
    bad.write_text("[simulation]\nT = 'x'\n")
    assert cli.main(["cluster", "--config", str(bad), "--output", str(tmp_path)]) == 1
    missing = tmp_path / "nope.json"
    assert cli.main(["parse", "--network", str(missing), "--output", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "none.toml"), "--output", str(tmp_path)]) == 1

    def boom(*a, **k):
        raise PowerFlowError("no convergence", 3)

    monkeypatch.setattr(cli, "build_scenario", boom)
    assert cli.main(["simulate", "--output", str(tmp_path)]) == 3
    assert "t=3" in capsys.readouterr().err


def test_fresh_run_directory_per_invocation(tmp_path):
    for _ in range(2):
        assert cli.main(["cluster", "--output", str(tmp_path)]) == 0
    runs = sorted(p.name for p in tmp_path.iterdir())
    assert runs == ["run-001", "run-002"]
    a, b = (tmp_path / r / "zoning.json" for r in runs)
    assert a.read_bytes() == b.read_bytes()
    echoed = tomli.loads((tmp_path / "run-001" / "config.toml").read_text())
    assert echoed == config_to_dict(load_config(None, output=str(tmp_path)))


def test_simulate_outputs_readable(tmp_path):
    assert cli.main(["simulate", "--output", str(tmp_path), "--tau", "0.02"]) == 0
    run = tmp_path / "run-001"
    truth = read_panel_csv(run / "panel_truth.csv")
    assert truth == read_panel_binary(run / "panel_truth.vpanel")
    noisy = read_panel_csv(run / "panel_noisy.csv")
    ratio = noisy.magnitudes / truth.magnitudes - 1
    assert 0.005 < ratio.std() < 0.008
    mapping = json.loads((run / "mapping.json").read_text())
    assert mapping["balance_class"] == "C2" and len(mapping["phases"]) == 40


def test_imported_profiles_drive_simulation(tmp_path):
    assert cli.main(["simulate", "--output", str(tmp_path)]) == 0
    prof = tmp_path / "run-001" / "profiles.csv"
    cfg = tmp_path / "c.toml"
    cfg.write_text(f"[paths]\nprofiles = '{prof}'\n")
    assert cli.main(["simulate", "--config", str(cfg), "--output", str(tmp_path)]) == 0
    a = read_panel_binary(tmp_path / "run-001" / "panel_truth.vpanel")
    b = read_panel_binary(tmp_path / "run-002" / "panel_truth.vpanel")
    assert np.abs(a.magnitudes - b.magnitudes).max() < 1e-12


def test_identify_noise_free_is_perfect_for_consensus(tmp_path):
    assert cli.main(["identify", "--output", str(tmp_path), "--tau", "0"]) == 0
    summary = json.loads((tmp_path / "run-001" / "identify_summary.json").read_text())
    for rec in summary:
        if rec["metric"] == "J1" and rec["scheme"] in ("S2", "S3", "S4"):
            assert rec["A"] == 100.0
    with open(tmp_path / "run-001" / "estimates.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"consumer_node", "zone", "metric", "scheme", "phase", "weightA", "weightB", "weightC"}
    assert len(rows) == 40 * 13


def test_parse_and_genfeeder(tmp_path):
    assert cli.main(["genfeeder", "--output", str(tmp_path), "--trunk", "6", "5", "--laterals", "2", "0",
                     "--consumers", "8"]) == 0
    doc = tmp_path / "run-001" / "feeder.json"
    net = parse_network(doc.read_text())
    assert validate_radial(net, include_switches=True).is_radial
    assert len(net.single_phase_devices()) == 8
    assert cli.main(["parse", "--network", str(doc), "--output", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "run-002" / "network_summary.json").read_text())
    assert rep["topology"]["is_radial"] and rep["n_buses"] == net.n_buses
    assert cli.main(["genfeeder", "--output", str(tmp_path), "--trunk", "6", "--laterals", "2", "0"]) == 1


def test_bundled_feeder_is_generator_output():
    doc, man = generate_feeder(FeederSpec())
    assert json.loads(bundled_feeder_text()) == json.loads(json.dumps(doc))
    assert man["n_feeders"] == 3 and len(man["references"]) == 9


def test_noise_free_studies_give_full_accuracy(feeder, tmp_path):
    z, _ = make_zoning(feeder, 3)
    ctx = StudyContext(feeder, z, Q=2)
    from phaseid.evaluation import Model
    rep = run_cs1(ctx, ("C2",), 1, 0.0, [Model("J1", "S3")])
    assert all(r["A"] == 100.0 for r in rep["rows"])
    assert rep["cells"] == 3
    out = write_report(rep, tmp_path / "cs1")
    header = (out / "results.csv").read_text().splitlines()[0].split(",")
    assert header[:7] == ["zone", "metric", "scheme", "tau", "A", "F", "D"]
    rep2 = run_cs2(ctx, 0.0, 1, "consensus", [Model("J1", "S3")])
    assert {r["level"] for r in rep2["rows"]} == {"L0", "L1"}
    with pytest.raises(ValueError):
        run_cs2(ctx, 0.0, 1, "other")
