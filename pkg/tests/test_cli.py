from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from circsing import cli
from circsing.asym import build_nu
from circsing.core import TWO_PI, CoeffWindow
from circsing.report import (CertifiedReport, RunManifest, config_hash, emit_report,
                             load_manifest)


def run_cmd(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.main(list(argv) + ["--out", str(out)])
    man = json.loads((out / "manifest.json").read_text()) if (out / "manifest.json").exists() else None
    return code, man, out


def test_construct_zero_mode(tmp_path):
    code, man, out = run_cmd(tmp_path, "construct", "--mode", "zero", "--n-max", "10")
    assert code == 0
    assert man["checks"]["invariants"] and man["checks"]["total_length"]
    rows = list(csv.reader(open(out / "construct.csv")))
    assert rows[0] == ["config_hash", "n", "sigma", "total_length", "gauge_t_log"]
    assert rows[1][0] == man["config_hash"]
    assert abs(float(rows[10][3]) - TWO_PI / 10) <= 1e-12


def test_taylor_delta_zero(tmp_path):
    code, man, out = run_cmd(tmp_path, "taylor", "--delta", "0", "--m-max", "32", "--n-max", "8")
    assert code == 0 and man["checks"]["zero_when_delta0"]
    header = next(csv.reader(open(out / "taylor.csv")))
    assert header == ["config_hash", "m", "re", "im", "stage_n", "alias_bound", "residual"]


def test_asym_ledger_matches_library(tmp_path):
    code, man, _ = run_cmd(tmp_path, "asym", "--k-max", "1")
    assert code == 0
    M = cli.DEFAULTS["asym"]["window"]
    n = np.arange(-M, M + 1)
    am, _ = build_nu(CoeffWindow(-M, M, (1.0 + np.abs(n)) ** -1.0), 3.0, 1)
    row = man["tables"]["ledger"]["rows"][0]
    assert row[0] == 1
    assert [float(x) for x in row[1:]] == [float(x) for x in am.ledger()[0][1:]]


def test_unknown_parameter_exit_1(tmp_path, capsys):
    code, man, _ = run_cmd(tmp_path, "construct", "--set", "bogus=3")
    assert code == 1 and man is None
    assert "unknown parameter" in capsys.readouterr().err


def test_execution_error_flagged_incomplete(tmp_path):
    code, man, _ = run_cmd(tmp_path, "construct", "--n-max", "30")
    assert code == 1
    assert not man["complete"] and "construct(" in man["error"]


def test_failed_numeric_check_exit_2(tmp_path):
    # at large delta the fourth moments grow, so the decay checks fail
    code, man, _ = run_cmd(tmp_path, "moments", "--delta", str(2 * TWO_PI), "--m-list", "[8,16,32]",
                           "--seeds", "16")
    assert code == 2
    assert man["complete"] and not man["checks"]["slope_below_-0.5"]


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"master_seed": 9, "params": {"n_max": 6}}))
    code, man, _ = run_cmd(tmp_path, "construct", "--config", str(cfg), "--set", "mode=\"zero\"")
    assert code == 0
    assert man["config"]["master_seed"] == 9
    assert man["config"]["params"] == {"n_max": 6, "mode": "zero", "dump_rank": None}


def test_materialize_defaults_explicit():
    cfg = cli.materialize("shat", 3)
    assert cfg["params"] == cli.DEFAULTS["shat"] and cfg["params"] is not cli.DEFAULTS["shat"]
    with pytest.raises(ValueError):
        cli.materialize("nope", 0)


def test_determinism_across_threads(tmp_path):
    a = cli.run(cli.materialize("construct", 77, overrides={"n_max": 8}))
    b = cli.run(cli.materialize("construct", 77, overrides={"n_max": 8}))
    assert a.hash() == b.hash()
    c1 = cli.main(["dims", "--seed", "5", "--out", str(tmp_path / "t1"), "--threads", "1"])
    c2 = cli.main(["dims", "--seed", "5", "--out", str(tmp_path / "t2"), "--threads", "4"])
    h = [json.loads((tmp_path / d / "manifest.json").read_text())["manifest_hash"] for d in ("t1", "t2")]
    assert c1 == c2 == 0 and h[0] == h[1]


@pytest.mark.parametrize("overrides", [["shat", "--set", "m_max=64", "--set", "N_f=7",
                                        "--set", "n_max=8"],
                                       ["reduce", "--m-max", "32"]])
def test_small_pipelines(tmp_path, overrides):
    code, man, _ = run_cmd(tmp_path, *overrides)
    assert code == 0 and man["complete"] and man["checks"]


def test_rng_streams_recorded(tmp_path):
    _, man, _ = run_cmd(tmp_path, "construct", "--seed", "12", "--n-max", "5")
    assert man["rng_streams"] == ["philox(seed=12, n=1..5)"]


# --- report serialization -----------------------------------------------------------------

def test_empty_manifest_json(tmp_path):
    man = RunManifest({"subcommand": "noop", "master_seed": 0, "params": {}})
    paths = emit_report(man, str(tmp_path / "e"), "json")
    d = json.load(open(paths[0]))
    assert d["reports"] == [] and d["complete"] and d["config_hash"] == config_hash(man.config)


def test_round_trip_hash(tmp_path):
    man = RunManifest({"subcommand": "x", "master_seed": 1, "params": {"a": 0.1}})
    man.reports.append(CertifiedReport("v", 1 / 3, {"m": 4}, {"alias": 1e-17}, 1e-9, True, 1,
                                       {"z": complex(1, 2)}))
    man.tables["t"] = (["m", "re"], [[1, math.pi], [2, -1e-300]])
    man.checks["ok"] = True
    emit_report(man, str(tmp_path / "r"), "csv_bundle")
    back = load_manifest(str(tmp_path / "r" / "manifest.json"))
    assert back.hash() == man.hash()
    row = next(r for i, r in enumerate(csv.reader(open(tmp_path / "r" / "t.csv"))) if i == 1)
    assert float(row[2]) == math.pi and len(row[2].replace("-", "").replace(".", "")) >= 16


def test_unwritable_output(tmp_path):
    man = RunManifest({"subcommand": "x", "master_seed": 0, "params": {}})
    with pytest.raises(OSError, match="not writable"):
        emit_report(man, "/proc/circsing-out", "json")
    with pytest.raises(ValueError):
        emit_report(man, str(tmp_path), "xml")


def test_unwritable_output_cli(tmp_path, capsys):
    code = cli.main(["construct", "--n-max", "3", "--out", "/proc/circsing-out"])
    assert code == 1 and "not writable" in capsys.readouterr().err
