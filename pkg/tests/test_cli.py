import copy
import json
import subprocess
import sys

import jsonschema
import pytest

from swelab import cli, config
from swelab.errors import ConfigError

SMALL = {
    "model": {"beta": 0.5, "betas": [0.5]},
    "grid": {"tau_values": [1.0, 1.5], "lambda_values": [1.0, 1.25, 1.5]},
    "scales": {"n_min": 3, "n_max": 6, "envelope_n_min": 3, "envelope_n_max": 6},
    "experiment": {
        "seed": 99,
        "sample": {"n_reps": 4},
        "lil": {"n_reps": 50},
        "propagate": {"n_runs": 2, "path_steps": 4096, "min_depth": 3},
        "slepian": {"g1_values": [1.0], "g2_values": [1.0, 2.0], "r_values": [0.3], "gammas": [1.0, 2.0],
                    "rate_n_reps": 2000},
    },
}


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(tmp_path, command, doc=SMALL, extra=()):
    out = tmp_path / f"out-{command}"
    code = cli.main([command, "--config", str(write_cfg(tmp_path, doc)), "--out", str(out), "--threads", "1", *extra])
    return code, out


def strip_timestamp(path):
    doc = json.loads(path.read_text())
    doc["meta"].pop("timestamp")
    return doc


@pytest.mark.parametrize("command,files", [
    ("sample", ["sample.json", "samples.csv", "field.bin", "field.json"]),
    ("lil", ["lil.json", "lil_oscillations.csv"]),
    ("slepian", ["slepian.json"]),
    ("selftest", ["selftest.json"]),
])
def test_commands_write_outputs(tmp_path, command, files):
    code, out = run(tmp_path, command)
    assert code == 0
    for f in files:
        assert (out / f).exists(), f
    main_json = out / files[0]
    doc = json.loads(main_json.read_text())
    assert doc["meta"]["config"] == SMALL
    assert doc["meta"]["seed"] == 99
    assert doc["meta"]["effective_config"]["experiment"]["lil"]["tau"] == 1.0


def test_propagate_writes_outputs(tmp_path):
    code, out = run(tmp_path, "propagate")
    assert code == 0
    doc = json.loads((out / "propagate.json").read_text())
    assert doc["results"]["n_runs"] == 2
    assert (out / "propagate.csv").read_text().startswith("replication_id,tau,column,lambda,h,increment,mod_statistic")


def test_threads_do_not_change_results(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["propagate", "--config", str(cfg), "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["propagate", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert strip_timestamp(a / "propagate.json") == strip_timestamp(b / "propagate.json")
    assert (a / "propagate.csv").read_bytes() == (b / "propagate.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    code, out = run(tmp_path, "sample", extra=["--seed", "5"])
    assert code == 0
    assert json.loads((out / "sample.json").read_text())["meta"]["seed"] == 5
    first = (out / "samples.csv").read_bytes()
    run(tmp_path, "sample")
    assert (out / "samples.csv").read_bytes() != first


def test_config_is_not_mutated(tmp_path):
    doc = copy.deepcopy(SMALL)
    before = json.dumps(doc, sort_keys=True)
    path = write_cfg(tmp_path, doc)
    text = path.read_text()
    cli.main(["sample", "--config", str(path), "--out", str(tmp_path / "o"), "--seed", "3"])
    assert path.read_text() == text
    assert json.dumps(doc, sort_keys=True) == before


@pytest.mark.parametrize("mutate", [
    lambda d: d["model"].update(beta=1.5),
    lambda d: d["experiment"].pop("seed"),
    lambda d: d.update(bogus=1),
    lambda d: d["scales"].update(n_min=9, n_max=4),
    lambda d: d["grid"].update(time_band=[1.0, 0.5]),
    lambda d: d["experiment"]["sample"].update(component="u3"),
])
def test_config_errors_exit_2(tmp_path, mutate, capsys):
    doc = copy.deepcopy(SMALL)
    mutate(doc)
    code, _ = run(tmp_path, "sample", doc)
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_json_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["selftest", "--config", str(p)]) == 2


def test_resource_cap_exit_3(tmp_path):
    doc = copy.deepcopy(SMALL)
    doc["grid"] = {"tau_values": [1.0 + i / 100 for i in range(70)], "lambda_values": [1.0 + i / 100 for i in range(70)]}
    code, _ = run(tmp_path, "sample", doc)
    assert code == 3


def test_resolution_error_exit_3(tmp_path):
    doc = copy.deepcopy(SMALL)
    doc["experiment"]["propagate"].update(path_steps=4, initial=[1.0, 2.0])
    doc["experiment"]["propagate"]["path_span"] = 0.5
    code, _ = run(tmp_path, "propagate", doc)
    assert code == 3


def test_selftest_stdout(capsys):
    assert cli.main(["selftest", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["results"]["all_pass"] and doc["results"]["n_checks"] > 40


def test_schema_file_matches_builder():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "config.schema.json"
    assert json.loads(path.read_text()) == config.build_schema()
    jsonschema.Draft202012Validator.check_schema(config.build_schema())
    jsonschema.validate(config.DEFAULTS, config.build_schema())


def test_resolve_fills_defaults_and_requires_seed():
    cfg = config.resolve({"experiment": {"seed": 1}})
    assert cfg["experiment"]["lil"]["n_reps"] == 2000
    with pytest.raises(ConfigError, match="seed"):
        config.resolve({})


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "swelab", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert '"seed": 20240101' in out.stdout
