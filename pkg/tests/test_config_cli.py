import json
from importlib import resources

import jsonschema
import numpy as np
import pytest
import yaml

from fvmlmc import cli
from fvmlmc.config import DEFAULTS, ConfigError, ExperimentConfig
from fvmlmc.fields import LOGNORMAL

SCHEMA = json.loads(resources.files("fvmlmc").joinpath("summary_schema.json").read_text())

SMALL = {
    "dimension": 1,
    "grid": {"m0": 4, "L": 2},
    "reference_level": 3,
    "samples": 20,
    "eps": [0.2],
    "mlmc": {"warmup": 10, "L_min": 1, "L_max": 3},
    "bench": {"sizes": [8, 16], "systems": 3},
}

TIMING_KEYS = {"wall_seconds", "total_seconds", "seconds", "cost_seconds", "mean_seconds", "seconds_per_dof"}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS and "seconds" not in k}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def levels_without_timing(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    cols = lines[0].split(",")
    keep = [i for i, c in enumerate(cols) if "seconds" not in c]
    return [[row.split(",")[i] for i in keep] for row in lines]


# -- config -------------------------------------------------------------------


def test_defaults_resolve():
    cfg = ExperimentConfig.from_dict({})
    assert cfg["box"]["centre"] == [0.5, 0.5]
    assert cfg["grid"] == DEFAULTS["grid"]
    p = cfg.problem()
    assert p.d == 2 and p.m0 == 8


def test_scalar_eps_becomes_list():
    assert ExperimentConfig.from_dict({"eps": 0.05})["eps"] == [0.05]


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("dimension: 2\ngrid:\n  m0: 8\n  L: 3\nreference_level: 2\n", 5, "reference_level: must be finer"),
        ("problem: model_problem_2\nsamples: 10\nbogus: 1\n", 3, "bogus: unknown key"),
        ("grid:\n  m0: 8\n  s: two\n", 3, "grid.s: expected an integer"),
        ("permeability:\n  model: lognormal\n  field:\n    mu: 0\n    sigma2: -1\n", 5, "sigma2: must be non-negative"),
        ("coupling: cgv\n", 1, "CGV requires stationary permeability"),
        ("problem: model_problem_1\nbox:\n  side: 0.2\n", 2, "grid lines"),
        ("seed: 18446744073709551616\n", 1, "64 bits"),
        ("permeability:\n  model: lognormal\n  field:\n    mu: 0\n    sigma2: 1\n    lambda: 0.3\n    norm: 3\n", 7, "norm: must be one of 1, 2"),
        ("eps: [0.1, -0.1]\n", 1, "eps.1: must be positive"),
    ],
)
def test_line_precise_errors(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_yaml(text, "exp.yaml")
    msg = str(err.value)
    assert msg.startswith(f"exp.yaml:{line}:"), msg
    assert fragment in msg


def test_invalid_yaml():
    with pytest.raises(ConfigError, match="exp.yaml:2: invalid YAML"):
        ExperimentConfig.from_yaml("a: 1\n b: [\n", "exp.yaml")


def test_hash_is_canonical():
    a = ExperimentConfig.from_dict({"seed": 3, "samples": 10})
    b = ExperimentConfig.from_yaml("samples: 10\nseed: 3\n")
    assert a.hash == b.hash
    assert a.hash != ExperimentConfig.from_dict({"seed": 4, "samples": 10}).hash


def test_dump_roundtrip():
    cfg = ExperimentConfig.from_dict({"permeability": {"model": LOGNORMAL}, "coupling": "cgv"})
    again = ExperimentConfig.from_yaml(cfg.dump())
    assert again.data == cfg.data and again.hash == cfg.hash


# -- CLI ----------------------------------------------------------------------


@pytest.mark.parametrize("command", cli.COMMANDS)
def test_cli_writes_valid_outputs(tmp_path, command):
    data = dict(SMALL)
    if command == "cgv-compare":
        data["permeability"] = {"model": LOGNORMAL}
    cfg = write_cfg(tmp_path, data)
    out = tmp_path / "out"
    assert cli.main([command, "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, SCHEMA)
    assert summary["seed"] == 5 and summary["command"] == command
    emitted = ExperimentConfig.load(out / "config.yaml")
    assert summary["config_hash"] == emitted.hash
    header = (out / "levels.csv").read_text().splitlines()[:3]
    assert header[0] == f"# config_hash: {emitted.hash}" and header[1] == "# seed: 5"
    assert (out / "residuals.csv").exists() == (command == "solver-bench")


def test_cli_reproducible_from_emitted_config(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["mlmc", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["mlmc", "--config", str(a / "config.yaml"), "--out", str(b)]) == 0
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    sa["config"].pop("output"), sb["config"].pop("output")
    assert strip_timing(sa["results"]) == strip_timing(sb["results"])
    assert levels_without_timing(a / "levels.csv")[1:] == levels_without_timing(b / "levels.csv")[1:]


def test_cli_threads_do_not_change_results(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["convergence", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["convergence", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert levels_without_timing(a / "levels.csv") == levels_without_timing(b / "levels.csv")


def test_env_output_override(tmp_path, monkeypatch):
    monkeypatch.setenv("FVMLMC_OUT", str(tmp_path / "env"))
    cfg = write_cfg(tmp_path, {**SMALL, "bench": {"sizes": [8], "systems": 1}})
    assert cli.main(["solver-bench", "--config", str(cfg)]) == 0
    rows = levels_without_timing(tmp_path / "env" / "levels.csv")
    assert len(rows) == 2  # single grid gives one row


def test_field_dump(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "dump_field": True})
    assert cli.main(["solver-bench", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    k = np.fromfile(tmp_path / "field.bin", "<f8")
    assert k.size == 16 and np.all(k > 0)


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"grid": {"L": 5}, "reference_level": 4})
    assert cli.main(["convergence", "--config", str(cfg)]) == 2
    assert "reference_level" in capsys.readouterr().err


def test_cli_bad_seed(capsys):
    assert cli.main(["mlmc", "--seed", "-1"]) == 2


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    # valid config, but the layered model cannot be used with CGV
    cfg = write_cfg(tmp_path, {"grid": {"m0": 8}})
    assert cli.main(["cgv-compare", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "stationary" in capsys.readouterr().err


def test_jsonable():
    assert cli.jsonable({"a": float("nan"), "b": np.int64(3), "c": np.array([1.0, np.inf])}) == {"a": None, "b": 3, "c": [1.0, None]}


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "fvmlmc", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "fvmlmc" in r.stdout
