import json
import shutil
import subprocess

import numpy as np
import pytest
import yaml

from kinemix.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from kinemix.config import DEFAULTS, SUITES, ConfigError, RunConfig
from kinemix.records import RecordWriter, export_tables, read_records

SMALL = {
    "grid": {"R_v": 5.0, "N_v": 8},
    "space": {"x_lo": -10.0, "x_hi": 10.0, "N_x": 32},
    "scheme": {"T_final": 0.5},
    "initial": {"width": 1.5},
    "diagnostics": {"samples": 4},
}


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _merge(over):
    out = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        out.setdefault(k, {}).update(v) if isinstance(v, dict) else out.__setitem__(k, v)
    return out


# ------------------------------------------------------------ config


def test_defaults_valid():
    cfg = RunConfig.load()
    assert cfg["grid"]["N_v"] == 16 and cfg["space"]["N_x"] == 128
    assert cfg.params.I == 2
    assert cfg.sgrid.boundary == "outflow"
    assert cfg.scheme.mode == "direct"
    assert cfg.profile.shape == "odd-bump"
    assert tuple(cfg["diagnostics"]["suites"]) == SUITES
    assert RunConfig(yaml.safe_load(cfg.dump())).hash == cfg.hash


def test_hash_tracks_content():
    a = RunConfig({"seed": 1})
    assert a.hash == RunConfig({"seed": 1}).hash
    assert a.hash != RunConfig({"seed": 2}).hash


@pytest.mark.parametrize("bad, match", [
    ({"mixture": {"beta": [[1.0, 2.0], [1.0, 1.0]]}}, "symmetric"),
    ({"mixture": {"m": [1.0, 3.14159]}}, "commensurate"),
    ({"mixture": {"n": [1.0, -1.0]}}, "schema"),
    ({"grid": {"N_v": "many"}}, "schema"),
    ({"space": {"x_lo": 5.0, "x_hi": 1.0}}, "x_hi"),
    ({"initial": {"fluid": {"rho7": 1.0}}}, "rho7"),
    ({"scheme": {"order": 2, "collision": "nu-implicit"}}, "order 2"),
    ({"unknown_section": {}}, "schema"),
    ({"version": 2}, "schema"),
])
def test_config_errors(bad, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig(bad)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.load(tmp_path / "missing.yaml")
    p = tmp_path / "broken.yaml"
    p.write_text("grid: [unclosed")
    with pytest.raises(ConfigError, match="parse"):
        RunConfig.load(p)
    p.write_text("- a\n- b\n")
    with pytest.raises(ConfigError, match="mapping"):
        RunConfig.load(p)


def test_defaults_not_mutated():
    RunConfig({"grid": {"N_v": 8}})
    assert DEFAULTS["grid"]["N_v"] == 16


# ------------------------------------------------------------ records


def test_records_roundtrip_and_export(tmp_path):
    with RecordWriter(tmp_path / "records.ndjson", "h") as rw:
        rw.emit("energy.f", 1.5, 0.0)
        rw.emit("energy.W0", 2.5, 0.0)
        rw.emit("energy.f", 1.25, 0.1)
        rw.emit("check", True, passed=True, tolerance=1e-8, ref="x")
        rw.emit("bad", float("nan"))
    recs = read_records(tmp_path / "records.ndjson")
    assert [r["name"] for r in recs] == ["energy.f", "energy.W0", "energy.f", "check", "bad"]
    assert list(recs[0]) == ["t", "name", "value", "tolerance", "pass", "ref", "config_hash"]
    assert recs[4]["value"] == "nan"
    paths = export_tables(tmp_path)
    assert sorted(p.name for p in paths) == ["bad.tsv", "check.tsv", "energy.tsv"]
    lines = (tmp_path / "tables" / "energy.tsv").read_text().splitlines()
    assert lines == ["t\tW0\tf", "0.0\t2.5\t1.5", "0.1\t\t1.25"]


def test_read_records_rejects_corrupt(tmp_path):
    p = tmp_path / "records.ndjson"
    p.write_text('{"name": "a", "value": 1}\n{not json\n')
    with pytest.raises(ValueError, match=":2:"):
        read_records(p)


# ------------------------------------------------------------ CLI


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = _write(tmp_path, {"mixture": {"beta": [[1.0, 2.0], [1.0, 1.0]]}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["verify", "--only", "nope", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--checkpoint-every", "-1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_cli_verify_only_basis(tmp_path, capsys, cache_dir):
    out = tmp_path / "v"
    rc = main(["verify", "--config", _write(tmp_path, SMALL), "--only", "basis",
               "--tensor-cache", str(cache_dir), "--out", str(out)])
    assert rc == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary["suites"]) == ["basis"] and summary["passed"]
    printed = capsys.readouterr().out.splitlines()
    assert printed and all(line.startswith("[PASS]") for line in printed)
    recs = read_records(out / "records.ndjson")
    assert all(r["name"].startswith("basis.") and r["pass"] for r in recs)
    assert {r["config_hash"] for r in recs} == {summary["config_hash"]}


def test_cli_verify_collision_suites(tmp_path, cache_dir):
    out = tmp_path / "v"
    rc = main(["verify", "--config", _write(tmp_path, SMALL), "--only", "collision,entropy,lemma44",
               "--tensor-cache", str(cache_dir), "--seed", "3", "--out", str(out)])
    assert rc == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["suites"]) == {"collision", "entropy", "lemma44"}


@pytest.fixture(scope="module")
def sim_run(tmp_path_factory, cache_dir):
    tmp = tmp_path_factory.mktemp("sim")
    cfg = _write(tmp, SMALL)
    out = tmp / "run"
    rc = main(["simulate", "--config", cfg, "--tensor-cache", str(cache_dir),
               "--checkpoint-every", "2", "--out", str(out)])
    return rc, out, cfg


def test_cli_simulate_outputs(sim_run):
    rc, out, _ = sim_run
    assert rc == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["t_final"] == pytest.approx(0.5)
    assert set(summary["checks"]) >= {"energy_bound", "integrals_finite", "f1_decay", "smallness",
                                      "lemma44_integrated"}
    assert (out / "summary.tsv").read_text().startswith("check\tresult\n")
    ck = sorted((out / "checkpoints").glob("state-*.npz"))
    assert ck and ck[0].name == "state-0000002.npz"
    assert RunConfig.load(out / "config.yaml").hash == summary["config_hash"]


def test_cli_export(sim_run, tmp_path):
    rc, out, _ = sim_run
    assert main(["export-plots", "--out", str(out)]) == EXIT_OK
    energy = (out / "tables" / "energy.tsv").read_text().splitlines()
    summary = json.loads((out / "summary.json").read_text())
    assert len(energy) == 1 + summary["levels"]
    first = (out / "tables" / "energy.tsv").read_bytes()
    assert main(["export-plots", "--out", str(out)]) == EXIT_OK
    assert (out / "tables" / "energy.tsv").read_bytes() == first
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["export-plots", "--out", str(empty)]) == EXIT_FAIL
    assert main(["export-plots"]) == EXIT_CONFIG


def test_cli_simulate_deterministic(sim_run, tmp_path, cache_dir):
    rc, out, cfg = sim_run
    again = tmp_path / "again"
    assert main(["simulate", "--config", cfg, "--tensor-cache", str(cache_dir), "--out", str(again)]) == rc
    assert (again / "records.ndjson").read_bytes() == (out / "records.ndjson").read_bytes()


def test_cli_simulate_zero_amplitude(tmp_path, cache_dir):
    # the profile rejects amplitude 0, so the CLI runs the trivial zero state instead
    cfg = _write(tmp_path, _merge({"initial": {"amplitude": 0.0}, "scheme": {"T_final": 0.2}}))
    out = tmp_path / "zero"
    assert main(["simulate", "--config", cfg, "--tensor-cache", str(cache_dir), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["I0"] == 0 and summary["totals_drift"] == 0


def test_cli_simulate_large_amplitude(tmp_path, cache_dir, capsys):
    cfg = _write(tmp_path, _merge({"initial": {"amplitude": 10.0},
                                   "diagnostics": {"epsilon": 1e-2, "constants": False}}))
    out = tmp_path / "big"
    rc = main(["simulate", "--config", cfg, "--tensor-cache", str(cache_dir), "--out", str(out)])
    assert rc in (EXIT_FAIL, EXIT_ABORT)
    if rc == EXIT_ABORT:
        assert (out / "abort-state.npz").exists()
    else:
        summary = json.loads((out / "summary.json").read_text())
        assert not summary["checks"]["smallness"]


def test_cli_blowup_exit_code(tmp_path, cache_dir, capsys):
    from kinemix.transport import SimState

    cfg = _write(tmp_path, _merge({"initial": {"amplitude": 1e7}, "diagnostics": {"constants": False}}))
    out = tmp_path / "boom"
    rc = main(["simulate", "--config", cfg, "--tensor-cache", str(cache_dir), "--out", str(out)])
    assert rc == EXIT_ABORT
    assert "aborted" in capsys.readouterr().err
    st = SimState.load(out / "abort-state.npz")
    assert np.all(np.isfinite(st.f))


@pytest.mark.skipif(shutil.which("kinemix") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["kinemix", "verify", "--config", _write(tmp_path, SMALL), "--only", "basis",
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "[PASS]" in r.stdout
