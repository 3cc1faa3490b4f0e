import json
import logging
import math

import numpy as np
import pytest

from bec_kinetics.cache import FORMAT_VERSION, MAGIC, RunCache, read_blob, write_blob
from bec_kinetics.cli import main
from bec_kinetics.config import PRESETS, RunConfig, load_config, parse_assignments
from bec_kinetics.errors import ConfigError
from bec_kinetics.runner import build_model, run

CSV_FILES = (
    "spectrum.csv",
    "canonical_summary.csv",
    "rates.csv",
    "trajectory.csv",
    "distributions.csv",
    "steady_states.csv",
)


def test_defaults_are_the_rb87_scenario():
    cfg = load_config("paper-n200")
    assert cfg.n_atoms == 200 and cfg.mass == 1.44316e-25 and cfg.scattering_length == 5.4e-9
    assert cfg.trap().omegas == pytest.approx((2 * math.pi * 42, 2 * math.pi * 42, 2 * math.pi * 120))
    assert cfg.temperature_k() == pytest.approx(0.4 * 1.5731e-8, rel=1e-4)


def test_parse_file_with_comments_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# scenario\nn_atoms = 50   # small\nwindow_kind = gaussian\n\nclose_boundary = no\n")
    cfg = load_config(str(path), ["gamma=0.3", "rate_mode = balanced"])
    assert (cfg.n_atoms, cfg.window_kind, cfg.close_boundary, cfg.gamma, cfg.rate_mode) == (
        50, "gaussian", False, 0.3, "balanced"
    )


@pytest.mark.parametrize(
    "lines",
    [["bogus = 1"], ["n_atoms = many"], ["n_atoms"], ["close_boundary = maybe"]],
)
def test_parse_errors(lines):
    with pytest.raises(ConfigError):
        parse_assignments(lines)


@pytest.mark.parametrize(
    "override",
    [
        "n_atoms=0",
        "trap_frequency_z_hz=-1",
        "temperature=0",
        "window_kind=cauchy",
        "time_grid=log:0:1:10",
        "initial_condition=delta:500",
        "initial_condition=hot:1",
        "scattering_length=-1e-9",
    ],
)
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        load_config("paper-n200", [override])


def test_unknown_source():
    with pytest.raises(ConfigError):
        load_config("no-such-preset")


def test_config_echo_round_trips(tmp_path):
    cfg = load_config("toy-3mode", ["gamma=123.25"])
    path = tmp_path / "echo.cfg"
    path.write_text(cfg.to_text())
    assert load_config(str(path)) == cfg
    assert load_config(str(path)).physics_hash() == cfg.physics_hash()


def test_physics_hash_ignores_plumbing():
    cfg = load_config("toy-3mode")
    assert cfg.replace(threads=4, output_dir="x").physics_hash() == cfg.physics_hash()
    assert cfg.replace(gamma=1.0).physics_hash() != cfg.physics_hash()


def test_toy_preset_has_three_modes():
    model = build_model(load_config("toy-3mode"))
    assert model.spectrum.modes == ((1, 0, 0), (2, 0, 0), (3, 0, 0))


def test_warns_above_tc(tmp_path, caplog):
    cfg = load_config("toy-3mode", ["temperature_mode=ratio", "temperature=1.2", "cache=false"])
    with caplog.at_level(logging.WARNING):
        manifest = run(cfg, tmp_path / "out")
    assert manifest["warnings"]
    assert any("Tc" in r.message for r in caplog.records)


def _run_cli(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "toy-3mode", "--out", str(out), "--set", f"cache_dir={tmp_path / 'cache'}", *extra])
    return code, out


def test_cli_run_writes_all_artifacts(tmp_path):
    code, out = _run_cli(tmp_path, "a")
    assert code == 0
    for name in CSV_FILES + ("manifest.json", "config.txt"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["oracles"] and all(r["passed"] for r in manifest["oracles"])
    assert manifest["trajectory"]["clamp_events"] == 0
    assert set(manifest["wall_times_s"]) >= {"spectrum", "canonical", "rates", "propagation", "total"}
    assert manifest["config"] == load_config("toy-3mode", [f"cache_dir={tmp_path / 'cache'}"]).to_dict()
    steady = np.loadtxt(out / "steady_states.csv", delimiter=",", skiprows=1)
    assert steady.shape == (5, 4)


def test_cached_and_cold_runs_are_byte_identical(tmp_path):
    assert _run_cli(tmp_path, "cold", "--no-cache")[0] == 0
    assert _run_cli(tmp_path, "fill")[0] == 0
    code, warm = _run_cli(tmp_path, "warm")
    assert code == 0
    hits = json.loads((warm / "manifest.json").read_text())["cache_hits"]
    assert hits["rates"] and hits["overlap_x"]
    for name in CSV_FILES:
        assert (tmp_path / "cold" / name).read_bytes() == (warm / name).read_bytes()


def test_thread_count_is_byte_identical(tmp_path):
    assert _run_cli(tmp_path, "t1", "--no-cache")[0] == 0
    assert _run_cli(tmp_path, "t3", "--no-cache", "--threads", "3")[0] == 0
    for name in CSV_FILES:
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t3" / name).read_bytes()


def test_config_error_exit_code_and_no_output(tmp_path, capsys):
    out = tmp_path / "bad"
    code = main(["run", "toy-3mode", "--set", "trap_frequency_x_hz=-20", "--out", str(out)])
    assert code == 1
    assert not out.exists()
    assert "trap_frequency_x_hz" in capsys.readouterr().err


def test_resource_limit_exit_code(tmp_path):
    code = main(["run", "paper-n200", "--set", "max_modes=100", "--no-cache", "--out", str(tmp_path / "r")])
    assert code == 3
    assert not (tmp_path / "r").exists()


def test_numeric_error_exit_code(tmp_path):
    # a = 0 freezes the chain: no unique steady state
    code = main(["run", "toy-3mode", "--set", "scattering_length=0", "--no-cache", "--out", str(tmp_path / "z")])
    assert code == 2
    assert not (tmp_path / "z").exists()


def test_compare_steady_balanced_toy(tmp_path):
    code = main(["compare-steady", "toy-3mode", "--set", "rate_mode=balanced", "--no-cache", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "steady_comparison.json").read_text())
    assert report["a_vs_a_half"]["product"] == 0.0
    for tv in report["runs"]["a"]["total_variation"].values():
        assert tv < 1e-6


def test_oracle_suite_command(capsys):
    assert main(["oracle-suite"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_cache_rejects_foreign_or_stale_files(tmp_path):
    path = tmp_path / "blob.bin"
    write_blob(path, "rates", "k1", {"x": np.arange(3.0)}, {"mode": "physical"})
    arrays, meta = read_blob(path, "rates", "k1")
    assert np.array_equal(arrays["x"], np.arange(3.0)) and meta == {"mode": "physical"}
    assert read_blob(path, "rates", "k2") is None
    assert read_blob(path, "overlap", "k1") is None
    data = bytearray(path.read_bytes())
    data[len(MAGIC)] = FORMAT_VERSION + 1
    path.write_bytes(bytes(data))
    assert read_blob(path, "rates", "k1") is None
    path.write_bytes(b"garbage")
    assert read_blob(path, "rates", "k1") is None
    assert read_blob(tmp_path / "missing.bin", "rates", "k1") is None


def test_disabled_cache_never_writes(tmp_path):
    cache = RunCache(tmp_path / "c", enabled=False)
    build_model(load_config("toy-3mode"), cache)
    assert not (tmp_path / "c").exists()
    assert cache.hits == {}


def test_presets_are_valid():
    for name in PRESETS:
        assert isinstance(load_config(name), RunConfig)
