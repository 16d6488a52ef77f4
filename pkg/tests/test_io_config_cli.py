import csv
import json
import math

import numpy as np
import pytest

from roughstab import io as rpio
from roughstab.cli import main
from roughstab.config import KEYS, config_hash, load_raw, noise_spec, parse_text, resolve
from roughstab.errors import ConfigError, InputError

CONTRACTION = """\
# linear contraction, no noise coupling
problem.d = 1
problem.m = 1
problem.A = -1
problem.g = zero
noise.t1 = 1
run.horizons = 2, 4, 6
run.ball_radius = 1.5
run.ensemble = 2
run.gamma = 1.0
run.scheme = exponential
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- io

@pytest.mark.parametrize("encoding", ["decimal", "hex"])
def test_text_round_trip_is_exact(fbm2, encoding):
    back = rpio.loads_text(rpio.dumps_text(fbm2, encoding))
    assert np.array_equal(back.times, fbm2.times)
    assert np.array_equal(back.first_level, fbm2.first_level)
    assert np.array_equal(back.second_level, fbm2.second_level)
    assert back.p == fbm2.p
    assert back.meta["seed"] == fbm2.meta["seed"]


def test_json_round_trip_is_exact(fbm1):
    back = rpio.from_json(rpio.to_json(fbm1))
    assert np.array_equal(back.first_level, fbm1.first_level)
    assert np.array_equal(back.second_level, fbm1.second_level)


def test_save_load_by_extension(tmp_path, fbm2):
    for name in ("a.txt", "b.json"):
        rpio.save(fbm2, tmp_path / name, "hex")
        back = rpio.load(tmp_path / name)
        assert np.array_equal(back.second_level, fbm2.second_level)


def test_malformed_text_rejected(fbm1):
    text = rpio.dumps_text(fbm1)
    with pytest.raises(InputError):
        rpio.loads_text(text.split("\n", 1)[1])
    with pytest.raises(InputError):
        rpio.loads_text("\n".join(text.splitlines()[:-1]))
    with pytest.raises(InputError):
        rpio.dumps_text(fbm1, "base64")
    with pytest.raises(InputError):
        rpio.from_json(json.dumps({"header": {"format": "other"}}))


# ---------------------------------------------------------------- config

def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as info:
        parse_text("noise.hurts = 0.4\n")
    assert "noise.hurst" in str(info.value)


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("noise.p = 2.5\nnoise.p = 2.6\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_text("noise.p 2.5\n")


def test_resolve_defaults_and_overrides():
    raw = parse_text("problem.d = 2\nproblem.A = -1,0;0,-2\nrun.y0 = 3\n")
    cfg = resolve(raw, seeds=[4, 5], tol=["singleton=1e-3"])
    assert set(cfg) == set(KEYS)
    assert cfg["run.y0"] == [3.0, 3.0]
    assert cfg["run.seeds"] == [4, 5]
    assert cfg["tol.singleton"] == 1e-3
    assert cfg["noise.p"] == 2.5


@pytest.mark.parametrize("text", [
    "problem.d = 2\n",
    "problem.A = 1,2\n",
    "noise.p = abc\n",
    "run.scheme = implicit\n",
    "run.seeds = -1\n",
])
def test_bad_values_rejected(text):
    with pytest.raises(ConfigError):
        resolve(parse_text(text))


def test_bad_tol_override():
    with pytest.raises(ConfigError):
        resolve({}, tol=["divergence"])
    with pytest.raises(ConfigError):
        resolve({}, tol=["nonsense=1"])


def test_config_hash_is_stable():
    a = resolve({}, seeds=[1])
    b = resolve({}, seeds=[1])
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(resolve({}, seeds=[2]))


def test_noise_spec_requires_dividing_step():
    cfg = resolve(parse_text("noise.dt = 0.3\n"))
    with pytest.raises(ConfigError):
        noise_spec(cfg, 1)


def test_load_raw_accepts_json_and_reports(tmp_path):
    path = write(tmp_path, "c.json", json.dumps({"noise.p": 2.4}))
    assert load_raw(path) == {"noise.p": 2.4}
    rep = write(tmp_path, "r.json", json.dumps({"config": {"noise.p": 2.3}, "results": {}}))
    assert load_raw(rep) == {"noise.p": 2.3}
    with pytest.raises(ConfigError):
        load_raw(write(tmp_path, "bad.json", json.dumps({"noise.q": 1})))
    with pytest.raises(ConfigError):
        load_raw(str(tmp_path / "missing.cfg"))


# ---------------------------------------------------------------- cli

def test_cli_requires_seed(tmp_path):
    assert main(["sample", "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_cli_refuses_non_empty_out(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["sample", "--seed", "1", "--out", str(out)]) == 2
    assert main(["sample", "--seed", "1", "--out", str(out), "--force"]) == 0


def test_cli_bad_config_exits_2(tmp_path):
    cfg = write(tmp_path, "c.cfg", "noise.hurts = 0.4\n")
    assert main(["sample", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("command", ["sample", "lift", "norms", "greedy", "solve", "forward"])
def test_cli_commands_write_report(tmp_path, command):
    cfg = write(tmp_path, "c.cfg", "problem.g = sin\nproblem.g_scale = 0.2\nnoise.dt = 0.0625\n"
                                   "run.n_forward = 2\nrun.gamma = 2.0\n")
    out = tmp_path / command
    assert main([command, "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["command"] == command
    assert report["config_hash"] == config_hash(report["config"])
    for name in report["files"]:
        assert (out / name).exists()


def test_cli_lift_file_loads(tmp_path):
    out = tmp_path / "o"
    assert main(["lift", "--seed", "9", "--out", str(out)]) == 0
    rp = rpio.load(out / "lift_seed9.txt")
    assert rp.meta["seed"] == 9 and len(rp) == 33


def test_validate_reports_constants(tmp_path, caplog):
    cfg = write(tmp_path, "c.cfg", "noise.hurst = 0.6\n")
    out = tmp_path / "o"
    assert main(["validate", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    derived = report["results"]["derived"]
    assert derived["C_p"] == pytest.approx(7.725023958872576, rel=1e-15)
    assert derived["gamma"] == "inf"
    notes = " ".join(report["results"]["notes"])
    assert "H=0.6" in notes and "C_g = 0" in notes
    assert "H=0.6" in caplog.text


def test_criterion_without_noise_coupling(tmp_path):
    cfg = write(tmp_path, "c.cfg", "problem.f = sin\nproblem.f_scale = 0.3\nrun.gamma = 1.0\n")
    out = tmp_path / "o"
    assert main(["criterion", "--config", cfg, "--seed", "1", "--out", str(out)]) == 0
    res = json.loads((out / "report.json").read_text())["results"]
    p = res["params"]
    for kind in ("theorem", "general", "linear"):
        assert res["margins"][kind] == p["lambda_A"] - p["C_A"] * p["C_f"]
    rows = read_csv(out / "criterion.csv")
    assert rows[0] == ["kind", "margin", "satisfied"]


def test_pullback_contraction_diameters(tmp_path):
    cfg = write(tmp_path, "c.cfg", CONTRACTION)
    out = tmp_path / "o"
    assert main(["pullback", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    rows = read_csv(out / "pullback.csv")[1:]
    for _, h, diam, _, _ in rows:
        assert float(diam) == pytest.approx(2 * 1.5 * math.exp(-float(h)), rel=1e-8)


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "c.cfg", CONTRACTION)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["pullback", "--config", cfg, "--seed", "5", "--out", str(a), "--no-timestamp"]) == 0
    assert main(["pullback", "--config", cfg, "--seed", "5", "--out", str(b), "--no-timestamp"]) == 0
    assert main(["pullback", "--config", str(a / "report.json"), "--out", str(c), "--no-timestamp"]) == 0
    for name in ("report.json", "pullback.csv", "pullback_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_drift_command(tmp_path):
    cfg = write(tmp_path, "c.cfg", "problem.f = sin\nproblem.f_scale = 0.1\nproblem.f_shift = 0.5\n"
                                   "problem.g = cos\nrun.horizons = 18\nrun.cg_sweep = 0.2, 0.1\n")
    out = tmp_path / "o"
    assert main(["drift", "--config", cfg, "--seed", "2", "--out", str(out)]) == 0
    rows = read_csv(out / "drift.csv")[1:]
    assert [float(r[1]) for r in rows] == [0.0, 0.2, 0.1]
    assert float(rows[0][2]) <= 1e-6
