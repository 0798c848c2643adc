import json
from pathlib import Path

import pytest

from nearcrit.cli import main, read_manifest
from nearcrit.config import ConfigError, apply_overrides, load_config

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


ORACLE = """
experiment = "oracle"
seed = 0
[lattice]
kind = "square-bond"
window = [0.0, 0.0, 2.0, 2.0]
[params]
event = "crossing"
exact = true
"""


def test_missing_seed(tmp_path, capsys):
    cfg = _write(tmp_path, ORACLE.replace("seed = 0", ""))
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "seed" in capsys.readouterr().err


def test_oracle_prints_exact_value(tmp_path, capsys):
    cfg = _write(tmp_path, ORACLE)
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "results.csv").read_text().splitlines()
    assert rows[0] == "event,probability,tiles,exact"
    assert rows[1] == "crossing,0.671875,12,43/64"


def test_oracle_too_many_tiles(tmp_path, capsys):
    cfg = _write(tmp_path, ORACLE.replace('"square-bond"', '"triangular-site"').replace("2.0, 2.0]", "4.0, 3.0]"))
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "too many tiles" in capsys.readouterr().err


DIST = """
experiment = "distinguish"
seed = 3
[lattice]
kind = "triangular-site"
mesh = 0.03125
window = [0.0, 0.0, 1.0, 1.0]
[fields.mu]
p = 0.5
[fields.lambda]
p = 0.5
[params]
domain = [0.0, 0.0, 1.0, 1.0]
n = 4
a = 0.5
replicates_means = 200
replicates_test = 50
"""


def test_distinguish_same_law_refuses(tmp_path, capsys):
    cfg = _write(tmp_path, DIST)
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "no detectable gap" in capsys.readouterr().err


def test_validation_errors_name_field(tmp_path):
    with pytest.raises(ConfigError, match="params.replicates"):
        load_config(_write(tmp_path, ORACLE), ["params.replicates=0"])
    with pytest.raises(ConfigError, match="experiment"):
        load_config(_write(tmp_path, ORACLE.replace('"oracle"', '"nope"')))
    bad_region = ORACLE + '[fields.x]\nspeed = 0.1\nregions = [{rect = [0.0, 0.0, 5.0, 5.0], value = 1.0}]\n'
    with pytest.raises(ConfigError, match="fields.x.regions"):
        load_config(_write(tmp_path, bad_region))
    with pytest.raises(ConfigError, match="override"):
        apply_overrides({}, ["novalue"])


def test_region_outside_lattice_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, ORACLE.replace("exact = true", "exact = true\nrect = [0.0, 0.0, 9.0, 9.0]"))
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_override_applies(tmp_path):
    c = load_config(_write(tmp_path, ORACLE), ["params.event=tile-blue", "params.tile=3", "seed=9"])
    assert c.params["event"] == "tile-blue" and c.params["tile"] == 3 and c.seed == 9


def test_underpowered_warns_but_succeeds(tmp_path):
    cfg = _write(tmp_path, """
experiment = "arms"
seed = 1
[lattice]
kind = "triangular-site"
half_width = 20.0
[params]
r = 1.0
radii = [16.0]
events = ["five-arm"]
replicates = 3
""")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "underpowered" in (tmp_path / "o" / "summary.txt").read_text()


@pytest.mark.parametrize("name", ["sample", "crossing", "gap", "charlen", "oracle"])
def test_outputs_byte_identical_across_workers(tmp_path, name):
    cfg = str(ROOT / "configs" / f"{name}.toml")
    ov = ["--override", "params.replicates=300"] if name != "sample" and name != "oracle" else []
    assert main(["--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1"] + ov) == 0
    assert main(["--config", cfg, "--out", str(tmp_path / "b"), "--workers", "3"] + ov) == 0
    for f in ("manifest.txt", "results.csv", "report.json", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_manifest_and_report_echo_seed(tmp_path):
    cfg = str(ROOT / "configs" / "alpha4.toml")
    ov = ["--override", "params.replicates=500", "--override", "lattice.half_width=34.0",
          "--override", "params.radii=[8.0, 16.0, 32.0]", "--override", "params.R0=32.0"]
    assert main(["--config", cfg, "--out", str(tmp_path / "o")] + ov) == 0
    man = read_manifest(tmp_path / "o" / "manifest.txt")
    assert man["seed"] == "11"
    assert "speed_factor" in man and "alpha4.r1.R32" in man
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["manifest"]["seed"] == 11
    assert float(man["speed_factor"]) == pytest.approx((1 / 32) ** 2 / float(man["alpha4.r1.R32"]))
