import json
import re
import subprocess
import sys

import numpy as np
import pytest

from ralpde.cli import main, read_config
from ralpde.core import field_read


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def burgers_file(workdir):
    assert main(["generate", "--system", "burgers", "--out", "b.fld"]) == 0
    return workdir / "b.fld"


def test_generate_writes_field_truth_and_manifest(burgers_file, capsys):
    f = field_read(burgers_file)
    assert f.shape == (256, 101)
    truth = json.loads((burgers_file.parent / "b.truth.json").read_text())
    assert truth["terms"] == {"u*u_x": -1.0, "u_xx": 0.1}
    manifest = json.loads((burgers_file.parent / "b.manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["config"]["system"] == "burgers"
    assert {"version", "created", "outputs", "seed"} <= set(manifest)


def test_generate_missing_system_is_usage_error(workdir, capsys):
    assert main(["generate", "--out", "x.fld"]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["generate", "--system", "burgers", "--param", "nu=-1"],
    ["generate", "--system", "burgers", "--param", "bogus=1"],
    ["generate", "--system", "burgers", "--param", "nu"],
    ["generate", "--system", "heat", "--snr", "nan"],
    ["bench", "--sweep", "snr"],
    ["identify"],
    ["identify", "missing.fld"],
    [],
])
def test_validation_errors_exit_2(workdir, argv):
    assert main(argv) == 2


def test_whitenoise_generation(workdir):
    assert main(["generate", "--system", "whitenoise", "--sigma", "10", "--seed", "3",
                 "--param", "nx=200", "--param", "nt=100", "--out", "w.fld"]) == 0
    f = field_read(workdir / "w.fld")
    assert f.shape == (200, 100) and f.values.std() == pytest.approx(10, rel=0.05)


def test_whitenoise_default_grid_is_full_size(workdir):
    assert main(["generate", "--system", "whitenoise", "--sigma", "10", "--seed", "3",
                 "--out", "w.fld"]) == 0
    assert field_read(workdir / "w.fld").shape == (2000, 1000)


def test_identify_burgers(burgers_file, capsys):
    capsys.readouterr()
    assert main(["identify", str(burgers_file)]) == 0
    out = capsys.readouterr().out
    assert out.strip().splitlines()[-1].startswith("u_t = ")
    model = json.loads((burgers_file.parent / "b.model.json").read_text())
    coefs = model["coefficients"]
    assert set(coefs) == {"u*u_x", "u_xx"}
    assert coefs["u*u_x"] == pytest.approx(-1.0, rel=0.1) and coefs["u_xx"] == pytest.approx(0.1, rel=0.1)
    printed = {t: float(c.replace(" ", "")) for c, t in
               re.findall(r"([+-]?\s*[\d.]+(?:e[+-]?\d+)?)\*(u\*u_x|u_xx)\b", "+" + out.split("=", 1)[1])}
    assert printed["u*u_x"] == pytest.approx(-1.0, rel=0.05)
    assert printed["u_xx"] == pytest.approx(0.1, rel=0.05)
    manifest = json.loads((burgers_file.parent / "b.model.manifest.json").read_text())
    assert manifest["command"] == "identify"
    # the generator's manifest is left alone
    assert json.loads((burgers_file.parent / "b.manifest.json").read_text())["command"] == "generate"


def test_dotted_output_names(workdir):
    assert main(["generate", "--system", "heat", "--out", "run.v2.fld"]) == 0
    assert {"run.v2.truth.json", "run.v2.manifest.json"} <= {p.name for p in workdir.iterdir()}


def test_identify_stridge_same_support(burgers_file, workdir):
    assert main(["identify", "--method", "stridge", "--dtol", "2", str(burgers_file),
                 "--out", "s.json", "--design-csv", "d.csv"]) == 0
    model = json.loads((workdir / "s.json").read_text())
    assert set(model["coefficients"]) == {"u*u_x", "u_xx"} and model["method"] == "STRidge"
    header = (workdir / "d.csv").read_text().splitlines()[0].split(",")
    assert "u*u_x" in header


def test_identify_truncated_file_is_format_error(burgers_file, workdir, capsys):
    data = burgers_file.read_bytes()
    (workdir / "t.fld").write_bytes(data[: len(data) // 2])
    assert main(["identify", "t.fld"]) == 1
    assert "format error" in capsys.readouterr().err


def test_identify_bad_method_is_usage_error(burgers_file):
    assert main(["identify", str(burgers_file), "--method", "lars"]) == 2


def test_config_file_and_flag_precedence(workdir):
    (workdir / "run.cfg").write_text("# burgers run\nsystem = burgers\nout = cfg.fld\nparam = nt=30\n")
    assert main(["generate", "--config", "run.cfg"]) == 0
    assert field_read(workdir / "cfg.fld").shape == (256, 30)
    assert main(["generate", "--config", "run.cfg", "--out", "flag.fld", "--param", "nt=40"]) == 0
    assert field_read(workdir / "flag.fld").shape == (256, 40)


def test_unknown_config_key_is_usage_error(workdir):
    (workdir / "bad.cfg").write_text("system = burgers\ncolour = blue\n")
    assert main(["generate", "--config", "bad.cfg"]) == 2
    (workdir / "broken.cfg").write_text("just words\n")
    assert main(["generate", "--config", "broken.cfg"]) == 2
    assert main(["generate", "--config", "nope.cfg"]) == 2


def test_manifest_reruns_identically(burgers_file, workdir):
    manifest = burgers_file.parent / "b.manifest.json"
    cfg = read_config(manifest)
    assert cfg["system"] == "burgers"
    assert main(["generate", "--config", str(manifest), "--out", "again.fld"]) == 0
    assert (workdir / "again.fld").read_bytes() == burgers_file.read_bytes()


def test_differentiate_dumps_derivative_files(burgers_file, workdir):
    assert main(["differentiate", str(burgers_file), "--outdir", "d"]) == 0
    names = {p.name for p in (workdir / "d").iterdir()}
    assert {"u_smoothed.fld", "u_t.fld", "u_x.fld", "u_xx.fld", "u_xxx.fld"} <= names
    assert field_read(workdir / "d" / "u_xx.fld").shape == (256, 101)


def test_bench_snr_rerun_is_identical(workdir, capsys):
    argv = ["bench", "--sweep", "snr", "--system", "burgers", "--trials", "2", "--seed", "1",
            "--grid", "40,inf"]
    assert main(argv + ["--out", "a"]) == 0
    assert main(argv + ["--out", "b"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert (workdir / "a.svg").read_bytes() == (workdir / "b.svg").read_bytes()
    manifest = json.loads((workdir / "a.manifest.json").read_text())
    assert manifest["command"] == "bench" and manifest["seed"] == 1


def test_bench_samplesize_transport(workdir, capsys):
    assert main(["bench", "--sweep", "samplesize", "--system", "transport", "--grid", "1e2:1e4",
                 "--trials", "2", "--out", "ss"]) == 0
    summary = (workdir / "ss.csv").read_text().split("\n\n")[1].splitlines()[1:]
    eta = {float(r.split(",")[0]): float(r.split(",")[-1]) for r in summary}
    assert eta[1000.0] == 1.0 and eta[10000.0] == 1.0


def test_bench_whitenoise_small(workdir):
    assert main(["bench", "--sweep", "whitenoise", "--sigma", "10", "--trials", "1",
                 "--libraries", "1", "--methods", "RAL", "--param", "nx=60", "--param", "nt=40",
                 "--out", "wn"]) in (0, 2)


def test_module_entry_point(workdir):
    r = subprocess.run([sys.executable, "-m", "ralpde", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "ralpde" in r.stdout
    r = subprocess.run([sys.executable, "-m", "ralpde"], capture_output=True, text=True)
    assert r.returncode == 2
