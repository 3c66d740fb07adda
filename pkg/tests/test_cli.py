import json
import shutil
import subprocess
import sys

import jsonschema
import pytest

from inflap.cli import main
from inflap.config import load_config
from inflap.exceptions import ConfigError
from inflap.io import load_schema
from oracles import BESSEL_J01_SQ, L_SHAPE_R1, uniform_disk_w1


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def load(path, schema):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, load_schema(schema))
    return doc


def test_solve_disk(tmp_path, capsys):
    code, out, err = run(["solve", "--shape", "disk", "--h", "0.02", "--p", "2",
                          "--out", str(tmp_path)], capsys)
    assert code == 0, err
    doc = load(tmp_path / "eigenpair_p2.json", "eigenpair")
    assert doc["lambda"] == pytest.approx(BESSEL_J01_SQ, rel=0.02)
    assert doc["converged"] and doc["kind"] == "eigenpair"
    assert abs(doc["duality"]["primal_value"] + 0.5) <= 1e-7
    header = (tmp_path / "field_p2.csv").read_text().splitlines()[0]
    assert header == "x,y,u"
    assert (tmp_path / "field_p2.svg").read_text().startswith("<svg")
    assert (tmp_path / "sigma_p2.csv").read_text().startswith("x,y,vx,vy")


def test_solve_rejects_small_p(tmp_path, capsys):
    code, _, err = run(["solve", "--p", "1.5", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "p out of supported range [2,256]" in err
    assert len(err.strip().splitlines()) == 1


def test_solve_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(["solve", "--shape", "rectangle", "--h", "0.125", "--p", "2",
                        "--out", str(blocker / "sub")], capsys)
    assert code == 1
    assert "cannot write to output directory" in err


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[solver]\nmax_iters = 1\ngrad_tol = 1e-14\n")
    code, out, _ = run(["solve", "--config", str(cfg), "--shape", "rectangle", "--h", "0.125",
                        "--p", "4", "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    doc = load(tmp_path / "o" / "eigenpair_p4.json", "eigenpair")
    assert doc["converged"] is False


def test_study_square(tmp_path, capsys):
    code, out, _ = run(["study", "--shape", "square", "--h", "0.0156",
                        "--p-list", "2,4,8,16,32,64,128", "--out", str(tmp_path)], capsys)
    assert code in (0, 3)
    verdict = load(tmp_path / "verdict.json", "verdict")
    sweep = load(tmp_path / "sweep.json", "sweep")
    checks = {c["name"]: c for c in verdict["checks"]}
    assert checks["inradius_extrapolation"]["passed"]
    assert verdict["lambda_inf_target"] == pytest.approx(2.0, abs=0.1)
    assert code == (0 if verdict["passed"] else 3)
    assert len(sweep["records"]) == 7
    assert (tmp_path / "sweep.csv").read_text().startswith("p,lambda_p,root,")
    assert (tmp_path / "panel.svg").exists()

    code2, out2, _ = run(["report", str(tmp_path / "sweep.json"), "--out",
                          str(tmp_path / "again")], capsys)
    assert code2 == code
    assert load(tmp_path / "again" / "verdict.json", "verdict") == verdict


def test_study_l_shape_reports_inradius(tmp_path, capsys):
    code, _, _ = run(["study", "--shape", "l_shape", "--h", "0.0625", "--p-list", "2,4,8",
                      "--formats", "json", "--out", str(tmp_path)], capsys)
    assert code in (0, 3)
    verdict = load(tmp_path / "verdict.json", "verdict")
    assert abs(verdict["R1"] - L_SHAPE_R1) <= 0.0625
    assert not (tmp_path / "sweep.csv").exists()


def test_study_too_coarse(tmp_path, capsys):
    code, _, err = run(["study", "--shape", "disk", "--h", "0.6", "--out", str(tmp_path)], capsys)
    assert code == 1 and err.startswith("inflap: error:")


def test_transport_uniform_disk(tmp_path, capsys):
    code, out, _ = run(["transport", "--shape", "disk", "--h", "0.03125", "--uniform",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "transport.json", "transport")
    assert abs(doc["value"] - uniform_disk_w1()) <= 0.03125
    assert doc["agreement"]["passed"]
    assert doc["lp"]["certificate"]["ok"]
    assert (tmp_path / "plan.csv").read_text().startswith("xs,ys,xt,yt,mass")


def test_transport_point_mass(tmp_path, capsys):
    code, out, _ = run(["transport", "--shape", "square", "--h", "0.0625", "--point", "0.5,0.5",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "transport.json", "transport")
    assert doc["value"] == pytest.approx(0.5, abs=1e-12)
    assert doc["agreement"]["passed"]


def test_transport_from_eigen(tmp_path, capsys):
    code, _, _ = run(["transport", "--shape", "square", "--h", "0.0625", "--from-eigen", "8",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = load(tmp_path / "transport.json", "transport")
    assert doc["agreement"]["passed"]


def test_transport_fixed_marginals(tmp_path, capsys):
    src = tmp_path / "src.csv"
    src.write_text("x,y,weight\n0.5,0.5,1.0\n")
    good = tmp_path / "good.csv"
    good.write_text("x,y,weight\n0,0.5,0.5\n1,0.5,0.5\n")
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,weight\n0,0.5,0.5\n1,0.5,0.7\n")
    base = ["transport", "--shape", "square", "--h", "0.125", "--source", str(src)]
    code, _, _ = run(base + ["--target-marginal", str(good), "--out", str(tmp_path / "g")], capsys)
    assert code == 0
    assert load(tmp_path / "g" / "transport.json", "transport")["value"] == pytest.approx(0.5)
    code, _, err = run(base + ["--target-marginal", str(bad), "--out", str(tmp_path / "b")],
                       capsys)
    assert code == 1 and "InfeasibleMarginals" in err


def test_transport_unresolvable_source(tmp_path, capsys):
    code, _, err = run(["transport", "--shape", "square", "--h", "0.125",
                        "--source", str(tmp_path / "missing.csv"), "--out", str(tmp_path)], capsys)
    assert code == 1 and "cannot read source" in err
    code, _, err = run(["transport", "--shape", "square", "--h", "0.125", "--point", "3,3",
                        "--out", str(tmp_path)], capsys)
    assert code == 1


def test_usage_errors(tmp_path, capsys):
    assert run(["bogus"], capsys)[0] == 1
    assert run(["solve", "--shape", "hexagon", "--out", str(tmp_path)], capsys)[0] == 1
    assert run(["solve", "--formats", "pdf", "--out", str(tmp_path)], capsys)[0] == 1
    assert run(["report", str(tmp_path / "nope.json")], capsys)[0] == 1
    (tmp_path / "x.json").write_text("{\"kind\": \"sweep\"}")
    assert run(["report", str(tmp_path / "x.json")], capsys)[0] == 1


def test_config_file_and_environment(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[domain]\nshape = rectangle\ncorner_max = 2, 1\n\n[run]\nh = 0.125\np = 4\n\n"
                   "[outputs]\ndir = from_file\nformats = json\n")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("INFLAP_OUT", str(tmp_path / "from_env"))
    code, _, _ = run(["solve", "--config", str(cfg)], capsys)
    assert code == 0
    doc = load(tmp_path / "from_env" / "eigenpair_p4.json", "eigenpair")
    assert doc["shape"] == "rectangle" and doc["p"] == 4
    assert not (tmp_path / "from_env" / "field_p4.csv").exists()
    code, _, _ = run(["solve", "--config", str(cfg), "--out", str(tmp_path / "flag")], capsys)
    assert (tmp_path / "flag" / "eigenpair_p4.json").exists()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[domain]\nshape = disk\nsides = 3\n")
    with pytest.raises(ConfigError):
        load_config(bad, env={})
    bad.write_text("[mystery]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad, env={})
    with pytest.raises(ConfigError):
        load_config(None, {"p_list": "4,2"}, env={})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg", env={})
    cfg = load_config(None, {"shape": "square", "p_list": "2,8"}, env={})
    assert cfg.domain.shape == "rectangle" and cfg.p_list == (2.0, 8.0)
    assert cfg.solver.reproducible


@pytest.mark.skipif(shutil.which("inflap") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["inflap", "solve", "--shape", "rectangle", "--h", "0.125", "--p", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "inflap.cli", "solve", "--p", "1"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 1
