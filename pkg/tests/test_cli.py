import csv
import shutil
import subprocess
import sys

import numpy as np
import pytest

from odenet.checkpoint import load_checkpoint, save_checkpoint
from odenet.cli import main
from odenet.core import ODENetSpec, ParamPath
from odenet.data import make_rng


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_train_writes_metrics_and_checkpoint(tmp_path, configs, capsys):
    code, out, _ = run(["train", configs / "quick.cfg", "--out-dir", tmp_path, "-q"], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "metrics.csv")))
    assert len(rows) == 1 + 3
    assert rows[0][0] == "epoch" and [r[0] for r in rows[1:]] == ["1", "2", "3"]
    ck = load_checkpoint(tmp_path / "model.ckpt")
    assert ck.kind == "odenet" and ck.spec.L == 10


def test_train_rerun_is_byte_identical(tmp_path, configs, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["train", configs / "quick.cfg", "--out-dir", a, "-q"], capsys)[0] == 0
    assert run(["train", configs / "quick.cfg", "--out-dir", b, "-q"], capsys)[0] == 0
    for name in ("metrics.csv", "model.ckpt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_missing_key_exits_1(tmp_path, configs, capsys):
    text = (configs / "quick.cfg").read_text().replace("tau = 0.01\n", "")
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = run(["train", cfg, "--out-dir", tmp_path / "o"], capsys)
    assert code == 1 and "'tau'" in err and "[train]" in err


def test_divergence_exits_2(tmp_path, configs, capsys):
    text = (configs / "quick.cfg").read_text().replace("tau = 0.01", "tau = 1e12")
    cfg = tmp_path / "hot.cfg"
    cfg.write_text(text)
    code, _, err = run(["train", cfg, "--out-dir", tmp_path / "o", "-q"], capsys)
    assert code == 2 and "diverged" in err


def test_predict_zero_alpha_gives_zeros(tmp_path, capsys):
    spec = ODENetSpec(2, 1, [[1.0, 0.0]], 1.0, 4, "tanh")
    params = ParamPath(np.zeros((5, 1)), make_rng(0).standard_normal((5, 2, 2)), np.ones((5, 2)))
    save_checkpoint(tmp_path / "m.ckpt", spec, params)
    (tmp_path / "in.csv").write_text("x0,x1\n0.1,0.2\n-3,4\n")
    code, _, _ = run(["predict", tmp_path / "m.ckpt", tmp_path / "in.csv", tmp_path / "out.csv"], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "out.csv")))
    assert rows[0] == ["y0"] and [float(r[0]) for r in rows[1:]] == [0.0, 0.0]


def test_predict_matches_library_bitwise(tmp_path, configs, capsys):
    run(["train", configs / "quick.cfg", "--out-dir", tmp_path, "-q"], capsys)
    X = make_rng(1).random((7, 1))
    (tmp_path / "in.csv").write_text("x0\n" + "".join(f"{float(v)!r}\n" for v in X[:, 0]))
    assert run(["predict", tmp_path / "model.ckpt", tmp_path / "in.csv", tmp_path / "out.csv", "--task", "binary"], capsys)[0] == 0
    from odenet.forward import predict

    ck = load_checkpoint(tmp_path / "model.ckpt")
    expected = predict(ck.spec, ck.params, np.loadtxt(tmp_path / "in.csv", delimiter=",", skiprows=1, ndmin=2))
    rows = list(csv.reader(open(tmp_path / "out.csv")))
    assert rows[0] == ["y0", "label"]
    assert [float(r[0]) for r in rows[1:]] == list(expected[:, 0])


def test_predict_corrupt_checkpoint_exits_1(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + bytes(40))
    (tmp_path / "in.csv").write_text("x0\n1\n")
    code, _, err = run(["predict", tmp_path / "bad.ckpt", tmp_path / "in.csv", tmp_path / "o.csv"], capsys)
    assert code == 1 and "magic" in err


def test_gradcheck_pass_and_sabotage(configs, capsys):
    code, out, _ = run(["gradcheck", configs / "gradcheck.cfg"], capsys)
    assert code == 0 and "0 failed" in out and out.strip().endswith("PASS")
    code, out, _ = run(["gradcheck", configs / "gradcheck.cfg", "--sabotage"], capsys)
    assert code == 1 and "gamma[" in out and out.strip().endswith("FAIL")


def test_gradcheck_relu_reports_skips(configs, capsys):
    code, out, _ = run(["gradcheck", configs / "gradcheck_relu.cfg"], capsys)
    assert code == 0 and "skipped" in out


def test_construct_single_unit(tmp_path, configs, capsys):
    code, out, _ = run(["construct", configs / "single_unit.shallow", configs / "one.A", tmp_path / "r.ckpt"], capsys)
    assert code == 0
    err = float(out.strip().split()[-1])
    assert err <= 1e-10
    ck = load_checkpoint(tmp_path / "r.ckpt")
    assert ck.kind == "resnet" and ck.resnet.beta[0, 0, 0] == pytest.approx(2.0)


def test_construct_errors_exit_1(tmp_path, capsys):
    net = tmp_path / "z.shallow"
    net.write_text("shallow 2 2 1 tanh\n1 1\n1 0 0 0\n0 0\n")
    A = tmp_path / "eye.A"
    A.write_text("1 0\n0 1\n")
    code, _, err = run(["construct", net, A, tmp_path / "o.ckpt"], capsys)
    assert code == 1 and "row 2" in err
    # a 2 x 2 unit with det C < 0 is split into positive-determinant units
    net.write_text("shallow 2 2 1 tanh\n1 1\n0 1 1 0\n0 0\n")
    assert run(["construct", net, A, tmp_path / "o.ckpt"], capsys)[0] == 0
    # in one dimension nothing can flip the sign
    net.write_text("shallow 1 1 1 tanh\n1\n-1\n0\n")
    A.write_text("1\n")
    code, _, err = run(["construct", net, A, tmp_path / "o.ckpt"], capsys)
    assert code == 1 and "opposite signs" in err


def test_evaluate_knn(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[model]\nT = 1\nL = 2\n[train]\ntau = 0.1\nbatch_size = 10\nmax_epochs = 1\n"
                   "[data]\ndataset = circle\ntrain_size = 500\nval_size = 200\n")
    code, out, _ = run(["evaluate", cfg, "--method", "knn"], capsys)
    assert code == 0
    acc = float(out.split("accuracy")[1])
    assert 0.85 <= acc <= 1.0


def test_generate_and_csv_training(tmp_path, capsys):
    assert run(["generate", "circle", tmp_path / "c.csv", "--K", "40", "--seed", "3"], capsys)[0] == 0
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[model]\nT = 1\nL = 2\nA = 1 0\n[train]\ntau = 0.1\nbatch_size = 10\nmax_epochs = 2\n"
                   "[data]\ndataset = csv:c.csv\ntask = binary\n")
    assert run(["train", cfg, "--out-dir", tmp_path / "o", "-q"], capsys)[0] == 0


@pytest.mark.skipif(shutil.which("odenet") is None, reason="console script not installed")
def test_console_script_help():
    res = subprocess.run(["odenet", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gradcheck" in res.stdout


def test_module_entry_point_bad_command():
    res = subprocess.run([sys.executable, "-m", "odenet.cli", "bogus"], capture_output=True, text=True)
    assert res.returncode != 0
