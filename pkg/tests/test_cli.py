import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from slopeqmle import dgp, qmle
from slopeqmle.cli import main
from slopeqmle.dgp import CovariateModel, Dataset, DgpSpec, ErrorModel, ModelParams
from slopeqmle.harness import skewed_mixture_covariates
from slopeqmle.links import PROBIT

SPEC = DgpSpec(CovariateModel.normal([0, 0], np.eye(2)), ErrorModel(), ModelParams(0.5, [1.0, -1.0]))


@pytest.fixture
def files(tmp_path):
    cfg = tmp_path / "dgp.ini"
    cfg.write_text(dgp.dump_spec(SPEC))
    data = tmp_path / "d.csv"
    dgp.sample(SPEC, 3000, 5).to_csv(data)
    mix = tmp_path / "mix.csv"
    dgp.sample(DgpSpec(skewed_mixture_covariates(), ErrorModel(), ModelParams(0.0, [1.0, 1.0])), 3000, 6).to_csv(mix)
    exp = tmp_path / "exp.ini"
    exp.write_text(
        dgp.dump_spec(SPEC)
        + "\n[experiment]\nmode = coverage\nlink = probit\nsample_sizes = 500, 2000\nreplications = 4\nseed = 9\n"
    )
    return dict(dgp=cfg, data=data, mix=mix, exp=exp, dir=tmp_path)


def _run(capsys, argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def _commands(f):
    return {
        "simulate": ["simulate", "--dgp", f["dgp"], "--n", 200, "--seed", 4],
        "fit": ["fit", "--data", f["data"], "--link", "probit"],
        "pseudo-true": ["pseudo-true", "--dgp", f["dgp"], "--link", "probit", "--grid-nodes", 64],
        "montecarlo": ["montecarlo", "--config", f["exp"]],
        "reweight": ["reweight", "--data", f["mix"], "--target", "normal", "--trim", 0.01],
        "battery": ["battery", "--grid-nodes", 64, "--n", 2000, "--seed", 3],
    }


@pytest.mark.parametrize("name", ["simulate", "fit", "pseudo-true", "montecarlo", "reweight", "battery"])
def test_each_command_byte_identical(capsys, files, name):
    argv = _commands(files)[name]
    rc1, out1, _ = _run(capsys, argv)
    rc2, out2, _ = _run(capsys, argv)
    assert rc1 == rc2 == 0
    assert out1 and out1 == out2


def test_subprocess_entry_point(files):
    argv = [sys.executable, "-m", "slopeqmle", "simulate", "--dgp", str(files["dgp"]), "--n", "50", "--seed", "1"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b
    assert a.decode() == dgp.sample(SPEC, 50, 1).to_csv()


def test_fit_output_matches_library(capsys, files):
    rc, out, _ = _run(capsys, ["fit", "--data", files["data"], "--link", "probit"])
    doc = json.loads(out)
    res = qmle.fit(Dataset.from_csv(files["data"]), PROBIT)
    assert rc == 0 and doc["converged"]
    assert_allclose(doc["theta_hat"], res.theta_hat.as_vector(), rtol=1e-15)
    assert_allclose(doc["se_sandwich"], res.se_sandwich, rtol=1e-15)


def test_fit_consumes_reweight_output(capsys, files):
    wpath = files["dir"] / "w.csv"
    rc, _, _ = _run(capsys, ["reweight", "--data", files["mix"], "--out", wpath])
    assert rc == 0
    rc, out, _ = _run(capsys, ["fit", "--data", files["mix"], "--link", "probit", "--weights", wpath])
    assert rc == 0
    weighted = json.loads(out)["theta_hat"]
    _, out, _ = _run(capsys, ["fit", "--data", files["mix"], "--link", "probit"])
    assert weighted != json.loads(out)["theta_hat"]


def test_pseudo_true_output(capsys, files):
    rc, out, _ = _run(capsys, ["pseudo-true", "--dgp", files["dgp"], "--link", "logistic"])
    doc = json.loads(out)
    assert rc == 0
    assert_allclose([doc["c_star"], doc["r_star"]], [1.0, 0.0], atol=1e-7)
    assert doc["psi_trace_csv"].startswith("c,")


def test_montecarlo_writes_outputs(capsys, files):
    exp = files["dir"] / "out.ini"
    exp.write_text(files["exp"].read_text() + f"\n[outputs]\ncsv = {files['dir'] / 'mc.csv'}\n")
    rc, out, _ = _run(capsys, ["montecarlo", "--config", exp])
    assert rc == 0
    assert len(json.loads(out)["written"]) == 3
    assert (files["dir"] / "mc.summary.csv").exists()


def test_separation_exits_two(capsys, tmp_path):
    x = np.random.default_rng(0).standard_normal((50, 1))
    path = tmp_path / "sep.csv"
    Dataset(np.where(x[:, 0] > 0, 1, -1), x).to_csv(path)
    rc, _, err = _run(capsys, ["fit", "--data", path, "--link", "logistic"])
    assert rc == 2 and "error" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["fit", "--data", "{data}", "--link", "cauchy"],
        ["fit", "--data", "{dir}/missing.csv", "--link", "probit"],
        ["fit", "--data", "{data}", "--link", "probit", "--init", "0,x,1"],
        ["montecarlo", "--config", "{dgp}"],
        ["simulate", "--dgp", "{dgp}"],
        ["nonsense"],
    ],
    ids=["link", "missing-file", "init", "no-experiment", "missing-arg", "subcommand"],
)
def test_config_errors_exit_one(capsys, files, argv):
    # argparse usage errors leave through SystemExit with the same code
    try:
        rc = main([a.format(**{k: str(v) for k, v in files.items()}) for a in argv])
    except SystemExit as exc:
        rc = exc.code
    capsys.readouterr()
    assert rc == 1


def test_weights_length_mismatch(capsys, files):
    wpath = files["dir"] / "w.csv"
    wpath.write_text("w\n1.0\n1.0\n")
    rc, _, _ = _run(capsys, ["fit", "--data", files["data"], "--link", "probit", "--weights", wpath])
    assert rc == 1
