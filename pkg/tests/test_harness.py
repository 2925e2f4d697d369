import json

import numpy as np
import pytest

from zoblock.errors import AnalysisError, ConfigurationError
from zoblock.harness import (
    ExperimentConfig,
    check_as_tail,
    check_sample_complexity,
    fit_rate,
    read_summary,
    run_experiment,
)
from zoblock.harness.cli import main
from zoblock.harness.experiment import read_trace_csv
from zoblock.solver import Trace

SMALL = {
    "problem": {"name": "abs1d", "eta0": 0.2},
    "solver": {"eta": 0.2, "K": 10, "schedule": {"mode": "rate", "a": 0}, "residual_samples": 1000},
    "x0": [1.0],
    "replications": 2,
    "seed": 7,
}


def small(**kw):
    d = json.loads(json.dumps(SMALL))
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def test_trace_csv_layout(tmp_path):
    out = run_experiment(small(), tmp_path / "a")
    header, cols, rows = read_trace_csv(out / "traces" / "trace_K10_rep000.csv")
    assert header.startswith("# config_hash=") and "seed=7" in header
    assert tuple(cols) == Trace.CSV_COLUMNS
    assert len(rows) == 10 and [int(r[0]) for r in rows] == list(range(10))
    assert all(r[1] == "0" for r in rows)  # single block, 0-based id
    summary = read_summary(out)
    assert [r["seed"] for r in summary] == [7, 8] and all(r["status"] == "ok" for r in summary)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config_hash"] == small().config_hash()


def test_rerun_is_byte_identical(tmp_path):
    a = run_experiment(small(), tmp_path / "a")
    b = run_experiment(small(), tmp_path / "b")
    par = run_experiment(small(workers=2), tmp_path / "c")
    for name in ("trace_K10_rep000.csv", "trace_K10_rep001.csv"):
        body = (a / "traces" / name).read_bytes()
        assert (b / "traces" / name).read_bytes() == body
        # the config hash differs (workers is part of the config) but the body must not
        assert (par / "traces" / name).read_bytes().split(b"\n", 1)[1] == body.split(b"\n", 1)[1]


def test_seed_override_changes_trace(tmp_path):
    # abs1d away from 0 has an exact n=1 estimate, so use a quadratic
    cfg = small(problem={"name": "quad", "n": 2, "b": 2}, x0=None)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg.with_overrides(seed=99), tmp_path / "b")
    body = lambda d: (d / "traces" / "trace_K10_rep000.csv").read_text().split("\n", 2)[2]  # noqa: E731
    assert body(a) != body(b)


@pytest.mark.parametrize("bad", [
    {"problems": {}},
    {"solver": {"eta": 0.2, "K": 5, "stepsize": 1}},
    {"analysis": {"slope": True}},
    {"replications": 0},
    {"seeds": [1, 2, 3]},
    {"x0": [1.0, 2.0]},
    {"solver": {"eta": 0.5, "K": 5}},
])
def test_config_rejections(bad):
    d = json.loads(json.dumps(SMALL))
    d.update(bad)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(d)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigurationError):
        run_experiment(small(), blocker / "sub")


def test_fit_rate_synthetic():
    rng = np.random.default_rng(0)
    Ks = [64, 128, 256, 512, 1024]
    exact = {K: list(3.0 / K * rng.uniform(0.9, 1.1, size=20)) for K in Ks}
    fit = fit_rate(exact)
    assert fit.slope == pytest.approx(-1.0, abs=0.05) and fit.ci[0] <= -1 + 0.1 and fit.decays
    flat = {K: list(rng.uniform(0.5, 1.5, size=20)) for K in Ks}
    assert not fit_rate(flat).decays
    with pytest.raises(AnalysisError):
        fit_rate({K: exact[K] for K in Ks[:3]})
    with pytest.raises(AnalysisError):
        fit_rate({K: exact[K][:5] for K in Ks})


def _cps(curve, evals):
    return {k: (e, v, 0.0, 0.0) for k, (e, v) in enumerate(zip(evals, curve))}


def test_sample_complexity_table():
    ks = np.arange(1, 200)
    evals = ks**2
    curve = 1.0 / np.sqrt(evals)  # evaluations ~ eps^-2
    table = check_sample_complexity([_cps(curve, evals)], [0.1, 0.05, 1e-6, 10.0])
    rows = table["rows"]
    assert rows[0]["first_evals"] == 100 and rows[1]["first_evals"] == 400
    assert table["ratios"][0] == pytest.approx(4.0)
    assert rows[2]["censored"] and table["ratios"][1] is None
    assert rows[3]["first_k"] == 0  # trivially met at the start
    with pytest.raises(AnalysisError):
        check_sample_complexity([], [0.1])
    with pytest.raises(AnalysisError):
        check_sample_complexity([_cps(curve, evals), _cps(curve[:5], evals[:5])], [0.1])


def test_as_tail_synthetic():
    ks = list(range(0, 301, 10))
    decaying = {k: (0, 1.0 / (1 + k), 0, 0) for k in ks}
    assert check_as_tail(decaying)["passed"]
    flat = {k: (0, 0.3, 0, 0) for k in ks}
    assert not check_as_tail(flat)["passed"]
    spiky = dict(decaying)
    spiky[290] = (0, 5.0, 0, 0)
    assert not check_as_tail(spiky)["passed"]
    with pytest.raises(AnalysisError):
        check_as_tail({0: (0, 1, 0, 0), 5: (0, 1, 0, 0)})


def test_cli_run_and_rate(tmp_path, capsys):
    cfg = dict(SMALL, horizons=[4, 8, 16, 32], replications=10, analysis={"rate_fit": True, "bootstrap_resamples": 50})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "rate_fit.json").exists()
    assert main(["rate", str(tmp_path / "r"), "--resamples", "50"]) == 0
    assert '"slope"' in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dict(SMALL, colour="red")))
    assert main(["run", "--config", str(path)]) == 2
    assert "unknown keys" in capsys.readouterr().err
    path.write_text("{not json")
    assert main(["run", "--config", str(path)]) == 2


def test_cli_verify_and_decompose(tmp_path, capsys):
    cfg = {"problem": {"name": "quad", "n": 4, "b": 2, "eta0": 0.1, "noise": {"kind": "affine", "nu": 0.1}},
           "solver": {"eta": 0.1, "K": 12, "schedule": {"mode": "rate", "a": 0}}}
    path = tmp_path / "q.json"
    path.write_text(json.dumps(cfg))
    assert main(["verify", "--config", str(path), "--samples", "2000", "--inequality-instances", "200"]) == 0
    assert main(["decompose", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4 and "theta" in out
