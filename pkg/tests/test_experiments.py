import json
import math

import numpy as np
import pytest

from helsonlab import cli
from helsonlab import experiments as ex
from helsonlab.errors import DomainError, PreconditionError
from pathlib import Path

DATA = Path(__file__).parent / "data"


def small(**kw):
    base = dict(experiment="moment-decay", x_grid=[100.0, 1000.0, 10000.0], q_list=[0.0, 0.5, 1.0],
                replicas=200, seed=7)
    base.update(kw)
    return ex.ExperimentConfig(**base)


@pytest.mark.parametrize("kw", [
    {"experiment": "nope"},
    {"q_list": [0.95]},
    {"q_list": [-0.1]},
    {"x_grid": [1000.0, 100.0]},
    {"replicas": 99},
    {"seed": -1},
    {"seed": 2**64},
    {"format": "xml"},
    {"y_rule": "cube"},
    {"y_rule": "power:abc"},
    {"delta": 0.0},
])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        small(**kw)


def test_config_q_one_and_unknown_keys():
    assert small(q_list=[0.9, 1.0]).q_list == [0.9, 1.0]
    with pytest.raises(DomainError):
        ex.ExperimentConfig.from_dict({"experiment": "lemma13", "bogus": 1})


def test_config_json_round_trip(tmp_path):
    cfg = small()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ex.ExperimentConfig.from_json(str(p)) == cfg
    with pytest.raises(OSError, match="cannot read config"):
        ex.ExperimentConfig.from_json(str(tmp_path / "missing.json"))


def test_y_rules():
    x = 1e6
    lx = math.log(x)
    assert ex.y_of_x(x, "paper") == pytest.approx(math.exp(lx / math.log(lx) ** 2))
    assert ex.y_of_x(x, "sqrt") == pytest.approx(1000.0)
    assert ex.y_of_x(x, "power:0.25") == pytest.approx(x**0.25)
    assert ex.y_of_x(x, "fixed:31") == 31.0


def test_moment_estimate_rejects_bad_ci():
    with pytest.raises(ValueError):
        ex.MomentEstimate("q", 1.0, 0.5, 1.0, 1.1, 1.2, 100, 0, 0.1, "mean")
    with pytest.raises(ValueError):
        ex.MomentEstimate("q", 1.0, 0.5, -1.0, -1.1, 1.2, 100, 0, 0.1, "mean")


def test_control_variate_reduces_error():
    rng = np.random.default_rng(0)
    c = rng.exponential(size=5000)
    v = np.sqrt(c) + 0.05 * rng.standard_normal(5000)
    m, se = ex.control_variate_mean(v, c, 1.0)
    assert abs(m - math.sqrt(math.pi) / 2) <= 4 * se
    assert se < v.std(ddof=1) / math.sqrt(v.size)


def test_trend_fit_detects_slope():
    xs = np.array([1e3, 1e4, 1e5, 1e6])
    lll = np.log(np.log(np.log(xs)))
    est = np.exp(-0.2 * lll)
    fit = ex.trend_fit(xs, est, est * 1e-3)
    assert fit.slope == pytest.approx(-0.2, rel=1e-9) and fit.linear_preferred
    flat = ex.trend_fit(xs, np.ones(4), np.full(4, 0.01))
    assert not flat.linear_preferred


def test_empty_csv_is_header_only():
    assert ex.to_csv([]) == ",".join(ex.CSV_COLUMNS) + "\n"
    assert ex.from_csv(ex.to_csv([])) == []
    with pytest.raises(ValueError):
        ex.from_csv("a,b\n")


def test_csv_and_json_round_trip(tmp_path):
    cfg = small(x_grid=[100.0, 1000.0])
    r = ex.run(cfg)
    rows = ex.from_csv(ex.to_csv(r.estimates))
    assert rows == [e.row() for e in r.estimates]
    back = ex.records_from_json(ex.to_json(r))
    assert back == r.estimates
    doc = json.loads(ex.emit(small(x_grid=[100.0, 1000.0], format="json"), r, str(tmp_path / "o" / "r.json")))
    assert set(doc) == {"experiment", "config", "records", "checks", "extra"}
    assert (tmp_path / "o" / "r.json").exists()


def test_golden_moment_decay():
    r = ex.run(small())
    got = ex.from_csv(ex.to_csv(r.estimates))
    want = ex.from_csv((DATA / "moment_decay_small.csv").read_text())
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g[0] == w[0] and g[6:] == w[6:]
        assert np.allclose(g[1:6], w[1:6], rtol=1e-10, atol=0)


@pytest.mark.parametrize("experiment,kw", [
    ("moment-decay", dict(x_grid=[100.0, 5000.0], q_list=[0.5, 1.0])),
    ("lemma13", dict(y_grid=[50.0, 200.0], q_list=[0.5], dual_check=False)),
    ("lemma-budget", dict(x_grid=[1e4, 1e5], q_list=[0.5])),
])
def test_worker_count_does_not_change_output(experiment, kw):
    cfg = ex.ExperimentConfig(experiment, replicas=150, seed=11, chunk=16, **kw)
    texts = {w: ex.to_csv(ex.run(cfg, workers=w).estimates) for w in (1, 4, 8)}
    assert texts[1] == texts[4] == texts[8]


def test_worker_env(monkeypatch):
    from helsonlab.config import worker_count

    monkeypatch.setenv("HELSONLAB_WORKERS", "3")
    assert worker_count() == 3 and worker_count(5) == 5
    monkeypatch.delenv("HELSONLAB_WORKERS")
    assert worker_count() == 1


def test_lemma_budget_rejects_large_y():
    cfg = ex.ExperimentConfig("lemma-budget", x_grid=[100.0], y_rule="fixed:200", replicas=100)
    with pytest.raises(PreconditionError):
        ex.run(cfg)
    cfg = ex.ExperimentConfig("lemma-budget", x_grid=[100.0], y_rule="fixed:2", replicas=100)
    with pytest.raises(PreconditionError):
        ex.run(cfg)


def test_smooth_remainder():
    assert ex.smooth_remainder(1e6, 10, 0.0) == 1.0
    v = ex.smooth_remainder(1e6, 10, 1.0)
    assert v == pytest.approx(math.log(10) * math.exp(-6.0))


@pytest.mark.slow
def test_lemma_budget_ratio_stable_across_seeds():
    ratios = []
    for seed in (1, 2, 3):
        cfg = ex.ExperimentConfig("lemma-budget", x_grid=[1e6], q_list=[0.5], replicas=1000, seed=seed)
        rec = ex.run(cfg).extra["budget"][0]
        assert rec["lhs"] <= 10 * (rec["rhs1"] + rec["rhs2"])
        ratios.append(rec["ratio"])
    assert max(ratios) <= 2 * min(ratios)


# ------------------------------------------------------------------------ CLI


def test_cli_experiment_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli.main(["moment-decay", "--x-grid", "100,1000", "--q", "0,0.5,1", "--replicas", "200",
                     "--seed", "7", "--output", str(out)])
    err = capsys.readouterr().err
    assert code in (0, 1) and ("PASS" in err or "FAIL" in err)
    assert code == (0 if "FAIL" not in err else 1)
    assert out.read_text().startswith(",".join(ex.CSV_COLUMNS))


def test_cli_bad_input_exit_two(capsys):
    assert cli.main(["moment-decay", "--x-grid", "100", "--q", "0.95"]) == 2
    assert cli.main(["lemma-budget", "--x-grid", "100", "--y-rule", "fixed:200"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "moment-decay", "x_grid": [100.0], "q_list": [0.5, 1.0],
                             "replicas": 200, "seed": 3}))
    code = cli.main(["moment-decay", "--config", str(p), "--format", "json"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["config"]["seed"] == 3 and doc["experiment"] == "moment-decay"


@pytest.mark.parametrize("argv", [
    ["identities", "--seeds", "3", "--grid-points", "50"],
    ["count", "--x", "100000", "--y", "50"],
    ["count", "--x", "100000", "--y", "50", "--alpha", "0.8", "--H", "1000"],
    ["field", "--y", "100", "--tmax", "1"],
    ["integral", "--y", "31"],
    ["parseval", "--y", "31", "--ntrunc", "2000"],
    ["gmc", "--y", "100", "--replicas", "200"],
    ["cov-gap", "--y", "100,1000"],
    ["kahane", "--trials", "3", "--replicas", "2000"],
])
def test_cli_subcommands_pass(argv, capsys):
    assert cli.main(argv) == 0
    assert capsys.readouterr().out


def test_cli_workers_flag(capsys):
    args = ["--workers", "4", "moment-decay", "--x-grid", "100", "--q", "0.5", "--replicas", "100"]
    assert cli.main(args) == 0
    a = capsys.readouterr().out
    cli.main(args[2:])
    assert capsys.readouterr().out == a
