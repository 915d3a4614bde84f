import csv
import io
import json
import math

import numpy as np
import pytest

from adaptive_transfer.atl import AtlConfig
from adaptive_transfer.cli import main
from adaptive_transfer.distributions import save_spec, setting1
from adaptive_transfer.experiment import (
    ExperimentConfig,
    default_atl_config,
    format_table,
    run_experiment,
    stream,
    worker_count,
)
from adaptive_transfer.trees import TreeSearchStrategy

FAST = AtlConfig(L_values=(0, 1, 2), tree_strategy=TreeSearchStrategy.monte_carlo(5), grid_size=6)
BAYES_RISK_S1 = 0.5 - 1 / math.pi


def small_config(**kw):
    base = dict(spec=setting1(), n_P_list=(0, 30), n_Q=20, n_test=200, repetitions=3, atl=FAST,
                methods=("atl", "pooled"), master_seed=11, setting="s1")
    return ExperimentConfig(**{**base, **kw})


@pytest.fixture(scope="module")
def small_run():
    return run_experiment(small_config(), workers=1)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(repetitions=0), dict(n_test=0), dict(n_Q=1), dict(methods=("magic",)),
                                    dict(n_P_list=()), dict(n_P_list=(-1,)), dict(master_seed=-1),
                                    dict(master_seed=2**64)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            small_config(**kw)

    def test_default_atl(self):
        cfg = default_atl_config()
        assert cfg.L_values == (0, 1, 2)
        assert cfg.tree_strategy == TreeSearchStrategy.monte_carlo(100)

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("ATL_THREADS", "3")
        assert worker_count() == 3
        assert worker_count(2) == 2
        monkeypatch.setenv("ATL_THREADS", "x")
        with pytest.raises(ValueError):
            worker_count()


class TestRunExperiment:
    def test_aggregates_match_recomputation(self, small_run):
        for c in small_run.cells:
            if not c.available:
                continue
            e = np.array(c.errors)
            assert len(e) == 3 and np.all((e >= 0) & (e <= 1))
            assert c.mean_error_pct == pytest.approx(100 * sum(c.errors) / 3)
            sd = math.sqrt(sum((v - e.mean()) ** 2 for v in c.errors) / 2)
            assert c.std_error_pct == pytest.approx(100 * sd / math.sqrt(3))

    def test_pooled_without_source_is_na(self, small_run):
        c = small_run.cell("s1", "pooled", 0)
        assert not c.available and c.flagged
        rows = list(csv.DictReader(io.StringIO(small_run.to_csv())))
        row = next(r for r in rows if r["method"] == "pooled" and r["n_P"] == "0")
        assert row["mean_error_pct"] == "NA" and row["std_error_pct"] == "NA"
        assert list(rows[0]) == ["setting", "method", "n_P", "mean_error_pct", "std_error_pct"]
        assert "NA (NA)" in format_table(small_run)

    def test_earlier_repetitions_unchanged_by_count(self, small_run):
        longer = run_experiment(small_config(repetitions=4), workers=1)
        for c in small_run.cells:
            assert longer.cell(c.setting, c.method, c.n_P).errors[:3] == c.errors

    def test_workers_do_not_change_output(self, small_run):
        assert run_experiment(small_config(), workers=2).to_csv() == small_run.to_csv()

    def test_oracle_short_circuit(self):
        res = run_experiment(small_config(n_P_list=(0,), n_test=20_000, repetitions=1, methods=("oracle",)), workers=1)
        p = res.cell("s1", "oracle", 0).errors[0]
        assert abs(p - BAYES_RISK_S1) <= 3 * math.sqrt(p * (1 - p) / 20_000)

    def test_streams_distinct(self):
        draws = {tuple(stream(0, *key).random(3)) for key in [(1, 0, 0), (1, 0, 1), (1, 1, 0), (2, 0, 0)]}
        assert len(draws) == 4


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_simulate_fit_evaluate(self, tmp_path, capsys):
        src, tgt, model = tmp_path / "p.csv", tmp_path / "q.csv", tmp_path / "m.json"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(FAST.to_dict()))
        assert run_cli(capsys, "simulate", "--spec", "setting1", "--which", "P", "--n", "60", "--seed", "1",
                       "--out", str(src))[0] == 0
        code, out, _ = run_cli(capsys, "simulate", "--spec", "setting1", "--which", "Q", "--n", "40",
                               "--out", str(tgt))
        assert code == 0 and json.loads(out)["origin"] == "Q"
        code, out, _ = run_cli(capsys, "fit", "--source", str(src), "--target", str(tgt), "--config", str(cfg),
                               "--model-out", str(model))
        assert code == 0 and json.loads(out)["family_size"] == 6 * 3 + 6
        spec_file = save_spec(setting1(), tmp_path / "s.json")
        code, out, _ = run_cli(capsys, "evaluate", "--model", str(model), "--spec", str(spec_file),
                               "--mode", "quad", "--resolution", "64")
        rep = json.loads(out)
        assert code == 0 and rep["mode"] == "quad" and 0 <= rep["test_error"] <= 1
        code, out, _ = run_cli(capsys, "evaluate", "--model", str(model), "--spec", "setting1",
                               "--n-test", "500")
        assert code == 0 and json.loads(out)["n_test"] == 500

    def test_target_only_fit(self, tmp_path, capsys):
        tgt = tmp_path / "q.csv"
        run_cli(capsys, "simulate", "--spec", "setting2", "--which", "Q", "--n", "30", "--out", str(tgt))
        code, out, _ = run_cli(capsys, "fit", "--target", str(tgt), "--model-out", str(tmp_path / "m.json"))
        assert code == 0 and json.loads(out)["family_size"] == 32

    def test_rates(self, tmp_path, capsys):
        theta = tmp_path / "t.json"
        theta.write_text(json.dumps(dict(Delta=0.0, phi=1.0, Lstar=1, d_Q=2, gamma_Q=1, d_P=2, gamma_P=1,
                                         C_PQ=2, alpha=1, C_M=1, beta=1, C_S=1)))
        code, out, _ = run_cli(capsys, "rates", "--theta", str(theta), "--np", "10000", "--nq", "100")
        rep = json.loads(out)
        assert code == 0 and rep["A_lower"] == pytest.approx(1e-4 ** 0.4) and rep["D_term"] is None
        code, out, _ = run_cli(capsys, "rates", "--theta", str(theta), "--np", "0", "--nq", "100",
                               "--delta", "0.1")
        assert code == 0 and json.loads(out)["A_upper"] == "inf"

    def test_check_assumptions(self, tmp_path, capsys):
        theta = tmp_path / "t.json"
        theta.write_text(json.dumps(dict(Delta=0.0, phi=1.0, Lstar=1, d_Q=2, gamma_Q=1, d_P=2, gamma_P=1,
                                         C_PQ=8, alpha=1, C_M=2, beta=1, C_S=7)))
        code, out, _ = run_cli(capsys, "check-assumptions", "--spec", "setting1", "--theta", str(theta),
                               "--mc-n", "300")
        rep = json.loads(out)
        assert code == 0
        assert rep["margin"]["passed"] and rep["smoothness"]["Q"]["passed"]
        assert {"checks", "parameters", "passed"} <= set(rep["tail"]["target"])

    def test_reproduce_table1(self, tmp_path, capsys, monkeypatch):
        import adaptive_transfer.experiment as exp

        monkeypatch.setattr(exp, "default_atl_config", lambda: FAST)
        code, out, _ = run_cli(capsys, "reproduce-table1", "--out", str(tmp_path), "--repetitions", "1",
                               "--workers", "1")
        assert code == 0 and "NA (NA)" in out
        rows = (tmp_path / "table1.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 10

    def test_validation_errors_exit_2(self, tmp_path, capsys):
        assert run_cli(capsys, "simulate", "--spec", str(tmp_path / "none.json"), "--which", "P", "--n", "5",
                       "--out", str(tmp_path / "x.csv"))[0] == 2
        assert run_cli(capsys, "simulate", "--spec", "setting1", "--which", "P", "--n", "-5",
                       "--out", str(tmp_path / "x.csv"))[0] == 2
        bad = tmp_path / "t.json"
        bad.write_text(json.dumps({"phi": 0.0}))
        code, _, err = run_cli(capsys, "rates", "--theta", str(bad), "--np", "1", "--nq", "1")
        assert code == 2 and err.startswith("error:")

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        model = tmp_path / "m.json"
        model.write_text(json.dumps({"data": {}}))
        code, out, _ = run_cli(capsys, "evaluate", "--model", str(model), "--spec", "setting1")
        assert code == 1 and out == ""
