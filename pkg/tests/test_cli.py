"""CLI: config parsing, subcommand behaviour, exit codes, output schemas."""

import json

import pytest

from gibbslab.cli import main, parse_config, parse_distribution
from gibbslab.errors import GibbsLabError
from gibbslab.models import KFactor, SpanningTree
from gibbslab.weights import Censored, Exponential, Uniform


class TestDistributionParsing:
    def test_forms(self):
        assert parse_distribution("exp:1") == Exponential(1.0)
        assert parse_distribution("exp:2.5") == Exponential(2.5)
        assert parse_distribution("uniform:0:1") == Uniform(0.0, 1.0)
        assert parse_distribution("censored:exp:1:0.5") == Censored(
            Exponential(1.0), 0.5)
        assert parse_distribution("censored:uniform:0:2:0.8") == Censored(
            Uniform(0.0, 2.0), 0.8)

    def test_bad_input(self):
        with pytest.raises(GibbsLabError):
            parse_distribution("gamma:1")
        with pytest.raises(GibbsLabError):
            parse_distribution("uniform:1")


class TestParseConfig:
    def test_minimal_flags(self):
        spec = parse_config(observable="logz", model="spanning-tree", n=400,
                            dist="exp:1", beta=1.0, replicates=1000, seed=7)
        assert spec.model == SpanningTree(400)
        assert spec.observable == "LOGZ"
        assert spec.replicates == 1000 and spec.seed == 7

    def test_kfactor_logz(self):
        spec = parse_config(observable="logz", model="k-factor", n=3, k=2,
                            dist="exp:1", beta=1.0)
        assert spec.model == KFactor(3, 2)

    def test_negative_beta_rejected(self):
        with pytest.raises(GibbsLabError):
            parse_config(observable="logz", model="spanning-tree", n=10,
                         dist="exp:1", beta=-1.0)

    def test_unknown_observable(self):
        with pytest.raises(GibbsLabError):
            parse_config(observable="entropy", model="spanning-tree", n=10,
                         dist="exp:1", beta=1.0)

    def test_config_file_with_overrides(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "observable": "logz", "model": "spanning-tree", "n": 50,
            "dist": "exp:1", "beta": 1.0, "replicates": 77, "seed": 3,
        }))
        spec = parse_config(str(cfg))
        assert spec.model == SpanningTree(50) and spec.replicates == 77
        spec2 = parse_config(str(cfg), n=60, seed=9)  # flags override file
        assert spec2.model == SpanningTree(60) and spec2.seed == 9
        assert spec2.replicates == 77

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"observable": "logz", "modle": "spanning-tree"}))
        with pytest.raises(GibbsLabError) as err:
            parse_config(str(cfg))
        assert "modle" in str(err.value)

    def test_missing_required(self):
        with pytest.raises(GibbsLabError):
            parse_config(observable="logz", dist="exp:1", beta=1.0)


class TestMain:
    def test_oracle_json(self, capsys):
        code = main(["oracle", "--model", "spanning-tree", "--n", "30",
                     "--dist", "exp:1", "--beta", "1", "--seed", "5"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["method"] == "matrix_tree"
        assert data["log_z"] < 0 and not data["all_infinite"]

    def test_limits_json(self, capsys):
        code = main(["limits", "--model", "matching-bipartite", "--n", "12",
                     "--dist", "exp:1", "--beta", "1"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["logz"]["mean"] == pytest.approx(-1 / 6)
        assert data["logz"]["variance"] == pytest.approx(1 / 3)
        assert data["overlap"]["rate"] == pytest.approx(4 / 3)

    def test_limits_n_optional(self, capsys):
        # the laws depend only on the family constants, so n may be omitted
        code = main(["limits", "--model", "matching-bipartite",
                     "--dist", "exp:1", "--beta", "1"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["logz"]["mean"] == pytest.approx(-1 / 6)
        code = main(["limits", "--model", "k-factor", "--k", "2",
                     "--dist", "exp:1", "--beta", "0"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["overlap"]["rate"] == pytest.approx(2.0)

    def test_sample_csv(self, capsys):
        code = main(["sample", "--model", "tsp", "--n", "6", "--dist", "exp:1",
                     "--beta", "1", "--seed", "2", "--samples", "4", "--edges"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "index,weight,typical_observable,edges"
        assert len(lines) == 5
        first = lines[1].split(",")
        assert len(first[3].split(";")) == 6  # a Hamiltonian cycle has n edges

    def test_verify_writes_outputs_and_passes(self, tmp_path, capsys):
        csv = tmp_path / "vals.csv"
        js = tmp_path / "summary.json"
        code = main(["verify", "--observable", "logz", "--model", "spanning-tree",
                     "--n", "60", "--dist", "exp:1", "--beta", "1",
                     "--replicates", "1000", "--seed", "7", "--threads", "2",
                     "--out-csv", str(csv), "--out-json", str(js)])
        out = capsys.readouterr().out
        assert code == 0, out
        assert "passed=True" in out
        data = json.loads(js.read_text())
        assert data["passed"] is True
        assert data["spec"]["model"] == "spanning-tree:n=60"
        rows = csv.read_text().splitlines()
        assert rows[0] == "instance,replicate,value"
        assert len(rows) == 1001

    def test_verify_statistical_failure_exits_one(self, capsys):
        # tiny UST run at small n: TV against Poi(2) stays above 0.06
        code = main(["verify", "--observable", "ust-stein-chen", "--model",
                     "spanning-tree", "--n", "8", "--dist", "exp:1",
                     "--pairs", "40", "--seed", "3"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_usage_errors_exit_two(self, capsys):
        assert main(["verify", "--observable", "logz", "--model", "spanning-tree",
                     "--n", "50", "--dist", "exp:1", "--beta", "-1"]) == 2
        assert main(["oracle", "--model", "tsp", "--n", "25", "--dist", "exp:1",
                     "--beta", "1"]) == 2
        assert main(["oracle", "--model", "moebius", "--n", "5", "--dist",
                     "exp:1", "--beta", "1"]) == 2
        capsys.readouterr()

    def test_bad_config_file_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        code = main(["verify", "--config", str(cfg)])
        assert code == 2
        capsys.readouterr()

    def test_verify_from_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "observable": "overlap", "model": "spanning-tree", "n": 100,
            "dist": "exp:1", "beta": 0.0, "pairs": 2000, "instances": 1,
            "seed": 4,
        }))
        code = main(["verify", "--config", str(cfg)])
        out = capsys.readouterr().out
        assert code == 0, out

    def test_mcmc_sampling_path(self, capsys):
        code = main(["sample", "--model", "matching-bipartite", "--n", "5",
                     "--dist", "exp:1", "--beta", "1", "--samples", "3", "--mcmc"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "selftest" in out and "pass" in out
