"""Command-line front end: outputs, exit codes and reproducibility."""

import csv
import json
import re

import numpy as np
import pytest

from epgpr.cli import RunConfig, main
from epgpr.errors import ConfigError
from epgpr.gpr import GprModel
from epgpr.models import MatrixFamily, family_to_dict, kato2

from conftest import RANDOM5_EPS

ERROR_LINE = re.compile(r"^epgpr: error=\w+ exit=(\d) reason=.+$")

SEED42_ARGS = ["--family", "random5", "--seed", "42", "--orbit-center", "-0.80", "0.74", "--orbit-radius", "0.2"]


def run(tmp_path, *args):
    return main([args[0], "--out-dir", str(tmp_path), *args[1:]])


def load(path):
    return json.loads(path.read_text())


def strip_metadata(doc):
    doc = dict(doc)
    doc.pop("metadata", None)
    return doc


def error_line(capsys, code):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    m = ERROR_LINE.match(err[0])
    assert m and int(m.group(1)) == code
    return err[0]


class TestTrace:
    def test_kato_csv_endpoints_swap(self, tmp_path):
        assert run(tmp_path, "trace", "--orbit-center", "0", "1") == 0
        with open(tmp_path / "spectra.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        first, last = rows[0], rows[-1]
        lam = lambda r, k: complex(float(r[f"re_lambda_{k}"]), float(r[f"im_lambda_{k}"]))  # noqa: E731
        step = abs(lam(rows[1], 0) - lam(first, 0))
        # after one loop each path ends next to the other's start
        assert abs(lam(last, 0) - lam(first, 1)) < 3 * step
        assert abs(lam(last, 1) - lam(first, 0)) < 3 * step
        assert abs(lam(last, 0) - lam(first, 0)) > 10 * step
        assert (tmp_path / "run_config.json").exists()

    def test_too_few_points(self, tmp_path, capsys):
        assert run(tmp_path, "trace", "--n-points", "4") == 2
        assert "n_points" in error_line(capsys, 2)

    def test_family_file_round_trip(self, tmp_path):
        fam = tmp_path / "kato.json"
        fam.write_text(json.dumps(family_to_dict(kato2())))
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(a, "trace") == 0
        assert run(b, "trace", "--family-file", str(fam)) == 0
        assert load(a / "spectra.json")["spectra"] == load(b / "spectra.json")["spectra"]

    def test_bad_family_file(self, tmp_path, capsys):
        fam = tmp_path / "bad.json"
        fam.write_text('{"dim": 2, "base": [[1, 0]], "coupling": []}')
        assert run(tmp_path, "trace", "--family-file", str(fam)) == 2
        assert "ParseError" in error_line(capsys, 2)


class TestGroup:
    def test_kato(self, tmp_path):
        assert run(tmp_path, "group", "--orbit-center", "0", "1") == 0
        assert load(tmp_path / "groups.json")["exchanging_pairs"] == [[0, 1]]

    def test_from_spectra_file(self, tmp_path):
        assert run(tmp_path, "trace", *SEED42_ARGS) == 0
        assert run(tmp_path, "group", "--spectra", str(tmp_path / "spectra.json")) == 0
        doc = load(tmp_path / "groups.json")
        assert len(doc["exchanging_pairs"]) == 1 and len(doc["closed_paths"]) == 3

    def test_no_signature(self, tmp_path, capsys):
        assert run(tmp_path, "group", "--orbit-center", "0", "3") == 4
        error_line(capsys, 4)


@pytest.fixture(scope="module")
def kato_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("kato")
    code = main(["find-ep", "--out-dir", str(out)])
    return code, out


class TestFindEp:
    def test_kato_default(self, kato_run):
        code, out = kato_run
        assert code == 0
        res = load(out / "ep_results.json")["results"]
        assert len(res) == 1
        kappa = complex(*res[0]["kappa_ep"])
        assert abs(kappa - 1j) <= 1e-5
        assert res[0]["delta_lambda"] <= 1e-8

    def test_iteration_csv(self, kato_run):
        _, out = kato_run
        lines = (out / "iterations_0.csv").read_text().splitlines()
        assert lines[0] == "iteration,re_kappa,im_kappa,min_kernel_eig,delta_lambda"
        assert len(lines) >= 3

    def test_seed42_matches_oracle(self, tmp_path):
        assert run(tmp_path / "gp", "find-ep", *SEED42_ARGS) == 0
        assert run(tmp_path / "or", "oracle", *SEED42_ARGS) == 0
        gp = complex(*load(tmp_path / "gp" / "ep_results.json")["results"][0]["kappa_ep"])
        oracle = complex(*load(tmp_path / "or" / "oracle.json")["kappa_ep"])
        assert abs(gp - oracle) <= 1e-4
        assert abs(oracle - RANDOM5_EPS[42]) <= 1e-8

    def test_no_signature(self, tmp_path, capsys):
        assert run(tmp_path, "find-ep", "--orbit-center", "0", "3") == 4
        error_line(capsys, 4)

    def test_not_converged(self, tmp_path, capsys):
        assert run(tmp_path, "find-ep", "--max-iter", "1") == 6
        error_line(capsys, 6)
        assert (tmp_path / "ep_results.json").exists()

    def test_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(a, "find-ep", *SEED42_ARGS) == 0
        assert run(b, "find-ep", *SEED42_ARGS) == 0
        da, db = load(a / "ep_results.json"), load(b / "ep_results.json")
        assert json.dumps(strip_metadata(da), sort_keys=True) == json.dumps(strip_metadata(db), sort_keys=True)
        assert (a / "iterations_0.csv").read_bytes() == (b / "iterations_0.csv").read_bytes()

    def test_saved_config_reproduces(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(a, "find-ep", *SEED42_ARGS, "--subsample", "25") == 0
        assert main(["find-ep", "--config", str(a / "run_config.json"), "--out-dir", str(b)]) == 0
        assert strip_metadata(load(a / "ep_results.json")) == strip_metadata(load(b / "ep_results.json"))


class TestOracle:
    @pytest.mark.parametrize("start,truth", [((0.2, 0.7), 1j), ((-0.2, -0.7), -1j)])
    def test_kato(self, tmp_path, start, truth):
        assert run(tmp_path, "oracle", "--oracle-start", *map(str, start)) == 0
        assert abs(complex(*load(tmp_path / "oracle.json")["kappa_ep"]) - truth) <= 1e-10

    def test_seed42_perturbed_start(self, tmp_path):
        assert run(tmp_path / "a", "oracle", *SEED42_ARGS) == 0
        assert run(tmp_path / "b", "oracle", *SEED42_ARGS, "--oracle-start", "-0.77", "0.72") == 0
        a = complex(*load(tmp_path / "a" / "oracle.json")["kappa_ep"])
        b = complex(*load(tmp_path / "b" / "oracle.json")["kappa_ep"])
        assert abs(a - b) <= 1e-8

    def test_no_root(self, tmp_path, capsys):
        f = MatrixFamily("user", np.diag([1.0, -1.0]).astype(complex), ((0, 0), (1, 1)), symmetric=True)
        fam = tmp_path / "shift.json"
        fam.write_text(json.dumps(family_to_dict(f)))
        assert run(tmp_path, "oracle", "--family-file", str(fam)) == 5
        error_line(capsys, 5)


def write_dataset(path, X, y):
    path.write_text(json.dumps({"X": np.asarray(X).tolist(), "y": np.asarray(y).tolist()}))
    return path


class TestGprFit:
    def test_single_point(self, tmp_path):
        data = write_dataset(tmp_path / "one.json", [[0.2, 0.3]], [2.0])
        assert run(tmp_path, "gpr-fit", "--data", str(data), "--noise-variance", "0") == 0
        doc = load(tmp_path / "gpr_model.json")
        assert doc["diagnostics"][0]["train_max_abs_residual"] <= 1e-12
        m = GprModel.from_dict(doc["model"])
        assert m.predict_mean([[0.2, 0.3]], 0)[0] == pytest.approx(2.0, abs=1e-12)

    def test_sin_cos_benchmark(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(25, 2))
        f = lambda X: np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])  # noqa: E731
        data = write_dataset(tmp_path / "sc.json", X, f(X))
        assert run(tmp_path, "gpr-fit", "--data", str(data)) == 0
        doc = load(tmp_path / "gpr_model.json")
        m = GprModel.from_dict(doc["model"])
        g = np.linspace(0.05, 0.95, 10)
        G = np.array([(a, b) for a in g for b in g])
        assert np.sqrt(np.mean((m.predict_mean(G, 0) - f(G)) ** 2)) < 0.05
        d = doc["diagnostics"][0]
        assert {"log_marginal_likelihood", "loo_rms", "loo_max_abs", "hyperparameters"} <= set(d)

    def test_duplicate_rows(self, tmp_path, capsys):
        data = write_dataset(tmp_path / "dup.json", [[0.1, 0.1], [0.1, 0.1], [0.5, 0.2]], [1.0, 1.5, 0.0])
        assert run(tmp_path, "gpr-fit", "--data", str(data), "--noise-variance", "0") == 3
        line = error_line(capsys, 3)
        assert "NotPositiveDefinite" in line and "noise_variance > 0" in line

    def test_missing_data(self, tmp_path, capsys):
        assert run(tmp_path, "gpr-fit") == 2
        error_line(capsys, 2)


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_points": 50, "subsample": 10}))
        assert main(["trace", "--config", str(cfg), "--n-points", "60", "--out-dir", str(tmp_path)]) == 0
        saved = load(tmp_path / "run_config.json")
        assert saved["n_points"] == 60 and saved["subsample"] == 10
        assert len(load(tmp_path / "spectra.json")["kappa"]) == 60

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_pointz": 50}))
        assert main(["trace", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
        assert "n_pointz" in error_line(capsys, 2)

    def test_round_trip(self):
        cfg = RunConfig(orbit_radius=(0.3, 0.2), parameter_map={"center": [1.0, 2.0], "relative_radius": 0.1})
        cfg.validate()
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("bad", [{"orbit_radius": -1}, {"metric": "manhattan"}, {"exploration_after": 1},
                                     {"signal_bounds": [1, 0]}, {"subsample": 500}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)

    def test_no_exploration_flag(self, tmp_path):
        assert main(["trace", "--no-exploration", "--out-dir", str(tmp_path)]) == 0
        assert load(tmp_path / "run_config.json")["exploration_after"] is None

    def test_parse_error_exit(self):
        with pytest.raises(SystemExit) as info:
            main(["trace", "--n-points", "many"])
        assert info.value.code == 2

    def test_parameter_map_output(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"parameter_map": {"center": [1.0, 2.0], "relative_radius": 0.1}}))
        assert main(["find-ep", "--config", str(cfg), "--out-dir", str(tmp_path)]) in (0, 6)
        res = load(tmp_path / "ep_results.json")["results"][0]
        k = complex(*res["kappa_ep"])
        assert res["physical"] == pytest.approx([1.0 * (1 + 0.1 * k.real), 2.0 * (1 + 0.1 * k.imag)])


def test_distinct_exit_codes():
    from epgpr import cli

    codes = [cli.EXIT_CONFIG, cli.EXIT_SOLVER, cli.EXIT_NO_SIGNATURE, cli.EXIT_NO_ROOT, cli.EXIT_NOT_CONVERGED]
    assert len(set(codes)) == len(codes) and cli.EXIT_OK not in codes
