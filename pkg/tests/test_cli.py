import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from censcov import __version__
from censcov.cli import main, read_visits_csv, resolve_settings, write_visits_csv, InputError
from censcov.cox import CensoredData
from censcov.imputation import ImputationConfig, impute_dataset
from censcov.recruitment import synthetic_cohort
from censcov.simulation import generate_dataset, scenario


def write_censored(path, data, extra_header=""):
    with open(path, "w", newline="") as fh:
        fh.write(extra_header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "w", "delta", "z_1"])
        for i in range(data.n):
            w.writerow([repr(float(data.y[i])), repr(float(data.w[i])), int(data.delta[i]),
                        repr(float(data.z[i, 0]))])


def read_table(path):
    lines = open(path).read().splitlines()
    manifest = json.loads(lines[0].removeprefix("# manifest: "))
    body = [line for line in lines[1:] if not line.startswith("#")]
    footer = [line[2:] for line in lines[1:] if line.startswith("#")]
    rows = list(csv.DictReader(body))
    return manifest, rows, footer


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(scenario("weibull-heavy-n100"), 0)[0]


class TestImpute:
    def test_round_trip_matches_library(self, tmp_path, dataset):
        src, out = tmp_path / "in.csv", tmp_path / "out.csv"
        write_censored(src, dataset, "# a comment line\n")
        assert main(["impute", "--input", str(src), "--output", str(out)]) == 0
        manifest, rows, _ = read_table(out)
        assert manifest["command"] == "impute"
        assert manifest["version"] == __version__
        expected = impute_dataset(dataset, ImputationConfig())
        assert_allclose([float(r["w"]) for r in rows], expected.data.w, rtol=0, atol=0)
        assert [r["imputed"] == "1" for r in rows] == list(expected.diagnostics.imputed)

    def test_byte_identical_rerun(self, tmp_path, dataset):
        src = tmp_path / "in.csv"
        write_censored(src, dataset)
        outs = []
        out = tmp_path / "out.csv"
        for _ in range(2):
            assert main(["impute", "--input", str(src), "--output", str(out),
                         "--approach", "non-extrapolated"]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_header_only(self, tmp_path, capsys):
        src, out = tmp_path / "in.csv", tmp_path / "out.csv"
        src.write_text("y,w,delta,z_1\n")
        assert main(["impute", "--input", str(src), "--output", str(out)]) == 0
        assert "warning" in capsys.readouterr().err
        _, rows, _ = read_table(out)
        assert rows == []

    def test_missing_delta_column(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        src.write_text("y,w,z_1\n1.0,0.5,1\n")
        assert main(["impute", "--input", str(src)]) == 2
        assert "delta" in capsys.readouterr().err

    def test_bad_value_reports_line(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        src.write_text("y,w,delta,z_1\n1.0,0.5,1,0\n1.0,abc,0,1\n")
        assert main(["impute", "--input", str(src)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_divergent_tail_is_model_error(self, tmp_path, dataset):
        src = tmp_path / "in.csv"
        write_censored(src, dataset)
        assert main(["impute", "--input", str(src), "--extension", "carry-forward"]) == 3


class TestSettings:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"replicates": 7, "seed": 3}))
        s = resolve_settings("simulate", {"seed": 11}, str(cfg))
        assert (s["replicates"], s["seed"], s["scenario"]) == (7, 11, "weibull-light-n500")

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"replicate": 7}))
        with pytest.raises(InputError):
            resolve_settings("simulate", {}, str(cfg))

    def test_unknown_scenario(self):
        assert main(["simulate", "--scenario", "gamma-light-n100"]) == 2


class TestSimulate:
    def test_smoke(self, tmp_path):
        out = tmp_path / "sim.csv"
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"replicates": 2}))
        assert main(["simulate", "--scenario", "weibull-heavy-n100", "--config", str(cfg),
                     "--output", str(out)]) == 0
        manifest, rows, footer = read_table(out)
        assert manifest["settings"]["replicates"] == 2
        assert len(rows) == 9
        assert {r["method"] for r in rows} == {"full_cohort", "extrapolated", "non_extrapolated"}
        assert any(line.startswith("replicates: 2") for line in footer)
        assert any(line.startswith("extension_convergence_rate") for line in footer)


class TestRecruit:
    def test_visits_round_trip(self, tmp_path):
        visits, _ = synthetic_cohort(n=20, seed=1)
        path = tmp_path / "v.csv"
        write_visits_csv(path, visits)
        assert read_visits_csv(str(path)) == visits

    def test_synthetic_agreement_partition(self, tmp_path):
        out, ag = tmp_path / "rank.csv", tmp_path / "ag.csv"
        assert main(["recruit", "--synthetic", "--trial-size", "50", "--output", str(out),
                     "--agreement", str(ag)]) == 0
        _, ranked, _ = read_table(out)
        assert sum(r["recruited"] == "1" for r in ranked) == 50
        deltas = np.array([float(r["delta_hat"]) for r in ranked])
        assert np.all(np.diff(deltas) >= 0)
        _, rows, _ = read_table(ag)
        row = {k: int(v) for k, v in rows[0].items() if k != "scope"}
        assert row["agree_recruit"] + row["only_extrapolated"] == 50
        assert row["agree_recruit"] + row["only_non_extrapolated"] == 50
        assert (row["agree_recruit"] + row["agree_not"] + row["only_extrapolated"]
                + row["only_non_extrapolated"]) == row["total"] == len(ranked)

    def test_trial_too_large(self, tmp_path):
        assert main(["recruit", "--synthetic", "--trial-size", "5000",
                     "--output", str(tmp_path / "r.csv")]) == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "censcov", "--version"], capture_output=True,
                         text=True, check=True)
    assert __version__ in res.stdout
