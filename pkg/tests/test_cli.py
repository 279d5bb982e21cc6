import json

import numpy as np
import pytest

from pecep import binio
from pecep.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from pecep.report import read_csv_records

SMALL_EXP1 = {"noise_levels": [0.1], "dataset_sizes": [300, 600], "n_trials": 2}
SMALL_EXP2 = {
    "n_species": 2,
    "clips_per_species": 5,
    "m": 4,
    "clip_duration": 1.0,
    "fcn": {"hidden1": 8, "hidden2": 8, "epochs": 1, "batch_size": 64},
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestArgs:
    def test_usage_error_is_config_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["exp1", "--profile", "huge"])
        assert exc.value.code == EXIT_CONFIG

    def test_missing_command(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        cfg = write_config(tmp_path, {"bogus": 1})
        assert main(["exp1", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_config_value(self, tmp_path):
        cfg = write_config(tmp_path, {"train_fraction": 1.5})
        assert main(["exp1", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unreadable_config(self, tmp_path):
        assert main(["exp1", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    def test_bad_jobs(self, tmp_path):
        assert main(["exp1", "--jobs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


class TestExp1:
    def test_emits_records(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_EXP1)
        assert main(["exp1", "--config", cfg, "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
        recs = read_csv_records(tmp_path / "exp1_records.csv")
        assert len(recs) == 2 * 2 * 2
        assert all(r["pecep"] <= r["hadamard_bound"] + 1e-9 for r in recs)
        assert (tmp_path / "exp1_summary.csv").exists()

    def test_json_echoes_seed(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_EXP1)
        assert main(["exp1", "--config", cfg, "--seed", "77", "--format", "json", "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "exp1_records.json").read_text())
        assert doc["seeds"]["master_seed"] == 77 and doc["config"]["master_seed"] == 77

    def test_report_reaggregates(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_EXP1)
        main(["exp1", "--config", cfg, "--out", str(tmp_path / "a")])
        assert main(["report", str(tmp_path / "a" / "exp1_records.csv"), "--out", str(tmp_path / "b")]) == EXIT_OK
        # the re-aggregation starts from 9-digit values, so compare numerically
        a = read_csv_records(tmp_path / "a" / "exp1_summary.csv")
        b = read_csv_records(tmp_path / "b" / "exp1_summary.csv")
        assert len(a) == len(b)
        for ra, rb in zip(a, b):
            assert ra.keys() == rb.keys()
            for k in ra:
                if isinstance(ra[k], float):
                    assert rb[k] == pytest.approx(ra[k], rel=1e-7, abs=1e-8)
                else:
                    assert rb[k] == ra[k]


class TestExp2:
    def test_small_run(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_EXP2)
        assert main(["exp2", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        ranking = json.loads((tmp_path / "exp2_ranking.json").read_text())
        assert -1.0 <= ranking["spearman_rho"] <= 1.0
        assert ranking["complete"] is True
        calls = read_csv_records(tmp_path / "exp2_calls.csv")
        assert calls and {r["species"] for r in calls} <= {0, 1}
        assert (tmp_path / "models" / "species_0.fcn").exists()
        assert (tmp_path / "audio" / "1_annotations.json").exists()

    def test_divergence_exits_runtime_with_partial_reports(self, tmp_path):
        cfg = write_config(tmp_path, {**SMALL_EXP2, "fcn": {**SMALL_EXP2["fcn"], "base_learning_rate": float("nan")}})
        assert main(["exp2", "--config", cfg, "--out", str(tmp_path)]) == EXIT_RUNTIME
        ranking = json.loads((tmp_path / "exp2_ranking.json").read_text())
        assert ranking["complete"] is False and ranking["failed_species"] == [0, 1]


class TestTools:
    def test_gen_var_and_pecep(self, tmp_path, capsys):
        assert main(["gen-var", "--d", "3", "--p", "2", "--n", "500", "--out", str(tmp_path)]) == EXIT_OK
        frames, meta = binio.read_matrix(tmp_path / "series.bin")
        assert frames.shape == (500, 3) and meta["p"] == 2
        capsys.readouterr()
        assert main(["pecep", str(tmp_path / "series.bin"), "--sigma2", "1"]) == EXIT_OK
        rec = json.loads(capsys.readouterr().out)
        assert rec["d"] == 3 and rec["pecep"] <= rec["hadamard_bound"]

    def test_pecep_to_file(self, tmp_path):
        binio.write_matrix(tmp_path / "r.bin", np.random.default_rng(0).standard_normal((50, 2)))
        out = tmp_path / "rep.csv"
        assert main(["pecep", str(tmp_path / "r.bin"), "--format", "csv", "--out", str(out)]) == EXIT_OK
        assert read_csv_records(out)[0]["d"] == 2

    def test_pecep_missing_file(self, tmp_path):
        assert main(["pecep", str(tmp_path / "missing.bin")]) == EXIT_RUNTIME

    def test_gen_audio_one_species(self, tmp_path):
        cfg = write_config(tmp_path, {"clips_per_species": 3, "clip_duration": 1.0})
        assert main(["gen-audio", "--config", cfg, "--species", "1", "--out", str(tmp_path)]) == EXIT_OK
        assert sorted(p.name for p in (tmp_path / "audio").iterdir()) == ["1_0.wav", "1_1.wav", "1_2.wav", "1_annotations.json"]

    def test_gen_audio_bad_species(self, tmp_path):
        assert main(["gen-audio", "--species", "9", "--out", str(tmp_path)]) == EXIT_CONFIG
