import csv
import json

import numpy as np
import pytest

from fbtc.cli import main
from fbtc.errors import DatasetValidationError, ParseError
from fbtc.harness import generate_three_group
from fbtc.io import load_long_csv, long_csv_text, write_long_csv


def _write(path, text):
    path.write_text(text)
    return path


class TestLoad:
    def test_three_by_four(self, tmp_path):
        rows = ["id,time,value"] + [f"{k},{t},{t * k}" for k in (1, 2, 3) for t in range(4)]
        trajs, labels = load_long_csv(_write(tmp_path / "d.csv", "\n".join(rows) + "\n"))
        assert [tr.id for tr in trajs] == ["1", "2", "3"] and labels is None
        assert all(tr.N == 4 for tr in trajs)

    def test_unsorted_rows_sorted_by_time(self, tmp_path):
        trajs, _ = load_long_csv(_write(tmp_path / "d.csv", "id,time,value\na,2,5\na,0,1\na,1,3\n"))
        assert trajs[0].times.tolist() == [0, 1, 2] and trajs[0].values.tolist() == [1, 3, 5]

    def test_every_bad_id_reported(self, tmp_path):
        text = "id,time,value\na,0,1\na,1,2\na,1,3\nb,0,1\nb,1,1\nc,0,1\nc,1,1\nc,2,2\n"
        with pytest.raises(DatasetValidationError) as info:
            load_long_csv(_write(tmp_path / "d.csv", text))
        failures = {f["id"]: f["error"] for f in info.value.to_dict()["failures"]}
        assert failures == {"a": "NonMonotoneTimes", "b": "TooShort"}

    def test_parse_error_location(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_long_csv(_write(tmp_path / "d.csv", "id,time,value\na,0,1\na,1,x\n"))
        assert (info.value.row, info.value.column) == (3, "value")

    def test_missing_column(self, tmp_path):
        with pytest.raises(ParseError):
            load_long_csv(_write(tmp_path / "d.csv", "id,time\na,0\n"))

    def test_wide(self, tmp_path):
        trajs, _ = load_long_csv(_write(tmp_path / "w.csv", "id,0,1,2.5,4\na,1,2,3,4\nb,4,,6,7\n"))
        assert trajs[0].times.tolist() == [0, 1, 2.5, 4] and trajs[1].times.tolist() == [0, 2.5, 4]
        with pytest.raises(DatasetValidationError):
            load_long_csv(_write(tmp_path / "w2.csv", "id,0,1,2\na,1,2,3\nb,4,,6\n"))

    def test_wide_duplicate_id(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_long_csv(_write(tmp_path / "w.csv", "id,0,1,2\na,1,2,3\na,1,2,3\n"))
        assert info.value.row == 3

    def test_round_trip_bit_exact(self, tmp_path):
        ds = generate_three_group(noise_sd=0.3, seed=2)
        write_long_csv(tmp_path / "s.csv", ds.trajectories, ds.labels)
        trajs, labels = load_long_csv(tmp_path / "s.csv")
        assert labels == ds.labels
        for a, b in zip(trajs, ds.trajectories):
            assert a.id == b.id and np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)
        assert long_csv_text(trajs, labels) == (tmp_path / "s.csv").read_text()


@pytest.fixture
def synth(tmp_path):
    path = tmp_path / "synth.csv"
    assert main(["synth", "-o", str(path)]) == 0
    return path


class TestCli:
    def test_cluster_outputs(self, synth, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["cluster", str(synth), "-K", "3", "-o", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["assignments.csv", "measures.csv", "report.json"]
        with open(out / "assignments.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 45 and {r["cluster"] for r in rows} == {"1", "2", "3"}
        report = json.loads((out / "report.json").read_text())
        assert report["n"] == 45 and sum(report["cluster_sizes"]) == 45
        assert "timings" not in report and "threads" not in report["config"]

    def test_invalid_k_writes_nothing(self, synth, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["cluster", str(synth), "-K", "1", "-o", str(out)]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "InvalidK"
        assert not out.exists() or not any(out.iterdir())

    def test_bad_input_reports_json(self, tmp_path, capsys):
        bad = _write(tmp_path / "bad.csv", "id,time,value\na,0,1\na,0,2\na,1,3\n")
        assert main(["cluster", str(bad), "-K", "2", "-o", str(tmp_path / "o")]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["failures"][0]["error"] == "NonMonotoneTimes"

    def test_config_file_and_env(self, synth, tmp_path, monkeypatch):
        cfg = _write(tmp_path / "c.json", json.dumps({"K": 3, "partitioner": "fuzzy", "seed": 2}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["cluster", str(synth), "--config", str(cfg), "-o", str(out1)]) == 0
        monkeypatch.setenv("FBTC_CONFIG", str(cfg))
        assert main(["cluster", str(synth), "-o", str(out2)]) == 0
        assert (out1 / "assignments.csv").read_bytes() == (out2 / "assignments.csv").read_bytes()
        assert "weight_3" in (out1 / "assignments.csv").read_text().splitlines()[0]
        # Flags override the file.
        out3 = tmp_path / "c"
        assert main(["cluster", str(synth), "--partitioner", "hard", "-o", str(out3)]) == 0
        assert json.loads((out3 / "report.json").read_text())["config"]["partitioner"] == "hard"

    def test_unknown_config_key(self, synth, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", json.dumps({"K": 3, "clusters": 4}))
        assert main(["cluster", str(synth), "--config", str(cfg)]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "InvalidConfig"

    def test_optional_outputs(self, synth, tmp_path):
        out = tmp_path / "out"
        args = ["cluster", str(synth), "-K", "3", "-o", str(out), "--embedding", "--dump-similarity", "--timings", "--flag-outliers"]
        assert main(args) == 0
        names = {p.name for p in out.iterdir()}
        assert {"embedding.csv", "similarity.txt"} <= names
        assert not any(n.startswith(".") for n in names)
        report = json.loads((out / "report.json").read_text())
        assert "timings" in report and "outliers" in report

    def test_measures(self, synth, tmp_path):
        dest = tmp_path / "m.csv"
        assert main(["measures", str(synth), "--measures", "shape-only", "--output", str(dest)]) == 0
        header = dest.read_text().splitlines()[0].split(",")
        assert header[0] == "id" and "m1" not in header

    def test_eval(self, synth, tmp_path, capsys):
        out = tmp_path / "out"
        main(["cluster", str(synth), "-K", "3", "-o", str(out)])
        capsys.readouterr()
        rep = tmp_path / "eval.json"
        assert main(["eval", str(out / "assignments.csv"), str(synth), "-o", str(rep)]) == 0
        assert "accuracy" in capsys.readouterr().out
        data = json.loads(rep.read_text())
        assert data["n"] == 45 and data["matched"] >= 43 and data["unmatched_ids"] == []
