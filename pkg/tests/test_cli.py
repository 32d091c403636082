import csv
import json

import numpy as np
import pytest

from scalefree.cli import main
from scalefree.synth import GeneratorSpec, gen_fgn


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSynthCommand:
    def test_writes_signal(self, tmp_path):
        out = tmp_path / "sig.csv"
        code = main(["synth", "--kind", "fgn", "--hurst", "0.7",
                     "--length", "1024", "--seed", "5", "--out", str(out)])
        assert code == 0
        rows = read_csv(out)
        assert rows[0] == ["t", "value"]
        assert len(rows) == 1025
        ref = gen_fgn(GeneratorSpec("fgn", 0.7, 1024, seed=5)).samples
        got = np.array([float(r[1]) for r in rows[1:]])
        assert np.array_equal(got, ref)  # 17 digits round-trip exactly

    def test_rejects_bad_length(self, tmp_path, capsys):
        code = main(["synth", "--kind", "fgn", "--hurst", "0.7",
                     "--length", "1000", "--seed", "1",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "power of two" in capsys.readouterr().err


class TestSpectrumCommand:
    @pytest.fixture()
    def signal_csv(self, tmp_path):
        out = tmp_path / "sig.csv"
        main(["synth", "--kind", "fgn", "--hurst", "0.7", "--length", "4096",
              "--seed", "3", "--out", str(out)])
        return out

    def test_wavelet_method(self, tmp_path, signal_csv):
        out = tmp_path / "spec.csv"
        code = main(["spectrum", "--in", str(signal_csv), "--method",
                     "wavelet", "--j2", "6", "--out", str(out)])
        assert code == 0
        rows = read_csv(out)
        assert rows[0] == ["octave_or_freq", "log2_value", "fitted_value"]
        assert len(rows) == 7  # octaves 1..6

    def test_welch_method(self, tmp_path, signal_csv):
        out = tmp_path / "specw.csv"
        code = main(["spectrum", "--in", str(signal_csv), "--method", "welch",
                     "--out", str(out)])
        assert code == 0
        rows = read_csv(out)
        assert len(rows) > 10

    def test_missing_column(self, tmp_path, signal_csv, capsys):
        code = main(["spectrum", "--in", str(signal_csv), "--column", "nope",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "no column" in capsys.readouterr().err


class TestAnalyzeCommand:
    def test_synthetic_config(self, tmp_path):
        cfg = {"synthetic": {"subjects": 3, "length": 1024,
                             "maps": {"F": 2, "A": 2, "U": 1}},
               "seed": 4, "output_dir": str(tmp_path / "out")}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = main(["analyze", "--config", str(cfg_path)])
        assert code == 0
        assert (tmp_path / "out" / "group_report.json").exists()

    def test_invalid_config_exit_1(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"synthetic": {}, "octave_range": [3, 3]}))
        assert main(["analyze", "--config", str(cfg_path)]) == 1


class TestBatteryCommand:
    def test_round_trip(self, tmp_path):
        out_dir = tmp_path / "out"
        cfg = {"synthetic": {"subjects": 4, "length": 1024,
                             "maps": {"F": 2, "A": 2, "U": 1}},
               "seed": 8, "output_dir": str(out_dir)}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["analyze", "--config", str(cfg_path)]) == 0

        tax_path = tmp_path / "tax.csv"
        with open(tax_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["map_index", "class", "network_or_artifact"])
            nets = ["Att", "DMN"]
            arts = ["Ven", "WhM"]
            for k in range(2):
                w.writerow([k + 1, "F", nets[k]])
            for k in range(2):
                w.writerow([k + 3, "A", arts[k]])
            w.writerow([5, "U", ""])
        report_path = tmp_path / "battery.json"
        code = main(["battery", "--estimates", str(out_dir / "estimates.csv"),
                     "--taxonomy", str(tax_path), "--out", str(report_path)])
        assert code == 0
        doc = json.loads(report_path.read_text())
        assert "one_sample" in doc
        assert doc["one_sample"]["map"]["f_1"]["rest"]["c1"]["t"]["p_corrected"] <= 1.0
