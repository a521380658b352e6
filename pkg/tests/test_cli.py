import csv
import json

import numpy as np
import pytest

from tdc import cli, dataset, decomp, tensor
from tdc.cli import main

from conftest import philox, write_toy_manifest


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


class TestRank:
    def test_shape_mode(self, capsys):
        code, doc = run_cli(capsys, "rank", "--shape", "64,3,3,64",
                            "--method", "cp", "--retained-fraction", "0.1")
        assert code == 0
        assert doc["ranks"] == [28]
        assert doc["achieved_params"] == 3752

    def test_arch_mode(self, capsys):
        code, doc = run_cli(capsys, "rank", "--arch", "garipovnet", "--layer", "6",
                            "--method", "tucker", "--retained-fraction", "0.9")
        assert code == 0
        assert doc["ranks"] == [108, 3, 3, 108]

    def test_tt_display_ranks(self, capsys):
        code, doc = run_cli(capsys, "rank", "--shape", "64,3,3,64",
                            "--method", "tt", "--retained-fraction", "0.5")
        assert code == 0
        assert doc["display_ranks"][0] == 1 and doc["display_ranks"][-1] == 1
        assert doc["ranks"][0] == 64 and doc["ranks"][2] == 64


class TestDecomposeAndErrors:
    def test_decompose_then_errors(self, tmp_path, capsys):
        g = philox(12)
        w = g.standard_normal((8, 3, 3, 8))
        tensor.write_tensor(tmp_path / "w.tdt", w)
        code, doc = run_cli(capsys, "decompose", "--weights", str(tmp_path / "w.tdt"),
                            "--method", "tucker", "--retained-fraction", "0.5",
                            "--out", str(tmp_path / "fact"))
        assert code == 0
        assert (tmp_path / "fact" / "factorization.json").exists()
        loaded = decomp.load_factorization(tmp_path / "fact")
        assert loaded.method == "tucker"

        code, rep = run_cli(capsys, "errors", "--weights", str(tmp_path / "w.tdt"),
                            "--approx", str(tmp_path / "fact"))
        assert code == 0
        expected = doc["final_relative_error"]
        assert rep["weight_relative"] == pytest.approx(expected, rel=1e-9)

    def test_cp_decompose_deterministic(self, tmp_path, capsys):
        g = philox(13)
        tensor.write_tensor(tmp_path / "w.tdt", g.standard_normal((4, 3, 3, 4)))
        for out in ("f1", "f2"):
            code, _ = run_cli(capsys, "decompose", "--weights", str(tmp_path / "w.tdt"),
                              "--method", "cp", "--retained-fraction", "0.3",
                              "--seed", "9", "--max-iters", "20", "--out", str(tmp_path / out))
            assert code == 0
        for name in ("factor_c.tdt", "factor_t.tdt", "factorization.json"):
            assert (tmp_path / "f1" / name).read_bytes() == (tmp_path / "f2" / name).read_bytes()

    def test_checkpoint_change_mode(self, tmp_path, capsys):
        g = philox(14)
        before, after = tmp_path / "before", tmp_path / "after"
        before.mkdir(), after.mkdir()
        w = g.standard_normal((4, 4))
        tensor.write_tensor(before / "layer0.tdt", w)
        tensor.write_tensor(after / "layer0.tdt", 2.0 * w)
        tensor.write_tensor(before / "layer1.tdt", w)
        tensor.write_tensor(after / "layer1.tdt", w)
        code, doc = run_cli(capsys, "errors", "--before", str(before), "--after", str(after))
        assert code == 0
        assert doc["layers"][0]["log10_relative_change"] == pytest.approx(0.0, abs=1e-12)
        assert doc["layers"][1]["no_change"] is True
        assert doc["layers"][1]["log10_relative_change"] is None

    def test_bad_input_returns_error_code(self, tmp_path, capsys):
        (tmp_path / "junk.tdt").write_bytes(b"not a tensor")
        code = main(["errors", "--weights", str(tmp_path / "junk.tdt"),
                     "--approx", str(tmp_path / "junk.tdt")])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestEvaluate:
    def test_evaluate_with_substitution_and_logits(self, tmp_path, capsys):
        manifest = write_toy_manifest(tmp_path, [(3, 3, 3, 8), (8, 3, 3, 12), (12, 3, 3, 8)])
        g = philox(15)
        images = g.standard_normal((6, 3, 8, 8))
        labels = g.integers(0, 10, 6)
        dataset.write_dataset(tmp_path / "d.tds", images, labels)

        w = tensor.read_tensor(tmp_path / "tensors" / "conv1.tdt")
        fact = decomp.tucker_hosvd(w, (8, 3, 3, 12))
        decomp.save_factorization(fact, tmp_path / "fact")

        code, doc = run_cli(capsys, "evaluate", "--manifest", str(manifest),
                            "--dataset", str(tmp_path / "d.tds"),
                            "--substitute", f"conv1={tmp_path / 'fact'}",
                            "--logits", str(tmp_path / "logits.csv"))
        assert code == 0
        assert 0.0 <= doc["performance_error"] <= 1.0
        assert doc["sample_count"] == 6
        with open(tmp_path / "logits.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert sum(1 for k in rows[0] if k.startswith("logit_")) == 10

    def test_limit(self, tmp_path, capsys):
        manifest = write_toy_manifest(tmp_path, [(3, 3, 3, 8), (8, 3, 3, 8)])
        g = philox(16)
        dataset.write_dataset(tmp_path / "d.tds", g.standard_normal((9, 3, 8, 8)),
                              g.integers(0, 10, 9))
        code, doc = run_cli(capsys, "evaluate", "--manifest", str(manifest),
                            "--dataset", str(tmp_path / "d.tds"), "--limit", "4")
        assert code == 0 and doc["sample_count"] == 4


class TestStudyAndReport:
    def test_study_then_report_roundtrip(self, tmp_path, capsys):
        write_toy_manifest(tmp_path, [(3, 3, 3, 8), (8, 3, 3, 12), (12, 3, 3, 8)])
        cfg = {
            "manifest": "model.json",
            "layers": ["conv1"], "methods": ["tucker", "tt"],
            "retained_fractions": [0.25, 0.75], "seeds": [0, 1],
            "output_dir": "out", "figures": False,
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        code, doc = run_cli(capsys, "study", "--config", str(tmp_path / "cfg.json"))
        assert code == 0
        assert doc["measurements"] == 8 and doc["failures"] == 0

        # merge a performance file through the report command
        perf = tmp_path / "perf.csv"
        with open(perf, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer_id", "method", "retained_fraction", "seed", "p"])
            for method in ("tucker", "tt"):
                for c, p in ((0.25, 0.4), (0.75, 0.2)):
                    for seed in (0, 1):
                        w.writerow(["conv1", method, c, seed, p])
        code, doc = run_cli(capsys, "report",
                            "--measurements", str(tmp_path / "out" / "measurements.csv"),
                            "--performance", str(perf),
                            "--out", str(tmp_path / "report"), "--no-figures")
        assert code == 0 and doc["ingest_diagnostics"] == []
        tau = json.loads((tmp_path / "report" / "tau_all.json").read_text())
        assert "p" in tau["analyses"]

    def test_study_failure_exit_code(self, tmp_path, capsys):
        write_toy_manifest(tmp_path, [(3, 3, 3, 8), (8, 3, 3, 8)])
        cfg = {
            "manifest": "model.json", "layers": ["conv1", "missing"],
            "methods": ["tucker"], "retained_fractions": [0.5], "seeds": [0],
            "output_dir": "out", "figures": False,
        }
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        code, doc = run_cli(capsys, "study", "--config", str(tmp_path / "cfg.json"))
        assert code == 1
        assert doc["failures"] == 1


def test_parser_rejects_missing_subcommand():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])
