import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from trianglevec import cli
from trianglevec.cli import EXIT_COMPUTE, EXIT_INPUT, EXIT_OK, main, read_config
from trianglevec.ebm import EbmModel
from trianglevec.features import read_feature_csv
from trianglevec.fitvec import FitFailedError, FitResult

QUICK_GEN = ["--max-generations", "15", "--jobs", "1"]
QUICK_EBM = ["--outer-bags", "2", "--runs", "2", "--k", "3"]


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def header(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["generate", "--out", str(out), "--n", "12", "--seed", "3"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def synth_csv(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    argv = ["vectorize", "--out", str(out), "--manifest", str(corpus_dir / "manifest.tsv"), "--method", "synth"]
    assert main(argv + QUICK_GEN) == EXIT_OK
    return out / "features_synth.csv"


def separable_csv(path: Path, n: int = 60) -> Path:
    rng = np.random.default_rng(0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "a", "b", "label"])
        for i in range(n):
            good = i % 2 == 0
            a = rng.uniform(1, 2) if good else rng.uniform(-2, -1)
            w.writerow([f"r{i}", repr(a), repr(rng.normal()), "good" if good else "bad"])
    return path


class TestGenerate:
    def test_manifest(self, corpus_dir):
        lines = (corpus_dir / "manifest.tsv").read_text().splitlines()
        assert len(lines) == 12
        assert len(list((corpus_dir / "images").iterdir())) == 12
        assert len((corpus_dir / "params.jsonl").read_text().splitlines()) == 12

    def test_rerun_identical(self, corpus_dir, tmp_path):
        assert main(["generate", "--out", str(tmp_path), "--n", "12", "--seed", "3"]) == EXIT_OK
        assert tree(tmp_path) == tree(corpus_dir)

    def test_seed_changes_output(self, corpus_dir, tmp_path):
        main(["generate", "--out", str(tmp_path), "--n", "12", "--seed", "4"])
        assert tree(tmp_path) != tree(corpus_dir)

    def test_pgm_format(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path), "--n", "2", "--format", "pgm"]) == EXIT_OK
        assert sorted(p.suffix for p in (tmp_path / "images").iterdir()) == [".pgm", ".pgm"]

    def test_out_is_a_file(self, tmp_path):
        target = tmp_path / "f"
        target.write_text("x")
        assert main(["generate", "--out", str(target), "--n", "2"]) == EXIT_INPUT

    def test_bad_parameter(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path), "--n", "2", "--good-fraction", "1.5"]) == EXIT_INPUT


class TestVectorize:
    def test_gabor_columns(self, corpus_dir, tmp_path):
        argv = ["vectorize", "--out", str(tmp_path), "--manifest", str(corpus_dir / "manifest.tsv"), "--method", "gabor"]
        assert main(argv + ["--jobs", "1"]) == EXIT_OK
        _, names, X, labels = read_feature_csv(tmp_path / "features_gabor.csv")
        assert len(names) == 10 and X.shape == (12, 10) and len(labels) == 12

    def test_synth_columns(self, synth_csv):
        _, names, X, _ = read_feature_csv(synth_csv)
        assert len(names) == 12 and X.shape == (12, 12)
        assert header(synth_csv)[-1] == "evals"

    def test_hybrid_columns(self, corpus_dir, tmp_path):
        man = tmp_path / "m.tsv"
        man.write_text("\n".join((corpus_dir / "manifest.tsv").read_text().splitlines()[:3]) + "\n")
        # manifest paths are relative to the manifest directory
        (tmp_path / "images").symlink_to(corpus_dir / "images")
        argv = ["vectorize", "--out", str(tmp_path / "o"), "--manifest", str(man), "--method", "hybrid"]
        assert main(argv + QUICK_GEN) == EXIT_OK
        _, names, X, _ = read_feature_csv(tmp_path / "o" / "features_hybrid.csv")
        assert len(names) == 13 and names[-1] == "G45_16_16"

    def test_deterministic_across_jobs(self, corpus_dir, synth_csv, tmp_path):
        argv = ["vectorize", "--out", str(tmp_path), "--manifest", str(corpus_dir / "manifest.tsv"), "--method", "synth"]
        assert main(argv + ["--max-generations", "15", "--jobs", "2"]) == EXIT_OK
        assert (tmp_path / "features_synth.csv").read_bytes() == synth_csv.read_bytes()

    def test_missing_manifest(self, tmp_path):
        assert main(["vectorize", "--out", str(tmp_path), "--manifest", str(tmp_path / "nope.tsv")]) == EXIT_INPUT

    def test_missing_image(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a\tgone.csv\tgood\n")
        assert main(["vectorize", "--out", str(tmp_path), "--manifest", str(tmp_path / "m.tsv")]) == EXIT_INPUT

    def test_failed_fits_are_excluded(self, corpus_dir, tmp_path, monkeypatch):
        real = cli.fit_synthetic
        calls = []

        def flaky(img, cfg):
            calls.append(img.id)
            if len(calls) == 1:
                raise FitFailedError(FitResult(None, 1.0, 2e9, 7))
            return real(img, cfg)

        monkeypatch.setattr(cli, "fit_synthetic", flaky)
        argv = ["vectorize", "--out", str(tmp_path), "--manifest", str(corpus_dir / "manifest.tsv"), "--method", "synth"]
        assert main(argv + QUICK_GEN) == EXIT_OK
        ids, _, _, _ = read_feature_csv(tmp_path / "features_synth.csv")
        assert len(ids) == 11 and calls[0] not in ids
        assert (tmp_path / "failed_synth.tsv").read_text().startswith(calls[0] + "\t")

    def test_all_fits_failing_is_a_computation_error(self, corpus_dir, tmp_path, monkeypatch):
        def fail(img, cfg):
            raise FitFailedError(FitResult(None, 1.0, 2e9, 7))

        monkeypatch.setattr(cli, "fit_synthetic", fail)
        argv = ["vectorize", "--out", str(tmp_path), "--manifest", str(corpus_dir / "manifest.tsv"), "--method", "synth"]
        assert main(argv + QUICK_GEN) == EXIT_COMPUTE


class TestTrainEvaluate:
    def test_separable_report(self, tmp_path, capsys):
        data = separable_csv(tmp_path / "toy.csv")
        assert main(["evaluate", "--out", str(tmp_path / "o"), "--features", str(data)]) == EXIT_OK
        report = (tmp_path / "o" / "report.txt").read_text()
        assert "accuracy  100.0(0.0) %" in report
        assert report.strip() == capsys.readouterr().out.strip()
        assert header(tmp_path / "o" / "metrics.csv")[0] == "method"
        EbmModel.load(tmp_path / "o" / "model.json")

    def test_evaluate_reproducible(self, tmp_path):
        data = separable_csv(tmp_path / "toy.csv")
        for d in ("a", "b"):
            assert main(["evaluate", "--out", str(tmp_path / d), "--features", str(data), *QUICK_EBM]) == EXIT_OK
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_train(self, tmp_path):
        data = separable_csv(tmp_path / "toy.csv")
        assert main(["train", "--out", str(tmp_path / "o"), "--features", str(data), "--outer-bags", "2"]) == EXIT_OK
        model = EbmModel.load(tmp_path / "o" / "model.json")
        assert model.feature_names == ("a", "b")

    def test_missing_label_column(self, tmp_path):
        (tmp_path / "x.csv").write_text("id,a\nr0,1.0\nr1,2.0\n")
        assert main(["train", "--out", str(tmp_path), "--features", str(tmp_path / "x.csv")]) == EXIT_INPUT

    def test_single_class(self, tmp_path):
        (tmp_path / "x.csv").write_text("id,a,label\nr0,1.0,good\nr1,2.0,good\n")
        assert main(["train", "--out", str(tmp_path), "--features", str(tmp_path / "x.csv")]) == EXIT_INPUT

    def test_k_sweep(self, tmp_path):
        data = separable_csv(tmp_path / "toy.csv")
        argv = ["evaluate", "--out", str(tmp_path), "--features", str(data), "--k-sweep", "3,2", *QUICK_EBM]
        assert main(argv) == EXIT_OK
        with open(tmp_path / "k_sweep.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert [r[0] for r in rows[1:]] == ["k=2", "k=3"]

    def test_bad_k_sweep(self, tmp_path):
        data = separable_csv(tmp_path / "toy.csv")
        assert main(["evaluate", "--out", str(tmp_path), "--features", str(data), "--k-sweep", "two"]) == EXIT_INPUT


class TestExplain:
    @pytest.fixture()
    def trained(self, tmp_path):
        data = separable_csv(tmp_path / "toy.csv")
        main(["train", "--out", str(tmp_path / "m"), "--features", str(data), "--outer-bags", "2"])
        return data, tmp_path / "m" / "model.json"

    def test_artifacts(self, trained, tmp_path):
        data, model = trained
        out = tmp_path / "e"
        assert main(["explain", "--out", str(out), "--model", str(model), "--features", str(data), "--ids", "r0,r1"]) == EXIT_OK
        names = {p.name for p in out.iterdir()}
        assert {"importance.csv", "importance.svg", "curve_a.csv", "curve_a.svg", "local.csv"} <= names
        assert {"local_r0.svg", "local_r1.svg"} <= names
        for svg in out.glob("*.svg"):
            assert ET.parse(svg).getroot().tag.endswith("svg")

    def test_local_additivity(self, trained, tmp_path):
        data, model = trained
        out = tmp_path / "e"
        main(["explain", "--out", str(out), "--model", str(model), "--features", str(data)])
        with open(out / "local.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        by_id = {}
        for r in rows:
            by_id.setdefault(r["id"], {})[r["term"]] = float(r["score"])
        assert len(by_id) == 60
        for terms in by_id.values():
            total = terms.pop("total")
            assert sum(terms.values()) == pytest.approx(total, abs=1e-9)

    def test_reproducible(self, trained, tmp_path):
        data, model = trained
        for d in ("a", "b"):
            main(["explain", "--out", str(tmp_path / d), "--model", str(model), "--features", str(data)])
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_feature_mismatch(self, trained, tmp_path):
        _, model = trained
        (tmp_path / "other.csv").write_text("id,z\nr0,1.0\n")
        argv = ["explain", "--out", str(tmp_path / "e"), "--model", str(model), "--features", str(tmp_path / "other.csv")]
        assert main(argv) == EXIT_INPUT

    def test_needs_input(self, trained, tmp_path):
        _, model = trained
        assert main(["explain", "--out", str(tmp_path / "e"), "--model", str(model)]) == EXIT_INPUT

    def test_bad_model_file(self, tmp_path):
        (tmp_path / "m.json").write_text("{")
        argv = ["explain", "--out", str(tmp_path), "--model", str(tmp_path / "m.json"), "--features", "x.csv"]
        assert main(argv) == EXIT_INPUT

    def test_single_image(self, corpus_dir, synth_csv, tmp_path):
        main(["train", "--out", str(tmp_path / "m"), "--features", str(synth_csv), "--outer-bags", "1", "--n-pairs", "0"])
        image = sorted((corpus_dir / "images").iterdir())[0]
        argv = ["explain", "--out", str(tmp_path / "e"), "--model", str(tmp_path / "m" / "model.json"), "--image", str(image)]
        assert main(argv) == EXIT_OK
        ET.parse(tmp_path / "e" / f"local_{image.stem}.svg")


class TestPlot:
    def test_overlays_from_features(self, corpus_dir, synth_csv, tmp_path):
        argv = ["plot", "--out", str(tmp_path), "--manifest", str(corpus_dir / "manifest.tsv"), "--features", str(synth_csv)]
        assert main(argv + ["--ids", "s00000,s00001"]) == EXIT_OK
        svgs = sorted(tmp_path.glob("fit_*.svg"))
        assert [p.name for p in svgs] == ["fit_s00000.svg", "fit_s00001.svg"]
        for svg in svgs:
            root = ET.parse(svg).getroot()
            assert root.tag.endswith("svg")
            assert any(el.tag.endswith("line") for el in root.iter())

    def test_missing_manifest(self, tmp_path):
        assert main(["plot", "--out", str(tmp_path), "--manifest", str(tmp_path / "none.tsv")]) == EXIT_INPUT


class TestConfig:
    def test_parse(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# defaults\nn = 4\ngood-fraction=0.5  # half\n\n")
        assert read_config(p) == {"n": "4", "good_fraction": "0.5"}

    def test_config_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n = 4\nseed = 9\n")
        assert main(["generate", "--out", str(tmp_path / "a"), "--config", str(cfg)]) == EXIT_OK
        assert main(["generate", "--out", str(tmp_path / "b"), "--n", "4", "--seed", "9"]) == EXIT_OK
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n = 4\n")
        assert main(["generate", "--out", str(tmp_path / "a"), "--config", str(cfg), "--n", "2"]) == EXIT_OK
        assert len((tmp_path / "a" / "manifest.tsv").read_text().splitlines()) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("colour = blue\n")
        assert main(["generate", "--out", str(tmp_path), "--config", str(cfg)]) == EXIT_INPUT

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("just words\n")
        assert main(["generate", "--out", str(tmp_path), "--config", str(cfg)]) == EXIT_INPUT

    def test_missing_file(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path), "--config", str(tmp_path / "no.cfg")]) == EXIT_INPUT
