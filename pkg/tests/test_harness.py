import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import confusion_identity

from trianglevec.ebm import EbmConfig
from trianglevec.gabor import Filterbank, GaborKernel, make_default_filterbank
from trianglevec.harness import (
    METRICS_COLUMNS,
    CvProtocol,
    Dataset,
    Metrics,
    ProtocolError,
    compute_metrics,
    cross_validate,
    format_report,
    format_value,
    k_sweep,
    metrics_from_confusion,
    refine_filterbank,
    stratified_holdout,
    stratified_kfold,
    write_metrics_csv,
)
from trianglevec.imagegrid import BAD, GOOD, InvalidParameterError
from trianglevec.synthtri import CorpusSpec, generate_corpus

FAST = EbmConfig(outer_bags=2, max_rounds=300)


def labels(n_good, n_bad):
    return [GOOD] * n_good + [BAD] * n_bad


def dataset(X, labs):
    return Dataset(tuple(f"s{i}" for i in range(len(labs))), tuple(f"f{j}" for j in range(X.shape[1])), X, tuple(labs))


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(CorpusSpec(n=120, seed=5))


class TestFolds:
    def test_balanced_small(self):
        f = stratified_kfold(labels(12, 12), 6, seed=1)
        lab = np.array(labels(12, 12))
        for k in range(6):
            assert np.sum((f == k) & (lab == GOOD)) == 2
            assert np.sum((f == k) & (lab == BAD)) == 2

    def test_measured_class_counts(self):
        lab = np.array(labels(210, 692))
        f = stratified_kfold(list(lab), 6, seed=0)
        good = [int(np.sum((f == k) & (lab == GOOD))) for k in range(6)]
        bad = [int(np.sum((f == k) & (lab == BAD))) for k in range(6)]
        assert set(good) == {35}
        assert set(bad) <= {115, 116} and sum(bad) == 692

    def test_deterministic(self):
        lab = labels(30, 50)
        assert np.array_equal(stratified_kfold(lab, 5, 3), stratified_kfold(lab, 5, 3))
        assert not np.array_equal(stratified_kfold(lab, 5, 3), stratified_kfold(lab, 5, 4))

    def test_class_smaller_than_k(self):
        with pytest.raises(ProtocolError):
            stratified_kfold(labels(3, 20), 6)

    def test_k_too_small(self):
        with pytest.raises(InvalidParameterError):
            stratified_kfold(labels(3, 3), 1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 10), st.integers(0, 200), st.integers(0, 200), st.integers(0, 2**32))
    def test_proportions_and_partition(self, k, extra_g, extra_b, seed):
        ng, nb = k + extra_g, k + extra_b
        lab = np.array(labels(ng, nb))
        rng = np.random.default_rng(seed)
        lab = lab[rng.permutation(lab.size)]
        f = stratified_kfold(list(lab), k, seed)
        assert f.shape == lab.shape and f.min() == 0 and f.max() == k - 1
        for cls, n in ((GOOD, ng), (BAD, nb)):
            per = np.array([np.sum((f == j) & (lab == cls)) for j in range(k)])
            assert per.sum() == n
            assert per.max() - per.min() <= 1
        sizes = np.bincount(f, minlength=k)
        assert sizes.max() - sizes.min() <= 1

    def test_holdout_size(self):
        mask = stratified_holdout(labels(210, 692), 0.10, seed=2)
        lab = np.array(labels(210, 692))
        assert np.sum(mask & (lab == GOOD)) == 21 and np.sum(mask & (lab == BAD)) == 69


class TestMetrics:
    def test_published_counts_identity(self):
        m = metrics_from_confusion(406, 14, 27, 99)
        assert m.total == 546
        assert round(m.accuracy, 1) == 92.5
        assert round(m.type1, 1) == 4.9
        assert round(m.type2, 1) == 2.6
        assert (m.accuracy, m.type1, m.type2) == pytest.approx(confusion_identity(406, 14, 27, 99))

    def test_all_correct(self):
        m = compute_metrics([GOOD, BAD, BAD], [GOOD, BAD, BAD])
        assert m.accuracy == 100.0 and m.confusion[0, 1] == 0 and m.confusion[1, 0] == 0

    def test_single_wrong(self):
        m = compute_metrics([GOOD], [BAD])
        assert m.accuracy == 0.0 and m.confusion.tolist() == [[0, 0], [1, 0]]
        assert m.type1 == 100.0

    def test_orientation(self):
        # rows are the real class, columns the prediction
        m = compute_metrics([BAD, GOOD, GOOD], [GOOD, GOOD, BAD])
        assert m.confusion.tolist() == [[1, 1], [1, 0]]

    def test_errors(self):
        with pytest.raises(ProtocolError):
            compute_metrics([GOOD], [GOOD, BAD])
        with pytest.raises(ProtocolError):
            compute_metrics([], [])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 1000), min_size=4, max_size=4).filter(lambda c: sum(c) > 0))
    def test_rates_sum_to_100(self, c):
        m = metrics_from_confusion(*c)
        assert m.accuracy + m.type1 + m.type2 == pytest.approx(100.0, abs=1e-9)
        assert m.total == sum(c)

    def test_aggregate(self):
        runs = (metrics_from_confusion(40, 2, 3, 55), metrics_from_confusion(38, 4, 1, 57))
        agg = Metrics(runs)
        assert agg.accuracy[0] == pytest.approx(95.0)
        assert agg.accuracy[1] == pytest.approx(np.std([95.0, 95.0], ddof=1))
        mean, std = agg.confusion
        assert mean.tolist() == [[39.0, 3.0], [2.0, 56.0]]
        assert std[0, 0] == pytest.approx(np.std([40, 38], ddof=1))

    def test_format(self):
        assert format_value(92.49, 1.23) == "92.5(1.2)"
        text = format_report(Metrics((metrics_from_confusion(406, 14, 27, 99),) * 2), "Gabor")
        assert "accuracy  92.5(0.0) %" in text and text.startswith("Gabor")

    def test_csv(self, tmp_path):
        m = Metrics((metrics_from_confusion(406, 14, 27, 99), metrics_from_confusion(400, 20, 32, 94)))
        write_metrics_csv(tmp_path / "m.csv", {"gabor": m})
        rows = list(csv.reader(open(tmp_path / "m.csv")))
        assert tuple(rows[0]) == METRICS_COLUMNS
        assert rows[1][0] == "gabor" and float(rows[1][7]) == 403.0


class TestCrossValidate:
    def _separable(self, n=120):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, n)
        x[np.abs(x) < 0.05] += 0.1
        return dataset(np.column_stack([x, rng.normal(size=n)]), [GOOD if v > 0 else BAD for v in x])

    def test_separable(self):
        m = cross_validate(self._separable(), CvProtocol(runs=2), EbmConfig())
        assert m.accuracy[0] == 100.0 and m.type1[0] == 0.0 and m.type2[0] == 0.0

    def test_null_labels(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(500, 4))
        labs = [GOOD if u < 0.3 else BAD for u in rng.random(500)]
        m = cross_validate(dataset(X, labs), CvProtocol(runs=2), EbmConfig())
        base = 100.0 * labs.count(BAD) / 500
        assert abs(m.accuracy[0] - base) < 5.0

    def test_accounting(self):
        data = self._separable(100)
        proto = CvProtocol(runs=3, k=4, holdout_fraction=0.1)
        m = cross_validate(data, proto, FAST)
        assert len(m.runs) == 3 and len(m.holdout) == 3
        held = stratified_holdout(data.labels, 0.1, 0).sum()
        for r in m.runs:
            assert r.total == len(data) - held
            assert r.accuracy + r.type1 + r.type2 == pytest.approx(100.0)
        for r in m.holdout:
            assert r.total == held

    def test_deterministic(self):
        data = self._separable(80)
        rng = np.random.default_rng(1)
        noisy = Dataset(data.ids, data.feature_names, data.X + rng.normal(0, 0.3, data.X.shape), data.labels)
        a = cross_validate(noisy, CvProtocol(runs=2, k=3, seed=9), FAST)
        b = cross_validate(noisy, CvProtocol(runs=2, k=3, seed=9), FAST)
        assert [r.confusion.tolist() for r in a.runs] == [r.confusion.tolist() for r in b.runs]

    def test_no_holdout(self):
        m = cross_validate(self._separable(60), CvProtocol(runs=1, k=3, holdout_fraction=0.0), FAST)
        assert m.runs[0].total == 60 and m.holdout_metrics() is None

    def test_k_sweep(self):
        res = k_sweep(self._separable(60), [2, 3], CvProtocol(runs=1), FAST)
        assert sorted(res) == [2, 3]

    def test_protocol_validation(self):
        with pytest.raises(InvalidParameterError):
            CvProtocol(k=1)
        with pytest.raises(InvalidParameterError):
            CvProtocol(holdout_fraction=1.0)

    def test_dataset_validation(self):
        with pytest.raises(ProtocolError):
            Dataset(("a",), ("f",), np.zeros((2, 1)), (GOOD,))
        with pytest.raises(ProtocolError):
            Dataset(("a",), ("f",), np.zeros((1, 1)), ("ugly",))


class TestRefine:
    def test_default_bank_is_fixpoint(self, corpus):
        bank = make_default_filterbank()
        assert refine_filterbank(corpus, bank).names == bank.names

    def test_zero_threshold_keeps_everything(self, corpus):
        bank = make_default_filterbank().subset(["G45_4_4", "G-45_8_8"])
        assert refine_filterbank(corpus, bank, FAST, drop_threshold=0.0).names == bank.names

    def test_drops_zero_response_filter(self, corpus):
        base = make_default_filterbank()
        k = base["G45_16_16"]
        dead = GaborKernel(k.params, 3, np.zeros((3, 3), dtype=complex))
        bank = Filterbank((k, k, dead, base["G-45_4_4"]), ("A", "A_copy", "dead", "B"))
        out = refine_filterbank(corpus, bank, FAST)
        assert "dead" not in out.names
        assert "A" in out.names or "A_copy" in out.names

    def test_everything_dropped(self, corpus):
        with pytest.raises(ProtocolError):
            refine_filterbank(corpus, make_default_filterbank().subset(["G45_4_4"]), FAST, drop_threshold=2.0)


def test_holdout_with_empty_class():
    mask = stratified_holdout([GOOD] * 20, 0.1, 0)
    assert mask.sum() == 2
