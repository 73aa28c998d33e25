"""Acceptance criteria A1-A8; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from oracles import confusion_identity, one_round_oracle

from trianglevec.ebm import EbmConfig, train_ebm
from trianglevec.fitvec import FitConfig, FitFailedError, fit_synthetic, hybrid_vector, vectorize_synth
from trianglevec.gabor import GaborParams, convolve, gabor_kernel, make_default_filterbank, vectorize_gabor
from trianglevec.harness import CvProtocol, Dataset, cross_validate, metrics_from_confusion, stratified_kfold
from trianglevec.imagegrid import BAD, GOOD, Image, normalize_minmax, prepare
from trianglevec.optimize import Bounds, DeConfig, differential_evolution
from trianglevec.synthtri import CorpusSpec, generate_samples, render_triangle, sample_good_params, sample_seed


@pytest.fixture()
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_a1_ebm_additivity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 4))
    logit = 2 * X[:, 0] - X[:, 1] + X[:, 2] * X[:, 3]
    y = np.where(rng.random(400) < 1 / (1 + np.exp(-logit)), GOOD, BAD)
    model = train_ebm(X, y, EbmConfig(outer_bags=2, n_pairs=2, max_rounds=500))
    Xq = rng.normal(scale=1.5, size=(1000, 4))
    t1 = time.perf_counter()
    manual = np.full(len(Xq), model.intercept)
    for j, t in enumerate(model.terms):
        manual += t.scores[np.searchsorted(t.edges, Xq[:, j], side="right")]
    for p in model.pair_terms:
        a, b = (model.feature_names.index(n) for n in p.features)
        manual += p.scores[np.searchsorted(p.edges[0], Xq[:, a], side="right"), np.searchsorted(p.edges[1], Xq[:, b], side="right")]
    err = float(np.abs(model.predict_scores(Xq) - manual).max())
    elapsed = time.perf_counter() - t1
    ok = err <= 1e-9 and elapsed < 1.0 and len(model.pair_terms) == 2
    verdict("A1", ok, f"max |score - lookup sum| = {err:.1e} over 1000 inputs, {elapsed:.3f} s (training {t1 - t0:.1f} s)")


def plane_wave(theta_deg, n=64):
    y, x = np.mgrid[0:n, 0:n].astype(float) - n // 2
    t = math.radians(theta_deg)
    return Image(np.cos(x * math.sin(t) + y * math.cos(t)))


def test_a2_gabor(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    img = Image(rng.random((64, 64)))
    conj = max(
        float(np.abs(np.abs(convolve(img, gabor_kernel(GaborParams(s, s, 1, o))))
                     - np.abs(convolve(img, gabor_kernel(GaborParams(s, s, 1, o + 180))))).max())
        for s in (4, 8, 16) for o in (45.0, -45.0)
    )
    base = vectorize_gabor(img)
    homog = all(np.array_equal(vectorize_gabor(Image(c * img.values)).values[:6], c * base.values[:6]) for c in (2.0, 4.0, 0.5))
    select = all(
        abs(convolve(plane_wave(o), gabor_kernel(GaborParams(4, 4, 1, o)))[32, 32])
        > abs(convolve(plane_wave(o), gabor_kernel(GaborParams(4, 4, 1, o + 90)))[32, 32])
        for o in (0.0, 45.0, -45.0, 90.0)
    )
    fft_direct = max(
        float(np.abs(convolve(img, k, method="fft") - convolve(img, k, method="direct")).max())
        for k in make_default_filterbank().kernels
    )
    elapsed = time.perf_counter() - t0
    ok = conj <= 1e-9 and homog and select and fft_direct <= 1e-9 and elapsed < 30
    verdict("A2", ok, f"conjugate {conj:.1e}, homogeneity exact {homog}, selectivity {select}, fft-direct {fft_direct:.1e}, {elapsed:.1f} s")


def recovery_errors(noise, n=200, seed=1234):
    out = []
    for i in range(n):
        rng = np.random.default_rng(sample_seed(seed, i))
        tp = sample_good_params(rng)
        img = normalize_minmax(render_triangle(tp))
        if noise:
            img = Image(img.values + rng.normal(0.0, noise, img.shape))
        p = fit_synthetic(img, FitConfig().with_seed(i)).params
        out.append((abs(p.h.b - tp.h.b), abs(p.v.b - tp.v.b), abs(p.d.b - tp.d.b), math.degrees(abs(p.theta - tp.theta))))
    return np.array(out)


@pytest.mark.slow
def test_a3_fit_recovery(verdict):
    t0 = time.perf_counter()
    rates = []
    for noise in (0.0, 0.05):
        e = recovery_errors(noise)
        rates.append(float(np.mean((e[:, :3].max(axis=1) <= 2) & (e[:, 3] <= 5))))
    elapsed = time.perf_counter() - t0
    ok = rates[0] == 1.0 and rates[1] >= 0.90 and elapsed <= 20 * 60
    verdict("A3", ok, f"within 2 px / 5 deg: clean {100 * rates[0]:.1f}%, noisy {100 * rates[1]:.1f}% of 200 each, {elapsed / 60:.1f} min")


def test_a4_one_round_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=20) > 0).astype(float)  # 1 = good
    cfg = EbmConfig(outer_bags=1, learning_rate=1.0, max_rounds=1, smoothing_window=0, n_pairs=0, validation_fraction=0.0, min_samples_leaf=1)
    model = train_ebm(X, y, cfg)
    alpha, tables = one_round_oracle(X, y, lr=1.0, min_leaf=1)
    diff = abs(model.intercept - alpha)
    same_partition = True
    for t, want in zip(model.terms, tables):
        same_partition &= bool(np.array_equal(np.diff(t.scores) != 0, np.abs(np.diff(want)) > 1e-12))
        diff = max(diff, float(np.abs(t.scores - want).max()))
    elapsed = time.perf_counter() - t0
    ok = same_partition and diff <= 1e-12 and elapsed < 1.0
    verdict("A4", ok, f"identical partition {same_partition}, max deviation from exhaustive oracle {diff:.1e} on 20 samples, {elapsed:.2f} s")


def corpus_features(samples, seed=0):
    bank = make_default_filterbank()
    rows = {"gabor": [], "synth": [], "hybrid": []}
    kept = []
    for i, s in enumerate(samples):
        img = prepare(s.image)
        try:
            sv = vectorize_synth(fit_synthetic(img, FitConfig().with_seed(sample_seed(seed, i))))
        except FitFailedError:
            continue
        kept.append(s)
        rows["gabor"].append(vectorize_gabor(img, bank))
        rows["synth"].append(sv)
        rows["hybrid"].append(hybrid_vector(sv, img, bank))
    ids = tuple(s.image.id for s in kept)
    labels = tuple(s.label for s in kept)
    return {m: Dataset(ids, v[0].names, np.array([fv.values for fv in v]), labels) for m, v in rows.items()}


@pytest.mark.slow
def test_a5_end_to_end(verdict):
    t0 = time.perf_counter()
    spec = CorpusSpec(n=500, good_fraction=0.3, noise_sigma=0.05, ridge_amplitude=0.3, ridge_period=6.0, seed=0)
    data = corpus_features(generate_samples(spec))
    acc, identity = {}, True
    for method, d in data.items():
        m = cross_validate(d, CvProtocol(runs=5, k=6), EbmConfig())
        acc[method] = m.accuracy[0]
        identity &= all(r.accuracy + r.type1 + r.type2 == pytest.approx(100.0, abs=1e-9) for r in m.runs)
        identity &= all(r.total == len(d) - round(0.1 * d.labels.count(GOOD)) - round(0.1 * d.labels.count(BAD)) for r in m.runs)
    elapsed = time.perf_counter() - t0
    ok = (
        acc["synth"] >= 95 and acc["gabor"] >= 95 and acc["hybrid"] >= max(acc["synth"], acc["gabor"]) - 1
        and identity and elapsed <= 45 * 60
    )
    detail = ", ".join(f"{k} {v:.1f}%" for k, v in acc.items())
    verdict("A5", ok, f"{detail}; {len(data['synth'])} of 500 fitted; identity {identity}; {elapsed / 60:.1f} min")


@pytest.mark.skip(reason="A6 needs the external measured dataset, which is not bundled")
def test_a6_measured_dataset():
    pass


def test_a7_differential_evolution(verdict):
    t0 = time.perf_counter()

    def sphere(x):
        return np.sum(np.atleast_2d(x) ** 2, axis=1)

    def rastrigin(x):
        x = np.atleast_2d(x)
        return 10.0 * x.shape[1] + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x), axis=1)

    seen_out = 0

    def guarded(f, b):
        def g(pop):
            nonlocal seen_out
            seen_out += int(np.sum(~b.contains(pop)))
            return f(pop)

        return g

    bs, br = Bounds([-5.0] * 4, [5.0] * 4), Bounds([-5.12] * 2, [5.12] * 2)
    sph = sum(differential_evolution(guarded(sphere, bs), bs, DeConfig(seed=s), vectorized=True).f_best < 1e-6 for s in range(100))
    ras = sum(differential_evolution(guarded(rastrigin, br), br, DeConfig(seed=s), vectorized=True).f_best < 1e-3 for s in range(100))
    a = differential_evolution(rastrigin, br, DeConfig(seed=7), vectorized=True)
    b = differential_evolution(rastrigin, br, DeConfig(seed=7), vectorized=True)
    same = np.array_equal(a.x_best, b.x_best) and a.f_best == b.f_best and a.evals == b.evals
    elapsed = time.perf_counter() - t0
    ok = sph >= 95 and ras >= 95 and seen_out == 0 and same and elapsed < 120
    verdict("A7", ok, f"sphere-4D {sph}/100, Rastrigin-2D {ras}/100, out-of-bounds candidates {seen_out}, deterministic {same}, {elapsed:.1f} s")


def test_a8_protocol_accounting(verdict):
    t0 = time.perf_counter()
    labels = np.array([GOOD] * 210 + [BAD] * 692)
    folds = stratified_kfold(list(labels), 6, seed=0)
    good = {int(np.sum((folds == k) & (labels == GOOD))) for k in range(6)}
    bad = {int(np.sum((folds == k) & (labels == BAD))) for k in range(6)}
    m = metrics_from_confusion(406, 14, 27, 99)
    rates = tuple(round(float(v), 1) for v in (m.accuracy, m.type1, m.type2))
    oracle = tuple(round(v, 1) for v in confusion_identity(406, 14, 27, 99))
    elapsed = time.perf_counter() - t0
    ok = good == {35} and bad <= {115, 116} and len(folds) == 902 and m.total == 546 and rates == (92.5, 4.9, 2.6) == oracle and elapsed < 1
    verdict("A8", ok, f"good per fold {sorted(good)}, bad per fold {sorted(bad)}, published Gabor-row rates {rates}, {elapsed:.3f} s")
