"""Command-line front end: ``trianglevec generate|vectorize|train|evaluate|explain|plot``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import svgplot
from .ebm import EbmConfig, EbmError, EbmModel, InvalidDataError, train_ebm
from .features import SYNTH_FEATURES, SchemaError, read_feature_csv, write_feature_csv
from .fitvec import FitConfig, FitFailedError, fit_synthetic, hybrid_vector, vectorize_synth
from .gabor import load_filterbank, make_default_filterbank, vectorize_gabor
from .harness import CvProtocol, Dataset, ProtocolError, cross_validate, format_report, k_sweep, stratified_holdout, write_metrics_csv
from .imagegrid import ImageError, InvalidParameterError, load_image, prepare, read_manifest, write_csv_grid, write_manifest, write_pgm16
from .optimize import DeConfig
from .synthtri import AMBIGUOUS_MODES, CorpusSpec, generate_samples, sample_seed, write_params_sidecar

log = logging.getLogger("trianglevec")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

METHODS = ("gabor", "synth", "hybrid")


class InputError(Exception):
    pass


class ComputationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config file


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys use flag names."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None):
        cfg = read_config(pre.config)
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(k for k in cfg if k not in known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for k, v in cfg.items():
            act = known[k]
            defaults[k] = act.type(v) if act.type else v
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# helpers


def _out_dir(path: str) -> Path:
    p = Path(path)
    if p.exists() and not p.is_dir():
        raise InputError(f"output path {p} exists and is not a directory")
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {p}: {exc}") from exc
    return p


def _ebm_config(args) -> EbmConfig:
    return EbmConfig(
        n_bins=args.n_bins,
        learning_rate=args.learning_rate,
        max_rounds=args.max_rounds,
        greedy_rounds=args.greedy_rounds,
        smoothing_window=args.smoothing_window,
        outer_bags=args.outer_bags,
        early_stop_patience=args.patience,
        n_pairs=args.n_pairs,
        seed=args.seed,
    )


def _load_dataset(path: str) -> Dataset:
    if not Path(path).is_file():
        raise InputError(f"feature file {path} not found")
    ids, names, X, labels = read_feature_csv(path, require_label=True)
    if not ids:
        raise InputError(f"{path}: no rows")
    if len(set(labels)) < 2:
        raise InputError(f"{path}: training needs both classes")
    return Dataset(tuple(ids), names, X, tuple(labels))


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    out = _out_dir(args.out)
    modes = frozenset(m for m in (args.ambiguous or "").split(",") if m)
    spec = CorpusSpec(
        n=args.n, good_fraction=args.good_fraction, noise_sigma=args.noise, ridge_amplitude=args.ridge_amplitude,
        ridge_period=args.ridge_period, ambiguous_modes=modes, ambiguous_fraction=args.ambiguous_fraction,
        seed=args.seed, size=args.size,
    )
    samples = generate_samples(spec)
    img_dir = out / "images"
    img_dir.mkdir(exist_ok=True)
    records = []
    for s in samples:
        if args.format == "pgm":
            rel = Path("images") / f"{s.image.id}.pgm"
            write_pgm16(s.image, out / rel)
        else:
            rel = Path("images") / f"{s.image.id}.csv"
            write_csv_grid(s.image, out / rel)
        records.append((s.image.id, rel, s.label))
    manifest = out / "manifest.tsv"
    write_manifest(records, manifest)
    write_params_sidecar(samples, out / "params.jsonl")
    n_good = sum(s.label == "good" for s in samples)
    print(f"wrote {len(samples)} images ({n_good} good, {len(samples) - n_good} bad) to {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# vectorize


def _vectorize_one(task):
    """Worker: returns (id, label, FeatureVector | None, evals | None, error | None)."""
    image_id, path, label, method, fit_cfg, bank_path = task
    img = prepare(load_image(path, image_id=image_id))
    bank = load_filterbank(bank_path) if bank_path else make_default_filterbank()
    if method == "gabor":
        return image_id, label, vectorize_gabor(img, bank), None, None
    try:
        fr = fit_synthetic(img, fit_cfg)
    except FitFailedError as exc:
        return image_id, label, None, exc.result.evals, str(exc)
    sv = vectorize_synth(fr)
    if method == "hybrid":
        sv = hybrid_vector(sv, img, bank)
    return image_id, label, sv, fr.evals, None


def cmd_vectorize(args) -> int:
    out = _out_dir(args.out)
    if not Path(args.manifest).is_file():
        raise InputError(f"manifest {args.manifest} not found")
    records = read_manifest(args.manifest)
    if not records:
        raise InputError(f"{args.manifest}: empty manifest")
    missing = [str(p) for _, p, _ in records if not Path(p).is_file()]
    if missing:
        raise InputError(f"missing image file {missing[0]}")
    fit_cfg = FitConfig(blend_weight=args.blend_weight, de=DeConfig(max_generations=args.max_generations))
    tasks = []
    for index, (image_id, path, label) in enumerate(records):
        seed = sample_seed(args.seed, index)
        tasks.append((image_id, str(path), label, args.method, fit_cfg.with_seed(seed), args.filterbank))
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_vectorize_one, tasks))
    else:
        results = [_vectorize_one(t) for t in tasks]

    ids, vecs, labels, evals, failed = [], [], [], [], []
    for k, (image_id, label, fv, ev, err) in enumerate(results, start=1):
        if fv is None:
            log.warning("fit failed for %s: %s", image_id, err)
            failed.append((image_id, err))
        else:
            ids.append(image_id)
            vecs.append(fv)
            labels.append(label)
            evals.append(ev)
        if args.progress:
            print(f"[{k}/{len(results)}] {image_id}{' FAILED' if fv is None else ''}", file=sys.stderr)
    if not vecs:
        raise ComputationError(f"no image could be vectorized ({len(failed)} failures)")
    csv_path = out / f"features_{args.method}.csv"
    extra = {"evals": evals} if args.method != "gabor" else None
    write_feature_csv(csv_path, ids, vecs, labels, extra)
    if failed:
        with open(out / f"failed_{args.method}.tsv", "w", encoding="utf-8") as fh:
            for image_id, err in failed:
                fh.write(f"{image_id}\t{err}\n")
    print(f"vectorized {len(ids)} images with {args.method} ({len(vecs[0])} features); {len(failed)} failed -> {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / evaluate


def _final_model(data: Dataset, args, cfg: EbmConfig) -> EbmModel:
    hold = stratified_holdout(data.labels, args.holdout, args.seed)
    rest = data.subset(np.flatnonzero(~hold))
    return train_ebm(rest.X, rest.labels, cfg, rest.feature_names)


def cmd_train(args) -> int:
    out = _out_dir(args.out)
    data = _load_dataset(args.features)
    model = _final_model(data, args, _ebm_config(args))
    model.save(out / "model.json")
    print(f"trained model on {len(data)} rows ({len(model.feature_names)} features) -> {out / 'model.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args.out)
    data = _load_dataset(args.features)
    cfg = _ebm_config(args)
    proto = CvProtocol(runs=args.runs, k=args.k, holdout_fraction=args.holdout, seed=args.seed)
    if args.k_sweep:
        return _evaluate_sweep(data, args, proto, cfg, out)
    metrics = cross_validate(data, proto, cfg)
    title = args.title or Path(args.features).stem
    report = format_report(metrics, title)
    (out / "report.txt").write_text(report + "\n", encoding="utf-8")
    write_metrics_csv(out / "metrics.csv", {title: metrics})
    _final_model(data, args, cfg).save(out / "model.json")
    print(report)
    return EXIT_OK


def _evaluate_sweep(data: Dataset, args, proto: CvProtocol, cfg: EbmConfig, out: Path) -> int:
    try:
        ks = sorted({int(k) for k in args.k_sweep.split(",") if k.strip()})
    except ValueError as exc:
        raise InputError(f"--k-sweep expects integers: {exc}") from exc
    if not ks:
        raise InputError("--k-sweep lists no fold counts")
    results = k_sweep(data, ks, proto, cfg)
    rows = {f"k={k}": m for k, m in results.items()}
    write_metrics_csv(out / "k_sweep.csv", rows)
    report = "\n\n".join(format_report(m, name) for name, m in rows.items())
    (out / "k_sweep.txt").write_text(report + "\n", encoding="utf-8")
    print(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# explain


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _explain_inputs(args, model: EbmModel):
    """(ids, matrix) in model feature order from a CSV or a single image."""
    if args.features:
        ids, names, X, _ = read_feature_csv(args.features, require_label=False)
        missing = [n for n in model.feature_names if n not in names]
        if missing:
            raise InputError(f"feature {missing[0]!r} required by the model is not in {args.features}")
        cols = [names.index(n) for n in model.feature_names]
        return ids, X[:, cols]
    img = prepare(load_image(args.image))
    names = model.feature_names
    if names[: len(SYNTH_FEATURES)] == SYNTH_FEATURES:
        fv = vectorize_synth(fit_synthetic(img, FitConfig(blend_weight=args.blend_weight).with_seed(args.seed)))
        if len(names) > len(SYNTH_FEATURES):
            fv = hybrid_vector(fv, img)
    else:
        fv = vectorize_gabor(img)
    d = fv.as_dict()
    missing = [n for n in names if n not in d]
    if missing:
        raise InputError(f"cannot produce feature {missing[0]!r} from an image")
    return [Path(args.image).stem], np.array([[d[n] for n in names]])


def cmd_explain(args) -> int:
    out = _out_dir(args.out)
    model = _load_model(args.model)
    if not args.features and not args.image:
        raise InputError("explain needs --features or --image")
    ids, X = _explain_inputs(args, model)

    imp = model.feature_importance(X)
    _write_rows(out / "importance.csv", ["term", "importance"], [(n, _fmt(v)) for n, v in imp])
    (out / "importance.svg").write_text(
        svgplot.bar_chart([n for n, _ in imp], [v for _, v in imp], "mean |score|"), encoding="utf-8"
    )
    for name in model.feature_names:
        c = model.feature_curve(name)
        rows = zip(map(_fmt, c.values), map(_fmt, c.scores), map(_fmt, c.counts_good), map(_fmt, c.counts_bad))
        _write_rows(out / f"curve_{_safe(name)}.csv", ["value", "score", "count_good", "count_bad"], rows)
        (out / f"curve_{_safe(name)}.svg").write_text(
            svgplot.curve_plot(c.values, c.scores, c.counts_good, c.counts_bad, name), encoding="utf-8"
        )

    rows = []
    wanted = set(args.ids.split(",")) if args.ids else {ids[0]}
    for image_id, x in zip(ids, X):
        ex = model.explain_local(x)
        for name, v in ex.per_term_score:
            rows.append((image_id, name, _fmt(v)))
        rows.append((image_id, "intercept", _fmt(ex.intercept)))
        rows.append((image_id, "total", _fmt(ex.total)))
        if image_id in wanted:
            title = f"{image_id}: {ex.predicted} (total {ex.total:.3f}, intercept {ex.intercept:.3f} not shown)"
            (out / f"local_{_safe(image_id)}.svg").write_text(
                svgplot.signed_bar_chart([n for n, _ in ex.per_term_score], [v for _, v in ex.per_term_score], title),
                encoding="utf-8",
            )
    _write_rows(out / "local.csv", ["id", "term", "score"], rows)
    print(f"wrote explanations for {len(ids)} rows to {out}")
    return EXIT_OK


def _load_model(path: str) -> EbmModel:
    try:
        return EbmModel.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load model {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# plot


def fit_overlay_lines(fv: dict, h: int, w: int):
    """Overlay segments for the fitted wall and diagonal positions."""
    lines = [
        (fv["H_B"], 0, fv["H_B"], h - 1, "#e34a33", "H_B"),
        (0, fv["V_B"], w - 1, fv["V_B"], "#2b8cbe", "V_B"),
    ]
    th, db = fv["D_theta"], fv["D_B"]
    s, c = math.sin(th), math.cos(th)
    # x sin + y cos = D_B clipped to the frame
    pts = []
    for x in (0.0, w - 1.0):
        if c > 1e-12:
            y = (db - x * s) / c
            if 0 <= y <= h - 1:
                pts.append((x, y))
    for y in (0.0, h - 1.0):
        if s > 1e-12:
            x = (db - y * c) / s
            if 0 <= x <= w - 1:
                pts.append((x, y))
    pts = sorted(set(pts))
    if len(pts) >= 2:
        (x0, y0), (x1, y1) = pts[0], pts[-1]
        lines.append((x0, y0, x1, y1, "#31a354", "D_B"))
    return lines


def cmd_plot(args) -> int:
    out = _out_dir(args.out)
    if not Path(args.manifest).is_file():
        raise InputError(f"manifest {args.manifest} not found")
    records = read_manifest(args.manifest)
    fits = {}
    if args.features:
        ids, names, X, _ = read_feature_csv(args.features, require_label=False)
        fits = {i: dict(zip(names, row)) for i, row in zip(ids, X)}
    wanted = set(args.ids.split(",")) if args.ids else None
    n = 0
    for index, (image_id, path, label) in enumerate(records):
        if wanted is not None and image_id not in wanted:
            continue
        img = prepare(load_image(path, image_id=image_id))
        fv = fits.get(image_id)
        if fv is None:
            try:
                fr = fit_synthetic(img, FitConfig(blend_weight=args.blend_weight).with_seed(sample_seed(args.seed, index)))
            except FitFailedError:
                log.warning("fit failed for %s; plotting without overlay", image_id)
                fv = None
            else:
                fv = vectorize_synth(fr).as_dict()
        lines = fit_overlay_lines(fv, *img.shape) if fv is not None else []
        svg = svgplot.image_overlay(img.values, lines, f"{image_id} ({label})")
        (out / f"fit_{_safe(image_id)}.svg").write_text(svg, encoding="utf-8")
        n += 1
    print(f"wrote {n} overlay plots to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_ebm_args(p: argparse.ArgumentParser) -> None:
    d = EbmConfig()
    p.add_argument("--k", type=int, default=6, help="cross-validation folds")
    p.add_argument("--runs", type=int, default=5, help="repeated cross-validation runs")
    p.add_argument("--holdout", type=float, default=0.10, help="stratified holdout fraction per run")
    p.add_argument("--n-bins", type=int, default=d.n_bins)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--max-rounds", type=int, default=d.max_rounds)
    p.add_argument("--greedy-rounds", type=int, default=d.greedy_rounds)
    p.add_argument("--smoothing-window", type=int, default=d.smoothing_window)
    p.add_argument("--outer-bags", type=int, default=d.outer_bags)
    p.add_argument("--patience", type=int, default=d.early_stop_patience)
    p.add_argument("--n-pairs", type=int, default=d.n_pairs)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="trianglevec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file providing defaults for the flags")
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", required=True, help="output directory")

    sp = {}
    p = subs.add_parser("generate", parents=[common], help="write a labelled synthetic corpus")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--good-fraction", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--ridge-amplitude", type=float, default=0.3)
    p.add_argument("--ridge-period", type=float, default=6.0)
    p.add_argument("--ambiguous", default="", help=f"comma list of {','.join(AMBIGUOUS_MODES)}")
    p.add_argument("--ambiguous-fraction", type=float, default=0.25)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")
    p.set_defaults(func=cmd_generate)
    sp["generate"] = p

    p = subs.add_parser("vectorize", parents=[common], help="turn images into feature vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=METHODS, default="synth")
    p.add_argument("--lambda", dest="blend_weight", type=float, default=0.5, help="gradient/identity blend weight")
    p.add_argument("--max-generations", type=int, default=DeConfig().max_generations)
    p.add_argument("--filterbank", help="filterbank file (default bank if omitted)")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = all cores)")
    p.add_argument("--progress", action="store_true", help="report each image on stderr")
    p.set_defaults(func=cmd_vectorize)
    sp["vectorize"] = p

    p = subs.add_parser("train", parents=[common], help="train the final model on a feature table")
    p.add_argument("--features", required=True)
    _add_ebm_args(p)
    p.set_defaults(func=cmd_train)
    sp["train"] = p

    p = subs.add_parser("evaluate", parents=[common], help="repeated stratified cross-validation report")
    p.add_argument("--features", required=True)
    p.add_argument("--title", default="")
    p.add_argument("--k-sweep", default="", help="comma list of fold counts to compare instead of a single --k")
    _add_ebm_args(p)
    p.set_defaults(func=cmd_evaluate)
    sp["evaluate"] = p

    p = subs.add_parser("explain", parents=[common], help="importance, curves and local explanations")
    p.add_argument("--model", required=True)
    p.add_argument("--features")
    p.add_argument("--image")
    p.add_argument("--ids", help="comma list of ids to draw local charts for (default: first row)")
    p.add_argument("--lambda", dest="blend_weight", type=float, default=0.5)
    p.set_defaults(func=cmd_explain)
    sp["explain"] = p

    p = subs.add_parser("plot", parents=[common], help="image overlays of the fitted wall positions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="synthetic-fit feature CSV (images are fitted if absent)")
    p.add_argument("--ids", help="comma list of ids (default: all)")
    p.add_argument("--lambda", dest="blend_weight", type=float, default=0.5)
    p.set_defaults(func=cmd_plot)
    sp["plot"] = p
    return parser, sp


INPUT_ERRORS = (InputError, ImageError, SchemaError, ProtocolError, InvalidParameterError, InvalidDataError, EbmError, OSError)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        known, _ = parser.parse_known_args(argv)
        args = _apply_config(parser, subs[known.command], argv)
    except InputError as exc:
        print(f"trianglevec: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"trianglevec: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitFailedError, RuntimeError, ArithmeticError) as exc:
        print(f"trianglevec: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
