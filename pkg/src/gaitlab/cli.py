"""Command line entry point: ``gaitlab <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import GaitlabError
from .gallery import Gallery
from .geometric import load_spec
from .learned import fit_model, load_model, project, save_model
from .metrics import clustering_scores, evaluate, kmeans, pair_summary, whiten
from .mocap import DEFAULT_FRAME_RATE, DEFAULT_FRAMES, normalize_sample, parse_dataset, write_dataset
from .skeleton import JointMask
from .synth import SynthParams, synthesize_dataset

logger = logging.getLogger("gaitlab")


def _pair(text: str) -> tuple[int, int]:
    a, _, b = text.partition(",")
    return int(a), int(b)


def _csv_list(text: str) -> list[str]:
    return [t for t in text.split(",") if t]


def _load(path, args, normalize=False):
    ds = parse_dataset(path, vertical_axis=args.vertical, frame_rate=args.frame_rate)
    return ds.map(normalize_sample) if normalize else ds


def _emit(doc, out):
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _model_from_args(args, learn=None):
    if getattr(args, "model", None):
        return load_model(args.model)
    if args.method == "raw":
        return fit_model("raw", [], frames=args.frames)
    if args.method == "geometric":
        return fit_model("geometric", learn or [], spec=load_spec(args.spec or "preset-broad"),
                         frame_rate=args.frame_rate)
    raise GaitlabError("give --model, or --method raw|geometric")


# ---------------------------------------------------------------------------

def cmd_ingest(args):
    ds = _load(args.input, args, normalize=not args.no_normalize)
    write_dataset(ds, args.out)
    logger.info("ingested %d samples of %d identities", ds.n_samples, ds.n_classes)


def cmd_synth(args):
    params = SynthParams(frame_rate=args.frame_rate)
    write_dataset(synthesize_dataset(args.ids, args.per_id, args.seed, params), args.out)


def cmd_fit(args):
    learn = _load(args.learn, args)
    mask = JointMask.excluding(_csv_list(args.exclude)) if args.exclude else None
    spec = load_spec(args.spec) if args.method == "geometric" else None
    model = fit_model(args.method, learn.samples, mask=mask, frames=args.frames,
                      frame_rate=args.frame_rate, variance_keep=args.variance_keep, spec=spec,
                      metric=args.metric)
    save_model(model, args.out)
    logger.info("fitted %s: %s -> %d features", model.method, model.d_in, model.d_out)


def cmd_eval(args):
    held = _load(args.eval, args)
    model = _model_from_args(args)
    T = model.transform(held.samples)
    doc = evaluate(T, held.labels, model, _csv_list(args.metrics))
    doc["pairs"] = pair_summary(T, held.labels, model)
    doc["d_out"] = model.d_out
    _emit(doc, args.out)


def cmd_cluster(args):
    held = _load(args.eval, args)
    model = _model_from_args(args)
    X = whiten(model.transform(held.samples), model)
    result = kmeans(X, args.k, args.seed, args.max_iter, args.restarts)
    s = clustering_scores(result, held.labels)
    doc = {"P": s.purity, "RI": s.rand, "F": s.f_measure, "JI": s.jaccard,
           "FMI": s.fowlkes_mallows, "pairs": s.pairs._asdict(), "K": args.k,
           "sse": result.sse, "assignment": result.assignment.tolist()}
    _emit(doc, args.out)


def cmd_sweep(args):
    data = _load(args.data, args)
    sequence = harness.configuration_sequence(data, _pair(args.start), args.end, args.seed)
    corruptions = [harness.CorruptionSpec.parse(c) for c in _csv_list(args.corrupt)]
    report = harness.run_sweep(_csv_list(args.methods), data, sequence, corruptions,
                               args.seed, args.frames, args.corrupt_learn)
    report.write(args.out)


def cmd_corrupt(args):
    data = _load(args.input, args)
    if args.kind == "subst":
        data = harness.minmax_normalize(data)
        data = harness.corrupt_substitution(data, args.x, args.seed)
    else:
        data = harness.corrupt_multiplicative(data, args.x, args.seed)
    write_dataset(data, args.out)


def cmd_robust(args):
    data = _load(args.data, args)
    n_learn, n_eval = _pair(args.config)
    config = harness.random_split(data, n_learn, n_eval, args.seed)
    if args.exclusions == "default":
        exclusions = harness.default_exclusions()
    elif args.exclusions == "none":
        exclusions = []
    else:
        exclusions = [harness.CorruptionSpec.parse("exclude:" + e)
                      for e in args.exclusions.split(";")]
    report = harness.EvaluationReport()
    if exclusions:
        report.extend(harness.joint_exclusion_suite(data, config, "mmc", exclusions,
                                                    args.seed, args.frames))
    if args.noise:
        levels = [float(x) for x in _csv_list(args.noise)]
        report.extend(harness.run_robustness(_csv_list(args.methods), data, config, levels,
                                             seed=args.seed, frames=args.frames,
                                             corrupt_learn=args.corrupt_learn))
    report.metadata = {"seed": args.seed, "frames": args.frames, "dataset": data.fingerprint(),
                       "config": [n_learn, n_eval]}
    report.write(args.out)


def cmd_clusterability(args):
    data = _load(args.data, args)
    config = harness.random_split(data, *_pair(args.config), args.seed)
    report = harness.run_clusterability(_csv_list(args.methods), data, config, args.k,
                                        args.seed, args.frames, args.restarts)
    report.write(args.out)


def _templates_of(args, model):
    samples = _load(args.sample, args, normalize=True)
    return [project(model, s) for s in samples]


def cmd_gallery_add(args):
    model = load_model(args.model)
    gallery = Gallery(args.gallery, model)
    for t in _templates_of(args, model):
        rid = gallery.add(t, args.ts, args.lat, args.lon, args.camera,
                          t.label if args.keep_label else None)
        print(rid)


def cmd_gallery_query(args):
    model = load_model(args.model)
    gallery = Gallery(args.gallery, model)
    query = _templates_of(args, model)[0]
    trace = gallery.query(query, args.rule, exclude_id=args.exclude_id)
    if args.out:
        Path(args.out).write_text(trace.to_json(), encoding="utf-8")
    else:
        sys.stdout.write(trace.to_json())


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--frame-rate", type=float, default=DEFAULT_FRAME_RATE,
                        help="frames per second of the stored cycles (default 120)")
    common.add_argument("--vertical", choices=("y", "z"), default="y",
                        help="vertical axis of input files")
    common.add_argument("--frames", type=int, default=DEFAULT_FRAMES,
                        help="frames per cycle after resampling (default 32)")

    p = argparse.ArgumentParser(prog="gaitlab", description="MoCap gait identification toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="validate and normalize a dataset")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-normalize", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--ids", type=int, required=True)
    s.add_argument("--per-id", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit", parents=[common], help="learn a feature model")
    s.add_argument("--method", choices=("mmc", "pcalda", "raw", "geometric"), required=True)
    s.add_argument("--learn", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--spec", default="preset-broad")
    s.add_argument("--variance-keep", type=float, default=0.99)
    s.add_argument("--exclude", default="", help="comma-separated joints to drop")
    s.add_argument("--metric", choices=("euclidean", "mahalanobis"), default=None,
                   help="geometric models only")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", parents=[common], help="separation metrics on a dataset")
    s.add_argument("--model")
    s.add_argument("--method", choices=("raw", "geometric"))
    s.add_argument("--spec")
    s.add_argument("--eval", required=True)
    s.add_argument("--metrics", default="dbi,sc,roc,pr")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cluster", parents=[common], help="K-Means clusterability scores")
    s.add_argument("--model")
    s.add_argument("--method", choices=("raw", "geometric"))
    s.add_argument("--spec")
    s.add_argument("--eval", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--max-iter", type=int, default=300)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("sweep", parents=[common], help="growing-learning-set sweep")
    s.add_argument("--data", required=True)
    s.add_argument("--methods", default="mmc,pcalda,geometric:preset-broad")
    s.add_argument("--start", default="2,62")
    s.add_argument("--end", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt", default="", help="e.g. mult:30,subst:30")
    s.add_argument("--corrupt-learn", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("corrupt", parents=[common], help="write a noisy copy of a dataset")
    s.add_argument("--kind", choices=("mult", "subst"), required=True)
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("robust", parents=[common], help="incomplete and noisy data experiments")
    s.add_argument("--data", required=True)
    s.add_argument("--exclusions", default="default",
                   help="'default', 'none', or ';'-separated joint lists / group names")
    s.add_argument("--noise", default="", help="noise levels, e.g. 25,50,75,100")
    s.add_argument("--methods", default="mmc,pcalda,geometric:preset-broad")
    s.add_argument("--config", default="9,55")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt-learn", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_robust)

    s = sub.add_parser("clusterability", parents=[common], help="K-Means scores per method")
    s.add_argument("--data", required=True)
    s.add_argument("--methods", default="mmc,pcalda,geometric:preset-broad")
    s.add_argument("--config", default="9,55")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_clusterability)

    g = sub.add_parser("gallery", help="incident gallery").add_subparsers(dest="action",
                                                                         required=True)
    s = g.add_parser("add", parents=[common], help="store incidents of every sample in a file")
    s.add_argument("--gallery", default="gallery.ggl")
    s.add_argument("--model", required=True)
    s.add_argument("--sample", required=True)
    s.add_argument("--ts", type=float, required=True)
    s.add_argument("--lat", type=float, required=True)
    s.add_argument("--lon", type=float, required=True)
    s.add_argument("--camera", default="")
    s.add_argument("--keep-label", action="store_true",
                   help="store the sample label for later trace evaluation")
    s.set_defaults(func=cmd_gallery_add)

    s = g.add_parser("query", parents=[common], help="location trace of a query sample")
    s.add_argument("--gallery", default="gallery.ggl")
    s.add_argument("--model", required=True)
    s.add_argument("--sample", required=True)
    s.add_argument("--rule", default="topk:20")
    s.add_argument("--exclude-id", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gallery_query)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (GaitlabError, OSError) as exc:
        print(f"gaitlab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
