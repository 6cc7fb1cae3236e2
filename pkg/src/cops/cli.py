"""Command line entry point: gen, train, predict, eval, gradcheck, sweep.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace

from . import bench, data, gradcheck, metrics, synth
from .model import load_model, save_model
from .train import TrainConfig, TrainingDiverged, history_csv, train

log = logging.getLogger("cops")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _suite_from(path):
    if path is None:
        return synth.SuiteSpec()
    d = _read_json(path)
    nested = {"gt_lidar": synth.LidarSpec, "oracle": synth.PseudoOracleSpec}
    for key, typ in nested.items():
        if key in d:
            d[key] = typ(**d[key])
    for key in ("objects", "depth_range"):
        if key in d:
            d[key] = tuple(d[key])
    return synth.SuiteSpec(**d)


# ------------------------------------------------------------------ commands

def cmd_gen(args):
    suite = _suite_from(args.config)
    train_set, test_set = synth.standard_suite(args.seed, suite)
    entries = []
    for split, scenes in (("train", train_set), ("test", test_set)):
        for s in scenes:
            entries.append(data.save_scene(s, args.out, s.name, split))
    manifest = os.path.join(args.out, "manifest.json")
    data.write_manifest(manifest, entries, extra={"seed": args.seed, "suite": asdict(suite)})
    print(f"wrote {len(entries)} scenes to {manifest}")
    return EXIT_OK


def cmd_train(args):
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    scenes = data.load_scenes(args.manifest, args.split)
    if not scenes:
        raise ValueError(f"no '{args.split}' scenes in {args.manifest}")

    def progress(row):
        log.info("epoch %d/%d total=%.5f", row["epoch"], cfg.epochs, row["total"])

    model, history = train(scenes, cfg, progress=progress)
    save_model(model, args.model, cfg.to_dict())
    text = history_csv(history)
    _write(text, args.history)
    if args.figures:
        from .plotting import plot_history
        plot_history(history, os.path.join(args.figures, "history.png"))
    return EXIT_OK


def cmd_predict(args):
    model, _ = load_model(args.model)
    scenes = data.load_scenes(args.manifest, args.split)
    os.makedirs(args.out, exist_ok=True)
    for s in scenes:
        pred, _ = model.predict(s)
        data.save_depth_png16(pred, os.path.join(args.out, f"{s.name}.png"))
    print(f"wrote {len(scenes)} predictions to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    scenes = data.load_scenes(args.manifest, args.split)
    if not scenes:
        raise ValueError(f"no '{args.split}' scenes in {args.manifest}")
    reports, preds = [], []
    for s in scenes:
        path = os.path.join(args.pred_dir, f"{s.name}.png")
        pred = data.load_depth_png16(path, kind="prediction")
        reports.append(metrics.compute_metrics(pred, s.gt, args.inverse_unit, s.condition))
        preds.append(pred)
    table = metrics.aggregate(reports, args.method, condition_order=synth.CONDITION_CYCLE)
    _write(metrics.emit_table(table, args.format), args.out)
    if args.figures:
        from .plotting import plot_scene, plot_table
        plot_table(table, os.path.join(args.figures, "rmse.png"))
        plot_scene(scenes[0], preds[0], os.path.join(args.figures, f"{scenes[0].name}.png"))
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_suite(args.instances, args.seed or 0, args.only)
    rows = [["check", "instances", "max_abs_dev", "max_rel_dev", "seconds", "status"]]
    for r in results:
        w = r.worst()
        rows.append([r.name, str(len(r.reports)), f"{w.max_abs_dev:.3e}", f"{w.max_rel_dev:.3e}",
                     f"{r.seconds:.2f}", "pass" if r.passed else "FAIL"])
    if args.format == "csv":
        lines = [",".join(r) for r in rows]
    else:
        lines = ["| " + " | ".join(r) + " |" for r in rows]
        lines.insert(1, "|" + "---|" * len(rows[0]))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_sweep(args):
    spec = bench.SweepSpec.from_dict(_read_json(args.spec))
    spec = replace(spec, inverse_unit=args.inverse_unit)
    table = bench.run_sweep(spec, workers=args.workers)
    _write(metrics.emit_table(table, args.format), args.out)
    if args.figures:
        from .plotting import plot_table
        plot_table(table, os.path.join(args.figures, f"sweep_{spec.param}.png"))
    if len(table.failed) == len(spec.values) + int(spec.include_baseline):
        return EXIT_NUMERIC
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="cops", description="Pseudo-supervised depth completion toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def table_flags(sp):
        sp.add_argument("--inverse-unit", choices=sorted(metrics.INVERSE_UNITS), default="m")
        sp.add_argument("--format", choices=("csv", "markdown"), default="markdown")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--figures", metavar="DIR", help="also write PNG figures here")

    g = sub.add_parser("gen", help="write the standard synthetic suite as PNGs and a manifest")
    g.add_argument("out")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="JSON with suite overrides")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on manifest scenes")
    t.add_argument("manifest")
    t.add_argument("--config", help="JSON training config")
    t.add_argument("--model", required=True, help="output checkpoint path")
    t.add_argument("--history", default="-", help="history CSV path (default stdout)")
    t.add_argument("--split", default="train")
    t.add_argument("--seed", type=int)
    t.add_argument("--figures", metavar="DIR")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="write depth predictions as 16-bit PNGs")
    pr.add_argument("model")
    pr.add_argument("manifest")
    pr.add_argument("--out", required=True, help="prediction directory")
    pr.add_argument("--split", default="test")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="score a prediction directory against manifest ground truth")
    e.add_argument("pred_dir")
    e.add_argument("manifest")
    e.add_argument("--split", default="test")
    e.add_argument("--method", default="model")
    table_flags(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--only", nargs="*", choices=sorted(gradcheck.CHECKS))
    c.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    c.add_argument("--out")
    c.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("sweep", help="hyper-parameter sweep from a JSON spec")
    s.add_argument("spec")
    s.add_argument("--workers", type=int, default=1)
    table_flags(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
