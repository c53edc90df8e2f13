"""Command-line entry points for the augmentation + detection pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import archive, imbalance, metrics, pipeline
from .data import (DatasetSchema, PreprocessPlan, builtin_schema,
                   load_dataset, preprocess)


def _load_schema(spec):
    if spec.startswith("builtin:"):
        return builtin_schema(spec.split(":", 1)[1])
    return DatasetSchema.from_json(spec)


def _load_config(args):
    cfg = pipeline.PipelineConfig.from_json(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.gamma is not None:
        cfg = replace(cfg, gamma=args.gamma)
    if args.skip_pretrain:
        cfg = replace(cfg, skip_pretrain=True)
    return cfg


def cmd_census(args):
    schema = _load_schema(args.schema)
    ds = load_dataset(args.paths, schema)
    census = imbalance.class_census(ds)
    out = {"counts": census.counts, "ratios": census.display_ratios()}
    print(json.dumps(out, indent=1))
    if args.out:
        pipeline._write_csv(Path(args.out), ["class", "samples", "imbalance_ratio"],
                            census.rows())


def cmd_filter(args):
    schema = _load_schema(args.schema)
    ds = load_dataset(args.paths, schema)
    result = imbalance.filter_minority(ds, args.gamma)
    print(json.dumps({
        "gamma": result.gamma,
        "normal_rows": len(result.normal),
        "minority": {k: len(v) for k, v in result.minority.items()},
        "passthrough_rows": len(result.passthrough),
    }, indent=1))


def cmd_run(args):
    cfg = _load_config(args)
    art = pipeline.run_pipeline(cfg)
    rep = art.eval_report
    print(f"accuracy {rep.accuracy:.4f}  macro_f1 {rep.macro_f1:.4f}")
    print(f"artifacts in {art.out_dir}")


def cmd_ablate(args):
    cfg = _load_config(args)
    report = pipeline.run_ablation(cfg)
    for name, e in report.per_class.items():
        speed = e.get("speedup")
        extra = f"  speedup {speed:.2f}" if speed else ""
        print(f"{name}: {e['steps_with']} steps with pretraining, "
              f"{e['steps_without']} without{extra}")
    if report.metric_deltas:
        print("metric deltas:", json.dumps(report.metric_deltas))


def cmd_evaluate(args):
    ens = archive.load_ensemble(args.model)
    schema = _load_schema(args.schema)
    ds = load_dataset(args.paths, schema)
    plan = None
    if args.plan:
        with open(args.plan) as f:
            plan = PreprocessPlan.from_dict(json.load(f))
    enc, _ = preprocess(ds, plan)
    pred = ens.predict(enc.features)
    rep = metrics.evaluate(pred, enc.labels, len(schema.classes))
    print(json.dumps(rep.to_dict(), indent=1))


def cmd_demo_data(args):
    from .demo import write_demo_dataset
    paths = write_demo_dataset(Path(args.out), rows=args.rows, seed=args.seed)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=1))


def main(argv=None):
    p = argparse.ArgumentParser(
        prog="ganids",
        description="Minority-class traffic augmentation and intrusion detection")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--schema", required=True,
                        help="schema JSON path or builtin:<name>")
        sp.add_argument("paths", nargs="+", help="CSV dataset files")

    sp = sub.add_parser("census", help="per-class counts and imbalance ratios")
    add_common(sp)
    sp.add_argument("--out", help="also write a CSV report here")
    sp.set_defaults(func=cmd_census)

    sp = sub.add_parser("filter", help="route minority classes at a gamma")
    add_common(sp)
    sp.add_argument("--gamma", type=float, default=imbalance.DEFAULT_GAMMA)
    sp.set_defaults(func=cmd_filter)

    for name, fn, help_ in (("run", cmd_run, "run the full pipeline"),
                            ("ablate", cmd_ablate,
                             "pipeline twice: pretrained vs fresh fine-tune init")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="pipeline config JSON")
        sp.add_argument("--out", help="override output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--skip-pretrain", action="store_true")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("evaluate", help="score a saved classifier on a CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--plan", help="plan.json from the training run "
                                   "(re-fitted on the input when omitted)")
    add_common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("demo-data", help="write the bundled synthetic demo dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--rows", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_demo_data)

    args = p.parse_args(argv)
    try:
        args.func(args)
    except (pipeline.ConfigInvalid, pipeline.StageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
