"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation failure,
3 acceptance-criterion failure (experiment only).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import pipeline
from .errors import ConfigError, SceneGenerationError, ValidationError
from .manifest import str_to_labels, validate_manifest
from .pipeline import RunConfig

USAGE_ERROR, VALIDATION_ERROR, CRITERION_FAILURE = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sim2real", description=__doc__)
    parser.add_argument("--config", help="JSON RunConfig file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output directory or file")
    parser.add_argument("--threads", type=int, help="worker threads for data stages")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="render sim/pseudo-real/paired/test corpora")

    p = sub.add_parser("train-gan", help="train the image translation networks")
    p.add_argument("--sim", required=True)
    p.add_argument("--pseudo", required=True)

    p = sub.add_parser("convert", help="apply a trained generator to a sim manifest")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("label", help="attach collision label vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--no-redraw", action="store_true",
                   help="label each record's own state without velocity augmentation")

    p = sub.add_parser("train-task", help="train a downstream network")
    p.add_argument("--kind", choices=("avoidance", "segmentation"), required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("eval", help="score trained nets on a labeled test manifest")
    p.add_argument("--kind", choices=("avoidance", "segmentation"), required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--net", action="append", required=True,
                   metavar="CONDITION=WEIGHTS", help="repeatable condition=weights pair")

    p = sub.add_parser("rollout", help="closed-loop navigation run")
    p.add_argument("--scene-seed", type=int, required=True)
    p.add_argument("--policy", choices=("oracle", "net"), default="oracle")
    p.add_argument("--weights")

    sub.add_parser("experiment", help="full three-condition comparison")

    p = sub.add_parser("audit-labels", help="re-check labels with the brute-force oracle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sample", type=int, default=50)

    p = sub.add_parser("plot-grid", help="render a prediction grid image")
    p.add_argument("--probs", required=True, help="JSON file with the probability vector")
    p.add_argument("--labels", help="binary label string for a ground-truth panel")

    p = sub.add_parser("validate", help="validate a manifest's files and hashes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--check-hash", action="store_true")

    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _require_out(args, parser) -> str:
    if not args.out:
        parser.error(f"--out is required for {args.command}")
    return args.out


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load_config(args)
        return _dispatch(args, cfg, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValidationError, ConfigError, SceneGenerationError, FileNotFoundError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return VALIDATION_ERROR


def _dispatch(args, cfg: RunConfig, parser) -> int:
    if args.command == "generate":
        paths = pipeline.cmd_generate(cfg, _require_out(args, parser))
        for split, path in paths.items():
            print(f"{split}: {path}")
        return 0

    if args.command == "train-gan":
        out = pipeline.cmd_train_gan(cfg, args.sim, args.pseudo, _require_out(args, parser))
        print(f"weights: {out['weights']}")
        return 0

    if args.command == "convert":
        path = pipeline.cmd_convert(cfg, args.weights, args.manifest,
                                    _require_out(args, parser))
        print(f"converted: {path}")
        return 0

    if args.command == "label":
        path = pipeline.cmd_label(cfg, args.manifest, _require_out(args, parser),
                                  redraw=not args.no_redraw)
        print(f"labeled: {path}")
        return 0

    if args.command == "train-task":
        out = pipeline.cmd_train_task(cfg, args.kind, args.manifest,
                                      _require_out(args, parser))
        print(f"weights: {out['weights']} (final loss {out['history'][-1]:.4f})")
        return 0

    if args.command == "eval":
        nets = {}
        for spec in args.net:
            if "=" not in spec:
                parser.error("--net expects CONDITION=WEIGHTS")
            condition, path = spec.split("=", 1)
            nets[condition] = pipeline.load_task_net(cfg, args.kind, path)
        rows = (pipeline.eval_avoidance(cfg, nets, args.test)
                if args.kind == "avoidance"
                else pipeline.eval_segmentation(cfg, nets, args.test))
        text, jsonl = pipeline.eval_report(rows)
        print(text, end="")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(jsonl)
        return 0

    if args.command == "rollout":
        result = pipeline.cmd_rollout(cfg, args.scene_seed, args.policy,
                                      weights_path=args.weights, log_path=args.out)
        print(f"status: {result.status} steps: {len(result.steps)} "
              f"distance: {result.distance_travelled:.1f} m")
        return 0

    if args.command == "experiment":
        report = pipeline.cmd_experiment(cfg, _require_out(args, parser))
        for name, ok in report["criteria"].items():
            print(f"{name}: {'pass' if ok else 'FAIL'}")
        return 0 if report["all_pass"] else CRITERION_FAILURE

    if args.command == "audit-labels":
        audit = pipeline.cmd_audit_labels(cfg, args.manifest, n_sample=args.sample)
        print(json.dumps(audit, sort_keys=True))
        return 0 if audit["mismatches"] == 0 else VALIDATION_ERROR

    if args.command == "plot-grid":
        with open(args.probs, encoding="utf-8") as fh:
            probs = np.asarray(json.load(fh), dtype=np.float64)
        labels = str_to_labels(args.labels) if args.labels else None
        path = pipeline.cmd_plot_grid(probs, labels, args.out or "grid.ppm")
        print(f"figure: {path}")
        return 0

    if args.command == "validate":
        expect = cfg.config_hash if args.check_hash else None
        records = validate_manifest(args.manifest, expect_hash=expect)
        print(f"ok: {len(records)} records")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
