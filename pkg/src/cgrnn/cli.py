"""Command-line entry point: ``cgrnn {synth,extract,train,eval,cv,gradcheck}``.

Exit codes: 0 ok, 2 input/config error, 3 numeric divergence, 4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import gradcheck
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SynthSpec, generate_synthetic, read_manifest, spatial_spec, write_manifest
from .errors import CGRNNError, NumericError
from .features import write_feature_cache
from .metrics import EERReport, average_reports, evaluate
from .model import ModelConfig
from .pipeline import FeatureLoader
from .train import FoldPlan, TrainConfig, cross_validate, parse_config_text, split_config, train_fold

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4

BASIC = {"mfb": "mfb40", "spec": "spec257", "raw": "raw512"}
KINDS = {**BASIC, "imd": "imd257", "ild": "ild257", "ipd": "ipd257"}


class GradcheckFailed(Exception):
    pass


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _configs(args):
    """Merge the key=value config file with CLI flags (flags win)."""
    values = {}
    if getattr(args, "config", None):
        values = parse_config_text(Path(args.config).read_text())
    train_kv, model_kv = split_config(values)
    if args.basic is not None:
        model_kv["basic_kind"] = BASIC[args.basic]
    if args.use_imd:
        model_kv["use_imd"] = True
    for flag, key in (("seed", "seed"), ("epochs", "max_epochs"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("patience", "patience")):
        value = getattr(args, flag, None)
        if value is not None:
            train_kv[key] = value
    if "patience" not in train_kv and "max_epochs" in train_kv:
        train_kv["patience"] = min(TrainConfig.patience, train_kv["max_epochs"])
    return TrainConfig(**train_kv), ModelConfig.from_dict(model_kv)


def _emit_report(args, report: EERReport, label=""):
    if args.json:
        print(report.to_json())
    else:
        print(report.table(label))
    if getattr(args, "out", None):
        Path(args.out).write_text(report.to_csv())


def cmd_synth(args):
    if args.spatial:
        spec = spatial_spec(args.n_chunks, seed=args.seed)
    else:
        spec = SynthSpec(n_chunks=args.n_chunks, seed=args.seed)
    entries = generate_synthetic(spec, args.out_dir)
    if args.folds:
        out = Path(args.out_dir)
        for k in range(args.folds):
            test = entries[k::args.folds]
            ids = {e.chunk_id for e in test}
            write_manifest(out / f"fold{k}_train.csv", [e for e in entries if e.chunk_id not in ids])
            write_manifest(out / f"fold{k}_test.csv", test)
    print(f"wrote {len(entries)} chunks to {args.out_dir}")
    return EXIT_OK


def cmd_extract(args):
    entries = read_manifest(args.manifest)
    kind = KINDS[args.kind]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loader = FeatureLoader(cache_dir=False)
    for e in entries:
        try:
            seq = loader.features(e, kind)
        except CGRNNError as exc:
            raise type(exc)(f"chunk {e.chunk_id}: {exc}") from exc
        if kind == "imd257" and not np.any(seq.data):
            warnings.warn(f"chunk {e.chunk_id}: IMD is identically zero (identical channels)")
        write_feature_cache(out / f"{e.chunk_id}.{kind}.cgt", seq)
    print(f"wrote {len(entries)} {kind} files to {out}")
    return EXIT_OK


def cmd_train(args):
    tc, mc = _configs(args)
    loader = FeatureLoader(args.cache_dir)
    train = read_manifest(args.train_manifest)
    valid = read_manifest(args.valid_manifest) if args.valid_manifest else None
    ckpt, history = train_fold(train, valid, tc, mc, loader)
    save_checkpoint(args.checkpoint, ckpt)
    if args.log:
        Path(args.log).write_text(history.to_csv())
    summary = {"epochs": len(history.records), "final_train_loss": history.records[-1].train_loss,
               "checkpoint": str(args.checkpoint)}
    print(json.dumps(summary) if args.json else
          f"trained {summary['epochs']} epochs, final loss {summary['final_train_loss']:.4f}")
    return EXIT_OK


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    manifest = read_manifest(args.manifest)
    report = evaluate(ckpt, manifest, FeatureLoader(args.cache_dir))
    _emit_report(args, report, "eval")
    return EXIT_OK


def cmd_cv(args):
    tc, mc = _configs(args)
    loader = FeatureLoader(args.cache_dir)
    folds = []
    for spec in args.fold:
        train_path, _, test_path = spec.partition(",")
        folds.append((read_manifest(train_path), read_manifest(test_path)))
    reports, ckpts, _ = cross_validate(FoldPlan(folds), tc, mc, loader, valid_fraction=args.valid_fraction)
    if args.json:
        print(json.dumps({"folds": [json.loads(r.to_json()) for r in reports],
                          "average": json.loads(average_reports(reports).to_json())}))
    else:
        for i, r in enumerate(reports):
            print(r.table(f"fold{i}").splitlines()[-1] if i else r.table(f"fold{i}"))
        print(average_reports(reports).table("mean").splitlines()[-1])
    if args.out:
        Path(args.out).write_text(average_reports(reports).to_csv())
    if args.retrain_all:
        union, seen = [], set()
        for train, test in folds:
            for e in train + test:
                if e.chunk_id not in seen:
                    seen.add(e.chunk_id)
                    union.append(e)
        ckpt, _ = train_fold(union, None, tc, mc, loader)
        if args.checkpoint:
            save_checkpoint(args.checkpoint, ckpt)
        if args.eval_manifest:
            _emit_report(args, evaluate(ckpt, read_manifest(args.eval_manifest), loader), "retrain")
    return EXIT_OK


def cmd_gradcheck(args):
    seeds = range(args.seed, args.seed + args.seeds)
    faulty = tuple(args.inject_fault or ())
    results = gradcheck.run_suite(seeds, faulty=faulty, size=args.config)
    failed = []
    rows = {}
    for layer, res in results.items():
        worst = max(res, key=lambda r: r.worst_error)
        rows[layer] = {"worst_error": worst.worst_error, "passed": worst.passed,
                       "tensor": worst.worst_tensor, "index": list(worst.worst_index), "seed": worst.seed}
        if not worst.passed:
            failed.append(worst)
    if args.json:
        print(json.dumps(rows))
    else:
        for layer, row in rows.items():
            status = "PASS" if row["passed"] else "FAIL"
            print(f"{layer:<11} worst rel. error {row['worst_error']:.3e}  {status}")
    for r in failed:
        print(f"gradcheck failed: layer {r.layer}, tensor {r.worst_tensor}, index {r.worst_index}, "
              f"seed {r.seed}, rel. error {r.worst_error:.3e}", file=sys.stderr)
    return EXIT_GRADCHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgrnn", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="BLAS threads; 1 forces the deterministic path")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic stereo dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-chunks", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--spatial", action="store_true", help="v/o differ only in lateralisation")
    s.add_argument("--folds", type=int, default=0, help="also write k-fold manifests")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="write feature cache files")
    s.add_argument("--manifest", required=True)
    s.add_argument("--kind", choices=sorted(KINDS), required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_extract)

    def model_flags(s):
        s.add_argument("--config", help="key=value file of train/model settings")
        s.add_argument("--basic", choices=sorted(BASIC))
        s.add_argument("--use-imd", action="store_true")
        s.add_argument("--seed", type=int)
        s.add_argument("--epochs", type=int)
        s.add_argument("--batch-size", type=int)
        s.add_argument("--patience", type=int)
        s.add_argument("--lr", type=float)
        s.add_argument("--cache-dir", default=None)
        s.add_argument("--json", action="store_true")

    s = sub.add_parser("train", help="train one model")
    s.add_argument("--train-manifest", required=True)
    s.add_argument("--valid-manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--log", help="CSV training log")
    model_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="EER report for a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", "--valid-manifest", dest="manifest", required=True)
    s.add_argument("--cache-dir", default=None)
    s.add_argument("--out", help="write the report as CSV")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cv", help="k-fold cross-validation")
    s.add_argument("--fold", action="append", required=True, metavar="TRAIN,TEST")
    s.add_argument("--valid-fraction", type=float, default=0.0)
    s.add_argument("--retrain-all", action="store_true", help="also train on all fold data")
    s.add_argument("--eval-manifest")
    s.add_argument("--checkpoint")
    s.add_argument("--out")
    model_flags(s)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    s.add_argument("--config", choices=sorted(gradcheck.SIZES), default="tiny")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--inject-fault", action="append", choices=gradcheck.LAYERS, help=argparse.SUPPRESS)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        with _threads(args.threads):
            return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CGRNNError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
