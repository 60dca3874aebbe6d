"""Command-line interface: gen-data, train, evaluate, sweep, report."""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace

from . import config as cfgmod
from .autograd import DimensionError
from .binio import FormatError
from .data import generate_synthetic, load_dataset, ncl_preset, save_dataset
from .dropout import DropoutPolicy
from .experiments import (
    evaluate_unimodal,
    load_report,
    render_csv,
    render_table,
    run_protocol,
    save_report,
    sweep_policy,
    unimodal_policy,
)
from .models import load_model, save_model, set_parameters, BiEflstmClassifier, MfnRegressor
from .training import TrainConfig, save_history, seed_streams, train

logger = logging.getLogger("colearn")


def _load_parser(path) -> configparser.ConfigParser:
    if path is None:
        return configparser.ConfigParser()
    return cfgmod.load_config(path)


def _write_or_print(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None, help="maximum training epochs")
    p.add_argument("--hidden", type=int, default=None, help="hidden size")
    p.add_argument("--early-stop-patience", type=int, default=None)


def _train_config(args, policy) -> TrainConfig:
    parser = _load_parser(args.config)
    return cfgmod.train_config(
        parser,
        policy=policy,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        hidden_size=args.hidden,
        early_stop_patience=args.early_stop_patience,
        seed=getattr(args, "seed", None),
    )


def _cmd_gen_data(args) -> int:
    if args.preset == "ncl":
        cfg = ncl_preset(seed=args.seed if args.seed is not None else 0)
        overrides = {"n_samples": args.n_samples, "seed": args.seed}
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    else:
        parser = _load_parser(args.config)
        cfg = cfgmod.synthetic_config(
            parser,
            n_samples=args.n_samples,
            timesteps=args.timesteps,
            dim_language=args.dim_language,
            dim_audio=args.dim_audio,
            dim_visual=args.dim_visual,
            num_classes=args.classes,
            snr_language=args.snr_language,
            snr_audio=args.snr_audio,
            snr_visual=args.snr_visual,
            seed=args.seed,
            task=args.task,
        )
    split = generate_synthetic(cfg)
    save_dataset(split, args.out)
    logger.info("wrote %s (%d/%d/%d samples)", args.out, len(split.train), len(split.validation), len(split.test))
    return 0


def _cmd_train(args) -> int:
    split = load_dataset(args.data)
    if args.arm == "unimodal":
        policy = unimodal_policy()
    elif args.level is not None:
        policy = sweep_policy(args.level)
    else:
        policy = DropoutPolicy(
            p_audio=args.p_audio or 0.0,
            p_language=args.p_language or 0.0,
            p_visual=args.p_visual or 0.0,
        )
    config = _train_config(args, policy)

    init_rng, _, _ = seed_streams(config.seed)
    if args.model == BiEflstmClassifier.kind:
        model = BiEflstmClassifier(split.dims, config.hidden_size, split.task.num_classes, init_rng)
    else:
        model = MfnRegressor(split.dims, hidden_dim=config.hidden_size, rng=init_rng)

    best_params, history = train(model, split, config)
    set_parameters(model, best_params)
    if args.out_checkpoint:
        save_model(model, args.out_checkpoint)
    if args.out_history:
        save_history(history, args.out_history)
    final = history.records[-1]
    print(
        f"trained {args.model} for {final.epoch} epochs"
        f" (best epoch {history.best_epoch}, val loss {min(history.val_losses):.6f})"
    )
    return 0


def _cmd_evaluate(args) -> int:
    split = load_dataset(args.data)
    model = load_model(args.checkpoint)
    if tuple(model.dims) != tuple(split.dims):
        raise DimensionError(
            f"checkpoint feature dims {tuple(model.dims)} do not match dataset dims {tuple(split.dims)}"
        )
    samples = {"train": split.train, "validation": split.validation, "test": split.test}[args.split]
    m = evaluate_unimodal(model, samples, split.task, kept=args.kept)
    if args.json:
        import json

        payload = {
            "accuracy": m.accuracy,
            "macro_f1": m.f1,
            "mae": m.mae,
            "confusion": None if m.confusion is None else m.confusion.tolist(),
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"accuracy: {m.accuracy * 100:.2f}%")
        print(f"macro F1: {m.f1:.4f}")
        if m.mae is not None:
            print(f"MAE: {m.mae:.4f}")
        print("confusion (rows true, cols predicted):")
        print(m.confusion)
    return 0


def _cmd_sweep(args) -> int:
    split = load_dataset(args.data)
    parser = _load_parser(args.config)
    settings = cfgmod.sweep_settings(parser)
    levels = [float(x) for x in args.levels.split(",")] if args.levels else settings.get("levels", [0.0, 0.8])
    if args.seeds:
        seeds = [int(x) for x in args.seeds.split(",")]
    elif args.num_seeds is not None:
        seeds = list(range(args.num_seeds))
    else:
        seeds = settings.get("seeds", [0, 1, 2, 3, 4])
    model_kind = args.model or settings.get("model", BiEflstmClassifier.kind)
    config = _train_config(args, policy=None)

    report = run_protocol(split, model_kind, config, levels=levels, seeds=seeds, workers=args.workers)
    save_report(report, args.out)
    logger.info("wrote %s", args.out)
    if args.table is not None:
        _write_or_print(render_table(report), args.table)
    if args.csv is not None:
        _write_or_print(render_csv(report), args.csv)
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.report)
    if args.csv is None and args.table is None:
        _write_or_print(render_table(report), None)
        return 0
    if args.table is not None:
        _write_or_print(render_table(report), args.table)
    if args.csv is not None:
        _write_or_print(render_csv(report), args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log arm-level progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="INI file with a [data] section")
    p.add_argument("--preset", choices=["ncl"], default=None, help="use the negative-co-learning preset")
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--timesteps", type=int, default=None)
    p.add_argument("--dim-language", type=int, default=None)
    p.add_argument("--dim-audio", type=int, default=None)
    p.add_argument("--dim-visual", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--snr-language", type=float, default=None)
    p.add_argument("--snr-audio", type=float, default=None)
    p.add_argument("--snr-visual", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--task", choices=["classification", "regression"], default=None)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one arm and write checkpoint/history")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["bi_eflstm", "mfn"], default="bi_eflstm")
    p.add_argument("--arm", choices=["multimodal", "unimodal"], default="multimodal")
    p.add_argument("--level", type=float, default=None, help="joint audio+visual dropout level")
    p.add_argument("--p-audio", type=float, default=None)
    p.add_argument("--p-language", type=float, default=None)
    p.add_argument("--p-visual", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out-checkpoint", default=None)
    p.add_argument("--out-history", default=None)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "validation", "test"], default="test")
    p.add_argument("--kept", default="language", help="modality left unmasked")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run the full protocol over dropout levels")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["bi_eflstm", "mfn"], default=None)
    p.add_argument("--levels", default=None, help="comma-separated dropout levels")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--num-seeds", type=int, default=None, help="use seeds 0..N-1")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--workers", type=int, default=None, help="parallel processes for seed runs")
    p.add_argument("--table", default=None, help="write the text table here ('-' for stdout)")
    p.add_argument("--csv", default=None, help="write plot-ready CSV here ('-' for stdout)")
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="render a saved report")
    p.add_argument("--report", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FormatError, DimensionError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
