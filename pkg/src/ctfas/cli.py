"""Command-line interface.

Subcommands: gen, train, eval, analyze, ablate, score. Configuration is a
single JSON file per command (generator config for gen/ablate data, train
config for train/ablate), with dotted-key --set overrides. Exit codes:
0 success, 2 configuration/argument errors, 3 numerical aborts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import torch

from .data import GeneratorConfig, generate_synthetic_dataset, read_dataset, write_dataset
from .errors import (
    ConfigError,
    FormatError,
    IntegrityError,
    MetricError,
    NumericsError,
    StateError,
)
from .metrics import EVAL_CSV_HEADER
from .scoring import TestProtocol, classify_ood, score_dataset
from .trainer import (
    TRAIN_LOG_CSV,
    Checkpoint,
    TrainConfig,
    ablate,
    evaluate,
    train,
    write_ablation_csv,
)
from .transitions import correlation_report

PROTOCOL_CHOICES = [p.value for p in TestProtocol]

_DEFAULTS_NOTE = (
    "defaults: lambda1=0.005 lambda2=0.5 lambda3=0.5 lr=5e-4 epochs=50 "
    "batch_size=32 gamma=0.1"
)


# ---------------------------------------------------------------------------
# config plumbing


def _load_json(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return data


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_overrides(config: dict, overrides: Optional[list[str]]) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = config
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted!r}: {key!r} is not an object")
        node[keys[-1]] = _parse_value(raw)
    return config


def _set_determinism(on: bool) -> None:
    if on:
        torch.set_num_threads(1)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    config = _apply_overrides(_load_json(Path(args.config)), args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    splits = config.pop("splits", {"train": {}, "test": {}})
    if not isinstance(splits, dict) or not splits:
        raise ConfigError("'splits' must be a non-empty object of split-name overrides")
    out_dir = Path(args.out_dir)
    for split, overrides in splits.items():
        if not isinstance(overrides, dict):
            raise ConfigError(f"split {split!r}: overrides must be an object")
        merged = {**config, **overrides}
        gen_config = GeneratorConfig.from_dict(merged)
        dataset = generate_synthetic_dataset(gen_config, split)
        write_dataset(dataset, out_dir / split)
        n_live = int((dataset.labels() == 0).sum())
        print(
            f"wrote {split}: {len(dataset)} samples ({n_live} live,"
            f" {len(dataset) - n_live} spoof) -> {out_dir / split}"
        )
    return 0


def _train_config_from_args(args) -> TrainConfig:
    config = _apply_overrides(_load_json(Path(args.config)), args.set)
    if getattr(args, "scenario", None) is not None:
        config["scenario"] = args.scenario
    if args.seed is not None:
        config["seed"] = args.seed
    if getattr(args, "deterministic", False):
        config["deterministic"] = True
    return TrainConfig.from_dict(config)


def cmd_train(args) -> int:
    config = _train_config_from_args(args)
    _set_determinism(config.deterministic)
    dataset = read_dataset(Path(args.data_dir))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = train(config, dataset, log_path=out_dir / TRAIN_LOG_CSV, progress=not args.quiet)
    ckpt.save(out_dir)
    for protocol, threshold in sorted(ckpt.thresholds.items(), key=lambda kv: kv[0].value):
        print(f"fitted threshold {protocol}: {threshold:.6f}")
    print(f"checkpoint -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    _set_determinism(args.deterministic)
    ckpt = Checkpoint.load(Path(args.ckpt_dir))
    dataset = read_dataset(Path(args.data_dir))
    report = evaluate(
        ckpt,
        dataset,
        args.protocol,
        lambda3=args.lambda3,
        fit_threshold_on_test=args.fit_threshold_on_test,
    )
    print(report.summary())
    if args.report is not None:
        report.write_json(Path(args.report))
        print(f"report -> {args.report}")
    if args.csv is not None:
        path = Path(args.csv)
        new = not path.exists()
        with path.open("a") as fh:
            if new:
                fh.write(EVAL_CSV_HEADER + "\n")
            fh.write(report.csv_row() + "\n")
    return 0


def cmd_analyze(args) -> int:
    _set_determinism(args.deterministic)
    ckpt = Checkpoint.load(Path(args.ckpt_dir))
    dataset = read_dataset(Path(args.data_dir))
    report = correlation_report(dataset, ckpt.net, ckpt.store)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "correlations.csv")
    report.write_summary(out_dir / "summary.json")
    if args.render:
        written = report.render(out_dir / "plots")
        print(f"rendered {len(written)} histogram images -> {out_dir / 'plots'}")
    for name in sorted(report.means):
        mean = report.means[name]
        shown = "n/a" if mean is None else f"{mean:.4f}"
        print(f"mean {name}: {shown}")
    print(f"analysis -> {out_dir}")
    return 0


def cmd_ablate(args) -> int:
    config = _train_config_from_args(args)
    _set_determinism(config.deterministic)
    data_dir = Path(args.data_dir)
    train_ds = read_dataset(data_dir / "train")
    test_ds = read_dataset(data_dir / "test")
    rows = ablate(config, train_ds, test_ds, protocol=args.protocol, progress=not args.quiet)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, out_dir / "ablation.csv")
    for row in rows:
        print(f"{row.name}: {row.report.summary()}")
    print(f"ablation table -> {out_dir / 'ablation.csv'}")
    return 0


def cmd_score(args) -> int:
    _set_determinism(args.deterministic)
    ckpt = Checkpoint.load(Path(args.ckpt_dir))
    dataset = read_dataset(Path(args.sample_dir))
    protocol = TestProtocol.parse(args.protocol)
    lam = ckpt.config.lambda3 if args.lambda3 is None else args.lambda3
    threshold = ckpt.threshold_for(protocol, lam)
    scores = score_dataset(
        ckpt.net, dataset, ckpt.store, protocol, lambda3=lam, substitution=ckpt.substitution
    )
    sc_ood = scores.sc_ood
    for i, sample_id in enumerate(scores.ids):
        record = {
            "id": sample_id,
            "sc_d": float(scores.sc_d[i]),
            "sc_t": float(scores.sc_t[i]),
            "sc_ood": float(sc_ood[i]),
            "decision": classify_ood(float(sc_ood[i]), threshold).value,
            "threshold": threshold,
            "protocol": protocol.value,
        }
        print(json.dumps(record))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctfas",
        description=(
            "Multi-modal face anti-spoofing via cross-modal transition"
            " consistency. " + _DEFAULTS_NOTE
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seed=False, deterministic=False, overrides=False):
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if deterministic:
            p.add_argument(
                "--deterministic",
                action="store_true",
                help="force single-threaded bit-exact execution",
            )
        if overrides:
            p.add_argument(
                "--set",
                action="append",
                metavar="KEY=VALUE",
                help="dotted-key config override, e.g. --set n_live=500",
            )

    p = sub.add_parser("gen", help="generate synthetic dataset splits")
    p.add_argument("config", help="generator config JSON (may contain a 'splits' object)")
    p.add_argument("out_dir", help="output directory; one subdirectory per split")
    add_common(p, seed=True, overrides=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("config", help="training config JSON (" + _DEFAULTS_NOTE + ")")
    p.add_argument("data_dir", help="dataset directory (contains manifest.json)")
    p.add_argument("out_dir", help="checkpoint output directory")
    p.add_argument(
        "--scenario",
        choices=["fixed", "missing"],
        default=None,
        help="override the config scenario",
    )
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch progress")
    add_common(p, seed=True, deterministic=True, overrides=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("ckpt_dir", help="checkpoint directory")
    p.add_argument("data_dir", help="dataset directory")
    p.add_argument(
        "--protocol",
        choices=PROTOCOL_CHOICES,
        default="P4",
        help="testing modality protocol (default P4: all modalities)",
    )
    p.add_argument(
        "--lambda3",
        type=float,
        default=None,
        help="score mixing weight; default: the trained value (0.5)",
    )
    p.add_argument("--report", default=None, help="write the EvalReport JSON here")
    p.add_argument("--csv", default=None, help="append a CSV metrics row here")
    p.add_argument(
        "--fit-threshold-on-test",
        action="store_true",
        help="fit the Youden threshold on the test scores (optimistic; off by default)",
    )
    add_common(p, deterministic=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="write correlation histograms for a dataset")
    p.add_argument("ckpt_dir", help="checkpoint directory")
    p.add_argument("data_dir", help="dataset directory")
    p.add_argument("out_dir", help="output directory for CSV/JSON (and plots)")
    p.add_argument("--render", action="store_true", help="also render histogram images")
    add_common(p, deterministic=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablate", help="train the loss-combination table")
    p.add_argument("config", help="training config JSON")
    p.add_argument("data_dir", help="directory containing train/ and test/ datasets")
    p.add_argument("out_dir", help="output directory for ablation.csv")
    p.add_argument(
        "--protocol",
        choices=PROTOCOL_CHOICES,
        default="P1",
        help="evaluation protocol for every row (default P1: RGB only)",
    )
    p.add_argument("--quiet", action="store_true", help="suppress per-row progress")
    add_common(p, seed=True, deterministic=True, overrides=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("score", help="emit per-sample score JSON lines")
    p.add_argument("ckpt_dir", help="checkpoint directory")
    p.add_argument("sample_dir", help="dataset directory with samples to score")
    p.add_argument(
        "--protocol",
        choices=PROTOCOL_CHOICES,
        default="P4",
        help="testing modality protocol (default P4)",
    )
    p.add_argument("--lambda3", type=float, default=None, help="score mixing weight")
    add_common(p, deterministic=True)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except (
        ConfigError,
        FormatError,
        IntegrityError,
        StateError,
        MetricError,
        ValueError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
