"""Command-line interface.

Subcommands: synth, train, eval, gradcheck, equivalence, report.

A training run owns a directory:

    config.cfg     resolved flat key=value configuration
    checkpoint     versioned JSON model weights
    trainlog.json  per-epoch loss / mining / margin trajectory
    cmc.csv        rank,accuracy             (written by eval)
    variation.csv  intra/inter histograms    (written by eval)
    summary.json   metrics + protocol metadata, byte-stable per seed
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .config import TRAIN_MODES, TrainConfig, config_from_overrides, load_config, save_config
from .data import Dataset, Split, load_csv, save_csv, split_identities, synth_generate
from .equivalence import run_equivalence_suite
from .evaluation import (
    EVAL_MODES,
    cmc_single_shot,
    variation_stats,
    write_cmc_csv,
    write_variation_csv,
)
from .gradcheck import PASS_THRESHOLD, run_all
from .model import load_checkpoint, save_checkpoint
from .train import train


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--mode", choices=TRAIN_MODES)
    for name, flag_type in (
        ("epochs", int), ("batch-size", int), ("learning-rate", float),
        ("alpha1", float), ("alpha2", float), ("alpha-cts", float),
        ("softmax-aux-weight", float), ("warm-start-fraction", float),
        ("momentum", float), ("seed", int), ("data-csv", str),
        ("synth-num-ids", int), ("synth-samples-per-id-per-camera", int),
        ("synth-dim", int), ("synth-intra-sigma", float),
        ("synth-inter-spread", float), ("synth-camera-shift-sigma", float),
        ("synth-cameras", int), ("test-fraction", float), ("trials", int),
    ):
        parser.add_argument(f"--{name}", type=flag_type)
    parser.add_argument("--embed-dims", type=str, help="comma-separated widths, e.g. 64,32")
    parser.add_argument("--head-dims", type=str, help="comma-separated hidden widths, e.g. 32")


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    overrides = {}
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name in ("embed_dims", "head_dims") and isinstance(value, str):
            value = tuple(int(p) for p in value.replace(" ", "").split(",") if p)
        overrides[f.name] = value
    if args.config:
        return load_config(args.config, overrides)
    return config_from_overrides(overrides)


def _resolve_split(config: TrainConfig) -> Split:
    if config.data_csv:
        dataset = load_csv(config.data_csv)
    else:
        dataset = synth_generate(
            num_ids=config.synth_num_ids,
            samples_per_id_per_camera=config.synth_samples_per_id_per_camera,
            dim=config.synth_dim,
            intra_sigma=config.synth_intra_sigma,
            inter_spread=config.synth_inter_spread,
            camera_shift_sigma=config.synth_camera_shift_sigma,
            seed=config.seed,
            num_cameras=config.synth_cameras,
        )
    return split_identities(dataset, config.test_fraction, config.seed)


def _eval_seed(config: TrainConfig) -> int:
    # third stream of the run's seed family (init, batches, eval)
    return int(np.random.SeedSequence(config.seed).generate_state(3, dtype=np.uint64)[2])


def cmd_synth(args) -> int:
    dataset = synth_generate(
        num_ids=args.num_ids,
        samples_per_id_per_camera=args.samples_per_id_per_camera,
        dim=args.dim,
        intra_sigma=args.intra_sigma,
        inter_spread=args.inter_spread,
        camera_shift_sigma=args.camera_shift_sigma,
        seed=args.seed,
        num_cameras=args.cameras,
    )
    save_csv(dataset, args.out)
    print(f"wrote {len(dataset)} samples ({len(dataset.identities)} identities, "
          f"dim {dataset.dim}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    split = _resolve_split(config)
    params, log = train(config, split.train)

    os.makedirs(args.out, exist_ok=True)
    save_config(config, os.path.join(args.out, "config.cfg"))
    save_checkpoint(
        params,
        os.path.join(args.out, "checkpoint"),
        meta={"mode": config.mode, "eval_mode": config.eval_mode, "seed": config.seed},
    )
    with open(os.path.join(args.out, "trainlog.json"), "w", encoding="utf-8") as fh:
        json.dump(log.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    final = log.records[-1].loss if log.records else float("nan")
    print(f"trained mode={config.mode} epochs={config.epochs} "
          f"final mean batch loss={final:.6g} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(os.path.join(args.run, "config.cfg"))
    params, meta = load_checkpoint(os.path.join(args.run, "checkpoint"))
    split = _resolve_split(config)
    trials = args.trials if args.trials is not None else config.trials
    mode = args.eval_mode if args.eval_mode else meta.get("eval_mode", config.eval_mode)

    rng = np.random.Generator(np.random.PCG64(_eval_seed(config)))
    cmc = cmc_single_shot(params, split.test, trials=trials, rng=rng, mode=mode)
    train_stats = variation_stats(params, split.train, mode=mode)
    test_stats = variation_stats(params, split.test, mode=mode)

    write_cmc_csv(cmc, os.path.join(args.run, "cmc.csv"))
    write_variation_csv(train_stats, os.path.join(args.run, "variation.csv"))
    summary = {
        "mode": config.mode,
        "eval_mode": mode,
        "seed": config.seed,
        "trials": trials,
        "protocol": cmc.protocol,
        "rank_1": cmc.rank(1),
        "rank_5": cmc.rank(5),
        "rank_10": cmc.rank(10),
        "cmc": [float(v) for v in cmc.rank_accuracy],
        "train_intra_mean": train_stats.intra_mean,
        "train_inter_mean": train_stats.inter_mean,
        "train_distances_rescaled": train_stats.normalized,
        "test_intra_mean": test_stats.intra_mean,
        "test_inter_mean": test_stats.inter_mean,
        "test_distances_rescaled": test_stats.normalized,
        "n_train_identities": int(len(split.train.identities)),
        "n_test_identities": int(len(split.test.identities)),
    }
    with open(os.path.join(args.run, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"rank-1 {cmc.rank(1):.4f}  rank-5 {cmc.rank(5):.4f}  "
          f"train intra/inter {train_stats.intra_mean:.4f}/{train_stats.inter_mean:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_all(seed=args.seed, instances=args.instances)
    for name, err in sorted(report["max_rel_errors"].items()):
        status = "ok" if err < PASS_THRESHOLD else "FAIL"
        print(f"{name:32s} max rel err {err:.3e}  {status}")
    comp = report["eq5_comparison"]
    print(f"closed-form vs exact gradient deviation (M={comp['m']}): "
          f"g_ij {comp['max_abs_dev_g_ij']:.3e}  g_ik {comp['max_abs_dev_g_ik']:.3e}  "
          f"g_lk {comp['max_abs_dev_g_lk']:.3e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(f"overall max rel err {report['overall_max']:.3e} "
          f"(threshold {PASS_THRESHOLD:.0e}): {'PASS' if report['passed'] else 'FAIL'}")
    return 0 if report["passed"] else 1


def cmd_equivalence(args) -> int:
    report = run_equivalence_suite(seed=args.seed, n_triples=args.triples, n_batches=args.batches)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    ok = (
        report["max_identity"]["max_abs_deviation"] == 0.0
        and report["contrastive_sum"]["max_abs_deviation"] < 1e-9
        and report["fig3"]["classifier_prefers_case2"]
        and report["fig3"]["ranking_prefers_case1"]
    )
    print(f"max identity deviation {report['max_identity']['max_abs_deviation']}; "
          f"sum equivalence deviation {report['contrastive_sum']['max_abs_deviation']:.3e}; "
          f"preference contract {'holds' if ok else 'VIOLATED'}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    rows = []
    for run in args.runs:
        path = os.path.join(run, "summary.json")
        with open(path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        rows.append((run, summary))
    header = f"{'run':28s} {'mode':22s} {'rank1':>7s} {'rank5':>7s} {'intra':>7s} {'inter':>7s}"
    print(header)
    for run, s in rows:
        print(f"{run[:28]:28s} {s['mode']:22s} {s['rank_1']:7.4f} {s['rank_5']:7.4f} "
              f"{s['train_intra_mean']:7.4f} {s['train_inter_mean']:7.4f}")
    if args.out:
        doc = {run: s for run, s in rows}
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadlab",
        description="Quadruplet ranking loss laboratory: train, evaluate, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic feature CSV")
    p.add_argument("--num-ids", type=int, required=True)
    p.add_argument("--samples-per-id-per-camera", type=int, default=2)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--intra-sigma", type=float, default=0.3)
    p.add_argument("--inter-spread", type=float, default=1.0)
    p.add_argument("--camera-shift-sigma", type=float, default=0.3)
    p.add_argument("--cameras", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model into a run directory")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="CMC + variation statistics for a run")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--trials", type=int)
    p.add_argument("--eval-mode", choices=EVAL_MODES)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("equivalence", help="loss-relationship identity checks and the two-case demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--triples", type=int, default=1_000_000)
    p.add_argument("--batches", type=int, default=1000)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_equivalence)

    p = sub.add_parser("report", help="compare summaries of two or more runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", help="write the JSON comparison here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
