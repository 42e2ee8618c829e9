"""``scanirl`` command-line entry point.

Exit codes: 0 on success, 1 on a runtime error, 2 on a usage error.
Each command writes ``manifest-<command>.json`` (argv, resolved config and
seeds) to the run's output directory.
"""
import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import archive, envs, irl, oracles
from .config import load_config
from .errors import ConfigError, ScanIRLError, UsageError
from .expert import collect_dataset
from .generator import train_generator
from .policy import policy_train
from .runtime import RolloutConfig, eval_suite, rollout, write_metrics_csv

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="scanirl", description="Scan-conditioned imitation and reward recovery.")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--output-dir", help="overrides output_dir from the config")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="run the scripted expert and save a dataset")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="dataset path (default: <output_dir>/dataset.nmir)")

    p = sub.add_parser("train-gen", help="train the scan generator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="checkpoint path (default: <output_dir>/generator.nmir)")
    p.add_argument("--curve", help="NLL curve CSV (default: <output_dir>/generator_nll.csv)")

    p = sub.add_parser("train-policy", help="behavioral cloning of the policy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mask-scan", action="store_true", help="ablation: train with zeroed scans")
    p.add_argument("--out", help="checkpoint path (default: <output_dir>/policy.nmir)")
    p.add_argument("--curve", help="accuracy curve CSV (default: <output_dir>/policy_accuracy.csv)")

    p = sub.add_parser("irl", help="recover a linear gridworld reward")
    p.add_argument("--features", choices=("one_hot", "compact"))
    p.add_argument("--out", help="report CSV (default: <output_dir>/irl_report.csv)")

    p = sub.add_parser("rollout", help="one closed-loop episode")
    p.add_argument("--generator")
    p.add_argument("--policy", required=True)
    p.add_argument("--mode", choices=("oracle", "generated", "zeroed"), default="generated")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace-out", help="write the episode trace as a dataset archive")

    p = sub.add_parser("eval", help="success rates for all scan modes")
    p.add_argument("--generator", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="metrics CSV (default: <output_dir>/metrics.csv)")

    sub.add_parser("selftest", help="run the enumeration and gradient oracles")
    return parser


def _write_manifest(outdir, command, argv, cfg, extra):
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "argv": list(argv), "config": cfg.to_dict(), **extra}
    (outdir / f"manifest-{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def _seed(args, cfg):
    return cfg.seed if getattr(args, "seed", None) is None else args.seed


def _cmd_collect(args, cfg, outdir):
    seed = _seed(args, cfg)
    episodes = args.episodes or cfg.collect.episodes
    ds = collect_dataset(cfg.env, episodes, cfg.scan, seed)
    out = Path(args.out) if args.out else outdir / "dataset.nmir"
    archive.save_dataset(ds, out)
    print(f"wrote {len(ds)} records from {episodes} episodes to {out}")
    return {"seed": seed, "episodes": episodes, "dataset": str(out)}


def _cmd_train_gen(args, cfg, outdir):
    ds = archive.load_dataset(args.dataset)
    hyper = replace(cfg.generator, seed=_seed(args, cfg) if args.seed is not None else cfg.generator.seed)
    if args.epochs is not None:
        hyper = replace(hyper, epochs=args.epochs)
    model, history = train_generator(ds, hyper)
    out = Path(args.out) if args.out else outdir / "generator.nmir"
    archive.save_generator(model, out, hyper.seed)
    curve = Path(args.curve) if args.curve else outdir / "generator_nll.csv"
    _write_rows(curve, ["epoch", "train_nll", "heldout_nll"], history.epochs)
    print(f"final train NLL {history.train_nll[-1]:.4f} nats/scan; wrote {out}")
    return {"seed": hyper.seed, "checkpoint": str(out), "curve": str(curve)}


def _cmd_train_policy(args, cfg, outdir):
    ds = archive.load_dataset(args.dataset)
    hyper = replace(cfg.policy, seed=args.seed if args.seed is not None else cfg.policy.seed,
                    mask_scan=args.mask_scan or cfg.policy.mask_scan)
    if args.epochs is not None:
        hyper = replace(hyper, epochs=args.epochs)
    pol, history = policy_train(ds, hyper)
    out = Path(args.out) if args.out else outdir / "policy.nmir"
    archive.save_policy(pol, out, hyper.seed)
    curve = Path(args.curve) if args.curve else outdir / "policy_accuracy.csv"
    _write_rows(curve, ["epoch", "train_acc", "heldout_acc", "loss"], history.epochs)
    print(f"final held-out accuracy {history.heldout_acc[-1]:.4f}; wrote {out}")
    return {"seed": hyper.seed, "checkpoint": str(out), "curve": str(curve)}


def _cmd_irl(args, cfg, outdir):
    section = cfg.irl
    spec = envs.EnvSpec(kind="gridworld", height=section.height, width=section.width, discount=cfg.env.discount)
    mdp = envs.tabular_build(spec)
    _, expert = envs.value_iteration(mdp)
    features = args.features or section.features
    phi = irl.one_hot_features(mdp.n_states) if features == "one_hot" else irl.compact_features(spec)
    hyper = irl.IRLHyper(section.w_max, section.tol, section.max_iter, section.start, section.validate_tol)
    result = irl.irl_recover(mdp, expert, phi, hyper)
    out = Path(args.out) if args.out else outdir / "irl_report.csv"
    result.report.write_csv(out)
    print(f"expert optimal in {result.report.match_fraction:.1%} of states after {result.iterations} iterations")
    return {"features": features, "weights": result.weights.tolist(), "report": str(out)}


def _cmd_rollout(args, cfg, outdir):
    pol = archive.load_policy(args.policy)
    gen = archive.load_generator(args.generator) if args.generator else None
    if args.mode == "generated" and gen is None:
        raise UsageError("--generator is required for --mode generated")
    seed = _seed(args, cfg)
    rcfg = RolloutConfig(args.mode, cfg.eval.max_steps, seed, cfg.eval.policy_mode, cfg.eval.generator_greedy)
    result = rollout(gen, pol, cfg.env, rcfg)
    print(f"steps={result.steps} success={result.success} agreement={result.agreement:.3f} "
          f"scan_divergence={result.scan_divergence:.4f}")
    extra = {"seed": seed, "mode": args.mode, "success": result.success}
    if args.trace_out:
        archive.save_dataset(result.to_dataset(cfg.env, pol.config.scan, seed), args.trace_out)
        extra["trace"] = args.trace_out
    return extra


def _cmd_eval(args, cfg, outdir):
    gen = archive.load_generator(args.generator)
    pol = archive.load_policy(args.policy)
    seed = _seed(args, cfg)
    episodes = args.episodes or cfg.eval.episodes
    rows = eval_suite(gen, pol, cfg.env, episodes, seed, max_steps=cfg.eval.max_steps,
                      policy_mode=cfg.eval.policy_mode, generator_greedy=cfg.eval.generator_greedy)
    out = Path(args.out) if args.out else outdir / "metrics.csv"
    write_metrics_csv(rows, out)
    for r in rows:
        print(f"{r.mode:>9}: success {r.success_rate:.3f} [{r.success_low:.3f}, {r.success_high:.3f}] "
              f"agreement {r.mean_agreement:.3f} divergence {r.mean_scan_divergence:.4f}")
    return {"seed": seed, "episodes": episodes, "metrics": str(out)}


def _cmd_selftest(args, cfg, outdir):
    checks = oracles.selftest_checks()
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise _SelftestFailure(f"{len(failed)} oracle check(s) failed")
    return {"checks": {c.name: bool(c.passed) for c in checks}}


class _SelftestFailure(ScanIRLError):
    pass


COMMANDS = {
    "collect": _cmd_collect,
    "train-gen": _cmd_train_gen,
    "train-policy": _cmd_train_policy,
    "irl": _cmd_irl,
    "rollout": _cmd_rollout,
    "eval": _cmd_eval,
    "selftest": _cmd_selftest,
}


def _write_rows(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[k] for k in header])


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"scanirl: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.output_dir or cfg.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, cfg, outdir)
    except (UsageError, ConfigError) as exc:
        print(f"scanirl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScanIRLError, OSError) as exc:
        print(f"scanirl {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_manifest(outdir, args.command, argv, cfg, extra)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
