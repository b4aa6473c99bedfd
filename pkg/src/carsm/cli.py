"""Command-line entry point: ``carsm {train,toy,verify,sweep}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .envs import ENV_NAMES
from .trainer import ALGOS, RunConfig, episodes_to_threshold, format_csv, run
from .toy import POLICIES, ToyConfig, proportion_test, train_toy

# CLI flag name -> RunConfig field
_RUN_FLAGS = {
    "algo": "algo", "env": "env", "C": "C", "seed": "seed", "episodes": "episodes",
    "lr_policy": "lr_policy", "lr_critic": "lr_critic", "n_critic": "n_critic", "tau": "tau",
    "gamma": "gamma", "alpha0": "alpha0", "alpha_decay": "alpha_decay", "max_steps": "max_steps",
    "stop_avg": "stop_avg",
}


def _add_run_flags(p: argparse.ArgumentParser, multi_algo=False):
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields; flags override it")
    if multi_algo:
        p.add_argument("--algo", nargs="+", choices=ALGOS)
    else:
        p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--env", choices=ENV_NAMES)
    p.add_argument("--C", type=int, help="actions per dimension")
    p.add_argument("--episodes", type=int)
    p.add_argument("--lr-policy", type=float)
    p.add_argument("--lr-critic", type=float)
    p.add_argument("--n-critic", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha-decay", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--stop-avg", type=float, help="stop once the 100-episode average reaches this")
    p.add_argument("--out", type=Path, default=Path("runs"))


def config_from_args(args, **overrides) -> RunConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    for flag, name in _RUN_FLAGS.items():
        value = overrides.get(flag, getattr(args, flag, None))
        if value is not None:
            data[name] = value
    return RunConfig.from_dict(data)


def run_name(cfg: RunConfig) -> str:
    c = f"_C{cfg.C}" if cfg.C is not None else ""
    return f"{cfg.algo}_{cfg.env}{c}_seed{cfg.seed}"


def write_run(cfg: RunConfig, out: Path, plot=True):
    """Train one configuration and write ``<name>.csv``, ``<name>.json`` and ``<name>.png``."""
    from .plotting import plot_run

    out.mkdir(parents=True, exist_ok=True)
    logs = run(cfg)
    name = run_name(cfg)
    csv_path = out / f"{name}.csv"
    csv_path.write_text(format_csv(logs))
    manifest = {
        "config": asdict(cfg.resolved()),
        "episodes_run": len(logs),
        "final_avg100": logs[-1].avg100,
        "total_timesteps": logs[-1].timesteps,
        "csv": csv_path.name,
        "versions": {"carsm": __version__, "numpy": np.__version__, "python": sys.version.split()[0]},
    }
    (out / f"{name}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if plot:
        plot_run(logs, out / f"{name}.png", title=name)
    return logs, csv_path


def cmd_train(args):
    cfg = config_from_args(args)
    logs, path = write_run(cfg, args.out, plot=not args.no_plot)
    print(f"{path}: {len(logs)} episodes, final avg100 {logs[-1].avg100:.2f}")
    return 0


def cmd_sweep(args):
    from .plotting import plot_curves

    algos = args.algo or [None]
    curves, summary = {}, []
    for algo in algos:
        label = algo or "config"
        curves[label] = []
        for seed in range(args.seed, args.seed + args.seeds):
            cfg = config_from_args(args, algo=algo, seed=seed)
            logs, path = write_run(cfg, args.out, plot=False)
            curves[label].append(logs)
            row = {"algo": cfg.algo, "seed": seed, "csv": path.name, "final_avg100": logs[-1].avg100}
            if args.threshold is not None:
                row["episodes_to_threshold"] = episodes_to_threshold(logs, args.threshold)
            summary.append(row)
            print(json.dumps(row))
    (args.out / "sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
    if not args.no_plot:
        plot_curves(curves, args.out / "sweep.png")
    return 0


def write_heatmap_csv(result, path: Path):
    lines = ["iteration,action_index,avg_density"]
    for i, row in enumerate(result.heatmap):
        lines.extend(f"{i},{j},{v:.8g}" for j, v in enumerate(row))
    path.write_text("\n".join(lines) + "\n")


def cmd_toy(args):
    from .plotting import plot_toy_heatmaps

    args.out.mkdir(parents=True, exist_ok=True)
    policies = POLICIES if args.policy == "both" else (args.policy,)
    results, summary = [], {}
    for pol in policies:
        cfg = ToyConfig(m=args.m, policy=pol, trials=args.trials, samples=args.samples,
                        seed=args.seed, **({"lr": args.lr} if args.lr else {}),
                        **({"alpha0": args.alpha0} if args.alpha0 is not None else {}))
        res = train_toy(cfg)
        results.append(res)
        write_heatmap_csv(res, args.out / f"toy_{pol}_m{args.m:g}.csv")
        summary[pol] = {o: res.count(o) for o in ("global", "inferior", "none")}
        print(f"{pol}: {summary[pol]}")
    if len(results) == 2:
        d, g = summary["discrete"], summary["gaussian"]
        summary["inferior_rate_p_value"] = proportion_test(g["inferior"], args.trials,
                                                           d["inferior"], args.trials)
        print(f"one-sided p (gaussian inferior rate > discrete): {summary['inferior_rate_p_value']:.3g}")
    (args.out / f"toy_m{args.m:g}.json").write_text(json.dumps(summary, indent=2) + "\n")
    if not args.no_plot:
        plot_toy_heatmaps(results, args.out / f"toy_m{args.m:g}.png")
    return 0


def cmd_verify(args):
    from .verify import run_verification

    report = run_verification(seed=args.seed, n_draws=args.draws)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, indent=2) + "\n")
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carsm")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one policy and write CSV, manifest and figure")
    _add_run_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a grid of algorithms over consecutive seeds")
    _add_run_flags(p, multi_algo=True)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("--threshold", type=float, help="report episodes until avg100 reaches this")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("toy", help="discrete vs Gaussian policy on the bimodal bandit")
    p.add_argument("--m", type=float, default=0.0)
    p.add_argument("--policy", choices=(*POLICIES, "both"), default="both")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--samples", type=int, default=500_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("verify", help="run the estimator and gradient oracles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--out", type=Path, default=Path("verify.json"))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
