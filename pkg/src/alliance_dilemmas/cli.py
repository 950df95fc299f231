"""Command-line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dynamics as dyn
from . import matrix_games as mg
from . import plotting, training
from .reporting import emit_report
from .rollout import EVAL
from .verify import run_checks

OUT_ENV = "ALLIANCE_DILEMMAS_OUT"
DEFAULT_OUT = "runs"


def _write_csv(path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return Path(path)


def _out_dir(args, name: str) -> Path:
    base = args.out or args.values.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    out = Path(base) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(args.values.get("seed", 0))


def _finish(out, experiment, headline, flat, seeds) -> None:
    cfgmod.write_snapshot(out, flat)
    emit_report(out, experiment, headline, flat, seeds)
    print(json.dumps(headline, sort_keys=True))
    print(f"wrote {out}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_epsilon_hist(args) -> int:
    settings = cfgmod.build(cfgmod.GameSettings, args.values, "matrix_games")
    n_games = args.games or settings.n_games
    seed = _seed(args)
    hist = mg.run_epsilon_histogram(n_games, settings.n_bins, seed)
    out = _out_dir(args, "epsilon-hist")
    _write_csv(out / "epsilon_hist.csv", ("bin_lo", "bin_hi", "count"), hist.rows())
    if not args.no_plots:
        plotting.epsilon_histogram(hist.edges, hist.counts, out / "epsilon_hist.png")
    counts = hist.counts
    headline = {
        "n_games": n_games,
        "lowest_bin_count": int(counts[0]),
        "modal_bin_count": int(counts.max()),
        "unimodal": mg.is_unimodal(counts),
    }
    flat = {"seed": seed, "matrix_games.n_games": n_games, "matrix_games.n_bins": settings.n_bins}
    _finish(out, "epsilon-hist", headline, flat, [seed])
    return 0


def cmd_dilemma_count(args) -> int:
    settings = cfgmod.build(cfgmod.GameSettings, args.values, "matrix_games")
    n_games = args.games or settings.n_games
    seed = _seed(args)
    summary = mg.run_counting_experiment(n_games, seed, settings.grid_step)
    out = _out_dir(args, "dilemma-count")
    _write_csv(out / "games.csv", ("game", "p", "q", "has_dilemma", "has_strict", "dilemma_gridpoints"),
               ((r.game_index, r.p, r.q, int(r.has_dilemma), int(r.has_strict),
                 " ".join(f"{g:.1f}" for g in r.dilemma_gridpoints)) for r in summary.records))
    _write_csv(out / "per_gridpoint.csv", ("stubborn_prob", "games_with_dilemma"),
               zip(map(float, summary.grid), map(int, summary.games_per_gridpoint)))
    _write_csv(out / "gridpoints_per_game.csv", ("n_gridpoints", "games"),
               enumerate(map(int, summary.gridpoints_per_game)))
    if not args.no_plots:
        plotting.dilemma_counts(summary.grid, summary.games_per_gridpoint,
                                summary.gridpoints_per_game, out / "dilemma_count.png")
    headline = {
        "n_games": n_games,
        "dilemma_fraction": summary.dilemma_fraction,
        "strict_fraction_of_dilemmas": summary.strict_fraction_of_dilemmas,
        "strict_fraction_of_games": summary.strict_fraction_of_games,
    }
    flat = {"seed": seed, "matrix_games.n_games": n_games,
            "matrix_games.grid_step": settings.grid_step}
    _finish(out, "dilemma-count", headline, flat, [seed])
    return 0


def _parse_init(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise SystemExit(f"--init expects comma-separated probabilities, got {text!r}") from None
    if len(values) not in (2, 3):
        raise SystemExit("--init takes two learner probabilities (or all three)")
    return values


def cmd_dynamics(args) -> int:
    run = cfgmod.build(cfgmod.DynamicsSettings, args.values, "dynamics_run")
    config = cfgmod.build(dyn.DynamicsConfig, args.values, "dynamics")
    game_name = args.game or run.game
    game = mg.named_game(game_name)
    seed = _seed(args)
    out = _out_dir(args, f"dynamics-{game_name}")

    init_text = args.init or args.values.get("init")
    if init_text:
        init = _parse_init(str(init_text))
        if len(init) == 2:
            init = init + [config.stubborn_policy]
        inits = np.array([init])
    else:
        rng = np.random.default_rng(seed)
        inits = np.column_stack([rng.uniform(0.01, 0.99, (run.n_runs, 2)),
                                 np.full(run.n_runs, config.stubborn_policy)])
    header = ("run", "step", "x", "y", "z", "payoff_0", "payoff_1", "payoff_2")
    records = dyn.simulate_batch(game, config, inits, run.record_every)
    rows = [row for k, rec in enumerate(records) for row in rec.rows(k)]
    _write_csv(out / "trajectories.csv", header, rows)
    finals = np.array([rec.final_policy for rec in records])
    final_pay = np.array([rec.final_payoffs for rec in records])
    _write_csv(out / "final.csv", ("run", "x", "y", "z", "payoff_0", "payoff_1", "payoff_2"),
               ((k, *map(float, p), *map(float, v)) for k, (p, v) in enumerate(zip(finals, final_pay))))
    _write_csv(out / "phase_portrait.csv", ("x", "y", "z", "dx", "dy"),
               dyn.phase_portrait(game, config.stubborn_policy))

    mode = "analytic" if game.is_odd_one_out else "numeric"
    points = dyn.fixed_point_report(game, mode)
    fixed = [{"point": fp.describe(), "stability": fp.stability} for fp in points]
    (out / "fixed_points.json").write_text(json.dumps(fixed, indent=2, sort_keys=True) + "\n")
    if not args.no_plots:
        rec = records[0]
        plotting.dynamics_trajectory(rec.steps, rec.policies, rec.payoffs, out / "trajectory.png")
    learners = list(config.learners)
    headline = {
        "game": game_name,
        "n_runs": len(inits),
        "mean_final_learner_payoff": float(final_pay[:, learners].mean()),
        "max_final_learner_payoff": float(final_pay[:, learners].max()),
        "converged_runs": sum(rec.converged for rec in records),
        "fixed_points": fixed,
    }
    flat = {"seed": seed, "dynamics_run.game": game_name, "dynamics_run.n_runs": len(inits),
            "dynamics_run.record_every": run.record_every, "init": init_text}
    flat.update({f"dynamics.{k}": v for k, v in asdict(config).items()})
    _finish(out, "dynamics", headline, flat, [seed])
    return 0


def _train_config(args) -> training.TrainConfig:
    overrides = cfgmod.section(args.values, "training")
    overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif "seed" in args.values:
        overrides.setdefault("seed", int(args.values["seed"]))
    if args.updates is not None:
        overrides["n_updates"] = args.updates
    if args.episodes is not None:
        overrides["episodes_per_update"] = args.episodes
    if args.seeds is not None:
        overrides["n_seeds"] = args.seeds
    if args.desk:
        return training.desk_config(args.scenario, **overrides)
    return training.TrainConfig.for_scenario(args.scenario, **overrides)


def _checkpoint_paths(path) -> list[Path]:
    """All agents of one population, from a directory or any one agent file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("seed*_agent*.json"))
        if not files:
            raise SystemExit(f"no checkpoints in {path}")
        first_seed = files[0].name.split("_")[0]
        return [f for f in files if f.name.startswith(first_seed + "_")]
    if not path.exists():
        raise SystemExit(f"checkpoint {path} not found")
    prefix = path.name.split("_")[0]
    return sorted(path.parent.glob(f"{prefix}_agent*.json"))


def _seed_curves(results, key):
    updates = sorted({r["update"] for r in results[0].train_metrics})
    curves = {}
    n_agents = len(results[0].agents)
    for i in range(n_agents):
        per_seed = np.array([[r[key] for r in res.train_metrics if r["agent"] == i] for res in results])
        curves[f"agent {i}"] = training.confidence_band(per_seed)
    return np.array(updates), curves


def cmd_train(args) -> int:
    config = _train_config(args)
    out = _out_dir(args, f"train-{config.scenario}")
    flat = {f"training.{k}": v for k, v in asdict(config).items()}
    if args.eval_only:
        if not args.checkpoint:
            raise SystemExit("--eval-only needs --checkpoint")
        paths = _checkpoint_paths(args.checkpoint)
        ckpt_config = training.config_from_checkpoint(paths[0])
        config = training.with_overrides(ckpt_config, eval_episodes=args.episodes or config.eval_episodes)
        agents = training.load_agents(paths, config)
        rng = np.random.default_rng([config.seed, 4])
        batch = training.collect(config, agents, config.eval_episodes, EVAL, rng)
        rows = training.batch_metrics(batch, 0)
        training.write_metrics_csv(out / "eval.csv", rows)
        headline = {"eval_rewards": [r["mean_reward"] for r in rows],
                    "gift_rates": [r["gift_rate"] for r in rows],
                    "two_way_draws": training.two_way_draws(batch)}
        flat = {f"training.{k}": v for k, v in asdict(config).items()}
        flat["checkpoint"] = str(args.checkpoint)
        _finish(out, "train-eval", headline, flat, [config.seed])
        return 0

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    results = training.run_training(config, progress=args.verbose)
    for res in results:
        training.write_metrics_csv(out / f"train_seed{res.seed}.csv", res.train_metrics)
        training.write_metrics_csv(out / f"eval_seed{res.seed}.csv", res.eval_metrics)
        _write_csv(out / f"signings_seed{res.seed}.csv", ("update", "GG_per_episode", "NGNG_per_episode"),
                   res.signings)
        _write_csv(out / f"draws_seed{res.seed}.csv", ("update", "two_way_draws", "episodes"),
                   res.eval_draws)
        training.save_agents(out / "checkpoints", config, res)
    if not args.no_plots:
        for key in ("mean_reward", "gift_rate"):
            updates, curves = _seed_curves(results, key)
            plotting.training_curves(updates, curves, key.replace("_", " "), out / f"{key}.png")
    finals = training.final_eval_rewards(results)
    headline = {
        "final_eval_rewards": {str(res.seed): finals[k].tolist() for k, res in enumerate(results)},
        "median_final_eval_rewards": np.median(finals, axis=0).tolist(),
        "median_final_gift_rate": float(np.median(training.final_eval_gift_rates(results).mean(axis=1))),
    }
    _finish(out, "train", headline, flat, training.seed_list(config))
    return 0


def cmd_regress(args) -> int:
    checkpoint = args.checkpoint or args.values.get("checkpoint")
    if not checkpoint:
        raise SystemExit("regress needs --checkpoint")
    paths = _checkpoint_paths(checkpoint)
    config = training.config_from_checkpoint(paths[0])
    agents = training.load_agents(paths, config)
    seed = _seed(args)
    episodes = args.episodes or int(args.values.get("episodes", 50))
    try:
        report = training.regression_report(agents, config, episodes, seed)
    except training.DegenerateRegression as exc:
        print(f"regression undefined: {exc}", file=sys.stderr)
        return 3
    out = _out_dir(args, "regress")
    _write_csv(out / "scatter.csv", ("episode", "player", "contracts_signed", "chips"), report.records)
    result = {"slope": report.slope, "intercept": report.intercept, "p_value": report.p_value,
              "n_records": len(report.records)}
    (out / "regression.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    if not args.no_plots:
        x = [r[2] for r in report.records]
        y = [r[3] for r in report.records]
        plotting.regression_scatter(x, y, report.slope, report.intercept, out / "scatter.png")
    flat = {"seed": seed, "episodes": episodes, "checkpoint": str(checkpoint)}
    _finish(out, "regress", result, flat, [seed])
    return 0


def cmd_verify(args) -> int:
    failures = run_checks(stream=sys.stdout)
    return 1 if failures else 0


COMMANDS = {
    "epsilon-hist": cmd_epsilon_hist,
    "dilemma-count": cmd_dilemma_count,
    "dynamics": cmd_dynamics,
    "train": cmd_train,
    "regress": cmd_regress,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--single-thread", action="store_true",
                        help="serial execution (the default; kept for scripts)")
    common.add_argument("--no-plots", action="store_true", help="skip PNG rendering")

    parser = argparse.ArgumentParser(prog="alliance-dilemmas")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("epsilon-hist", parents=[common])
    p.add_argument("--games", type=int)
    p = sub.add_parser("dilemma-count", parents=[common])
    p.add_argument("--games", type=int)
    p = sub.add_parser("dynamics", parents=[common])
    p.add_argument("--game", choices=["odd-one-out", "matching", "constant"])
    p.add_argument("--init", help="learner probabilities of action 0, e.g. 0.3,0.6")
    p = sub.add_parser("train", parents=[common])
    p.add_argument("--scenario", required=True, choices=sorted(training.PAPER_DEFAULTS))
    p.add_argument("--updates", type=int)
    p.add_argument("--episodes", type=int, help="episodes per update (eval episodes with --eval-only)")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--desk", action="store_true", help="reduced widths and schedule")
    p.add_argument("--eval-only", action="store_true")
    p.add_argument("--checkpoint")
    p.add_argument("--verbose", action="store_true")
    p = sub.add_parser("regress", parents=[common])
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    sub.add_parser("verify", parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.values = cfgmod.load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
