"""Command-line entry point: ``prpo {train,ablate,scaling,gradcheck}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed check (``gradcheck`` tolerance, ``--check`` orderings).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from dataclasses import replace

from .config import RunConfig, dump_config, load_config
from .env import generate_episode, save_episodes
from .errors import ConfigError, InputError, NumericalError
from .gradcheck import run_all
from .policy import load_checkpoint, save_checkpoint
from .reward import TR
from .trainer import convergence_update, evaluate, split_streams, train

log = logging.getLogger("prpo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
TREND_TOL = 0.02

CONDITIONS = ("full", "-PSP", "-TCR", "-MP", "cold-start-only")


def _dumps(rec) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _out_dir(args, cfg: RunConfig) -> str:
    path = args.out or os.path.join(cfg.output_dir, cfg.run_name)
    os.makedirs(path, exist_ok=True)
    return path


def _load(args) -> RunConfig:
    cfg = load_config(args.config, args.set or ())
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def summarize(cfg: RunConfig, trainer, history) -> dict:
    tc = cfg.train
    n_updates = trainer.updates
    episodes = n_updates * tc.batch_size
    last_eval = next(r for r in reversed(history) if "eval_accuracy" in r)
    counters = trainer.counters.as_dict()
    return {
        "run_name": cfg.run_name,
        "master_seed": cfg.master_seed,
        "updates": n_updates,
        "version": trainer.params.version,
        "final_accuracy": last_eval["eval_accuracy"],
        "step_accuracy": last_eval["eval_step_accuracy"],
        "format_rate": last_eval["eval_format_rate"],
        "mean_memory_len": last_eval["eval_memory_len"],
        "convergence_update": convergence_update(history, tc.target_accuracy),
        "target_accuracy": tc.target_accuracy,
        "reward_density": counters["reward_events"] / (episodes * tc.group_size) if episodes else None,
        "prefill_per_episode": counters["prefill_events"] / episodes if episodes else None,
        "decode_per_episode": counters["decode_events"] / episodes if episodes else None,
        **counters,
    }


def run_training(cfg: RunConfig, out_dir=None, trajectories: bool = False):
    """Train one configuration; stream metrics into ``out_dir`` when given."""
    metrics = traj_log = None
    if out_dir is not None:
        with open(os.path.join(out_dir, "config.txt"), "w") as fh:
            fh.write(dump_config(cfg))
        metrics = open(os.path.join(out_dir, "metrics.jsonl"), "w")
        if trajectories:
            traj_log = open(os.path.join(out_dir, "trajectories.jsonl"), "w")

    def on_record(rec):
        if metrics is not None:
            metrics.write(_dumps(rec) + "\n")
        if "eval_accuracy" in rec:
            log.info("update %d eval_accuracy %.3f", rec["update"], rec["eval_accuracy"])

    try:
        trainer, history = train(
            cfg.train, cfg.env, cfg.master_seed, cfg.eval_spec, callback=on_record, trajectory_log=traj_log
        )
    finally:
        for fh in (metrics, traj_log):
            if fh is not None:
                fh.close()
    summary = summarize(cfg, trainer, history)
    if out_dir is not None:
        save_checkpoint(trainer.params, os.path.join(out_dir, "checkpoint.txt"))
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return trainer, history, summary


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    if args.dump_episodes:
        _, eval_seeds, _ = split_streams(cfg.master_seed)
        eps = [generate_episode(cfg.eval_spec, next(eval_seeds)) for _ in range(cfg.train.eval_episodes)]
        save_episodes(eps, os.path.join(out, "episodes.jsonl"))
    _, _, summary = run_training(cfg, out, args.trajectories)
    print(_dumps(summary))
    return EXIT_OK


def condition_config(cfg: RunConfig, name: str) -> RunConfig:
    tc = cfg.train
    if name == "full":
        pass
    elif name == "-PSP":
        tc = replace(tc, psp=False)
    elif name == "-TCR":
        tc = replace(tc, reward=replace(tc.reward, mode=TR))
    elif name == "-MP":
        tc = replace(tc, reward=replace(tc.reward, beta=0.0))
    elif name == "cold-start-only":
        tc = replace(tc, rl=False, cold_start=True)
    else:
        raise ConfigError(f"unknown ablation condition {name!r}")
    return replace(cfg, train=tc, run_name=f"{cfg.run_name}{name}")


def ablation_checks(table: dict) -> list:
    """Directional orderings over median final accuracy: ``(description, ok)``."""
    acc = {c: table[c]["final_accuracy"] for c in table}
    singles = ("-PSP", "-TCR", "-MP")
    checks = [(f"full >= {c}", acc["full"] >= acc[c]) for c in singles]
    checks += [(f"{c} >= cold-start-only", acc[c] >= acc["cold-start-only"]) for c in singles]
    checks.append(("-TCR is the worst single ablation", all(acc["-TCR"] <= acc[c] for c in singles)))
    return checks


def run_ablation(cfg: RunConfig, seeds, out_dir=None) -> tuple:
    rows = []
    for name in CONDITIONS:
        for s in seeds:
            ccfg = replace(condition_config(cfg, name), master_seed=s)
            _, _, summary = run_training(ccfg)
            rows.append({"condition": name, "seed": s, **summary})
    table = {}
    for name in CONDITIONS:
        sub = [r for r in rows if r["condition"] == name]
        conv = [r["convergence_update"] for r in sub]
        table[name] = {
            "final_accuracy": statistics.median(r["final_accuracy"] for r in sub),
            "mean_memory_len": statistics.median(r["mean_memory_len"] for r in sub),
            "prefill_per_episode": statistics.median(r["prefill_per_episode"] or 0.0 for r in sub),
            "reward_density": statistics.median(r["reward_density"] or 0.0 for r in sub),
            "converged_runs": sum(c is not None for c in conv),
        }
    if out_dir is not None:
        with open(os.path.join(out_dir, "ablation.jsonl"), "w") as fh:
            for r in rows:
                fh.write(_dumps(r) + "\n")
    return rows, table


def format_table(table: dict) -> str:
    cols = ("final_accuracy", "mean_memory_len", "prefill_per_episode", "reward_density", "converged_runs")
    lines = ["condition        " + " ".join(f"{c:>20}" for c in cols)]
    for name, row in table.items():
        lines.append(f"{name:<16} " + " ".join(f"{row[c]:>20.4f}" for c in cols))
    return "\n".join(lines)


def cmd_ablate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    seeds = [cfg.master_seed + k for k in range(args.seeds)]
    _, table = run_ablation(cfg, seeds, out)
    text = format_table(table)
    with open(os.path.join(out, "ablation.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    status = EXIT_OK
    for desc, ok in ablation_checks(table):
        print(f"{'PASS' if ok else 'FAIL'} {desc}")
        if args.check and not ok:
            status = EXIT_CHECK
    return status


def nondecreasing(values, tol: float = TREND_TOL) -> bool:
    return all(b >= a - tol for a, b in zip(values, values[1:]))


def run_scaling(params, cfg: RunConfig, t_list, n_episodes: int) -> list:
    rows = []
    for T in t_list:
        spec = replace(cfg.env, num_segments=T)
        _, eval_seeds, _ = split_streams(cfg.master_seed)
        eps = [generate_episode(spec, next(eval_seeds)) for _ in range(n_episodes)]
        res = evaluate(params, eps, cfg.train.out_len, cfg.train.final_answer_pass)
        rows.append(
            {
                "T": T,
                "final_accuracy": res.final_accuracy,
                "step_accuracy": res.step_accuracy,
                "format_rate": res.format_rate,
                "mean_memory_len": res.mean_memory_len,
            }
        )
    return rows


def _parse_t_list(text: str) -> list:
    try:
        t_list = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--t-list: expected comma-separated integers, got {text!r}") from None
    if not t_list or min(t_list) < 1:
        raise ConfigError("--t-list: need at least one segment count, all >= 1")
    return t_list


def cmd_scaling(args) -> int:
    cfg = _load(args)
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"--checkpoint: {args.checkpoint} does not exist")
    params = load_checkpoint(args.checkpoint)
    if params.vocab != cfg.env.vocab:
        raise ConfigError("checkpoint vocabulary does not match env.* settings")
    t_list = _parse_t_list(args.t_list)
    out = _out_dir(args, cfg)
    rows = run_scaling(params, cfg, t_list, args.episodes)
    with open(os.path.join(out, "scaling.jsonl"), "w") as fh:
        for r in rows:
            fh.write(_dumps(r) + "\n")
    for r in rows:
        steps = " ".join(f"{a:.3f}" for a in r["step_accuracy"])
        print(f"T={r['T']} final={r['final_accuracy']:.3f} steps=[{steps}]")
    checks = [("final accuracy nondecreasing in T", nondecreasing([r["final_accuracy"] for r in rows]))]
    checks += [(f"T={r['T']} per-step accuracy nondecreasing", nondecreasing(r["step_accuracy"])) for r in rows]
    status = EXIT_OK
    for desc, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {desc}")
        if args.check and not ok:
            status = EXIT_CHECK
    return status


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    reports = run_all(seed, args.cases, corrupt=args.corrupt_gradient)
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.ok for r in reports) else EXIT_CHECK


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prpo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", help="override one key (repeatable)")
        p.add_argument("--seed", type=int, help="master seed (overrides run.master_seed)")
        p.add_argument("--out", metavar="DIR", help="output directory (default run.output_dir/run.run_name)")

    p = sub.add_parser("train", help="cold start + PRPO training run")
    common(p)
    p.add_argument("--trajectories", action="store_true", help="also write trajectories.jsonl")
    p.add_argument("--dump-episodes", action="store_true", help="write the evaluation episodes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="full / -PSP / -TCR / -MP / cold-start-only grid")
    common(p)
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds (default 5)")
    p.add_argument("--check", action="store_true", help="exit 3 when an ordering fails")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("scaling", help="evaluate a checkpoint at several segment counts")
    common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--t-list", default="1,2,3,4,5,6")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--check", action="store_true", help="exit 3 when a trend check fails")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--corrupt-gradient", action="store_true", help="negative control: perturb analytic gradients")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
