"""``missmdp`` command-line interface.

Every subcommand reads text artifacts, calls the library and writes a text
artifact (or prints to stdout when ``--out`` is omitted).  Malformed input
exits with status 1 and a one-line diagnostic on stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .bench import PRESETS, build, preset
from .evaluation import rollout_value
from .learn import learn
from .mgraph import parse_mgraph, render_mgraph
from .model import check_model, classify_missingness
from .pac import certify, format_certificate
from .plan import SolveConfig, format_policy, parse_policy, solve_point_based
from .simulate import format_dataset, generate_dataset, parse_dataset


class CliError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        mio.write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_model(args, need_m: bool = True):
    model, M = mio.parse_model(mio.read_text(args.model))
    if getattr(args, "missingness", None):
        M, _ = mio.parse_missingness(mio.read_text(args.missingness), model.features)
    if need_m and M is None:
        raise CliError("no missingness table: add M rows to the model or pass --missingness")
    check_model(model, M)
    return model, M


def _load_dataset(args, features):
    return parse_dataset(mio.read_text(args.dataset), features)


def _learn(args, model):
    D = _load_dataset(args, model.features)
    kwargs = {}
    if args.algo == "aimi" and args.mgraph:
        kwargs["graph"] = parse_mgraph(mio.read_text(args.mgraph))
    if args.algo == "aimi" and getattr(args, "assume", None):
        kwargs["assume"] = args.assume
    return learn(D, args.algo, args.kappa, **kwargs)


def cmd_simulate(args) -> None:
    model, M = _load_model(args)
    D = generate_dataset(model, M, args.size, args.seed)
    _emit(format_dataset(D), args.out)


def cmd_learn(args) -> None:
    model, _ = _load_model(args, need_m=False)
    _emit(mio.format_learned(_learn(args, model)), args.out)


def cmd_certify(args) -> None:
    model, _ = _load_model(args, need_m=False)
    L = _learn(args, model)
    _emit(format_certificate(certify(L.counts, args.delta)), args.out)


def cmd_classify(args) -> None:
    if args.model:
        model, M = _load_model(args)
    else:
        M, _ = mio.parse_missingness(mio.read_text(args.missingness))
    _emit(str(classify_missingness(M)) + "\n", args.out)


def cmd_plan(args) -> None:
    model, M = _load_model(args)
    eps = args.eps if args.eps is not None else 1e-3 * max(model.rho_max, 1e-12) / (1 - model.gamma)
    cfg = SolveConfig(epsilon_target=eps, max_beliefs=args.max_beliefs, seed=args.seed, time_budget=args.time_budget)
    _emit(format_policy(solve_point_based(model, M, cfg)), args.out)


def cmd_eval(args) -> None:
    model, M_true = mio.parse_model(mio.read_text(args.model))
    if M_true is None:
        raise CliError("the model file must contain the true missingness table (M rows)")
    check_model(model, M_true)
    M_belief = None
    if args.missingness:
        M_belief, _ = mio.parse_missingness(mio.read_text(args.missingness), model.features)
    policy = parse_policy(mio.read_text(args.policy))
    if policy.num_states != model.num_states or policy.actions.max() >= model.num_actions:
        raise CliError("policy does not match the model")
    r = rollout_value(model, M_true, policy, args.episodes, args.seed, M_belief=M_belief)
    _emit(f"value_mean={float(r.mean)!r}\nvalue_ci95={float(r.ci95)!r}\nimpossible_observations={r.impossible_observations}\n", args.out)


def cmd_experiment(args) -> None:
    from .experiment import cmd_experiment as run, load_config

    cfg = load_config(mio.read_text(args.config))
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.scale:
        overrides["scale"] = args.scale
    if args.workers:
        overrides["workers"] = args.workers
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
    print(run(cfg))


def cmd_bench_emit(args) -> None:
    b = build(preset(args.preset, args.scale))
    out = Path(args.out or ".")
    mio.write_text(out / f"{args.preset}-{args.scale}.model", mio.format_model(b.model, b.M))
    mio.write_text(out / f"{args.preset}-{args.scale}.mgraph", render_mgraph(b.graph))
    print(out / f"{args.preset}-{args.scale}.model")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="missmdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, *opts):
        sp = sub.add_parser(name)
        sp.set_defaults(func=fn)
        for o in opts:
            o(sp)
        sp.add_argument("--out")
        return sp

    model = lambda sp: sp.add_argument("--model", required=True)
    missing = lambda sp: sp.add_argument("--missingness")
    dataset = lambda sp: sp.add_argument("--dataset", required=True)
    seed = lambda sp: sp.add_argument("--seed", type=int, default=0)

    def learner(sp):
        sp.add_argument("--algo", choices=("amcar", "asmar", "aimi"), required=True)
        sp.add_argument("--kappa", type=float, default=0.1)
        sp.add_argument("--mgraph")
        sp.add_argument("--assume", choices=("smar", "mcar"))

    sim = add("simulate", cmd_simulate, model, missing, seed)
    sim.add_argument("--size", type=int, required=True)
    add("learn", cmd_learn, model, dataset, learner)
    cert = add("certify", cmd_certify, model, dataset, learner)
    cert.add_argument("--delta", type=float, default=0.95)
    cls = add("classify", cmd_classify, missing)
    cls.add_argument("--model")
    pl = add("plan", cmd_plan, model, missing, seed)
    pl.add_argument("--eps", type=float)
    pl.add_argument("--max-beliefs", type=int, default=200)
    pl.add_argument("--time-budget", type=float)
    ev = add("eval", cmd_eval, model, missing, seed)
    ev.add_argument("--policy", required=True)
    ev.add_argument("--episodes", type=int, default=2000)
    ex = add("experiment", cmd_experiment)
    ex.add_argument("--config", required=True)
    ex.add_argument("--seed", type=int)
    ex.add_argument("--scale", choices=("full", "desk"))
    ex.add_argument("--workers", type=int)
    be = add("bench-emit", cmd_bench_emit)
    be.add_argument("--preset", choices=sorted(PRESETS), required=True)
    be.add_argument("--scale", choices=("full", "desk"), default="desk")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "classify" and not (args.model or args.missingness):
        parser.error("classify needs --model or --missingness")
    try:
        args.func(args)
    except (CliError, ValueError, OSError, KeyError, IndexError) as exc:
        print(f"missmdp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
