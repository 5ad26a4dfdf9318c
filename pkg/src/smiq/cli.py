"""Command line front end.

Subcommands: validate, simulate, limit-sample, moments, exceedance,
transience.  Every command is reproducible from --seed alone; --threads
only changes scheduling, never output bytes.  Exit codes: 0 success,
1 model validation failure, 2 parse or runtime error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import SmiqError
from .limit_law import LimitLawSampler, exceedance, moment_table
from .presets import BUILTIN_MODELS, feedback_params
from .queueing import (
    FeedbackParams,
    RateMap,
    cycle_increments,
    growth_rate,
    simulate_conditional,
    simulate_feedback,
    simulate_gillespie,
)
from .semi_markov import model_from_json, sample_trajectory, validate_model

__all__ = ["main"]


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _rep_stream(seed: int, rep: int) -> np.random.Generator:
    # replication streams are counter jumps of the root engine, so results
    # per replication do not depend on how replications are scheduled
    return np.random.Generator(np.random.Philox(key=seed).jumped(rep + 1))


def _load_json(path: str):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")


def _load_model(spec: str):
    """Resolve --model into ('feedback', params) or ('queue', model, rates)."""
    if spec == "feedback":
        return "feedback", feedback_params(), None
    if spec in BUILTIN_MODELS:
        model, rates = BUILTIN_MODELS[spec]()
        return "queue", model, rates
    obj = _load_json(spec)
    return "queue", model_from_json(obj), None


def _load_rates(args, model) -> RateMap:
    if args.rates is not None:
        obj = _load_json(args.rates)
        try:
            rates = RateMap(lam=np.asarray(obj["lam"]), mu=np.asarray(obj["mu"]))
        except KeyError as exc:
            raise ValueError(f"rates file must define {exc}")
        if rates.lam.size != model.n_states:
            raise ValueError(
                f"rates length {rates.lam.size} does not match the model's "
                f"{model.n_states} states"
            )
        return rates
    raise ValueError("this model has no built-in rates; pass --rates")


def _resolve_rates(args, kind_model_rates) -> tuple:
    kind, model, rates = kind_model_rates
    if kind != "queue":
        raise ValueError("this command needs a semi-Markov queue model")
    if args.rates is not None or rates is None:
        rates = _load_rates(args, model)
    return model, rates


def _find_state(model, text: str) -> int:
    if "," in text:
        try:
            target = tuple(int(p) for p in text.split(","))
        except ValueError:
            raise ValueError(f"cannot parse state {text!r}")
        for idx, label in enumerate(model.states):
            if label == target:
                return idx
        raise ValueError(f"state {target} not found in the model")
    for idx, label in enumerate(model.states):
        if str(label) == text:
            return idx
    try:
        idx = int(text)
    except ValueError:
        raise ValueError(f"state {text!r} not found in the model")
    if 0 <= idx < model.n_states:
        return idx
    raise ValueError(f"state index {idx} out of range 0..{model.n_states - 1}")


def _write_text(args, text: str) -> None:
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def _dump_json(args, obj) -> None:
    _write_text(args, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_validate(args) -> int:
    loaded = _load_model(args.model)
    if loaded[0] == "feedback":
        print("feedback parameter set is valid")
        if args.out:
            _dump_json(args, {"model": "feedback", "valid": True})
        return 0
    report = validate_model(loaded[1])
    print(report.summary())
    if args.out:
        _dump_json(
            args,
            {
                "valid": report.ok,
                "checks": [
                    {"name": c.name, "passed": c.passed, "detail": c.detail}
                    for c in report.checks
                ],
            },
        )
    return 0 if report.ok else 1


def cmd_simulate(args) -> int:
    loaded = _load_model(args.model)
    rng = _stream(args.seed)
    buf = io.StringIO()
    if loaded[0] == "feedback":
        path = simulate_feedback(loaded[1], args.y0, args.horizon, rng)
        path.to_csv(buf)
    else:
        model, rates = _resolve_rates(args, loaded)
        if args.simulator == "conditional":
            traj = sample_trajectory(model, args.horizon, rng)
            path = simulate_conditional(traj, rates, args.y0, rng, record_grid=args.grid)
        else:
            path = simulate_gillespie(model, rates, args.y0, args.horizon, rng)
        path.to_csv(buf)
    _write_text(args, buf.getvalue())
    return 0


def _build_sampler(args, model, rates) -> LimitLawSampler:
    rng = _stream(args.seed)
    return LimitLawSampler.build(
        model,
        rates,
        rng,
        epsilon=args.epsilon,
        depth_override=getattr(args, "depth", None),
    )


def cmd_limit_sample(args) -> int:
    model, rates = _resolve_rates(args, _load_model(args.model))
    sampler = _build_sampler(args, model, rates)
    rng = _stream(args.seed + 1)
    if args.anchor is not None:
        j = _find_state(model, args.anchor)
        w = sampler.sample_W_many(j, args.reps, rng)
        states = np.full(args.reps, j, dtype=np.int64)
    else:
        states, w = sampler.sample_states_and_w(args.reps, rng)
    counts = rng.poisson(w)
    buf = io.StringIO()
    buf.write("state,w,poisson_count\n")
    for s, wv, y in zip(states, w, counts):
        buf.write(f"{s},{float(wv)!r},{y}\n")
    _write_text(args, buf.getvalue())
    if args.hist_out:
        hist = io.StringIO()
        hist.write("state,bin_left,bin_right,count\n")
        for j in np.unique(states):
            wj = w[states == j]
            counts_j, edges = np.histogram(wj, bins=args.hist_bins)
            for b, n in enumerate(counts_j):
                hist.write(
                    f"{j},{float(edges[b])!r},{float(edges[b + 1])!r},{n}\n"
                )
        Path(args.hist_out).write_text(hist.getvalue())
    return 0


def _nan_to_none(rows):
    return [[None if np.isnan(v) else v for v in row] for row in rows]


def cmd_moments(args) -> int:
    model, rates = _resolve_rates(args, _load_model(args.model))
    sampler = _build_sampler(args, model, rates)
    rng = _stream(args.seed + 1)
    table = moment_table(
        sampler,
        args.order,
        rng,
        pairs_per_state=args.pairs,
        t_samples=args.t_samples,
    )
    _dump_json(
        args,
        {
            "order": args.order,
            "states": [str(s) for s in model.states],
            "stationary": sampler.pi.tolist(),
            "depths": sampler.depths.tolist(),
            "per_state": _nan_to_none(table.per_state),
            "per_state_se": _nan_to_none(table.per_state_se),
            "mixture": table.mixture.tolist(),
            "mixture_se": table.mixture_se.tolist(),
        },
    )
    return 0


def cmd_exceedance(args) -> int:
    model, rates = _resolve_rates(args, _load_model(args.model))
    sampler = _build_sampler(args, model, rates)
    rng = _stream(args.seed + 1)
    est, se = exceedance(sampler, args.threshold, args.reps, rng)
    _dump_json(
        args,
        {"threshold": args.threshold, "estimate": est, "se": se, "reps": args.reps},
    )
    return 0


def cmd_transience(args) -> int:
    loaded = _load_model(args.model)
    if loaded[0] != "feedback":
        raise ValueError("transience analysis applies to the feedback model")
    base = loaded[1]
    params = FeedbackParams(
        lam=args.lam if args.lam is not None else base.lam,
        lam0=args.lam0 if args.lam0 is not None else base.lam0,
        lam1=args.lam1 if args.lam1 is not None else base.lam1,
        q1=args.q1 if args.q1 is not None else base.q1,
        q2=args.q2 if args.q2 is not None else base.q2,
        k=args.k if args.k is not None else base.k,
    )

    def one_rep(rep: int):
        rng = _rep_stream(args.seed, rep)
        path = simulate_feedback(params, 0, args.horizon, rng)
        return growth_rate(path), cycle_increments(path)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(one_rep, range(args.reps)))
    slopes = np.array([r[0] for r in results])
    increments = np.concatenate([r[1] for r in results])

    boot_rng = _stream(args.seed)
    boot_means = np.array(
        [
            slopes[boot_rng.integers(0, slopes.size, slopes.size)].mean()
            for _ in range(1000)
        ]
    )
    lo, hi = np.percentile(boot_means, [2.5, 97.5])
    inc_mean = float(increments.mean())
    inc_se = float(increments.std(ddof=1) / np.sqrt(increments.size))
    drift_bound = params.lam * (1.0 / params.lam0 + 1.0 / params.lam1) - 2.0 * params.k
    _dump_json(
        args,
        {
            "params": {
                "lam": params.lam,
                "lam0": params.lam0,
                "lam1": params.lam1,
                "q1": params.q1,
                "q2": params.q2,
                "k": params.k,
            },
            "reps": args.reps,
            "horizon": args.horizon,
            "slope_mean": float(slopes.mean()),
            "slope_ci_low": float(lo),
            "slope_ci_high": float(hi),
            "per_cycle_mean": inc_mean,
            "per_cycle_se": inc_se,
            "per_cycle_drift_bound": drift_bound,
            "n_cycles": int(increments.size),
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smiq",
        description="Infinite-server queues in a semi-Markov environment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_rates=True):
        p.add_argument(
            "--model",
            required=False,
            default=None,
            help="builtin name (intro_ctmc, example1, example2_exp, "
            "example2_pareto, feedback) or a JSON model file",
        )
        if needs_rates:
            p.add_argument("--rates", default=None, help="JSON file with lam/mu arrays")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path, '-' for stdout")
        p.add_argument("--threads", type=int, default=1, help="worker count; never changes results")

    p = sub.add_parser("validate", help="check a model definition")
    common(p, needs_rates=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="simulate one queue path")
    common(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--y0", type=int, default=0)
    p.add_argument(
        "--simulator", choices=["conditional", "gillespie"], default="conditional"
    )
    p.add_argument(
        "--grid", type=float, default=None, help="extra record spacing (conditional only)"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("limit-sample", help="draw from the limiting law")
    common(p)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--depth", type=int, default=None, help="override recursion depth")
    p.add_argument("--anchor", default=None, help="restrict to one environment state")
    p.add_argument("--hist-out", dest="hist_out", default=None, help="also write per-state W histograms here")
    p.add_argument("--hist-bins", dest="hist_bins", type=int, default=40)
    p.set_defaults(func=cmd_limit_sample)

    p = sub.add_parser("moments", help="moments of the limiting law")
    common(p)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--pairs", type=int, default=20_000, help="cycle pairs per state")
    p.add_argument("--t-samples", dest="t_samples", type=int, default=20_000)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("exceedance", help="tail probability of the limiting count")
    common(p)
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.set_defaults(func=cmd_exceedance)

    p = sub.add_parser("transience", help="growth diagnostics for the feedback system")
    common(p, needs_rates=False)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--horizon", type=float, default=2000.0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lam0", type=float, default=None)
    p.add_argument("--lam1", type=float, default=None)
    p.add_argument("--q1", type=float, default=None)
    p.add_argument("--q2", type=float, default=None)
    p.set_defaults(func=cmd_transience)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.model is None:
        args.model = "feedback" if args.command == "transience" else None
        if args.model is None:
            parser.error("--model is required")
    try:
        return args.func(args)
    except (SmiqError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
