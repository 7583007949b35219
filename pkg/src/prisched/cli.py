"""Command-line front end.

Exit status: 0 on success, 2 when the requested goal is infeasible, 1 on any
other error.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from prisched import delay, engine, formats, synth
from prisched.config import (
    ConfigError,
    RawConfig,
    build_models,
    build_topology,
    delay_targets,
    load_config,
    output_paths,
    sim_settings,
)
from prisched.graph import SizeLimitError, compute_delta, interference_degree

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class Infeasible(Exception):
    pass


class _Ctx:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.raw: RawConfig = load_config(args.config)
        self.seed = args.seed if args.seed is not None else (
            self.raw.number("sim", "seed", int) if self.raw.has("sim", "seed") else None
        )
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be nonnegative", self.raw.source, None, "sim.seed")
        self.graph, self.network = build_topology(self.raw, self.seed)
        self.out = output_paths(self.raw, args.out)

    def models(self):
        return build_models(self.raw, self.graph.n)

    def rates(self) -> np.ndarray:
        return np.array([m.rate for m in self.models()])

    def say(self, text: str) -> None:
        if not self.args.quiet:
            print(text)

    def write(self, key: str, text: str) -> Path:
        path = self.out[key]
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from None
        self.say(f"wrote {path}")
        return path

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this command needs a seed (sim.seed or --seed)", self.raw.source, None, "sim.seed")
        return self.seed


def _links(items) -> str:
    return " ".join(str(i + 1) for i in items)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _scheduler(ctx: _Ctx, models) -> engine.PrioritySpec | None:
    raw = ctx.raw
    kind = raw.get("scheduler", "kind")
    n = ctx.graph.n
    if kind is None:
        return None
    if kind == "fixed":
        if raw.has("scheduler", "ranks"):
            try:
                return engine.FixedPriority(engine.check_ranks(raw.numbers("scheduler", "ranks", int), n))
            except ValueError as exc:
                raise raw.error("scheduler", "ranks", str(exc)) from None
        try:
            return engine.FixedPriority(formats.parse_priority(raw.path("scheduler", "priority").read_text(), n))
        except (formats.FormatError, OSError) as exc:
            raise raw.error("scheduler", "priority", str(exc)) from None
    if kind == "stable":
        res = synth.stable_priority(ctx.graph, [m.rate for m in models])
        if not res.feasible:
            print(f"warning: rates are outside the fixed-priority region; links {_links(res.violated)} overloaded",
                  file=sys.stderr)
        return engine.FixedPriority(res.ranks)
    if kind == "randomized":
        if raw.has("scheduler", "decomposition"):
            try:
                dec = formats.parse_decomposition(raw.path("scheduler", "decomposition").read_text())
            except (formats.FormatError, OSError) as exc:
                raise raw.error("scheduler", "decomposition", str(exc)) from None
            if len(dec.target) != n:
                raise raw.error("scheduler", "decomposition", f"decomposition is for {len(dec.target)} links, not {n}")
        else:
            dec = _decompose(ctx, approx=False)
        return dec.priority_distribution(n)
    if kind == "lqf":
        return engine.LongestQueueFirst()
    if kind == "maxweight":
        return engine.MaxWeight()
    raise raw.error("scheduler", "kind", f"unknown scheduler {kind!r} (fixed, stable, randomized, lqf, maxweight)")


def _decompose(ctx: _Ctx, approx: bool) -> synth.Decomposition:
    raw = ctx.raw
    a = ctx.rates()
    eps = raw.number("scheduler", "epsilon", float, default=0.0) or None
    try:
        if approx:
            if eps is None:
                eps = max(synth.max_slack(ctx.graph, a) / 2, synth.MIN_EPSILON)
            tol = raw.number("scheduler", "tol", float, default=0.05)
            return synth.decompose_approx(ctx.graph, a, eps, tol)
        return synth.decompose_exact(ctx.graph, a, eps)
    except synth.InfeasibleRates as exc:
        raise Infeasible(str(exc)) from None


def cmd_analyze(ctx: _Ctx) -> int:
    g = ctx.graph
    mode = "brute" if g.n <= 8 else "greedy"
    d, seq = compute_delta(g, mode)
    lines = [
        f"links: {g.n}",
        f"conflicts: {len(g.edges())}",
        f"max interference degree: {max(interference_degree(g, i) for i in range(g.n))}",
        f"delta: {d} ({mode})",
        f"efficiency floor: {_fmt(1 / d)}",
        f"removal order: {_links(seq.order)}",
    ]
    if ctx.raw.sections.get("traffic"):
        a = ctx.rates()
        lines.append(f"rates: {' '.join(_fmt(x) for x in a)}")
        lines.append(f"A_min: {'yes' if synth.in_a_min(g, a) else 'no'}")
        lines.append(f"A: {'yes' if synth.in_a(g, a) else 'no'}")
        try:
            m = synth.in_a_max(g, a)
            lines.append(f"A_max: {'yes' if m else 'no'} (max slack {_fmt(m.witness)})")
        except SizeLimitError as exc:
            lines.append(f"A_max: skipped ({exc})")
        res = synth.stable_priority(g, a)
        verdict = "verified" if res.feasible else f"infeasible, links {_links(res.violated)} overloaded"
        lines.append(f"stable priority: {' '.join(map(str, res.ranks))} ({verdict})")
    print("\n".join(lines))
    return EXIT_OK


def cmd_synth(ctx: _Ctx) -> int:
    g = ctx.graph
    goal = ctx.args.goal
    if goal == "stability":
        res = synth.stable_priority(g, ctx.rates())
        if not res.feasible:
            loads = ", ".join(f"link {i + 1} load {_fmt(res.loads[i])}" for i in res.violated)
            raise Infeasible(f"no fixed priority stabilises these rates: {loads} (needs < 1)")
        ctx.write("priority", formats.format_priority(res.ranks))
    elif goal == "delay":
        theta = delay_targets(ctx.raw, g.n)
        res = delay.delay_priority(g, ctx.models(), theta)
        if not res.feasible:
            if res.ranks is None:
                raise Infeasible(f"delay targets unreachable: no remaining link qualifies among {_links(res.stuck)}")
            raise Infeasible("delay targets unreachable: the assigned priorities fail verification")
        ctx.write("priority", formats.format_priority(res.ranks))
    else:
        dec = _decompose(ctx, approx=False)
        ctx.write("decomposition", formats.format_decomposition(dec))
    return EXIT_OK


def cmd_decompose(ctx: _Ctx) -> int:
    approx = ctx.args.approx or ctx.raw.has("scheduler", "tol")
    dec = _decompose(ctx, approx)
    ctx.say(f"{len(dec.sets)} sets, epsilon {_fmt(dec.epsilon)}, min residual {_fmt(min(dec.residuals))}")
    if approx:
        ctx.say(f"oracle calls {dec.oracle_calls}, coverage factor {_fmt(dec.coverage_factor)}")
    ctx.write("decomposition", formats.format_decomposition(dec))
    return EXIT_OK


def _pool(runs: Sequence[engine.RunStats]) -> engine.RunStats:
    if len(runs) == 1:
        return runs[0]
    measured = sum(r.measured_slots for r in runs)
    counts = sum(r.overflow_counts for r in runs)
    return engine.RunStats(
        slots=runs[0].slots,
        rate_in=np.mean([r.rate_in for r in runs], axis=0),
        rate_out=np.mean([r.rate_out for r in runs], axis=0),
        mean_q=np.mean([r.mean_q for r in runs], axis=0),
        max_q=np.max([r.max_q for r in runs], axis=0),
        drift=np.mean([r.drift for r in runs], axis=0),
        thresholds=runs[0].thresholds,
        overflow=counts / measured,
        overflow_counts=counts,
        measured_slots=measured,
        final_queues=runs[-1].final_queues,
    )


def cmd_simulate(ctx: _Ctx) -> int:
    seed = ctx.require_seed()
    sim = sim_settings(ctx.raw, ctx.seed)
    models = ctx.models()
    spec = _scheduler(ctx, models)
    if spec is None:
        raise ConfigError("simulate needs scheduler.kind", ctx.raw.source, None, "scheduler.kind")
    runs = [
        engine.run(ctx.graph, spec, models, sim.slots, seed, sim.thresholds, rep=r, burn_in=sim.burn_in,
                   record=sim.trace and r == 0)
        for r in range(sim.reps)
    ]
    ctx.write("summary", formats.summary_csv(_pool(runs)))
    if sim.trace:
        ctx.write("trace", formats.trace_csv(runs[0]))
    return EXIT_OK


def cmd_delay_exponent(ctx: _Ctx) -> int:
    g = ctx.graph
    models = ctx.models()
    spec = _scheduler(ctx, models)
    if spec is None:
        results = delay.worst_case_exponents(g, models)
    elif isinstance(spec, engine.FixedPriority):
        results = delay.priority_exponents(g, models, spec.ranks)
    else:
        raise ConfigError("exponents need a fixed, stable or absent scheduler", ctx.raw.source, None, "scheduler.kind")
    slopes = None
    if ctx.raw.flag("delay", "empirical"):
        seed = ctx.require_seed()
        sim = sim_settings(ctx.raw, ctx.seed)
        if len(sim.thresholds) < 2:
            raise ConfigError("empirical slopes need at least two thresholds", ctx.raw.source, None, "sim.thresholds")
        if spec is None:
            # any maximal scheduler is covered by the worst case; simulate with index order
            spec = engine.FixedPriority(tuple(range(1, g.n + 1)))
        slopes = []
        for i in range(g.n):
            est = delay.estimate_overflow(g, spec, models, i, sim.thresholds, sim.slots, sim.reps, seed)
            slopes.append(est.slope)
            if any(est.low_confidence):
                print(f"warning: link {i + 1} has thresholds with fewer than {delay.MIN_EVENTS} exceedances",
                      file=sys.stderr)
    ctx.write("exponents", formats.exponent_csv(results, slopes))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "delay-exponent": cmd_delay_exponent,
    "decompose": cmd_decompose,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario file")
    common.add_argument("--out", help="output directory (overrides [out] dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides [sim] seed)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    parser = argparse.ArgumentParser(prog="prisched", description="Prioritized maximal scheduling toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="graph quantities and region membership")
    p = sub.add_parser("synth", parents=[common], help="synthesize priorities or a randomized schedule")
    p.add_argument("--goal", choices=("stability", "delay", "randomized"), default="stability")
    sub.add_parser("simulate", parents=[common], help="run the slotted queueing simulation")
    sub.add_parser("delay-exponent", parents=[common], help="per-link overflow exponents")
    p = sub.add_parser("decompose", parents=[common], help="convex decomposition of the rates")
    p.add_argument("--approx", action="store_true", help="use the oracle-based approximate solver")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = _Ctx(args)
        return COMMANDS[args.command](ctx)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, SizeLimitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
