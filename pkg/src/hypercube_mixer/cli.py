"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis
from .circuit import decompose_to_basis, dump_circuit
from .errors import MixerError
from .mixers import METHOD_ALIASES, METHOD_LABELS, METHODS, MixerConfig, build_mixer, canonical_method
from .oracle import exact_mixer_state, uniform_feasible_state
from .problem import FIXTURE_NAMES, load_problem
from .sim import NoiseModel, fidelity, run_density, run_statevector, trajectory_fidelity

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

METHOD_CHOICES = tuple(METHOD_ALIASES) + METHODS
NOISE_CHOICES = ("none",) + analysis.NOISE_KINDS


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _add_mixer_args(p: argparse.ArgumentParser, multi: bool = False):
    if multi:
        p.add_argument("--problems", nargs="+", default=list(FIXTURE_NAMES),
                       help="problem files or fixture names (default: all ten fixtures)")
        p.add_argument("--methods", nargs="+", choices=METHOD_CHOICES, default=list(METHOD_ALIASES))
        p.add_argument("--r", nargs="+", type=_positive_int, default=list(analysis.R_VALUES), dest="r_values")
    else:
        p.add_argument("--problem", required=True, help="problem file or fixture name")
        p.add_argument("--method", choices=METHOD_CHOICES, default="mod")
        p.add_argument("--r", type=_positive_int, default=3)
    p.add_argument("--beta", type=float, default=analysis.DEFAULT_BETA)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=analysis.DEFAULT_SEED,
                        help=f"64-bit seed for every random choice (default {analysis.DEFAULT_SEED})")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for sweeps")
    parser = argparse.ArgumentParser(prog="hypercube-mixer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common], help="build a mixer, decompose it and report metrics")
    _add_mixer_args(p)
    p.add_argument("--dump", type=Path, help="write the basis circuit in the gate-per-line format")
    p.add_argument("--output", type=Path, help="write the metrics line here instead of stdout")

    p = sub.add_parser("count", parents=[common], help="estimated versus measured gate counts and size bounds")
    _add_mixer_args(p)

    p = sub.add_parser("simulate", parents=[common], help="fidelity of one mixer output against the exact state")
    _add_mixer_args(p)
    p.add_argument("--noise", choices=NOISE_CHOICES, default="none")
    p.add_argument("--param", type=float, default=0.0, help="noise parameter")
    p.add_argument("--backend", choices=("auto", "density", "trajectories"), default="auto")
    p.add_argument("--shots", type=_positive_int, default=analysis.TRAJECTORY_SHOTS)

    p = sub.add_parser("sweep", parents=[common], help="size or noise sweep written as CSV")
    _add_mixer_args(p, multi=True)
    p.add_argument("--kind", choices=("size", "noise"), default="size")
    p.add_argument("--noise-kinds", nargs="+", choices=analysis.NOISE_KINDS, default=list(analysis.NOISE_KINDS))
    p.add_argument("--grid", nargs="+", type=float, default=list(analysis.NOISE_GRID))
    p.add_argument("--backend", choices=("auto", "density", "trajectories"), default="auto")
    p.add_argument("--shots", type=_positive_int, default=analysis.TRAJECTORY_SHOTS)
    p.add_argument("--timing", action="store_true", help="fill the seconds column")
    p.add_argument("--output", type=Path, help="CSV path (default stdout)")

    p = sub.add_parser("verify", parents=[common], help="oracle checks on one problem")
    _add_mixer_args(p)
    return parser


def _write(text: str, path: Path | None, out):
    if path is None:
        out.write(text)
    else:
        path.write_text(text)


def cmd_build(args, out) -> int:
    problem = load_problem(args.problem)
    mc = build_mixer(problem, MixerConfig(args.method, args.beta, args.r))
    basis, m = decompose_to_basis(mc.circuit)
    counts = ",".join(f"{k}:{v}" for k, v in m.counts.items())
    line = (f"problem={problem.name} method={mc.config.label} r={args.r} beta={args.beta} "
            f"size={m.size} depth={m.depth} width={m.width} counts={counts}\n")
    if args.dump is not None:
        args.dump.write_text(dump_circuit(basis))
    _write(line, args.output, out)
    return EXIT_OK


def cmd_count(args, out) -> int:
    problem = load_problem(args.problem)
    est = analysis.estimate_counts(problem, args.r)
    out.write(f"problem={problem.name} n={problem.n} r={args.r}\n")
    out.write(f"G_X={est.G_X} G_C={est.G_C} G_L={list(est.G_L)} G_cL={list(est.G_cL)} G_RX={est.G_RX}\n")
    for rec in analysis.run_size_experiment([problem], list(METHOD_LABELS), [args.r], args.beta):
        total = est.total(rec.method)
        out.write(f"{rec.method}: measured={rec.size} estimated={total} ratio={total / rec.size:.3f}\n")
    seq, par = analysis.check_bounds(args.r)
    out.write(f"bounds: sequential n <= {seq:.6g}, parallel n <= {par:.6g}\n")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    problem = load_problem(args.problem)
    mc = build_mixer(problem, MixerConfig(args.method, args.beta, args.r))
    basis, m = decompose_to_basis(mc.circuit)
    psi0 = uniform_feasible_state(problem)
    ideal = exact_mixer_state(problem, args.beta, psi0)
    initial = psi0.embed(basis.width)
    noise = NoiseModel.from_kind(args.noise, args.param)
    x_q = list(mc.x_qubits)
    extra = ""
    if noise.is_trivial:
        f = fidelity(run_statevector(basis, initial).reduced(x_q), ideal)
        backend = "statevector"
    else:
        backend = analysis.choose_backend(basis.width, args.backend)
        if backend == "density":
            rho = run_density(basis, initial, noise)
            f = fidelity(rho.reduced(x_q), ideal)
        else:
            f, err = trajectory_fidelity(basis, initial, noise, args.shots, args.seed, ideal, x_q)
            extra = f" stderr={err:.3e} shots={args.shots}"
    out.write(f"problem={problem.name} method={mc.config.label} r={args.r} noise={args.noise} "
              f"param={args.param} backend={backend} size={m.size} width={m.width} "
              f"fidelity={f:.12f}{extra}\n")
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    problems = [load_problem(p) for p in args.problems]
    methods = [canonical_method(m) for m in args.methods]
    if args.kind == "size":
        records = analysis.run_size_experiment(problems, methods, args.r_values, args.beta, args.timing)
    else:
        records = analysis.run_noise_sweep(
            problems, methods, args.r_values, args.noise_kinds, args.grid, args.backend,
            args.beta, args.shots, args.seed, args.jobs, args.timing,
        )
    _write(analysis.write_csv(records), args.output, out)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    problem = load_problem(args.problem)
    results = analysis.verify_problem(problem, args.r, args.beta)
    for res in results:
        out.write(res.line() + "\n")
    ok = all(res.passed for res in results)
    out.write(f"{'all checks passed' if ok else 'verification failed'}\n")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "build": cmd_build,
    "count": cmd_count,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (MixerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
