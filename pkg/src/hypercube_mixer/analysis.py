"""Gate-count estimates, size bounds and experiment sweeps.

The estimator assembles whole-mixer totals from the measured basis-gate
counts of each primitive decomposed in isolation:

* ``G_X``: the ``X_j`` flip
* ``G_C``: all range comparators of the parallel layout
* ``G_L[i]``: the weighted adder writing ``l_i(y)`` (QFT wrapped)
* ``G_cL[i]``: the largest single-control constant adder ``+a_ij`` on
  register ``i`` in Fourier mode, over ``j``
* ``G_RX``: ``RX_j`` controlled on every flag

and the per-variable cost is multiplied by ``2 n r`` (one factor per variable
per forward and backward sweep).
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .arith import comparator_gates, fourier_add_gates
from .circuit import Circuit, Gate, decompose_to_basis, x
from .errors import ArgumentError, CapacityError, DomainError
from .mixers import (
    METHOD_LABELS,
    MixerConfig,
    _comparator,
    _controlled_rx,
    _flag_groups,
    _L_gates,
    build_mixer,
    canonical_method,
    mixer_layout,
)
from .oracle import exact_mixer_state, uniform_feasible_state
from .problem import LinearConstraint, Problem, check_connectivity, feasibility_mask
from .sim import (
    DENSITY_LIMIT,
    NoiseModel,
    fidelity,
    run_density,
    run_statevector,
    trace_distance,
    trajectory_fidelity,
)

DEFAULT_SEED = 20240917
DEFAULT_BETA = 3.0
R_VALUES = (3, 5, 7)
NOISE_KINDS = ("depolarizing", "damping")
NOISE_GRID = tuple(round(k * 1e-6, 12) for k in range(1, 21))
TRAJECTORY_SHOTS = 20000
CSV_FIELDS = ("problem", "method", "r", "noise_kind", "noise_param", "size", "depth", "width",
              "fidelity", "seconds")


# ---------------------------------------------------------------- estimates

@dataclass(frozen=True)
class GateCountEstimate:
    problem: str
    n: int
    r: int
    G_X: int
    G_C: int
    G_L: tuple[int, ...]
    G_cL: tuple[int, ...]
    G_RX: int
    G_cL_per_variable: tuple[tuple[int, ...], ...] = field(default=(), compare=False)

    @property
    def prefactor(self) -> int:
        return 2 * self.n * self.r

    def per_variable(self, method: str) -> int:
        """Cost of one factor ``U_Bj`` under ``method``."""
        method = canonical_method(method)
        common = 4 * self.G_X + 2 * self.G_C + self.G_RX
        if method == "standard_parallel":
            return common + 4 * sum(self.G_L)
        if method == "standard_sequential":
            return common + 2 * sum(self.G_L)
        return common + 10 * sum(self.G_cL)

    def wrap(self, method: str) -> int:
        """Gates outside the Trotter product: loading and unloading ``l(y)``."""
        return 2 * sum(self.G_L) if canonical_method(method) == "modified" else 0

    def total(self, method: str) -> int:
        return self.prefactor * self.per_variable(method) + self.wrap(method)

    @property
    def totals(self) -> dict[str, int]:
        return {m: self.total(m) for m in METHOD_LABELS}


def _size(gates: Sequence[Gate], layout) -> int:
    return decompose_to_basis(Circuit(layout, tuple(gates)))[1].size


def estimate_counts(problem: Problem, r: int) -> GateCountEstimate:
    """Measure every primitive's basis-gate count and assemble the estimate."""
    if r < 1:
        raise ArgumentError("r must be at least 1")
    layout = mixer_layout(problem, "standard_parallel")
    x_q = layout.qubits("x")
    flags = _flag_groups(problem, layout)
    regs = [layout.qubits(f"l{i + 1}") for i in range(problem.num_constraints)]
    g_c = _size(
        [g for i, l_q in enumerate(regs) for g in comparator_gates(_comparator(problem, i, l_q, flags[i]))],
        layout,
    )
    g_l = tuple(_size(_L_gates(c.coeffs, x_q, l_q), layout) for c, l_q in zip(problem.constraints, regs))
    per_j = tuple(
        tuple(_size(fourier_add_gates(l_q, a, ((x_q[j], 1),)), layout) for j, a in enumerate(c.coeffs))
        for c, l_q in zip(problem.constraints, regs)
    )
    return GateCountEstimate(
        problem=problem.name,
        n=problem.n,
        r=r,
        G_X=_size([x(x_q[0])], layout),
        G_C=g_c,
        G_L=g_l,
        G_cL=tuple(max(row) for row in per_j),
        G_RX=_size([_controlled_rx(layout, 1, 0.5)], layout),
        G_cL_per_variable=per_j,
    )


def check_bounds(r: int) -> tuple[float, float]:
    """Largest ``n`` for which the sequential / parallel standard mixer can be smaller."""
    if r < 1:
        raise ArgumentError("r must be at least 1")
    return 5 + 1 / (2 * r), 2.5 + 1 / (4 * r)


def integer_bounds(r: int) -> tuple[int, int]:
    seq, par = check_bounds(r)
    return math.floor(seq), math.floor(par)


# ----------------------------------------------------------------- records

@dataclass
class ExperimentRecord:
    problem: str
    method: str
    r: int
    noise_kind: str = ""
    noise_param: float | None = None
    size: int = 0
    depth: int = 0
    width: int = 0
    fidelity: float | None = None
    seconds: float | None = None
    stderr: float | None = None

    def __post_init__(self):
        if self.fidelity is not None and not -1e-12 <= self.fidelity <= 1 + 1e-12:
            raise ArgumentError(f"fidelity {self.fidelity} outside [0, 1]")

    def row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, f)) for f in CSV_FIELDS]


def write_csv(records: Iterable[ExperimentRecord], stream=None) -> str:
    """Write the header and one row per record; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in records:
        w.writerow(rec.row())
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


# -------------------------------------------------------------- experiments

def run_size_experiment(
    problems: Sequence[Problem],
    methods: Sequence[str],
    r_values: Sequence[int] = R_VALUES,
    beta: float = DEFAULT_BETA,
    timing: bool = False,
) -> list[ExperimentRecord]:
    """Basis-gate size, depth and width of every (problem, method, r) mixer."""
    records = []
    for problem in problems:
        for method in methods:
            cfg_method = canonical_method(method)
            for r in r_values:
                t0 = time.perf_counter()
                mc = build_mixer(problem, MixerConfig(cfg_method, beta, r))
                _, m = decompose_to_basis(mc.circuit)
                records.append(ExperimentRecord(
                    problem=problem.name,
                    method=METHOD_LABELS[cfg_method],
                    r=r,
                    size=m.size,
                    depth=m.depth,
                    width=m.width,
                    seconds=round(time.perf_counter() - t0, 3) if timing else None,
                ))
    return records


@dataclass(frozen=True)
class _SweepJob:
    problem: Problem
    method: str
    r: int
    beta: float
    kind: str
    params: tuple[float, ...]
    backend: str
    shots: int
    seed: int
    timing: bool


def _x_reduced_fidelity(rho, width: int, n: int, ideal) -> float:
    # x occupies qubits 0..n-1, so tracing the rest is a reshape and a trace
    d = 1 << n
    rest = 1 << (width - n)
    blocks = rho.reshape(rest, d, rest, d)
    reduced = np.einsum("ajak->jk", blocks)
    return fidelity(reduced, ideal)


def _run_job(job: _SweepJob) -> list[ExperimentRecord]:
    problem = job.problem
    mc = build_mixer(problem, MixerConfig(job.method, job.beta, job.r))
    basis, m = decompose_to_basis(mc.circuit)
    psi0 = uniform_feasible_state(problem)
    ideal = exact_mixer_state(problem, job.beta, psi0)
    initial = psi0.embed(basis.width)
    x_q = list(mc.x_qubits)
    out = []
    for p in job.params:
        t0 = time.perf_counter()
        noise = NoiseModel.from_kind(job.kind, p)
        stderr = None
        if noise.is_trivial:
            # a noiseless channel leaves the state pure
            final = run_statevector(basis, initial)
            f = fidelity(final.reduced(x_q), ideal)
        elif job.backend == "density":
            rho = run_density(basis, initial, noise)
            f = _x_reduced_fidelity(rho.data, basis.width, problem.n, ideal)
        else:
            f, stderr = trajectory_fidelity(basis, initial, noise, job.shots, job.seed, ideal, x_q)
        out.append(ExperimentRecord(
            problem=problem.name,
            method=METHOD_LABELS[mc.config.method],
            r=job.r,
            noise_kind=job.kind,
            noise_param=float(p),
            size=m.size,
            depth=m.depth,
            width=m.width,
            fidelity=f,
            seconds=round(time.perf_counter() - t0, 3) if job.timing else None,
            stderr=stderr,
        ))
    return out


def choose_backend(width: int, backend: str = "auto") -> str:
    if backend == "auto":
        return "density" if width <= DENSITY_LIMIT else "trajectories"
    if backend not in ("density", "trajectories"):
        raise ArgumentError(f"backend must be 'auto', 'density' or 'trajectories', got {backend!r}")
    if backend == "density" and width > DENSITY_LIMIT:
        raise CapacityError(
            f"width {width} exceeds the density limit {DENSITY_LIMIT}; use the trajectory backend"
        )
    return backend


def run_noise_sweep(
    problems: Sequence[Problem],
    methods: Sequence[str],
    r_values: Sequence[int] = R_VALUES,
    kinds: Sequence[str] = NOISE_KINDS,
    grid: Sequence[float] = NOISE_GRID,
    backend: str = "auto",
    beta: float = DEFAULT_BETA,
    shots: int = TRAJECTORY_SHOTS,
    seed: int = DEFAULT_SEED,
    jobs: int = 1,
    timing: bool = False,
) -> list[ExperimentRecord]:
    """Fidelity of each noisy mixer output, reduced to ``x``, against the exact state.

    Records come back in (problem, method, r, kind, parameter) order whatever
    the number of worker processes.
    """
    for kind in kinds:
        if kind not in ("none",) + NOISE_KINDS:
            raise ArgumentError(f"unknown noise kind {kind!r}")
    work = []
    for problem in problems:
        for method in methods:
            method = canonical_method(method)
            width = mixer_layout(problem, method).num_qubits
            chosen = choose_backend(width, backend)
            for r in r_values:
                for kind in kinds:
                    # one build serves the whole grid unless points go to separate workers
                    chunks = [tuple(float(p) for p in grid)] if jobs <= 1 else [(float(p),) for p in grid]
                    for params in chunks:
                        work.append(_SweepJob(problem, method, r, beta, kind, params,
                                              chosen, shots, seed, timing))
    if jobs <= 1:
        results = [_run_job(j) for j in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, work))
    return [rec for part in results for rec in part]


# --------------------------------------------------------- random problems

def random_connected_problem(n: int, rng: np.random.Generator, max_coeff: int = 6) -> Problem:
    """Single constraint ``a <= sum c_j x_j <= b`` with a connected feasible graph.

    Both bounds are nontrivial so the comparator uses two flags.
    """
    if n < 2:
        raise ArgumentError("random problems need n >= 2")
    for _ in range(10000):
        coeffs = tuple(int(v) for v in rng.integers(1, max_coeff + 1, size=n))
        total = sum(coeffs)
        lower = int(rng.integers(1, total))
        upper = int(rng.integers(lower, total))
        problem = Problem(n, (LinearConstraint(coeffs, lower, upper),), f"rand{n}")
        # a single feasible point is trivially connected but has nothing to mix
        if feasibility_mask(problem).sum() < 2:
            continue
        if check_connectivity(problem)[0]:
            return problem
    raise DomainError(f"no connected problem found for n={n}")


def random_problems(count: int = 20, sizes: Sequence[int] = (6, 7, 8), seed: int = DEFAULT_SEED) -> list[Problem]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(sizes[k % len(sizes)])
        p = random_connected_problem(n, rng)
        out.append(Problem(p.n, p.constraints, f"rand{k:02d}-n{n}"))
    return out


# -------------------------------------------------------------- verification

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _final_state(problem: Problem, method: str, beta: float, r: int):
    mc = build_mixer(problem, MixerConfig(method, beta, r))
    basis, _ = decompose_to_basis(mc.circuit)
    psi0 = uniform_feasible_state(problem)
    return run_statevector(basis, psi0.embed(basis.width)), mc


def state_checks(problem: Problem, method: str, beta: float, r: int) -> dict:
    """Infeasible mass, ancilla return probability and distance to the exact state."""
    final, mc = _final_state(problem, method, beta, r)
    n = problem.n
    probs = final.probabilities().reshape(-1, 1 << n)
    x_probs = probs.sum(axis=0)
    mask = feasibility_mask(problem)
    ideal = exact_mixer_state(problem, beta, uniform_feasible_state(problem))
    x_state = final.data[: 1 << n]
    reduced = final.reduced(list(mc.x_qubits))
    return {
        "infeasible_mass": float(x_probs[~mask].sum()),
        "ancilla_zero": float(probs[0].sum()),
        "infidelity": 1.0 - fidelity(reduced, ideal),
        "trace_distance": trace_distance(reduced, ideal),
        "reduced": reduced,
        "x_state": x_state,
    }


def trotter_errors(problem: Problem, method: str, r_values: Sequence[int], beta: float = DEFAULT_BETA) -> list[float]:
    """Trace distance of the reduced mixer output from ``exp(-i beta B)``, per ``r``."""
    return [state_checks(problem, method, beta, r)["trace_distance"] for r in r_values]


def loglog_slope(r_values: Sequence[int], errors: Sequence[float]) -> float:
    return float(np.polyfit(np.log(r_values), np.log(errors), 1)[0])


def verify_problem(
    problem: Problem,
    r: int = 3,
    beta: float = DEFAULT_BETA,
    methods: Sequence[str] = tuple(METHOD_LABELS),
    trotter_r: Sequence[int] = (1, 2, 4, 8),
) -> list[CheckResult]:
    """Connectivity, feasibility preservation, method equivalence, Trotter convergence, bounds."""
    results = []
    connected, witness = check_connectivity(problem)
    results.append(CheckResult(
        "connectivity", connected,
        "feasible graph connected" if connected else f"no path between {witness[0]} and {witness[1]}",
    ))
    if not connected:
        return results

    states = {}
    for method in methods:
        s = state_checks(problem, method, beta, r)
        states[method] = s
        ok = s["infeasible_mass"] <= 1e-9 and s["ancilla_zero"] >= 1 - 1e-9
        results.append(CheckResult(
            f"feasibility[{METHOD_LABELS[canonical_method(method)]}]", ok,
            f"infeasible mass {s['infeasible_mass']:.3e}, ancillas in |0> with p={s['ancilla_zero']:.12f}",
        ))
    names = list(states)
    worst = 1.0
    for a_i, a in enumerate(names):
        for b in names[a_i + 1:]:
            va, vb = states[a]["x_state"], states[b]["x_state"]
            worst = min(worst, abs(np.vdot(va, vb)) ** 2)
    results.append(CheckResult(
        "method equivalence", worst >= 1 - 1e-6, f"minimum pairwise fidelity {worst:.12f} at r={r}",
    ))

    errs = {m: states[m]["trace_distance"] for m in names}
    results.append(CheckResult(
        "trotter error", True,
        f"r={r}: " + ", ".join(f"{METHOD_LABELS[canonical_method(m)]} {e:.6e}" for m, e in errs.items()),
    ))
    seq = trotter_errors(problem, "modified", trotter_r, beta)
    decreasing = all(b < a for a, b in zip(seq, seq[1:]))
    results.append(CheckResult(
        "trotter convergence", decreasing,
        ", ".join(f"r={k}: {e:.3e}" for k, e in zip(trotter_r, seq)),
    ))

    est = estimate_counts(problem, r)
    ok = all(est.G_L[i] >= problem.n * est.G_cL[i] for i in range(problem.num_constraints))
    seq_b, par_b = check_bounds(r)
    results.append(CheckResult(
        "bounds", ok,
        f"n <= {seq_b:.4f} (sequential), n <= {par_b:.4f} (parallel); "
        f"G(L) >= n G(cL) {'holds' if ok else 'violated'}",
    ))
    return results
