"""Constrained hypercube mixer circuits.

Three constructions of ``exp(-i beta B)`` by a symmetric Trotter product of
per-variable factors ``U_Bj(theta)``:

* ``standard_sequential``: one shared arithmetic register; consecutive
  constraint evaluations are chained by difference-coefficient adders.
* ``standard_parallel``: one arithmetic register per constraint.
* ``modified``: registers hold ``l_i(y)`` for the whole run and are kept up
  to date with controlled constant adders; the mixer is wrapped in ``L`` and
  ``L^dag`` so that every register starts and ends in ``|0>``.

All methods share the layout order ``x``, arithmetic register(s), ``f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .arith import (
    ComparatorSpec,
    adjoint_gates,
    comparator_gates,
    fits,
    fourier_add_gates,
    iqft_gates,
    qft_gates,
    register_width,
    weighted_add_gates,
)
from .circuit import Circuit, Gate, RegisterLayout, rx, x
from .errors import ArgumentError
from .problem import Problem

METHODS = ("standard_sequential", "standard_parallel", "modified")
METHOD_ALIASES = {
    "std-seq": "standard_sequential",
    "std-par": "standard_parallel",
    "mod": "modified",
}
METHOD_LABELS = {v: k for k, v in METHOD_ALIASES.items()}


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise ArgumentError(
            f"unknown method {name!r}; choose from {sorted(METHOD_ALIASES)} or {list(METHODS)}"
        )
    return name


@dataclass(frozen=True)
class MixerConfig:
    method: str
    beta: float
    r: int

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if not isinstance(self.r, int) or self.r < 1:
            raise ArgumentError(f"r must be a positive integer, got {self.r!r}")
        if not math.isfinite(self.beta):
            raise ArgumentError("beta must be finite")

    @property
    def theta(self) -> float:
        return self.beta / (2 * self.r)

    @property
    def label(self) -> str:
        return METHOD_LABELS[self.method]


@dataclass(frozen=True)
class MixerCircuit:
    circuit: Circuit
    layout: RegisterLayout
    config: MixerConfig
    problem: Problem

    @property
    def x_qubits(self) -> tuple[int, ...]:
        return self.layout.qubits("x")


def _shared_register(problem: Problem) -> tuple[int, bool]:
    """Width of the sequential shared register and whether merged adders may subtract."""
    cons = problem.constraints
    width = max(register_width(c.total) for c in cons)
    negative = any(
        b - a < 0 for c1, c2 in zip(cons, cons[1:]) for a, b in zip(c1.coeffs, c2.coeffs)
    )
    return width + int(negative), negative


def _sequential(problem: Problem, approach: str) -> bool:
    if approach not in ("sequential", "parallel"):
        raise ArgumentError(f"approach must be 'sequential' or 'parallel', got {approach!r}")
    # with a single constraint both approaches coincide
    return approach == "sequential" and problem.num_constraints > 1


def mixer_layout(problem: Problem, method: str = "standard_parallel") -> RegisterLayout:
    method = canonical_method(method)
    regs = [("x", problem.n)]
    if method == "standard_sequential" and problem.num_constraints > 1:
        regs.append(("l", _shared_register(problem)[0]))
    else:
        regs += [(f"l{i + 1}", register_width(c.total)) for i, c in enumerate(problem.constraints)]
    regs.append(("f", problem.num_flags))
    return RegisterLayout(tuple(regs))


def _flag_groups(problem: Problem, layout: RegisterLayout) -> list[tuple[int, ...]]:
    flags = iter(layout.qubits("f"))
    return [tuple(next(flags) for _ in range(c.num_flags)) for c in problem.constraints]


def _comparator(problem: Problem, i: int, source, flags) -> ComparatorSpec:
    c = problem.constraints[i]
    return ComparatorSpec(tuple(source), c.lower, c.upper, c.total, flags)


def _L_gates(coeffs, x_q, l_q) -> list[Gate]:
    return qft_gates(l_q) + weighted_add_gates(coeffs, x_q, l_q) + iqft_gates(l_q)


def validation_gates(problem: Problem, layout: RegisterLayout, sequential: bool) -> list[Gate]:
    """``V = L^dag C L``: XOR every constraint's bound checks on ``x`` into the flags."""
    x_q = layout.qubits("x")
    flags = _flag_groups(problem, layout)
    cons = problem.constraints
    gates: list[Gate] = []
    if sequential:
        l_q = layout.qubits("l")
        gates += _L_gates(cons[0].coeffs, x_q, l_q)
        for i, c in enumerate(cons):
            if i > 0:
                prev = cons[i - 1]
                diff = [b - a for a, b in zip(prev.coeffs, c.coeffs)]
                lo = sum(d for d in diff if d < 0)
                if fits(min(lo, 0), max(prev.total, c.total), len(l_q)):
                    gates += _L_gates(diff, x_q, l_q)
                else:
                    gates += adjoint_gates(_L_gates(prev.coeffs, x_q, l_q))
                    gates += _L_gates(c.coeffs, x_q, l_q)
            gates += comparator_gates(_comparator(problem, i, l_q, flags[i]))
        gates += adjoint_gates(_L_gates(cons[-1].coeffs, x_q, l_q))
        return gates
    regs = [layout.qubits(f"l{i + 1}") for i in range(len(cons))]
    for c, l_q in zip(cons, regs):
        gates += _L_gates(c.coeffs, x_q, l_q)
    for i, l_q in enumerate(regs):
        gates += comparator_gates(_comparator(problem, i, l_q, flags[i]))
    for c, l_q in reversed(list(zip(cons, regs))):
        gates += adjoint_gates(_L_gates(c.coeffs, x_q, l_q))
    return gates


def _controlled_rx(layout: RegisterLayout, j: int, theta: float) -> Gate:
    target = layout.qubits("x")[j - 1]
    return rx(target, 2 * theta, tuple((f, 1) for f in layout.qubits("f")))


def _check_j(problem: Problem, j: int):
    if not 1 <= j <= problem.n:
        raise ArgumentError(f"variable index {j} out of range 1..{problem.n}")


def standard_block_gates(problem: Problem, layout: RegisterLayout, j: int, theta: float, sequential: bool) -> list[Gate]:
    _check_j(problem, j)
    xj = x(layout.qubits("x")[j - 1])
    v = validation_gates(problem, layout, sequential)
    oracle = [xj] + v + [xj]
    return oracle + [_controlled_rx(layout, j, theta)] + oracle


def build_UBj_standard(problem: Problem, j: int, theta: float, approach: str = "parallel") -> Circuit:
    """``X_j V X_j  RX_j(2 theta)^{flags}  X_j V X_j`` for variable ``j`` (1-based)."""
    sequential = _sequential(problem, approach)
    layout = mixer_layout(problem, "standard_sequential" if sequential else "standard_parallel")
    return Circuit(layout, tuple(standard_block_gates(problem, layout, j, theta, sequential)))


def _cadd(l_q, value, xj, polarity) -> list[Gate]:
    """Constant adder conditioned on ``x_j == polarity``, computational-basis endpoints."""
    return qft_gates(l_q) + fourier_add_gates(l_q, value, ((xj, polarity),)) + iqft_gates(l_q)


def modified_block_gates(problem: Problem, layout: RegisterLayout, j: int, theta: float) -> list[Gate]:
    _check_j(problem, j)
    xj = layout.qubits("x")[j - 1]
    flags = _flag_groups(problem, layout)
    cons = problem.constraints
    regs = [layout.qubits(f"l{i + 1}") for i in range(len(cons))]
    coef = [c.coeffs[j - 1] for c in cons]

    # N'_j: flip x_j, move every register to l_i(n_j(y)), set flags, restore
    n_gates: list[Gate] = [x(xj)]
    for l_q, a in zip(regs, coef):
        n_gates += _cadd(l_q, -a, xj, 0) + _cadd(l_q, a, xj, 1)
    for i, l_q in enumerate(regs):
        n_gates += comparator_gates(_comparator(problem, i, l_q, flags[i]))
    for l_q, a in reversed(list(zip(regs, coef))):
        n_gates += _cadd(l_q, a, xj, 0) + _cadd(l_q, -a, xj, 1)
    n_gates.append(x(xj))

    # rotate with the x_j term removed from the registers, then put it back
    rot: list[Gate] = []
    for l_q, a in zip(regs, coef):
        rot += _cadd(l_q, -a, xj, 1)
    rot.append(_controlled_rx(layout, j, theta))
    for l_q, a in reversed(list(zip(regs, coef))):
        rot += _cadd(l_q, a, xj, 1)
    return n_gates + rot + adjoint_gates(n_gates)


def build_UBj_modified(problem: Problem, j: int, theta: float) -> Circuit:
    """Factor ``U'_Bj(theta)`` acting on ``|y>|l_1(y)>...|l_K(y)>|0>_f``."""
    layout = mixer_layout(problem, "modified")
    return Circuit(layout, tuple(modified_block_gates(problem, layout, j, theta)))


def load_gates(problem: Problem, layout: RegisterLayout) -> list[Gate]:
    """``L_1 ... L_K``: write every ``l_i(y)`` into its register."""
    x_q = layout.qubits("x")
    gates: list[Gate] = []
    for i, c in enumerate(problem.constraints):
        gates += _L_gates(c.coeffs, x_q, layout.qubits(f"l{i + 1}"))
    return gates


def trotter_order(n: int, r: int) -> list[int]:
    """Variable sequence of the symmetric product: ``(1..n, n..1)`` repeated ``r`` times."""
    sweep = list(range(1, n + 1))
    return (sweep + sweep[::-1]) * r


def build_mixer(problem: Problem, config: MixerConfig) -> MixerCircuit:
    method = config.method
    layout = mixer_layout(problem, method)
    theta = config.theta
    gates: list[Gate] = []
    if method == "modified":
        blocks = {j: modified_block_gates(problem, layout, j, theta) for j in range(1, problem.n + 1)}
        load = load_gates(problem, layout)
        gates += load
        for j in trotter_order(problem.n, config.r):
            gates += blocks[j]
        gates += adjoint_gates(load)
    else:
        sequential = method == "standard_sequential" and problem.num_constraints > 1
        blocks = {
            j: standard_block_gates(problem, layout, j, theta, sequential)
            for j in range(1, problem.n + 1)
        }
        for j in trotter_order(problem.n, config.r):
            gates += blocks[j]
    return MixerCircuit(Circuit(layout, tuple(gates)), layout, config, problem)
