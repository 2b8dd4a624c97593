"""QFT-based in-place arithmetic on two's-complement registers.

Registers are little-endian lists of qubit indices; the last qubit is the
sign bit.  After ``qft_gates`` (no final swaps) qubit ``k`` of a register
holding ``p`` carries the phase ``exp(2 pi i p / 2**(k+1))``, so adding a
constant ``c`` is a ``PHASE(2 pi c / 2**(k+1))`` on each qubit ``k``.

Every builder has two modes: ``computational`` wraps the phase block in
QFT / inverse QFT, ``fourier`` emits the phase block alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .circuit import Circuit, Gate, RegisterLayout, cphase, h, inverse, phase, x
from .errors import ArgumentError, CapacityError

MODES = ("computational", "fourier")


def register_width(total: int) -> int:
    """Value bits for ``0..total`` plus one sign bit."""
    if total < 0:
        raise ArgumentError("register total must be nonnegative")
    return int(total).bit_length() + 1


def fits(value_min: int, value_max: int, width: int) -> bool:
    return -(1 << (width - 1)) <= value_min and value_max <= (1 << (width - 1)) - 1


def _layout_for(qubits: Sequence[int], layout: RegisterLayout | None) -> RegisterLayout:
    if layout is not None:
        return layout
    return RegisterLayout.of(("q", 1 + max(qubits, default=-1)))


def _check_mode(mode: str):
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")


def qft_gates(qubits: Sequence[int]) -> list[Gate]:
    gates = []
    for k in range(len(qubits) - 1, -1, -1):
        gates.append(h(qubits[k]))
        for m in range(k - 1, -1, -1):
            gates.append(cphase(qubits[m], qubits[k], math.pi / (1 << (k - m))))
    return gates


def iqft_gates(qubits: Sequence[int]) -> list[Gate]:
    return [g.adjoint() for g in reversed(qft_gates(qubits))]


def build_qft(width: int, layout: RegisterLayout | None = None, qubits: Sequence[int] | None = None) -> Circuit:
    if width < 1:
        raise ArgumentError("QFT width must be at least 1")
    qubits = list(range(width)) if qubits is None else list(qubits)
    return Circuit(_layout_for(qubits, layout), tuple(qft_gates(qubits)))


def _angle(value: int, k: int) -> float:
    """``2 pi value / 2**(k+1)`` reduced to ``(-pi, pi]``; zero means no gate."""
    num = value % (1 << (k + 1))
    if num == 0:
        return 0.0
    ang = 2 * math.pi * num / (1 << (k + 1))
    return ang - 2 * math.pi if ang > math.pi else ang


def fourier_add_gates(qubits: Sequence[int], constant: int, controls=()) -> list[Gate]:
    out = []
    for k, q in enumerate(qubits):
        ang = _angle(constant, k)
        if ang != 0.0:
            out.append(phase(q, ang, tuple(controls)))
    return out


def weighted_add_gates(coeffs: Sequence[int], x: Sequence[int], l: Sequence[int]) -> list[Gate]:
    """Phase block adding ``sum_j coeffs[j] * x_j`` to a Fourier-basis register."""
    if len(coeffs) != len(x):
        raise ArgumentError(f"{len(coeffs)} coefficients for {len(x)} control qubits")
    out = []
    for c, xj in zip(coeffs, x):
        for k, q in enumerate(l):
            ang = _angle(int(c), k)
            if ang != 0.0:
                out.append(cphase(xj, q, ang))
    return out


def _wrap(block: list[Gate], l: Sequence[int], mode: str) -> list[Gate]:
    _check_mode(mode)
    if mode == "fourier":
        return block
    return qft_gates(l) + block + iqft_gates(l)


def build_weighted_adder_L(
    coeffs: Sequence[int],
    x: Sequence[int],
    l: Sequence[int],
    layout: RegisterLayout | None = None,
    mode: str = "computational",
) -> Circuit:
    """``|y>_x |p>_l -> |y>_x |p + sum_j coeffs[j] y_j mod 2**w>_l``."""
    coeffs = [int(c) for c in coeffs]
    lo = sum(c for c in coeffs if c < 0)
    hi = sum(c for c in coeffs if c > 0)
    if not fits(lo, hi, len(l)):
        raise CapacityError(f"register of width {len(l)} cannot hold sums in [{lo}, {hi}]")
    gates = _wrap(weighted_add_gates(coeffs, x, l), l, mode)
    return Circuit(_layout_for(list(x) + list(l), layout), tuple(gates))


def build_constant_adder(
    constant: int,
    l: Sequence[int],
    controls: Sequence[tuple[int, int]] = (),
    layout: RegisterLayout | None = None,
    mode: str = "computational",
) -> Circuit:
    """``|p> -> |p + constant mod 2**w>`` when every control matches its polarity.

    Only the phase block is conditioned; the QFT wrappers cancel when the
    controls are inactive.
    """
    w = len(l)
    if w < 2:
        raise ArgumentError("constant adder needs a value bit and a sign bit")
    if abs(constant) > (1 << (w - 1)) - 1:
        raise CapacityError(f"constant {constant} does not fit a signed {w}-bit register")
    controls = tuple((int(q), int(p)) for q, p in controls)
    gates = _wrap(fourier_add_gates(l, int(constant), controls), l, mode)
    used = list(l) + [q for q, _ in controls]
    return Circuit(_layout_for(used, layout), tuple(gates))


@dataclass(frozen=True)
class ComparatorSpec:
    """Range check ``lower <= p <= upper`` on ``source``, written into ``flags``.

    ``total`` is the largest value the register can hold on the subspace of
    interest; bounds with ``lower <= 0`` or ``upper >= total`` are trivial and
    get no flag.  Flags are ordered low bound first.
    """

    source: tuple[int, ...]
    lower: int
    upper: int
    total: int
    flags: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "flags", tuple(self.flags))
        if len(self.source) < 2:
            raise ArgumentError("comparator register needs a value bit and a sign bit")
        if len(self.flags) != self.num_flags:
            raise ArgumentError(
                f"{len(self.flags)} flag qubits given, {self.num_flags} nontrivial bounds"
            )
        if not fits(-self.total, self.total, len(self.source)):
            raise CapacityError(
                f"register width {len(self.source)} too small for comparisons up to {self.total}"
            )

    @property
    def has_lower(self) -> bool:
        return self.lower > 0

    @property
    def has_upper(self) -> bool:
        return self.upper < self.total

    @property
    def num_flags(self) -> int:
        return int(self.has_lower) + int(self.has_upper)


def comparator_gates(spec: ComparatorSpec, mode: str = "computational") -> list[Gate]:
    _check_mode(mode)
    l = spec.source
    sign = l[-1]
    flags = iter(spec.flags)
    checks = []
    if spec.has_lower:
        # p - a >= 0  <=>  sign bit clear
        checks.append((spec.lower, 0, next(flags)))
    if spec.has_upper:
        # p - (b + 1) < 0  <=>  sign bit set
        checks.append((spec.upper + 1, 1, next(flags)))
    if not checks:
        return []
    body: list[Gate] = []
    for shift, polarity, flag in checks:
        body += fourier_add_gates(l, -shift)
        body += iqft_gates(l)
        body.append(x(flag, ((sign, polarity),)))
        body += qft_gates(l)
        body += fourier_add_gates(l, shift)
    return _wrap(body, l, mode)


def build_range_comparator_C(
    spec: ComparatorSpec, layout: RegisterLayout | None = None, mode: str = "computational"
) -> Circuit:
    """Flip ``flag_low`` iff ``p >= lower`` and ``flag_high`` iff ``p <= upper``; restores ``p``."""
    gates = comparator_gates(spec, mode)
    return Circuit(_layout_for(list(spec.source) + list(spec.flags), layout), tuple(gates))


def adjoint_gates(gates: Sequence[Gate]) -> list[Gate]:
    return [g.adjoint() for g in reversed(gates)]


__all__ = [
    "ComparatorSpec",
    "build_constant_adder",
    "build_qft",
    "build_range_comparator_C",
    "build_weighted_adder_L",
    "comparator_gates",
    "fourier_add_gates",
    "inverse",
    "iqft_gates",
    "qft_gates",
    "register_width",
    "weighted_add_gates",
]
