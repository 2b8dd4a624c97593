"""Gate-level circuit representation, algebra, basis decomposition and metrics.

A gate is a base operation (``X``, ``SX``, ``SXDG``, ``H``, ``RZ``, ``RX``,
``RY``, ``PHASE``, ``SWAP``) acting on target qubits, optionally conditioned on
control qubits with a polarity each.  Display names follow the usual
convention: one control prefixes ``C`` (``CX``, ``CPHASE``), two or more
prefix ``MC`` (``MCX``, ``MCRX``).

Decomposition targets the basis ``{X, SX, RZ, CX}`` and tracks the global
phase exactly, so ``Circuit.global_phase`` plus the basis gates reproduce the
input unitary without any phase ambiguity.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, InputError

ROTATIONS = frozenset({"RZ", "RX", "RY", "PHASE"})
SELF_INVERSE = frozenset({"X", "H", "SWAP"})
BASE_KINDS = frozenset({"X", "SX", "SXDG", "H", "SWAP"}) | ROTATIONS
BASIS = frozenset({"X", "SX", "RZ", "CX"})

_ADJOINT_KIND = {"SX": "SXDG", "SXDG": "SX"}
_TOL = 1e-9


@dataclass(frozen=True)
class RegisterLayout:
    """Named registers laid out on a contiguous 0-based qubit range, in order."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        regs = tuple((str(name), int(width)) for name, width in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [name for name, _ in regs]
        if len(set(names)) != len(names):
            raise ArgumentError(f"duplicate register names in {names}")
        if any(width < 0 for _, width in regs):
            raise ArgumentError("register widths must be nonnegative")

    @classmethod
    def of(cls, *registers: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(registers))

    @property
    def num_qubits(self) -> int:
        return sum(width for _, width in self.registers)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.registers]

    def width(self, name: str) -> int:
        return dict(self.registers)[name]

    def __contains__(self, name: str) -> bool:
        return name in dict(self.registers)

    def qubits(self, name: str) -> tuple[int, ...]:
        start = 0
        for reg, width in self.registers:
            if reg == name:
                return tuple(range(start, start + width))
            start += width
        raise ArgumentError(f"no register named {name!r}")

    def __str__(self):
        return " ".join(f"{name}:{width}" for name, width in self.registers)


@dataclass(frozen=True, slots=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    controls: tuple[tuple[int, int], ...] = ()
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ArgumentError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind == "SWAP" else 1
        if len(self.targets) != want:
            raise ArgumentError(f"{self.kind} takes {want} target(s), got {self.targets}")
        if (self.angle is not None) != (self.kind in ROTATIONS):
            raise ArgumentError(f"angle mismatch for {self.kind}")
        if self.angle is not None and not math.isfinite(self.angle):
            raise ArgumentError("rotation angle must be finite")
        ctrl = [q for q, _ in self.controls]
        if any(p not in (0, 1) for _, p in self.controls):
            raise ArgumentError("control polarity must be 0 or 1")
        if len(set(ctrl) | set(self.targets)) != len(ctrl) + len(self.targets):
            raise ArgumentError(f"targets and controls overlap or repeat in {self}")

    @property
    def name(self) -> str:
        k = len(self.controls)
        return self.kind if k == 0 else ("C" if k == 1 else "MC") + self.kind

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.controls) + self.targets

    def adjoint(self) -> "Gate":
        if self.angle is not None:
            return replace(self, angle=-self.angle)
        if self.kind in _ADJOINT_KIND:
            return replace(self, kind=_ADJOINT_KIND[self.kind])
        return self

    def base_matrix(self) -> np.ndarray:
        return base_matrix(self.kind, self.angle)


def base_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Unitary of the uncontrolled base operation (qubit 0 = first target)."""
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if kind == "SX":
        return 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
    if kind == "SXDG":
        return 0.5 * np.array([[1 - 1j, 1 + 1j], [1 + 1j, 1 - 1j]])
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    if kind == "RZ":
        return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    if kind == "RX":
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "PHASE":
        return np.diag([1, np.exp(1j * angle)])
    if kind == "SWAP":
        m = np.eye(4, dtype=complex)
        m[[1, 2]] = m[[2, 1]]
        return m
    raise ArgumentError(f"unknown gate kind {kind!r}")


# gate constructors
def x(q, controls=()) -> Gate:
    return Gate("X", (q,), tuple(controls))


def cx(c, t, polarity=1) -> Gate:
    return Gate("X", (t,), ((c, polarity),))


def h(q) -> Gate:
    return Gate("H", (q,))


def sx(q) -> Gate:
    return Gate("SX", (q,))


def rz(q, theta, controls=()) -> Gate:
    return Gate("RZ", (q,), tuple(controls), float(theta))


def rx(q, theta, controls=()) -> Gate:
    return Gate("RX", (q,), tuple(controls), float(theta))


def phase(q, lam, controls=()) -> Gate:
    return Gate("PHASE", (q,), tuple(controls), float(lam))


def cphase(c, t, lam) -> Gate:
    return Gate("PHASE", (t,), ((c, 1),), float(lam))


def swap(a, b) -> Gate:
    return Gate("SWAP", (a, b))


@dataclass(frozen=True)
class Circuit:
    layout: RegisterLayout
    gates: tuple[Gate, ...] = ()
    global_phase: float = 0.0

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        nq = self.layout.num_qubits
        for g in gates:
            if any(q < 0 or q >= nq for q in g.qubits):
                raise ArgumentError(f"gate {g} references a qubit outside 0..{nq - 1}")

    @property
    def width(self) -> int:
        return self.layout.num_qubits

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def support(self) -> set[int]:
        return {q for g in self.gates for q in g.qubits}


def compose(a: Circuit, b: Circuit) -> Circuit:
    """Gates of ``a`` followed by gates of ``b``."""
    if a.layout != b.layout:
        raise ArgumentError(f"layout mismatch: [{a.layout}] vs [{b.layout}]")
    return Circuit(a.layout, a.gates + b.gates, a.global_phase + b.global_phase)


def concat(layout: RegisterLayout, parts: Iterable[Circuit | Sequence[Gate]]) -> Circuit:
    gates: list[Gate] = []
    gphase = 0.0
    for part in parts:
        if isinstance(part, Circuit):
            if part.layout != layout:
                raise ArgumentError(f"layout mismatch: [{layout}] vs [{part.layout}]")
            gphase += part.global_phase
            gates.extend(part.gates)
        else:
            gates.extend(part)
    return Circuit(layout, tuple(gates), gphase)


def inverse(c: Circuit) -> Circuit:
    return Circuit(c.layout, tuple(g.adjoint() for g in reversed(c.gates)), -c.global_phase)


def controlled(c: Circuit, controls: Sequence[tuple[int, int]]) -> Circuit:
    """Condition every gate of ``c`` on ``controls`` (pairs ``(qubit, polarity)``).

    Polarity-0 controls stay in the gate record; the basis decomposition
    realizes them by X-conjugation of the control qubit.
    """
    controls = tuple((int(q), int(p)) for q, p in controls)
    if not controls:
        return c
    cq = [q for q, _ in controls]
    if len(set(cq)) != len(cq):
        raise ArgumentError("repeated control qubit")
    if set(cq) & c.support():
        raise ArgumentError(f"controls {cq} overlap the circuit support")
    if any(q < 0 or q >= c.width for q in cq):
        raise ArgumentError("control qubit outside the layout")
    gates = [replace(g, controls=g.controls + controls) for g in c.gates]
    if abs(c.global_phase) > 0:
        # the global phase becomes a relative phase on the control pattern
        (q0, p0), rest = controls[0], controls[1:]
        flip = [x(q0)] if p0 == 0 else []
        gates += flip + [phase(q0, c.global_phase, rest)] + flip
    return Circuit(c.layout, tuple(gates))


# ---------------------------------------------------------------- peephole

def _period(g: Gate) -> float:
    """Angle period giving exactly the identity (RZ(2 pi) is -I)."""
    return 2 * math.pi if g.kind == "PHASE" else 4 * math.pi


def _key(g: Gate):
    """Identity of a gate up to its angle; symmetric gates use qubit sets."""
    if g.kind == "PHASE" and all(p == 1 for _, p in g.controls):
        return ("PHASE", frozenset(g.qubits))
    targets = frozenset(g.targets) if g.kind == "SWAP" else g.targets
    return (g.kind, targets, frozenset(g.controls))


def _adjoint_key(g: Gate):
    k = _key(g)
    if g.kind in _ADJOINT_KIND:
        return (_ADJOINT_KIND[g.kind],) + k[1:]
    return k


def peephole(gates: Sequence[Gate]) -> tuple[list[Gate], float]:
    """Cancel adjacent inverse pairs and merge adjacent equal-axis rotations.

    Adjacency is per-qubit: two gates are adjacent when no other gate touches
    any of their qubits in between and they act on the same qubit set.
    Removals cascade.  Returns the reduced gate list and the global phase
    picked up by dropping ``RZ``/``RX``/``RY`` rotations of angle 2 pi.
    """
    out: list[Gate | None] = []
    keys: list = []
    last: dict[int, list[int]] = {}
    gphase = 0.0

    def pop(i):
        out[i] = None
        for q in qset[i]:
            last[q].pop()

    qset: list[frozenset] = []
    for g in gates:
        qs = frozenset(g.qubits)
        tops = {last[q][-1] if last.get(q) else -1 for q in qs}
        if len(tops) == 1:
            i = tops.pop()
            if i >= 0 and qset[i] == qs:
                prev = out[i]
                if g.angle is None:
                    if keys[i] == _adjoint_key(g) and (
                        g.kind in SELF_INVERSE or g.kind in _ADJOINT_KIND
                    ):
                        pop(i)
                        continue
                elif keys[i] == _key(g):
                    total = prev.angle + g.angle
                    per = _period(g)
                    rem = math.remainder(total, per)
                    if abs(rem) < _TOL:
                        pop(i)
                        continue
                    if g.kind != "PHASE" and not g.controls:
                        half = math.remainder(total, 4 * math.pi)
                        if abs(abs(half) - 2 * math.pi) < _TOL:
                            gphase += math.pi
                            pop(i)
                            continue
                    out[i] = replace(prev, angle=total)
                    continue
        idx = len(out)
        out.append(g)
        keys.append(_key(g))
        qset.append(qs)
        for q in qs:
            last.setdefault(q, []).append(idx)
    return [g for g in out if g is not None], gphase


# ------------------------------------------------------------ decomposition

def _product(gates: Sequence[Gate]) -> np.ndarray:
    m = np.eye(2, dtype=complex)
    for g in gates:
        m = g.base_matrix() @ m
    return m


def _phase_between(target: np.ndarray, gates: Sequence[Gate]) -> float:
    """Angle ``phi`` with ``target = exp(i phi) * product(gates)``."""
    prod = _product(gates)
    k = np.unravel_index(np.argmax(np.abs(prod)), prod.shape)
    return float(np.angle(target[k] / prod[k]))


_HALF = math.pi / 2
_H_SEQ = (rz(0, _HALF), sx(0), rz(0, _HALF))
_H_PHASE = _phase_between(base_matrix("H"), _H_SEQ)
_SXDG_SEQ = (rz(0, math.pi), sx(0), rz(0, math.pi))
_SXDG_PHASE = _phase_between(base_matrix("SXDG"), _SXDG_SEQ)


def _relabel(seq, q):
    return [replace(g, targets=(q,)) for g in seq]


def zyz_angles(u: np.ndarray) -> tuple[float, float, float, float]:
    """``(alpha, beta, gamma, delta)`` with ``u = e^{i alpha} RZ(beta) RY(gamma) RZ(delta)``."""
    det = np.linalg.det(u)
    alpha = float(np.angle(det)) / 2
    v = u * np.exp(-1j * alpha)
    a, b = v[0, 0], v[1, 0]
    gamma = 2 * math.atan2(abs(b), abs(a))
    arg_a = float(np.angle(a)) if abs(a) > 1e-14 else 0.0
    arg_b = float(np.angle(b)) if abs(b) > 1e-14 else 0.0
    if abs(b) <= 1e-14:
        arg_b = -arg_a  # delta free; put everything in beta
    if abs(a) <= 1e-14:
        arg_a = -arg_b
    beta = arg_b - arg_a
    delta = -arg_a - arg_b
    return alpha, beta, gamma, delta


def _ry(q, theta, controls=()):
    return Gate("RY", (q,), tuple(controls), float(theta))


@lru_cache(maxsize=65536)
def _expand(g: Gate) -> tuple[tuple[Gate, ...], float]:
    """Exact rewrite of ``g`` (polarity-1 controls only) into basis gates."""
    out: list[Gate] = []
    gphase = 0.0

    def emit(seq):
        nonlocal gphase
        for s in seq:
            sub, ph = _expand(s)
            out.extend(sub)
            gphase += ph

    k = len(g.controls)
    ctrl = [q for q, _ in g.controls]
    (t,) = g.targets if g.kind != "SWAP" else (None,)
    if k == 0:
        if g.kind in ("X", "SX", "RZ"):
            return (g,), 0.0
        if g.kind == "PHASE":
            return (rz(t, g.angle),), g.angle / 2
        if g.kind == "H":
            return tuple(_relabel(_H_SEQ, t)), _H_PHASE
        if g.kind == "SXDG":
            return tuple(_relabel(_SXDG_SEQ, t)), _SXDG_PHASE
        if g.kind == "RX":
            emit([h(t), rz(t, g.angle), h(t)])
        elif g.kind == "RY":
            emit([rz(t, -_HALF), rx(t, g.angle), rz(t, _HALF)])
        elif g.kind == "SWAP":
            a, b = g.targets
            out.extend([cx(a, b), cx(b, a), cx(a, b)])
        return tuple(out), gphase

    if g.kind == "SWAP":
        a, b = g.targets
        emit([cx(b, a), x(b, ((q, 1) for q in ctrl + [a])), cx(b, a)])
    elif g.kind == "X":
        if k == 1:
            return (g,), 0.0
        emit([h(t), phase(t, math.pi, g.controls), h(t)])
    elif g.kind == "PHASE":
        lam = g.angle
        if k == 1:
            c = ctrl[0]
            out.extend([rz(c, lam / 2), cx(c, t), rz(t, -lam / 2), cx(c, t), rz(t, lam / 2)])
            gphase += lam / 4
        else:
            ck, rest = ctrl[-1], tuple((q, 1) for q in ctrl[:-1])
            emit([
                cphase(ck, t, lam / 2),
                x(ck, rest),
                cphase(ck, t, -lam / 2),
                x(ck, rest),
                phase(t, lam / 2, rest),
            ])
    elif g.kind == "RZ":
        th = g.angle
        if k == 1:
            c = ctrl[0]
            out.extend([rz(t, th / 2), cx(c, t), rz(t, -th / 2), cx(c, t)])
        else:
            ck, rest = ctrl[-1], tuple((q, 1) for q in ctrl[:-1])
            emit([phase(t, th, g.controls), phase(ck, -th / 2, rest)])
    elif g.kind == "RX":
        emit([h(t), replace(g, kind="RZ"), h(t)])
    elif g.kind == "RY":
        emit([_ry(t, g.angle / 2), x(t, g.controls), _ry(t, -g.angle / 2), x(t, g.controls)])
    else:
        alpha, beta, gamma, delta = zyz_angles(g.base_matrix())
        ck, rest = ctrl[-1], tuple((q, 1) for q in ctrl[:-1])
        seq = [
            rz(t, delta, g.controls),
            _ry(t, gamma, g.controls),
            rz(t, beta, g.controls),
            phase(ck, alpha, rest),
        ]
        emit([s for s in seq if s.angle != 0.0])
    return tuple(out), gphase


def normalize_polarity(gates: Iterable[Gate]) -> list[Gate]:
    """Rewrite polarity-0 controls as X-conjugated polarity-1 controls."""
    out = []
    for g in gates:
        neg = [q for q, p in g.controls if p == 0]
        if not neg:
            out.append(g)
            continue
        flips = [x(q) for q in neg]
        out.extend(flips)
        out.append(replace(g, controls=tuple((q, 1) for q, _ in g.controls)))
        out.extend(flips)
    return out


@dataclass(frozen=True)
class CircuitMetrics:
    size: int
    depth: int
    width: int
    counts: dict = field(default_factory=dict, compare=False)


def circuit_depth(gates: Iterable[Gate]) -> int:
    level: dict[int, int] = {}
    depth = 0
    for g in gates:
        d = 1 + max((level.get(q, 0) for q in g.qubits), default=0)
        for q in g.qubits:
            level[q] = d
        depth = max(depth, d)
    return depth


def metrics(c: Circuit) -> CircuitMetrics:
    counts = Counter(g.name for g in c.gates)
    return CircuitMetrics(len(c.gates), circuit_depth(c.gates), c.width, dict(sorted(counts.items())))


def decompose_to_basis(c: Circuit, optimize: bool = True) -> tuple[Circuit, CircuitMetrics]:
    """Rewrite ``c`` over ``{X, SX, RZ, CX}``; exact including global phase.

    With ``optimize`` the peephole pass runs before and after expansion.
    """
    gates = normalize_polarity(c.gates)
    gphase = c.global_phase
    if optimize:
        gates, ph = peephole(gates)
        gphase += ph
    basis: list[Gate] = []
    for g in gates:
        seq, ph = _expand(g)
        basis.extend(seq)
        gphase += ph
    if optimize:
        basis, ph = peephole(basis)
        gphase += ph
    out = Circuit(c.layout, tuple(basis), gphase)
    return out, metrics(out)


def is_basis(c: Circuit) -> bool:
    return all(g.name in BASIS for g in c.gates)


# ------------------------------------------------------------------ dump

def format_gate(g: Gate) -> str:
    parts = ["GATE", g.name]
    if g.angle is not None:
        parts.append(repr(g.angle))
    parts.append("t=" + ",".join(map(str, g.targets)))
    parts.append("c=" + ",".join(f"{q}:{p}" for q, p in g.controls))
    return " ".join(parts)


def dump_circuit(c: Circuit) -> str:
    lines = [f"LAYOUT {c.layout}", f"PHASE {math.remainder(c.global_phase, 2 * math.pi)!r}"]
    lines += [format_gate(g) for g in c.gates]
    return "\n".join(lines) + "\n"


def _base_kind(name: str, ncontrols: int) -> str:
    if ncontrols >= 2 and name.startswith("MC"):
        return name[2:]
    if ncontrols == 1 and name.startswith("C"):
        return name[1:]
    return name


def parse_gate(line: str) -> Gate:
    tokens = line.split()
    if len(tokens) < 4 or tokens[0] != "GATE":
        raise InputError(f"malformed gate line: {line!r}")
    try:
        name = tokens[1]
        angle = float(tokens[2]) if len(tokens) == 5 else None
        t_tok, c_tok = tokens[-2], tokens[-1]
        if not (t_tok.startswith("t=") and c_tok.startswith("c=")):
            raise ValueError("expected t=... c=...")
        targets = tuple(int(q) for q in t_tok[2:].split(","))
        controls = tuple(
            tuple(int(v) for v in item.split(":")) for item in c_tok[2:].split(",") if item
        )
        return Gate(_base_kind(name, len(controls)), targets, controls, angle)
    except (ValueError, ArgumentError) as exc:
        raise InputError(f"malformed gate line {line!r}: {exc}") from None


def parse_circuit(text: str) -> Circuit:
    layout = None
    gphase = 0.0
    gates = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("LAYOUT"):
            regs = []
            for item in line.split()[1:]:
                name, width = item.rsplit(":", 1)
                regs.append((name, int(width)))
            layout = RegisterLayout(tuple(regs))
        elif line.startswith("PHASE"):
            gphase = float(line.split()[1])
        else:
            gates.append(parse_gate(line))
    if layout is None:
        raise InputError("circuit dump lacks a LAYOUT line")
    return Circuit(layout, tuple(gates), gphase)
