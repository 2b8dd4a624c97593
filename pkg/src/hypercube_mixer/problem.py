"""Constrained binary problems with linear range constraints.

Bitstrings are written left to right starting at variable ``x0``.  Whenever a bitstring is packed into an integer index (statevector
basis order), variable ``x_k`` sits on bit ``k`` of the index.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ArgumentError, CapacityError, DomainError, InputError

BitsLike = Union[str, Sequence[int]]

ENUMERATION_LIMIT = 24

FIXTURE_NAMES = ("1n", "1w", "2n", "2w", "3n", "3w", "4n", "4w", "5n", "5w")


@dataclass(frozen=True)
class LinearConstraint:
    """``lower <= sum_k coeffs[k] * y_k <= upper`` with positive integer coefficients."""

    coeffs: tuple[int, ...]
    lower: int
    upper: int

    def __post_init__(self):
        coeffs = tuple(int(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if not coeffs:
            raise ArgumentError("constraint needs at least one coefficient")
        if any(c <= 0 for c in coeffs):
            raise ArgumentError(f"coefficients must be positive integers, got {coeffs}")
        if self.lower > self.upper:
            raise ArgumentError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def total(self) -> int:
        return sum(self.coeffs)

    @property
    def has_lower(self) -> bool:
        """False when the lower bound holds for every input (``lower <= 0``)."""
        return self.lower > 0

    @property
    def has_upper(self) -> bool:
        return self.upper < self.total

    @property
    def num_flags(self) -> int:
        return int(self.has_lower) + int(self.has_upper)

    def value(self, bits: Sequence[int]) -> int:
        return sum(c * b for c, b in zip(self.coeffs, bits))

    def satisfied(self, bits: Sequence[int]) -> bool:
        return self.lower <= self.value(bits) <= self.upper

    def __str__(self):
        terms = " + ".join(f"{c}x{k}" for k, c in enumerate(self.coeffs))
        return f"{self.lower} <= {terms} <= {self.upper}"


@dataclass(frozen=True)
class Problem:
    n: int
    constraints: tuple[LinearConstraint, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.n < 1:
            raise ArgumentError("a problem needs at least one variable")
        if not self.constraints:
            raise ArgumentError("a problem needs at least one constraint")
        for c in self.constraints:
            if len(c.coeffs) != self.n:
                raise ArgumentError(
                    f"constraint has {len(c.coeffs)} coefficients, expected {self.n}"
                )
            if c.lower > c.total:
                raise ArgumentError(f"constraint '{c}' admits no assignment")

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def num_flags(self) -> int:
        return sum(c.num_flags for c in self.constraints)

    def __str__(self):
        label = f"{self.name}: " if self.name else ""
        return label + "; ".join(str(c) for c in self.constraints)


@dataclass(frozen=True)
class FeasibleSet:
    n: int
    indices: tuple[int, ...]
    adjacency: tuple[tuple[int, int], ...]

    @property
    def bitstrings(self) -> list[str]:
        return [index_to_bits(i, self.n) for i in self.indices]

    def __len__(self):
        return len(self.indices)

    def __contains__(self, y) -> bool:
        idx = y if isinstance(y, (int, np.integer)) else bits_to_index(y)
        return idx in set(self.indices)


def _as_bits(y: BitsLike) -> tuple[int, ...]:
    bits = tuple(int(b) for b in y)
    if any(b not in (0, 1) for b in bits):
        raise ArgumentError(f"not a bitstring: {y!r}")
    return bits


def bits_to_index(y: BitsLike) -> int:
    return sum(b << k for k, b in enumerate(_as_bits(y)))


def index_to_bits(index: int, n: int) -> str:
    return "".join(str((index >> k) & 1) for k in range(n))


def _check_length(problem: Problem, bits: tuple[int, ...]):
    if len(bits) != problem.n:
        raise ArgumentError(f"bitstring has {len(bits)} bits, problem has n={problem.n}")


def evaluate_linear(problem: Problem, constraint_index: int, y: BitsLike) -> int:
    if not 0 <= constraint_index < problem.num_constraints:
        raise ArgumentError(
            f"constraint index {constraint_index} out of range for {problem.num_constraints}"
        )
    bits = _as_bits(y)
    _check_length(problem, bits)
    return problem.constraints[constraint_index].value(bits)


def is_feasible(problem: Problem, y: BitsLike) -> bool:
    bits = _as_bits(y)
    _check_length(problem, bits)
    return all(c.satisfied(bits) for c in problem.constraints)


def neighbor(y: BitsLike, j: int) -> str:
    """Flip variable ``j`` (1-based) of ``y``."""
    bits = list(_as_bits(y))
    if not 1 <= j <= len(bits):
        raise ArgumentError(f"neighbor index {j} out of range 1..{len(bits)}")
    bits[j - 1] ^= 1
    return "".join(map(str, bits))


def linear_values(problem: Problem, constraint_index: int) -> np.ndarray:
    """Value of one linear function at every basis index, ``shape (2**n,)``."""
    n = problem.n
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=np.int64)
    for k, c in enumerate(problem.constraints[constraint_index].coeffs):
        out += c * ((idx >> k) & 1)
    return out


def feasibility_mask(problem: Problem) -> np.ndarray:
    if problem.n > ENUMERATION_LIMIT:
        raise CapacityError(f"n={problem.n} exceeds enumeration limit {ENUMERATION_LIMIT}")
    mask = np.ones(1 << problem.n, dtype=bool)
    for i, c in enumerate(problem.constraints):
        v = linear_values(problem, i)
        mask &= (v >= c.lower) & (v <= c.upper)
    return mask


def enumerate_feasible(problem: Problem) -> FeasibleSet:
    mask = feasibility_mask(problem)
    indices = np.flatnonzero(mask)
    adjacency = []
    for k in range(problem.n):
        bit = 1 << k
        lo = indices[(indices & bit) == 0]
        hi = lo | bit
        keep = mask[hi]
        adjacency.extend(zip(lo[keep].tolist(), hi[keep].tolist()))
    adjacency.sort()
    return FeasibleSet(problem.n, tuple(indices.tolist()), tuple(adjacency))


def check_connectivity(problem: Problem) -> tuple[bool, tuple[str, str] | None]:
    """Breadth-first search over the feasible Hamming-1 graph.

    Returns ``(True, None)`` when connected, otherwise ``(False, (u, v))`` with
    ``u`` and ``v`` feasible bitstrings in different components.
    """
    mask = feasibility_mask(problem)
    feasible = np.flatnonzero(mask)
    if feasible.size == 0:
        raise DomainError(f"problem {problem.name or problem} has no feasible solution")
    start = int(feasible[0])
    seen = {start}
    queue = deque([start])
    while queue:
        y = queue.popleft()
        for k in range(problem.n):
            z = y ^ (1 << k)
            if mask[z] and z not in seen:
                seen.add(z)
                queue.append(z)
    if len(seen) == feasible.size:
        return True, None
    other = next(int(y) for y in feasible if int(y) not in seen)
    return False, (index_to_bits(start, problem.n), index_to_bits(other, problem.n))


def satisfies_gap_condition(problem: Problem) -> bool:
    """Sufficient connectivity condition ``upper - lower >= 2 max coeff`` per constraint."""
    return all(c.upper - c.lower >= 2 * max(c.coeffs) for c in problem.constraints)


def parse_problem(text: str, name: str = "") -> Problem:
    n = None
    constraints = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("n="):
                n = int(line[2:])
                continue
            parts = [p.strip() for p in line.split("<=")]
            if len(parts) != 3:
                raise ValueError("expected 'a <= c1 ... cn <= b'")
            lower, upper = int(parts[0]), int(parts[2])
            coeffs = tuple(int(t) for t in parts[1].split())
        except ValueError as exc:
            raise InputError(f"{name or '<problem>'}:{lineno}: {exc}") from None
        constraints.append(LinearConstraint(coeffs, lower, upper))
    if n is None:
        raise InputError(f"{name or '<problem>'}: missing 'n=<int>' line")
    try:
        return Problem(n, tuple(constraints), name)
    except ArgumentError as exc:
        raise InputError(f"{name or '<problem>'}: {exc}") from None


def format_problem(problem: Problem) -> str:
    lines = [f"n={problem.n}"]
    for c in problem.constraints:
        lines.append(f"{c.lower} <= {' '.join(map(str, c.coeffs))} <= {c.upper}")
    return "\n".join(lines) + "\n"


def load_problem(source: str | Path) -> Problem:
    """Load a problem from a path, or by fixture name (``1n`` ... ``5w``, ``disconnected``)."""
    path = Path(source)
    if path.is_file():
        return parse_problem(path.read_text(), path.name)
    fixture = resources.files(__package__).joinpath("fixtures", str(source))
    if fixture.is_file():
        return parse_problem(fixture.read_text(), str(source))
    raise InputError(f"no problem file or fixture named {source!r}")


def load_fixtures(names: Sequence[str] = FIXTURE_NAMES) -> list[Problem]:
    return [load_problem(name) for name in names]
