"""Statevector, density-matrix and trajectory simulation with Kraus noise.

Basis index convention: qubit ``q`` is bit ``q`` of the index (little-endian).
A density matrix is stored as a ``(2**w, 2**w)`` array ``rho[row, col]``.

Every simulator compiles a circuit once into flat numpy op tables and runs
the whole gate list inside a single numba call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from numpy.typing import ArrayLike

from .circuit import Circuit, Gate, decompose_to_basis, is_basis
from .errors import ArgumentError, CapacityError

STATEVECTOR_LIMIT = 26
DENSITY_LIMIT = 13

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class Statevector:
    """Pure state on ``num_qubits`` qubits."""

    def __init__(self, data: ArrayLike, check: bool = True):
        data = np.asarray(data, dtype=complex).ravel()
        nq = int(data.size).bit_length() - 1
        if data.size != 1 << nq:
            raise ArgumentError(f"statevector length {data.size} is not a power of two")
        if check and abs(np.linalg.norm(data) - 1) > 1e-9:
            raise ArgumentError(f"statevector norm {np.linalg.norm(data)} differs from 1")
        self.data = data
        self.num_qubits = nq

    @classmethod
    def basis(cls, index: int, num_qubits: int) -> "Statevector":
        v = np.zeros(1 << num_qubits, dtype=complex)
        v[index] = 1
        return cls(v)

    @classmethod
    def zero(cls, num_qubits: int) -> "Statevector":
        return cls.basis(0, num_qubits)

    def embed(self, width: int) -> "Statevector":
        """Extend with ``width - num_qubits`` high-order qubits in ``|0>``."""
        if width < self.num_qubits:
            raise ArgumentError("cannot embed into a smaller register")
        v = np.zeros(1 << width, dtype=complex)
        v[: self.data.size] = self.data
        return Statevector(v, check=False)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.data) ** 2

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.data, self.data.conj()), check=False)

    def reduced(self, keep: Sequence[int]) -> "DensityMatrix":
        return DensityMatrix(_reduce_pure(self.data[:, None], self.num_qubits, keep), check=False)

    def __repr__(self):
        return f"Statevector(num_qubits={self.num_qubits})"


class DensityMatrix:
    def __init__(self, data: ArrayLike, check: bool = True):
        data = np.asarray(data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ArgumentError(f"density matrix must be square, got shape {data.shape}")
        nq = int(data.shape[0]).bit_length() - 1
        if data.shape[0] != 1 << nq:
            raise ArgumentError("density matrix dimension is not a power of two")
        if check:
            if abs(np.trace(data) - 1) > 1e-9:
                raise ArgumentError(f"trace {np.trace(data)} differs from 1")
            if not np.allclose(data, data.conj().T, atol=1e-9):
                raise ArgumentError("density matrix is not Hermitian")
        self.data = data
        self.num_qubits = nq

    @classmethod
    def from_state(cls, state: Statevector) -> "DensityMatrix":
        return state.to_density()

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)

    def reduced(self, keep: Sequence[int]) -> "DensityMatrix":
        return DensityMatrix(partial_trace(self.data, self.num_qubits, keep), check=False)

    def __repr__(self):
        return f"DensityMatrix(num_qubits={self.num_qubits})"


def _keep_order(num_qubits: int, keep: Sequence[int]) -> tuple[list[int], list[int]]:
    keep = list(keep)
    if len(set(keep)) != len(keep) or any(q < 0 or q >= num_qubits for q in keep):
        raise ArgumentError(f"invalid qubit selection {keep} for {num_qubits} qubits")
    rest = [q for q in range(num_qubits) if q not in keep]
    return keep, rest


def _axes(num_qubits: int, qubits: Sequence[int]) -> list[int]:
    # reshape to (2,)*w gives axis 0 = highest qubit
    return [num_qubits - 1 - q for q in qubits]


def _reduce_pure(vectors: np.ndarray, num_qubits: int, keep: Sequence[int]) -> np.ndarray:
    """Sum of reduced density matrices of the columns of ``vectors``."""
    keep, rest = _keep_order(num_qubits, keep)
    k = len(keep)
    out = np.zeros((1 << k, 1 << k), dtype=complex)
    # order kept qubits so that keep[0] is the least significant bit
    perm = _axes(num_qubits, keep[::-1]) + _axes(num_qubits, rest)
    for col in range(vectors.shape[1]):
        t = vectors[:, col].reshape((2,) * num_qubits).transpose(perm)
        a = t.reshape(1 << k, -1)
        out += a @ a.conj().T
    return out


def partial_trace(rho: np.ndarray, num_qubits: int, keep: Sequence[int]) -> np.ndarray:
    keep, rest = _keep_order(num_qubits, keep)
    if not rest:
        order = _axes(num_qubits, keep[::-1])
        t = rho.reshape((2,) * (2 * num_qubits))
        t = t.transpose(order + [num_qubits + a for a in order])
        return t.reshape(rho.shape)
    k = len(keep)
    order = _axes(num_qubits, keep[::-1]) + _axes(num_qubits, rest)
    t = rho.reshape((2,) * (2 * num_qubits))
    t = t.transpose(order + [num_qubits + a for a in order])
    t = t.reshape(1 << k, 1 << (num_qubits - k), 1 << k, 1 << (num_qubits - k))
    return np.einsum("ajbj->ab", t)


# ------------------------------------------------------------------ noise

@dataclass(frozen=True)
class NoiseModel:
    """Channel applied after every 1- and 2-qubit basis gate on the acted qubits.

    ``depolarizing``: 1-qubit ``(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)``;
    2-qubit ``(1-p) rho + p/15 sum_{P != II} P rho P``.
    ``damping``: amplitude damping with ``gamma = p_a`` followed by phase
    damping with ``lambda = p_p`` on each acted qubit.
    """

    kind: str = "none"
    p: float = 0.0
    p_a: float = 0.0
    p_p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "depolarizing", "damping"):
            raise ArgumentError(f"unknown noise kind {self.kind!r}")
        for v in (self.p, self.p_a, self.p_p):
            if not 0 <= v <= 1:
                raise ArgumentError(f"noise parameter {v} outside [0, 1]")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def depolarizing(cls, p: float) -> "NoiseModel":
        return cls("depolarizing", p=float(p))

    @classmethod
    def damping(cls, p_a: float, p_p: float | None = None) -> "NoiseModel":
        return cls("damping", p_a=float(p_a), p_p=float(p_a if p_p is None else p_p))

    @classmethod
    def from_kind(cls, kind: str, param: float) -> "NoiseModel":
        if kind == "none":
            return cls.none()
        if kind == "depolarizing":
            return cls.depolarizing(param)
        if kind == "damping":
            return cls.damping(param)
        raise ArgumentError(f"unknown noise kind {kind!r}")

    @property
    def parameter(self) -> float:
        return self.p if self.kind == "depolarizing" else self.p_a

    @property
    def is_trivial(self) -> bool:
        return self.kind == "none" or (self.p == 0 and self.p_a == 0 and self.p_p == 0)

    def kraus(self, num_qubits: int) -> list[np.ndarray]:
        """Kraus operators for a channel on ``num_qubits`` (1 or 2) acted qubits."""
        if num_qubits not in (1, 2):
            raise ArgumentError("noise acts on one or two qubits")
        if self.kind == "none":
            return [np.eye(1 << num_qubits, dtype=complex)]
        if self.kind == "depolarizing":
            if num_qubits == 1:
                ops = [math.sqrt(1 - self.p) * _PAULI[0]]
                ops += [math.sqrt(self.p / 3) * P for P in _PAULI[1:]]
                return ops
            ops = []
            for idx in range(16):
                # local bit 0 is the first acted qubit
                P = np.kron(_PAULI[idx // 4], _PAULI[idx % 4])
                w = 1 - self.p if idx == 0 else self.p / 15
                ops.append(math.sqrt(w) * P)
            return ops
        single = _damping_kraus(self.p_a, self.p_p)
        if num_qubits == 1:
            return single
        return [np.kron(b, a) for a in single for b in single]


def _damping_kraus(gamma: float, lam: float) -> list[np.ndarray]:
    ad = [
        np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
    ]
    pd = [
        np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=complex),
        np.array([[0, 0], [0, math.sqrt(lam)]], dtype=complex),
    ]
    return [b @ a for b in pd for a in ad]


def superoperator(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Matrix of ``rho -> sum K rho K^dag`` acting on row-major ``vec(rho)``."""
    return sum(np.kron(K, K.conj()) for K in kraus)


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(K @ rho @ K.conj().T for K in kraus)


# ------------------------------------------------------- gate compilation

def _local_unitary(g: Gate, qubits: Sequence[int]) -> np.ndarray:
    """Unitary of ``g`` on ``qubits`` (local bit ``i`` is ``qubits[i]``)."""
    k = len(qubits)
    pos = {q: i for i, q in enumerate(qubits)}
    base = g.base_matrix()
    tloc = [pos[q] for q in g.targets]
    dim = 1 << k
    u = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        if any(((a >> pos[q]) & 1) != p for q, p in g.controls):
            u[a, a] = 1
            continue
        sub_in = sum(((a >> t) & 1) << i for i, t in enumerate(tloc))
        rest = a
        for t in tloc:
            rest &= ~(1 << t)
        for sub_out in range(base.shape[0]):
            b = rest
            for i, t in enumerate(tloc):
                b |= ((sub_out >> i) & 1) << t
            u[b, a] += base[sub_out, sub_in]
    return u


def _compile_sv(gates: Sequence[Gate]):
    """Op tables for the statevector kernel: targets, control mask/value, matrix."""
    m = len(gates)
    ntarg = np.zeros(m, np.int64)
    targ = np.zeros((m, 2), np.int64)
    cmask = np.zeros(m, np.int64)
    cval = np.zeros(m, np.int64)
    mats = np.zeros((m, 4, 4), np.complex128)
    for i, g in enumerate(gates):
        ntarg[i] = len(g.targets)
        targ[i, : len(g.targets)] = g.targets
        for q, p in g.controls:
            cmask[i] |= 1 << q
            cval[i] |= p << q
        b = g.base_matrix()
        mats[i, : b.shape[0], : b.shape[1]] = b
    return ntarg, targ, cmask, cval, mats


@numba.njit(cache=True)
def _sv_kernel(psi, nq, ntarg, targ, cmask, cval, mats, start, stop):
    dim = psi.shape[0]
    ncol = psi.shape[1]
    for o in range(start, stop):
        m = mats[o]
        cm = cmask[o]
        cv = cval[o]
        if ntarg[o] == 1:
            bit = 1 << targ[o, 0]
            low = bit - 1
            m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
            diag = m01 == 0 and m10 == 0
            anti = m00 == 0 and m11 == 0
            for i in range(dim >> 1):
                i0 = ((i & ~low) << 1) | (i & low)
                if (i0 & cm) != cv:
                    continue
                i1 = i0 | bit
                for c in range(ncol):
                    a = psi[i0, c]
                    b = psi[i1, c]
                    if diag:
                        psi[i0, c] = m00 * a
                        psi[i1, c] = m11 * b
                    elif anti:
                        psi[i0, c] = m01 * b
                        psi[i1, c] = m10 * a
                    else:
                        psi[i0, c] = m00 * a + m01 * b
                        psi[i1, c] = m10 * a + m11 * b
        else:
            qa = targ[o, 0]
            qb = targ[o, 1]
            lo = min(qa, qb)
            hi = max(qa, qb)
            ba = 1 << qa
            bb = 1 << qb
            for i in range(dim >> 2):
                j = ((i >> lo) << (lo + 1)) | (i & ((1 << lo) - 1))
                j = ((j >> hi) << (hi + 1)) | (j & ((1 << hi) - 1))
                if (j & cm) != cv:
                    continue
                idx = (j, j | ba, j | bb, j | ba | bb)
                for c in range(ncol):
                    v0 = psi[idx[0], c]
                    v1 = psi[idx[1], c]
                    v2 = psi[idx[2], c]
                    v3 = psi[idx[3], c]
                    for r in range(4):
                        psi[idx[r], c] = m[r, 0] * v0 + m[r, 1] * v1 + m[r, 2] * v2 + m[r, 3] * v3


def _check_width(width: int, limit: int, what: str, hint: str = ""):
    if width > limit:
        raise CapacityError(f"{what}: width {width} exceeds limit {limit}{hint}")


def _evolve(circuit: Circuit, psi: np.ndarray) -> np.ndarray:
    tables = _compile_sv(circuit.gates)
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    _sv_kernel(psi, circuit.width, *tables, 0, len(circuit.gates))
    if circuit.global_phase:
        psi *= np.exp(1j * circuit.global_phase)
    return psi


def run_statevector(circuit: Circuit, initial: Statevector | None = None) -> Statevector:
    """Noiseless evolution; accepts any gate of the circuit IR."""
    _check_width(circuit.width, STATEVECTOR_LIMIT, "statevector simulation")
    if initial is None:
        initial = Statevector.zero(circuit.width)
    if initial.num_qubits != circuit.width:
        raise ArgumentError(
            f"state has {initial.num_qubits} qubits, circuit has {circuit.width}"
        )
    psi = _evolve(circuit, initial.data.copy()[:, None])
    return Statevector(psi[:, 0], check=False)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense unitary including the global phase (width guard 12)."""
    _check_width(circuit.width, 12, "dense unitary")
    return _evolve(circuit, np.eye(1 << circuit.width, dtype=complex))


# --------------------------------------------------------- density kernel

def _compile_density(gates: Sequence[Gate], noise: NoiseModel):
    """Per-gate op tables for the density kernel, each gate fused with its noise.

    One-qubit gates become a dense 4x4 superoperator.  Two-qubit gates whose
    unitary is monomial (CX and friends) become a phased permutation of the
    16 local entries followed by the closed-form noise channel; anything else
    falls back to a sparse 16x16 superoperator.
    """
    m = len(gates)
    kind = np.zeros(m, np.int64)
    qs = np.zeros((m, 2), np.int64)
    sup1 = np.zeros((m, 4, 4), np.complex128)
    perm = np.zeros((m, 16), np.int64)
    ph = np.zeros((m, 16), np.complex128)
    start = np.zeros(m + 1, np.int64)
    outs, ins, vals = [], [], []
    noise1 = superoperator(noise.kraus(1))
    noise2 = superoperator(noise.kraus(2))
    cache: dict = {}
    for i, g in enumerate(gates):
        qubits = g.qubits
        if len(qubits) > 2:
            raise ArgumentError(f"density simulation needs 1- or 2-qubit gates, got {g.name}")
        qs[i, : len(qubits)] = qubits
        # local bit i is qubits[i]; the fused matrix depends only on gate shape
        key = (g.kind, g.angle, tuple(p for _, p in g.controls), len(qubits))
        entry = cache.get(key)
        if entry is None:
            u = _local_unitary(g, qubits)
            uu = np.kron(u, u.conj())
            if len(qubits) == 1:
                entry = (0, noise1 @ uu)
            elif np.all(np.count_nonzero(np.abs(uu) > 1e-15, axis=1) == 1):
                cols = np.argmax(np.abs(uu) > 1e-15, axis=1)
                entry = (1, cols, uu[np.arange(16), cols])
            else:
                s = noise2 @ uu
                o, n_ = np.nonzero(np.abs(s) > 1e-15)
                entry = (2, o, n_, s[o, n_])
            cache[key] = entry
        kind[i] = entry[0]
        if entry[0] == 0:
            sup1[i] = entry[1]
        elif entry[0] == 1:
            perm[i] = entry[1]
            ph[i] = entry[2]
        else:
            outs.append(entry[1])
            ins.append(entry[2])
            vals.append(entry[3])
        start[i + 1] = start[i] + (len(entry[1]) if entry[0] == 2 else 0)
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
    if noise.is_trivial:
        code, a, b = 0, 0.0, 0.0
    elif noise.kind == "depolarizing":
        code, a, b = 1, 1 - 16 * noise.p / 15, 4 * noise.p / 15
    else:
        code, a, b = 2, noise.p_a, noise.p_p
    return (kind, qs, sup1, perm, ph, start, cat(outs, np.int64), cat(ins, np.int64),
            cat(vals, np.complex128), code, a, b)


@numba.njit(cache=True)
def _density_1q(rho, q, S):
    dim = rho.shape[0]
    bit = 1 << q
    half = dim >> 1
    s00, s01, s02, s03 = S[0, 0], S[0, 1], S[0, 2], S[0, 3]
    s10, s11, s12, s13 = S[1, 0], S[1, 1], S[1, 2], S[1, 3]
    s20, s21, s22, s23 = S[2, 0], S[2, 1], S[2, 2], S[2, 3]
    s30, s31, s32, s33 = S[3, 0], S[3, 1], S[3, 2], S[3, 3]
    for i in range(half):
        r0 = ((i >> q) << (q + 1)) | (i & (bit - 1))
        ra = rho[r0]
        rb = rho[r0 | bit]
        for h in range(half >> q):
            base = h << (q + 1)
            for c0 in range(base, base + bit):
                c1 = c0 + bit
                x0 = ra[c0]
                x1 = ra[c1]
                x2 = rb[c0]
                x3 = rb[c1]
                ra[c0] = s00 * x0 + s01 * x1 + s02 * x2 + s03 * x3
                ra[c1] = s10 * x0 + s11 * x1 + s12 * x2 + s13 * x3
                rb[c0] = s20 * x0 + s21 * x1 + s22 * x2 + s23 * x3
                rb[c1] = s30 * x0 + s31 * x1 + s32 * x2 + s33 * x3


@numba.njit(cache=True)
def _noise_2q(y, code, a, b):
    """Two-qubit channel on the 16 local entries ``y[4 * row + col]``."""
    if code == 1:
        tr = y[0] + y[5] + y[10] + y[15]
        for e in range(16):
            y[e] *= a
        for e in (0, 5, 10, 15):
            y[e] += b * tr
    elif code == 2:
        keep = math.sqrt((1 - a) * (1 - b))
        for t in range(2):
            m = 1 << t
            for r in range(4):
                for c in range(4):
                    rt = (r >> t) & 1
                    ct = (c >> t) & 1
                    if rt == 0 and ct == 0:
                        y[4 * r + c] += a * y[4 * (r | m) + (c | m)]
                    elif rt == 1 and ct == 1:
                        y[4 * r + c] *= 1 - a
                    else:
                        y[4 * r + c] *= keep


@numba.njit(cache=True)
def _density_kernel(rho, kind, qs, sup1, perm, ph, start, out_idx, in_idx, vals, code, a, b):
    dim = rho.shape[0]
    buf = np.zeros(16, np.complex128)
    res = np.zeros(16, np.complex128)
    quarter = dim >> 2
    for o in range(kind.shape[0]):
        if kind[o] == 0:
            _density_1q(rho, qs[o, 0], sup1[o])
            continue
        qa = qs[o, 0]
        qb = qs[o, 1]
        lo = min(qa, qb)
        hi = max(qa, qb)
        off = (0, 1 << qa, 1 << qb, (1 << qa) | (1 << qb))
        s0 = start[o]
        s1 = start[o + 1]
        for i in range(quarter):
            r = ((i >> lo) << (lo + 1)) | (i & ((1 << lo) - 1))
            r = ((r >> hi) << (hi + 1)) | (r & ((1 << hi) - 1))
            for j in range(quarter):
                c = ((j >> lo) << (lo + 1)) | (j & ((1 << lo) - 1))
                c = ((c >> hi) << (hi + 1)) | (c & ((1 << hi) - 1))
                for x in range(4):
                    for y in range(4):
                        buf[4 * x + y] = rho[r | off[x], c | off[y]]
                if kind[o] == 1:
                    for e in range(16):
                        res[e] = ph[o, e] * buf[perm[o, e]]
                    _noise_2q(res, code, a, b)
                else:
                    for e in range(16):
                        res[e] = 0
                    for s in range(s0, s1):
                        res[out_idx[s]] += vals[s] * buf[in_idx[s]]
                for x in range(4):
                    for y in range(4):
                        rho[r | off[x], c | off[y]] = res[4 * x + y]


def _as_density(state, width: int) -> np.ndarray:
    if isinstance(state, Statevector):
        state = state.to_density()
    if state.num_qubits != width:
        raise ArgumentError(f"state has {state.num_qubits} qubits, circuit has {width}")
    return np.array(state.data, dtype=np.complex128, order="C")


def basis_circuit(circuit: Circuit) -> Circuit:
    return circuit if is_basis(circuit) else decompose_to_basis(circuit)[0]


def run_density(
    circuit: Circuit, initial: DensityMatrix | Statevector | None = None, noise: NoiseModel | None = None
) -> DensityMatrix:
    """Density-matrix evolution with ``noise`` after every basis gate.

    Non-basis circuits are decomposed first so that channels follow the
    basis gates that would run on hardware.
    """
    _check_width(circuit.width, DENSITY_LIMIT, "density simulation", "; use the trajectory backend")
    noise = noise or NoiseModel.none()
    if initial is None:
        initial = Statevector.zero(circuit.width)
    rho = _as_density(initial, circuit.width)
    circuit = basis_circuit(circuit)
    _density_kernel(rho, *_compile_density(circuit.gates, noise))
    return DensityMatrix(rho, check=False)


# ------------------------------------------------------------ trajectories

_PAULI_TABLE = np.array(_PAULI)


@numba.njit(cache=True)
def _apply_pauli(psi, q, code, paulis):
    if code == 0:
        return
    bit = 1 << q
    low = bit - 1
    m = paulis[code]
    for i in range(psi.shape[0] >> 1):
        i0 = ((i & ~low) << 1) | (i & low)
        i1 = i0 | bit
        a = psi[i0, 0]
        b = psi[i1, 0]
        psi[i0, 0] = m[0, 0] * a + m[0, 1] * b
        psi[i1, 0] = m[1, 0] * a + m[1, 1] * b


@numba.njit(cache=True)
def _apply_damping(psi, q, u, kraus):
    bit = 1 << q
    low = bit - 1
    s00 = 0.0
    s11 = 0.0
    s01 = 0j
    for i in range(psi.shape[0] >> 1):
        i0 = ((i & ~low) << 1) | (i & low)
        a = psi[i0, 0]
        b = psi[i0 | bit, 0]
        s00 += a.real * a.real + a.imag * a.imag
        s11 += b.real * b.real + b.imag * b.imag
        s01 += a * np.conj(b)
    chosen = kraus.shape[0] - 1
    acc = 0.0
    prob = 0.0
    for k in range(kraus.shape[0]):
        K = kraus[k]
        # tr(K rho K^dag) with rho = [[s00, s01], [conj(s01), s11]]
        p = 0.0
        for r in range(2):
            v = (abs(K[r, 0]) ** 2) * s00 + (abs(K[r, 1]) ** 2) * s11
            v += 2 * (K[r, 0] * s01 * np.conj(K[r, 1])).real
            p += v
        if p > 0 and u < acc + p:
            chosen = k
            prob = p
            break
        acc += p
        prob = p
    K = kraus[chosen]
    scale = 1.0 / np.sqrt(prob) if prob > 0 else 0.0
    for i in range(psi.shape[0] >> 1):
        i0 = ((i & ~low) << 1) | (i & low)
        i1 = i0 | bit
        a = psi[i0, 0]
        b = psi[i1, 0]
        psi[i0, 0] = (K[0, 0] * a + K[0, 1] * b) * scale
        psi[i1, 0] = (K[1, 0] * a + K[1, 1] * b) * scale


@numba.njit(cache=True)
def _trajectory_kernel(psi, nq, ntarg, targ, cmask, cval, mats, start, nqubits, acted,
                       kind, p, uniforms, paulis, kraus):
    for o in range(start, ntarg.shape[0]):
        _sv_kernel(psi, nq, ntarg, targ, cmask, cval, mats, o, o + 1)
        k = nqubits[o]
        if kind == 1:
            u = uniforms[o, 0]
            if u < p:
                if k == 1:
                    code = min(int(u / p * 3), 2) + 1
                    _apply_pauli(psi, acted[o, 0], code, paulis)
                else:
                    code = min(int(u / p * 15), 14) + 1
                    _apply_pauli(psi, acted[o, 0], code % 4, paulis)
                    _apply_pauli(psi, acted[o, 1], code // 4, paulis)
        elif kind == 2:
            for s in range(k):
                _apply_damping(psi, acted[o, s], uniforms[o, s], kraus)


def _shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Counter-based stream for one shot: Philox keyed by the pair ``(seed, shot)``."""
    key = np.array([int(seed) & (2**64 - 1), int(shot)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _trajectory_states(circuit: Circuit, initial: Statevector, noise: NoiseModel, shots: int, seed: int):
    """Yield the final pure state of each shot, in shot order."""
    if shots < 1:
        raise ArgumentError("shots must be at least 1")
    _check_width(circuit.width, STATEVECTOR_LIMIT, "trajectory simulation")
    if initial.num_qubits != circuit.width:
        raise ArgumentError(f"state has {initial.num_qubits} qubits, circuit has {circuit.width}")
    circuit = basis_circuit(circuit)
    gates = circuit.gates
    m = len(gates)
    tables = _compile_sv(gates)
    nqubits = np.array([len(g.qubits) for g in gates], np.int64)
    acted = np.zeros((m, 2), np.int64)
    for i, g in enumerate(gates):
        acted[i, : len(g.qubits)] = g.qubits
    kind = {"none": 0, "depolarizing": 1, "damping": 2}[noise.kind]
    if noise.is_trivial:
        kind = 0
    kraus = np.array(_damping_kraus(noise.p_a, noise.p_p))
    phase = np.exp(1j * circuit.global_phase)
    psi0 = np.ascontiguousarray(initial.data[:, None], dtype=np.complex128)

    # noiseless checkpoints let Pauli-channel shots skip their error-free prefix
    stride = max(1, -(-m // 16))
    checkpoints = {}
    if kind in (0, 1):
        psi = psi0.copy()
        for c in range(0, m, stride):
            checkpoints[c] = psi.copy()
            _sv_kernel(psi, circuit.width, *tables, c, min(m, c + stride))
        ideal = psi * phase
    for shot in range(shots):
        if kind == 0:
            yield ideal[:, 0].copy()
            continue
        uniforms = _shot_rng(seed, shot).random((m, 2))
        if kind == 1:
            hits = np.flatnonzero(uniforms[:, 0] < noise.p)
            if hits.size == 0:
                yield ideal[:, 0].copy()
                continue
            begin = (hits[0] // stride) * stride
            psi = checkpoints[begin].copy()
        else:
            begin = 0
            psi = psi0.copy()
        _trajectory_kernel(psi, circuit.width, *tables, begin, nqubits, acted, kind,
                           noise.p, uniforms, _PAULI_TABLE, kraus)
        yield psi[:, 0] * phase


def run_trajectories(
    circuit: Circuit,
    initial: Statevector,
    noise: NoiseModel,
    shots: int,
    seed: int,
    keep: Sequence[int] | None = None,
) -> DensityMatrix:
    """Monte-Carlo Kraus unraveling; averages ``|psi><psi|`` (reduced to ``keep``)."""
    keep = list(range(circuit.width)) if keep is None else list(keep)
    acc = np.zeros((1 << len(keep), 1 << len(keep)), dtype=complex)
    for psi in _trajectory_states(circuit, initial, noise, shots, seed):
        acc += _reduce_pure(psi[:, None], circuit.width, keep)
    return DensityMatrix(acc / shots, check=False)


def trajectory_fidelity(
    circuit: Circuit,
    initial: Statevector,
    noise: NoiseModel,
    shots: int,
    seed: int,
    reference: Statevector,
    keep: Sequence[int],
) -> tuple[float, float]:
    """Mean and standard error of per-shot fidelity against a pure reference on ``keep``."""
    phi = reference.data
    vals = np.empty(shots)
    for i, psi in enumerate(_trajectory_states(circuit, initial, noise, shots, seed)):
        rho = _reduce_pure(psi[:, None], circuit.width, keep)
        vals[i] = float(np.real(phi.conj() @ rho @ phi))
    stderr = float(vals.std(ddof=1) / math.sqrt(shots)) if shots > 1 else 0.0
    return float(vals.mean()), stderr


# ---------------------------------------------------------------- fidelity

def _matrix(state) -> tuple[np.ndarray, bool]:
    if isinstance(state, Statevector):
        return state.data, True
    if isinstance(state, DensityMatrix):
        return state.data, False
    arr = np.asarray(state, dtype=complex)
    return arr, arr.ndim == 1


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``, clipped to [0, 1].

    Either argument may be a pure state, in which case the overlap form
    ``<psi|rho|psi>`` is used.
    """
    a, a_pure = _matrix(rho)
    b, b_pure = _matrix(sigma)
    if a.shape[0] != b.shape[0]:
        raise ArgumentError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a_pure and b_pure:
        f = abs(np.vdot(a, b)) ** 2
    elif a_pure:
        f = np.real(a.conj() @ b @ a)
    elif b_pure:
        f = np.real(b.conj() @ a @ b)
    else:
        s = _psd_sqrt(a)
        w = np.linalg.eigvalsh(s @ b @ s)
        f = np.sum(np.sqrt(np.clip(w, 0, None))) ** 2
    return float(min(1.0, max(0.0, f)))


def _as_operator(state) -> np.ndarray:
    m, pure = _matrix(state)
    return np.outer(m, m.conj()) if pure else m


def trace_distance(rho, sigma) -> float:
    """``0.5 * ||rho - sigma||_1``; pure states are accepted as vectors."""
    a = _as_operator(rho)
    b = _as_operator(sigma)
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    d = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2)).sum())
