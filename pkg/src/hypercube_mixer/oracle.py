"""Exact reference for the constrained hypercube mixer.

``B`` is the adjacency matrix of the graph on feasible bitstrings with
Hamming-1 edges.  Reference states are ``exp(-i beta B) psi`` computed by a
symmetric eigendecomposition restricted to the feasible subspace (``B`` is
zero elsewhere), with a truncated Taylor series as an independent check.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, CapacityError, DomainError
from .problem import Problem, enumerate_feasible, feasibility_mask
from .sim import Statevector

HAMILTONIAN_LIMIT = 14


def _guard(problem: Problem):
    if problem.n > HAMILTONIAN_LIMIT:
        raise CapacityError(f"n={problem.n} exceeds the exact-reference limit {HAMILTONIAN_LIMIT}")


def build_B(problem: Problem) -> sp.csr_matrix:
    """Sparse real symmetric ``2**n x 2**n`` matrix, ``B[x, y] = 1`` for feasible Hamming-1 pairs."""
    _guard(problem)
    fs = enumerate_feasible(problem)
    dim = 1 << problem.n
    if not fs.adjacency:
        return sp.csr_matrix((dim, dim))
    a = np.array(fs.adjacency, dtype=np.int64)
    rows = np.concatenate([a[:, 0], a[:, 1]])
    cols = np.concatenate([a[:, 1], a[:, 0]])
    data = np.ones(rows.size)
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def _as_vector(initial, dim: int) -> np.ndarray:
    v = initial.data if isinstance(initial, Statevector) else np.asarray(initial, dtype=complex)
    if v.shape != (dim,):
        raise ArgumentError(f"initial state has shape {v.shape}, expected ({dim},)")
    return v.astype(complex)


def exact_mixer_state(problem: Problem, beta: float, initial) -> Statevector:
    """``exp(-i beta B) initial`` by eigendecomposition of ``B`` on the feasible subspace."""
    B = build_B(problem)
    v = _as_vector(initial, B.shape[0])
    idx = np.flatnonzero(feasibility_mask(problem))
    out = v.copy()
    if idx.size:
        sub = B[idx][:, idx].toarray()
        w, U = np.linalg.eigh(sub)
        out[idx] = U @ (np.exp(-1j * beta * w) * (U.T @ v[idx]))
    return Statevector(out, check=False)


def taylor_mixer_state(problem: Problem, beta: float, initial, tol: float = 1e-15) -> Statevector:
    """``exp(-i beta B) initial`` by scaling and squaring a truncated Taylor series."""
    B = build_B(problem)
    v = _as_vector(initial, B.shape[0])
    norm = max(1.0, float(abs(B).sum(axis=1).max()) if B.nnz else 0.0)
    steps = max(1, math.ceil(abs(beta) * norm))
    h = beta / steps
    for _ in range(steps):
        term = v.copy()
        acc = v.copy()
        k = 1
        while True:
            term = (-1j * h / k) * (B @ term)
            acc += term
            if np.linalg.norm(term) < tol:
                break
            k += 1
        v = acc
    return Statevector(v, check=False)


def uniform_feasible_state(problem: Problem) -> Statevector:
    mask = feasibility_mask(problem)
    count = int(mask.sum())
    if count == 0:
        raise DomainError(f"problem {problem.name or problem} has no feasible solution")
    return Statevector(mask / math.sqrt(count))
