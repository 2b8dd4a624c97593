import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense import dense_unitary, equal_up_to_phase
from hypercube_mixer.arith import build_constant_adder
from hypercube_mixer.circuit import (
    BASIS,
    Circuit,
    Gate,
    RegisterLayout,
    circuit_depth,
    compose,
    controlled,
    cphase,
    cx,
    decompose_to_basis,
    dump_circuit,
    h,
    inverse,
    is_basis,
    metrics,
    parse_circuit,
    peephole,
    phase,
    rx,
    rz,
    swap,
    sx,
    x,
)
from hypercube_mixer.errors import ArgumentError, InputError

L2 = RegisterLayout.of(("q", 2))
L4 = RegisterLayout.of(("q", 4))


def basis_state(index, width):
    v = np.zeros(1 << width, dtype=complex)
    v[index] = 1
    return v


def test_layout_contiguous():
    lay = RegisterLayout.of(("x", 4), ("l1", 5), ("f", 2))
    assert lay.num_qubits == 11
    assert lay.qubits("l1") == (4, 5, 6, 7, 8)
    assert lay.qubits("f") == (9, 10)
    assert str(lay) == "x:4 l1:5 f:2"
    with pytest.raises(ArgumentError):
        RegisterLayout.of(("x", 2), ("x", 3))
    with pytest.raises(ArgumentError):
        lay.qubits("nope")


def test_gate_invariants():
    with pytest.raises(ArgumentError):
        Gate("X", (0,), ((0, 1),))
    with pytest.raises(ArgumentError):
        rz(0, math.inf)
    with pytest.raises(ArgumentError):
        Gate("FOO", (0,))
    with pytest.raises(ArgumentError):
        Circuit(L2, (x(2),))


def test_compose_identity_and_mismatch():
    c = Circuit(L2, (h(0), cx(0, 1)))
    assert compose(Circuit(L2), c) == c
    with pytest.raises(ArgumentError):
        compose(c, Circuit(L4))


def test_compose_with_inverse_is_identity():
    c = Circuit(L4, (h(0), cx(0, 2), rz(3, 0.7), rx(1, -1.1, ((2, 0),)), cphase(1, 3, 0.4), sx(2)))
    u = dense_unitary(compose(c, inverse(c)))
    assert np.allclose(u, np.eye(16), atol=1e-10)


def test_x_squared():
    u = dense_unitary(Circuit(L2, (x(0), x(0))))
    assert np.allclose(u, np.eye(4))


def test_controlled_x_is_cx():
    c = controlled(Circuit(L2, (x(1),)), [(0, 1)])
    assert c.gates == (cx(0, 1),)
    assert c.gates[0].name == "CX"


def test_controlled_polarity_zero_inactive_on_one():
    c = controlled(Circuit(L2, (rx(1, 0.9),)), [(0, 0)])
    u = dense_unitary(c)
    for psi1 in (basis_state(1, 2), basis_state(3, 2)):
        assert np.allclose(u @ psi1, psi1)


def test_controlled_empty_and_overlap():
    c = Circuit(L2, (rx(1, 0.9),))
    assert controlled(c, []) == c
    with pytest.raises(ArgumentError):
        controlled(c, [(1, 1)])


def test_controlled_keeps_global_phase_relative():
    c = Circuit(L2, (rz(1, 0.3),), global_phase=0.4)
    cc = controlled(c, [(0, 1)])
    u = dense_unitary(cc)
    sub = dense_unitary(Circuit(RegisterLayout.of(("q", 1)), (rz(0, 0.3),), 0.4))
    # control is bit 0: odd indices are the active block
    assert np.allclose(u[np.ix_([1, 3], [1, 3])], sub)
    assert np.allclose(u[np.ix_([0, 2], [0, 2])], np.eye(2))


def test_inverse_examples():
    c = Circuit(L2, (rz(0, 0.25),))
    assert inverse(c).gates == (rz(0, -0.25),)
    mcx = Circuit(L4, (x(3, ((0, 1), (1, 1), (2, 1))),))
    assert inverse(mcx) == mcx
    assert inverse(Circuit(L2, (sx(0),))).gates[0].kind == "SXDG"


def test_inverse_adder_round_trip():
    add = build_constant_adder(5, list(range(4)), layout=L4)
    u = dense_unitary(compose(inverse(add), add))
    assert np.allclose(u, np.eye(16), atol=1e-10)


def test_h_decomposition_matrix():
    b, m = decompose_to_basis(Circuit(RegisterLayout.of(("q", 1)), (h(0),)))
    assert [g.name for g in b.gates] == ["RZ", "SX", "RZ"]
    assert [g.angle for g in b.gates if g.name == "RZ"] == [math.pi / 2, math.pi / 2]
    hm = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert equal_up_to_phase(dense_unitary(Circuit(b.layout, b.gates)), hm, tol=1e-12)
    assert np.allclose(dense_unitary(b), hm, atol=1e-12)


def test_cphase_decomposition():
    c = Circuit(L2, (cphase(0, 1, 0.83),))
    b, m = decompose_to_basis(c)
    assert m.counts == {"CX": 2, "RZ": 3}
    exact = np.diag([1, 1, 1, np.exp(0.83j)])
    assert np.allclose(dense_unitary(b), exact, atol=1e-12)


def test_mcx_three_controls():
    c = Circuit(L4, (x(3, ((0, 1), (1, 1), (2, 1))),))
    b, m = decompose_to_basis(c)
    # frozen count of our ancilla-free decomposition
    assert m.size == 75
    assert is_basis(b)
    assert np.allclose(dense_unitary(b), dense_unitary(c), atol=1e-10)


def test_metrics_depth_and_size():
    c = Circuit(L4, (x(0), x(1), cx(0, 1), x(2), cx(1, 2)))
    m = metrics(c)
    assert m.size == 5 and m.depth == 3 and m.width == 4
    assert circuit_depth([]) == 0


# --------------------------------------------------------------- properties

ANGLE = st.floats(-7, 7, allow_nan=False).filter(lambda a: abs(a) > 1e-3)


@st.composite
def gate_st(draw, width):
    kind = draw(st.sampled_from(["X", "SX", "SXDG", "H", "RZ", "RX", "RY", "PHASE", "SWAP"]))
    qubits = draw(st.permutations(range(width)))
    ntarg = 2 if kind == "SWAP" else 1
    ncon = draw(st.integers(0, min(2, width - ntarg)))
    targets = tuple(qubits[:ntarg])
    controls = tuple((q, draw(st.integers(0, 1))) for q in qubits[ntarg: ntarg + ncon])
    angle = draw(ANGLE) if kind in ("RZ", "RX", "RY", "PHASE") else None
    return Gate(kind, targets, controls, angle)


@st.composite
def circuit_st(draw, max_width=4, max_gates=12):
    width = draw(st.integers(2, max_width))
    gates = draw(st.lists(gate_st(width), max_size=max_gates))
    # repeated gates exercise the cancellation and merging passes
    if gates and draw(st.booleans()):
        gates = gates + [g.adjoint() for g in reversed(gates[-3:])]
    return Circuit(RegisterLayout.of(("q", width)), tuple(gates), draw(st.floats(-3, 3)))


@settings(max_examples=80, deadline=None)
@given(circuit_st())
def test_decomposition_preserves_unitary(c):
    for optimize in (False, True):
        b, m = decompose_to_basis(c, optimize=optimize)
        assert {g.name for g in b.gates} <= BASIS
        assert m.size == len(b.gates)
        # exact including the tracked global phase
        assert np.allclose(dense_unitary(b), dense_unitary(c), atol=1e-9)


@settings(max_examples=80, deadline=None)
@given(circuit_st())
def test_peephole_exact(c):
    gates, ph = peephole(c.gates)
    assert len(gates) <= len(c.gates)
    assert np.allclose(dense_unitary(Circuit(c.layout, tuple(gates), c.global_phase + ph)), dense_unitary(c), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(circuit_st(max_width=3))
def test_controlled_inverse_commute(c):
    wide = Circuit(RegisterLayout.of(("q", c.width + 1)), c.gates, c.global_phase)
    k = [(c.width, 1)]
    assert np.allclose(
        dense_unitary(controlled(inverse(wide), k)),
        dense_unitary(inverse(controlled(wide, k))),
        atol=1e-9,
    )


@settings(max_examples=40, deadline=None)
@given(circuit_st())
def test_inverse_involution(c):
    assert inverse(inverse(c)) == c


@settings(max_examples=40, deadline=None)
@given(circuit_st(), st.data())
def test_metrics_relabel_invariant(c, data):
    perm = data.draw(st.permutations(range(c.width)))

    def relabel(g):
        return Gate(g.kind, tuple(perm[t] for t in g.targets), tuple((perm[q], p) for q, p in g.controls), g.angle)

    d = Circuit(c.layout, tuple(relabel(g) for g in c.gates), c.global_phase)
    ma = decompose_to_basis(c)[1]
    mb = decompose_to_basis(d)[1]
    assert (ma.size, ma.depth) == (mb.size, mb.depth)


@settings(max_examples=40, deadline=None)
@given(circuit_st())
def test_dump_round_trip(c):
    text = dump_circuit(c)
    back = parse_circuit(text)
    assert back.layout == c.layout
    assert len(back.gates) == len(c.gates)
    assert np.allclose(dense_unitary(back), dense_unitary(c), atol=1e-12)


def test_dump_format():
    c = Circuit(RegisterLayout.of(("x", 2), ("f", 1)), (cphase(0, 1, 0.5), x(2, ((0, 0), (1, 1))), swap(0, 1)))
    lines = dump_circuit(c).splitlines()
    assert lines[0] == "LAYOUT x:2 f:1"
    assert lines[2] == "GATE CPHASE 0.5 t=1 c=0:1"
    assert lines[3] == "GATE MCX t=2 c=0:0,1:1"
    assert lines[4] == "GATE SWAP t=0,1 c="


def test_parse_errors():
    with pytest.raises(InputError):
        parse_circuit("LAYOUT q:2\nGATE FOO t=0\n")
    with pytest.raises(InputError):
        parse_circuit("GATE X t=0\n")
