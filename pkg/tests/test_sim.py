import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense import dense_unitary, evolve
from hypercube_mixer.circuit import Circuit, RegisterLayout, cx, decompose_to_basis, h, rx, rz, sx, x
from hypercube_mixer.errors import ArgumentError, CapacityError
from hypercube_mixer.mixers import MixerConfig, build_mixer
from hypercube_mixer.oracle import exact_mixer_state, uniform_feasible_state
from hypercube_mixer.problem import load_problem
from hypercube_mixer.sim import (
    DensityMatrix,
    NoiseModel,
    Statevector,
    apply_kraus,
    fidelity,
    partial_trace,
    run_density,
    run_statevector,
    run_trajectories,
    superoperator,
    trace_distance,
    trajectory_fidelity,
)

L1 = RegisterLayout.of(("q", 1))
I2 = np.eye(2)
PX = np.array([[0, 1], [1, 0]])
PY = np.array([[0, -1j], [1j, 0]])
PZ = np.diag([1, -1])


def random_state(width, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << width) + 1j * rng.normal(size=1 << width)
    return Statevector(v / np.linalg.norm(v))


def toy_circuit(width=6, depth=6, seed=0):
    rng = np.random.default_rng(seed)
    gates = []
    for _ in range(depth):
        for q in range(width):
            gates += [rz(q, rng.uniform(-3, 3)), sx(q)]
        for q in range(0, width - 1, 2):
            gates.append(cx(q, q + 1))
        for q in range(1, width - 1, 2):
            gates.append(cx(q + 1, q))
    return Circuit(RegisterLayout.of(("q", width)), tuple(gates))


# ------------------------------------------------------------- statevector

def test_x_flips_zero():
    out = run_statevector(Circuit(L1, (x(0),)))
    assert np.allclose(out.data, [0, 1])


@pytest.mark.parametrize("beta", [0.0, 0.4, 1.3, -2.2])
def test_rx_closed_form(beta):
    out = run_statevector(Circuit(L1, (rx(0, 2 * beta),)))
    assert np.allclose(out.data, [math.cos(beta), -1j * math.sin(beta)], atol=1e-14)


def test_statevector_matches_independent_evolution_on_mixer():
    problem = load_problem("1n")
    mc = build_mixer(problem, MixerConfig("mod", 3.0, 3))
    basis, m = decompose_to_basis(mc.circuit)
    assert m.width == 11
    psi = uniform_feasible_state(problem).embed(basis.width)
    ours = run_statevector(basis, psi).data
    ref = evolve(basis, psi.data.copy())
    assert np.allclose(ours, ref, atol=1e-10)


def test_statevector_guards():
    with pytest.raises(CapacityError):
        run_statevector(Circuit(RegisterLayout.of(("q", 27))))
    with pytest.raises(ArgumentError):
        run_statevector(Circuit(L1), Statevector.zero(2))
    with pytest.raises(ArgumentError):
        Statevector([1, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_norm_preserved(seed):
    c = toy_circuit(width=4, depth=3, seed=seed)
    out = run_statevector(c, random_state(4, seed))
    assert abs(np.linalg.norm(out.data) - 1) < 1e-12


# ---------------------------------------------------------------- density

def test_density_noiseless_matches_statevector():
    c = toy_circuit(width=4, depth=4, seed=2)
    psi = random_state(4, 5)
    rho = run_density(c, psi, NoiseModel.none()).data
    phi = run_statevector(c, psi).data
    assert np.allclose(rho, np.outer(phi, phi.conj()), atol=1e-12)


def test_density_guard_mentions_trajectories():
    with pytest.raises(CapacityError, match="trajector"):
        run_density(Circuit(RegisterLayout.of(("q", 14))))


@pytest.mark.parametrize("seed", range(3))
def test_full_depolarization_convention(seed):
    psi = random_state(1, seed)
    rho = np.outer(psi.data, psi.data.conj())
    c = Circuit(L1, (rz(0, 0.0),))
    # with the uniform-Pauli convention the fully mixing point is p = 3/4
    out = run_density(c, psi, NoiseModel.depolarizing(0.75)).data
    assert np.allclose(out, I2 / 2, atol=1e-12)
    out = run_density(c, psi, NoiseModel.depolarizing(1.0)).data
    assert np.allclose(out, (2 * I2 - rho) / 3, atol=1e-12)


def test_sx_with_depolarizing_entrywise():
    p = 1e-5
    psi = random_state(1, 11)
    rho = np.outer(psi.data, psi.data.conj())
    u = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
    s = u @ rho @ u.conj().T
    expected = (1 - p) * s + p / 3 * (PX @ s @ PX + PY @ s @ PY + PZ @ s @ PZ)
    out = run_density(Circuit(L1, (sx(0),)), psi, NoiseModel.depolarizing(p)).data
    assert np.allclose(out, expected, atol=1e-15)


def test_two_qubit_depolarizing_entrywise():
    p = 0.01
    lay = RegisterLayout.of(("q", 2))
    psi = random_state(2, 4)
    u = dense_unitary(Circuit(lay, (cx(0, 1),)))
    s = u @ np.outer(psi.data, psi.data.conj()) @ u.conj().T
    paulis = [I2, PX, PY, PZ]
    mixed = sum(np.kron(a, b) @ s @ np.kron(a, b).conj().T for a in paulis for b in paulis) - s
    expected = (1 - p) * s + p / 15 * mixed
    out = run_density(Circuit(lay, (cx(0, 1),)), psi, NoiseModel.depolarizing(p)).data
    assert np.allclose(out, expected, atol=1e-15)


def test_damping_closed_form():
    g, lam = 0.1, 0.2
    psi = random_state(1, 8)
    rho = np.outer(psi.data, psi.data.conj())
    out = run_density(Circuit(L1, (rz(0, 0.0),)), psi, NoiseModel.damping(g, lam)).data
    c = math.sqrt((1 - g) * (1 - lam))
    expected = np.array([[rho[0, 0] + g * rho[1, 1], c * rho[0, 1]], [c * rho[1, 0], (1 - g) * rho[1, 1]]])
    assert np.allclose(out, expected, atol=1e-15)


@pytest.mark.parametrize("noise", [NoiseModel.depolarizing(0.2), NoiseModel.damping(0.3, 0.1), NoiseModel.none()])
@pytest.mark.parametrize("k", [1, 2])
def test_kraus_completeness(noise, k):
    ops = noise.kraus(k)
    total = sum(K.conj().T @ K for K in ops)
    assert np.allclose(total, np.eye(1 << k), atol=1e-12)


def test_noise_model_validation():
    with pytest.raises(ArgumentError):
        NoiseModel.depolarizing(1.5)
    with pytest.raises(ArgumentError):
        NoiseModel("bitflip")
    assert NoiseModel.damping(0.1).p_p == 0.1
    assert NoiseModel.from_kind("none", 0.3).is_trivial


def test_superoperator_matches_kraus_sum():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    ops = NoiseModel.damping(0.2, 0.3).kraus(2)
    via_super = (superoperator(ops) @ rho.reshape(-1)).reshape(4, 4)
    assert np.allclose(via_super, apply_kraus(rho, ops))


@pytest.mark.parametrize("noise", [NoiseModel.depolarizing(1e-3), NoiseModel.damping(1e-3)])
def test_trace_drift_over_many_channels(noise):
    lay = RegisterLayout.of(("q", 2))
    gates = tuple([sx(0), cx(0, 1), rz(1, 0.37), x(0)] * 25_000)
    out = run_density(Circuit(lay, gates), random_state(2, 0), noise)
    assert abs(out.trace - 1) <= 1e-9


def test_density_outputs_positive():
    c = toy_circuit(width=5, depth=5, seed=9)
    for noise in (NoiseModel.depolarizing(0.05), NoiseModel.damping(0.05)):
        out = run_density(c, random_state(5, 1), noise)
        assert out.eigenvalues().min() >= -1e-7
        assert np.allclose(out.data, out.data.conj().T, atol=1e-12)


def test_density_monotone_in_noise_on_toy_circuit():
    c = toy_circuit(width=4, depth=4, seed=3)
    psi = random_state(4, 2)
    ideal = run_statevector(c, psi)
    for kind in ("depolarizing", "damping"):
        fids = [fidelity(run_density(c, psi, NoiseModel.from_kind(kind, p)), ideal)
                for p in (0, 1e-4, 1e-3, 1e-2, 5e-2)]
        assert all(b <= a + 1e-12 for a, b in zip(fids, fids[1:]))


# ------------------------------------------------------------ trajectories

def test_trajectories_noiseless_exact():
    c = toy_circuit(width=4, depth=2)
    psi = random_state(4, 3)
    est = run_trajectories(c, psi, NoiseModel.none(), shots=5, seed=1)
    phi = run_statevector(c, psi).data
    assert np.allclose(est.data, np.outer(phi, phi.conj()), atol=1e-12)


@pytest.mark.parametrize("noise", [NoiseModel.depolarizing(1e-4), NoiseModel.damping(1e-4)])
def test_trajectories_converge_to_density(noise):
    c = toy_circuit(width=6, depth=6, seed=1)
    psi = random_state(6, 7)
    exact = run_density(c, psi, noise)
    est = run_trajectories(c, psi, noise, shots=20000, seed=123)
    assert fidelity(est, exact) >= 0.999


def test_trajectories_deterministic():
    c = toy_circuit(width=4, depth=3)
    psi = random_state(4, 0)
    noise = NoiseModel.depolarizing(0.02)
    a = run_trajectories(c, psi, noise, shots=200, seed=42).data
    b = run_trajectories(c, psi, noise, shots=200, seed=42).data
    assert np.array_equal(a, b)
    d = run_trajectories(c, psi, noise, shots=200, seed=43).data
    assert not np.array_equal(a, d)


@pytest.mark.parametrize("noise", [NoiseModel.depolarizing(0.01), NoiseModel.damping(0.02)])
def test_trajectory_fidelity_unbiased(noise):
    c = toy_circuit(width=4, depth=3, seed=5)
    psi = random_state(4, 6)
    ideal = run_statevector(c, psi)
    exact = fidelity(run_density(c, psi, noise), ideal)
    keep = list(range(4))
    means, errs = [], []
    for seed in range(8):
        m, e = trajectory_fidelity(c, psi, noise, 500, seed, ideal, keep)
        means.append(m)
        errs.append(e)
    pooled = np.mean(means)
    stderr = math.sqrt(sum(e * e for e in errs)) / len(errs)
    assert abs(pooled - exact) <= 3 * stderr


def test_trajectories_reject_zero_shots():
    with pytest.raises(ArgumentError):
        run_trajectories(toy_circuit(2, 1), random_state(2, 0), NoiseModel.none(), shots=0, seed=1)


# ---------------------------------------------------------------- fidelity

def test_fidelity_examples():
    zero = Statevector.zero(1)
    one = Statevector.basis(1, 1)
    assert fidelity(zero.to_density(), zero.to_density()) == pytest.approx(1)
    assert fidelity(zero.to_density(), one.to_density()) == pytest.approx(0, abs=1e-12)
    mixed = DensityMatrix(I2 / 2)
    assert fidelity(mixed, zero.to_density()) == pytest.approx(0.5)
    assert fidelity(mixed, zero) == pytest.approx(0.5)


def test_fidelity_dimension_mismatch():
    with pytest.raises(ArgumentError):
        fidelity(Statevector.zero(1), Statevector.zero(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_uhlmann_pure_limit_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    psi = random_state(2, seed)
    sigma = np.outer(psi.data, psi.data.conj())
    f_mixed = fidelity(DensityMatrix(rho), DensityMatrix(sigma))
    f_pure = fidelity(DensityMatrix(rho), psi)
    assert f_mixed == pytest.approx(f_pure, abs=1e-7)
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    tau = b @ b.conj().T
    tau /= np.trace(tau)
    assert fidelity(DensityMatrix(rho), DensityMatrix(tau)) == pytest.approx(
        fidelity(DensityMatrix(tau), DensityMatrix(rho)), abs=1e-7)


def test_trace_distance_examples():
    zero = Statevector.zero(1)
    one = Statevector.basis(1, 1)
    assert trace_distance(zero, zero) == pytest.approx(0, abs=1e-15)
    assert trace_distance(zero, one) == pytest.approx(1)
    assert trace_distance(DensityMatrix(I2 / 2), zero) == pytest.approx(0.5)
    with pytest.raises(ArgumentError):
        trace_distance(zero, Statevector.zero(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_trace_distance_of_pure_states(seed):
    a = random_state(3, seed)
    b = random_state(3, seed + 1)
    assert trace_distance(a, b) == pytest.approx(math.sqrt(1 - fidelity(a, b)), abs=1e-9)
    assert trace_distance(a.to_density(), b) == pytest.approx(trace_distance(b, a), abs=1e-12)


def test_partial_trace_of_product():
    a = random_state(1, 1)
    b = random_state(2, 2)
    joint = Statevector(np.kron(b.data, a.data))  # a on qubit 0, b on qubits 1-2
    red = joint.reduced([0])
    assert np.allclose(red.data, np.outer(a.data, a.data.conj()))
    red_b = partial_trace(joint.to_density().data, 3, [1, 2])
    assert np.allclose(red_b, np.outer(b.data, b.data.conj()))


def test_mixer_reference_fidelity_noiseless():
    problem = load_problem("4n")
    mc = build_mixer(problem, MixerConfig("std-seq", 3.0, 3))
    basis, m = decompose_to_basis(mc.circuit)
    psi0 = uniform_feasible_state(problem)
    ideal = exact_mixer_state(problem, 3.0, psi0)
    rho = run_density(basis, psi0.embed(m.width), NoiseModel.none())
    f = fidelity(rho.reduced(list(mc.x_qubits)), ideal)
    g = fidelity(run_statevector(basis, psi0.embed(m.width)).reduced(list(mc.x_qubits)), ideal)
    assert f == pytest.approx(g, abs=1e-12)
