"""Statevector simulation of the hardware-style training primitives.

This module mirrors what a gate-model device would run: the controlled-SWAP
interference circuit that turns fidelity into a measurable zero-frequency
(p0 = 1/2 + F/2), the coherent layer-by-layer feedforward that defers all
partial traces, and a finite-difference ascent over the Pauli coefficients of
every perceptron generator.  It exists alongside the dense-channel modules as
an independent evaluation route; the two must agree, and the tests hold them
to that.

States are 1-D complex amplitude vectors with the first qubit as the most
significant index bit, matching the package-wide convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import expm_i_hermitian
from .network import Network, Perceptron

DEFAULT_QUBIT_CAP = 16

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
# control qubit first: |0><0| ⊗ I + |1><1| ⊗ SWAP
_CSWAP = np.block(
    [[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), _SWAP]]
).astype(complex)

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def n_qubits_of(state: np.ndarray) -> int:
    n = int(state.shape[0]).bit_length() - 1
    if 1 << n != state.shape[0]:
        raise ValueError(f"state length {state.shape[0]} is not a power of two")
    return n


def apply_gate(state: np.ndarray, gate: np.ndarray, qubits) -> np.ndarray:
    """Apply a k-qubit gate to the listed register positions (exact, unitary)."""
    qubits = tuple(int(q) for q in qubits)
    n = n_qubits_of(state)
    k = len(qubits)
    if gate.shape != (1 << k, 1 << k):
        raise ValueError(f"gate shape {gate.shape} does not match {k} qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"invalid gate qubits {qubits} for {n}-qubit state")
    tens = state.reshape((2,) * n)
    tens = np.moveaxis(tens, qubits, range(k))
    moved = tens.shape
    out = gate @ tens.reshape(1 << k, -1)
    out = np.moveaxis(out.reshape(moved), range(k), qubits)
    return np.ascontiguousarray(out).reshape(-1)


def apply_hadamard(state: np.ndarray, qubit: int) -> np.ndarray:
    return apply_gate(state, HADAMARD, (qubit,))


def apply_cswap(state: np.ndarray, control: int, block_a, block_b) -> np.ndarray:
    """Controlled swap of two equal-size disjoint qubit blocks."""
    block_a = tuple(int(q) for q in block_a)
    block_b = tuple(int(q) for q in block_b)
    if len(block_a) != len(block_b):
        raise ValueError("swap blocks must have equal size")
    touched = (control,) + block_a + block_b
    if len(set(touched)) != len(touched):
        raise ValueError("control and swap blocks must be pairwise disjoint")
    for a, b in zip(block_a, block_b):
        state = apply_gate(state, _CSWAP, (control, a, b))
    return state


def reduced_density_matrix(state: np.ndarray, keep, n_qubits: int = None) -> np.ndarray:
    """Density matrix of the kept qubits of a pure state."""
    n = n_qubits_of(state) if n_qubits is None else n_qubits
    keep = tuple(int(q) for q in keep)
    rest = [q for q in range(n) if q not in keep]
    tens = state.reshape((2,) * n).transpose(rest + list(keep))
    psi = tens.reshape(1 << len(rest), 1 << len(keep))
    return psi.T @ psi.conj()


@dataclass(frozen=True)
class ShotResult:
    """Outcome of a sampled SWAP-test run.

    ``p0_exact`` is the analytic zero-probability of the simulated circuit;
    ``zeros`` is the sampled zero count.  The fidelity estimate 2*p0_hat - 1
    is kept both raw and clamped into [-1, 1].
    """

    shots: int
    zeros: int
    p0_exact: float

    @property
    def p0_estimate(self) -> float:
        return self.zeros / self.shots

    @property
    def fidelity_raw(self) -> float:
        return 2.0 * self.p0_estimate - 1.0

    @property
    def fidelity(self) -> float:
        return float(min(max(self.fidelity_raw, -1.0), 1.0))

    @property
    def fidelity_exact(self) -> float:
        return 2.0 * self.p0_exact - 1.0


def swap_test(phi: np.ndarray, preparation: np.ndarray, shots: int,
              rng: np.random.Generator) -> ShotResult:
    """Interference estimate of <phi| rho |phi> against a purified rho.

    ``preparation`` is a pure state on m + r qubits whose first m qubits
    carry the mixed state of interest.  The circuit is simulated exactly
    (ancilla Hadamard, block controlled-SWAP, Hadamard); the zero count is
    then drawn from Binomial(shots, p0) with p0 = 1/2 + F/2.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    m = n_qubits_of(phi)
    n_prep = n_qubits_of(preparation)
    if n_prep < m:
        raise ValueError("preparation register is smaller than the reference state")
    state = np.kron(np.array([1.0, 0.0], dtype=complex), np.kron(phi, preparation))
    state = apply_hadamard(state, 0)
    state = apply_cswap(state, 0, range(1, 1 + m), range(1 + m, 1 + 2 * m))
    state = apply_hadamard(state, 0)
    half = state.shape[0] // 2
    p0 = float(np.linalg.norm(state[:half]) ** 2)
    zeros = int(rng.binomial(shots, min(max(p0, 0.0), 1.0)))
    return ShotResult(shots=shots, zeros=zeros, p0_exact=p0)


def subroutine2_feedforward(net: Network, phi_in: np.ndarray,
                            max_qubits: int = DEFAULT_QUBIT_CAP) -> np.ndarray:
    """Coherent network pass: every perceptron applied, no partial traces.

    Returns the global pure state over all layers (input register first,
    output register last).  The reduction onto the output register equals the
    channel-composed network output.
    """
    widths = net.widths
    total = sum(widths)
    if total > max_qubits:
        raise ValueError(
            f"coherent pass needs {total} qubits, above the cap of {max_qubits}"
        )
    if phi_in.shape != (1 << widths[0],):
        raise ValueError("input state does not match the input register")
    state = np.zeros(1 << total, dtype=complex)
    state[:: 1 << (total - widths[0])] = phi_in  # phi ⊗ |0...0> on hidden+out
    offsets = np.cumsum((0,) + widths)
    for k in range(net.transition_count):
        for p in net.layers[k]:
            positions = tuple(range(offsets[k], offsets[k + 1])) + tuple(
                offsets[k + 1] + t for t in p.targets
            )
            state = apply_gate(state, p.unitary, positions)
    return state


def output_density(net: Network, state: np.ndarray) -> np.ndarray:
    """Reduced density matrix of the output register of a coherent pass."""
    total = sum(net.widths)
    return reduced_density_matrix(state, range(total - net.widths[-1], total), total)


def cost_from_sampling(net: Network, data, shots: int, rng: np.random.Generator,
                       exact: bool = False) -> float:
    """Estimate the averaged output fidelity by SWAP tests on coherent passes.

    Per pair, the global network state acts as the purification of the output
    state (output register moved to the front).  Raw (unclamped) fidelity
    estimates are averaged, keeping the estimator unbiased; with
    ``exact=True`` the analytic p0 replaces sampling and the result equals
    the dense-channel cost.
    """
    total = sum(net.widths)
    m_out = net.widths[-1]
    n_pairs = len(data)
    if n_pairs == 0:
        raise ValueError("dataset is empty")
    estimates = []
    for i in range(n_pairs):
        state = subroutine2_feedforward(net, data.inputs[i])
        tens = state.reshape((2,) * total)
        out_axes = list(range(total - m_out, total))
        rest = list(range(total - m_out))
        prep = np.ascontiguousarray(tens.transpose(out_axes + rest)).reshape(-1)
        result = swap_test(data.outputs[i], prep, shots, rng)
        estimates.append(result.fidelity_exact if exact else result.fidelity_raw)
    return float(np.mean(estimates))


# ---------------------------------------------------------------------------
# Pauli parametrisation and finite-difference ascent
# ---------------------------------------------------------------------------

def pauli_string(index: int, n_qubits: int) -> np.ndarray:
    """Tensor product of Paulis; base-4 digits of ``index``, first qubit most
    significant (0 = identity, 1 = x, 2 = y, 3 = z)."""
    out = np.array([[1.0]], dtype=complex)
    for pos in range(n_qubits):
        digit = (index >> (2 * (n_qubits - 1 - pos))) & 3
        out = np.kron(out, PAULIS[digit])
    return out


_PAULI_BASIS_CACHE: dict = {}


def pauli_basis(n_qubits: int) -> np.ndarray:
    """All 4**n Pauli strings stacked as a (4**n, 2**n, 2**n) array (cached)."""
    if n_qubits not in _PAULI_BASIS_CACHE:
        basis = np.stack([pauli_string(i, n_qubits) for i in range(4**n_qubits)])
        basis.setflags(write=False)
        _PAULI_BASIS_CACHE[n_qubits] = basis
    return _PAULI_BASIS_CACHE[n_qubits]


def perceptron_arities(widths) -> list:
    widths = tuple(widths)
    return [
        widths[k] + 1
        for k in range(len(widths) - 1)
        for _ in range(widths[k + 1])
    ]


def param_count(widths) -> int:
    return sum(4**a for a in perceptron_arities(widths))


def params_to_network(widths, x: np.ndarray) -> Network:
    """Build U = exp(i K) perceptrons from stacked Pauli coefficients.

    Coefficients are ordered perceptron by perceptron (transitions ascending,
    slots ascending), each block holding 4**arity real numbers indexed like
    :func:`pauli_string`.
    """
    widths = tuple(int(w) for w in widths)
    x = np.asarray(x, dtype=float)
    if x.shape != (param_count(widths),):
        raise ValueError(f"expected {param_count(widths)} parameters, got {x.shape}")
    layers = []
    pos = 0
    for k in range(len(widths) - 1):
        layer = []
        arity = widths[k] + 1
        dim = 1 << arity
        for j in range(widths[k + 1]):
            block = x[pos : pos + 4**arity]
            pos += 4**arity
            generator = np.tensordot(block, pauli_basis(arity), axes=1)
            layer.append(Perceptron(expm_i_hermitian(generator, 1.0), (j,)))
        layers.append(tuple(layer))
    return Network(widths, layers, validate=False)


def network_to_params(net: Network) -> np.ndarray:
    """Pauli coefficients of the principal logarithm of every perceptron.

    Round-trips the unitaries exactly; the coefficients themselves need not
    match those used to build the network, since e^{iK} only determines K up
    to eigenphase branches.
    """
    blocks = []
    for layer in net.layers:
        for p in layer:
            arity = p.arity
            dim = 1 << arity
            evals, q = np.linalg.eig(p.unitary)
            generator = (q * np.angle(evals)) @ np.linalg.inv(q)
            generator = (generator + generator.conj().T) / 2
            basis = pauli_basis(arity)
            coeffs = np.real(np.einsum("kij,ji->k", basis, generator)) / dim
            blocks.append(coeffs)
    return np.concatenate(blocks)


def exact_cost_of_params(widths, x: np.ndarray, data) -> float:
    from .training import cost

    return cost(params_to_network(widths, x), data)


def fd_gradient(widths, x: np.ndarray, data, alpha: int, probe: float,
                base_cost: float = None) -> float:
    """Forward-difference derivative of the exact cost along one coefficient."""
    if probe <= 0:
        raise ValueError("probe must be > 0")
    x = np.asarray(x, dtype=float)
    if not 0 <= alpha < x.shape[0]:
        raise IndexError(f"parameter index {alpha} out of range")
    if base_cost is None:
        base_cost = exact_cost_of_params(widths, x, data)
    moved = x.copy()
    moved[alpha] += probe
    return (exact_cost_of_params(widths, moved, data) - base_cost) / probe


def fd_gradient_vector(widths, x: np.ndarray, data, probe: float) -> np.ndarray:
    """All forward-difference derivatives (one extra cost evaluation each)."""
    base = exact_cost_of_params(widths, x, data)
    return np.array(
        [fd_gradient(widths, x, data, alpha, probe, base_cost=base) for alpha in range(len(x))]
    )


def ascent_step(x: np.ndarray, gradient: np.ndarray, lam: float) -> np.ndarray:
    """x + gradient / (2 lambda): the finite-difference training update."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    return np.asarray(x, dtype=float) + np.asarray(gradient, dtype=float) / (2.0 * lam)


# ---------------------------------------------------------------------------
# resource accounting
# ---------------------------------------------------------------------------

def resource_count(net: Network, pairs: int, shots: int) -> dict:
    """Gate, perceptron, and qubit budget of the sampled cost estimation.

    Per repetition the device runs one coherent pass (all perceptrons), two
    Hadamards, and one controlled block swap, so pairs * shots repetitions
    cost pairs * shots * (sum of layer perceptron counts + 3) operations.
    The qubit bound covers two coherent layers plus the swap-test reference
    register and ancilla.  The block swap needs m**2 elementary swaps on a
    line, m with unconstrained connectivity.
    """
    widths = net.widths
    per_pass = sum(len(layer) for layer in net.layers)
    width = max(widths)
    m_out = widths[-1]
    repetitions = pairs * shots
    return {
        "pairs": int(pairs),
        "shots_per_pair": int(shots),
        "repetitions": repetitions,
        "perceptrons_per_pass": per_pass,
        "gates_and_perceptrons": repetitions * (per_pass + 3),
        "qubit_bound": 2 * width + m_out + 1,
        "block_swap_size": m_out,
        "swaps_on_a_line": m_out * m_out,
        "swaps_unconstrained": m_out,
    }


def format_resource_report(counts: dict) -> str:
    return "\n".join(f"{key} = {counts[key]}" for key in counts) + "\n"
