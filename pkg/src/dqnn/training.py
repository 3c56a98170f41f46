"""Fidelity cost, parameter-matrix gradients, and the training loop.

Training maximises the averaged output fidelity

    C = (1/N) sum_x <phi_x_target| rho_x_out |phi_x_target>

by steepest ascent on the unitary group: every perceptron is updated as
U -> exp(i * epsilon * K) U, where the Hermitian generator K is assembled
from the commutator of the forward state with the back-propagated target,

    M = [ (prefix) (rho_prev ⊗ |0..0><0..0|) (prefix)†,
          (suffix)† (I ⊗ sigma_cur) (suffix) ],
    K = eta * (2**m_prev / N) * sum_x  i * tr_rest(M_x),

with tr_rest keeping only the qubits the perceptron touches.  All K matrices
of a round are computed against the round-start network and applied together.

Two implementations coexist: the per-pair functions
(:func:`commutator_matrix_M`, :func:`parameter_matrix_K`) follow the formulas
literally, while the trainer's round loop batches all pairs into stacked
arrays and contracts traces without materialising the commutators.  The test
suite pins both routes against each other.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .linalg import (
    expm_i_hermitian,
    partial_trace,
    split_rng,
    unitarity_error,
    zero_projector,
)
from .network import Network, Perceptron

log = logging.getLogger(__name__)

# polar re-projection threshold for accumulated unitarity drift
DRIFT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Dataset:
    """Training pairs of pure states, with per-pair corruption flags."""

    inputs: np.ndarray  # (N, d_in) complex
    outputs: np.ndarray  # (N, d_out) complex
    corrupted: np.ndarray = None  # (N,) bool

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=complex)
        outputs = np.asarray(self.outputs, dtype=complex)
        if inputs.ndim != 2 or outputs.ndim != 2:
            raise ValueError("inputs and outputs must be 2-D state stacks")
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError("inputs and outputs must pair up one-to-one")
        corrupted = self.corrupted
        if corrupted is None:
            corrupted = np.zeros(inputs.shape[0], dtype=bool)
        corrupted = np.asarray(corrupted, dtype=bool)
        if corrupted.shape != (inputs.shape[0],):
            raise ValueError("corrupted mask must have one entry per pair")
        for arr in (inputs, outputs, corrupted):
            arr.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "corrupted", corrupted)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, n: int) -> "Dataset":
        """First n pairs."""
        return Dataset(self.inputs[:n], self.outputs[:n], self.corrupted[:n])

    def good_pairs(self) -> "Dataset":
        keep = ~self.corrupted
        return Dataset(self.inputs[keep], self.outputs[keep], self.corrupted[keep])


@dataclass(frozen=True)
class TrainingConfig:
    """Step size, learning rate, round count, and the recorded seed.

    ``eta`` is the learning rate (the reciprocal of the Lagrange multiplier
    that keeps the ascent direction finite).  ``seed`` is bookkeeping for the
    history: the trainer itself is deterministic, randomness enters only
    through network initialisation and data generation.
    """

    epsilon: float
    eta: float
    rounds: int
    seed: int = 0
    record_k_norms: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")


@dataclass(frozen=True)
class TrainingHistory:
    """Cost per round (round 0 included), optional K norms, final network."""

    costs: tuple
    config: TrainingConfig
    final_network: Network
    k_norms: tuple = None  # per executed round: tuple of Frobenius norms
    projections: int = 0

    def k_norm_labels(self) -> tuple:
        labels = []
        for k, layer in enumerate(self.final_network.layers):
            for j in range(len(layer)):
                labels.append(f"k_norm_l{k}_j{j}")
        return tuple(labels)

    def write_csv(self, path) -> None:
        """Delimited history table: round, cost, optional per-perceptron norms."""
        fieldnames = ["round", "cost"]
        if self.k_norms is not None:
            fieldnames += list(self.k_norm_labels())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fieldnames)
            for r, c in enumerate(self.costs):
                row = [r, repr(float(c))]
                if self.k_norms is not None:
                    if r < len(self.k_norms):
                        row += [repr(float(v)) for v in self.k_norms[r]]
                    else:
                        row += [""] * len(self.k_norm_labels())
                writer.writerow(row)


# ---------------------------------------------------------------------------
# batched round computation
# ---------------------------------------------------------------------------
#
# The round loop never materialises two-layer operators per pair.  For a
# transition with source dimension dp and destination dimension dc, write
# Z = I ⊗ sigma and let
#
#   T_j = (U_j ... U_1)[:, dest register |0..0>]   (thin D x dp "loader"),
#   W_j = U_n ... U_{j+1}                          (suffix product),
#
# so the forward state after perceptron j is A_j = T_j rho T_j† and the
# pulled-back target is B_j = W_j† Z W_j.  The gradient only needs
# tr_rest(A_j B_j - B_j A_j) on the perceptron's own qubits, which contracts
# through the thin factors: multiplying by Z acts block-diagonally on the
# destination index and costs O(D^2 dc) instead of O(D^3).


def _batch_projectors(states: np.ndarray) -> np.ndarray:
    return np.einsum("xi,xj->xij", states, states.conj())


def _kept_index_order(dp: int, n_cur: int, targets) -> np.ndarray:
    """Flat index permutation that regroups a (dp * 2**n_cur) composite index
    into (source block, target qubits, remaining qubits)."""
    arr = np.arange(dp << n_cur).reshape((dp,) + (2,) * n_cur)
    src = [1 + int(q) for q in targets]
    arr = np.moveaxis(arr, src, list(range(1, 1 + len(src))))
    return np.ascontiguousarray(arr.reshape(-1))


def _sigma_apply(sigma: np.ndarray, mats: np.ndarray, dp: int, dc: int) -> np.ndarray:
    """(I ⊗ sigma) @ M for batched sigma (N, dc, dc) and a stack of matrices
    (s, D, m); returns (N, s, D, m)."""
    n = sigma.shape[0]
    s, _, m = mats.shape
    # out[x, s, (p,i), k] = sum_j sigma[x,i,j] mats[s, (p,j), k]
    flat = mats.reshape(s, dp, dc, m).transpose(2, 0, 1, 3).reshape(dc, s * dp * m)
    out = np.matmul(sigma, flat)  # (N, dc, s*dp*m)
    return np.ascontiguousarray(
        out.reshape(n, dc, s, dp, m).transpose(0, 2, 3, 1, 4)
    ).reshape(n, s, dp * dc, m)


def _trace_source(moved: np.ndarray, loader: np.ndarray, dp: int, dc: int) -> np.ndarray:
    """rho' = tr_source(loader rho loader†) given moved = loader @ rho."""
    n = moved.shape[0]
    # rho'[x,i,j] = sum_{p,b} moved[x,(p,i),b] conj(loader[(p,j),b])
    left = np.ascontiguousarray(
        moved.reshape(n, dp, dc, dp).transpose(0, 2, 1, 3)
    ).reshape(n, dc, dp * dp)
    right = np.ascontiguousarray(
        loader.reshape(dp, dc, dp).transpose(1, 0, 2)
    ).reshape(dc, dp * dp)
    return np.matmul(left, right.conj().T)


def _round_quantities(net: Network, data: Dataset, eta: float, want_k: bool = True):
    """One synchronous round: returns (k_matrices, cost before the update).

    ``k_matrices[k][j]`` is the Hermitian generator for perceptron j of
    transition k, computed against the current network.  All pairs advance
    together as stacked arrays.
    """
    n_pairs = len(data)
    if n_pairs == 0:
        raise ValueError("dataset is empty")
    widths = net.widths
    if data.inputs.shape[1] != (1 << widths[0]) or data.outputs.shape[1] != (1 << widths[-1]):
        raise ValueError("dataset dimensions do not match the network topology")

    # per-transition thin factors, built once per round
    loaders = []  # loaders[k][j] = T_j, thin (D, dp)
    suffixes = []  # suffixes[k][j] = W_j, square (D, D); W_{n-1} = I
    for k in range(net.transition_count):
        dc = 1 << widths[k + 1]
        ops = net.embedded_perceptrons(k)
        prefix = None
        t_list = []
        for op in ops:
            prefix = op if prefix is None else op @ prefix
            t_list.append(np.ascontiguousarray(prefix[:, ::dc]))
        w_list = [np.eye(prefix.shape[0], dtype=complex)]
        for op in reversed(ops[1:]):
            w_list.append(w_list[-1] @ op)
        loaders.append(t_list)
        suffixes.append(list(reversed(w_list)))

    rhos = [_batch_projectors(data.inputs)]
    for k in range(net.transition_count):
        dp, dc = 1 << widths[k], 1 << widths[k + 1]
        g = loaders[k][-1]  # full layer unitary restricted to |0..0> columns
        rhos.append(_trace_source(np.matmul(g, rhos[k]), g, dp, dc))

    applied = np.matmul(rhos[-1], data.outputs[:, :, None])[:, :, 0]
    fidelities = np.sum(data.outputs.conj() * applied, axis=1).real
    cost_value = float(np.clip(fidelities, 0.0, 1.0).mean())
    if not want_k:
        return None, cost_value

    sigma = _batch_projectors(data.outputs)
    k_matrices = [None] * net.transition_count
    for k in reversed(range(net.transition_count)):
        dp, dc = 1 << widths[k], 1 << widths[k + 1]
        n_cur = widths[k + 1]
        rho = rhos[k]
        layer = net.layers[k]
        n_slots = len(layer)
        # all perceptrons of the transition advance together on a stacked axis
        # (uniform target count per layer by construction of Network)
        t_arity = len(layer[0].targets)
        g_dim, w_dim = dp << t_arity, 1 << (n_cur - t_arity)
        dim = dp * dc
        t_stack = np.stack(loaders[k])  # (s, D, dp)
        w_stack = np.stack(suffixes[k])  # (s, D, D)
        t_tilde = np.matmul(w_stack, t_stack)  # (s, D, dp)
        # permuting W's two-layer index into (kept, traced) order up front
        # makes every later reshape a free view
        kept = np.stack([_kept_index_order(dp, n_cur, p.targets) for p in layer])
        w_perm = np.take_along_axis(w_stack, kept[:, None, :], axis=2)
        t_kept = np.take_along_axis(t_stack, kept[:, :, None], axis=1)
        t_w = np.ascontiguousarray(
            t_kept.reshape(n_slots, g_dim, w_dim, dp).transpose(0, 2, 1, 3)
        )  # (s, w, g, dp)
        zcat = _sigma_apply(sigma, np.concatenate([w_perm, t_tilde], axis=2), dp, dc)
        zw, zt = zcat[..., :dim], zcat[..., dim:]
        # kept-qubit projections of tr(A B) and tr(B A), with A = T rho T†
        # and B = W† (I ⊗ sigma) W:
        #   R1[u,v] = sum_w [T rho (T† B)]_{(u,w),(v,w)}
        h1 = np.matmul(t_tilde.conj().transpose(0, 2, 1), zw)
        y1 = np.matmul(rho[:, None], h1)  # (N, s, dp, D) in kept order
        y1_w = np.ascontiguousarray(
            y1.reshape(n_pairs, n_slots, dp, g_dim, w_dim).transpose(0, 1, 4, 2, 3)
        )  # (N, s, w, dp, g)
        r1 = np.matmul(t_w, y1_w).sum(axis=(0, 2))  # (s, g, g)
        #   R2[u,v] = sum_w [(B T) rho T†]_{(u,w),(v,w)}
        h2 = np.matmul(w_perm.conj().transpose(0, 2, 1), zt)
        y2 = np.matmul(h2, rho[:, None])  # (N, s, D, dp) rows in kept order
        y2_w = np.ascontiguousarray(
            y2.reshape(n_pairs, n_slots, g_dim, w_dim, dp).transpose(0, 1, 3, 2, 4)
        )  # (N, s, w, g, dp)
        r2 = np.matmul(y2_w, t_w.conj().transpose(0, 1, 3, 2)).sum(axis=(0, 2))
        # 2**(arity-1) completeness factor; equals 2**m_prev for the standard
        # single-target perceptron
        prefactor = eta * (1 << (widths[k] + t_arity - 1)) / n_pairs
        generators = prefactor * 1j * (r1 - r2)
        k_matrices[k] = [generators[j] for j in range(n_slots)]
        if k > 0:
            g = loaders[k][-1]
            zg = _sigma_apply(sigma, g[None], dp, dc)[:, 0]
            sigma = np.matmul(g.conj().T, zg)
    return k_matrices, cost_value


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def cost(net: Network, data: Dataset) -> float:
    """Averaged output fidelity over the dataset, in [0, 1]."""
    _, value = _round_quantities(net, data, eta=1.0, want_k=False)
    return value


def commutator_matrix_M(net: Network, k: int, j: int, rho_prev: np.ndarray,
                        sigma_cur: np.ndarray) -> np.ndarray:
    """Two-layer commutator for perceptron j of transition k.

    rho_prev is the forward state on layer k, sigma_cur the back-propagated
    target on layer k+1.  The result is anti-Hermitian and traceless.
    """
    ops = net.embedded_perceptrons(k)
    if not 0 <= j < len(ops):
        raise IndexError(f"perceptron index {j} out of range for transition {k}")
    m_prev, m_cur = net.widths[k], net.widths[k + 1]
    a = np.kron(rho_prev, zero_projector(m_cur))
    for i in range(j + 1):
        a = ops[i] @ a @ ops[i].conj().T
    b = np.kron(np.eye(1 << m_prev), sigma_cur)
    for i in reversed(range(j + 1, len(ops))):
        b = ops[i].conj().T @ b @ ops[i]
    return a @ b - b @ a


def parameter_matrix_K(net: Network, k: int, j: int, caches, eta: float) -> np.ndarray:
    """Hermitian update generator for perceptron j of transition k.

    ``caches`` holds one :class:`FeedforwardCache` per training pair.
    """
    caches = list(caches)
    if not caches:
        raise ValueError("no feedforward caches supplied")
    m_prev, m_cur = net.widths[k], net.widths[k + 1]
    p = net.layers[k][j]
    keep = tuple(range(m_prev)) + tuple(m_prev + t for t in p.targets)
    total = None
    for cache in caches:
        if len(cache.rhos) != len(net.widths) or cache.sigmas[k + 1] is None:
            raise ValueError("cache does not cover every layer of this network")
        m = commutator_matrix_M(net, k, j, cache.rhos[k], cache.sigmas[k + 1])
        reduced = partial_trace(1j * m, m_prev + m_cur, keep=keep)
        total = reduced if total is None else total + reduced
    prefactor = eta * (1 << (m_prev + len(p.targets) - 1)) / len(caches)
    return prefactor * total


def analytic_cost_derivative(net: Network, data: Dataset, eta: float) -> float:
    """dC/ds of the ascent flow U -> exp(i*eps*K) U at eps = 0.

    Equals sum over perceptrons of tr(K^2) / (eta * 2**(arity-1)), which is
    nonnegative: the update never decreases the cost to first order.
    """
    k_matrices, _ = _round_quantities(net, data, eta)
    total = 0.0
    for k, layer in enumerate(k_matrices):
        for j, mat in enumerate(layer):
            scale = eta * (1 << (net.widths[k] + len(net.layers[k][j].targets) - 1))
            total += float(np.real(np.trace(mat @ mat))) / scale
    return total


def _updated_network(net: Network, k_matrices, epsilon: float):
    """Apply U -> exp(i*eps*K) U to every perceptron; polar-project and log
    when accumulated drift from unitarity exceeds DRIFT_TOLERANCE."""
    projections = 0
    new_layers = []
    for k, layer in enumerate(net.layers):
        new_layer = []
        for j, p in enumerate(layer):
            u = expm_i_hermitian(k_matrices[k][j], epsilon) @ p.unitary
            if unitarity_error(u) > DRIFT_TOLERANCE:
                w, _, vh = np.linalg.svd(u)
                u = w @ vh
                projections += 1
                log.warning(
                    "re-unitarised perceptron (transition %d, slot %d) after drift", k, j
                )
            new_layer.append(Perceptron(u, p.targets))
        new_layers.append(tuple(new_layer))
    return Network(net.widths, new_layers, validate=False), projections


def training_step(net: Network, data: Dataset, config: TrainingConfig):
    """One synchronous round.  Returns (updated network, cost before update).

    All K matrices come from the round-start network; with epsilon == 0 the
    returned network holds the identical unitary arrays.
    """
    k_matrices, cost_before = _round_quantities(net, data, config.eta)
    if config.epsilon == 0.0:
        return net, cost_before
    updated, _ = _updated_network(net, k_matrices, config.epsilon)
    return updated, cost_before


def train(net: Network, data: Dataset, config: TrainingConfig) -> TrainingHistory:
    """Run ``config.rounds`` synchronous rounds of gradient ascent.

    The history has rounds + 1 cost entries: the cost before every round plus
    the final network's cost.  Deterministic: same inputs, same history.
    """
    costs = []
    norms = [] if config.record_k_norms else None
    projections = 0
    for _ in range(config.rounds):
        k_matrices, cost_before = _round_quantities(net, data, config.eta)
        costs.append(cost_before)
        if norms is not None:
            norms.append(
                tuple(
                    float(np.linalg.norm(mat))
                    for layer in k_matrices
                    for mat in layer
                )
            )
        if config.epsilon != 0.0:
            net, hits = _updated_network(net, k_matrices, config.epsilon)
            projections += hits
    costs.append(cost(net, data))
    return TrainingHistory(
        costs=tuple(costs),
        config=config,
        final_network=net,
        k_norms=tuple(norms) if norms is not None else None,
        projections=projections,
    )


def train_random_init(widths, data: Dataset, config: TrainingConfig) -> TrainingHistory:
    """Draw a Haar-random network from config.seed, then train."""
    net = Network.random(widths, split_rng(config.seed, 0))
    return train(net, data, config)


def gradient_norm_probe(net: Network, data: Dataset) -> dict:
    """Frobenius norm of every K at learning rate 1; no mutation.

    Keyed by (transition, slot).  A flat, always-positive landscape probe:
    vanishing values across random initialisations would signal a barren
    plateau.
    """
    k_matrices, _ = _round_quantities(net, data, eta=1.0)
    return {
        (k, j): float(np.linalg.norm(mat))
        for k, layer in enumerate(k_matrices)
        for j, mat in enumerate(layer)
    }
