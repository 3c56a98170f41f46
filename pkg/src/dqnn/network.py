"""Network topology, perceptron unitaries, and layer-to-layer channels.

A network maps an input register of ``widths[0]`` qubits through hidden
layers to an output register of ``widths[-1]`` qubits.  Transition ``k``
(``0 <= k < len(widths) - 1``) carries layer ``k`` to layer ``k + 1`` and owns
an ordered list of perceptrons.  Each perceptron is a unitary acting on all
qubits of the source layer plus a few target qubits of the destination layer
(exactly one target in the standard construction); perceptrons are applied in
list order, first entry first.

The forward channel for transition ``k`` adjoins the destination qubits in
|0...0>, applies the perceptrons in order, and traces out the source layer.
The adjoint channel is its Hilbert-Schmidt dual, used to pull target
projectors backwards through the network.

Networks are immutable: all stored arrays are marked read-only and training
produces new ``Network`` instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import (
    check_unitary,
    embed,
    haar_random_unitary,
    partial_trace,
    projector,
    zero_projector,
)

SERIAL_FORMAT = "dqnn-network"
SERIAL_VERSION = 1

_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Perceptron:
    """A unitary on (source layer) + (target qubits of the destination layer).

    ``targets`` are destination-layer qubit indices, ascending.  The unitary
    orders its qubits as: all source qubits (most significant) followed by the
    targets.
    """

    unitary: np.ndarray
    targets: tuple[int, ...]

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        if any(b <= a for a, b in zip(targets, targets[1:])):
            raise ValueError(f"targets must be strictly increasing, got {targets}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "unitary", _frozen(self.unitary))

    @property
    def arity(self) -> int:
        """Total qubits the unitary acts on."""
        return int(self.unitary.shape[0]).bit_length() - 1


class Network:
    """Immutable stack of perceptron layers over a fixed topology."""

    def __init__(self, widths, layers, validate: bool = True):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("a network needs at least input and output layers")
        if any(w < 1 for w in widths):
            raise ValueError(f"all layer widths must be >= 1, got {widths}")
        layers = tuple(tuple(p for p in layer) for layer in layers)
        if len(layers) != len(widths) - 1:
            raise ValueError(
                f"expected {len(widths) - 1} perceptron layers, got {len(layers)}"
            )
        for k, layer in enumerate(layers):
            m_prev, m_cur = widths[k], widths[k + 1]
            covered = []
            for p in layer:
                expected_dim = 1 << (m_prev + len(p.targets))
                if p.unitary.shape != (expected_dim, expected_dim):
                    raise ValueError(
                        f"layer {k}: perceptron on targets {p.targets} has shape "
                        f"{p.unitary.shape}, expected {expected_dim}"
                    )
                if any(t < 0 or t >= m_cur for t in p.targets):
                    raise ValueError(f"layer {k}: targets {p.targets} out of range")
                covered.extend(p.targets)
                if validate:
                    check_unitary(p.unitary)
            if sorted(covered) != list(range(m_cur)):
                raise ValueError(
                    f"layer {k}: perceptron targets {sorted(covered)} must cover "
                    f"each of the {m_cur} destination qubits exactly once"
                )
        self.widths = widths
        self.layers = layers
        self._embedded_cache: dict = {}
        self._unitary_cache: dict = {}

    # -- construction helpers ------------------------------------------------

    @classmethod
    def random(cls, widths, rng: np.random.Generator) -> "Network":
        """Haar-random single-target perceptrons for every layer and slot."""
        widths = tuple(int(w) for w in widths)
        layers = []
        for k in range(len(widths) - 1):
            dim = 1 << (widths[k] + 1)
            layers.append(
                tuple(
                    Perceptron(haar_random_unitary(dim, rng), (j,))
                    for j in range(widths[k + 1])
                )
            )
        return cls(widths, layers, validate=False)

    @classmethod
    def identity(cls, widths) -> "Network":
        widths = tuple(int(w) for w in widths)
        layers = []
        for k in range(len(widths) - 1):
            dim = 1 << (widths[k] + 1)
            layers.append(
                tuple(Perceptron(np.eye(dim, dtype=complex), (j,)) for j in range(widths[k + 1]))
            )
        return cls(widths, layers, validate=False)

    @classmethod
    def relay(cls, widths) -> "Network":
        """Perfect transfer chain: perceptron j swaps source qubit j into
        destination qubit j.  Requires equal widths throughout."""
        widths = tuple(int(w) for w in widths)
        if len(set(widths)) != 1:
            raise ValueError("relay networks need equal layer widths")
        m = widths[0]
        layers = []
        for _ in range(len(widths) - 1):
            perceptrons = []
            for j in range(m):
                # SWAP between source qubit j and the target, identity on the rest
                u = embed(_SWAP, (j, m), m + 1)
                perceptrons.append(Perceptron(u, (j,)))
            layers.append(tuple(perceptrons))
        return cls(widths, layers, validate=False)

    # -- basic queries ---------------------------------------------------------

    @property
    def transition_count(self) -> int:
        return len(self.layers)

    def replace_layers(self, layers) -> "Network":
        return Network(self.widths, layers, validate=False)

    def embedded_perceptrons(self, k: int) -> tuple:
        """Perceptrons of transition k embedded in the two-layer space
        (source block most significant, then destination block)."""
        if k not in self._embedded_cache:
            m_prev, m_cur = self.widths[k], self.widths[k + 1]
            n_total = m_prev + m_cur
            ops = []
            for p in self.layers[k]:
                positions = tuple(range(m_prev)) + tuple(m_prev + t for t in p.targets)
                ops.append(embed(p.unitary, positions, n_total))
            self._embedded_cache[k] = tuple(_frozen(op) for op in ops)
        return self._embedded_cache[k]

    def layer_unitary(self, k: int) -> np.ndarray:
        """Product of transition k's perceptrons (first perceptron rightmost)."""
        if k not in self._unitary_cache:
            ops = self.embedded_perceptrons(k)
            u = ops[0]
            for op in ops[1:]:
                u = op @ u
            self._unitary_cache[k] = _frozen(u)
        return self._unitary_cache[k]

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            entries = []
            for p in layer:
                flat = p.unitary.ravel()
                entries.append(
                    {
                        "targets": list(p.targets),
                        "unitary": [[float(z.real), float(z.imag)] for z in flat],
                    }
                )
            layers.append(entries)
        return {
            "format": SERIAL_FORMAT,
            "version": SERIAL_VERSION,
            "widths": list(self.widths),
            "layers": layers,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Network":
        if doc.get("format") != SERIAL_FORMAT:
            raise ValueError(f"unrecognised document format {doc.get('format')!r}")
        if doc.get("version") != SERIAL_VERSION:
            raise ValueError(f"unsupported version {doc.get('version')!r}")
        widths = tuple(doc["widths"])
        layers = []
        for entry_list in doc["layers"]:
            perceptrons = []
            for entry in entry_list:
                pairs = entry["unitary"]
                dim = int(round(len(pairs) ** 0.5))
                if dim * dim != len(pairs):
                    raise ValueError("unitary entry list is not square")
                u = np.array([complex(re, im) for re, im in pairs]).reshape(dim, dim)
                perceptrons.append(Perceptron(u, tuple(entry["targets"])))
            layers.append(tuple(perceptrons))
        return cls(widths, layers, validate=False)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class FeedforwardCache:
    """Per-pair layer states used by the trainer.

    ``rhos[i]`` is the forward state on layer ``i`` (``rhos[0]`` is the input
    projector).  ``sigmas[i]`` is the back-propagated target on layer ``i``
    for ``i >= 1``; ``sigmas[0]`` is None (the input layer has no perceptrons
    feeding it).
    """

    rhos: tuple
    sigmas: tuple


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def apply_layer_channel(net: Network, k: int, rho: np.ndarray) -> np.ndarray:
    """Forward channel of transition k applied to an operator on layer k.

    Adjoins the destination register in |0...0>, conjugates by the layer
    unitary, and traces out the source layer.  Linear in ``rho``; maps density
    matrices to density matrices.
    """
    m_prev, m_cur = net.widths[k], net.widths[k + 1]
    d_prev = 1 << m_prev
    rho = np.asarray(rho)
    if rho.shape != (d_prev, d_prev):
        raise ValueError(f"expected operator of dim {d_prev} on layer {k}, got {rho.shape}")
    u = net.layer_unitary(k)
    loaded = np.kron(rho, zero_projector(m_cur))
    moved = u @ loaded @ u.conj().T
    return partial_trace(moved, m_prev + m_cur, keep=range(m_prev, m_prev + m_cur))


def apply_adjoint_channel(net: Network, k: int, sigma: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt dual of transition k's forward channel.

    Maps operators on layer k+1 back to layer k:
    F(X)[m, n] = <m, 0...0| U† (I ⊗ X) U |n, 0...0>.
    Hermiticity is preserved; unit trace is not.
    """
    m_prev, m_cur = net.widths[k], net.widths[k + 1]
    d_prev, d_cur = 1 << m_prev, 1 << m_cur
    sigma = np.asarray(sigma)
    if sigma.shape != (d_cur, d_cur):
        raise ValueError(f"expected operator of dim {d_cur} on layer {k + 1}, got {sigma.shape}")
    u = net.layer_unitary(k)
    # keep only the columns where the destination register is |0...0>
    g = u[:, ::d_cur]
    lifted = np.kron(np.eye(d_prev), sigma)
    return g.conj().T @ lifted @ g


def feedforward(net: Network, phi_in: np.ndarray) -> tuple:
    """Forward states (rho per layer) for one input state.

    Returns a tuple of length ``len(net.widths)``; entry 0 is the input
    projector.  Only two layers of state are alive at any point during the
    sweep; the returned reduced matrices are each at most the layer dimension.
    """
    phi_in = np.asarray(phi_in, dtype=complex)
    if phi_in.shape != (1 << net.widths[0],):
        raise ValueError(
            f"input state dim {phi_in.shape} does not match layer width {net.widths[0]}"
        )
    rho = projector(phi_in)
    out = [rho]
    for k in range(net.transition_count):
        rho = apply_layer_channel(net, k, rho)
        out.append(rho)
    return tuple(out)


def backpropagate_targets(net: Network, phi_out: np.ndarray) -> tuple:
    """Back-propagated targets (sigma per layer), seeded by the output projector.

    Returns a tuple aligned with ``net.widths``: entry ``i`` is sigma on layer
    ``i`` for ``i >= 1``, entry 0 is None.  The last entry equals the target
    projector itself.
    """
    phi_out = np.asarray(phi_out, dtype=complex)
    if phi_out.shape != (1 << net.widths[-1],):
        raise ValueError(
            f"target state dim {phi_out.shape} does not match layer width {net.widths[-1]}"
        )
    sigma = projector(phi_out)
    out = [sigma]
    for k in range(net.transition_count - 1, 0, -1):
        sigma = apply_adjoint_channel(net, k, sigma)
        out.append(sigma)
    out.append(None)
    return tuple(reversed(out))


def network_output(net: Network, phi_in: np.ndarray) -> np.ndarray:
    """Density matrix on the output layer for a pure input state."""
    return feedforward(net, phi_in)[-1]


def build_cache(net: Network, phi_in: np.ndarray, phi_out: np.ndarray) -> FeedforwardCache:
    return FeedforwardCache(
        rhos=feedforward(net, phi_in),
        sigmas=backpropagate_targets(net, phi_out),
    )


def kraus_operators(net: Network, k: int) -> list:
    """Kraus decomposition of transition k's forward channel.

    A_alpha[i, m] = <alpha, i| U |m, 0...0>, one operator per source-layer
    basis state alpha.  Provided for analysis and as an independent route for
    tests; the channel itself is evaluated by conjugate-and-trace.
    """
    m_prev, m_cur = net.widths[k], net.widths[k + 1]
    d_prev, d_cur = 1 << m_prev, 1 << m_cur
    u = net.layer_unitary(k)
    cols = u[:, ::d_cur]  # columns with destination register |0...0>
    return [cols[alpha * d_cur : (alpha + 1) * d_cur, :] for alpha in range(d_prev)]


def choi_matrix(net: Network, k: int) -> np.ndarray:
    """Choi matrix  sum_ij |i><j| ⊗ E(|i><j|)  of transition k's channel."""
    d_prev = 1 << net.widths[k]
    d_cur = 1 << net.widths[k + 1]
    choi = np.zeros((d_prev * d_cur, d_prev * d_cur), dtype=complex)
    unit = np.zeros((d_prev, d_prev), dtype=complex)
    for i in range(d_prev):
        for j in range(d_prev):
            unit[i, j] = 1.0
            block = apply_layer_channel(net, k, unit)
            choi[i * d_cur : (i + 1) * d_cur, j * d_cur : (j + 1) * d_cur] = block
            unit[i, j] = 0.0
    return choi
