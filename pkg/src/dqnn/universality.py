"""Embedding brick-wall two-qubit circuits into perceptron networks.

Any circuit of two-qubit gates can be reproduced by a network in which every
neuron carries a pair of qubits and every perceptron is a two-qubit gate
preceded by two SWAPs that relay the neuron's inputs from the previous layer.
This module builds that network, together with the reference circuit unitary
defining what it must be equal to.

Wiring conventions
------------------
``registers`` (R, even) circuit wires sit on a ring.  Each layer has R / 2
neurons; neuron ``j`` owns layer qubits ``2j`` (its "-" qubit) and ``2j + 1``
(its "+" qubit), and the input layer qubit ``q`` carries circuit register
``q``.  Time steps alternate between the two brick-wall gate rows:

* step 0, 2, 4, ...: gate slot ``j`` acts on registers ``((2j - 1) % R, 2j)``
  (the row of pairs wrapping around the ring),
* step 1, 3, 5, ...: gate slot ``j`` acts on registers ``(2j, 2j + 1)``.

A gate's first (most significant) qubit is the first register of its pair.
The relaying SWAPs shift the ring by one qubit per layer, so after an odd
number of steps the registers sit one position off; ``build_circuit_embedding``
appends one identity-gate relay layer in that case, making the network output
register-aligned with the input: for pure input rho the network output equals
``C rho C†`` with ``C = circuit_unitary(steps, registers)``.
"""

from __future__ import annotations

import numpy as np

from .linalg import embed
from .network import Network, Perceptron

_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def step_register_pairs(step: int, registers: int) -> tuple:
    """Ordered register pairs addressed by gate slots at a given time step."""
    if registers < 2 or registers % 2:
        raise ValueError("registers must be an even count >= 2")
    n = registers // 2
    if step % 2 == 0:
        return tuple(((2 * j - 1) % registers, 2 * j) for j in range(n))
    return tuple((2 * j, 2 * j + 1) for j in range(n))


def _normalise_step(step_gates, n_slots: int):
    """Accept a dict {slot: gate} or a sequence (None = identity)."""
    gates = [None] * n_slots
    if isinstance(step_gates, dict):
        items = step_gates.items()
    else:
        seq = list(step_gates)
        if len(seq) > n_slots:
            raise ValueError(f"time step holds {len(seq)} gates but only {n_slots} slots")
        items = enumerate(seq)
    for slot, gate in items:
        slot = int(slot)
        if not 0 <= slot < n_slots:
            raise ValueError(f"gate slot {slot} out of range")
        if gate is None:
            continue
        gate = np.asarray(gate, dtype=complex)
        if gate.shape != (4, 4):
            raise ValueError(f"two-qubit gate expected, got shape {gate.shape}")
        gates[slot] = gate
    return gates


def circuit_unitary(steps, registers: int) -> np.ndarray:
    """Reference unitary of the brick-wall circuit on ``registers`` wires."""
    n_slots = registers // 2
    u = np.eye(1 << registers, dtype=complex)
    for s, step_gates in enumerate(steps):
        pairs = step_register_pairs(s, registers)
        for slot, gate in enumerate(_normalise_step(step_gates, n_slots)):
            if gate is None:
                continue
            u = embed(gate, pairs[slot], registers) @ u
    return u


def build_circuit_embedding(steps, registers: int) -> Network:
    """Network of SWAP-relay perceptrons realising a brick-wall circuit.

    Every perceptron is gate * SWAP * SWAP: two SWAPs pull the neuron's two
    input qubits out of the previous layer, then the slot's gate acts on the
    neuron pair.  Within a layer the perceptrons touch disjoint qubits, so
    the slot order is immaterial.  For an odd number of time steps one
    identity-gate relay layer is appended to restore register alignment.
    """
    if registers < 2 or registers % 2:
        raise ValueError("registers must be an even count >= 2")
    steps = [list(_normalise_step(s, registers // 2)) for s in steps]
    if len(steps) % 2:
        steps.append([None] * (registers // 2))
    n_slots = registers // 2
    layers = []
    for s, step_gates in enumerate(steps):
        layer = []
        for j in range(n_slots):
            if s % 2 == 0:
                src_minus = (2 * j - 1) % registers  # previous neuron's "+"
                src_plus = 2 * j  # own predecessor's "-"
            else:
                src_minus = 2 * j + 1
                src_plus = (2 * j + 2) % registers
            gate = step_gates[j]
            if gate is None:
                gate = np.eye(4, dtype=complex)
            # qubit order inside the perceptron: R source qubits, then the
            # neuron's (-, +) pair at positions R and R + 1
            u = embed(gate, (registers, registers + 1), registers + 2)
            u = u @ embed(_SWAP, (src_minus, registers), registers + 2)
            u = u @ embed(_SWAP, (src_plus, registers + 1), registers + 2)
            layer.append(Perceptron(u, (2 * j, 2 * j + 1)))
        layers.append(tuple(layer))
    widths = (registers,) * (len(steps) + 1)
    return Network(widths, layers, validate=False)
