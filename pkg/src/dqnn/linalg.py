"""Dense complex linear algebra on multi-qubit registers.

Conventions used throughout the package:

* A register of ``n`` qubits has dimension ``2**n``.  Basis indices are read
  with the *first* qubit as the most significant bit, so the tensor product
  ``kron(a, b)`` puts ``a``'s qubits before ``b``'s.
* Pure states are 1-D complex arrays, operators are square 2-D complex
  arrays.  Everything is ``complex128``.
* Randomness always flows through an explicit ``numpy.random.Generator``.
  Derive per-worker generators with :func:`split_rng`; never share one
  generator between concurrent tasks.

Validity checks (:func:`check_unitary`, :func:`check_density`) are meant for
construction-time and test-time use, not for hot loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNITARY_ATOL = 1e-10
DENSITY_ATOL = 1e-10
HERMITIAN_ATOL = 1e-8


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a``'s indices most significant."""
    return np.kron(a, b)


def kron_all(ops) -> np.ndarray:
    """Tensor product of a sequence of operators, first factor most significant."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def basis_state(dim: int, index: int = 0) -> np.ndarray:
    """Computational basis vector |index> in a dim-dimensional space."""
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def zero_projector(n_qubits: int) -> np.ndarray:
    """Projector |0...0><0...0| on an n-qubit register."""
    dim = 1 << n_qubits
    proj = np.zeros((dim, dim), dtype=complex)
    proj[0, 0] = 1.0
    return proj


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a pure state vector."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def partial_trace(mat: np.ndarray, n_qubits: int, keep) -> np.ndarray:
    """Trace out all qubits not listed in ``keep``.

    Args:
        mat: square operator on ``n_qubits`` qubits.
        n_qubits: total number of qubits.
        keep: strictly increasing qubit positions to retain.  The result is
            ordered by these positions (first kept qubit most significant).

    Returns:
        Operator on ``len(keep)`` qubits.  The full trace is preserved.

    Raises:
        ValueError: if ``keep`` is not a strictly increasing subset of
            ``range(n_qubits)`` or ``mat`` has the wrong shape.
    """
    keep = tuple(int(q) for q in keep)
    dim = 1 << n_qubits
    mat = np.asarray(mat)
    if mat.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix for {n_qubits} qubits, got {mat.shape}")
    if any(q < 0 or q >= n_qubits for q in keep):
        raise ValueError(f"keep positions {keep} outside register of {n_qubits} qubits")
    if any(b <= a for a, b in zip(keep, keep[1:])):
        raise ValueError(f"keep positions must be strictly increasing, got {keep}")

    tens = mat.reshape((2,) * (2 * n_qubits))
    keep_set = set(keep)
    # einsum index ids: row qubit i -> i; column qubit i -> n+i if kept, else i
    # (repeating the row id on a traced column sums the diagonal).
    row_ids = list(range(n_qubits))
    col_ids = [n_qubits + i if i in keep_set else i for i in range(n_qubits)]
    out_ids = [*keep, *(n_qubits + i for i in keep)]
    reduced = np.einsum(tens, row_ids + col_ids, out_ids)
    d_keep = 1 << len(keep)
    return np.ascontiguousarray(reduced.reshape(d_keep, d_keep))


def embed(op: np.ndarray, positions, n_qubits: int) -> np.ndarray:
    """Extend ``op`` to ``n_qubits`` qubits, acting as identity elsewhere.

    ``positions[k]`` is the register qubit carried by qubit ``k`` of ``op``;
    positions need not be contiguous or sorted.
    """
    positions = tuple(int(q) for q in positions)
    k = len(positions)
    op = np.asarray(op, dtype=complex)
    if op.shape != (1 << k, 1 << k):
        raise ValueError(f"operator shape {op.shape} does not match {k} positions")
    if len(set(positions)) != k or any(q < 0 or q >= n_qubits for q in positions):
        raise ValueError(f"invalid positions {positions} for {n_qubits} qubits")

    rest = [q for q in range(n_qubits) if q not in positions]
    full = np.kron(op, np.eye(1 << len(rest), dtype=complex))
    # full's tensor slot t carries register qubit slot_to_qubit[t]
    slot_to_qubit = list(positions) + rest
    inv = [0] * n_qubits
    for slot, qubit in enumerate(slot_to_qubit):
        inv[qubit] = slot
    axes = inv + [n_qubits + s for s in inv]
    dim = 1 << n_qubits
    return np.ascontiguousarray(
        full.reshape((2,) * (2 * n_qubits)).transpose(axes).reshape(dim, dim)
    )


def expm_i_hermitian(k: np.ndarray, eps: float) -> np.ndarray:
    """exp(i * eps * k) for Hermitian ``k`` via eigendecomposition.

    Unitary by construction.  Raises ValueError when ``k`` deviates from
    Hermiticity by more than 1e-8 in max-abs entry.
    """
    k = np.asarray(k)
    herm_err = np.max(np.abs(k - k.conj().T)) if k.size else 0.0
    if herm_err > HERMITIAN_ATOL:
        raise ValueError(f"generator is not Hermitian (max deviation {herm_err:.3e})")
    w, q = np.linalg.eigh(k)
    return (q * np.exp(1j * eps * w)) @ q.conj().T


def haar_random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The R diagonal is phase-normalised so the distribution is exactly
    left-invariant.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed pure state: normalised complex Gaussian vector."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def fidelity_pure(phi: np.ndarray, rho: np.ndarray) -> float:
    """<phi| rho |phi> for a pure state against a density matrix.

    The raw value is allowed to stray outside [0, 1] by at most 1e-9
    (roundoff); it is then clamped into range.  Larger violations raise.
    """
    phi = np.asarray(phi)
    rho = np.asarray(rho)
    if rho.shape != (phi.shape[0], phi.shape[0]):
        raise ValueError(f"dimension mismatch: state {phi.shape}, operator {rho.shape}")
    val = np.real(phi.conj() @ rho @ phi)
    if val < -1e-9 or val > 1.0 + 1e-9:
        raise ValueError(f"fidelity {val!r} outside [0, 1] beyond tolerance")
    return float(min(max(val, 0.0), 1.0))


def split_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic per-task generator: seed_i = h(master_seed, key).

    Implemented with numpy's SeedSequence spawn keys, so distinct keys give
    statistically independent streams and identical (seed, key) pairs give
    identical draw sequences on every platform.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def unitarity_error(u: np.ndarray) -> float:
    """Max-abs entry of U†U - I."""
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def check_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> None:
    err = unitarity_error(u)
    if err > atol:
        raise ValueError(f"matrix is not unitary (max |U†U - I| = {err:.3e})")


def check_density(rho: np.ndarray, atol: float = DENSITY_ATOL) -> None:
    """Hermitian, unit trace, eigenvalues >= -atol."""
    rho = np.asarray(rho)
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > atol:
        raise ValueError(f"density matrix not Hermitian ({herm:.3e})")
    tr = rho.trace()
    if abs(tr - 1.0) > atol:
        raise ValueError(f"density matrix trace {tr} != 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -atol:
        raise ValueError(f"density matrix has eigenvalue {lo:.3e} < 0")


@dataclass(frozen=True)
class QubitLayout:
    """Ordered qubit labels for a composite register.

    Labels are arbitrary hashable identifiers, typically ``(layer, index)``
    tuples; the first label is the most significant qubit.
    """

    labels: tuple

    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("qubit labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_positions", {lab: i for i, lab in enumerate(labels)})

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 1 << len(self.labels)

    def position(self, label) -> int:
        try:
            return self._positions[label]
        except KeyError:
            raise ValueError(f"label {label!r} not in layout") from None

    def positions(self, labels) -> tuple:
        return tuple(self.position(lab) for lab in labels)
