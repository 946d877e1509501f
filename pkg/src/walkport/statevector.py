"""Dense state-vector kernel.

Global basis indices are big-endian in qubit order: qubit 0 is the most
significant bit. A register is an ordered list of qubit indices whose first
entry is the most significant bit of the register value, so the qubits
``[a, b]`` holding ``|i j>`` read as the integer ``2*i + j``.

Every operation returns a new :class:`StateVector`; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

NORM_TOL = 1e-9
UNITARY_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
SDG = S.conj().T

PAULIS = {"X": X, "Y": Y, "Z": Z}


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """Return the U3(theta, phi, lambda) matrix.

    Uses the common convention
    ``[[cos(t/2), -e^{i lam} sin(t/2)], [e^{i phi} sin(t/2), e^{i(phi+lam)} cos(t/2)]]``.
    """
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=complex,
    )


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes of an n-qubit pure state, length ``2**num_qubits``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size == 0 or amps.size & (amps.size - 1):
            raise ValueError(f"amplitude count must be a power of two, got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits}, amplitudes={self.amplitudes!r})"


def new_basis_state(num_qubits: int, basis_index: int = 0) -> StateVector:
    if num_qubits < 1:
        raise ValueError("num_qubits must be at least 1")
    dim = 1 << num_qubits
    if not 0 <= basis_index < dim:
        raise ValueError(f"basis index exceeds register: {basis_index} not in [0, {dim})")
    amps = np.zeros(dim, dtype=complex)
    amps[basis_index] = 1.0
    return StateVector(amps)


def tensor(*states: StateVector) -> StateVector:
    """Kronecker product; the first state occupies the most significant qubits."""
    out = np.ones(1, dtype=complex)
    for s in states:
        out = np.kron(out, s.amplitudes)
    return StateVector(out)


def _check_qubits(num_qubits: int, qubits: Sequence[int]) -> None:
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubit indices in {list(qubits)}")
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=tol, rtol=0))


def apply_single_qubit(state: StateVector, gate: np.ndarray, target: int) -> StateVector:
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2) or not is_unitary(gate):
        raise ValueError("gate not unitary")
    n = state.num_qubits
    _check_qubits(n, [target])
    psi = state.amplitudes.reshape(1 << target, 2, 1 << (n - target - 1))
    out = np.einsum("ab,ibj->iaj", gate, psi)
    return StateVector(out.reshape(-1))


def apply_unitary(state: StateVector, matrix: np.ndarray, register: Sequence[int]) -> StateVector:
    """Apply a ``2**k x 2**k`` unitary to the qubits of ``register`` (MSB first)."""
    matrix = np.asarray(matrix, dtype=complex)
    k = len(register)
    if matrix.shape != (1 << k, 1 << k) or not is_unitary(matrix):
        raise ValueError("gate not unitary")
    n = state.num_qubits
    _check_qubits(n, register)
    psi = state.amplitudes.reshape((2,) * n)
    gate = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), list(register)))
    out = np.moveaxis(out, list(range(k)), list(register))
    return StateVector(out.reshape(-1))


@lru_cache(maxsize=512)
def register_values(num_qubits: int, register: tuple[int, ...]) -> np.ndarray:
    """For every global basis index, the integer value read by ``register``."""
    idx = np.arange(1 << num_qubits)
    vals = np.zeros_like(idx)
    for q in register:
        vals = (vals << 1) | ((idx >> (num_qubits - 1 - q)) & 1)
    vals.flags.writeable = False
    return vals


def _with_register_value(idx: np.ndarray, num_qubits: int, register: Sequence[int], values: np.ndarray) -> np.ndarray:
    out = idx.copy()
    k = len(register)
    for pos, q in enumerate(register):
        shift = num_qubits - 1 - q
        bit = (values >> (k - 1 - pos)) & 1
        out = (out & ~(1 << shift)) | (bit << shift)
    return out


def _check_bijection(index_map: Sequence[int], size: int) -> np.ndarray:
    m = np.asarray(index_map, dtype=np.int64)
    if m.shape != (size,) or not np.array_equal(np.sort(m), np.arange(size)):
        raise ValueError("permutation not bijective")
    return m


@lru_cache(maxsize=512)
def _controlled_permutation_indices(
    num_qubits: int,
    controls: tuple[int, ...],
    control_value: int,
    targets: tuple[int, ...],
    index_map: tuple[int, ...],
) -> np.ndarray:
    idx = np.arange(1 << num_qubits)
    active = register_values(num_qubits, controls) == control_value if controls else np.ones(idx.size, bool)
    sub = register_values(num_qubits, targets)
    mapped = np.asarray(index_map)[sub]
    dest = np.where(active, _with_register_value(idx, num_qubits, targets, mapped), idx)
    dest.flags.writeable = False
    return dest


def apply_controlled_permutation(
    state: StateVector,
    controls: Sequence[int],
    control_value: int,
    targets: Sequence[int],
    index_map: Sequence[int],
) -> StateVector:
    """Route target sub-index ``l`` to ``index_map[l]`` where the controls read ``control_value``."""
    n = state.num_qubits
    controls, targets = tuple(controls), tuple(targets)
    _check_qubits(n, controls + targets)
    m = _check_bijection(index_map, 1 << len(targets))
    if controls and not 0 <= control_value < (1 << len(controls)):
        raise ValueError(f"control value {control_value} out of range")
    dest = _controlled_permutation_indices(n, controls, control_value, targets, tuple(int(v) for v in m))
    out = np.empty_like(state.amplitudes)
    out[dest] = state.amplitudes
    return StateVector(out)


def apply_basis_permutation(state: StateVector, dest: np.ndarray) -> StateVector:
    """Move the amplitude at global index ``i`` to ``dest[i]``."""
    out = np.empty_like(state.amplitudes)
    out[dest] = state.amplitudes
    return StateVector(out)


def register_probabilities(state: StateVector, register: Sequence[int]) -> np.ndarray:
    register = tuple(register)
    _check_qubits(state.num_qubits, register)
    vals = register_values(state.num_qubits, register)
    return np.bincount(vals, weights=state.probabilities(), minlength=1 << len(register))


def collapse(state: StateVector, register: Sequence[int], outcome: int) -> tuple[StateVector, float]:
    """Project ``register`` onto ``outcome`` and renormalize.

    Returns the collapsed state and the pre-collapse probability of the outcome.
    """
    register = tuple(register)
    _check_qubits(state.num_qubits, register)
    if not 0 <= outcome < (1 << len(register)):
        raise ValueError(f"outcome {outcome} out of range for {len(register)}-qubit register")
    mask = register_values(state.num_qubits, register) == outcome
    kept = np.where(mask, state.amplitudes, 0)
    prob = float(np.vdot(kept, kept).real)
    if prob <= 1e-15:
        raise ValueError(f"impossible outcome {outcome}")
    return StateVector(kept / np.sqrt(prob)), prob


def sample_index(probs: np.ndarray, u: np.ndarray | float) -> np.ndarray:
    """Inverse-CDF sampling: map uniforms in [0, 1) to indices of ``probs``.

    Zero-probability entries are never selected.
    """
    cdf = np.cumsum(probs)
    return np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")


def measure_register(
    state: StateVector,
    register: Sequence[int],
    rng: np.random.Generator | None = None,
    outcome: int | None = None,
) -> tuple[int, StateVector, float]:
    """Measure ``register`` in the computational basis.

    Either samples with ``rng`` or, when ``outcome`` is given, forces that
    branch. Returns ``(outcome, collapsed_state, branch_probability)``.
    """
    if outcome is None:
        if rng is None:
            raise ValueError("need an rng or a forced outcome")
        probs = register_probabilities(state, register)
        outcome = int(sample_index(probs, rng.random()))
    collapsed, prob = collapse(state, register, outcome)
    return outcome, collapsed, prob


def pauli_expectation(state: StateVector, qubit: int, axis: str) -> float:
    """Exact <P> on one qubit, computed by rotating ``axis`` onto Z."""
    axis = axis.upper()
    if axis == "X":
        state = apply_single_qubit(state, H, qubit)
    elif axis == "Y":
        state = apply_single_qubit(apply_single_qubit(state, SDG, qubit), H, qubit)
    elif axis != "Z":
        raise ValueError(f"unknown Pauli axis {axis!r}")
    p = register_probabilities(state, [qubit])
    return float(p[0] - p[1])


def extract_register_state(state: StateVector, register: Sequence[int], tol: float = 1e-9) -> StateVector:
    """Pure state of ``register`` when it is in a product with the remaining qubits."""
    n = state.num_qubits
    register = list(register)
    _check_qubits(n, register)
    rest = [q for q in range(n) if q not in register]
    m = np.transpose(state.amplitudes.reshape((2,) * n), rest + register).reshape(1 << len(rest), 1 << len(register))
    row = m[np.argmax(np.linalg.norm(m, axis=1))]
    v = row / np.linalg.norm(row)
    residual = m - np.outer(m @ v.conj(), v)
    if np.linalg.norm(residual) > tol:
        raise ValueError("register is entangled with the rest of the system")
    return StateVector(v)


def overlap_fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2 for normalized states; insensitive to global phase."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def equal_up_to_phase(a: StateVector, b: StateVector, atol: float = 1e-9) -> bool:
    """Compare after fixing the phase of the first nonzero amplitude of ``a``."""
    if a.dim != b.dim:
        return False
    k = int(np.argmax(np.abs(a.amplitudes) > atol))
    if abs(b.amplitudes[k]) <= atol:
        return False
    phase = (a.amplitudes[k] / abs(a.amplitudes[k])) / (b.amplitudes[k] / abs(b.amplitudes[k]))
    return bool(np.allclose(a.amplitudes, b.amplitudes * phase, atol=atol, rtol=0))
