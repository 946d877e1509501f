"""Teleportation of an n-qubit state with a two-step coined walk.

Three n-qubit registers take part: the walker position, Alice's coin (which
holds the payload) and Bob's coin. Each register is read as one qudit of
dimension ``d = 2**n``. The walk runs on the complete graph with ``d``
vertices, edge ``k`` leading from vertex ``l`` to ``(l + k) mod d``.

Steps, in order:

1. Alice's coin shifts the position.
2. Bob applies H to each of his coin qubits, then his coin shifts the position.
3. Alice measures the position (outcome ``q``).
4. Alice applies H to her coin qubits and measures them (outcome ``p``).
5. Bob applies the signed permutation ``U_pq`` to his coin.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import count
from typing import Iterator, Sequence

import numpy as np

from . import rng as rng_mod
from .noise import PAULI_PAIRS, NoiseParams, apply_pauli, pauli_choice, pauli_pair_choice, readout_mask
from .statevector import (
    H,
    SDG,
    StateVector,
    apply_basis_permutation,
    apply_single_qubit,
    apply_unitary,
    collapse,
    extract_register_state,
    new_basis_state,
    overlap_fidelity,
    register_probabilities,
    register_values,
    sample_index,
    tensor,
)

MODES = ("exact_branches", "sampled")


@dataclass(frozen=True)
class RegisterLayout:
    position: tuple[int, ...]
    alice_coin: tuple[int, ...]
    bob_coin: tuple[int, ...]
    ancilla: tuple[int, ...] = ()

    def __post_init__(self):
        regs = [self.position, self.alice_coin, self.bob_coin, self.ancilla]
        flat = [q for r in regs for q in r]
        if len(set(flat)) != len(flat):
            raise ValueError("register roles must use disjoint qubits")
        n = len(self.position)
        if n < 1 or len(self.alice_coin) != n or len(self.bob_coin) != n:
            raise ValueError("position and both coins need the same length n >= 1")

    @property
    def n(self) -> int:
        return len(self.position)

    @property
    def num_qubits(self) -> int:
        return 3 * self.n + len(self.ancilla)


def build_layout(n: int) -> RegisterLayout:
    if n < 1:
        raise ValueError("n must be at least 1")
    return RegisterLayout(
        position=tuple(range(n)),
        alice_coin=tuple(range(n, 2 * n)),
        bob_coin=tuple(range(2 * n, 3 * n)),
    )


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    mode: str = "sampled"
    shots: int = 8192
    seed: int = 0
    noise: NoiseParams | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValueError("shots must be at least 1 in sampled mode")


@dataclass(frozen=True)
class MeasurementRecord:
    q: int
    p: int
    branch_probability: float


@dataclass(frozen=True, eq=False)
class TeleportResult:
    record: MeasurementRecord
    bob_state: StateVector
    fidelity_to_input: float
    bob_before_correction: StateVector | None = None


# --- walk operators -----------------------------------------------------------


@lru_cache(maxsize=64)
def _shift_destinations(num_qubits: int, coin: tuple[int, ...], position: tuple[int, ...]) -> np.ndarray:
    d = 1 << len(position)
    k = register_values(num_qubits, coin)
    l = register_values(num_qubits, position)
    new_l = (l + k) % d
    idx = np.arange(1 << num_qubits)
    for pos, qb in enumerate(position):
        shift = num_qubits - 1 - qb
        bit = (new_l >> (len(position) - 1 - pos)) & 1
        idx = (idx & ~(1 << shift)) | (bit << shift)
    idx.flags.writeable = False
    return idx


def conditional_shift(state: StateVector, coin: Sequence[int], position: Sequence[int]) -> StateVector:
    """Map ``|k>_coin |l>_pos`` to ``|k>_coin |(l + k) mod 2**n>_pos``."""
    coin, position = tuple(coin), tuple(position)
    if len(coin) != len(position) or not coin:
        raise ValueError(f"coin and position registers must have equal nonzero length, got {len(coin)} and {len(position)}")
    if set(coin) & set(position):
        raise ValueError("coin and position overlap")
    return apply_basis_permutation(state, _shift_destinations(state.num_qubits, coin, position))


def hadamard_layer(state: StateVector, register: Sequence[int]) -> StateVector:
    for q in register:
        state = apply_single_qubit(state, H, q)
    return state


def bitwise_and_parity(p: int, k: int) -> int:
    """Parity of the bitwise AND of ``p`` and ``k``; the sign exponent of H^{(x)n}."""
    if p < 0 or k < 0:
        raise ValueError("arguments must be non-negative")
    return (p & k).bit_count() & 1


def correction_unitary(p: int, q: int, n: int) -> np.ndarray:
    """Bob's correction: entry ``[j, (q - j) mod d] = (-1)^{p.j}``, zero elsewhere."""
    d = 1 << n
    if not (0 <= p < d and 0 <= q < d):
        raise ValueError(f"p and q must lie in [0, {d}), got p={p}, q={q}")
    u = np.zeros((d, d))
    for j in range(d):
        u[j, (q - j) % d] = -1.0 if bitwise_and_parity(p, j) else 1.0
    return u


def _is_identity(m: np.ndarray) -> bool:
    return bool(np.array_equal(m, np.eye(m.shape[0])))


# --- exact branches ---------------------------------------------------------


def initial_state(phi: StateVector, layout: RegisterLayout | None = None) -> StateVector:
    n = phi.num_qubits
    layout = layout or build_layout(n)
    if layout != build_layout(n):
        raise ValueError("only the contiguous position/alice/bob layout is simulated directly")
    zero = new_basis_state(n, 0)
    return tensor(zero, phi, zero)


def walk_state(phi: StateVector) -> StateVector:
    """State after both walk steps, before any measurement."""
    lay = build_layout(phi.num_qubits)
    psi = initial_state(phi, lay)
    psi = conditional_shift(psi, lay.alice_coin, lay.position)
    psi = hadamard_layer(psi, lay.bob_coin)
    return conditional_shift(psi, lay.bob_coin, lay.position)


def _check_input(phi: StateVector) -> None:
    if abs(phi.norm() - 1) > 1e-9:
        raise ValueError("input state must be normalized")


def run_protocol_branch(phi: StateVector, forced_q: int, forced_p: int, config: ProtocolConfig | None = None) -> TeleportResult:
    """Run the full protocol with Alice's outcomes fixed to ``(forced_q, forced_p)``."""
    _check_input(phi)
    n = phi.num_qubits
    if config is not None and config.n != n:
        raise ValueError(f"config.n={config.n} does not match a {n}-qubit input")
    lay = build_layout(n)
    psi = walk_state(phi)
    psi, prob_q = collapse(psi, lay.position, forced_q)
    psi = hadamard_layer(psi, lay.alice_coin)
    psi, prob_p = collapse(psi, lay.alice_coin, forced_p)
    before = extract_register_state(psi, lay.bob_coin)
    psi = apply_unitary(psi, correction_unitary(forced_p, forced_q, n), lay.bob_coin)
    bob = extract_register_state(psi, lay.bob_coin)
    return TeleportResult(
        record=MeasurementRecord(forced_q, forced_p, prob_q * prob_p),
        bob_state=bob,
        fidelity_to_input=overlap_fidelity(phi, bob),
        bob_before_correction=before,
    )


def run_all_branches(phi: StateVector) -> list[TeleportResult]:
    """Every ``(q, p)`` branch, sharing the measurement-free prefix; ordered by ``q`` then ``p``."""
    _check_input(phi)
    n = phi.num_qubits
    lay = build_layout(n)
    d = 1 << n
    walked = walk_state(phi)
    out = []
    for q in range(d):
        after_q, prob_q = collapse(walked, lay.position, q)
        after_q = hadamard_layer(after_q, lay.alice_coin)
        for p in range(d):
            psi, prob_p = collapse(after_q, lay.alice_coin, p)
            psi = apply_unitary(psi, correction_unitary(p, q, n), lay.bob_coin)
            bob = extract_register_state(psi, lay.bob_coin)
            out.append(TeleportResult(MeasurementRecord(q, p, prob_q * prob_p), bob, overlap_fidelity(phi, bob)))
    return out


def _rotate_for_basis(state: StateVector, qubits: Sequence[int], basis: str) -> StateVector:
    for q in qubits:
        for gate in _basis_gates(basis):
            state = apply_single_qubit(state, gate, q)
    return state


def _basis_gates(basis: str) -> tuple[np.ndarray, ...]:
    basis = basis.upper()
    if basis == "Z":
        return ()
    if basis == "X":
        return (H,)
    if basis == "Y":
        return (SDG, H)
    raise ValueError(f"unknown measurement basis {basis!r}")


def exact_distribution(phi: StateVector, basis: str = "Z") -> np.ndarray:
    """Noiseless outcome distribution of Bob's coin, averaged over all branches."""
    n = phi.num_qubits
    total = np.zeros(1 << n)
    for res in run_all_branches(phi):
        bob = _rotate_for_basis(res.bob_state, range(n), basis)
        total += res.record.branch_probability * bob.probabilities()
    return total


# --- sampled trajectories ---------------------------------------------------

SLOT_Q, SLOT_P, SLOT_BOB = 0, 1, 2


@dataclass(eq=False)
class _Group:
    """Shots that share one trajectory so far."""

    state: StateVector
    shots: np.ndarray
    q: int = -1
    p: int = -1
    prob: float = 1.0
    result: TeleportResult | None = None


@dataclass(eq=False)
class SampledRun:
    """Outcome of a sampled experiment.

    ``outcomes`` holds Bob's (possibly readout-flipped) reading per shot;
    ``q`` and ``p`` hold the classical bits Bob received; ``trajectory[s]``
    indexes ``results`` with the state Bob held after correction in shot ``s``.
    """

    n: int
    basis: str
    outcomes: np.ndarray
    q: np.ndarray
    p: np.ndarray
    trajectory: np.ndarray
    results: list[TeleportResult] = field(default_factory=list)

    @property
    def shots(self) -> int:
        return self.outcomes.size

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.outcomes, minlength=1 << self.n)

    @property
    def histogram(self) -> dict[str, int]:
        return {format(i, f"0{self.n}b"): int(c) for i, c in enumerate(self.counts)}

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.shots

    @property
    def fidelities(self) -> np.ndarray:
        return np.array([r.fidelity_to_input for r in self.results])[self.trajectory]

    def samples(self) -> Iterator[TeleportResult]:
        for t in self.trajectory:
            yield self.results[t]


class _Trajectories:
    def __init__(self, state: StateVector, shots: int, uniforms: np.ndarray, noise: NoiseParams | None):
        self.groups = [_Group(state, np.arange(shots))]
        self.u = uniforms
        self.noise = noise
        self._slots = count(SLOT_BOB + 1)

    def next_slot(self) -> int:
        s = next(self._slots)
        if s >= rng_mod.SHOT_WIDTH:
            raise RuntimeError("protocol needs more random draws per shot than the stream block provides")
        return s

    def each(self, fn) -> None:
        for g in self.groups:
            g.state = fn(g)

    def depolarize(self, qubits: Sequence[int], p: float, where=None) -> None:
        """One depolarizing draw per qubit; groups failing ``where`` had no gate and stay clean."""
        if self.noise is None:
            return
        for qb in qubits:
            slot = self.next_slot()
            if p == 0:
                continue
            new = []
            for g in self.groups:
                if where is not None and not where(g):
                    new.append(g)
                    continue
                choice = pauli_choice(self.u[g.shots, slot], p)
                for k in np.unique(choice):
                    st = g.state if k < 0 else apply_pauli(g.state, qb, "XYZ"[k])
                    new.append(replace(g, state=st, shots=g.shots[choice == k]))
            self.groups = new

    def depolarize_pairs(self, pairs: Sequence[tuple[int, int]], p: float) -> None:
        if self.noise is None:
            return
        for pair in pairs:
            slot = self.next_slot()
            if p == 0:
                continue
            new = []
            for g in self.groups:
                choice = pauli_pair_choice(self.u[g.shots, slot], p)
                for k in np.unique(choice):
                    st = g.state
                    if k >= 0:
                        for qb, name in zip(pair, PAULI_PAIRS[k]):
                            if name != "I":
                                st = apply_pauli(st, qb, name)
                    new.append(replace(g, state=st, shots=g.shots[choice == k]))
            self.groups = new

    def measure(self, register: Sequence[int], slot: int, attr: str) -> None:
        new = []
        for g in self.groups:
            probs = register_probabilities(g.state, register)
            outcomes = sample_index(probs, self.u[g.shots, slot])
            for o in np.unique(outcomes):
                st, pr = collapse(g.state, register, int(o))
                ng = replace(g, state=st, shots=g.shots[outcomes == o], prob=g.prob * pr)
                setattr(ng, attr, int(o))
                new.append(ng)
        self.groups = new

    def misread(self, n: int, attr: str) -> None:
        if self.noise is None:
            return
        slots = [self.next_slot() for _ in range(n)]
        if self.noise.readout_flip == 0:
            return
        new = []
        for g in self.groups:
            masks = readout_mask(self.u[np.ix_(g.shots, slots)], self.noise.readout_flip)
            for m in np.unique(masks):
                ng = replace(g, shots=g.shots[masks == m])
                setattr(ng, attr, getattr(g, attr) ^ int(m))
                new.append(ng)
        self.groups = new


def run_protocol_sampled(phi: StateVector, config: ProtocolConfig, basis: str = "Z", tag: int = 0) -> SampledRun:
    """Shot-by-shot trajectories of the protocol, ending in a measurement of Bob's coin.

    Shots with identical histories are simulated once. Shot ``s`` draws all its
    randomness from stream ``(config.seed, tag, s)``: slot 0 samples the
    position, slot 1 Alice's coin, slot 2 Bob's coin, later slots feed noise.
    Noise, when configured, follows every gate: a two-qubit depolarizing
    channel of strength ``p2`` on each (coin bit, position bit) pair after a
    conditional shift, ``p1`` on each qubit after single-qubit gates and after
    a non-trivial correction; readout flips act on all three measurements.
    """
    _check_input(phi)
    n = phi.num_qubits
    if config.n != n:
        raise ValueError(f"config.n={config.n} does not match a {n}-qubit input")
    noise = config.noise
    p1 = noise.p1 if noise else 0.0
    p2 = noise.p2 if noise else 0.0
    lay = build_layout(n)
    pos, alice, bob = lay.position, lay.alice_coin, lay.bob_coin
    u = rng_mod.shot_uniforms(config.seed, config.shots, tag=tag)

    tr = _Trajectories(initial_state(phi, lay), config.shots, u, noise)
    tr.each(lambda g: conditional_shift(g.state, alice, pos))
    tr.depolarize_pairs(list(zip(alice, pos)), p2)
    for qb in bob:
        tr.each(lambda g, qb=qb: apply_single_qubit(g.state, H, qb))
        tr.depolarize([qb], p1)
    tr.each(lambda g: conditional_shift(g.state, bob, pos))
    tr.depolarize_pairs(list(zip(bob, pos)), p2)

    tr.measure(pos, SLOT_Q, "q")
    tr.misread(n, "q")
    for qb in alice:
        tr.each(lambda g, qb=qb: apply_single_qubit(g.state, H, qb))
        tr.depolarize([qb], p1)
    tr.measure(alice, SLOT_P, "p")
    tr.misread(n, "p")

    corrections = {}
    for g in tr.groups:
        key = (g.p, g.q)
        if key not in corrections:
            corrections[key] = correction_unitary(g.p, g.q, n)
        g.state = apply_unitary(g.state, corrections[key], bob)
    tr.depolarize(bob, p1, where=lambda g: not _is_identity(corrections[(g.p, g.q)]))

    for g in tr.groups:
        bob_state = extract_register_state(g.state, bob)
        g.result = TeleportResult(MeasurementRecord(g.q, g.p, g.prob), bob_state, overlap_fidelity(phi, bob_state))

    for gate in _basis_gates(basis):
        for qb in bob:
            tr.each(lambda g, qb=qb, gate=gate: apply_single_qubit(g.state, gate, qb))
            tr.depolarize([qb], p1)

    outcomes = np.empty(config.shots, dtype=np.int64)
    q_arr = np.empty(config.shots, dtype=np.int64)
    p_arr = np.empty(config.shots, dtype=np.int64)
    traj = np.empty(config.shots, dtype=np.int64)
    results: list[TeleportResult] = []
    for g in tr.groups:
        probs = register_probabilities(g.state, bob)
        outcomes[g.shots] = sample_index(probs, u[g.shots, SLOT_BOB])
        q_arr[g.shots] = g.q
        p_arr[g.shots] = g.p
        traj[g.shots] = len(results)
        results.append(g.result)
    if noise is not None:
        slots = [tr.next_slot() for _ in range(n)]
        if noise.readout_flip > 0:
            outcomes ^= readout_mask(u[:, slots], noise.readout_flip)
    return SampledRun(n=n, basis=basis.upper(), outcomes=outcomes, q=q_arr, p=p_arr, trajectory=traj, results=results)
