"""Stochastic Pauli noise for trajectory simulation.

Each channel consumes exactly one uniform per decision so that the shot
streams in :mod:`walkport.rng` stay aligned whatever the noise strength.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statevector import StateVector, X, Y, Z, apply_single_qubit

_PAULI_ORDER = ("X", "Y", "Z")
_PAULI_MATS = {"X": X, "Y": Y, "Z": Z}


@dataclass(frozen=True)
class NoiseParams:
    """Per-gate depolarizing probabilities and a symmetric readout flip rate."""

    p1: float = 0.0
    p2: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.readout_flip <= 0.5:
            raise ValueError(f"readout_flip must be in [0, 0.5], got {self.readout_flip}")

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0 and self.p2 == 0 and self.readout_flip == 0

    @classmethod
    def parse(cls, text: str) -> "NoiseParams":
        """Parse ``"paperlike"`` or ``"p1,p2,readout"``."""
        text = text.strip()
        if text in PRESETS:
            return PRESETS[text]
        parts = text.split(",")
        if len(parts) != 3:
            raise ValueError(f"noise must be a preset name or 'p1,p2,readout', got {text!r}")
        return cls(*(float(p) for p in parts))


# Illustrative only; not fitted to any device.
PRESETS = {
    "none": NoiseParams(),
    "paperlike": NoiseParams(p1=0.004, p2=0.03, readout_flip=0.02),
}


def pauli_choice(u: np.ndarray | float, p: float) -> np.ndarray:
    """Map uniforms to -1 (no error) or 0/1/2 for X/Y/Z, each with probability p/3."""
    u = np.asarray(u, dtype=float)
    if p <= 0:
        return np.full(u.shape, -1)
    fired = u < p
    idx = np.minimum((u / p * 3).astype(int), 2)
    return np.where(fired, idx, -1)


PAULI_PAIRS = tuple((a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I"))


def pauli_pair_choice(u: np.ndarray | float, p: float) -> np.ndarray:
    """Map uniforms to -1 (no error) or an index into ``PAULI_PAIRS``, each with probability p/15."""
    u = np.asarray(u, dtype=float)
    if p <= 0:
        return np.full(u.shape, -1)
    idx = np.minimum((u / p * 15).astype(int), 14)
    return np.where(u < p, idx, -1)


def apply_pauli(state: StateVector, qubit: int, pauli: str) -> StateVector:
    return apply_single_qubit(state, _PAULI_MATS[pauli], qubit)


def apply_depolarizing(
    state: StateVector,
    qubit: int,
    p: float,
    rng: np.random.Generator | None = None,
    pauli: str | None = None,
) -> StateVector:
    """One trajectory of the depolarizing channel.

    With probability ``p`` a uniformly chosen X, Y or Z hits ``qubit``.
    Passing ``pauli`` forces that error (used when ``p == 1`` in tests).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if pauli is None:
        if rng is None:
            raise ValueError("need an rng or a forced pauli")
        k = int(pauli_choice(rng.random(), p))
        if k < 0:
            return state
        pauli = _PAULI_ORDER[k]
    return apply_pauli(state, qubit, pauli)


def apply_depolarizing_pair(
    state: StateVector,
    qubits: tuple[int, int],
    p: float,
    rng: np.random.Generator | None = None,
    paulis: tuple[str, str] | None = None,
) -> StateVector:
    """One trajectory of the two-qubit depolarizing channel (15 non-identity Pauli pairs)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if paulis is None:
        if rng is None:
            raise ValueError("need an rng or forced paulis")
        k = int(pauli_pair_choice(rng.random(), p))
        if k < 0:
            return state
        paulis = PAULI_PAIRS[k]
    for qb, name in zip(qubits, paulis):
        if name != "I":
            state = apply_pauli(state, qb, name)
    return state


def flip_readout(outcome_bits: int, n: int, prob: float, rng: np.random.Generator) -> int:
    """Flip each of the ``n`` low bits of ``outcome_bits`` with probability ``prob``."""
    if not 0.0 <= prob <= 0.5:
        raise ValueError(f"readout flip probability must be in [0, 0.5], got {prob}")
    flips = rng.random(n) < prob
    mask = 0
    for b, f in enumerate(flips):
        if f:
            mask |= 1 << (n - 1 - b)
    return outcome_bits ^ mask


def readout_mask(u: np.ndarray, prob: float) -> np.ndarray:
    """Vectorised flip masks: ``u`` has shape ``(shots, n)``, MSB in column 0."""
    n = u.shape[1]
    weights = 1 << np.arange(n - 1, -1, -1)
    return ((u < prob) * weights).sum(axis=1)
