"""Payload states and the ``--state`` mini-language.

Spec strings::

    bell | ghz | w
    u3:<theta>,<phi>,<lambda>        angles in radians, applied to |0>
    vec:<re>,<im>;<re>,<im>;...      explicit amplitudes, renormalized
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .statevector import H, StateVector, apply_controlled_permutation, apply_single_qubit, new_basis_state, u3

CNOT_MAP = (1, 0)


def prepare_arbitrary(amplitudes: Sequence[complex]) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex).ravel()
    if amps.size < 2 or amps.size & (amps.size - 1):
        raise ValueError(f"amplitude count must be a power of two >= 2, got {amps.size}")
    norm = np.linalg.norm(amps)
    if norm < 1e-12:
        raise ValueError("unnormalizable: zero vector")
    if abs(norm - 1) > 1e-6:
        raise ValueError(f"amplitudes must be normalized to within 1e-6 (norm {norm:.9f})")
    return StateVector(amps / norm)


def prepare_u3(theta: float, phi: float, lam: float) -> StateVector:
    return apply_single_qubit(new_basis_state(1), u3(theta, phi, lam), 0)


def prepare_bell() -> StateVector:
    psi = apply_single_qubit(new_basis_state(2), H, 0)
    return apply_controlled_permutation(psi, [0], 1, [1], CNOT_MAP)


def prepare_ghz() -> StateVector:
    psi = apply_single_qubit(new_basis_state(3), H, 0)
    psi = apply_controlled_permutation(psi, [0], 1, [1], CNOT_MAP)
    return apply_controlled_permutation(psi, [1], 1, [2], CNOT_MAP)


def prepare_w() -> StateVector:
    # direct amplitude assignment: (|001> + |010> + |100>)/sqrt(3)
    amps = np.zeros(8, dtype=complex)
    amps[[1, 2, 4]] = 1 / np.sqrt(3)
    return StateVector(amps)


NAMED = {"bell": prepare_bell, "ghz": prepare_ghz, "w": prepare_w}


def _floats(text: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"could not parse numbers in {text!r}") from None
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)} in {text!r}")
    return vals


def parse_state_spec(spec: str) -> StateVector:
    """Build the payload state described by ``spec``."""
    text = spec.strip()
    kind, _, arg = text.partition(":")
    kind = kind.lower()
    if kind in NAMED and not arg:
        return NAMED[kind]()
    if kind == "u3" and arg:
        return prepare_u3(*_floats(arg, 3))
    if kind == "vec" and arg:
        amps = []
        for pair in arg.split(";"):
            vals = _floats(pair)
            if len(vals) not in (1, 2):
                raise ValueError(f"amplitude entries are 're' or 're,im', got {pair!r}")
            amps.append(complex(vals[0], vals[1] if len(vals) == 2 else 0.0))
        return prepare_arbitrary(amps)
    raise ValueError(f"unknown state spec {spec!r}; use bell, ghz, w, u3:t,p,l or vec:re,im;...")
