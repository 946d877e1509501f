"""Single-qubit tomography and Uhlmann fidelity.

Density matrices are plain complex ``numpy`` arrays. On disk they are JSON
objects ``{"dim": d, "re": [[...]], "im": [[...]]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .statevector import I2, X, Y, Z, StateVector, pauli_expectation

HERMITIAN_TOL = 1e-9
PURE_TOL = 1e-9


@dataclass(frozen=True)
class PauliTriple:
    x: float
    y: float
    z: float

    def __iter__(self):
        return iter((self.x, self.y, self.z))


def partial_trace(psi: StateVector, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of the qubits in ``keep`` (MSB first)."""
    n = psi.num_qubits
    keep = list(keep)
    rest = [q for q in range(n) if q not in keep]
    m = np.transpose(psi.amplitudes.reshape((2,) * n), keep + rest).reshape(1 << len(keep), -1)
    return m @ m.conj().T


def rho_theoretical(psi: StateVector, subset: Sequence[int] | None = None, require_pure: bool = False) -> np.ndarray:
    if subset is None or list(subset) == list(range(psi.num_qubits)):
        rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    else:
        rho = partial_trace(psi, subset)
    if require_pure and purity(rho) < 1 - PURE_TOL:
        raise ValueError("subset is entangled with the rest; reduced state is mixed")
    return rho


def rho_from_expectations(t: PauliTriple | Sequence[float]) -> np.ndarray:
    x, y, z = (float(v) for v in t)
    if not all(np.isfinite([x, y, z])):
        raise ValueError("expectations must be finite")
    return 0.5 * (I2 + x * X + y * Y + z * Z)


def expectations_from_rho(rho: np.ndarray) -> PauliTriple:
    return PauliTriple(*(float(np.trace(rho @ P).real) for P in (X, Y, Z)))


def purity(rho: np.ndarray) -> float:
    return float(np.trace(rho @ rho).real)


def check_density_matrix(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-6:
        raise ValueError(f"density matrix trace is {np.trace(rho).real}, expected 1")
    return rho


def repair_psd(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and restore unit trace."""
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w.min() >= 0:
        return rho
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real


def _sqrtm_psd(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho_t: np.ndarray, rho_e: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho_t) rho_e sqrt(rho_t)))**2``.

    A pure ``rho_t = |psi><psi|`` takes the shortcut ``<psi|rho_e|psi>``.
    """
    rho_t = repair_psd(check_density_matrix(rho_t))
    rho_e = repair_psd(check_density_matrix(rho_e))
    if rho_t.shape != rho_e.shape:
        raise ValueError("dimension mismatch")
    if purity(rho_t) > 1 - PURE_TOL:
        w, v = np.linalg.eigh(rho_t)
        psi = v[:, -1]
        return float(np.vdot(psi, rho_e @ psi).real)
    return uhlmann_fidelity(rho_t, rho_e)


def uhlmann_fidelity(rho_t: np.ndarray, rho_e: np.ndarray) -> float:
    s = _sqrtm_psd(rho_t)
    inner = s @ rho_e @ s
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)


def estimate_expectations(runner, shots: int | None = None, seed: int = 0) -> PauliTriple:
    """Three-setting tomography of one teleported qubit.

    ``runner(basis, shots, seed)`` must return the outcome probabilities of
    the qubit measured after rotating ``basis`` onto Z; with ``shots=None``
    they are exact, otherwise observed frequencies. Each expectation is
    ``P(0) - P(1)``, i.e. ``(N+ - N-)/shots`` when sampled.
    """
    if shots is not None and shots < 1:
        raise ValueError("shots must be at least 1")
    vals = []
    for basis in ("X", "Y", "Z"):
        probs = np.asarray(runner(basis, shots, seed))
        if probs.shape != (2,):
            raise ValueError("tomography supports single qubits")
        vals.append(float(probs[0] - probs[1]))
    return PauliTriple(*vals)


def exact_expectations(psi: StateVector, qubit: int = 0) -> PauliTriple:
    return PauliTriple(*(pauli_expectation(psi, qubit, a) for a in "XYZ"))


def rho_to_json(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"dim": int(rho.shape[0]), "re": rho.real.tolist(), "im": rho.imag.tolist()}


def rho_from_json(obj: dict) -> np.ndarray:
    try:
        dim = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros((dim, dim))), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed density matrix JSON: {exc}") from None
    for part in (re, im):
        if part.shape != (dim, dim):
            raise ValueError(f"density matrix JSON has shape {part.shape}, declared dim {dim}")
    return re + 1j * im


def load_rho(path: str | Path) -> np.ndarray:
    return rho_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
