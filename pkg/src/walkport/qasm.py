"""OpenQASM 2.0 export of the teleportation circuit.

The conditional shift ``|k>|l> -> |k>|(l + k) mod 2**n>`` is compiled to
controlled increments: coin bit ``i`` (weight ``2**(n-1-i)``) increments the
top ``i + 1`` position bits. Each increment is a ladder of multi-controlled X
gates, and every multi-controlled X is a Toffoli V-chain over clean ancillas
that are uncomputed afterwards.

Bob's correction ``U_pq`` factorises as a q-dependent permutation
``x -> (q - x) mod d`` followed by Z on the bits of ``p``, so the circuit
tests the position register ``cq`` and Alice's register ``cp`` separately.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as rng_mod
from .protocol import RegisterLayout
from .states import parse_state_spec
from .statevector import (
    H,
    X,
    Z,
    StateVector,
    apply_controlled_permutation,
    apply_single_qubit,
    collapse,
    register_probabilities,
    sample_index,
    u3,
)

GATES = {"h": 0, "x": 0, "z": 0, "u3": 3, "cx": 0, "ccx": 0}
ARITY = {"h": 1, "x": 1, "z": 1, "u3": 1, "cx": 2, "ccx": 3}
SELF_INVERSE = {"h", "x", "z", "cx", "ccx"}
MAX_SYNTH_N = 3


@dataclass(frozen=True)
class Instruction:
    """A gate or measurement. ``qubits`` lists controls first, target last."""

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    condition: tuple[str, int] | None = None
    clbit: tuple[str, int] | None = None

    def conditioned(self, creg: str, value: int) -> "Instruction":
        return Instruction(self.name, self.qubits, self.params, (creg, value), self.clbit)


@dataclass
class CircuitIR:
    num_qubits: int
    cregs: dict[str, int] = field(default_factory=dict)
    ops: list[Instruction] = field(default_factory=list)

    def validate(self) -> None:
        measured = set()
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(f"{op.name} acts on qubit {q} outside q[{self.num_qubits}]")
            if len(set(op.qubits)) != len(op.qubits):
                raise ValueError(f"{op.name} repeats a qubit: {op.qubits}")
            if op.condition is not None:
                reg, val = op.condition
                if reg not in self.cregs or not 0 <= val < (1 << self.cregs[reg]):
                    raise ValueError(f"bad condition {op.condition}")
            if op.name == "measure":
                if op.clbit is None or op.clbit[0] not in self.cregs or not 0 <= op.clbit[1] < self.cregs[op.clbit[0]]:
                    raise ValueError(f"bad measurement target {op.clbit}")
                if op.clbit in measured:
                    raise ValueError(f"classical bit {op.clbit} measured twice")
                measured.add(op.clbit)
            elif op.name not in GATES:
                raise ValueError(f"unsupported gate {op.name!r}")
            elif len(op.qubits) != ARITY[op.name] or len(op.params) != GATES[op.name]:
                raise ValueError(f"malformed {op.name}: qubits={op.qubits} params={op.params}")

    def count(self, name: str, conditioned: bool | None = None) -> int:
        return sum(
            1
            for op in self.ops
            if op.name == name and (conditioned is None or (op.condition is not None) == conditioned)
        )


# --- decompositions -----------------------------------------------------------


def mcx(controls: Sequence[int], target: int, ancilla: Sequence[int] = ()) -> list[Instruction]:
    """Multi-controlled X from cx/ccx, using ``len(controls) - 2`` clean ancillas."""
    controls = list(controls)
    k = len(controls)
    if k == 0:
        return [Instruction("x", (target,))]
    if k == 1:
        return [Instruction("cx", (controls[0], target))]
    if k == 2:
        return [Instruction("ccx", (controls[0], controls[1], target))]
    need = k - 2
    if len(ancilla) < need:
        raise ValueError(f"a {k}-control X needs {need} ancilla qubits, got {len(ancilla)}")
    anc = list(ancilla[:need])
    compute = [Instruction("ccx", (controls[0], controls[1], anc[0]))]
    for i in range(2, k - 1):
        compute.append(Instruction("ccx", (controls[i], anc[i - 2], anc[i - 1])))
    return compute + [Instruction("ccx", (controls[-1], anc[-1], target))] + compute[::-1]


def increment(register: Sequence[int], controls: Sequence[int] = (), ancilla: Sequence[int] = ()) -> list[Instruction]:
    """``|v> -> |v + 1 mod 2**m>`` on ``register`` (MSB first), optionally controlled."""
    reg = list(register)
    ops: list[Instruction] = []
    for j in range(len(reg)):
        ops += mcx(list(controls) + reg[j + 1 :], reg[j], ancilla)
    return ops


def add_constant(register: Sequence[int], value: int, ancilla: Sequence[int] = ()) -> list[Instruction]:
    """``|v> -> |v + value mod 2**m>`` as increments of the upper sub-registers."""
    m = len(register)
    ops: list[Instruction] = []
    for w in range(m):
        if (value >> w) & 1:
            ops += increment(register[: m - w], (), ancilla)
    return ops


def decompose_conditional_shift(n: int, coin: Sequence[int], position: Sequence[int], ancilla: Sequence[int] = ()) -> list[Instruction]:
    if n < 1 or len(coin) != n or len(position) != n:
        raise ValueError("coin and position must both hold n >= 1 qubits")
    need = max(0, n - 2)
    if len(ancilla) < need:
        raise ValueError(f"conditional shift on n={n} needs {need} ancilla qubits, got {len(ancilla)}")
    ops: list[Instruction] = []
    for i, c in enumerate(coin):
        ops += increment(position[: i + 1], [c], ancilla)
    return ops


def reflect_and_add(register: Sequence[int], q: int, ancilla: Sequence[int] = ()) -> list[Instruction]:
    """``|x> -> |(q - x) mod 2**m>``, built as ``NOT(x + (2**m - 1 - q))``."""
    m = len(register)
    d = 1 << m
    return add_constant(register, (d - 1 - q) % d, ancilla) + [Instruction("x", (b,)) for b in register]


def phase_flips(register: Sequence[int], p: int) -> list[Instruction]:
    m = len(register)
    return [Instruction("z", (b,)) for i, b in enumerate(register) if (p >> (m - 1 - i)) & 1]


def cancel_pairs(ops: Iterable[Instruction]) -> list[Instruction]:
    """Drop adjacent (on their qubits) identical self-inverse gates."""
    out: list[Instruction] = []
    for op in ops:
        if op.name in SELF_INVERSE:
            for i in range(len(out) - 1, -1, -1):
                prev = out[i]
                if prev == op:
                    del out[i]
                    break
                if set(prev.qubits) & set(op.qubits) or prev.name == "measure":
                    out.append(op)
                    break
            else:
                out.append(op)
        else:
            out.append(op)
    return out


def export_layout(n: int) -> RegisterLayout:
    """Ancillas first, then position, Alice's coin and Bob's coin."""
    a = max(0, n - 2)
    return RegisterLayout(
        position=tuple(range(a, a + n)),
        alice_coin=tuple(range(a + n, a + 2 * n)),
        bob_coin=tuple(range(a + 2 * n, a + 3 * n)),
        ancilla=tuple(range(a)),
    )


def state_prep(spec: str, register: Sequence[int]) -> list[Instruction]:
    """Gates preparing a named payload state on ``register`` from |0...0>."""
    text = spec.strip()
    kind, _, arg = text.partition(":")
    kind = kind.lower()
    n = len(register)
    r = list(register)
    if kind == "vec":
        raise ValueError("vec: specs are simulator-only; no gate synthesis")
    need = {"u3": 1, "bell": 2, "ghz": 3, "w": 3}.get(kind)
    if need is None:
        raise ValueError(f"cannot synthesise state spec {spec!r}")
    if need != n:
        raise ValueError(f"state {kind!r} has {need} qubit(s) but n={n}")
    if kind == "u3":
        theta, phi, lam = (float(v) for v in arg.split(","))
        return [Instruction("u3", (r[0],), (theta, phi, lam))]
    if kind == "bell":
        return [Instruction("h", (r[0],)), Instruction("cx", (r[0], r[1]))]
    if kind == "ghz":
        return [Instruction("h", (r[0],)), Instruction("cx", (r[0], r[1])), Instruction("cx", (r[1], r[2]))]
    a, b, c = r
    theta = 2 * np.arccos(np.sqrt(2 / 3))
    ops = [
        Instruction("u3", (a,), (theta, 0.0, 0.0)),
        # b -> |+> when a is 0: controlled-Ry(pi/2) sandwiched in X on the control
        Instruction("x", (a,)),
        Instruction("u3", (b,), (np.pi / 4, 0.0, 0.0)),
        Instruction("cx", (a, b)),
        Instruction("u3", (b,), (-np.pi / 4, 0.0, 0.0)),
        Instruction("cx", (a, b)),
        Instruction("x", (a,)),
        # c -> 1 when a and b are both 0
        Instruction("x", (a,)),
        Instruction("x", (b,)),
        Instruction("ccx", (a, b, c)),
        Instruction("x", (a,)),
        Instruction("x", (b,)),
    ]
    return cancel_pairs(ops)


def build_protocol_circuit(n: int, input_spec: str, measure_bob: bool = False) -> CircuitIR:
    """Full teleportation circuit: state prep, two walk steps, Alice's measurements, Bob's corrections."""
    if not 1 <= n <= MAX_SYNTH_N:
        raise ValueError(f"n={n} is out of synthesis range 1..{MAX_SYNTH_N}")
    lay = export_layout(n)
    pos, alice, bob, anc = list(lay.position), list(lay.alice_coin), list(lay.bob_coin), list(lay.ancilla)
    d = 1 << n
    cregs = {"cq": n, "cp": n}
    if measure_bob:
        cregs["cb"] = n
    ops = state_prep(input_spec, alice)
    ops += decompose_conditional_shift(n, alice, pos, anc)
    ops += [Instruction("h", (b,)) for b in bob]
    ops += decompose_conditional_shift(n, bob, pos, anc)
    # creg bit 0 is the least significant, so the register's last qubit lands there
    ops += [Instruction("measure", (qb,), clbit=("cq", n - 1 - i)) for i, qb in enumerate(pos)]
    ops += [Instruction("h", (a,)) for a in alice]
    ops += [Instruction("measure", (qb,), clbit=("cp", n - 1 - i)) for i, qb in enumerate(alice)]
    for q in range(d):
        ops += [g.conditioned("cq", q) for g in cancel_pairs(reflect_and_add(bob, q, anc))]
    for p in range(1, d):
        ops += [g.conditioned("cp", p) for g in phase_flips(bob, p)]
    if measure_bob:
        ops += [Instruction("measure", (qb,), clbit=("cb", n - 1 - i)) for i, qb in enumerate(bob)]
    ir = CircuitIR(num_qubits=lay.num_qubits, cregs=cregs, ops=ops)
    ir.validate()
    return ir


# --- text ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_qasm(ir: CircuitIR) -> str:
    ir.validate()
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{ir.num_qubits}];"]
    lines += [f"creg {name}[{size}];" for name, size in ir.cregs.items()]
    for op in ir.ops:
        args = ",".join(f"q[{q}]" for q in op.qubits)
        if op.name == "measure":
            text = f"measure {args} -> {op.clbit[0]}[{op.clbit[1]}];"
        elif op.params:
            text = f"{op.name}({','.join(_fmt(p) for p in op.params)}) {args};"
        else:
            text = f"{op.name} {args};"
        if op.condition is not None:
            text = f"if({op.condition[0]}=={op.condition[1]}) {text}"
        lines.append(text)
    return "\n".join(lines) + "\n"


_LINE = re.compile(
    r"^(?:if\((?P<creg>\w+)==(?P<val>\d+)\)\s*)?"
    r"(?P<name>[a-z0-9]+)(?:\((?P<params>[^)]*)\))?\s+(?P<args>[^;]*?)(?:\s*->\s*(?P<cl>\w+)\[(?P<cbit>\d+)\])?;$"
)


def parse_qasm(text: str) -> CircuitIR:
    """Read back a circuit written by :func:`emit_qasm` (not general OpenQASM)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if lines[:2] != ["OPENQASM 2.0;", 'include "qelib1.inc";']:
        raise ValueError("missing OpenQASM 2.0 header")
    num_qubits = None
    cregs: dict[str, int] = {}
    ops: list[Instruction] = []
    for ln in lines[2:]:
        if m := re.fullmatch(r"qreg q\[(\d+)\];", ln):
            num_qubits = int(m.group(1))
            continue
        if m := re.fullmatch(r"creg (\w+)\[(\d+)\];", ln):
            cregs[m.group(1)] = int(m.group(2))
            continue
        m = _LINE.match(ln)
        if m is None:
            raise ValueError(f"cannot parse line {ln!r}")
        qubits = tuple(int(v) for v in re.findall(r"q\[(\d+)\]", m.group("args")))
        params = tuple(float(v) for v in m.group("params").split(",")) if m.group("params") else ()
        cond = (m.group("creg"), int(m.group("val"))) if m.group("creg") else None
        clbit = (m.group("cl"), int(m.group("cbit"))) if m.group("cl") else None
        ops.append(Instruction(m.group("name"), qubits, params, cond, clbit))
    if num_qubits is None:
        raise ValueError("missing qreg declaration")
    ir = CircuitIR(num_qubits, cregs, ops)
    ir.validate()
    return ir


# --- reference interpreter ------------------------------------------------------


def apply_instruction(state: StateVector, op: Instruction) -> StateVector:
    if op.name == "h":
        return apply_single_qubit(state, H, op.qubits[0])
    if op.name == "x":
        return apply_single_qubit(state, X, op.qubits[0])
    if op.name == "z":
        return apply_single_qubit(state, Z, op.qubits[0])
    if op.name == "u3":
        return apply_single_qubit(state, u3(*op.params), op.qubits[0])
    if op.name in ("cx", "ccx"):
        *ctrl, tgt = op.qubits
        return apply_controlled_permutation(state, ctrl, (1 << len(ctrl)) - 1, [tgt], (1, 0))
    raise ValueError(f"cannot apply {op.name!r}")


def apply_gates(state: StateVector, ops: Iterable[Instruction]) -> StateVector:
    for op in ops:
        if op.name == "measure" or op.condition is not None:
            raise ValueError("apply_gates takes unconditioned gates only")
        state = apply_instruction(state, op)
    return state


@dataclass(eq=False)
class _Branch:
    state: StateVector
    shots: np.ndarray
    bits: dict[str, int]


def run_circuit(ir: CircuitIR, shots: int, seed: int = 0, tag: int = 0) -> dict[str, np.ndarray]:
    """Sample the circuit shot by shot; returns each creg's integer value per shot.

    Mid-circuit measurements collapse the state and feed ``if`` conditions.
    Measurement number ``k`` of shot ``s`` uses slot ``k`` of stream ``(seed, tag, s)``.
    """
    ir.validate()
    n_meas = ir.count("measure")
    if n_meas > rng_mod.SHOT_WIDTH:
        raise ValueError("too many measurements for one shot stream block")
    u = rng_mod.shot_uniforms(seed, shots, tag=tag)
    start = StateVector(np.eye(1, 1 << ir.num_qubits, dtype=complex).ravel())
    branches = [_Branch(start, np.arange(shots), {name: 0 for name in ir.cregs})]
    slot = 0
    for op in ir.ops:
        if op.name == "measure":
            new = []
            for b in branches:
                probs = register_probabilities(b.state, op.qubits)
                outs = sample_index(probs, u[b.shots, slot])
                for o in np.unique(outs):
                    st, _ = collapse(b.state, op.qubits, int(o))
                    bits = dict(b.bits)
                    reg, idx = op.clbit
                    bits[reg] = (bits[reg] & ~(1 << idx)) | (int(o) << idx)
                    new.append(_Branch(st, b.shots[outs == o], bits))
            branches = new
            slot += 1
            continue
        for b in branches:
            if op.condition is None or b.bits[op.condition[0]] == op.condition[1]:
                b.state = apply_instruction(b.state, op)
    out = {name: np.empty(shots, dtype=np.int64) for name in ir.cregs}
    for b in branches:
        for name, val in b.bits.items():
            out[name][b.shots] = val
    return out


def enumerate_branches(ir: CircuitIR) -> list[tuple[dict[str, int], StateVector, float]]:
    """Every measurement history with nonzero weight: ``(creg values, final state, probability)``."""
    ir.validate()
    start = StateVector(np.eye(1, 1 << ir.num_qubits, dtype=complex).ravel())
    branches = [({name: 0 for name in ir.cregs}, start, 1.0)]
    for op in ir.ops:
        if op.name == "measure":
            new = []
            for bits, st, pr in branches:
                probs = register_probabilities(st, op.qubits)
                for o in np.flatnonzero(probs > 1e-12):
                    collapsed, w = collapse(st, op.qubits, int(o))
                    nb = dict(bits)
                    reg, idx = op.clbit
                    nb[reg] = (nb[reg] & ~(1 << idx)) | (int(o) << idx)
                    new.append((nb, collapsed, pr * w))
            branches = new
            continue
        branches = [
            (bits, apply_instruction(st, op) if op.condition is None or bits[op.condition[0]] == op.condition[1] else st, pr)
            for bits, st, pr in branches
        ]
    return branches


@dataclass(frozen=True)
class RoundTrip:
    passed: bool
    shots: int
    observed: np.ndarray
    expected: np.ndarray
    sigma: np.ndarray
    min_branch_fidelity: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.observed - self.expected)))

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"verify: {verdict} shots={self.shots} max|dP|={self.max_deviation:.4f} "
            f"(3-sigma bands) min branch fidelity={self.min_branch_fidelity:.12f}"
        )


def verify_roundtrip(n: int, spec: str, shots: int = 8192, seed: int = 0) -> RoundTrip:
    """Emit, read back and re-simulate the circuit; compare with the direct protocol.

    Bob's sampled Z distribution must sit inside the 3-sigma binomial band of
    the exact protocol distribution, and every measurement branch must leave
    Bob holding the payload (fidelity 1 within 1e-9).
    """
    from .protocol import exact_distribution
    from .statevector import extract_register_state, overlap_fidelity

    phi = synthesizable_state(spec)
    ir = parse_qasm(emit_qasm(build_protocol_circuit(n, spec, measure_bob=True)))
    observed = np.bincount(run_circuit(ir, shots, seed)["cb"], minlength=1 << n) / shots
    expected = exact_distribution(phi)
    sigma = np.sqrt(expected * (1 - expected) / shots)
    in_band = bool(np.all(np.abs(observed - expected) <= 3 * sigma + 1e-12))

    bare = build_protocol_circuit(n, spec)
    bob = export_layout(n).bob_coin
    fids = [overlap_fidelity(phi, extract_register_state(st, bob)) for _, st, _ in enumerate_branches(bare)]
    min_fid = float(min(fids))
    return RoundTrip(in_band and min_fid > 1 - 1e-9, shots, observed, expected, sigma, min_fid)


def synthesizable_state(spec: str) -> StateVector:
    """Simulator state for a spec that the exporter can also synthesise."""
    if spec.strip().lower().startswith("vec:"):
        raise ValueError("vec: specs are simulator-only; no gate synthesis")
    return parse_state_spec(spec)
