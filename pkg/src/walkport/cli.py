"""Command-line driver: ``walkport teleport | tomo | export``.

Every run prints one JSON document (or writes it with ``--out``). With
``--no-meta`` the timestamp and timing fields are dropped so identical
invocations give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .noise import NoiseParams
from .protocol import ProtocolConfig, exact_distribution, run_all_branches, run_protocol_sampled
from .qasm import MAX_SYNTH_N, build_protocol_circuit, emit_qasm, verify_roundtrip
from .states import parse_state_spec
from .statevector import StateVector
from .tomography import (
    estimate_expectations,
    fidelity,
    load_rho,
    rho_from_expectations,
    rho_theoretical,
    rho_to_json,
)

SEED_ENV = "WALKPORT_SEED"
DEFAULT_SHOTS = 8192


class UsageError(ValueError):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _load_state(args) -> StateVector:
    try:
        phi = parse_state_spec(args.state)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.n is not None and args.n != phi.num_qubits:
        raise UsageError(f"--n {args.n} does not match state {args.state!r} ({phi.num_qubits} qubits)")
    return phi


def _noise(args) -> NoiseParams | None:
    if args.noise is None:
        return None
    try:
        return NoiseParams.parse(args.noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _noise_json(noise: NoiseParams | None):
    if noise is None:
        return None
    return {"p1": noise.p1, "p2": noise.p2, "readout_flip": noise.readout_flip}


def _labels(n: int) -> list[str]:
    return [format(i, f"0{n}b") for i in range(1 << n)]


def _seed(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if seed < 0:
        raise UsageError("--seed must be non-negative")
    return seed


def cmd_teleport(args) -> dict:
    phi = _load_state(args)
    n = phi.num_qubits
    noise = _noise(args)
    seed = _seed(args)
    labels = _labels(n)
    if args.shots < 1 or args.repeats < 1:
        raise UsageError("--shots and --repeats must be at least 1")
    config = {
        "n": n,
        "state": args.state,
        "mode": "exact_branches" if args.exact else "sampled",
        "shots": None if args.exact else args.shots,
        "repeats": 1 if args.exact else args.repeats,
        "seed": seed,
        "noise": _noise_json(noise),
    }
    report: dict = {"command": "teleport", "config": config, "outcomes": labels}
    if args.exact:
        if noise is not None:
            raise UsageError("--exact is noiseless; drop --noise or sample with --shots")
        probs = exact_distribution(phi)
        branches = run_all_branches(phi)
        report["histogram"] = {lab: {"count": None, "probability": float(p)} for lab, p in zip(labels, probs)}
        report["runs"] = []
        report["statistics"] = {lab: {"mean": float(p), "std": 0.0} for lab, p in zip(labels, probs)}
        fids = [b.fidelity_to_input for b in branches]
        report["fidelity"] = {"mean": float(np.mean(fids)), "min": float(np.min(fids))}
        return report

    cfg = ProtocolConfig(n=n, mode="sampled", shots=args.shots, seed=seed, noise=noise)
    runs = []
    total = np.zeros(1 << n, dtype=np.int64)
    per_run = []
    run_fids = []
    for r in range(args.repeats):
        res = run_protocol_sampled(phi, cfg, tag=r)
        counts = res.counts
        total += counts
        per_run.append(counts / args.shots)
        fid = float(res.fidelities.mean())
        run_fids.append(fid)
        runs.append(
            {
                "repeat": r,
                "counts": {lab: int(c) for lab, c in zip(labels, counts)},
                "probabilities": {lab: float(c) / args.shots for lab, c in zip(labels, counts)},
                "mean_fidelity": fid,
            }
        )
    per_run = np.array(per_run)
    ddof = 1 if args.repeats > 1 else 0
    n_total = int(total.sum())
    report["histogram"] = {
        lab: {"count": int(c), "probability": float(c) / n_total} for lab, c in zip(labels, total)
    }
    report["runs"] = runs
    report["statistics"] = {
        lab: {"mean": float(per_run[:, i].mean()), "std": float(per_run[:, i].std(ddof=ddof))}
        for i, lab in enumerate(labels)
    }
    report["fidelity"] = {"mean": float(np.mean(run_fids)), "std": float(np.std(run_fids, ddof=ddof))}
    return report


def _teleport_runner(phi: StateVector, noise: NoiseParams | None):
    def runner(basis: str, shots: int | None, seed: int):
        if shots is None:
            return exact_distribution(phi, basis)
        cfg = ProtocolConfig(n=1, shots=shots, seed=seed, noise=noise)
        return run_protocol_sampled(phi, cfg, basis=basis, tag="XYZ".index(basis)).probabilities

    return runner


def cmd_tomo(args) -> dict:
    if args.n is not None and args.n != 1:
        raise UsageError("tomography supports single qubits")
    if args.rho_t is None and args.state is None:
        raise UsageError("need --state or --rho-t")
    phi = None
    if args.state is not None:
        phi = _load_state(args)
        if phi.num_qubits != 1:
            raise UsageError("tomography supports single qubits")
    noise = _noise(args)
    seed = _seed(args)
    rho_t = load_rho(args.rho_t) if args.rho_t else rho_theoretical(phi)
    config = {
        "n": 1,
        "state": args.state,
        "mode": "exact_branches" if args.exact else "sampled",
        "shots": None if args.exact else args.shots,
        "seed": seed,
        "noise": _noise_json(noise),
        "rho_t_file": str(args.rho_t) if args.rho_t else None,
        "rho_e_file": str(args.rho_e) if args.rho_e else None,
    }
    report: dict = {"command": "tomo", "config": config}
    if args.rho_e:
        rho_e = load_rho(args.rho_e)
        report["expectations"] = None
    else:
        if phi is None:
            raise UsageError("simulated tomography needs --state")
        if args.exact and noise is not None:
            raise UsageError("--exact is noiseless; drop --noise or sample with --shots")
        shots = None if args.exact else args.shots
        if shots is not None and shots < 1:
            raise UsageError("--shots must be at least 1")
        t = estimate_expectations(_teleport_runner(phi, noise), shots=shots, seed=seed)
        rho_e = rho_from_expectations(t)
        report["expectations"] = {"x": t.x, "y": t.y, "z": t.z}
    report["rho_t"] = rho_to_json(rho_t)
    report["rho_e"] = rho_to_json(rho_e)
    report["fidelity"] = fidelity(rho_t, rho_e)
    return report


def cmd_export(args) -> dict | None:
    if args.n is not None and not 1 <= args.n <= MAX_SYNTH_N:
        raise UsageError(f"--n {args.n} is out of synthesis range 1..{MAX_SYNTH_N}")
    phi = _load_state(args)
    n = phi.num_qubits
    if not 1 <= n <= MAX_SYNTH_N:
        raise UsageError(f"n={n} is out of synthesis range 1..{MAX_SYNTH_N}")
    try:
        ir = build_protocol_circuit(n, args.state, measure_bob=not args.no_bob_measure)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = emit_qasm(ir)
    if args.out:
        Path(args.out).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    if args.verify:
        rt = verify_roundtrip(n, args.state, shots=args.shots, seed=_seed(args))
        print(rt.summary(), file=sys.stdout if args.out else sys.stderr)
        if not rt.passed:
            raise RuntimeError("round-trip verification failed")
    return None


def _write_csv(path: str, report: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outcome", "count", "probability"])
        for lab, entry in report["histogram"].items():
            w.writerow([lab, "" if entry["count"] is None else entry["count"], repr(entry["probability"])])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walkport", description="Teleportation by coined quantum walks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_state=True):
        p.add_argument("--n", type=int, help="payload qubit count (checked against --state)")
        p.add_argument("--state", required=need_state, help="bell | ghz | w | u3:t,p,l | vec:re,im;...")
        p.add_argument("--seed", type=int, help=f"RNG seed (default: ${SEED_ENV} or 0)")
        p.add_argument("--shots", type=int, default=DEFAULT_SHOTS)

    def reporting(p):
        p.add_argument("--noise", help="'p1,p2,readout' or a preset name (paperlike)")
        p.add_argument("--exact", action="store_true", help="enumerate all branches instead of sampling")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--no-meta", action="store_true", help="omit timestamp and duration")

    p = sub.add_parser("teleport", help="run the teleportation experiment")
    common(p)
    reporting(p)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--csv", help="also write outcome,count,probability here")
    p.set_defaults(func=cmd_teleport)

    p = sub.add_parser("tomo", help="single-qubit tomography of the teleported state")
    common(p, need_state=False)
    reporting(p)
    p.add_argument("--rho-e", help="JSON density matrix to use instead of simulated tomography")
    p.add_argument("--rho-t", help="JSON density matrix to use as the reference state")
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("export", help="write the protocol as OpenQASM 2.0")
    common(p)
    p.add_argument("-o", "--out", help="output .qasm path (default: stdout)")
    p.add_argument("--verify", action="store_true", help="re-simulate the emitted circuit and compare")
    p.add_argument("--no-bob-measure", action="store_true", help="leave Bob's coin unmeasured")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        report = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"walkport: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"walkport: error: {exc}", file=sys.stderr)
        return 1
    if report is None:
        return 0
    if not args.no_meta:
        report["meta"] = {
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "duration_s": time.perf_counter() - start,
        }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None):
        _write_csv(args.csv, report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
