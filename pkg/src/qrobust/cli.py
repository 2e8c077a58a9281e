"""Batch command-line interface.

Commands: verify-local, verify-global, inject, render, train.  Robustness
outcomes are report content, not exit status; exit codes are 0 (completed),
2 (input error), 3 (numerical non-convergence).  Reports are JSON, written
atomically, and byte-deterministic given the same inputs and seed except for
the isolated "timings" field.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .circuit import QmlModel
from .data import atomic_write_json, atomic_write_text, load_dataset, vector_to_pairs
from .errors import ConvergenceError, QRobustError
from .lipschitz import global_decision, lipschitz_dense
from .local import verify_dataset
from .noise import (
    RandomNoiseConfig,
    append_noise,
    apply_noise_spec,
    canonical_kind,
    inject_random_noise,
    noise_spec,
    standard_channel,
    strip_noise,
)
from .qasm import measurement_from_config, parse_program, render_text, serialize_qasm
from .tn import lipschitz_tn
from .training import ParameterizedModel, ParamRotation, adversarial_train, history_to_csv

K_STAR_ENGINE_AGREEMENT = 1e-5


class _InputProblem(Exception):
    """Wraps anything that should exit with code 2."""


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _InputProblem(f"cannot read {path}: {exc}") from exc


def _read_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise _InputProblem(f"{path} is not valid JSON: {exc}") from exc


def _default_sidecar(model_path: str, suffix: str) -> str:
    base, _ = os.path.splitext(model_path)
    return base + suffix


def _resolve_circuit(args):
    """Parse the .qasm file and apply the requested noise, in order:
    explicit sidecar placement, random injection, appended channel."""
    program = parse_program(_read_text(args.model))
    circuit = program.circuit
    resolved = {"model": args.model, "random_noise": None, "appended_noise": None,
                "noise_sidecar": None}

    sidecar_path = getattr(args, "noise_sidecar", None)
    if sidecar_path is None:
        candidate = _default_sidecar(args.model, ".noise.json")
        sidecar_path = candidate if os.path.exists(candidate) else None
    if sidecar_path:
        circuit = apply_noise_spec(circuit, _read_json(sidecar_path))
        resolved["noise_sidecar"] = sidecar_path

    if getattr(args, "random_noise", False):
        if args.seed is None:
            raise _InputProblem("--random-noise requires --seed")
        cfg = RandomNoiseConfig(
            seed=args.seed,
            p_range=tuple(args.p_range),
            site_density=args.site_density,
            kinds=tuple(args.kinds.split(",")) if args.kinds else RandomNoiseConfig.kinds,
        )
        circuit = inject_random_noise(circuit, cfg)
        resolved["random_noise"] = {
            "seed": cfg.seed,
            "p_range": list(cfg.p_range),
            "site_density": cfg.site_density,
            "kinds": list(cfg.kinds),
        }

    if getattr(args, "noise", None):
        if args.p is None:
            raise _InputProblem("--noise requires --p")
        channel = standard_channel(canonical_kind(args.noise), args.p)
        circuit = append_noise(circuit, channel, range(circuit.n_qubits))
        resolved["appended_noise"] = {"kind": channel.kind, "p": args.p}

    resolved["noise_sites"] = noise_spec(circuit)
    return program, circuit, resolved


def _resolve_model(args) -> tuple[QmlModel, dict]:
    program, circuit, resolved = _resolve_circuit(args)
    config_path = args.model_config or _default_sidecar(args.model, ".json")
    config = _read_json(config_path)
    resolved["model_config"] = config_path
    measurement = measurement_from_config(config, program.n_qubits, program.measured_qubits)
    return QmlModel(circuit, measurement), resolved


def _kernel_to_json(kernel):
    if kernel is None:
        return None
    psi, phi = kernel
    return {"psi": vector_to_pairs(psi.amplitudes), "phi": vector_to_pairs(phi.amplitudes)}


def _write_report(path: str, doc: dict):
    atomic_write_json(path, doc)


def _base_report(args, argv, resolved) -> dict:
    return {
        "tool": {"name": "qrobust", "version": __version__},
        "command": list(argv),
        "config": resolved,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_verify_local(args, argv) -> int:
    t0 = time.perf_counter()
    model, resolved = _resolve_model(args)
    dataset = load_dataset(args.data)
    if dataset.state_kind != args.state_type:
        raise _InputProblem(
            f"--state-type {args.state_type} does not match dataset kind {dataset.state_kind}"
        )
    if dataset.n_qubits != model.n_qubits:
        raise _InputProblem(
            f"dataset has {dataset.n_qubits} qubits, model has {model.n_qubits}"
        )
    data = dataset.labeled_states()
    report = verify_dataset(model, data, args.eps, mode=args.mode)

    resolved.update({"data": args.data, "eps": args.eps, "mode": args.mode,
                     "state_type": args.state_type})
    doc = _base_report(args, argv, resolved)
    doc["results"] = report.to_dict()
    doc["timings"] = {
        "total_s": time.perf_counter() - t0,
        "per_state_s": report.times,
    }
    _write_report(args.out, doc)
    cex_path = args.cex_out or _default_sidecar(args.out, ".counterexamples.json")
    atomic_write_json(cex_path, report.counterexamples(data))
    print(
        f"{args.mode} robust accuracy {report.robust_accuracy:.2f}% "
        f"on {report.n_states} states (eps={args.eps}); report: {args.out}"
    )
    return 0


def _cmd_verify_global(args, argv) -> int:
    t0 = time.perf_counter()
    model, resolved = _resolve_model(args)
    timings = {}
    results = {}
    k_dense = k_tn = None
    if args.engine in ("dense", "both"):
        t = time.perf_counter()
        k_dense = lipschitz_dense(model)
        timings["dense_s"] = time.perf_counter() - t
    if args.engine in ("tn", "both"):
        t = time.perf_counter()
        k_tn = lipschitz_tn(model)
        timings["tn_s"] = time.perf_counter() - t
    if args.engine == "both":
        gap = abs(k_dense.k_star - k_tn.k_star)
        if gap > K_STAR_ENGINE_AGREEMENT:
            raise ConvergenceError(
                f"dense and TN Lipschitz constants disagree by {gap:.2e}",
                k_dense=k_dense.k_star, k_tn=k_tn.k_star,
            )
    k = k_tn if args.engine == "tn" else k_dense
    verdict = global_decision(k, args.eps, args.delta)

    results["k_star"] = k.k_star
    results["witness_subset"] = list(k.witness_subset)
    results["kernel_eigenvalues"] = list(k.eigenvalues)
    results["engine"] = args.engine
    results["engine_stats"] = k.stats
    if args.engine == "both":
        results["k_star_dense"] = k_dense.k_star
        results["k_star_tn"] = k_tn.k_star
    results["robust"] = verdict.robust
    results["epsilon"] = verdict.epsilon
    results["delta"] = verdict.delta
    results["kernel"] = _kernel_to_json(verdict.kernel)

    resolved.update({"eps": args.eps, "delta": args.delta, "engine": args.engine})
    doc = _base_report(args, argv, resolved)
    doc["results"] = results
    timings["total_s"] = time.perf_counter() - t0
    doc["timings"] = timings
    _write_report(args.out, doc)
    print(
        f"K* = {k.k_star:.5f}; ({args.eps}, {args.delta})-global robust: "
        f"{'YES' if verdict.robust else 'NO'}; report: {args.out}"
    )
    return 0


def _cmd_inject(args, argv) -> int:
    program, circuit, resolved = _resolve_circuit(args)
    if resolved["random_noise"] is None:
        # inject without --random-noise means: exactly the seeded injection
        if args.seed is None:
            raise _InputProblem("inject requires --seed")
        cfg = RandomNoiseConfig(
            seed=args.seed,
            p_range=tuple(args.p_range),
            site_density=args.site_density,
            kinds=tuple(args.kinds.split(",")) if args.kinds else RandomNoiseConfig.kinds,
        )
        circuit = inject_random_noise(circuit, cfg)
        resolved["random_noise"] = {
            "seed": cfg.seed,
            "p_range": list(cfg.p_range),
            "site_density": cfg.site_density,
            "kinds": list(cfg.kinds),
        }
        resolved["noise_sites"] = noise_spec(circuit)
    qasm_path = args.out + ".qasm"
    sidecar_path = args.out + ".noise.json"
    atomic_write_text(qasm_path, serialize_qasm(strip_noise(circuit), program.measured_qubits))
    atomic_write_json(sidecar_path, noise_spec(circuit))
    print(f"wrote {qasm_path} and {sidecar_path} ({len(resolved['noise_sites'])} noise sites)")
    return 0


def _cmd_render(args, argv) -> int:
    program, circuit, _ = _resolve_circuit(args)
    text = render_text(circuit, program.measured_qubits)
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_train(args, argv) -> int:
    model, resolved = _resolve_model(args)
    dataset = load_dataset(args.data)
    if dataset.n_qubits != model.n_qubits:
        raise _InputProblem(
            f"dataset has {dataset.n_qubits} qubits, model has {model.n_qubits}"
        )
    template = []
    theta = {}
    for i, ins in enumerate(model.circuit.instructions):
        if getattr(ins, "name", None) in ("rx", "ry", "rz"):
            name = f"g{i}"
            template.append(ParamRotation(ins.name, ins.qubits[0], name))
            theta[name] = ins.params[0]
        else:
            template.append(ins)
    if not theta:
        raise _InputProblem("model has no rx/ry/rz rotation gates to train")
    pmodel = ParameterizedModel(model.n_qubits, tuple(template), model.measurement, theta)
    seed = args.seed if args.seed is not None else 0
    trained, history = adversarial_train(
        pmodel, dataset.labeled_states(), args.eps,
        epochs=args.epochs, lr=args.lr, seed=seed,
    )
    atomic_write_json(args.out + ".params.json", {"theta": trained.theta, "seed": seed})
    atomic_write_text(args.out + ".history.csv", history_to_csv(history))
    last = history[-1] if history else {}
    print(
        f"trained {len(theta)} parameter(s) over {len(history)} epoch(s); "
        f"final accurate RA {last.get('accurate_ra', float('nan')):.2f}%; "
        f"wrote {args.out}.params.json and {args.out}.history.csv"
    )
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_noise_flags(p: argparse.ArgumentParser):
    p.add_argument("--random-noise", action="store_true",
                   help="inject seeded random noise before verification")
    p.add_argument("--seed", type=int, default=None, help="seed for random injection")
    p.add_argument("--p-range", type=float, nargs=2, default=(0.001, 0.05),
                   metavar=("LO", "HI"), help="random noise level range")
    p.add_argument("--site-density", type=float, default=1.0,
                   help="expected random noise sites per qubit")
    p.add_argument("--kinds", type=str, default="",
                   help="comma-separated random noise kinds (default: all standard)")
    p.add_argument("--noise", type=str, default=None,
                   help="append this standard channel to every qubit at the circuit end")
    p.add_argument("--p", type=float, default=None, help="level for --noise")
    p.add_argument("--noise-sidecar", type=str, default=None,
                   help="explicit noise placement JSON (default: <model>.noise.json if present)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrobust",
        description="Formal robustness verification for noisy quantum classifiers.",
    )
    parser.add_argument("--version", action="version", version=f"qrobust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pl = sub.add_parser("verify-local", help="per-state epsilon-robustness over a dataset")
    pl.add_argument("--model", required=True, help="OpenQASM 2.0 circuit file")
    pl.add_argument("--model-config", default=None,
                    help="measurement config JSON (default: <model>.json)")
    pl.add_argument("--data", required=True, help="dataset JSON")
    pl.add_argument("--eps", type=float, required=True)
    pl.add_argument("--state-type", choices=("pure", "mixed"), required=True)
    pl.add_argument("--mode", choices=("rough", "accurate"), default="accurate")
    _add_noise_flags(pl)
    pl.add_argument("--out", default="report.json", help="report path")
    pl.add_argument("--cex-out", default=None,
                    help="counterexample dump path (default: <out>.counterexamples.json)")
    pl.set_defaults(func=_cmd_verify_local)

    pg = sub.add_parser("verify-global", help="(eps, delta)-global robustness via K*")
    pg.add_argument("--model", required=True)
    pg.add_argument("--model-config", default=None)
    pg.add_argument("--eps", type=float, required=True)
    pg.add_argument("--delta", type=float, required=True)
    pg.add_argument("--engine", choices=("dense", "tn", "both"), default="dense")
    _add_noise_flags(pg)
    pg.add_argument("--out", default="report.json")
    pg.set_defaults(func=_cmd_verify_global)

    pi = sub.add_parser("inject", help="write a noisy model (qasm + noise sidecar)")
    pi.add_argument("--model", required=True)
    _add_noise_flags(pi)
    pi.add_argument("--out", required=True, help="output prefix")
    pi.set_defaults(func=_cmd_inject)

    pr = sub.add_parser("render", help="text diagram of the (noisy) circuit")
    pr.add_argument("--model", required=True)
    _add_noise_flags(pr)
    pr.add_argument("--out", default=None, help="write the diagram here instead of stdout")
    pr.set_defaults(func=_cmd_render)

    pt = sub.add_parser("train", help="adversarial retraining of rotation angles")
    pt.add_argument("--model", required=True)
    pt.add_argument("--model-config", default=None)
    pt.add_argument("--data", required=True)
    pt.add_argument("--eps", type=float, required=True)
    pt.add_argument("--epochs", type=int, default=5)
    pt.add_argument("--lr", type=float, default=0.05)
    _add_noise_flags(pt)
    pt.add_argument("--out", required=True, help="output prefix")
    pt.set_defaults(func=_cmd_train)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except ConvergenceError as exc:
        print(f"error: {exc} {exc.details}", file=sys.stderr)
        return 3
    except _InputProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
