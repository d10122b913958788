"""Command-line interface: ``umcsim <command> [options]``.

Commands
    validate        check a gate-set file
    decompose       UMC / CMC / PTA decomposition of every gate (+ SPAM fits)
    dnorm           diamond distance between two gates or PTM files
    simulate        run a circuit file with sampled or exact noise
    grover          two-qubit Grover benchmark, sampled vs. exact
    surface17       surface-code logical error rate sweep and pseudo-threshold
    sweep-distance  UMC distance as a function of scaled gate fidelity

Circuit files use a small line-oriented dialect::

    qubits 2        # register size, must come first
    prep q0
    ry q0 90        # rotation gates take the angle in degrees: rx/ry/rz 90|180|-90
    cz q1 q0        # multi-qubit gates list the most significant qubit first
    measure q0

Every output file carries ``schema_version``; CSV files start with a
``# schema_version=...`` comment line.  Outputs contain no timestamps, so equal
flags give byte-identical files.

Exit codes: 0 success, 2 validation failure, 3 non-convergence, 4 resource guard.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, approx, channels, dnorm, gateset, qec, sim

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_RESOURCE = 0, 2, 3, 4

# Published Grover success rates, echoed in reports as context only (not reproducible here).
GROVER_REFERENCE = {
    "exact": {"00": 0.7365, "01": 0.7490, "10": 0.7474, "11": 0.7661},
    "umc": {"00": 0.7411, "01": 0.7478, "10": 0.7473, "11": 0.7644},
}


class NonConvergence(RuntimeError):
    pass


# -- output helpers ---------------------------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(data: dict, path: Path | None) -> str:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **data}, indent=2, sort_keys=True,
                      default=_json_default) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def dump_csv(rows: list[dict], path: Path | None, meta: dict | None = None) -> str:
    buf = io.StringIO()
    header = {"schema_version": SCHEMA_VERSION, **(meta or {})}
    buf.write("# " + ", ".join(f"{k}={v}" for k, v in header.items()) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def _emit(args, data: dict, rows: list[dict] | None = None, stem: str = "result") -> None:
    """Write ``data`` (JSON) or ``rows`` (CSV) to ``--out`` or stdout."""
    out = Path(args.out) if args.out else None
    if args.format == "csv" and rows is not None:
        path = out / f"{stem}.csv" if out is not None and out.suffix == "" else out
        text = dump_csv(rows, path, {"command": args.command})
    else:
        path = out / f"{stem}.json" if out is not None and out.suffix == "" else out
        text = dump_json(data, path)
    if out is None:
        sys.stdout.write(text)


def _opts(args) -> approx.UmcOptions:
    return approx.UmcOptions(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


# -- commands -----------------------------------------------------------------------------------


def cmd_validate(args) -> int:
    gs = gateset.resolve_gateset(args.gateset)
    rows = [{"gate": n, "n_qubits": gs.n_qubits(n), "f_avg": gs.fidelity(n)} for n in gs.gates]
    data = {"gateset": str(args.gateset), "valid": True, "gates": rows,
            "prep_fidelity": gateset.prep_fidelity(gs.rho0), "meas_fidelity": gateset.meas_fidelity(gs.effect)}
    _emit(args, data, rows, "validate")
    return EXIT_OK


def _decompose_one(method: str, ptm: np.ndarray, gs: gateset.GateSetModel, name: str, opts):
    if method == "umc":
        return approx.decompose_umc(ptm, opts, name)
    if method == "cmc":
        return approx.decompose_cmc(ptm, name)
    if method == "pta":
        return approx.decompose_pta(ptm, gs.target_ptm(name), name)
    raise ValueError(f"unknown method {method!r}")


def cmd_decompose(args) -> int:
    gs = gateset.resolve_gateset(args.gateset)
    names = args.gates.split(",") if args.gates else list(gs.gates)
    out = Path(args.out) if args.out else None
    opts = _opts(args)
    rows, failed = [], False
    for name in names:
        row = {"gate": name, "method": args.method, "diamond_distance": float("nan"),
               "f_avg": float("nan"), "status": "ok"}
        try:
            ptm = gs.gates[name]
            row["f_avg"] = gs.fidelity(name)
            dec = _decompose_one(args.method, ptm, gs, name, opts)
            row["diamond_distance"] = dec.achieved_distance
            if not getattr(dec, "converged", True):
                row["status"] = "not-converged"
                failed = True
            if out is not None:
                dump_json(dec.to_dict(), out / f"{args.method}_{name}.json")
        except Exception as exc:  # one failure does not abort the table
            row["status"] = f"error: {exc}"
            failed = True
        rows.append(row)
    spam = {}
    if args.method == "umc" and not args.no_spam:
        for label, fit in (("prep", lambda: approx.fit_prep_channel(gs.rho0_matrix, opts)),
                           ("meas", lambda: approx.fit_meas_channel(gs.effect, opts))):
            dec = fit()
            spam[label] = {"residual": dec.residual, "converged": dec.converged}
            failed |= not dec.converged
            if out is not None:
                dump_json(dec.to_dict(), out / f"umc_{label}.json")
    if out is not None:
        dump_csv(rows, out / "table.csv", {"command": "decompose", "method": args.method})
    data = {"method": args.method, "gateset": str(args.gateset), "table": rows, "spam": spam}
    if out is not None:
        dump_json(data, out / "summary.json")
    else:
        sys.stdout.write(dump_csv(rows, None, {"command": "decompose", "method": args.method})
                         if args.format == "csv" else dump_json(data, None))
    return EXIT_NONCONVERGENCE if failed else EXIT_OK


def _load_ptm(spec: str, gs: gateset.GateSetModel | None) -> np.ndarray:
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        data = json.loads(path.read_text())
        mat = data.get("ptm", data) if isinstance(data, dict) else data
        return np.asarray(mat, dtype=float)
    if gs is not None and spec in gs.gates:
        return gs.gates[spec]
    if spec.startswith("ideal:"):
        return gateset.ideal_ptm(spec[len("ideal:"):])
    raise ValueError(f"cannot resolve channel {spec!r} (gate name, ideal:<name>, or PTM JSON file)")


def cmd_dnorm(args) -> int:
    gs = gateset.resolve_gateset(args.gateset) if args.gateset else None
    a, b = _load_ptm(args.a, gs), _load_ptm(args.b, gs)
    res = dnorm.diamond_distance(a, b, method=args.method)
    data = {"a": args.a, "b": args.b, "method": res.method, "value": res.value,
            "lower": res.lower, "upper": res.upper}
    _emit(args, data, [data], "dnorm")
    return EXIT_OK


def _noise_model(args, gs: gateset.GateSetModel) -> sim.NoiseModel:
    if args.method == "none":
        return sim.NoiseModel.ideal()
    return sim.NoiseModel.from_gateset(gs, args.method, _opts(args))


def cmd_simulate(args) -> int:
    circuit = sim.parse_circuit(Path(args.circuit).read_text())
    gs = gateset.resolve_gateset(args.gateset)
    data = {"circuit": str(args.circuit), "gateset": str(args.gateset), "method": args.method}
    if args.backend == "density":
        model = sim.NoiseModel.exact(gs) if args.method == "exact" else _noise_model(args, gs)
        probs = sim.run_density_matrix(circuit, model)
        data["probabilities"] = dict(sorted(probs.items()))
        rows = [{"outcome": k, "probability": v} for k, v in sorted(probs.items())]
    else:
        if args.method == "exact":
            raise ValueError("method 'exact' needs the density backend")
        rec = sim.sample(circuit, _noise_model(args, gs), args.shots, args.seed, args.workers)
        data.update(rec.to_dict())
        rows = [{"outcome": k, "count": v, "frequency": v / rec.shots} for k, v in sorted(rec.counts.items())]
    _emit(args, data, rows, "simulate")
    return EXIT_OK


def cmd_grover(args) -> int:
    gs = gateset.resolve_gateset(args.gateset)
    model = sim.NoiseModel.from_gateset(gs, args.method, _opts(args))
    exact_model = sim.NoiseModel.exact(gs)
    rows = []
    for k, marked in enumerate(("00", "01", "10", "11")):
        circuit = sim.grover_circuit(marked)
        exact = sim.run_density_matrix(circuit, exact_model).get(marked, 0.0)
        rec = sim.sample(circuit, model, args.shots, args.seed + k, args.workers)
        p = rec.frequency(marked)
        rows.append({"marked": marked, "sampled": p, "exact": exact, "difference": p - exact,
                     "std_error": float(np.sqrt(p * (1 - p) / rec.shots)), "shots": rec.shots})
    data = {"gateset": str(args.gateset), "method": args.method, "seed": args.seed, "results": rows,
            "published_reference": GROVER_REFERENCE}
    _emit(args, data, rows, "grover")
    return EXIT_OK


def cmd_surface17(args) -> int:
    gs = gateset.resolve_gateset(args.gateset)
    fids = _floats(args.fidelities)
    points = []
    for k, f in enumerate(fids):
        points.append(qec.estimate_logical_error_rate(gs, f, args.rounds, args.shots, args.seed + k,
                                                      args.basis, args.workers, _opts(args)))
    rows = [{"fidelity": p.fidelity, "shots": p.shots, "logical_errors": p.errors, "rate": p.rate,
             "ci_low": p.ci_low, "ci_high": p.ci_high} for p in points]
    meta = {"rounds": args.rounds, "basis": args.basis, "reference_line": "1 - F", "idle_noise": False,
            "seed": args.seed}
    try:
        est = qec.estimate_pseudo_threshold(points)
        threshold = {"crossing": est.crossing, "bracket": list(est.bracket)}
    except ValueError as exc:
        threshold = {"error": str(exc)}
    out = Path(args.out) if args.out else None
    if out is not None:
        dump_csv(rows, out / "sweep.csv", {"command": "surface17", **meta})
        dump_json({**meta, "points": rows, "threshold": threshold}, out / "threshold.json")
    else:
        sys.stdout.write(dump_csv(rows, None, {"command": "surface17", **meta}) if args.format == "csv"
                         else dump_json({**meta, "points": rows, "threshold": threshold}, None))
    return EXIT_OK


def cmd_sweep_distance(args) -> int:
    gs = gateset.resolve_gateset(args.gateset)
    names = args.gates.split(",") if args.gates else list(gs.gates)
    rows = []
    for name in names:
        target, gen = gs.target_ptm(name), gs.error_generator(name)
        for f in _floats(args.fidelities):
            _, ptm = channels.scale_to_fidelity(target, gen, f)
            dec = approx.decompose_umc(ptm, _opts(args), name)
            rows.append({"gate": name, "fidelity": f, "diamond_distance": dec.achieved_distance,
                         "converged": dec.converged})
    _emit(args, {"gateset": str(args.gateset), "rows": rows}, rows, "sweep_distance")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, gateset_required: bool = True) -> None:
    p.add_argument("--gateset", required=gateset_required,
                   help="gate-set JSON file or bundled name (" + ", ".join(gateset.BUNDLED) + ")")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=_positive, default=10_000)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--out", help="output file, or directory for multi-file commands")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--restarts", type=_positive, default=32, help="UMC multistart count")
    p.add_argument("--max-iters", type=_positive, default=200, help="UMC local iterations per start")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umcsim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a gate-set file")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("decompose", help="decompose every gate of a gate set")
    _common(p)
    p.add_argument("--method", choices=("umc", "cmc", "pta"), default="umc")
    p.add_argument("--gates", help="comma-separated subset of gate names")
    p.add_argument("--no-spam", action="store_true", help="skip the SPAM fits")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("dnorm", help="diamond distance between two channels")
    _common(p, gateset_required=False)
    p.add_argument("a", help="gate name, ideal:<name>, or PTM JSON file")
    p.add_argument("b")
    p.add_argument("--method", choices=("sdp", "multistart"), default="sdp")
    p.set_defaults(func=cmd_dnorm)

    p = sub.add_parser("simulate", help="run a circuit file")
    _common(p)
    p.add_argument("circuit")
    p.add_argument("--method", choices=("umc", "cmc", "pta", "exact", "none"), default="umc")
    p.add_argument("--backend", choices=("sample", "density"), default="sample")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grover", help="two-qubit Grover benchmark")
    _common(p)
    p.add_argument("--method", choices=("umc", "cmc", "pta"), default="umc")
    p.set_defaults(func=cmd_grover)

    p = sub.add_parser("surface17", help="surface-code logical error rate sweep")
    _common(p)
    p.add_argument("--fidelities", default="0.9992,0.9995,0.9997,0.9999")
    p.add_argument("--rounds", type=_positive, default=3)
    p.add_argument("--basis", choices=("z", "x"), default="z")
    p.set_defaults(func=cmd_surface17)

    p = sub.add_parser("sweep-distance", help="UMC distance versus scaled fidelity")
    _common(p)
    p.add_argument("--fidelities", default="0.9992,0.9995,0.9997,0.9999")
    p.add_argument("--gates", help="comma-separated subset of gate names")
    p.set_defaults(func=cmd_sweep_distance)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except sim.ResourceGuardError as exc:
        print(f"umcsim: resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (dnorm.DiamondNormError, NonConvergence) as exc:
        print(f"umcsim: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (gateset.GateSetError, sim.CircuitError, channels.ChannelError, ValueError,
            KeyError, FileNotFoundError) as exc:
        print(f"umcsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
