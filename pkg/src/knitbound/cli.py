"""Command-line entry point: measure, sweep, knit-sim, certify, inspect.

Exit codes: 0 success, 1 usage or input error, 2 computational failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from importlib import resources
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import channel as ch
from . import measures as M
from . import qpdsim
from .sdpsolver import DEFAULT_TOL, MAX_TOL, MIN_TOL

TOL_ENV = "KNITBOUND_TOL"
MANIFEST_SCHEMA = "knitbound.manifest/1"
MAX_GRID_POINTS = 201
EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
NOISE_KINDS = ("none", "depolarizing", "amplitude-damping")
BUNDLED_CERTIFICATES = ("cnot", "swap", "cnot_scaled")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not MIN_TOL <= tol <= MAX_TOL:
        raise UsageError(f"{TOL_ENV}={raw!r} is outside [{MIN_TOL:g}, {MAX_TOL:g}]")
    return tol


# ----------------------------------------------------------------------------
# Channel arguments
# ----------------------------------------------------------------------------


def load_unitary(path: str) -> np.ndarray:
    """Read {"dim": d, "entries": [[re, im], ...]} (row-major) or plain real entries."""
    try:
        data = json.loads(Path(path).read_text())
        d = int(data["dim"])
        e = np.asarray(data["entries"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read unitary from {path}: {exc}") from None
    if e.shape == (d * d,):
        e = np.stack([e, np.zeros_like(e)], axis=1)
    if e.shape != (d * d, 2):
        raise UsageError(f"unitary file {path}: expected {d * d} entries, got array of shape {e.shape}")
    return (e[:, 0] + 1j * e[:, 1]).reshape(d, d)


def noise_model(kind: str, rate: float | None, target: str | None, n_qubits: int) -> ch.NoiseModel | None:
    if kind == "none":
        return None
    if rate is None:
        raise UsageError(f"--noise {kind} needs --rate")
    if kind == "depolarizing":
        return ch.NoiseModel.depolarizing(rate, None if target is None else target.split(","))
    return ch.NoiseModel.amplitude_damping(rate, target or f"q{n_qubits}")


def channel_spec(args) -> dict:
    """Plain description of the requested channel (picklable, goes into reports)."""
    unitary = None
    if args.gate == "custom":
        if not args.unitary:
            raise UsageError("--gate custom needs --unitary FILE")
        unitary = load_unitary(args.unitary)
    elif args.unitary:
        raise UsageError("--unitary is only valid with --gate custom")
    return {
        "gate": args.gate,
        "cut": args.cut,
        "noise": args.noise,
        "noise_target": args.noise_target,
        "unitary": unitary,
        "copies": getattr(args, "copies", 1),
    }


def build(spec: dict, rate: float | None) -> ch.ChoiRepresentation:
    gate = ch.GateSpec(spec["gate"], spec["cut"], spec["unitary"])
    noise = noise_model(spec["noise"], rate, spec["noise_target"], gate.n_qubits)
    choi = ch.build_channel(spec["gate"], spec["cut"], noise, spec["unitary"])
    if spec["copies"] > 1:
        choi = ch.tensor_parallel(choi, spec["copies"])
    return choi


def describe_spec(spec: dict, rate: float | None = None) -> dict:
    out = {k: v for k, v in spec.items() if k != "unitary"}
    out["rate"] = rate
    if spec["unitary"] is not None:
        out["unitary_dim"] = int(spec["unitary"].shape[0])
    return out


def parse_quantities(text: str) -> tuple[str, ...]:
    names = tuple(q.strip() for q in text.split(",") if q.strip())
    bad = [q for q in names if q not in M.QUANTITIES]
    if bad or not names:
        raise UsageError(f"unknown quantities {bad}; choose from {','.join(M.QUANTITIES)}")
    return tuple(q for q in M.QUANTITIES if q in names)


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------


def write_rows(handle, reports) -> None:
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(M.CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())


def read_csv(path: str) -> list[dict]:
    """Parse a CSV written by this tool; empty cells become None."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != M.CSV_COLUMNS:
        raise UsageError(f"{path}: header does not match {','.join(M.CSV_COLUMNS)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(M.CSV_COLUMNS):
            raise UsageError(f"{path}:{i}: expected {len(M.CSV_COLUMNS)} cells, got {len(row)}")
        rec = {}
        for col, cell in zip(M.CSV_COLUMNS, row):
            if cell == "":
                rec[col] = None
            elif col == "iterations":
                rec[col] = int(cell)
            else:
                rec[col] = float(cell)
        out.append(rec)
    return out


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_measure(args) -> int:
    spec = channel_spec(args)
    quantities = parse_quantities(args.quantities)
    tol = args.tol
    choi = build(spec, args.rate)
    rep = M.measure(choi, quantities, tol=tol, parameter=args.rate, symmetry=not args.no_symmetry)
    bad = rep.check_invariants()
    if bad:
        print(f"warning: ordering relations violated: {', '.join(bad)}", file=sys.stderr)
    if args.certificate_out:
        if "w_hat" not in quantities:
            raise UsageError("--certificate-out needs w_hat among the quantities")
        _, cert, _ = M.w_hat(choi, tol, not args.no_symmetry)
        Path(args.certificate_out).write_text(json.dumps(cert.to_json(choi.name)))
    if args.format == "csv":
        buf = io.StringIO()
        write_rows(buf, [rep])
        _emit(buf.getvalue(), args.output)
    else:
        data = rep.to_json()
        data["channel"] = describe_spec(spec, args.rate)
        data["tol"] = tol
        data["version"] = __version__
        _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def grid(start: float, stop: float, step: float) -> list[float]:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise UsageError("grid bounds must be finite")
    if step <= 0 or start > stop:
        raise UsageError("grid needs start <= stop and step > 0")
    count = math.floor((stop - start) / step + 1e-9) + 1
    if count > MAX_GRID_POINTS:
        raise UsageError(f"grid has {count} points, the limit is {MAX_GRID_POINTS}")
    # round away accumulated binary noise so 0.1 * 3 prints as 0.3
    return [round(start + i * step, 12) for i in range(count)]


def _sweep_point(job):
    spec, rate, quantities, tol, symmetry = job
    try:
        rep = M.measure(build(spec, rate), quantities, tol=tol, parameter=rate, symmetry=symmetry)
    except (M.SolverError, M.ConsistencyError) as exc:
        return None, f"parameter {rate}: {exc}"
    return rep, None


def cmd_sweep(args) -> int:
    spec = channel_spec(args)
    if spec["noise"] == "none":
        raise UsageError("sweep needs --noise depolarizing or amplitude-damping")
    quantities = parse_quantities(args.quantities)
    points = grid(args.start, args.stop, args.step)
    # the noise model validates the rate range, fail before any solve
    for p in (points[0], points[-1]):
        noise_model(spec["noise"], p, spec["noise_target"], ch.GateSpec(spec["gate"], spec["cut"], spec["unitary"]).n_qubits)
    jobs = [(spec, p, quantities, args.tol, not args.no_symmetry) for p in points]
    workers = max(1, min(args.workers or os.cpu_count() or 1, len(jobs)))
    out_path = Path(args.output)
    manifest_path = Path(args.manifest) if args.manifest else out_path.with_name(out_path.name + ".manifest.json")
    done, failure = 0, None
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(M.CSV_COLUMNS)
        fh.flush()
        # imap keeps grid order whatever order the workers finish in
        pool = Pool(workers) if workers > 1 else None
        results = pool.imap(_sweep_point, jobs) if pool else map(_sweep_point, jobs)
        try:
            for rep, err in results:
                if err is not None:
                    failure = err
                    break
                w.writerow(rep.csv_row())
                fh.flush()
                done += 1
                if args.verbose:
                    print(f"[{done}/{len(jobs)}] parameter {rep.parameter}", file=sys.stderr)
        finally:
            if pool is not None:
                pool.terminate()
                pool.join()
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "csv": out_path.name,
        "columns": list(M.CSV_COLUMNS),
        "channel": describe_spec(spec),
        "grid": {"start": args.start, "stop": args.stop, "step": args.step, "points": len(points)},
        "quantities": list(quantities),
        "tolerances": {"solver": args.tol, "max_rains_agreement": M.RAINS_AGREEMENT},
        "symmetry_reduction": not args.no_symmetry,
        "rows_written": done,
        "status": "complete" if failure is None else "failed",
        "error": failure,
        "software": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if failure is not None:
        print(f"sweep stopped after {done} of {len(points)} rows: {failure}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_knit_sim(args) -> int:
    spec = channel_spec(args)
    choi = build(spec, args.rate)
    n_in, n_out = len(choi.input_labels), len(choi.output_labels)
    state = args.state or "0" * n_in
    obs = args.observable or "Z" * n_out
    gamma, qpd, _ = M.gamma_ppt(choi, args.tol, not args.no_symmetry)
    task = qpdsim.EstimationTask(
        qpd,
        qpdsim.product_state(state, choi.input_labels),
        qpdsim.pauli_observable(obs, choi.output_labels),
        args.delta, args.epsilon, args.seed,
    )
    report = qpdsim.run_trials(task, args.trials, workers=args.workers or 1)
    data = report.to_json(include_trials=not args.summary)
    data.update({
        "channel": describe_spec(spec, args.rate),
        "state": state,
        "observable": obs,
        "gamma_ppt": gamma,
        "effective_gamma": gamma ** (1.0 / spec["copies"]),
        "version": __version__,
    })
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def load_certificate(args) -> M.Certificate:
    if bool(args.certificate) == bool(args.bundled):
        raise UsageError("give exactly one of --certificate FILE or --bundled NAME")
    try:
        if args.bundled:
            text = resources.files("knitbound").joinpath(f"data/certificates/{args.bundled}.json").read_text()
        else:
            text = Path(args.certificate).read_text()
        return M.Certificate.from_json(json.loads(text))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot parse certificate: {exc}") from None


def cmd_certify(args) -> int:
    spec = channel_spec(args)
    cert = load_certificate(args)
    choi = build(spec, args.rate)
    try:
        rep = M.verify_certificate(choi, cert.y, cert.r)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.json:
        print(json.dumps({"feasible": rep.feasible, "bound": rep.bound, "violations": rep.violations,
                          "verdict": rep.describe()}, sort_keys=True))
    else:
        print(rep.describe())
    return EXIT_OK


def cmd_inspect(args) -> int:
    rows = read_csv(args.csv)
    print(json.dumps({"rows": len(rows), "data": rows}, indent=2))
    return EXIT_OK


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------


def _channel_args(p, with_rate: bool = True) -> None:
    p.add_argument("--gate", default="cnot", choices=ch.GATE_NAMES)
    p.add_argument("--cut", default=None, help='qubit bipartition such as "1|23" (default: first qubit on A)')
    p.add_argument("--unitary", help="JSON file with dim and row-major [re, im] entries (for --gate custom)")
    p.add_argument("--noise", default="none", choices=NOISE_KINDS)
    p.add_argument("--noise-target", help="output qubit label(s), e.g. q2 (default: all for depolarizing, last qubit for damping)")
    if with_rate:
        p.add_argument("--rate", type=float, help="noise strength p or damping rate")


def build_parser(tol: float) -> argparse.ArgumentParser:
    parser = _Parser(prog="knitbound", description="SDP bounds on circuit knitting overhead.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--tol", type=float, default=tol, help=f"solver tolerance (default {tol:g}, env {TOL_ENV})")
        p.add_argument("--no-symmetry", action="store_true", help="solve the unreduced programs")

    m = sub.add_parser("measure", help="compute bounds for one channel")
    _channel_args(m)
    m.add_argument("--copies", type=int, default=1, help="cut this many parallel copies jointly")
    m.add_argument("--quantities", default=",".join(M.QUANTITIES))
    m.add_argument("--format", choices=("json", "csv"), default="json")
    m.add_argument("--output", "-o")
    m.add_argument("--certificate-out", help="write the polished dual certificate of w_hat here")
    common(m)
    m.set_defaults(func=cmd_measure)

    s = sub.add_parser("sweep", help="measure over a grid of noise rates")
    _channel_args(s, with_rate=False)
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--stop", type=float, default=1.0)
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--quantities", default=",".join(M.QUANTITIES))
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--manifest", help="manifest path (default: OUTPUT.manifest.json)")
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    s.add_argument("--verbose", "-v", action="store_true")
    common(s)
    s.set_defaults(func=cmd_sweep, copies=1)

    k = sub.add_parser("knit-sim", help="Monte Carlo check of the sampling contract")
    _channel_args(k)
    k.add_argument("--copies", type=int, default=1)
    k.add_argument("--state", help="product input state over qubits, chars from 01+-rl (default all 0)")
    k.add_argument("--observable", help="Pauli string on the outputs (default all Z)")
    k.add_argument("--delta", type=float, default=0.05)
    k.add_argument("--epsilon", type=float, default=0.05)
    k.add_argument("--trials", type=int, default=200)
    k.add_argument("--seed", type=int, default=42)
    k.add_argument("--workers", type=int, default=1)
    k.add_argument("--summary", action="store_true", help="omit per-trial results")
    k.add_argument("--output", "-o")
    common(k)
    k.set_defaults(func=cmd_knit_sim)

    c = sub.add_parser("certify", help="verify a dual certificate")
    _channel_args(c)
    c.add_argument("--certificate", help="certificate JSON file")
    c.add_argument("--bundled", choices=BUNDLED_CERTIFICATES, help="use a certificate shipped with the package")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_certify, copies=1)

    i = sub.add_parser("inspect", help="parse and validate a CSV written by sweep or measure")
    i.add_argument("csv")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser(default_tol())
    except UsageError as exc:
        print(f"knitbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    try:
        if getattr(args, "copies", 1) < 1:
            raise UsageError("--copies must be at least 1")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"knitbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (M.SolverError, M.ConsistencyError) as exc:
        print(f"knitbound: solver failure: {exc}", file=sys.stderr)
        if isinstance(exc, M.SolverError):
            print(json.dumps(exc.solution.diagnostics(), indent=2, default=str), file=sys.stderr)
        return EXIT_FAILURE
    except (ch.ChannelError, qpdsim.TaskError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"knitbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
