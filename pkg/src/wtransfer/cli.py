"""Command-line interface: ``wtransfer run|crossing|sweep|cavity``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import crossings, drive, propagate
from . import cavity as cav

OUT_ENV = "WTRANSFER_OUT"
DEFAULT_OUT = "wtransfer-out"
MAX_REFINEMENTS = 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, data: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_params(args) -> dict:
    if getattr(args, "config", None):
        params = drive.load_config(args.config)
    else:
        params = drive.default_params(args.preset or "adiabatic")
    for item in getattr(args, "set", None) or []:
        path, _, value = item.partition("=")
        drive.set_dotted(params, path, json.loads(value))
    return params


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_with_tolerance(spec, mode: str, tol: float | None):
    """Run the protocol, halving the step until a step halving changes
    populations by less than ``tol``."""
    dt = propagate.default_dt(spec, mode)
    if tol is None:
        return propagate.run_protocol(spec, mode, dt=dt), dt, None
    for _ in range(MAX_REFINEMENTS + 1):
        result = propagate.run_protocol(spec, mode, dt=dt, check_step=True)
        err = max(result.stage1.step_error, result.stage2.step_error)
        if err < tol:
            return result, dt, err
        dt /= 2
    raise propagate.IntegrationError(f"step refinement did not reach tolerance {tol} (last change {err:.3g})")


def cmd_run(args) -> int:
    params = resolve_params(args)
    spec = drive.build_protocol(params)
    result, dt, err = run_with_tolerance(spec, args.mode, args.tol)
    out = out_dir(args)
    result.stage1.to_csv(out / "stage1.csv")
    result.stage2.to_csv(out / "stage2.csv")
    summary = result.to_dict()
    summary["integrator"] = {"dt": dt, "step_change": err}
    write_json(out / "result.json", summary)
    write_json(out / "phases.json", {"parameters": spec.to_dict(), **summary.get("phases", {}),
                                     "phase_gate": summary.get("phase_gate"),
                                     "corrected_fidelity": result.corrected_fidelity})
    print(f"stage-1 fidelity {result.stage1_fidelity:.6f}  final fidelity {result.final_fidelity:.6f}  "
          f"phase-gated {result.corrected_fidelity:.6f}")
    return 0


def cmd_crossing(args) -> int:
    params = resolve_params(args)
    spec = drive.build_protocol(params)
    subs = args.subsystem or ["S11", "S12", "S22"]
    reports = {sid: crossings.crossing_report(spec, sid).to_dict() for sid in subs}
    write_json(out_dir(args) / "crossing.json", {"parameters": spec.to_dict(), "subsystems": reports})
    for sid, rep in reports.items():
        print(f"{sid}: P_propagated {rep['P_propagated']:.4f}  P_LZ {rep['P_LZ']}  P_Dykhne {rep['P_Dykhne']}")
    return 0


def parse_axis(text: str):
    """``path:start:stop:count[:log]`` -> (path, values)."""
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise ValueError(f"sweep axis {text!r} must be path:start:stop:count[:log]")
    path, start, stop, count = parts[0], float(parts[1]), float(parts[2]), int(parts[3])
    if count < 1:
        raise ValueError("sweep count must be at least 1")
    if len(parts) == 5 and parts[4] == "log":
        values = np.geomspace(start, stop, count)
    else:
        values = np.linspace(start, stop, count)
    return path, [float(v) for v in values]


def _set_axis(params, path, value):
    # list-valued entries (per-mode chirp rates) are set on every element
    current = drive.get_dotted(params, path)
    drive.set_dotted(params, path, [value] * len(current) if isinstance(current, list) else value)


def sweep_point(params: dict, mode: str) -> dict:
    try:
        spec = drive.build_protocol(params)
        result = propagate.run_protocol(spec, mode, phases=False)
        P = crossings.propagated_probability(spec, "S12")
        return {"final_fidelity": result.final_fidelity, "stage1_fidelity": result.stage1_fidelity, "P_crossing": P}
    except Exception:  # noqa: BLE001 - failures become NaN rows
        return {"final_fidelity": math.nan, "stage1_fidelity": math.nan, "P_crossing": math.nan}


def cmd_sweep(args) -> int:
    base = resolve_params(args)
    axes = [parse_axis(a) for a in args.axis]
    if not 1 <= len(axes) <= 2:
        raise ValueError("sweep takes one or two axes")
    grid = [()]
    for _, values in axes:
        grid = [g + (v,) for g in grid for v in values]
    points = []
    for combo in grid:
        params = json.loads(json.dumps(base))
        for (path, _), value in zip(axes, combo):
            _set_axis(params, path, value)
        points.append(params)
    if args.workers and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(sweep_point, points, [args.mode] * len(points)))
    else:
        rows = [sweep_point(p, args.mode) for p in points]
    out = out_dir(args)
    names = [p for p, _ in axes]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["final_fidelity", "stage1_fidelity", "P_crossing"])
        for combo, row in zip(grid, rows):
            w.writerow([f"{v:.17g}" for v in (*combo, row["final_fidelity"], row["stage1_fidelity"], row["P_crossing"])])
    write_json(out / "sweep.json", {"parameters": base, "axes": {p: v for p, v in axes}})
    print(f"{len(rows)} sweep points written")
    return 0


def load_cavity_config(args) -> dict:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in ("Lx0", "Ly", "Lz", "v", "duration"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.cavity_mode:
        data["modes"] = [[int(n) for n in m.split(",")] for m in args.cavity_mode]
    missing = [k for k in ("Lx0", "Ly", "Lz", "modes") if k not in data]
    if missing:
        raise ValueError(f"cavity configuration lacks {missing}")
    return data


def cmd_cavity(args) -> int:
    data = load_cavity_config(args)
    box = cav.RectangularCavity(data["Lx0"], data["Ly"], data["Lz"], data.get("v", 0.0), data.get("duration"))
    modes = [cav.ModeIndex(*m) for m in data["modes"]]
    pulses = times = None
    if data.get("pulses"):
        pulses = [drive.GaussianPulse(p["amplitude"], p["center"], p["width"]) if p else None for p in data["pulses"]]
        times = np.linspace(0.0, data.get("duration") or 1.0, int(data.get("samples", 101)))
    report = cav.design_report(box, modes, pulses, times, data.get("y"), data.get("z"), data.get("dipole", 1.0))
    report["parameters"] = data
    write_json(out_dir(args) / "cavity.json", report)
    for entry in report["modes"]:
        print(f"mode {entry['mode']}: omega0 {entry['omega0']:.6g}  chirp {entry['chirp_rate']:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wtransfer", description="Rydberg-to-photonic W-state transfer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, protocol=True):
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or {DEFAULT_OUT})")
        p.add_argument("--config", help="JSON configuration file")
        if protocol:
            p.add_argument("--preset", choices=drive.PRESET_NAMES + ("non-adiabatic",))
            p.add_argument("--set", action="append", metavar="PATH=VALUE", help="dotted-path override, JSON value")
            p.add_argument("--mode", choices=("full", "effective"), default="effective")

    p = sub.add_parser("run", help="run a two-stage protocol")
    common(p)
    p.add_argument("--tol", type=float, help="largest population change allowed under step halving")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("crossing", help="avoided-crossing analysis")
    common(p)
    p.add_argument("--subsystem", action="append", choices=("S11", "S12", "S22"))
    p.set_defaults(func=cmd_crossing)

    p = sub.add_parser("sweep", help="parameter sweep")
    common(p)
    p.add_argument("--axis", action="append", required=True, help="path:start:stop:count[:log]")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cavity", help="moving-mirror cavity design report")
    common(p, protocol=False)
    for key in ("Lx0", "Ly", "Lz", "v", "duration"):
        p.add_argument(f"--{key}", type=float)
    p.add_argument("--cavity-mode", action="append", metavar="NX,NY,NZ")
    p.set_defaults(func=cmd_cavity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, propagate.IntegrationError) as exc:
        print(f"wtransfer: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
