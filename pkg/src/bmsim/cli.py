"""Command-line front end.

Exit status: 0 audits pass and every segment converged, 1 the scenario could
not be parsed or validated, 2 an audit failed (or the state blew up), 3 the
audits pass but some segment did not converge.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import presets
from .errors import BmsimError, EventOffGrid, NonFiniteState, ScenarioError, SchemaMismatch, UnknownPreset
from .scenario import build_scenario, dump, load_file, load_text, resolve
from .sim import audit, integrate, read_csv, write_csv

EXIT_OK, EXIT_INPUT, EXIT_AUDIT, EXIT_CONVERGENCE = 0, 1, 2, 3

TRAJECTORY = "trajectory.csv"
REPORT = "audit.txt"
RESOLVED = "scenario.resolved"


def _err(msg):
    print(f"bmsim: {msg}", file=sys.stderr)


def run_document(doc, lines, out_dir, dt=None, saturate=None, quiet=False):
    """Run a validated document into ``out_dir``; returns the exit status."""
    if dt is not None:
        doc["sim"]["dt"] = float(dt)
    if saturate:
        doc["sim"]["saturate_duty"] = True
    try:
        resolved = resolve(doc, lines)
        sc = build_scenario(resolved, lines)
        sc.event_groups()
        sc.n_steps
    except (ScenarioError, EventOffGrid) as exc:
        _err(str(exc))
        return EXIT_INPUT
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, RESOLVED), "w") as fh:
        fh.write(dump(resolved))
    try:
        traj = integrate(sc)
    except NonFiniteState as exc:
        text = f"run aborted: {exc}\n"
        with open(os.path.join(out_dir, REPORT), "w") as fh:
            fh.write(text)
        _err(text.strip())
        return EXIT_AUDIT
    csv_path = os.path.join(out_dir, TRAJECTORY)
    write_csv(traj, csv_path)
    # Audit the stored trajectory so an offline audit reproduces this report exactly.
    rep = audit(read_csv(csv_path), sc)
    text = rep.format()
    with open(os.path.join(out_dir, REPORT), "w") as fh:
        fh.write(text)
    if not quiet:
        sys.stdout.write(text)
    return rep.exit_code()


def cmd_run(args):
    if args.all_presets:
        if args.file:
            _err("give either a scenario file or --all-presets")
            return EXIT_INPUT
        return run_all_presets(args.out, args.dt, args.saturate_duty, args.jobs)
    if not args.file:
        _err("missing scenario file")
        return EXIT_INPUT
    try:
        doc, lines = load_file(args.file)
    except OSError as exc:
        _err(f"cannot read {args.file}: {exc.strerror}")
        return EXIT_INPUT
    except ScenarioError as exc:
        _err(f"{args.file}: {exc}")
        return EXIT_INPUT
    return run_document(doc, lines, args.out, args.dt, args.saturate_duty)


def _run_preset(name, out_dir, dt, saturate):
    doc = presets.preset_document(name)
    return run_document(doc, None, os.path.join(out_dir, name), dt, saturate, quiet=True)


def run_all_presets(out_dir, dt=None, saturate=False, jobs=None):
    names = presets.preset_names()
    with ProcessPoolExecutor(max_workers=jobs or min(len(names), os.cpu_count() or 1)) as pool:
        futures = {name: pool.submit(_run_preset, name, out_dir, dt, saturate) for name in names}
        codes = {name: f.result() for name, f in futures.items()}
    for name, code in codes.items():
        print(f"{name}: exit {code}")
    return max(codes.values())


def cmd_preset(args):
    try:
        text = presets.preset_text(args.name)
    except UnknownPreset as exc:
        _err(str(exc))
        return EXIT_INPUT
    if args.emit:
        with open(args.emit, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_audit(args):
    try:
        with open(args.resolved) as fh:
            doc, lines = load_text(fh.read())
        sc = build_scenario(doc, lines)
        sys0 = sc.system
        traj = read_csv(args.csv, sys0.sigma, sys0.rho, sc.initial.u.size)
    except OSError as exc:
        _err(f"cannot read {exc.filename}: {exc.strerror}")
        return EXIT_INPUT
    except (ScenarioError, SchemaMismatch) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except ValueError as exc:
        _err(f"{args.csv}: malformed trajectory ({exc})")
        return EXIT_INPUT
    rep = audit(traj, sc)
    sys.stdout.write(rep.format())
    return rep.exit_code()


def build_parser():
    parser = argparse.ArgumentParser(prog="bmsim", description="Closed-loop converter and DC-network simulation with audits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a scenario file and audit the result")
    p.add_argument("file", nargs="?", help="scenario file (YAML)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--dt", type=float, help="override the time step in seconds")
    p.add_argument("--saturate-duty", action="store_true", help="clamp duty cycles to [0, 1]")
    p.add_argument("--all-presets", action="store_true", help="run every preset into OUT/<name>/ in parallel")
    p.add_argument("--jobs", type=int, help="worker processes for --all-presets")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="print or write a preset scenario file")
    p.add_argument("name", help=", ".join(presets.preset_names()))
    p.add_argument("--emit", metavar="FILE", help="write to FILE instead of stdout")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("audit", help="re-audit a stored trajectory against its resolved scenario")
    p.add_argument("csv")
    p.add_argument("resolved")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BmsimError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
