"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime failure,
3 a run ended with cause blowup_suspected.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from ._backend import NAME as BACKEND

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_BLOWUP = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kscrit", description="Critical-diffusion Keller-Segel toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="single simulation from a config file")
    r.add_argument("config")
    r.add_argument("--output", help="override the output directory")

    s = sub.add_parser("sweep-mass", help="independent runs over a list of mean masses")
    s.add_argument("config")
    s.add_argument("--masses", type=_floats, required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--output")

    c = sub.add_parser("continue-delta", help="delta ladder delta0, delta0/2, ...")
    c.add_argument("config")
    c.add_argument("--delta0", type=float, required=True)
    c.add_argument("--levels", type=int, required=True)
    c.add_argument("--rho", type=float, default=1.3)
    c.add_argument("--workers", type=int, default=None)
    c.add_argument("--output")

    t = sub.add_parser("threshold", help="critical mean mass and coercivity gap")
    t.add_argument("--N", type=int, required=True)
    t.add_argument("--volume", type=float, required=True)
    t.add_argument("--cs", type=float, required=True)
    t.add_argument("--mass", type=float, default=None)

    e = sub.add_parser("estimate-sobolev", help="radial Rayleigh estimate of C_s")
    e.add_argument("config")

    a = sub.add_parser("audit", help="inequality audits on the frozen corpus")
    a.add_argument("config")
    a.add_argument("--output")
    a.add_argument("--calibrate", metavar="PATH",
                   help="recalibrate constants on the reference corpus and write them to PATH")

    sub.add_parser("version", help="print version and backend")
    return p


def _load(path: str, output: str | None = None):
    from .harness import load_config
    cfg = load_config(path)
    if output:
        cfg = cfg.with_(output_dir=output)
    return cfg


def cmd_run(args) -> int:
    from .harness import run_experiment
    er = run_experiment(_load(args.config, args.output))
    print(f"{er.cause} t={er.result.t!r} steps={er.result.steps} output={er.output_dir}")
    return EXIT_BLOWUP if er.cause == "blowup_suspected" else EXIT_OK


def cmd_sweep(args) -> int:
    from .harness import sweep_mass
    rows = sweep_mass(_load(args.config, args.output), args.masses, args.workers)
    print("M,M_over_Mstar_est,verdict,max_linf,final_liapunov")
    for r in rows:
        print(f"{r.M!r},{r.ratio!r},{r.verdict},{r.max_linf!r},{r.final_liapunov!r}")
    return EXIT_BLOWUP if any(r.verdict == "blowup_suspected" for r in rows) else EXIT_OK


def cmd_continue(args) -> int:
    from .harness import continuation_delta
    rep = continuation_delta(_load(args.config, args.output), args.delta0, args.levels,
                             args.rho, args.workers)
    for k, d in enumerate(rep.distances):
        print(f"{rep.deltas[k]!r} -> {rep.deltas[k + 1]!r}: {d!r}")
    print(f"mean decay factor {rep.mean_factor!r} (rho {rep.rho!r}); converged={rep.converged}")
    if rep.aborted:
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_threshold(args) -> int:
    from .energy import m_star, threshold_report
    if args.mass is None:
        print(f"M* = {m_star(args.N, args.volume, args.cs)!r}")
        return EXIT_OK
    rep = threshold_report(args.mass, args.N, args.volume, args.cs, "user-supplied C_s")
    print("\n".join(rep.lines()))
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .energy import estimate_sobolev_constant, m_star
    cfg = _load(args.config)
    grid = cfg.grid()
    est = estimate_sobolev_constant(grid, cfg.sobolev_trials, cfg.sobolev_iterations, cfg.seed)
    print(f"C_s_hat = {est.c_s!r}")
    print(f"M*_hat = {m_star(cfg.N, grid.discrete_volume, est.c_s)!r}")
    print(f"per_trial = {', '.join(repr(x) for x in est.best_per_trial)}")
    return EXIT_OK


def cmd_audit(args) -> int:
    from . import analysis as A
    cfg = _load(args.config, args.output)
    if args.calibrate:
        grid = A.frozen_corpus_grid()
        meta = A.load_frozen()["corpus"]
        data = A.calibrate_defaults(grid, meta["count"], meta["seed"])
        Path(args.calibrate).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        print(f"wrote {len(data['constants'])} constants to {args.calibrate}")
        return EXIT_OK
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = A.frozen_corpus_grid()
    meta = A.load_frozen()["corpus"]
    corpora = {
        "reference": A.reference_corpus(grid, meta["count"], meta["seed"]),
        "fresh": A.reference_corpus(grid, meta["count"], cfg.seed + 1),
    }
    ok = True
    for name, fields in corpora.items():
        for q1, q2 in A.DEFAULT_AUDITS["gn"]:
            recs = A.audit_gn(fields, q1, q2, grid)
            A.write_audit_csv(recs, out / f"audit_{name}_gn_{q1:g}_{q2:g}.csv")
            npass = sum(r.passed for r in recs)
            print(f"{name} gn q1={q1:g} q2={q2:g}: {npass}/{len(recs)} pass, "
                  f"max ratio {max(r.ratio for r in recs):.12f}")
            ok &= name != "reference" or npass == len(recs)
        for q1 in A.DEFAULT_AUDITS["poincare"]:
            recs = A.audit_poincare(fields, q1, grid)
            A.write_audit_csv(recs, out / f"audit_{name}_poincare_{q1:g}.csv")
            npass = sum(r.passed for r in recs)
            print(f"{name} poincare q1={q1:g}: {npass}/{len(recs)} pass, "
                  f"max ratio {max(r.ratio for r in recs):.12f}")
            ok &= name != "reference" or npass == len(recs)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_version(args) -> int:
    print(f"kscrit {__version__} (backend: {BACKEND})")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run, "sweep-mass": cmd_sweep, "continue-delta": cmd_continue,
    "threshold": cmd_threshold, "estimate-sobolev": cmd_estimate, "audit": cmd_audit,
    "version": cmd_version,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .harness.config import ConfigError
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"kscrit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failures map to one exit code
        print(f"kscrit: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
