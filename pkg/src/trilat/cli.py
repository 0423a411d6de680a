"""Command-line front end: ``trilat solve | verify | simulate | montecarlo``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import tomli_w

from trilat import __version__, covariance, fileio
from trilat.errors import (
    ConvergenceError,
    DegenerateGeometryError,
    DegenerateReductionError,
    IdenticallySatisfiedError,
    IllConditionedError,
    NoCandidatesError,
    ParseError,
    ProblemError,
    TrilatError,
)
from trilat.model import Mode, ObservationSet, ProblemSpec, Station
from trilat.solution import CandidateSolution
from trilat.solver import solve

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DEGENERATE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_CROSS_CHECK = 5

log = logging.getLogger("trilat")


def _candidate_dict(c: CandidateSolution) -> dict:
    return {
        "x": c.x,
        "y": c.y,
        "z": c.z,
        "rho": c.rho,
        "theta": c.theta,
        "objective": c.objective_value,
        "residual_norm": c.residual_norm,
        "classification": c.classification.value,
        "provenance": list(c.provenance),
        "boundary": c.boundary,
        "full_rank": c.full_rank,
    }


def _header(command: str, seed: int) -> dict:
    return {"format": fileio.REPORT_FORMAT, "version": __version__, "command": command, "seed": seed}


def solve_report(parsed: fileio.ParsedProblem, command: str, verify: bool) -> tuple[dict, int]:
    spec, cfg = parsed.spec, parsed.config
    out = solve(spec, cfg, verify=verify, frame=parsed.frame)
    report = _header(command, cfg.seed)
    report["problem"] = fileio.problem_document(spec, cfg, parsed.frame)
    report["ingestion"] = parsed.ingestion
    report["method"] = out.method
    report["fallback"] = out.fallback
    report["candidates"] = [_candidate_dict(c) for c in out.candidates]
    report["selected"] = _candidate_dict(out.selected)
    if out.covariance is not None:
        cv = out.covariance
        report["covariance"] = {
            "jacobian_JX": cv.jacobian_JX,
            "sigma_L": cv.sigma_L,
            "sigma_X": cv.sigma_X,
            "condition_number": cv.condition_number,
        }
    else:
        report["covariance"] = None
    report["verification"] = out.verification
    report["diagnostics"] = out.diagnostics
    report["excluded_roots"] = out.excluded
    code = EXIT_OK
    if out.verification is not None and not out.verification["agreement"]:
        code = EXIT_CROSS_CHECK
    return report, code


def montecarlo_report(parsed: fileio.ParsedProblem, trials: int) -> dict:
    spec, cfg = parsed.spec, parsed.config
    if spec.mode is not Mode.PLANAR2:
        raise ProblemError("montecarlo needs a planar2 problem")
    out = solve(spec, cfg, frame=parsed.frame, with_covariance=False)
    sel = out.selected
    others = [(c.x, c.y) for c in out.candidates if c.is_minimum and c is not sel]
    sigma_L = covariance.observation_covariance(spec)
    mc = covariance.monte_carlo(spec, (sel.x, sel.y), sigma_L, trials, cfg.seed, minima=others, config=cfg)
    report = _header("montecarlo", cfg.seed)
    report["problem"] = fileio.problem_document(spec, cfg, parsed.frame)
    report["nominal"] = _candidate_dict(sel)
    report["other_minima"] = [list(p) for p in others]
    report["sigma_L"] = sigma_L
    report["sigma_L_source"] = "sigmas" if spec.observations.sigmas is not None else "sigma0^2 P^-1"
    report["trials"] = mc.trials
    report["used_trials"] = mc.used
    report["excluded_trials"] = mc.excluded
    report["not_converged"] = mc.not_converged
    report["analytic_sigma_X"] = mc.analytic
    report["empirical_mean"] = mc.mean
    report["empirical_covariance"] = mc.covariance
    report["relative_difference"] = mc.relative_difference
    return report


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _matrix(a) -> str:
    a = np.asarray(a)
    return "[" + ", ".join("[" + ", ".join(_fmt(x) for x in row) + "]" for row in a) + "]"


def text_report(report: dict) -> str:
    lines = [f"trilat {report['version']}  {report['command']}  seed={report['seed']}"]
    if "error" in report:
        err = report["error"]
        lines.append(f"error [{err['code']}]: {err['message']}")
        return "\n".join(lines) + "\n"
    if report["command"] == "montecarlo":
        n = report["nominal"]
        lines.append(f"nominal minimum: x={_fmt(n['x'])} y={_fmt(n['y'])}")
        lines.append(f"trials={report['trials']} used={report['used_trials']} "
                     f"excluded={report['excluded_trials']} not_converged={report['not_converged']}")
        lines.append(f"analytic sigma_X:  {_matrix(report['analytic_sigma_X'])}")
        if report["empirical_covariance"] is not None:
            lines.append(f"empirical sigma_X: {_matrix(report['empirical_covariance'])}")
            lines.append(f"relative difference: {_matrix(report['relative_difference'])}")
        return "\n".join(lines) + "\n"
    lines.append(f"mode={report['problem']['mode']} method={report['method']}"
                 + (f" fallback={report['fallback']}" if report["fallback"] else ""))
    lines.append("candidates:")
    for c in report["candidates"]:
        lines.append(
            f"  {c['classification']:<10} x={_fmt(c['x'])} y={_fmt(c['y'])} z={_fmt(c['z'])} "
            f"G={_fmt(c['objective'])} |res|={_fmt(c['residual_norm'])} [{', '.join(c['provenance'])}]"
            + (" boundary" if c["boundary"] else "")
        )
    s = report["selected"]
    lines.append(f"selected: x={_fmt(s['x'])} y={_fmt(s['y'])} z={_fmt(s['z'])}")
    if report["covariance"] is not None:
        lines.append(f"sigma_X: {_matrix(report['covariance']['sigma_X'])}")
    if report["verification"] is not None:
        v = report["verification"]
        lines.append(f"verification: agreement={str(v['agreement']).lower()} ({v['reference']})")
    for d in report["diagnostics"]:
        lines.append(f"diagnostic [{d.get('code', '?')}]: {d.get('message', '')}")
    if report["excluded_roots"]:
        lines.append(f"excluded roots: {len(report['excluded_roots'])}")
    return "\n".join(lines) + "\n"


def _emit(report: dict, args) -> None:
    text = fileio.dumps_report(report) if args.format == "structured" else text_report(report)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args) -> fileio.ParsedProblem:
    parsed = fileio.parse_problem_file(args.problem, mode=args.mode, z0=args.z0)
    if args.config:
        cfg, frame = fileio.load_config(args.config, parsed.config)
        parsed.config = cfg
        parsed.frame = frame or parsed.frame
    if args.seed is not None:
        parsed.config = fileio.parse_config({"seed": args.seed}, parsed.config, "--seed")[0]
    return parsed


def _parse_points(text: str, what: str) -> list[tuple[float, ...]]:
    try:
        pts = [tuple(float(x) for x in p.split(",")) for p in text.split(";") if p.strip()]
    except ValueError:
        raise ProblemError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not pts or any(len(p) not in (2, 3) for p in pts):
        raise ProblemError(f"{what}: each point needs 2 or 3 coordinates")
    return pts


def simulate(args) -> int:
    stations = _parse_points(args.stations, "--stations")
    truth = _parse_points(args.truth, "--truth")
    if len(truth) != 1:
        raise ProblemError("--truth takes a single point")
    truth = truth[0]
    mode = Mode(args.mode) if args.mode else {2: Mode.PLANAR2, 3: Mode.PLANAR3}.get(len(stations), Mode.SPATIAL)
    if mode.planar:
        z0 = args.z0 if args.z0 is not None else (truth[2] if len(truth) == 3 else 0.0)
        X = np.array([truth[0], truth[1], z0])
    else:
        if len(truth) != 3:
            raise ProblemError("spatial mode needs a 3-coordinate --truth")
        z0 = None
        X = np.array(truth)
    sts = tuple(Station(p[0], p[1], p[2] if len(p) == 3 else 0.0, f"S{k + 1}") for k, p in enumerate(stations))
    # validates the layout (station count, coincident stations)
    ProblemSpec(sts, ObservationSet(tuple(1.0 for _ in sts)), mode, z0)
    if args.sigma_d < 0:
        raise ProblemError("--sigma-d must be >= 0")
    rng = np.random.default_rng(args.seed)
    d = np.linalg.norm(np.array([s.xyz for s in sts]) - X, axis=1)
    noisy = np.abs(d + rng.normal(0.0, 1.0, len(d)) * args.sigma_d)

    doc = {"format": fileio.PROBLEM_FORMAT, "mode": mode.value}
    if z0 is not None:
        doc["z0"] = float(z0)
    doc["station"] = [{"id": s.id, "u": s.u, "v": s.v, "w": s.w} for s in sts]
    doc["observation"] = []
    for s, dist in zip(sts, noisy):
        ob = {"station": s.id, "distance": float(dist)}
        if args.sigma_d > 0:
            ob["sigma"] = float(args.sigma_d)
        doc["observation"].append(ob)
    doc["config"] = {"seed": args.seed}
    problem_text = tomli_w.dumps(doc)
    sidecar = tomli_w.dumps({
        "format": fileio.TRUTH_FORMAT, "x": float(X[0]), "y": float(X[1]), "z": float(X[2]),
        "sigma_d": float(args.sigma_d), "seed": args.seed,
    })
    if args.output:
        Path(args.output).write_text(problem_text, encoding="utf-8")
        truth_path = args.truth_output or f"{args.output}.truth.toml"
        Path(truth_path).write_text(sidecar, encoding="utf-8")
    else:
        sys.stdout.write(problem_text)
        if args.truth_output:
            Path(args.truth_output).write_text(sidecar, encoding="utf-8")
    return EXIT_OK


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (ParseError, ProblemError)):
        return EXIT_PARSE
    if isinstance(exc, (DegenerateGeometryError, IllConditionedError, DegenerateReductionError,
                        IdenticallySatisfiedError)):
        return EXIT_DEGENERATE
    if isinstance(exc, (ConvergenceError, NoCandidatesError)):
        return EXIT_NO_CONVERGENCE
    # any other library error is unexpected: treat it like a failed cross-check
    return EXIT_CROSS_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trilat", description=__doc__)
    parser.add_argument("--version", action="version", version=f"trilat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, problem=True):
        if problem:
            p.add_argument("problem", help="problem file (TOML, format trilat-problem/1)")
        p.add_argument("--mode", choices=[m.value for m in Mode], help="override the problem mode")
        p.add_argument("--z0", type=float, help="override the fixed height (meters)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--output", help="write the result here instead of stdout")

    for name, help_ in (("solve", "solve a problem"), ("verify", "solve with a mandatory numeric cross-check")):
        p = sub.add_parser(name, help=help_)
        common(p)
        if name == "solve":
            p.add_argument("--verify", action="store_true", help="cross-check against a numeric solver")
        p.add_argument("--config", help="solver configuration overrides (TOML)")
        p.add_argument("--format", choices=("text", "structured"), default="text")

    p = sub.add_parser("montecarlo", help="empirical covariance from noisy re-solves")
    common(p)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--config", help="solver configuration overrides (TOML)")
    p.add_argument("--format", choices=("text", "structured"), default="text")

    p = sub.add_parser("simulate", help="generate a synthetic problem file and truth sidecar")
    common(p, problem=False)
    p.add_argument("--stations", required=True, help='station list, e.g. "0,0;4,0" (meters)')
    p.add_argument("--truth", required=True, help='true point, e.g. "1,2"')
    p.add_argument("--sigma-d", type=float, default=0.0, help="distance noise std-dev (meters)")
    p.add_argument("--truth-output", help="truth sidecar path (default: <output>.truth.toml)")
    return parser


def _log_handler() -> logging.Handler:
    """A stderr handler on the package logger, level from TRILAT_LOG."""
    name = os.environ.get("TRILAT_LOG", "warning").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(level)
    return handler


def main(argv=None) -> int:
    handler = _log_handler()
    try:
        return _run(build_parser().parse_args(argv))
    finally:
        log.removeHandler(handler)


def _run(args) -> int:
    if args.command == "simulate":
        if args.seed is None:
            args.seed = 0
        try:
            return simulate(args)
        except TrilatError as exc:
            sys.stderr.write(f"trilat: {exc}\n")
            return _exit_code(exc)

    seed = args.seed if args.seed is not None else 0
    try:
        parsed = _load(args)
        seed = parsed.config.seed
        if args.command == "montecarlo":
            if args.trials < 0:
                raise ProblemError("--trials must be >= 0")
            report, code = montecarlo_report(parsed, args.trials), EXIT_OK
        else:
            verify = args.command == "verify" or args.verify
            report, code = solve_report(parsed, args.command, verify)
    except TrilatError as exc:
        code = _exit_code(exc)
        report = _header(args.command, seed)
        report["error"] = exc.as_dict()
        log.debug("failed: %s", exc)
    _emit(report, args)
    if code == EXIT_CROSS_CHECK:
        log.warning("algebraic and numeric solutions disagree")
    return code


if __name__ == "__main__":
    sys.exit(main())
