"""Mode dispatch: the algebraic path for two stations, numeric solvers otherwise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from trilat import covariance, cubic_path, numeric
from trilat.errors import (
    ConvergenceError,
    DegenerateReductionError,
    IllConditionedError,
    NoCandidatesError,
)
from trilat.model import Mode, ProblemSpec
from trilat.numeric import SolverConfig
from trilat.solution import CandidateSolution, dedupe, minima, select_minimum, sort_candidates

log = logging.getLogger(__name__)

# relative (to D) radius for matching algebraic and numeric candidates
MATCH_RADIUS = 1e-6
# every emitted candidate satisfies |stationarity residual| <= SOUNDNESS * max(1, |L|)
SOUNDNESS = 1e-7


@dataclass
class SolveOutcome:
    spec: ProblemSpec
    candidates: list[CandidateSolution]
    selected: CandidateSolution | None
    method: str
    fallback: str | None = None
    diagnostics: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)
    covariance: covariance.CovarianceReport | None = None
    verification: dict | None = None


def _in_box(c: CandidateSolution, lo, hi, planar: bool) -> bool:
    X = c.coords(planar)
    return bool(np.all(X >= lo) and np.all(X <= hi))


def _cross_check(spec, primary, reference, name, config, diagnostics):
    """Compare minima inside the search box; matched candidates gain the other provenance."""
    lo, hi = numeric.search_box(spec, config)
    planar = spec.mode.planar
    radius = MATCH_RADIUS * spec.scale
    a = [c for c in minima(primary) if _in_box(c, lo, hi, planar) and not c.boundary]
    b = [c for c in minima(reference) if not c.boundary]
    unused = list(b)
    merged = []
    for c in primary:
        hit = next((k for k in unused if math.dist(c.unknowns, k.unknowns) <= radius), None)
        if hit is not None:
            unused.remove(hit)
            c = replace(c, provenance=tuple(sorted(set(c.provenance) | set(hit.provenance))))
        merged.append(c)
    agree = len(a) == len(b) and all(
        any(math.dist(c.unknowns, k.unknowns) <= radius for k in b) for c in a
    )
    outside = len(minima(primary)) - len(a)
    if outside:
        diagnostics.append(
            {"code": "verify_outside_box",
             "message": "minima outside the numeric search box were not cross-checked",
             "count": outside}
        )
    return sort_candidates(spec, merged), {
        "agreement": agree,
        "reference": name,
        "radius": radius,
        "primary_minima": len(a),
        "reference_minima": len(b),
    }


def _numeric(spec: ProblemSpec, config: SolverConfig, diagnostics: list[dict]):
    if spec.mode is Mode.PLANAR2:
        grid = numeric.grid_then_polish_report(spec, config)
        diagnostics.extend(grid.diagnostics)
        return grid.candidates
    return numeric.multistart_solve(spec, config)


def solve(
    spec: ProblemSpec,
    config: SolverConfig = SolverConfig(),
    *,
    verify: bool = False,
    frame: str = "offset",
    with_covariance: bool = True,
) -> SolveOutcome:
    """Enumerate stationary points and select the least-objective minimum.

    Two-station planar problems use the algebraic path and fall back to the
    grid oracle when the reduction is degenerate.  Other modes use multistart
    Gauss-Newton.  ``verify`` cross-checks against the grid oracle.
    """
    diagnostics: list[dict] = []
    excluded: list[dict] = []
    fallback = None
    verification = None
    if spec.mode is Mode.PLANAR2:
        try:
            sol = cubic_path.solve_planar2(spec, frame=frame)
            cands, method = sol.candidates, "algebraic"
            diagnostics.extend(sol.diagnostics)
            excluded.extend(sol.excluded)
        except (DegenerateReductionError, NoCandidatesError) as exc:
            diagnostics.append(exc.as_dict())
            log.info("algebraic path unavailable (%s); using the numeric solver", exc)
            fallback, method = "numeric", "numeric"
            cands = _numeric(spec, config, diagnostics)
    else:
        method = "numeric"
        cands = numeric.multistart_solve(spec, config)

    bound = SOUNDNESS * max(1.0, float(np.linalg.norm(spec.L)))
    unsound = [c for c in cands if c.residual_norm > bound]
    if unsound:
        diagnostics.append(
            {"code": "unsound_candidates_dropped", "count": len(unsound),
             "residual_norms": [c.residual_norm for c in unsound]}
        )
        cands = [c for c in cands if c.residual_norm <= bound]

    if verify:
        # the reference must be a different solver from the one that produced cands
        if fallback is None:
            name, reference = "grid_then_polish", numeric.grid_then_polish(spec, config)
        else:
            name, reference = "multistart_solve", numeric.multistart_solve(spec, config)
        cands, verification = _cross_check(spec, cands, reference, name, config, diagnostics)

    cands = dedupe(spec, cands)
    selected = select_minimum(spec, cands)
    if selected is None:
        raise ConvergenceError(
            "no local minimum found", candidates=len(cands), diagnostics=diagnostics
        )

    cov = None
    if with_covariance and spec.mode is Mode.PLANAR2:
        try:
            cov = covariance.propagate(
                spec, (selected.x, selected.y), covariance.observation_covariance(spec)
            )
        except IllConditionedError as exc:
            diagnostics.append(exc.as_dict())
    return SolveOutcome(spec, cands, selected, method, fallback, diagnostics, excluded, cov, verification)
