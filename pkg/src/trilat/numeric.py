"""Numeric reference solvers for every problem mode.

All iterations run in a normalized frame (stations centered and divided by
the characteristic length D) so that tolerances are scale free; results are
mapped back to the user frame before classification.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

from trilat import model
from trilat.model import Classification, ObservationSet, ProblemSpec, Station
from trilat.solution import CandidateSolution, dedupe, make_candidate

log = logging.getLogger(__name__)

_LAMBDA_UP = 10.0
_LAMBDA_DOWN = 0.1
_LAMBDA_MAX = 1e16
_NEWTON_POLISH_STEPS = 8
# points per axis of the local reseeding grid around each grid minimum
_REFINE = 9
# stationarity tolerance in user units, relative to max(1, |L|); a tenth of
# the soundness bound applied to emitted candidates
_USER_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    step_tolerance: float = 1e-12
    residual_tolerance: float = 1e-10
    damping_initial: float = 1e-3
    multistart_count: int = 16
    grid_resolution: int = 201
    search_box: float = 2.0
    seed: int = 0
    spatial_grid_resolution: int = 41

    def __post_init__(self):
        for name in (
            "max_iterations",
            "step_tolerance",
            "residual_tolerance",
            "damping_initial",
            "multistart_count",
            "search_box",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.grid_resolution < 3 or self.spatial_grid_resolution < 3:
            raise ValueError("grid_resolution must be >= 3")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


class Iterate(NamedTuple):
    point: tuple[float, ...]
    objective: float
    gradient_norm: float
    kind: str  # "start", "damped" or "newton"


@dataclass
class SolveTrace:
    iterates: list[Iterate] = field(default_factory=list)
    termination_reason: str = "max_iter"


@dataclass(frozen=True)
class _Frame:
    center: np.ndarray
    scale: float

    def to_norm(self, X):
        return (np.asarray(X, dtype=float) - self.center) / self.scale

    def to_user(self, Xn):
        return self.center + self.scale * np.asarray(Xn, dtype=float)


def normalize(spec: ProblemSpec) -> tuple[ProblemSpec, _Frame]:
    """Return an equivalent problem with stations centered and scaled by D."""
    D = spec.scale
    m = spec.n_unknowns
    center = spec.centroid.copy()
    full = np.zeros(3)
    full[:m] = center
    if spec.mode.planar:
        full[2] = spec.z0
    pos = (spec.positions - full) / D
    obs = spec.observations
    nobs = ObservationSet(
        tuple(v / D**2 for v in obs.values),
        obs.weights,
        obs.sigma0,
        None if obs.sigmas is None else tuple(s / D**2 for s in obs.sigmas),
    )
    stations = tuple(Station(*p, id=s.id) for p, s in zip(pos, spec.stations))
    nspec = ProblemSpec(stations, nobs, spec.mode, 0.0 if spec.mode.planar else None)
    return nspec, _Frame(center, D)


def _residual_bound(L_norm, D: float, config: SolverConfig):
    """Stationarity tolerance in the normalized frame.

    The stricter of ``residual_tolerance * max(1, |L|)`` in normalized units
    and the same form in user units, so that a converged point also meets the
    user-frame soundness check however large the coordinates are.
    """
    n = np.linalg.norm(L_norm, axis=-1)
    user = _USER_TOL * np.maximum(1.0, n * D * D) / D**3
    return np.minimum(config.residual_tolerance * np.maximum(1.0, n), user)


def _newton_polish(nspec: ProblemSpec, x: np.ndarray, trace: SolveTrace, frame: _Frame) -> np.ndarray:
    """Full-Hessian Newton steps on the stationarity system while the residual shrinks."""
    D = frame.scale
    res = model.stationarity_residual(nspec, x).norm
    for _ in range(_NEWTON_POLISH_STEPS):
        H = model.hessian_G(nspec, x)
        g = model.gradient(nspec, x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        x_new = x - step
        res_new = model.stationarity_residual(nspec, x_new).norm
        if not res_new < res:
            break
        x, res = x_new, res_new
        trace.iterates.append(
            Iterate(
                tuple(frame.to_user(x)),
                model.objective(nspec, x) * D**4,
                float(np.linalg.norm(model.gradient(nspec, x))) * D**3,
                "newton",
            )
        )
    return x


def _gauss_newton_normalized(
    nspec: ProblemSpec, x0: np.ndarray, config: SolverConfig, frame: _Frame
) -> tuple[np.ndarray, SolveTrace]:
    D = frame.scale
    p = nspec.weights
    trace = SolveTrace()
    bound = float(_residual_bound(nspec.L, D, config))
    x = np.array(x0, dtype=float)
    lam = config.damping_initial
    m = nspec.n_unknowns

    def record(x, G, kind):
        g = model.gradient(nspec, x)
        trace.iterates.append(
            Iterate(tuple(frame.to_user(x)), G * D**4, float(np.linalg.norm(g)) * D**3, kind)
        )

    G = model.objective(nspec, x)
    record(x, G, "start")
    if model.stationarity_residual(nspec, x).norm <= bound:
        trace.termination_reason = "converged"
        return x, trace

    stalled = False
    for _ in range(config.max_iterations):
        r = nspec.L - model.eval_zeta(nspec, x)
        J = model.jacobian_zeta(nspec, x)
        N = (J.T * p) @ J
        rhs = J.T @ (p * r)
        accepted = False
        while lam <= _LAMBDA_MAX:
            try:
                step = np.linalg.solve(N + lam * np.eye(m), rhs)
            except np.linalg.LinAlgError:
                lam *= _LAMBDA_UP
                continue
            x_new = x + step
            G_new = model.objective(nspec, x_new)
            if G_new < G:
                accepted = True
                break
            lam *= _LAMBDA_UP
        if not accepted:
            stalled = True
            break
        x, G = x_new, G_new
        lam = max(lam * _LAMBDA_DOWN, 1e-15)
        record(x, G, "damped")
        if model.stationarity_residual(nspec, x).norm <= bound:
            break
        if np.linalg.norm(step) <= config.step_tolerance * max(1.0, float(np.linalg.norm(x))):
            break

    x = _newton_polish(nspec, x, trace, frame)
    if model.stationarity_residual(nspec, x).norm <= bound:
        trace.termination_reason = "converged"
    elif stalled and not model.jacobian_rank_ok(nspec, x):
        trace.termination_reason = "singular_normal_matrix"
    else:
        trace.termination_reason = "max_iter"
    return x, trace


def gauss_newton(
    spec: ProblemSpec, start, config: SolverConfig = SolverConfig()
) -> tuple[CandidateSolution, SolveTrace]:
    """Levenberg-damped Gauss-Newton on the residual vector L - zeta(X).

    Steps are accepted only when they lower the objective; the damping grows
    by 10 on rejection and shrinks by 10 on acceptance.  A few full-Hessian
    Newton steps finish the iteration so that large-residual problems reach
    the stationarity tolerance.
    """
    nspec, frame = normalize(spec)
    x0 = frame.to_norm(model.unknowns(spec, start))
    xn, trace = _gauss_newton_normalized(nspec, x0, config, frame)
    cand = make_candidate(spec, frame.to_user(xn), "numeric")
    if trace.termination_reason == "converged" and len(trace.iterates) == 1:
        log.debug("start point is already stationary (%s)", cand.classification.value)
    return cand, trace


def search_box(spec: ProblemSpec, config: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Station bounding box expanded by ``config.search_box`` about its center."""
    pts = spec.positions[:, : spec.n_unknowns]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = np.maximum(0.5 * (hi - lo), 0.5 * spec.scale) * config.search_box
    return center - half, center + half


def _seeds(spec: ProblemSpec, config: SolverConfig) -> np.ndarray:
    lo, hi = search_box(spec, config)
    sampler = qmc.Halton(d=spec.n_unknowns, scramble=True, seed=config.seed)
    return qmc.scale(sampler.random(config.multistart_count), lo, hi)


def multistart_solve(spec: ProblemSpec, config: SolverConfig = SolverConfig()) -> list[CandidateSolution]:
    """Gauss-Newton from reproducible low-discrepancy seeds; converged points deduplicated.

    Points that converge outside the search box are kept with ``boundary`` set.
    """
    model.check_station_geometry(spec)
    nspec, frame = normalize(spec)
    lo, hi = search_box(spec, config)
    found = []
    failures = 0
    for seed in _seeds(spec, config):
        xn, trace = _gauss_newton_normalized(nspec, frame.to_norm(seed), config, frame)
        if trace.termination_reason != "converged":
            failures += 1
            continue
        X = frame.to_user(xn)
        outside = bool(np.any(X < lo) or np.any(X > hi))
        found.append(make_candidate(spec, X, "numeric", boundary=outside))
    if failures:
        log.info("multistart: %d of %d starts did not converge", failures, config.multistart_count)
    if not found:
        log.warning("multistart: every start failed")
    return dedupe(spec, found)


@dataclass
class GridResult:
    candidates: list[CandidateSolution]
    diagnostics: list[dict]


def grid_then_polish(spec: ProblemSpec, config: SolverConfig = SolverConfig()) -> list[CandidateSolution]:
    return grid_then_polish_report(spec, config).candidates


def grid_then_polish_report(spec: ProblemSpec, config: SolverConfig = SolverConfig()) -> GridResult:
    """Brute-force oracle: grid minima of the objective, each polished by Gauss-Newton."""
    model.check_station_geometry(spec)
    nspec, frame = normalize(spec)
    m = spec.n_unknowns
    res = config.grid_resolution if spec.mode.planar else min(config.grid_resolution, config.spatial_grid_resolution)
    lo, hi = search_box(spec, config)
    lo_n, hi_n = frame.to_norm(lo), frame.to_norm(hi)
    axes = [np.linspace(lo_n[i], hi_n[i], res) for i in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    full = np.zeros((pts.shape[0], 3))
    full[:, :m] = pts
    d2 = ((full[:, None, :] - nspec.positions[None, :, :]) ** 2).sum(-1)
    G = (((nspec.L - d2) ** 2) * nspec.weights).sum(-1).reshape((res,) * m)
    # Nodes that are minima along any grid axis.  Narrow valleys that cross
    # the grid obliquely alias into arbitrary 2-D minima; axis minima track
    # the valley floor row by row, so every basin along it receives seeds.
    seed_mask = np.zeros(G.shape, dtype=bool)
    for axis in range(m):
        seed_mask |= G == ndimage.minimum_filter1d(G, size=3, axis=axis, mode="nearest")
    idx = np.argwhere(seed_mask)
    starts = np.stack([axes[k][idx[:, k]] for k in range(m)], axis=1)
    ends, ok = _damped_batch(nspec, np.tile(nspec.L, (len(starts), 1)), starts, config, frame.scale)

    # Minima closer than a couple of cells share one coarse basin.  Reseed a
    # fine local grid around every batch endpoint to separate them.
    _, first = np.unique(np.round(ends[ok] * 1e6), axis=0, return_index=True)
    centres = ends[ok][np.sort(first)]
    if len(centres):
        step = np.array([a[1] - a[0] for a in axes])
        offs = np.stack(np.meshgrid(*[np.linspace(-2, 2, _REFINE)] * m, indexing="ij"), -1).reshape(-1, m)
        local = (centres[:, None, :] + offs[None, :, :] * step).reshape(-1, m)
        more, ok2 = _damped_batch(nspec, np.tile(nspec.L, (len(local), 1)), local, config, frame.scale)
        ends, ok = np.vstack([ends, more]), np.concatenate([ok, ok2])

    # one scalar polish per distinct endpoint; near-duplicates that straddle
    # a rounding cell are merged by dedupe below
    _, first = np.unique(np.round(ends[ok] * 1e6), axis=0, return_index=True)
    unique = ends[ok][np.sort(first)]
    diagnostics = []
    found = []
    for start in unique:
        xn, trace = _gauss_newton_normalized(nspec, start, config, frame)
        if trace.termination_reason != "converged":
            continue
        X = frame.to_user(xn)
        outside = bool(np.any(X < lo) or np.any(X > hi))
        found.append(make_candidate(spec, X, "numeric", boundary=outside))
    out = dedupe(spec, found)
    flagged = [c for c in out if c.boundary]
    if flagged:
        diagnostics.append(
            {
                "code": "search_box_boundary",
                "message": "polishing reached minima outside the search box; "
                "enlarge search_box to search that region",
                "count": len(flagged),
            }
        )
    return GridResult(out, diagnostics)


def _damped_batch(
    nspec: ProblemSpec, L: np.ndarray, x: np.ndarray, config: SolverConfig, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized damped Gauss-Newton in the normalized frame.

    ``L`` has shape (N, n) and ``x`` (N, m); row b is an independent problem.
    Returns final points and the convergence mask.
    """
    N = x.shape[0]
    m = nspec.n_unknowns
    p = nspec.weights
    S = nspec.positions
    x = x.copy()
    lam = np.full(N, config.damping_initial)
    eye = np.eye(m)
    bound = _residual_bound(L, scale, config)

    def evaluate(x):
        full = np.zeros((x.shape[0], 3))
        full[:, :m] = x
        off = full[:, None, :] - S[None, :, :]
        return off, L - (off**2).sum(-1)

    def small_gradient(off, r):
        grad = np.einsum("bki,k,bk->bi", off[:, :, :m], p, r)
        return np.linalg.norm(grad, axis=1) <= bound

    off, r = evaluate(x)
    G = ((r**2) * p).sum(-1)
    active = ~small_gradient(off, r)
    for _ in range(config.max_iterations):
        if not active.any():
            break
        J = 2.0 * off[:, :, :m]
        Np = np.einsum("bki,k,bkj->bij", J, p, J)
        rhs = np.einsum("bki,k,bk->bi", J, p, r)
        step = np.linalg.solve(Np + lam[:, None, None] * eye, rhs[..., None])[..., 0]
        x_new = x + step
        off_new, r_new = evaluate(x_new)
        G_new = ((r_new**2) * p).sum(-1)
        ok = active & (G_new < G)
        x[ok], off[ok], r[ok], G[ok] = x_new[ok], off_new[ok], r_new[ok], G_new[ok]
        lam = np.where(ok, np.maximum(lam * _LAMBDA_DOWN, 1e-15), lam * _LAMBDA_UP)
        active &= ~small_gradient(off, r) & (lam <= _LAMBDA_MAX)

    # Newton steps on the stationarity system finish rows that the damped
    # iteration leaves creeping (large-residual minima converge only linearly)
    def residual(off, r):
        d = off[:, :, :m]
        return d, np.einsum("bki,k,bk->bi", d, p, r)

    d, g = residual(off, r)
    gn = np.linalg.norm(g, axis=1)
    todo = gn > bound
    for _ in range(_NEWTON_POLISH_STEPS):
        if not todo.any():
            break
        # Jacobian of the residual: sum p (r I - 2 d d^T)
        Jg = (p * r).sum(-1)[:, None, None] * eye - 2.0 * np.einsum("bki,k,bkj->bij", d, p, d)
        singular = np.abs(np.linalg.det(Jg)) <= 1e-14 * np.abs(Jg).max(axis=(1, 2)) ** m
        todo &= ~singular
        Jg[~todo] = eye
        step = np.linalg.solve(Jg, g[..., None])[..., 0]
        x_new = x - step
        off_new, r_new = evaluate(x_new)
        d_new, g_new = residual(off_new, r_new)
        gn_new = np.linalg.norm(g_new, axis=1)
        ok = todo & (gn_new < gn)
        x[ok], off[ok], r[ok], d[ok], g[ok], gn[ok] = (
            x_new[ok], off_new[ok], r_new[ok], d_new[ok], g_new[ok], gn_new[ok]
        )
        todo = ok & (gn > bound)
    return x, gn <= bound


def gauss_newton_batch(
    spec: ProblemSpec, L_batch, start, config: SolverConfig = SolverConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Solve many problems sharing stations and weights but differing in L.

    Returns user-frame points of shape (N, m) and a boolean convergence mask.
    Each problem runs its own damped iteration; the work is vectorized.
    """
    nspec, frame = normalize(spec)
    L = np.atleast_2d(np.asarray(L_batch, dtype=float)) / frame.scale**2
    x0 = np.tile(frame.to_norm(model.unknowns(spec, start)), (L.shape[0], 1))
    x, converged = _damped_batch(nspec, L, x0, config, frame.scale)
    return frame.to_user(x), converged


def classify_batch(spec: ProblemSpec, X: np.ndarray) -> list[Classification]:
    return [model.classify_stationary(model.hessian_G(spec, x)) for x in X]
