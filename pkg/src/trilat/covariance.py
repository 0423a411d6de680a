"""First-order covariance of a two-station planar fix and its Monte Carlo check.

Observations are squared distances, so ``sigma_L`` lives in the squared
domain (m^4).  Distance standard deviations convert with
``var(L) = 4 d^2 sigma_d^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trilat import model
from trilat.errors import IllConditionedError, ProblemError
from trilat.model import Mode, ProblemSpec
from trilat.numeric import SolverConfig, gauss_newton_batch

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class CovarianceReport:
    jacobian_JX: np.ndarray
    sigma_L: np.ndarray
    sigma_X: np.ndarray
    condition_number: float


def _require_planar2(spec: ProblemSpec) -> None:
    if spec.mode is not Mode.PLANAR2:
        raise ProblemError("covariance propagation is implemented for mode planar2 only")


def jacobian_JX(spec: ProblemSpec, point) -> np.ndarray:
    """``2 [[x - u1, y - v1], [x - u2, y - v2]]``."""
    _require_planar2(spec)
    x, y = model.unknowns(spec, point)
    S = spec.positions
    return 2.0 * np.array([[x - S[0, 0], y - S[0, 1]], [x - S[1, 0], y - S[1, 1]]])


def propagate(spec: ProblemSpec, point, sigma_L) -> CovarianceReport:
    """sigma_X = J^-1 sigma_L J^-T, symmetrized."""
    J = jacobian_JX(spec, point)
    sigma_L = np.asarray(sigma_L, dtype=float)
    if sigma_L.shape != (2, 2):
        raise ProblemError(f"sigma_L must be 2x2, got shape {sigma_L.shape}")
    cond = float(np.linalg.cond(J))
    if not cond < CONDITION_LIMIT:
        raise IllConditionedError(
            "J_X is singular or ill-conditioned: point collinear with stations",
            condition_number=cond,
        )
    Jinv = np.linalg.inv(J)
    sx = Jinv @ sigma_L @ Jinv.T
    return CovarianceReport(J, sigma_L, 0.5 * (sx + sx.T), cond)


def distance_sigma_to_L_sigma(distances, sigma_d) -> np.ndarray:
    """Diagonal squared-distance covariance from distance standard deviations."""
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0):
        raise ProblemError("distances must be positive")
    s = np.broadcast_to(np.asarray(sigma_d, dtype=float), d.shape)
    return np.diag(4.0 * d * d * s * s)


def observation_covariance(spec: ProblemSpec) -> np.ndarray:
    """sigma_L from per-observation sigmas when given, else sigma0^2 P^-1."""
    obs = spec.observations
    if obs.sigmas is not None:
        return np.diag(np.asarray(obs.sigmas, dtype=float) ** 2)
    return obs.sigma0**2 * np.diag(1.0 / spec.weights)


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    used: int
    excluded: int
    mean: np.ndarray | None
    covariance: np.ndarray | None
    analytic: np.ndarray
    relative_difference: np.ndarray | None
    not_converged: int


def monte_carlo(
    spec: ProblemSpec,
    point,
    sigma_L,
    trials: int,
    seed: int = 0,
    *,
    minima=None,
    config: SolverConfig = SolverConfig(),
    chunk: int = 20000,
) -> MonteCarloResult:
    """Re-solve with Gaussian noise on L and compare with :func:`propagate`.

    ``minima`` lists the nominal minima (default: ``point`` alone).  A trial
    whose estimate lies nearer another nominal minimum than ``point`` (or
    equally near) has hopped basins and is excluded.  Trials are processed in
    index order in fixed-size chunks, so results depend only on the seed.
    """
    if trials < 0:
        raise ValueError("trials must be non-negative")
    rep = propagate(spec, point, sigma_L)
    X0 = np.asarray(model.unknowns(spec, point), dtype=float)
    nominal = [X0] + [np.asarray(m, dtype=float) for m in (minima or []) if not np.allclose(m, X0)]
    if trials == 0:
        return MonteCarloResult(0, 0, 0, None, None, rep.sigma_X, None, 0)

    rng = np.random.default_rng(seed)
    chol = _factor(rep.sigma_L)
    kept = []
    excluded = failed = 0
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        L = spec.L + rng.standard_normal((n, 2)) @ chol.T
        X, ok = gauss_newton_batch(spec, L, X0, config)
        failed += int((~ok).sum())
        X = X[ok]
        dist = np.stack([np.linalg.norm(X - m, axis=1) for m in nominal], axis=1)
        home = dist[:, 0] < dist[:, 1:].min(axis=1) if len(nominal) > 1 else np.ones(len(X), bool)
        excluded += int((~home).sum())
        kept.append(X[home])
    est = np.concatenate(kept)
    if len(est) < 2:
        return MonteCarloResult(trials, len(est), excluded, None, None, rep.sigma_X, None, failed)
    mean = est.mean(axis=0)
    cov = np.cov(est, rowvar=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(cov - rep.sigma_X) / np.abs(rep.sigma_X)
    return MonteCarloResult(trials, len(est), excluded, mean, cov, rep.sigma_X, rel, failed)


def _factor(sigma: np.ndarray) -> np.ndarray:
    """A square root ``C`` with ``C C^T = sigma``; tolerates semidefinite input."""
    w, V = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ProblemError("sigma_L is not positive semidefinite")
    return V * np.sqrt(np.clip(w, 0.0, None))
