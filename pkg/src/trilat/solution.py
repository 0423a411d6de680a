"""Candidate stationary points and helpers shared by the solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from trilat import model
from trilat.model import Classification, ProblemSpec

# relative quantum used to compare objective values when ordering candidates
OBJECTIVE_TIE = 1e-9
# relative (to D) quantum for coordinates in the same ordering
POSITION_TIE = 1e-9


@dataclass(frozen=True)
class CandidateSolution:
    x: float
    y: float
    z: float
    residual_norm: float
    classification: Classification
    objective_value: float
    provenance: tuple[str, ...]
    rho: float | None = None
    theta: float | None = None
    boundary: bool = False
    full_rank: bool = True

    @property
    def unknowns(self) -> tuple[float, ...]:
        return (self.x, self.y, self.z)

    @property
    def is_minimum(self) -> bool:
        return self.classification is Classification.MINIMUM

    def coords(self, planar: bool) -> np.ndarray:
        return np.array([self.x, self.y] if planar else [self.x, self.y, self.z])


def make_candidate(
    spec: ProblemSpec,
    X: Sequence[float],
    provenance: str | tuple[str, ...],
    *,
    rho: float | None = None,
    theta: float | None = None,
    boundary: bool = False,
    tol: float = 1e-9,
) -> CandidateSolution:
    X = np.asarray(X, dtype=float)
    m = spec.n_unknowns
    off = model._offsets(spec, X)
    d = off[:, :m]
    p = spec.weights
    r = spec.L - np.einsum("ij,ij->i", off, off)
    pr = p * r
    res = d.T @ pr
    # H = 2 J^T P J + 4 sum p (zeta - L) I with J = 2 d
    H = 8.0 * (d.T * p) @ d
    H.flat[:: m + 1] -= 4.0 * pr.sum()
    if m == 2 and d.shape[0] == 2:
        fro2 = float(np.einsum("ij,ij->", d, d))
        det = abs(d[0, 0] * d[1, 1] - d[0, 1] * d[1, 0])
        s1 = math.sqrt(0.5 * (fro2 + math.sqrt(max(fro2 * fro2 - 4 * det * det, 0.0))))
        sv = (s1, det / s1 if s1 > 0 else 0.0)
    else:
        sv = np.linalg.svd(d, compute_uv=False)
    z = spec.z0 if spec.mode.planar else float(X[2])
    if isinstance(provenance, str):
        provenance = (provenance,)
    return CandidateSolution(
        x=float(X[0]),
        y=float(X[1]),
        z=float(z),
        residual_norm=float(np.sqrt(res @ res)),
        classification=model.classify_eigenvalues(model.sym_eigvals(H), tol),
        objective_value=float(pr @ r),
        provenance=tuple(provenance),
        rho=rho,
        theta=theta,
        boundary=boundary,
        full_rank=bool(sv[0] > 0 and sv[-1] > model.COLLINEARITY_RATIO * sv[0]),
    )


def objective_scale(spec: ProblemSpec) -> float:
    return float(np.dot(spec.weights, spec.L**2)) + spec.scale**4


def order_key(spec: ProblemSpec, c: CandidateSolution):
    """Objective first, then (x, y, z); all quantized so round-off cannot reorder ties."""
    q = round(c.objective_value / (OBJECTIVE_TIE * objective_scale(spec)))
    step = POSITION_TIE * spec.scale
    return (q, *(round(v / step) for v in c.unknowns), c.x, c.y, c.z)


def sort_candidates(spec: ProblemSpec, cands: Iterable[CandidateSolution]) -> list[CandidateSolution]:
    return sorted(cands, key=lambda c: order_key(spec, c))


def dedupe(
    spec: ProblemSpec, cands: Iterable[CandidateSolution], rel_tol: float = 1e-6
) -> list[CandidateSolution]:
    """Merge candidates closer than ``rel_tol * D``; the lower-residual one is kept."""
    radius = rel_tol * spec.scale
    kept: list[CandidateSolution] = []
    for c in cands:
        for i, k in enumerate(kept):
            if math.dist(c.unknowns, k.unknowns) <= radius:
                best = c if c.residual_norm < k.residual_norm else k
                prov = tuple(sorted(set(k.provenance) | set(c.provenance)))
                kept[i] = replace(best, provenance=prov, boundary=k.boundary or c.boundary)
                break
        else:
            kept.append(c)
    return sort_candidates(spec, kept)


def minima(cands: Iterable[CandidateSolution]) -> list[CandidateSolution]:
    return [c for c in cands if c.is_minimum]


def select_minimum(spec: ProblemSpec, cands: Sequence[CandidateSolution]) -> CandidateSolution | None:
    """Least-objective minimum, ties broken by lexicographic (x, y)."""
    mins = minima(cands)
    if not mins:
        return None
    return min(mins, key=lambda c: order_key(spec, c))


def match_sets(
    first: Sequence[CandidateSolution], second: Sequence[CandidateSolution], radius: float
) -> bool:
    """True when both sets have equal size and pair up one-to-one within ``radius``."""
    if len(first) != len(second):
        return False
    unused = list(second)
    for c in first:
        hit = next((k for k in unused if math.dist(c.unknowns, k.unknowns) <= radius), None)
        if hit is None:
            return False
        unused.remove(hit)
    return True
