"""Observation model for squared-distance trilateration.

Each observation L_i is the *square* of a measured spatial distance to a
known station, modelled as

    zeta_i(X) = (x - u_i)^2 + (y - v_i)^2 + (z - w_i)^2

The unknowns X are (x, y) with z fixed to ``z0`` in the planar modes and
(x, y, z) in spatial mode.  The weighted objective is

    G(X) = (L - zeta(X))^T P (L - zeta(X)),   P = diag(p_i)

and a least-squares candidate is a point where the residual L - zeta is
P-orthogonal to every column of the Jacobian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from trilat.errors import DegenerateGeometryError, ProblemError

# singular-value ratio below which the Jacobian counts as rank deficient
COLLINEARITY_RATIO = 1e-10


class Mode(str, enum.Enum):
    PLANAR2 = "planar2"
    PLANAR3 = "planar3"
    SPATIAL = "spatial"

    @property
    def planar(self) -> bool:
        return self is not Mode.SPATIAL

    @property
    def n_unknowns(self) -> int:
        return 2 if self.planar else 3


@dataclass(frozen=True)
class Station:
    u: float
    v: float
    w: float
    id: str = ""

    def __post_init__(self):
        for name in ("u", "v", "w"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ProblemError(f"station {self.id!r}: coordinate {name} is not finite")
            object.__setattr__(self, name, value)

    @property
    def xyz(self) -> tuple[float, float, float]:
        return (self.u, self.v, self.w)


@dataclass(frozen=True)
class ObservationSet:
    """Squared-distance observations with a diagonal weight matrix.

    ``sigmas`` optionally holds the standard deviation of each L_i (squared
    meters); when absent, the observation covariance is sigma0^2 P^-1.
    """

    values: tuple[float, ...]
    weights: tuple[float, ...] | None = None
    sigma0: float = 1.0
    sigmas: tuple[float, ...] | None = None

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        weights = (
            tuple(1.0 for _ in values)
            if self.weights is None
            else tuple(float(p) for p in self.weights)
        )
        if len(weights) != len(values):
            raise ProblemError("observation values and weights differ in length")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ProblemError("squared-distance observations must be finite and >= 0")
        if any(not math.isfinite(p) or p <= 0 for p in weights):
            raise ProblemError("weights must be finite and > 0")
        if not (math.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ProblemError("sigma0 must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma0", float(self.sigma0))
        if self.sigmas is not None:
            sigmas = tuple(float(s) for s in self.sigmas)
            if len(sigmas) != len(values):
                raise ProblemError("observation sigmas and values differ in length")
            if any(not math.isfinite(s) or s < 0 for s in sigmas):
                raise ProblemError("observation sigmas must be finite and >= 0")
            object.__setattr__(self, "sigmas", sigmas)

    def __len__(self):
        return len(self.values)

    @property
    def uniform_weights(self) -> bool:
        return all(p == self.weights[0] for p in self.weights)


@dataclass(frozen=True)
class PointEstimate:
    x: float
    y: float
    z: float
    planar: bool = False

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ProblemError(f"point coordinate {name} is not finite")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class StationarityResidual:
    components: tuple[float, ...]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.components))

    @property
    def max_abs(self) -> float:
        return max(abs(c) for c in self.components)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    stations: tuple[Station, ...]
    observations: ObservationSet
    mode: Mode
    z0: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "mode", Mode(self.mode))
        n = len(self.stations)
        expected = {Mode.PLANAR2: 2, Mode.PLANAR3: 3}.get(self.mode)
        if expected is not None and n != expected:
            raise ProblemError(f"mode {self.mode.value} requires exactly {expected} stations, got {n}")
        if self.mode is Mode.SPATIAL and n < 3:
            raise ProblemError(f"spatial mode requires at least 3 stations, got {n}")
        if len(self.observations) != n:
            raise ProblemError(f"{len(self.observations)} observations for {n} stations")
        if self.mode.planar:
            if self.z0 is None:
                raise ProblemError(f"mode {self.mode.value} requires z0")
            if not math.isfinite(self.z0):
                raise ProblemError("z0 is not finite")
            object.__setattr__(self, "z0", float(self.z0))
        elif self.z0 is not None:
            raise ProblemError("z0 is only meaningful in planar modes")
        seen = set()
        for s in self.stations:
            if s.xyz in seen:
                raise ProblemError(f"station {s.id!r} coincides with another station")
            seen.add(s.xyz)
        ids = [s.id for s in self.stations if s.id]
        if len(ids) != len(set(ids)):
            raise ProblemError("duplicate station ids")

    def __eq__(self, other):
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        return (self.stations, self.observations, self.mode, self.z0) == (
            other.stations,
            other.observations,
            other.mode,
            other.z0,
        )

    def __hash__(self):
        return hash((self.stations, self.observations, self.mode, self.z0))

    @cached_property
    def positions(self) -> np.ndarray:
        """Station coordinates as an (n, 3) array."""
        arr = np.array([s.xyz for s in self.stations], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def L(self) -> np.ndarray:
        arr = np.array(self.observations.values, dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def weights(self) -> np.ndarray:
        arr = np.array(self.observations.weights, dtype=float)
        arr.flags.writeable = False
        return arr

    @property
    def n_unknowns(self) -> int:
        return self.mode.n_unknowns

    @cached_property
    def scale(self) -> float:
        """Characteristic length D: the largest inter-station distance over the unknown axes."""
        pts = self.positions[:, : self.n_unknowns]
        diff = pts[:, None, :] - pts[None, :, :]
        d = float(np.sqrt((diff**2).sum(-1)).max())
        if d == 0.0:
            # stations share their horizontal position; fall back to the 3D spread
            diff = self.positions[:, None, :] - self.positions[None, :, :]
            d = float(np.sqrt((diff**2).sum(-1)).max())
        return d

    @cached_property
    def centroid(self) -> np.ndarray:
        return self.positions[:, : self.n_unknowns].mean(axis=0)

    def point(self, unknowns: Sequence[float]) -> PointEstimate:
        """Build a PointEstimate from an unknown vector of length 2 or 3."""
        xs = [float(c) for c in unknowns]
        if len(xs) != self.n_unknowns:
            raise ProblemError(f"expected {self.n_unknowns} unknowns, got {len(xs)}")
        if self.mode.planar:
            return PointEstimate(xs[0], xs[1], self.z0, planar=True)
        return PointEstimate(xs[0], xs[1], xs[2], planar=False)

    def with_observations(self, values: Sequence[float]) -> "ProblemSpec":
        obs = ObservationSet(
            tuple(values),
            self.observations.weights,
            self.observations.sigma0,
            self.observations.sigmas,
        )
        return ProblemSpec(self.stations, obs, self.mode, self.z0)


PointLike = Union[PointEstimate, Sequence[float], np.ndarray]


def unknowns(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    """Return the unknown vector (length 2 or 3) for ``point``, checking the mode."""
    m = spec.n_unknowns
    if isinstance(point, PointEstimate):
        if point.planar != spec.mode.planar:
            raise ProblemError(
                f"point is {'planar' if point.planar else 'spatial'} but spec mode is {spec.mode.value}"
            )
        if spec.mode.planar:
            if point.z != spec.z0:
                raise ProblemError(f"planar point has z={point.z}, expected z0={spec.z0}")
            return np.array([point.x, point.y])
        return np.array([point.x, point.y, point.z])
    arr = np.asarray(point, dtype=float)
    if arr.shape != (m,):
        raise ProblemError(f"expected {m} unknowns for mode {spec.mode.value}, got shape {arr.shape}")
    return arr


def _offsets(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    """(n, 3) array of X - S_k with the fixed height filled in planar modes."""
    X = unknowns(spec, point)
    full = np.empty(3)
    full[: X.size] = X
    if spec.mode.planar:
        full[2] = spec.z0
    return full - spec.positions


def eval_zeta(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    return (_offsets(spec, point) ** 2).sum(axis=1)


def jacobian_zeta(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    """n x m matrix of d zeta_i / d X_j = 2 (X_j - station_j)."""
    return 2.0 * _offsets(spec, point)[:, : spec.n_unknowns]


@dataclass(frozen=True)
class SecondDerivatives:
    """Second partials of zeta; they do not depend on the point."""

    n_observations: int
    n_unknowns: int
    diagonal: float = 2.0
    mixed: float = 0.0

    def as_array(self) -> np.ndarray:
        """Dense (n, m, m) tensor of d^2 zeta_i / dX_j dX_k."""
        block = np.full((self.n_unknowns, self.n_unknowns), self.mixed)
        np.fill_diagonal(block, self.diagonal)
        return np.broadcast_to(block, (self.n_observations, *block.shape)).copy()


def second_derivatives(spec: ProblemSpec) -> SecondDerivatives:
    return SecondDerivatives(len(spec.stations), spec.n_unknowns)


def objective(spec: ProblemSpec, point: PointLike) -> float:
    r = spec.L - eval_zeta(spec, point)
    return float(np.dot(spec.weights, r * r))


def gradient(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    off = _offsets(spec, point)
    r = (off**2).sum(axis=1) - spec.L
    return 2.0 * (2.0 * off[:, : spec.n_unknowns]).T @ (spec.weights * r)


def stationarity_residual(spec: ProblemSpec, point: PointLike) -> StationarityResidual:
    """Components sum_k p_k (L_k - zeta_k)(X_i - station_k,i).

    This is the P-weighted inner product of the residual with d zeta / d X_i
    with the constant factor 2 of the Jacobian divided out, so that
    ``gradient == -4 * components``.
    """
    off = _offsets(spec, point)
    r = spec.L - (off**2).sum(axis=1)
    comps = off[:, : spec.n_unknowns].T @ (spec.weights * r)
    return StationarityResidual(tuple(float(c) for c in comps))


def hessian_G(spec: ProblemSpec, point: PointLike) -> np.ndarray:
    off = _offsets(spec, point)
    J = 2.0 * off[:, : spec.n_unknowns]
    r = (off**2).sum(axis=1) - spec.L
    p = spec.weights
    H = 2.0 * (J.T * p) @ J
    H += 4.0 * float(np.dot(p, r)) * np.eye(spec.n_unknowns)
    return H


class Classification(str, enum.Enum):
    MINIMUM = "minimum"
    SADDLE = "saddle"
    MAXIMUM = "maximum"
    DEGENERATE = "degenerate"


def sym_eigvals(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix, in closed form for 2x2."""
    if H.shape == (2, 2):
        a, b, c = float(H[0, 0]), float(H[0, 1]), float(H[1, 1])
        mid, rad = 0.5 * (a + c), math.hypot(0.5 * (a - c), b)
        hi = mid + rad if mid >= 0 else mid - rad
        # the smaller-magnitude root from the product, avoiding cancellation
        lo = (a * c - b * b) / hi if hi != 0.0 else 0.0
        return np.sort(np.array([lo, hi]))
    return np.linalg.eigvalsh(H)


def classify_stationary(H, tol: float = 1e-9) -> Classification:
    """Classify a stationary point from its Hessian; ``tol`` is relative to ||H||_2."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    asym = H - H.T
    scale = float(np.abs(H).max())
    if float(np.abs(asym).max()) > 1e-10 * scale:
        raise ValueError("Hessian is not symmetric")
    return classify_eigenvalues(sym_eigvals(H), tol)


def classify_eigenvalues(eig: np.ndarray, tol: float = 1e-9) -> Classification:
    """Classification from ascending Hessian eigenvalues."""
    lo, hi = float(eig[0]), float(eig[-1])
    thresh = tol * max(abs(lo), abs(hi))
    if np.any(np.abs(eig) <= thresh):
        return Classification.DEGENERATE
    if lo > thresh:
        return Classification.MINIMUM
    if hi < -thresh:
        return Classification.MAXIMUM
    return Classification.SADDLE


def jacobian_rank_ok(spec: ProblemSpec, point: PointLike) -> bool:
    """True when the Jacobian columns are linearly independent at ``point``."""
    sv = np.linalg.svd(jacobian_zeta(spec, point), compute_uv=False)
    return bool(sv[-1] > COLLINEARITY_RATIO * sv[0]) if sv[0] > 0 else False


def check_station_geometry(spec: ProblemSpec) -> None:
    """Reject station layouts that violate linear independence everywhere.

    In spatial mode the rows X - S_k span at most two dimensions when the
    stations are collinear; in planar modes stations sharing a horizontal
    position give parallel rows.
    """
    pts = spec.positions[:, : spec.n_unknowns]
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    needed = spec.n_unknowns - 1
    if sv[0] == 0.0 or sv[needed - 1] <= COLLINEARITY_RATIO * sv[0]:
        what = "collinear" if spec.mode is Mode.SPATIAL else "coincident in plan"
        raise DegenerateGeometryError(
            f"stations are {what}: the Jacobian columns are linearly dependent "
            "at every point (linear-independence condition violated)",
            singular_values=[float(s) for s in sv],
        )
