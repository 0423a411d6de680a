"""Closed-form candidate enumeration for the two-station planar problem.

For each direction theta the reduction gives two quadratics in rho,

    A rho^2 + B rho + C = 0,        A2 rho^2 + B2 rho + C2 = 0,

whose coefficients are homogeneous trigonometric forms in (cos, sin).  A
stationary point is a direction where both quadratics share a positive
root.  Dividing a form of degree k by cos^k turns it into a polynomial in
xi = tan(theta), so any compatibility condition becomes a polynomial in xi.

Two conditions are built here:

* ``build_cubic``: B C2 - B2 C, a cubic in xi.  Its vanishing is sufficient
  for proportional quadratics but is *not* necessary for a shared root, so
  it generally misses the stationary directions.  It is kept as a
  diagnostic.
* ``build_resultant``: the Sylvester resultant
  (A C2 - A2 C)^2 - (A B2 - A2 B)(B C2 - B2 C), an octic in xi that vanishes
  exactly when the quadratics share a root.  It factors as
  (d xi - f)(1 + xi^2) times a quadratic (the two circle intersections)
  times a cubic (the stationary points on the station baseline).  Candidate
  recovery uses its real roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from trilat import model
from trilat.errors import DegenerateReductionError, IdenticallySatisfiedError, NoCandidatesError
from trilat.model import ObservationSet, ProblemSpec, Station
from trilat.reduction import (
    Aggregates,
    PolarConstants,
    aggregates,
    planar_constants,
    _coefficients_from_parts,
    _trig_parts,
    polar_constants,
    polar_misfit,
    rho_theta_coefficients,
)
from trilat.solution import CandidateSolution, dedupe, make_candidate

ROOT_SEPARATION = 1e-8
IMAG_TOLERANCE = 1e-6
# looser bounds for roots that only seed a polish (clustered roots of
# near-tangent instances come back as slightly complex pairs)
SEED_IMAG_TOLERANCE = 1e-3
SEED_TOLERANCE = 1e-3
QUADRATIC_TOLERANCE = 1e-6
POLAR_TOLERANCE = 1e-6
LEADING_ZERO = 1e-12
MIN_RHO = 1e-6
DEGENERATE_DF = 1e-12
# candidates must satisfy |stationarity residual| <= SOUNDNESS * max(1, |L|)
SOUNDNESS = 1e-7
# circles whose intersection half-chord is below this fraction of D are
# treated as near-collinear and left to the numeric solver
NEAR_TANGENT = 1e-2
# working-frame positions of the station centroid, in units of D
PRIMARY_OFFSET = (1.5, 0.7)
SECONDARY_OFFSET = (-0.9, 1.3)


@dataclass(frozen=True)
class CompatibilityCubic:
    """c3 xi^3 + c2 xi^2 + c1 xi + c0."""

    c3: float
    c2: float
    c1: float
    c0: float

    @property
    def ascending(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3])

    def __call__(self, xi):
        return P.polyval(xi, self.ascending)


@dataclass(frozen=True)
class CompatibilityPolynomial:
    """Polynomial in xi = tan(theta) from a homogeneous form of ``degree`` in (cos, sin)."""

    coefficients: tuple[float, ...]  # ascending powers of xi
    degree: int

    @property
    def ascending(self) -> np.ndarray:
        return np.array(self.coefficients)

    def __call__(self, xi):
        return P.polyval(xi, self.ascending)

    def at_angle(self, theta: float) -> float:
        """Value of the underlying trigonometric form at ``theta``."""
        c, s = math.cos(theta), math.sin(theta)
        return sum(a * s**j * c ** (self.degree - j) for j, a in enumerate(self.coefficients))


_TAN_ONE = np.array([1.0, 0.0, 1.0])


class _Form:
    """Homogeneous form of a given degree in (cos, sin), stored as a polynomial in tan."""

    __slots__ = ("deg", "c")

    def __init__(self, deg, coeffs):
        self.deg = deg
        self.c = np.asarray(coeffs, dtype=float)

    def _lift(self, deg):
        # cos^2 + sin^2 = 1 becomes (1 + xi^2) after division by cos^2
        k = deg - self.deg
        if k < 0 or k % 2:
            raise ValueError("forms of mismatched parity")
        c = self.c
        for _ in range(k // 2):
            c = np.convolve(c, _TAN_ONE)
        return c

    def _combine(self, other, sign):
        deg = max(self.deg, other.deg)
        a, b = self._lift(deg), other._lift(deg)
        out = np.zeros(max(a.size, b.size))
        out[: a.size] += a
        out[: b.size] += sign * b
        return _Form(deg, out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, other):
        if isinstance(other, _Form):
            return _Form(self.deg + other.deg, np.convolve(self.c, other.c))
        return _Form(self.deg, self.c * other)

    __rmul__ = __mul__


def _coefficient_forms(polar: PolarConstants, agg: Aggregates):
    """The six quadratic coefficients as forms in (cos, sin), divided through by cos^k.

    With c = cos, s = sin and xi = s/c: 1 -> (1 + xi^2)/c^2 at degree 2,
    cos 2t -> (1 - xi^2), sin 2t -> 2 xi.
    """
    d, f = agg.d, agg.f
    lc, ls = polar.l * math.cos(polar.omega), polar.l * math.sin(polar.omega)
    hc, hs = polar.h * math.cos(polar.phi), polar.h * math.sin(polar.phi)
    mc, ms = polar.m_mag * math.cos(polar.alpha), polar.m_mag * math.sin(polar.alpha)
    kc, ks = polar.k_mag * math.cos(polar.mu), polar.k_mag * math.sin(polar.mu)
    s4, t4 = 4 * agg.s, 4 * agg.t
    # P = 4s + l cos(2t - w);  Q = 4t + h sin(2t - phi)
    Pc = np.array([s4 + lc, 2 * ls, s4 - lc])
    Qc = np.array([t4 - hs, 2 * hc, t4 + hs])
    # M = m cos(t - alpha);  K = k sin(t + mu)
    Mc = np.array([mc, ms])
    Kc = np.array([ks, kc])
    A = _Form(1, [-4 * f, 4 * d])
    B = _Form(2, f * Pc - d * Qc)
    C = _Form(1, 2 * d * Kc - 2 * f * Mc)
    A2 = _Form(3, np.append(-Qc, 0.0) + np.insert(Pc, 0, 0.0))
    B2 = _Form(2, 2 * (np.append(Kc, 0.0) - np.insert(Mc, 0, 0.0)))
    C2 = _Form(1, [-2 * f, 2 * d])
    return A, B, C, A2, B2, C2


def compatibility_value(polar: PolarConstants, agg: Aggregates, theta: float) -> float:
    """B C2 - B2 C evaluated directly at ``theta``."""
    k = rho_theta_coefficients(polar, agg, theta)
    return k.B * k.C2 - k.B2 * k.C


def resultant_value(polar: PolarConstants, agg: Aggregates, theta: float) -> float:
    """Sylvester resultant of the two rho-quadratics at ``theta``."""
    k = rho_theta_coefficients(polar, agg, theta)
    return (k.A * k.C2 - k.A2 * k.C) ** 2 - (k.A * k.B2 - k.A2 * k.B) * (k.B * k.C2 - k.B2 * k.C)


def _check_degenerate(agg: Aggregates, scale: float = 1.0) -> None:
    if abs(agg.d) + abs(agg.f) <= DEGENERATE_DF * max(1.0, scale):
        raise DegenerateReductionError(
            "aggregate constants d and f vanish; the elimination loses rank "
            "(both circles pass through the working-frame origin or the configuration is symmetric)",
            d=agg.d,
            f=agg.f,
        )


def build_cubic(polar: PolarConstants, agg: Aggregates, method: str = "analytic") -> CompatibilityCubic:
    """Cubic in xi from B C2 - B2 C = 0, divided by cos^3.

    ``method="analytic"`` expands the forms; ``method="sampled"`` fits the
    four coefficients through values of B C2 - B2 C at four angles.
    """
    _check_degenerate(agg)
    if method == "analytic":
        A, B, C, A2, B2, C2 = _coefficient_forms(polar, agg)
        form = B * C2 - B2 * C
        c = np.zeros(4)
        c[: form.c.size] = form.c
    elif method == "sampled":
        xis = np.array([-1.7, -0.4, 0.6, 2.1])
        thetas = np.arctan(xis)
        vals = [compatibility_value(polar, agg, th) / math.cos(th) ** 3 for th in thetas]
        c = np.linalg.solve(np.vander(xis, 4, increasing=True), vals)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CompatibilityCubic(c3=float(c[3]), c2=float(c[2]), c1=float(c[1]), c0=float(c[0]))


def build_resultant(polar: PolarConstants, agg: Aggregates) -> CompatibilityPolynomial:
    _check_degenerate(agg)
    A, B, C, A2, B2, C2 = _coefficient_forms(polar, agg)
    form = (A * C2 - A2 * C) * (A * C2 - A2 * C) - (A * B2 - A2 * B) * (B * C2 - B2 * C)
    c = np.zeros(form.deg + 1)
    c[: form.c.size] = form.c
    return CompatibilityPolynomial(tuple(float(v) for v in c), form.deg)


def _split_roots(ascending, imag_tolerance: float, seed_tolerance: float):
    """Real roots and nearly real seeds of a polynomial from one eigenvalue solve."""
    c = np.trim_zeros(np.asarray(ascending, dtype=float), "b")
    if c.size == 0 or not np.any(c):
        raise IdenticallySatisfiedError("polynomial is identically zero")
    c = c / np.abs(c).max()
    # drop a negligible leading coefficient so the degree degrades gracefully
    while c.size > 1 and abs(c[-1]) <= LEADING_ZERO:
        c = c[:-1]
    if c.size == 1:
        return [], []
    desc = c[::-1].tolist()
    ddesc = [a * k for a, k in zip(desc[:-1], range(len(desc) - 1, 0, -1))]
    real: list[float] = []
    seeds: list[float] = []
    for z in sorted(np.roots(desc).tolist(), key=lambda z: z.real):
        x, lim = z.real, max(1.0, abs(z.real))
        if abs(z.imag) > imag_tolerance * lim:
            # one seed per conjugate pair
            if z.imag > 0 and z.imag <= seed_tolerance * lim:
                seeds.append(x)
            continue
        fx, dfx = _horner(desc, x), _horner(ddesc, x)
        if dfx != 0.0:
            x_new = x - fx / dfx
            if abs(_horner(desc, x_new)) <= abs(fx):
                x = x_new
        if real and abs(x - real[-1]) <= ROOT_SEPARATION * max(1.0, abs(x)):
            continue
        real.append(x)
    return real, seeds


def real_roots(ascending, imag_tolerance: float = IMAG_TOLERANCE) -> list[float]:
    """Distinct real roots of a polynomial, each polished by one Newton step.

    Roots whose imaginary part is within ``imag_tolerance`` (relative) are
    taken as real.
    """
    return _split_roots(ascending, imag_tolerance, 0.0)[0]


def _horner(desc, x):
    acc = 0.0
    for a in desc:
        acc = acc * x + a
    return acc


def solve_cubic(cubic: CompatibilityCubic) -> list[float]:
    return real_roots(cubic.ascending)


@dataclass
class Recovery:
    candidates: list[CandidateSolution]
    excluded: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class WorkingFrame:
    """Translation plus scaling: ``working = (user - center) / D + offset``."""

    center: tuple[float, float]
    scale: float
    offset: tuple[float, float]

    def to_user(self, xw: float, yw: float) -> tuple[float, float]:
        return (
            self.center[0] + self.scale * (xw - self.offset[0]),
            self.center[1] + self.scale * (yw - self.offset[1]),
        )

    def to_working(self, x: float, y: float) -> tuple[float, float]:
        return (
            (x - self.center[0]) / self.scale + self.offset[0],
            (y - self.center[1]) / self.scale + self.offset[1],
        )

    def apply(self, spec: ProblemSpec) -> ProblemSpec:
        D = self.scale
        stations = tuple(
            Station(*self.to_working(s.u, s.v), (s.w - spec.z0) / D, id=s.id) for s in spec.stations
        )
        obs = ObservationSet(tuple(v / D**2 for v in spec.observations.values), spec.observations.weights)
        return ProblemSpec(stations, obs, spec.mode, 0.0)


def user_frame(spec: ProblemSpec) -> WorkingFrame:
    """Identity frame (no shift, no scaling)."""
    return WorkingFrame((0.0, 0.0), 1.0, (0.0, 0.0))


def offset_frame(spec: ProblemSpec, offset=PRIMARY_OFFSET) -> WorkingFrame:
    c = spec.centroid
    return WorkingFrame((float(c[0]), float(c[1])), spec.scale, tuple(offset))


def _positive_roots(a: float, b: float, c: float) -> list[float]:
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        return []
    a, b, c = a / scale, b / scale, c / scale
    if abs(a) <= LEADING_ZERO:
        return [-c / b] if b != 0.0 and -c / b > 0 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        # a slightly negative discriminant is a double root blurred by rounding
        if disc < -1e-10 * (b * b + abs(4 * a * c)):
            return []
        disc = 0.0
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    return [r for r in roots if r > 0]


def _polish(wspec: ProblemSpec, x: float, y: float, steps: int = 10) -> tuple[float, float, float]:
    """Newton iteration on the two-station stationarity system, in plain floats.

    Returns the final point and its residual norm.
    """
    sta = [(st.u, st.v, st.w * st.w, L) for st, L in zip(wspec.stations, wspec.observations.values)]

    def terms(x, y):
        gx = gy = hxx = hxy = hyy = rs = 0.0
        for u, v, ww, L in sta:
            dx, dy = x - u, y - v
            r = L - (dx * dx + dy * dy + ww)
            gx += r * dx
            gy += r * dy
            hxx += dx * dx
            hxy += dx * dy
            hyy += dy * dy
            rs += r
        return gx, gy, hxx, hxy, hyy, rs

    # Steps are accepted while their length contracts.  The residual itself is
    # a poor monitor near tangency, where it can rise on a step that still
    # moves toward the root.
    prev = math.inf
    for _ in range(steps):
        gx, gy, hxx, hxy, hyy, rs = terms(x, y)
        # Jacobian of the residual components (gx, gy): rs*I - 2*sum(d d^T)
        a, b, c = rs - 2 * hxx, -2 * hxy, rs - 2 * hyy
        det = a * c - b * b
        if det == 0.0:
            break
        dx = (c * gx - b * gy) / det
        dy = (a * gy - b * gx) / det
        step = math.hypot(dx, dy)
        if not step < prev:
            break
        x, y, prev = x - dx, y - dy, step
        if step <= 4e-16 * (1.0 + math.hypot(x, y)):
            break
    gx, gy = terms(x, y)[:2]
    return x, y, math.hypot(gx, gy)


def recover_candidates(
    roots: list[float],
    polar: PolarConstants,
    agg: Aggregates,
    spec: ProblemSpec,
    *,
    frame: WorkingFrame | None = None,
    poly=None,
    wspec: ProblemSpec | None = None,
    seeds: list[float] = (),
) -> Recovery:
    """Map compatibility roots to stationary points.

    ``spec`` is the user-frame problem and ``frame`` the working frame in
    which ``polar``/``agg`` were computed.  For every direction theta (and
    theta + pi) the positive roots of either quadratic are kept when they
    satisfy both quadratics and the two polar equations; survivors are
    polished on the stationarity system and classified in the user frame.

    ``seeds`` are extra tan-values (real parts of nearly real roots).  They
    and any root missing the tight tests by less than SEED_TOLERANCE only
    start a polish, and are kept when the polished point is stationary.
    An accepted root that fails to polish raises DegenerateReductionError.
    """
    frame = frame or user_frame(spec)
    wspec = wspec or frame.apply(spec)
    directions = [(xi, False) for xi in roots] + [(xi, True) for xi in seeds]
    thetas = [(t, seed) for xi, seed in directions for t in (math.atan(xi), math.atan(xi) + math.pi)]
    if poly is not None:
        c = np.asarray(poly.ascending)
        if abs(c[-1]) <= LEADING_ZERO * np.abs(c).max():
            thetas += [(math.pi / 2, False), (-math.pi / 2, False)]
    out: list[CandidateSolution] = []
    excluded: list[dict] = []
    unsound: list[dict] = []
    # polished working-frame points: [x, y, residual, tentative, diagnostic]
    polished: list[list] = []
    radius = 1e-6
    bound = SOUNDNESS * max(1.0, float(np.linalg.norm(spec.L)))
    for th, seed in thetas:
        parts = _trig_parts(polar, agg, th)
        k = _coefficients_from_parts(parts, agg)
        rhos: list[float] = []
        for rho in sorted(_positive_roots(k.A, k.B, k.C) + _positive_roots(k.A2, k.B2, k.C2)):
            if not rhos or rho - rhos[-1] > QUADRATIC_TOLERANCE * rho:
                rhos.append(rho)
        for rho in rhos:
            q1 = abs(k.first(rho)) / max(k.first_scale(rho), 1e-300)
            q2 = abs(k.second(rho)) / max(k.second_scale(rho), 1e-300)
            ep = polar_misfit(parts, agg, rho)
            misfit = max(q1, q2, ep)
            if q1 > QUADRATIC_TOLERANCE or q2 > QUADRATIC_TOLERANCE:
                reason = "second quadratic not satisfied" if q1 <= q2 else "first quadratic not satisfied"
            elif ep > POLAR_TOLERANCE:
                reason = "shared root does not satisfy the polar stationarity equations"
            else:
                reason = None
            tentative = seed or reason is not None
            if tentative and misfit > SEED_TOLERANCE:
                excluded.append(
                    {"theta": th, "rho": rho * frame.scale, "reason": reason or "seed too far from a root",
                     "quadratic_misfit": max(q1, q2), "polar_misfit": ep}
                )
                continue
            xw, yw, res = _polish(wspec, rho * math.cos(th), rho * math.sin(th))
            entry = {"theta": th, "rho": rho * frame.scale, "reason": reason,
                     "quadratic_misfit": max(q1, q2), "polar_misfit": ep}
            for pt in polished:
                if math.hypot(xw - pt[0], yw - pt[1]) <= radius:
                    if res < pt[2]:
                        pt[:3] = xw, yw, res
                    pt[3] = pt[3] and tentative
                    break
            else:
                polished.append([xw, yw, res, tentative, entry])
    for xw, yw, _, tentative, entry in polished:
        X = frame.to_user(xw, yw)
        cand = make_candidate(spec, X, "algebraic", rho=math.hypot(xw, yw) * frame.scale,
                              theta=math.atan2(yw, xw))
        if cand.residual_norm > bound:
            entry.update(x=X[0], y=X[1], residual_norm=cand.residual_norm)
            entry["reason"] = entry["reason"] or "polished point is not stationary"
            (excluded if tentative else unsound).append(entry)
            continue
        out.append(cand)
    if unsound:
        # a root that passed every test but does not polish to a stationary point
        # means the roots are too poorly separated to trust the candidate set
        raise DegenerateReductionError(
            "compatibility roots are ill-separated (near-tangent or near-collinear geometry)",
            cause="ill_separated_roots", excluded=excluded + unsound,
        )
    cands = dedupe(spec, out)
    if not cands:
        raise NoCandidatesError("no root of the compatibility polynomial yields a stationary point",
                                excluded=excluded)
    return Recovery(cands, excluded)


@dataclass
class AlgebraicSolution:
    candidates: list[CandidateSolution]
    resultant: CompatibilityPolynomial
    roots: list[float]
    frame: WorkingFrame
    excluded: list[dict]
    diagnostics: list[dict]
    polar: PolarConstants
    aggregates: Aggregates

    def cubic(self) -> CompatibilityCubic:
        """The B C2 - B2 C cubic for the same working frame."""
        return build_cubic(self.polar, self.aggregates)


def _solve_in_frame(spec: ProblemSpec, frame: WorkingFrame) -> AlgebraicSolution:
    wspec = frame.apply(spec)
    consts = planar_constants(wspec)
    agg = aggregates(wspec, consts)
    _check_degenerate(agg, abs(consts.a1) * float(np.abs(wspec.positions[:, :2]).max()))
    polar = polar_constants(agg)
    resultant = build_resultant(polar, agg)
    roots, seeds = _split_roots(resultant.ascending, IMAG_TOLERANCE, SEED_IMAG_TOLERANCE)
    rec = recover_candidates(roots, polar, agg, spec, frame=frame, poly=resultant, wspec=wspec, seeds=seeds)
    return AlgebraicSolution(rec.candidates, resultant, roots, frame, rec.excluded, [], polar, agg)


def half_chord_squared(spec: ProblemSpec) -> float:
    """Squared half-chord of the two observed plan circles (negative if they miss)."""
    (s1, s2), (L1, L2) = spec.stations, spec.L
    R1 = L1 - (s1.w - spec.z0) ** 2
    R2 = L2 - (s2.w - spec.z0) ** 2
    D = math.hypot(s2.u - s1.u, s2.v - s1.v)
    a = (D * D + R1 - R2) / (2 * D)
    return R1 - a * a


def solve_planar2(spec: ProblemSpec, frame: str | WorkingFrame = "offset") -> AlgebraicSolution:
    """Enumerate the stationary points of a two-station planar problem algebraically.

    ``frame="offset"`` works in a translated, D-scaled frame that keeps
    solutions away from rho = 0 and retries with a second offset when a
    root lands too close to the origin; ``frame="user"`` works in the
    caller's coordinates unchanged.

    Raises DegenerateReductionError or NoCandidatesError when the caller
    should fall back to a numeric solver.
    """
    if spec.mode is not model.Mode.PLANAR2:
        raise model.ProblemError("the algebraic path needs mode planar2")
    if not spec.observations.uniform_weights:
        raise DegenerateReductionError(
            "the algebraic reduction assumes equal weights; use the numeric solver",
            weights=list(spec.observations.weights),
        )
    model.check_station_geometry(spec)
    h2 = half_chord_squared(spec)
    if abs(h2) < (NEAR_TANGENT * spec.scale) ** 2:
        raise DegenerateReductionError(
            "observed circles are nearly tangent (point close to the station baseline)",
            cause="near_collinear", half_chord_squared=h2,
        )
    if isinstance(frame, WorkingFrame):
        return _solve_in_frame(spec, frame)
    if frame == "user":
        return _solve_in_frame(spec, user_frame(spec))
    if frame != "offset":
        raise ValueError(f"unknown frame {frame!r}")
    diagnostics = []
    for offset in (PRIMARY_OFFSET, SECONDARY_OFFSET):
        wf = offset_frame(spec, offset)
        try:
            sol = _solve_in_frame(spec, wf)
        except DegenerateReductionError as exc:
            if offset is SECONDARY_OFFSET:
                raise
            diagnostics.append({"code": "frame_retry", "message": str(exc), "offset": list(offset)})
            continue
        near_origin = any(c.rho is not None and c.rho < MIN_RHO * spec.scale for c in sol.candidates)
        if near_origin and offset is PRIMARY_OFFSET:
            diagnostics.append(
                {"code": "frame_retry", "message": "candidate too close to the working-frame origin",
                 "offset": list(offset)}
            )
            continue
        sol.diagnostics = diagnostics + sol.diagnostics
        return sol
    raise AssertionError("unreachable")
