"""Algebraic reduction of the two-station planar stationarity system.

With z fixed at z0 the residuals are ``zeta_i - L_i = x^2 + y^2 - 2 x u_i -
2 y v_i + a_i`` and the stationarity conditions expand to

    2x^3 + 2xy^2 - 3s x^2 - s y^2 - 2t xy + (a + 2p) x + 2r y - d = 0
    2y^3 + 2x^2y - 3t y^2 - t x^2 - 2s xy + (a + 2q) y + 2r x - f = 0

in terms of the aggregate constants below.  Substituting z = x + iy and
then z = rho e^{i theta} gives two cubics in rho whose coefficients depend
on theta; eliminating first the constant term and then the cubic term
leaves two quadratics in rho.

Proportionality between the equivalent forms (P = I):

    expanded      = -stationarity_residual
    complex       = (4 * expanded_x, 4i * expanded_y)
    polar         = (2 * expanded_x, 2 * expanded_y)
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from trilat.errors import ProblemError
from trilat.model import Mode, ProblemSpec


@dataclass(frozen=True)
class PlanarConstants:
    a1: float
    a2: float


@dataclass(frozen=True)
class Aggregates:
    s: float
    t: float
    p: float
    q: float
    a: float
    r: float
    d: float
    f: float


@dataclass(frozen=True)
class PolarConstants:
    """Magnitude/phase pairs, phases in (-pi, pi].

    ``l e^{i omega} = 2s + 2it``, ``m e^{i alpha} = a + 2p + 2ir``,
    ``k e^{i mu} = a + 2q + 2ir`` and ``h e^{i phi} = 2s + 2it``.  The
    quadratic-term constants (l, omega) and (h, phi) coincide for the
    correctly expanded system; both are kept because they enter the cosine
    and sine equations separately.
    """

    l: float
    omega: float
    m_mag: float
    alpha: float
    k_mag: float
    mu: float
    h: float
    phi: float

    def complex_values(self) -> dict[str, complex]:
        return {
            "l": cmath.rect(self.l, self.omega),
            "m": cmath.rect(self.m_mag, self.alpha),
            "k": cmath.rect(self.k_mag, self.mu),
            "h": cmath.rect(self.h, self.phi),
        }


@dataclass(frozen=True)
class RhoThetaCoefficients:
    """``A rho^2 + B rho + C = 0`` and ``A2 rho^2 + B2 rho + C2 = 0`` at one theta."""

    A: float
    B: float
    C: float
    A2: float
    B2: float
    C2: float

    def first(self, rho: float) -> float:
        return (self.A * rho + self.B) * rho + self.C

    def second(self, rho: float) -> float:
        return (self.A2 * rho + self.B2) * rho + self.C2

    def first_scale(self, rho: float) -> float:
        return abs(self.A) * rho * rho + abs(self.B) * rho + abs(self.C)

    def second_scale(self, rho: float) -> float:
        return abs(self.A2) * rho * rho + abs(self.B2) * rho + abs(self.C2)


def _require_planar2(spec: ProblemSpec) -> None:
    if spec.mode is not Mode.PLANAR2:
        raise ProblemError(f"the algebraic reduction needs mode planar2, got {spec.mode.value}")


def planar_constants(spec: ProblemSpec) -> PlanarConstants:
    _require_planar2(spec)
    a = [
        st.u * st.u + st.v * st.v + (spec.z0 - st.w) ** 2 - L
        for st, L in zip(spec.stations, spec.observations.values)
    ]
    return PlanarConstants(a[0], a[1])


def aggregates(spec: ProblemSpec, constants: PlanarConstants) -> Aggregates:
    _require_planar2(spec)
    (u1, v1), (u2, v2) = ((st.u, st.v) for st in spec.stations)
    a1, a2 = constants.a1, constants.a2
    return Aggregates(
        s=u1 + u2,
        t=v1 + v2,
        p=u1 * u1 + u2 * u2,
        q=v1 * v1 + v2 * v2,
        a=a1 + a2,
        r=u1 * v1 + u2 * v2,
        d=a1 * u1 + a2 * u2,
        f=a1 * v1 + a2 * v2,
    )


def _polar(z: complex) -> tuple[float, float]:
    if z == 0:
        return 0.0, 0.0
    mag, phase = cmath.polar(z)
    if phase == -math.pi:
        phase = math.pi
    return mag, phase


def polar_constants(agg: Aggregates) -> PolarConstants:
    l, omega = _polar(complex(2 * agg.s, 2 * agg.t))
    m, alpha = _polar(complex(agg.a + 2 * agg.p, 2 * agg.r))
    k, mu = _polar(complex(agg.a + 2 * agg.q, 2 * agg.r))
    h, phi = _polar(complex(2 * agg.s, 2 * agg.t))
    return PolarConstants(l, omega, m, alpha, k, mu, h, phi)


def expanded_residuals(agg: Aggregates, x: float, y: float) -> tuple[float, float]:
    """Left-hand sides of the expanded cubic stationarity equations."""
    s, t, p, q, a, r, d, f = (agg.s, agg.t, agg.p, agg.q, agg.a, agg.r, agg.d, agg.f)
    ex = (
        2 * x**3 + 2 * x * y * y - 3 * s * x * x - s * y * y - 2 * t * x * y
        + (a + 2 * p) * x + 2 * r * y - d
    )
    ey = (
        2 * y**3 + 2 * x * x * y - 3 * t * y * y - t * x * x - 2 * s * x * y
        + (a + 2 * q) * y + 2 * r * x - f
    )
    return ex, ey


def complex_form_residuals(agg: Aggregates, x: float, y: float) -> tuple[complex, complex]:
    """Stationarity equations in z = x + iy and its conjugate.

    Returns values equal to ``4 * ex`` and ``4i * ey`` where (ex, ey) are
    the expanded residuals.
    """
    s, t, p, q, a, r, d, f = (agg.s, agg.t, agg.p, agg.q, agg.a, agg.r, agg.d, agg.f)
    z = complex(x, y)
    zb = z.conjugate()
    zz = z * zb
    e1 = (
        4 * z * zz + 4 * zb * zz
        + (2j * t - 2 * s) * z * z - 8 * s * zz - (2 * s + 2j * t) * zb * zb
        + 2 * z * (a + 2 * p - 2j * r) + 2 * zb * (a + 2 * p + 2j * r) - 4 * d
    )
    e2 = (
        4 * z * zz - 4 * zb * zz
        + (2j * t - 2 * s) * z * z - 8j * t * zz + (2 * s + 2j * t) * zb * zb
        + 2 * z * (a + 2 * q + 2j * r) - 2 * zb * (a + 2 * q - 2j * r) - 4j * f
    )
    return e1, e2


def _trig_parts(polar: PolarConstants, agg: Aggregates, theta: float):
    """rho^2 and rho^1 coefficient pieces shared by the polar equations."""
    ct, st = math.cos(theta), math.sin(theta)
    P = 4 * agg.s + polar.l * math.cos(2 * theta - polar.omega)
    Q = 4 * agg.t + polar.h * math.sin(2 * theta - polar.phi)
    M = polar.m_mag * math.cos(theta - polar.alpha)
    K = polar.k_mag * math.sin(theta + polar.mu)
    return ct, st, P, Q, M, K


def polar_residuals(
    polar: PolarConstants, agg: Aggregates, rho: float, theta: float
) -> tuple[float, float]:
    """Cosine and sine equations ``4 rho^3 cos - P rho^2 + 2 M rho - 2d`` (and sine analogue)."""
    ct, st, P, Q, M, K = _trig_parts(polar, agg, theta)
    e1 = ((4 * ct * rho - P) * rho + 2 * M) * rho - 2 * agg.d
    e2 = ((4 * st * rho - Q) * rho + 2 * K) * rho - 2 * agg.f
    return e1, e2


def polar_residual_scales(
    polar: PolarConstants, agg: Aggregates, rho: float, theta: float
) -> tuple[float, float]:
    """Sum of absolute term magnitudes of the polar equations, for relative tests."""
    ct, st, P, Q, M, K = _trig_parts(polar, agg, theta)
    s1 = 4 * abs(ct) * rho**3 + abs(P) * rho**2 + 2 * abs(M) * rho + 2 * abs(agg.d)
    s2 = 4 * abs(st) * rho**3 + abs(Q) * rho**2 + 2 * abs(K) * rho + 2 * abs(agg.f)
    return s1, s2


def polar_misfit(parts, agg: Aggregates, rho: float) -> float:
    """Larger relative residual of the two polar equations, given ``_trig_parts``."""
    ct, st, P, Q, M, K = parts
    r2 = rho * rho
    e1 = (4 * ct * rho - P) * r2 + 2 * M * rho - 2 * agg.d
    e2 = (4 * st * rho - Q) * r2 + 2 * K * rho - 2 * agg.f
    s1 = (4 * abs(ct) * rho + abs(P)) * r2 + 2 * abs(M) * rho + 2 * abs(agg.d)
    s2 = (4 * abs(st) * rho + abs(Q)) * r2 + 2 * abs(K) * rho + 2 * abs(agg.f)
    return max(abs(e1) / s1, abs(e2) / s2)


def rho_theta_coefficients(
    polar: PolarConstants, agg: Aggregates, theta: float
) -> RhoThetaCoefficients:
    """Quadratics in rho left after eliminating the constant and cubic terms.

    ``f * cos_eq - d * sin_eq == -rho * (A rho^2 + B rho + C)`` and
    ``sin(theta) * cos_eq - cos(theta) * sin_eq == -(A2 rho^2 + B2 rho + C2)``.
    """
    return _coefficients_from_parts(_trig_parts(polar, agg, theta), agg)


def _coefficients_from_parts(parts, agg: Aggregates) -> RhoThetaCoefficients:
    ct, st, P, Q, M, K = parts
    d, f = agg.d, agg.f
    return RhoThetaCoefficients(
        A=4 * (d * st - f * ct),
        B=f * P - d * Q,
        C=2 * d * K - 2 * f * M,
        A2=P * st - Q * ct,
        B2=2 * (K * ct - M * st),
        C2=2 * d * st - 2 * f * ct,
    )
