"""Generating function, numerical Legendre transform and EPAC parameter extraction.

A generating-function table stores w(J) together with its first two
derivatives, which every source (quadrature, spectrum, closed form) supplies
exactly: w' = <q> and w'' = beta Var(q).  The Legendre transform then uses a
piecewise quintic Hermite interpolant of w, whose derivative is monotone
wherever the tabulated w'' is positive on a fine enough grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import BPoly
from scipy.optimize import brentq

from . import io
from .errors import IntegrandNotLocalized, NonConvexAtOrigin, QOutOfRange
from .model import PotentialModel, ThermoState
from .oracle import tilted_generating_moments
from .quadrature import centroid_moments

SOURCES = ("sampled", "oracle", "analytic")
# local polynomial degree used by the curve route of extract_parameters
FIT_DEGREE = 10
# times the curve-route window may be halved before the routes are declared inconsistent
CURVE_HALVINGS = 3


@dataclass(frozen=True)
class GeneratingFunctionTable:
    J: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    d2w: np.ndarray
    source: str
    beta: float
    mass: float = 1.0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.J.ndim != 1 or self.J.size < 3 or np.any(np.diff(self.J) <= 0):
            raise ValueError("J grid must be strictly increasing with at least 3 points")

    @property
    def ts(self) -> ThermoState:
        return ThermoState(self.beta, self.mass)

    def interpolant(self) -> BPoly:
        y = np.stack([self.w, self.dw, self.d2w], axis=1)
        return BPoly.from_derivatives(self.J, y)

    def second_differences(self) -> np.ndarray:
        """Second divided differences of w on the (possibly non-uniform) grid."""
        J, w = self.J, self.w
        h0, h1 = np.diff(J)[:-1], np.diff(J)[1:]
        return 2.0 * ((w[2:] - w[1:-1]) / h1 - (w[1:-1] - w[:-2]) / h0) / (h0 + h1)

    def is_convex(self, tol: float = 1e-9) -> bool:
        scale = 1.0 + float(np.max(np.abs(self.w)))
        return bool(np.all(self.second_differences() >= -tol * scale) and np.all(self.d2w > 0))

    def to_csv(self, path, meta=None):
        meta = dict(meta or {}, source=self.source, beta=self.beta, mass=self.mass)
        return io.write_csv(path, ["J", "w", "dw", "d2w"], zip(self.J, self.w, self.dw, self.d2w), meta)


@dataclass(frozen=True)
class EffectivePotentialCurve:
    """V(Q) with dV/dQ = J*(Q) and d2V/dQ2 = 1 / w''(J*(Q))."""

    Q: np.ndarray
    V: np.ndarray
    dV: np.ndarray
    d2V: np.ndarray
    beta: float
    mass: float = 1.0

    def interpolant(self) -> BPoly:
        return BPoly.from_derivatives(self.Q, np.stack([self.V, self.dV, self.d2V], axis=1))

    def is_convex(self, tol: float = 1e-9) -> bool:
        Q, V = self.Q, self.V
        h0, h1 = np.diff(Q)[:-1], np.diff(Q)[1:]
        d2 = 2.0 * ((V[2:] - V[1:-1]) / h1 - (V[1:-1] - V[:-2]) / h0) / (h0 + h1)
        scale = 1.0 + float(np.max(np.abs(V)))
        return bool(np.all(d2 >= -tol * scale) and np.all(self.d2V > 0))

    def fenchel_gap(self, g: GeneratingFunctionTable) -> float:
        """min over sampled pairs of V(Q) + w(J) - J Q; never negative for a true conjugate pair."""
        gap = self.V[:, None] + g.w[None, :] - self.Q[:, None] * g.J[None, :]
        return float(gap.min())

    def shifted(self, dQ: float = 0.0, f: float = 0.0, c: float = 0.0) -> "EffectivePotentialCurve":
        """Curve of V(Q - dQ) + f Q + c on the grid Q + dQ."""
        Q = self.Q + dQ
        return EffectivePotentialCurve(Q, self.V + f * Q + c, self.dV + f, self.d2V, self.beta, self.mass)

    def to_csv(self, path, meta=None, pin_zero: bool = False):
        V = self.V - self.V.min() if pin_zero else self.V
        meta = dict(meta or {}, beta=self.beta, mass=self.mass, pin_zero=pin_zero)
        return io.write_csv(path, ["Q", "V"], zip(self.Q, V), meta)


@dataclass(frozen=True)
class EpacParameters:
    beta: float
    mass: float
    Q_min: float
    omega_beta: float
    omega_s: float | None = None
    E0: float | None = None
    Q_min_err: float = 0.0
    omega_err: float = 0.0
    omega_s_err: float = 0.0
    Q_min_curve: float | None = None
    omega_curve: float | None = None

    def __post_init__(self):
        if not self.omega_beta > 0:
            raise ValueError("omega_beta must be positive")

    @property
    def ts(self) -> ThermoState:
        return ThermoState(self.beta, self.mass)

    def record(self) -> dict:
        return {
            "beta": self.beta,
            "mass": self.mass,
            "Q_min": self.Q_min,
            "omega_beta": self.omega_beta,
            "omega_s": "" if self.omega_s is None else self.omega_s,
            "E0": "" if self.E0 is None else self.E0,
        }


# ---------------------------------------------------------------------------
# builders

MomentFn = Callable[[float], tuple[float, float, float]]


def _tabulate(moments: MomentFn, J_grid, source, ts) -> GeneratingFunctionTable:
    J = np.asarray(J_grid, dtype=float)
    vals = np.array([moments(float(j)) for j in J])
    return GeneratingFunctionTable(J, vals[:, 0], vals[:, 1], vals[:, 2], source, ts.beta, ts.mass)


def polynomial_moments(coeffs, ts: ThermoState, domain=None) -> MomentFn:
    """w, w', w'' of a polynomial effective classical potential by quadrature."""
    c = np.asarray(coeffs, dtype=float)

    def moments(J):
        w, mean, var = centroid_moments(c, ts.beta, ts.mass, J, domain=domain)
        return w, mean, ts.beta * var

    return moments


def oracle_moments(p: PotentialModel, ts: ThermoState) -> MomentFn:
    return lambda J: tilted_generating_moments(p, ts, J)


def harmonic_moments(omega: float, ts: ThermoState, f: float = 0.0) -> MomentFn:
    """Closed form w(J) = (J - f)^2 / (2 m w^2) - (1/beta) log(2 sinh(beta w / 2))."""
    k = ts.mass * omega**2
    x = 0.5 * ts.beta * omega
    # log(2 sinh x) written so it neither overflows at large x nor loses digits at small x
    log2sinh = x + math.log1p(-math.exp(-2.0 * x))
    const = -log2sinh / ts.beta
    return lambda J: ((J - f) ** 2 / (2.0 * k) + const, (J - f) / k, 1.0 / k)


def adaptive_table(
    moments: MomentFn,
    source: str,
    ts: ThermoState,
    center: float = 0.0,
    width: float = 4.0,
    Q_window: tuple[float, float] | None = None,
    dq: float = 0.1,
    margin: float = 0.25,
    max_points: int = 2000,
    clip: bool = False,
) -> GeneratingFunctionTable:
    """Tabulate w about ``center`` until w' spans Q(center) +- width * sigma_Q.

    sigma_Q = sqrt(w''(center)).  Each side is grown separately with steps
    dq * sigma_Q / w''(J), so consecutive nodes are about dq * sigma_Q apart in
    Q and the quintic interpolant stays accurate where w bends.  With
    ``clip`` a side stops early once the source is no longer supported by the
    underlying table (the density leaves a fitted potential's domain).
    """
    first = moments(center)
    w0, q0, c0 = first
    if not c0 > 0:
        raise NonConvexAtOrigin(f"w'' = {c0} at J = {center}")
    sigma = math.sqrt(c0)
    lo_q, hi_q = q0 - width * sigma, q0 + width * sigma
    if Q_window is not None:
        lo_q, hi_q = min(lo_q, Q_window[0]), max(hi_q, Q_window[1])
    step_q = dq * sigma
    sides = []
    for direction, goal in ((-1, lo_q - margin * sigma), (+1, hi_q + margin * sigma)):
        nodes = []
        J, (w, q, c) = center, first
        while direction * (q - goal) < 0:
            if len(nodes) >= max_points:
                raise QOutOfRange(f"J grid exceeded {max_points} nodes before reaching Q = {goal:.4g}")
            J = J + direction * step_q / c
            try:
                w, q, c = moments(J)
            except IntegrandNotLocalized:
                if clip and nodes:
                    break
                raise
            if not c > 0:
                raise NonConvexAtOrigin(f"w'' = {c} at J = {J}")
            nodes.append((J, w, q, c))
        sides.append(nodes)
    rows = sides[0][::-1] + [(center, w0, q0, c0)] + sides[1]
    arr = np.array(rows)
    return GeneratingFunctionTable(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], source, ts.beta, ts.mass)


def generating_function(table, ts: ThermoState, J_grid=None, **grid_kw) -> GeneratingFunctionTable:
    """w(J) of a centroid-potential table, by quadrature over its fitted polynomial."""
    fit = getattr(table, "fit", table)
    moments = polynomial_moments(fit._float, ts, getattr(table, "domain", None))
    source = "analytic" if getattr(table, "constant_mode", "") == "analytic" else "sampled"
    if J_grid is None:
        grid_kw.setdefault("clip", source == "sampled")
        return adaptive_table(moments, source, ts, **grid_kw)
    return _tabulate(moments, J_grid, source, ts)


def oracle_generating_function(p: PotentialModel, ts: ThermoState, J_grid=None, **grid_kw) -> GeneratingFunctionTable:
    moments = oracle_moments(p, ts)
    if J_grid is None:
        return adaptive_table(moments, "oracle", ts, **grid_kw)
    return _tabulate(moments, J_grid, "oracle", ts)


def harmonic_generating_function(
    omega: float, ts: ThermoState, f: float = 0.0, J_grid=None, **grid_kw
) -> GeneratingFunctionTable:
    moments = harmonic_moments(omega, ts, f)
    if J_grid is None:
        return adaptive_table(moments, "analytic", ts, **grid_kw)
    return _tabulate(moments, J_grid, "analytic", ts)


# ---------------------------------------------------------------------------
# Legendre transform


def _solve_monotone(fn: Callable[[float], float], target: float, grid: np.ndarray, values: np.ndarray) -> float:
    """Root of fn(x) = target for increasing fn sampled as values on grid."""
    i = int(np.searchsorted(values, target))
    if i == 0:
        if values[0] == target:
            return float(grid[0])
        raise QOutOfRange(f"target {target:.6g} below the tabulated range [{values[0]:.6g}, {values[-1]:.6g}]")
    if i == len(grid):
        raise QOutOfRange(f"target {target:.6g} above the tabulated range [{values[0]:.6g}, {values[-1]:.6g}]")
    if values[i] == target:
        return float(grid[i])
    a, b = float(grid[i - 1]), float(grid[i])
    fa, fb = fn(a) - target, fn(b) - target
    if fa * fb > 0:  # target within roundoff of a node value
        return a if abs(fa) < abs(fb) else b
    return brentq(lambda x: fn(x) - target, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def legendre_transform(g: GeneratingFunctionTable, Q_grid) -> EffectivePotentialCurve:
    """V(Q) = J* Q - w(J*) with w'(J*) = Q."""
    Q = np.asarray(Q_grid, dtype=float)
    if np.any(np.diff(g.dw) <= 0):
        raise NonConvexAtOrigin("tabulated dw/dJ is not strictly increasing")
    spline = g.interpolant()
    d1, d2 = spline.derivative(1), spline.derivative(2)
    J_star = np.array([_solve_monotone(d1, float(q), g.J, g.dw) for q in Q])
    V = J_star * Q - spline(J_star)
    return EffectivePotentialCurve(Q, V, J_star, 1.0 / d2(J_star), g.beta, g.mass)


def inverse_legendre(curve: EffectivePotentialCurve, J_grid) -> np.ndarray:
    """w(J) = Q* J - V(Q*) with V'(Q*) = J; the transform applied a second time."""
    spline = curve.interpolant()
    d1 = spline.derivative(1)
    J = np.asarray(J_grid, dtype=float)
    Q_star = np.array([_solve_monotone(d1, float(j), curve.Q, curve.dV) for j in J])
    return Q_star * J - spline(Q_star)


def legendre_point(moments: MomentFn, Q: float, J0: float = 0.0, tol: float = 1e-13) -> tuple[float, float, float]:
    """(V(Q), J*, w''(J*)) by safeguarded Newton iteration directly on exact moments."""
    J = J0
    lo, hi = -math.inf, math.inf
    for _ in range(100):
        w, q, c = moments(J)
        if not c > 0:
            raise QOutOfRange(f"Q = {Q} is outside the range the source can reach")
        r = q - Q
        if r > 0:
            hi = min(hi, J)
        else:
            lo = max(lo, J)
        if abs(r) <= tol * (1.0 + abs(Q)):
            return J * Q - w, J, c
        step = J - r / c
        if not lo < step < hi:
            step = 0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else J - 2.0 * r / c
        J = step
    raise QOutOfRange(f"Newton iteration for J*(Q={Q}) did not converge")


# ---------------------------------------------------------------------------
# parameters


def _curve_minimum(g: GeneratingFunctionTable, J0: float, Q_min: float, half: float, points: int):
    """Minimum and frequency of a local polynomial fit to V - J0 Q on Q_min +- half."""
    Qw = Q_min + half * np.linspace(-1.0, 1.0, points)
    curve = legendre_transform(g, Qw)
    x = (Qw - Q_min) / half
    coef = P.polyfit(x, curve.V - J0 * Qw, FIT_DEGREE)
    roots = P.polyroots(P.polyder(coef))
    roots = roots[np.abs(roots.imag) < 1e-9].real
    r = float(roots[np.argmin(np.abs(roots))])
    curv = float(P.polyval(r, P.polyder(coef, 2))) / half**2
    if not curv > 0:
        raise NonConvexAtOrigin(f"local fit of V has curvature {curv} at its minimum")
    return float(Q_min + r * half), math.sqrt(curv / g.mass)


def extract_parameters(
    g: GeneratingFunctionTable, J0: float = 0.0, window_points: int = 41, check: bool = True
) -> EpacParameters:
    """Q_min = w'(J0) and omega = 1/sqrt(m w''(J0)), cross-checked on the V curve.

    With J0 != 0 this is the minimum of V(Q) - J0 Q, i.e. of the curve tilted
    by the linear term -J0 Q; E0 is that minimum value, -w(J0).  The curve
    route fits a degree FIT_DEGREE polynomial to V - J0 Q over
    Q_min +- sigma_Q / 2 and reads off the minimum and curvature; for strongly
    anharmonic curves the window is halved (at most CURVE_HALVINGS times)
    until the two routes agree.
    """
    if not g.J[0] < J0 < g.J[-1]:
        raise QOutOfRange(f"J = {J0} is not interior to the source grid")
    spline = g.interpolant()
    node = np.flatnonzero(g.J == J0)
    if node.size:  # tabulated values are exact; the interpolant only adds roundoff
        i = int(node[0])
        w0, Q_min, c = float(g.w[i]), float(g.dw[i]), float(g.d2w[i])
    else:
        w0, Q_min, c = float(spline(J0)), float(spline.derivative(1)(J0)), float(spline.derivative(2)(J0))
    if not c > 0:
        raise NonConvexAtOrigin(f"d2w/dJ2 = {c} at J = {J0}")
    omega = 1.0 / math.sqrt(g.mass * c)
    E0 = -w0

    # +- sigma_Q / 2, clipped to the Q range the table supports (sampled tables are narrow at low T)
    room = min(Q_min - g.dw[0], g.dw[-1] - Q_min)
    half = min(0.5 * math.sqrt(c), 0.9 * room)
    for k in range(CURVE_HALVINGS + 1):
        Q_curve, omega_curve = _curve_minimum(g, J0, Q_min, half, window_points)
        Q_ok = abs(Q_curve - Q_min) <= 1e-6 * max(abs(Q_min), 2.0 * half)
        omega_ok = abs(omega_curve - omega) <= 1e-6 * omega
        if not check or (Q_ok and omega_ok):
            break
        if k == CURVE_HALVINGS:
            if not Q_ok:
                raise NonConvexAtOrigin(f"curve minimum {Q_curve} disagrees with w'(J0) = {Q_min}")
            raise NonConvexAtOrigin(f"curve frequency {omega_curve} disagrees with {omega}")
        half *= 0.5
    return EpacParameters(
        beta=g.beta, mass=g.mass, Q_min=Q_min, omega_beta=omega, E0=E0, Q_min_curve=Q_curve, omega_curve=omega_curve
    )


def ground_state_energy(curve: EffectivePotentialCurve, params: EpacParameters | None = None) -> float:
    """Minimum value of V on the curve (at params.Q_min when given)."""
    spline = curve.interpolant()
    if params is not None:
        return float(spline(params.Q_min))
    Q_min = _solve_monotone(spline.derivative(1), 0.0, curve.Q, curve.dV)
    return float(spline(Q_min))


def bootstrap_parameters(
    fits: Sequence, ts: ThermoState, J0: float = 0.0, domain=None
) -> tuple[np.ndarray, np.ndarray]:
    """Q_min and omega for each replica fit, evaluated directly at J0."""
    Q, om = [], []
    for fit in fits:
        _, mean, var = centroid_moments(fit._float, ts.beta, ts.mass, J0, domain=domain)
        Q.append(mean)
        om.append(1.0 / math.sqrt(ts.mass * ts.beta * var))
    return np.array(Q), np.array(om)
