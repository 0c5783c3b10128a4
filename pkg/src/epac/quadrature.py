"""Centroid integrals of exp(-beta (V(q) - J q)) for polynomial V."""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad_vec

from .errors import IntegrandNotLocalized

# integrand cut where it has dropped below 1e-16 of its peak
_LOG_DROP = 37.0
# a clipped domain end is accepted once the density there is below e^-30 of its peak
_LOG_DROP_DOMAIN = 30.0


def _real_roots(c: np.ndarray) -> np.ndarray:
    c = np.trim_zeros(np.asarray(c, dtype=float), "b")
    if len(c) < 2:
        return np.empty(0)
    r = P.polyroots(c)
    scale = max(1.0, float(np.max(np.abs(r))))
    return np.sort(r[np.abs(r.imag) <= 1e-7 * scale].real)


def _polish(c, x0):
    """Newton polish of a root of the polynomial with coefficients c."""
    d = P.polyder(c)
    x = x0
    for _ in range(3):
        fd = P.polyval(x, d)
        if fd == 0:
            break
        x = x - P.polyval(x, c) / fd
    return x


def centroid_moments(coeffs, beta: float, mass: float, J: float, epsrel: float = 1e-12, domain=None):
    """(w, <q>, Var q) for the centroid density exp(-beta (V(q) - J q)).

    w = (1/beta) log[ sqrt(m / 2 pi beta) * integral ].  The exponent is
    shifted by its minimum before exponentiation (log-sum-exp form).

    ``domain`` restricts the polynomial to the interval where it is trusted
    (a fit is only valid on its grid); the density must then have decayed
    below e^-30 of its peak at any clipped end.
    """
    g = np.array(coeffs, dtype=float)
    g = np.trim_zeros(g, "b")
    if len(g) < 2:
        g = np.append(g, 0.0) if len(g) else np.zeros(2)
    g = g.copy()
    g[1] -= J
    deg = len(np.trim_zeros(g, "b")) - 1
    g = g[: deg + 1]
    confining = deg >= 2 and deg % 2 == 0 and g[deg] > 0
    if domain is None and not confining:
        raise IntegrandNotLocalized("centroid potential must be an even-degree polynomial with positive leading term")
    lo_d, hi_d = (-math.inf, math.inf) if domain is None else (float(domain[0]), float(domain[1]))

    crit = _real_roots(P.polyder(g))
    crit = np.array([_polish(P.polyder(g), x) for x in crit])
    cand = crit[(crit >= lo_d) & (crit <= hi_d)]
    if domain is not None:
        cand = np.concatenate([cand, [lo_d, hi_d]])
    if cand.size == 0:
        raise IntegrandNotLocalized("no minimum of the centroid potential inside its domain")
    vals = P.polyval(cand, g)
    qm = float(cand[np.argmin(vals)])
    gmin = float(P.polyval(qm, g))

    shifted = g.copy()
    shifted[0] -= gmin + _LOG_DROP / beta
    edges = _real_roots(shifted) if deg >= 1 else np.empty(0)
    edges = np.array([_polish(shifted, x) for x in edges])
    below = edges[edges < qm]
    above = edges[edges > qm]
    a = float(below.max()) if below.size else -math.inf
    b = float(above.min()) if above.size else math.inf
    for end in (lo_d, hi_d):
        if (end == lo_d and a < lo_d) or (end == hi_d and b > hi_d):
            if beta * (P.polyval(end, g) - gmin) < _LOG_DROP_DOMAIN:
                raise IntegrandNotLocalized(
                    f"centroid density at J={J:.6g} is not localized inside [{lo_d:.6g}, {hi_d:.6g}]"
                )
    a, b = max(a, lo_d), min(b, hi_d)

    def integrand(q):
        d = q - qm
        e = math.exp(-beta * (P.polyval(q, g) - gmin))
        return np.array([e, e * d, e * d * d])

    parts = [(a, qm), (qm, b)]
    total = np.zeros(3)
    for x0, x1 in parts:
        if x1 > x0:
            total += quad_vec(integrand, x0, x1, epsabs=0.0, epsrel=epsrel)[0]
    i0, i1, i2 = total
    w = -gmin + math.log(math.sqrt(mass / (2.0 * math.pi * beta)) * i0) / beta
    m1 = i1 / i0
    return w, qm + m1, i2 / i0 - m1 * m1
