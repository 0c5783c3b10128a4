"""Exact reference machinery: bound states, thermal sums, real-time correlators.

Bound states come from a uniform-grid sinc discrete variable representation
(Colbert-Miller).  Every spectrum is computed on two grids, the second with
half the spacing, and accepted only when the retained eigenvalues agree to
``tol``; this is the convergence diagnostic stored in ``grid_meta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh

from . import io
from .errors import NonConfiningPotential, NotConverged, TruncationTooSevere, UnboundedSpectrumRequest
from .model import Morse, PotentialModel, ThermoState, Tilted, as_polynomial, derivative, evaluate

# exp(-beta dE) below this is considered negligible thermal weight
WEIGHT_CUTOFF = 1e-10
LOG_CUTOFF = -math.log(WEIGHT_CUTOFF)
# tunnelling action beyond the turning point required at the domain edge
_EDGE_ACTION = 32.0
# dense sinc-DVR Hamiltonians beyond this size would need gigabytes of memory
MAX_GRID_POINTS = 8000


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    q_elements: np.ndarray
    q2_diagonal: np.ndarray
    grid_meta: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.energies)


@dataclass(frozen=True)
class CorrelationSeries:
    times: np.ndarray
    values: np.ndarray
    beta: float
    kind: str = "exact"

    def to_csv(self, path, meta=None):
        rows = ((t, v.real, v.imag, self.kind, self.beta) for t, v in zip(self.times, self.values))
        return io.write_csv(path, ["t", "re", "im", "kind", "beta"], rows, meta)


# ---------------------------------------------------------------------------
# potential geometry


def _minimum(p: PotentialModel) -> float:
    poly = as_polynomial(p)
    if poly is not None:
        c = poly._float
        d = np.polynomial.polynomial.polyder(c)
        roots = np.polynomial.polynomial.polyroots(d) if len(d) > 1 else np.array([0.0])
        real = roots[np.abs(roots.imag) < 1e-9].real
        if real.size == 0:
            real = np.array([0.0])
        return float(real[np.argmin(evaluate(poly, real))])
    if isinstance(p, Morse):
        return 0.0
    raise NonConfiningPotential(f"no bound-state treatment for {p!r}")


def _edge(p: PotentialModel, mass: float, e_top: float, q0: float, direction: int, scale: float) -> float:
    """Walk away from q0 until the tunnelling action under e_top exceeds the edge threshold."""
    step = 0.005 * scale
    action = 0.0
    pos = q0
    max_dist = 2e4 * scale
    while abs(pos - q0) < max_dist:
        q = pos + direction * step * np.arange(1, 2001)
        v = evaluate(p, q)
        kappa = np.sqrt(2.0 * mass * np.clip(v - e_top, 0.0, None))
        cum = action + np.cumsum(kappa) * step
        hit = np.nonzero(cum >= _EDGE_ACTION)[0]
        if hit.size:
            return float(q[hit[0]])
        action = float(cum[-1])
        pos = float(q[-1])
        step *= 2.0
    raise UnboundedSpectrumRequest(f"states up to E={e_top:.6g} are not bound for {p!r}")


@lru_cache(maxsize=64)
def _kinetic(n: int, h: float, mass: float) -> np.ndarray:
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    sign = np.where(d % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        off = 2.0 * sign / np.where(d == 0, 1, d) ** 2
    t = np.where(d == 0, np.pi**2 / 3.0, off)
    return t / (2.0 * mass * h * h)


def _diagonalize(p, mass, lo, hi, h, e_top):
    n = int(math.ceil((hi - lo) / h)) + 1
    if n > MAX_GRID_POINTS:
        raise NotConverged(f"spectrum needs {n} grid points (limit {MAX_GRID_POINTS}); temperature too high for the oracle")
    x = np.linspace(lo, hi, n)
    h = x[1] - x[0]
    ham = _kinetic(n, h, mass) + np.diag(evaluate(p, x))
    e, u = eigh(ham, subset_by_value=(-np.inf, e_top), driver="evr")
    return x, e, u


def solve_bound_states(
    p: PotentialModel,
    ts: ThermoState,
    n_states: int | None = None,
    tol: float = 1e-8,
) -> Spectrum:
    """Lowest eigenpairs of H = p^2/2m + V(q) with position matrix elements.

    With ``n_states=None`` the retained set is sized for ``ts.beta``: every
    state with Boltzmann weight above 1e-10 is kept, plus a coupling margin.
    """
    return _solve_cached(p, ts.mass, ts.beta, n_states, tol)


@lru_cache(maxsize=256)
def _solve_cached(p, mass, beta, n_states, tol) -> Spectrum:
    if n_states is not None and n_states < 1:
        raise ValueError("n_states must be >= 1")
    if isinstance(p, Tilted) and isinstance(p.base, Morse) and p.f != 0:
        raise NonConfiningPotential("a linear tilt destroys the Morse bound-state ladder")
    q0 = _minimum(p)
    vmin = float(evaluate(p, q0))
    curv = float(derivative(p, q0, 2))
    if not curv > 0:
        raise NonConfiningPotential("potential minimum has no positive curvature")
    omega = math.sqrt(curv / mass)
    scale = 1.0 / math.sqrt(mass * omega)

    morse = p if isinstance(p, Morse) else (p.base if isinstance(p, Tilted) and isinstance(p.base, Morse) else None)
    if morse is not None:
        lam = math.sqrt(2.0 * mass * morse.depth) / abs(morse.range_)
        n_bound = math.floor(lam - 0.5)
        if n_states is None or n_states > n_bound:
            raise UnboundedSpectrumRequest(
                f"Morse potential binds {n_bound + 1} states; request at most {n_bound} explicitly"
            )

    if n_states is None:
        span = LOG_CUTOFF / beta
        e_keep = None  # decided after the ground state is known
        e_top = vmin + 0.5 * omega + 1.3 * span + 12.0 * omega
    else:
        e_top = vmin + omega * (n_states + 2.0) * 1.2
    if morse is not None:
        dissociation = vmin + morse.depth
        e_top = min(e_top, vmin + 0.5 * omega + (dissociation - vmin - 0.5 * omega) * 0.999)

    for _ in range(8):
        lo = _edge(p, mass, e_top, q0, -1, scale)
        hi = _edge(p, mass, e_top, q0, +1, scale)
        vmax_inside = max(float(evaluate(p, lo)), float(evaluate(p, hi)))
        kmax = math.sqrt(2.0 * mass * max(vmax_inside, e_top) - 2.0 * mass * vmin)
        h = math.pi / (1.5 * kmax + 6.0 / scale)
        x, e1, u1 = _diagonalize(p, mass, lo, hi, h, e_top)
        if n_states is not None:
            need = n_states
        else:
            e_keep = e1[0] + 1.1 * span + 10.0 * omega if len(e1) else e_top
            need = int(np.searchsorted(e1, e_keep))
            if e_keep > e_top:
                need = len(e1) + 1
        if len(e1) >= need and need > 0:
            break
        e_top = vmin + 2.0 * (e_top - vmin)
        if morse is not None:
            raise UnboundedSpectrumRequest("requested Morse states lie too close to dissociation")
    else:
        raise NotConverged("could not bracket the requested number of states")

    prev = e1
    levels = 0
    while True:
        h /= 2.0
        levels += 1
        x, e2, u2 = _diagonalize(p, mass, lo, hi, h, e_top)
        m = min(need, len(e2))
        delta = float(np.max(np.abs(e2[:need] - prev[:need]))) if m == need else np.inf
        if delta <= tol:
            break
        if levels >= 3:
            raise NotConverged(f"eigenvalues changed by {delta:.3g} under grid doubling")
        prev = e2

    e = e2[:need]
    u = u2[:, :need]
    # deterministic phases: largest-magnitude component positive
    idx = np.argmax(np.abs(u), axis=0)
    u = u * np.sign(u[idx, np.arange(need)])
    qmat = u.T @ (x[:, None] * u)
    qmat = 0.5 * (qmat + qmat.T)
    q2 = np.einsum("in,i,in->n", u, x * x, u)
    completeness = np.abs((qmat**2).sum(axis=0) - q2)
    meta = {
        "domain": (float(x[0]), float(x[-1])),
        "points": len(x),
        "spacing": float(x[1] - x[0]),
        "doublings": levels,
        "max_delta_E": delta,
        "completeness_residual": completeness,
    }
    for arr in (e, qmat, q2):
        arr.setflags(write=False)
    return Spectrum(energies=e, q_elements=qmat, q2_diagonal=q2, grid_meta=meta)


# ---------------------------------------------------------------------------
# thermal sums


def boltzmann_weights(s: Spectrum, beta: float) -> np.ndarray:
    """Normalised weights, computed relative to E_0 so beta=100 does not underflow."""
    de = s.energies - s.energies[0]
    if s.n_states > 1 and math.exp(-beta * de[-1]) >= WEIGHT_CUTOFF:
        raise TruncationTooSevere(
            f"highest retained state still has weight {math.exp(-beta * de[-1]):.3g}; retain more states"
        )
    if s.n_states == 1 and beta < 1e3:
        raise TruncationTooSevere("a single state cannot represent a finite temperature")
    w = np.exp(-beta * de)
    return w / w.sum()


def thermal_expectation_q(s: Spectrum, beta: float) -> float:
    return float(boltzmann_weights(s, beta) @ np.diag(s.q_elements))


def thermal_expectation_q2(s: Spectrum, beta: float) -> float:
    """<q^2> from the direct trace of the q^2 operator (no matrix-element sums)."""
    return float(boltzmann_weights(s, beta) @ s.q2_diagonal)


def exact_autocorrelation(s: Spectrum, beta: float, times) -> CorrelationSeries:
    """C(t) = (1/Z) sum_nm exp(-beta E_n) exp(-i(E_m - E_n)t) |<m|q|n>|^2."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    p = boltzmann_weights(s, beta)
    keep = p > 1e-18 * p[0]
    q2 = s.q_elements**2
    e = s.energies - s.energies[0]
    # sum over m first: A[t, n] = sum_m |q_mn|^2 exp(-i E_m t)
    phase_m = np.exp(-1j * np.outer(t, e))
    a = phase_m @ q2[:, keep]
    vals = (a * np.exp(1j * np.outer(t, e[keep]))) @ p[keep]
    return CorrelationSeries(times=t, values=vals, beta=beta, kind="exact")


def _tilted(p: PotentialModel, J: float) -> PotentialModel:
    return p if J == 0 else Tilted(p, -float(J), 0)


def tilted_generating_function(p: PotentialModel, ts: ThermoState, J: float, n_states: int | None = None) -> float:
    """w(J) = (1/beta) log Tr exp(-beta (H - J q))."""
    return tilted_generating_moments(p, ts, J, n_states)[0]


def tilted_generating_moments(p: PotentialModel, ts: ThermoState, J: float, n_states: int | None = None):
    """(w, dw/dJ, d2w/dJ2) at source J from the spectrum of H - J q.

    The first derivative is <q>_J (Hellmann-Feynman); the second is the Kubo
    (canonical) variance, beta*Var_n(q_nn) plus the second-order level shifts.
    """
    if isinstance(p, Morse) or (isinstance(p, Tilted) and isinstance(p.base, Morse)):
        raise NonConfiningPotential("the thermal trace of a Morse Hamiltonian includes the continuum")
    beta = ts.beta
    s = solve_bound_states(_tilted(p, J), ts, n_states)
    wts = boltzmann_weights(s, beta)
    e = s.energies
    w = -e[0] + math.log(np.sum(np.exp(-beta * (e - e[0])))) / beta
    qd = np.diag(s.q_elements)
    mean = float(wts @ qd)
    gap = e[None, :] - e[:, None]
    np.fill_diagonal(gap, np.inf)
    shifts = 2.0 * (s.q_elements**2 / gap).sum(axis=1)
    second = float(wts @ shifts + beta * (wts @ (qd - mean) ** 2))
    return float(w), mean, second


def spectrum_to_csv(s: Spectrum, energies_path, elements_path, meta=None):
    io.write_csv(energies_path, ["n", "E_n"], ((n, float(en)) for n, en in enumerate(s.energies)), meta)
    n = s.n_states
    rows = ((i, j, float(s.q_elements[i, j])) for i in range(n) for j in range(n))
    io.write_csv(elements_path, ["m", "n", "q_mn"], rows, meta)
