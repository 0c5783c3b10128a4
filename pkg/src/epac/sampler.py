"""Constrained-centroid path-integral Monte Carlo for the effective classical potential.

The discretised closed path (P beads, primitive action) is represented by its
real-FFT normal modes.  The zero mode is the centroid and is held fixed at
q_c, so the constraint is a coordinate rather than a penalty.  The remaining
modes are updated with preconditioned Crank-Nicolson moves that are exactly
reversible with respect to a harmonic reference ring polymer::

    X' = sqrt(1 - s^2) X + s xi,    xi ~ N(0, reference covariance)

so only the anharmonic part of the potential action enters the Metropolis
test.  The reference curvature is re-estimated during burn-in from the
average V'' over the beads.

Random streams: each grid point draws from its own Philox4x64 generator keyed
by ``SeedSequence(seed, spawn_key=(grid_index,))``; results therefore do not
depend on how grid points are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from . import io
from .errors import AcceptanceOutOfRange, FitRejected, NonConfiningPotential
from .model import (
    Polynomial,
    PotentialModel,
    ThermoState,
    as_polynomial,
    derivative,
    even_base,
    evaluate,
    format_potential,
    is_confining,
    is_even,
)
from .oracle import tilted_generating_function
from .quadrature import centroid_moments

CONSTANT_MODES = ("oracle_pin", "harmonic_TI")
FIT_DEGREES = (4, 6, 8, 10, 12, 14)


def default_beads(beta: float) -> int:
    if beta <= 1.0:
        return 64
    if beta <= 10.0:
        return 256
    return 1024


@dataclass(frozen=True)
class PathEnsembleConfig:
    """Sampling budget for one grid point.

    ``sweeps`` counts sweeps of the whole walker ensemble; every sweep proposes
    a new path for each of the ``walkers`` independent chains.
    """

    beads: int = 64
    sweeps: int = 4000
    burn_in: int = 400
    block_size: int = 200
    seed: int = 0
    step_scale: float = 1.0
    walkers: int = 64

    def __post_init__(self):
        if self.beads < 2 or self.beads % 2:
            raise ValueError("beads must be an even number >= 2")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("sweeps must exceed burn_in")
        if self.block_size < 1 or (self.sweeps - self.burn_in) % self.block_size:
            raise ValueError("block_size must divide sweeps - burn_in")
        if (self.sweeps - self.burn_in) // self.block_size < 2:
            raise ValueError("need at least two blocks for an error estimate")
        if not 0 < self.step_scale <= 1:
            raise ValueError("step_scale must lie in (0, 1]")
        if self.walkers < 1 or self.seed < 0:
            raise ValueError("walkers must be positive and seed non-negative")

    @classmethod
    def for_beta(cls, beta: float, **kw) -> "PathEnsembleConfig":
        kw.setdefault("beads", default_beads(beta))
        return cls(**kw)


def rng_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


class MeanForce(NamedTuple):
    force: float
    err: float
    acceptance: float
    step_scale: float


def block_error(samples: np.ndarray, block_size: int) -> tuple[float, float]:
    """Mean and standard error from block averages of a (sweeps, walkers) series."""
    n = samples.shape[0] // block_size
    blocks = samples[: n * block_size].reshape(n, block_size, -1).mean(axis=1)
    return float(blocks.mean()), float(blocks.std(ddof=1) / math.sqrt(blocks.size))


def _mode_widths(beta: float, mass: float, P_: int, omega2: float) -> np.ndarray:
    k = np.arange(P_ // 2 + 1)
    prec = (mass * P_ / beta) * 4.0 * np.sin(np.pi * k / P_) ** 2 + (beta / P_) * mass * omega2
    var = np.empty_like(prec)
    var[1:] = P_ / (2.0 * prec[1:])
    var[-1] = P_ / prec[-1]
    var[0] = 0.0
    return np.sqrt(var)


def _sample(
    funcs: tuple[Callable, Callable, Callable],
    ts: ThermoState,
    q_c: float,
    cfg: PathEnsembleConfig,
    rng: np.random.Generator,
    observable: Callable | None = None,
):
    """Run the constrained chain; return per-sweep, per-walker observable samples."""
    V, dV, d2V = funcs
    beta, mass = ts.beta, ts.mass
    P_, W = cfg.beads, cfg.walkers
    nk = P_ // 2 + 1
    observable = observable or (lambda q: dV(q).mean(axis=1))

    omega2 = max(float(d2V(np.array([q_c]))[0]) / mass, 0.0)
    widths = _mode_widths(beta, mass, P_, omega2)

    def draw():
        z = rng.standard_normal((2, W, nk))
        z[1, :, -1] = 0.0
        return (z[0] + 1j * z[1]) * widths

    def action(x):
        d = np.fft.irfft(x, n=P_)
        q = q_c + d
        return (beta / P_) * (V(q) - 0.5 * mass * omega2 * d * d).sum(axis=1), q

    X = draw()
    A, q = action(X)
    s = cfg.step_scale
    tune_every = 50
    acc_window = 0.0
    curv_window = 0.0
    n_prod = cfg.sweeps - cfg.burn_in
    out = None
    acc_prod = 0.0

    for sweep in range(cfg.sweeps):
        c = math.sqrt(1.0 - s * s)
        Xp = c * X + s * draw()
        Ap, qp = action(Xp)
        accept = rng.random(W) < np.exp(np.minimum(0.0, A - Ap))
        X[accept] = Xp[accept]
        A[accept] = Ap[accept]
        q[accept] = qp[accept]
        rate = accept.mean()
        if sweep < cfg.burn_in:
            acc_window += rate
            curv_window += float(d2V(q).mean())
            if (sweep + 1) % tune_every == 0:
                acc = acc_window / tune_every
                if acc < 0.4:
                    s = max(0.02, s * 0.7)
                elif acc > 0.6 and s < 1.0:
                    s = min(1.0, s * 1.3)
                omega2 = max(curv_window / tune_every / mass, 0.0)
                widths = _mode_widths(beta, mass, P_, omega2)
                A, q = action(X)
                acc_window = curv_window = 0.0
            continue
        obs = observable(q)
        if out is None:
            out = np.empty((n_prod,) + np.shape(obs))
        out[sweep - cfg.burn_in] = obs
        acc_prod += rate

    acceptance = acc_prod / n_prod
    if acceptance < 0.2 or (acceptance > 0.8 and s < 1.0):
        raise AcceptanceOutOfRange(f"acceptance {acceptance:.3f} at step scale {s:.3g} (q_c={q_c:.4g})")
    return out, acceptance, s


def _funcs(p: PotentialModel):
    poly = as_polynomial(p)
    if poly is not None:
        c = poly._float
        c1 = P.polyder(c)
        c2 = P.polyder(c1) if len(c1) > 1 else np.zeros(1)

        def horner(cc):
            def f(q):
                out = np.full(np.shape(q), cc[-1])
                for a in cc[-2::-1]:
                    out = out * q + a
                return out

            return f

        return horner(c), horner(c1), horner(c2)
    return (lambda q: evaluate(p, q), lambda q: derivative(p, q, 1), lambda q: derivative(p, q, 2))


def centroid_mean_force(
    p: PotentialModel, ts: ThermoState, q_c: float, cfg: PathEnsembleConfig, grid_index: int = 0
) -> MeanForce:
    """Block-averaged <V'(q(tau))> over paths whose centroid is pinned at q_c."""
    if not is_confining(p):
        raise NonConfiningPotential(f"path-integral sampling needs a confining potential, got {p!r}")
    samples, acc, s = _sample(_funcs(p), ts, float(q_c), cfg, rng_stream(cfg.seed, grid_index))
    mean, err = block_error(samples, cfg.block_size)
    return MeanForce(mean, err, acc, s)


def _force_task(args):
    p, ts, q, cfg, idx = args
    return centroid_mean_force(p, ts, q, cfg, idx)


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class CentroidPotentialTable:
    grid: np.ndarray
    values: np.ndarray
    std_err: np.ndarray
    fit: Polynomial
    constant_mode: str
    forces: np.ndarray
    force_err: np.ndarray
    beta: float
    mass: float = 1.0
    fit_basis: tuple[int, ...] = ()
    tilt: float = 0.0
    pin: tuple[float, float] = (0.0, 0.0)
    alt_fit: Polynomial | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def ts(self) -> ThermoState:
        return ThermoState(self.beta, self.mass)

    @property
    def domain(self) -> tuple[float, float] | None:
        """Interval on which the fit is trusted: the sampled grid (None for closed forms)."""
        if self.constant_mode == "analytic":
            return None
        return float(self.grid[0]), float(self.grid[-1])

    def fit_residuals(self) -> np.ndarray:
        return self.forces - P.polyval(self.grid, P.polyder(self.fit._float))

    def to_csv(self, path, meta=None):
        meta = dict(meta or {})
        meta.update(
            constant_mode=self.constant_mode,
            beta=self.beta,
            mass=self.mass,
            fit_coefficients=" ".join(repr(float(c)) for c in self.fit._float),
        )
        meta.update({f"provenance.{k}": v for k, v in self.provenance.items()})
        rows = zip(self.grid, self.values, self.std_err)
        return io.write_csv(path, ["q_c", "V", "err"], rows, meta)

    def replica_fits(self, n: int, seed: int) -> list[Polynomial]:
        """Parametric-bootstrap fits: forces redrawn within their errors, refit and re-pinned."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2**31 - 1,))))
        out = []
        for _ in range(n):
            f = self.forces + self.force_err * rng.standard_normal(self.forces.shape)
            pin = self.pin[0] + self.pin[1] * rng.standard_normal()
            shape = _lstsq_fit(self.grid, f - self.tilt, _sigma(f, self.force_err), self.fit_basis)
            out.append(_pinned(shape, self.tilt, self.constant_mode, pin, self.grid, self.beta, self.mass))
        return out

    def with_fit(self, fit: Polynomial) -> "CentroidPotentialTable":
        return replace(self, fit=fit)


def _sigma(f, err):
    return np.maximum(err, 1e-12 * (1.0 + np.abs(f)))


def _lstsq_fit(q, f, sigma, powers) -> np.ndarray:
    """Coefficients c_k (k in powers) of V(q) = sum c_k q^k fitted to forces V'(q)."""
    scale = max(float(np.max(np.abs(q))), 1e-12)
    t = q / scale
    design = np.stack([k * t ** (k - 1) for k in powers], axis=1) / scale
    sol, *_ = np.linalg.lstsq(design / sigma[:, None], f / sigma, rcond=None)
    coeffs = np.zeros(max(powers) + 1)
    for k, c in zip(powers, sol):
        coeffs[k] = c / scale ** (k - 1) / scale
    # leading terms at roundoff level (noise-free harmonic forces) are dropped
    floor = 1e-11 * (1.0 + float(np.max(np.abs(f))))
    while len(coeffs) > 3 and abs(coeffs[-1]) * (len(coeffs) - 1) * scale ** (len(coeffs) - 2) < floor:
        coeffs = coeffs[:-1]
    return coeffs


def _pinned(shape, tilt, mode, pin, grid, beta, mass) -> Polynomial:
    c = np.array(shape, dtype=float)
    if len(c) < 2:
        c = np.append(c, 0.0)
    c[1] += tilt
    c[0] = 0.0
    if mode == "oracle_pin":
        w_shape = centroid_moments(c, beta, mass, 0.0, domain=(grid[0], grid[-1]))[0]
        c[0] = w_shape - pin
    else:
        center = 0.5 * (grid[0] + grid[-1])
        c[0] = pin - P.polyval(center, c)
    return Polynomial(tuple(float(x) for x in c))


def default_grid(p: PotentialModel, ts: ThermoState, points: int = 21, energy: float = 40.0, center=None):
    """Symmetric grid spanning where beta (V - V_min) <= energy."""
    poly = as_polynomial(p)
    if poly is None:
        raise NonConfiningPotential("default grid needs a polynomial potential")
    c = poly._float
    crit = P.polyroots(P.polyder(c))
    crit = crit[np.abs(crit.imag) < 1e-9].real
    vmin = float(np.min(P.polyval(crit, c)))
    shifted = c.copy()
    shifted[0] -= vmin + energy / ts.beta
    r = P.polyroots(shifted)
    r = r[np.abs(r.imag) < 1e-9].real
    if center is None:
        center = 0.0 if is_even(p) or even_base(p) is not None else float(crit[np.argmin(P.polyval(crit, c))])
    half = float(np.max(np.abs(r - center)))
    return np.linspace(center - half, center + half, points)


def _check_grid(grid: np.ndarray):
    if grid.ndim != 1 or grid.size < 9:
        raise ValueError("centroid grid needs at least 9 points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("centroid grid must be strictly increasing")
    center = 0.5 * (grid[0] + grid[-1])
    if not np.allclose(grid + grid[::-1], 2.0 * center, atol=1e-12 * (1 + np.abs(grid).max())):
        raise ValueError("centroid grid must be symmetric about its center")


def cumulative_trapezoid_with_errors(grid, forces, errs, origin: int):
    """V(q_i) - V(q_origin) by the trapezoid rule, and its propagated standard error."""
    n = len(grid)
    h = np.diff(grid)
    weights = np.zeros((n, n))
    for i in range(n):
        lo, hi, sign = (origin, i, 1.0) if i >= origin else (i, origin, -1.0)
        for j in range(lo, hi):
            weights[i, j] += sign * 0.5 * h[j]
            weights[i, j + 1] += sign * 0.5 * h[j]
    values = weights @ forces
    std = np.sqrt((weights**2) @ (errs**2))
    return values, std


def harmonic_reference_free_energy(omega2: float, ts: ThermoState, beads: int | None = None) -> float:
    """Non-zero-mode free energy of a harmonic ring polymer relative to the free one.

    ``beads=None`` gives the continuum value (1/beta) log(sinh(x)/x), x = beta omega / 2.
    """
    if beads is None:
        x = 0.5 * ts.beta * math.sqrt(omega2)
        return (x + math.log1p(-math.exp(-2.0 * x)) - math.log(2.0 * x)) / ts.beta
    k = np.arange(1, beads)
    ratio = ts.beta**2 * omega2 / (4.0 * beads**2 * np.sin(np.pi * k / beads) ** 2)
    return 0.5 * float(np.sum(np.log1p(ratio))) / ts.beta


def harmonic_ti_value(
    p: PotentialModel, ts: ThermoState, q_pin: float, cfg: PathEnsembleConfig, nodes: int = 6, grid_index: int = 0
) -> tuple[float, float]:
    """V^c(q_pin) by thermodynamic integration from the local harmonic reference."""
    V, dV, d2V = _funcs(p)
    v0 = float(V(np.array([q_pin]))[0])
    f0 = float(dV(np.array([q_pin]))[0])
    k2 = float(d2V(np.array([q_pin]))[0])
    if not k2 > 0:
        raise NonConfiningPotential("harmonic_TI needs positive curvature at the pin point")

    def ref(q):
        d = q - q_pin
        return v0 + f0 * d + 0.5 * k2 * d * d

    lam, wts = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * (lam + 1.0)
    wts = 0.5 * wts
    total, var = 0.0, 0.0
    for i, (l, w) in enumerate(zip(lam, wts)):
        funcs = (
            lambda q, l=l: ref(q) + l * (V(q) - ref(q)),
            lambda q, l=l: (f0 + k2 * (q - q_pin)) + l * (dV(q) - f0 - k2 * (q - q_pin)),
            lambda q, l=l: k2 + l * (d2V(q) - k2),
        )
        obs = lambda q: (V(q) - ref(q)).mean(axis=1)
        samples, _, _ = _sample(funcs, ts, q_pin, cfg, rng_stream(cfg.seed, 10_000 + 100 * grid_index + i), obs)
        m, e = block_error(samples, cfg.block_size)
        total += w * m
        var += (w * e) ** 2
    # the reference enters in the continuum; only the anharmonic difference is sampled at finite P
    base = v0 + harmonic_reference_free_energy(k2 / ts.mass, ts)
    return base + total, math.sqrt(var)


def build_centroid_table(
    p: PotentialModel,
    ts: ThermoState,
    grid: Sequence[float] | None = None,
    cfg: PathEnsembleConfig | None = None,
    constant_mode: str = "oracle_pin",
    use_parity: bool | None = None,
    degrees: Sequence[int] = FIT_DEGREES,
    workers: int = 1,
) -> CentroidPotentialTable:
    """Sample mean forces on a grid, integrate them and attach a smooth pinned fit."""
    if constant_mode not in CONSTANT_MODES:
        raise ValueError(f"constant_mode must be one of {CONSTANT_MODES}")
    if not is_confining(p):
        raise NonConfiningPotential(f"path-integral sampling needs a confining potential, got {p!r}")
    cfg = cfg or PathEnsembleConfig.for_beta(ts.beta)
    grid = np.asarray(default_grid(p, ts) if grid is None else grid, dtype=float)
    _check_grid(grid)
    n = grid.size
    center_idx = n // 2

    parity = is_even(p) and abs(grid[center_idx] if n % 2 else 0.5 * (grid[0] + grid[-1])) < 1e-12
    if use_parity is not None:
        parity = parity and use_parity
    todo = [i for i in range(n) if not parity or grid[i] >= -1e-15]
    tasks = [(p, ts, float(grid[i]), cfg, i) for i in todo]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_force_task, tasks))
    else:
        results = [_force_task(t) for t in tasks]
    forces = np.empty(n)
    errs = np.empty(n)
    acc = np.empty(n)
    for i, r in zip(todo, results):
        forces[i], errs[i], acc[i] = r.force, r.err, r.acceptance
    if parity:
        for i in range(n):
            if i not in todo:
                j = n - 1 - i
                forces[i], errs[i], acc[i] = -forces[j], errs[j], acc[j]

    eb = even_base(p)
    tilt = float(eb[1]) if eb is not None else 0.0
    sigma = _sigma(forces, errs)
    basis = lambda deg: tuple(range(2, deg + 1, 2)) if eb is not None else tuple(range(1, deg + 1))
    unique = len(todo) if parity else n
    ladder = [d for d in degrees if len(basis(d)) < unique]
    for k, deg in enumerate(ladder):
        powers = basis(deg)
        shape = _lstsq_fit(grid, forces - tilt, sigma, powers)
        slope = P.polyder(shape) if len(shape) > 1 else np.zeros(1)
        resid = forces - tilt - P.polyval(grid, slope)
        if np.all(np.abs(resid) <= 3.0 * sigma + 1e-9 * (1.0 + np.abs(forces))):
            break
    else:
        worst = float(np.max(np.abs(resid) / sigma))
        raise FitRejected(f"no polynomial fit of degree {tuple(ladder)} within 3 sigma (worst {worst:.2f} sigma)")
    # neighbouring degree, used downstream as a fit-model systematic
    alt_deg = ladder[k + 1] if k + 1 < len(ladder) else (ladder[k - 1] if k else None)

    if constant_mode == "oracle_pin":
        pin = (tilted_generating_function(p, ts, 0.0), 0.0)
    else:
        pin = harmonic_ti_value(p, ts, float(grid[center_idx]), cfg)
    fit = _pinned(shape, tilt, constant_mode, pin[0], grid, ts.beta, ts.mass)
    alt_fit = None
    if alt_deg is not None:
        alt_shape = _lstsq_fit(grid, forces - tilt, sigma, basis(alt_deg))
        alt_fit = _pinned(alt_shape, tilt, constant_mode, pin[0], grid, ts.beta, ts.mass)

    rel, std = cumulative_trapezoid_with_errors(grid, forces, errs, center_idx)
    values = rel + float(fit(grid[center_idx]))
    provenance = {
        "potential": format_potential(p),
        "seed": cfg.seed,
        "beads": cfg.beads,
        "sweeps": cfg.sweeps,
        "walkers": cfg.walkers,
        "rng": "Philox4x64(SeedSequence(seed, spawn_key=(grid_index,)))",
        "fit_degree": len(shape) - 1,
        "parity": bool(parity),
        "min_acceptance": float(acc.min()),
    }
    return CentroidPotentialTable(
        grid=grid,
        values=values,
        std_err=std,
        fit=fit,
        constant_mode=constant_mode,
        forces=forces,
        force_err=errs,
        beta=ts.beta,
        mass=ts.mass,
        fit_basis=powers,
        tilt=tilt,
        pin=pin,
        alt_fit=alt_fit,
        provenance=provenance,
    )


def analytic_harmonic_table(omega: float, ts: ThermoState, grid=None, f: float = 0.0) -> CentroidPotentialTable:
    """Closed-form continuum table 1/2 m w^2 q^2 + f q + (1/beta) log(sinh(x)/x), x = beta w / 2."""
    beta, m = ts.beta, ts.mass
    x = 0.5 * beta * omega
    const = (x + math.log1p(-math.exp(-2 * x)) - math.log(2 * x)) / beta
    grid = np.linspace(-5.0, 5.0, 21) if grid is None else np.asarray(grid, dtype=float)
    fit = Polynomial((const, f, 0.5 * m * omega**2))
    forces = m * omega**2 * grid + f
    zeros = np.zeros_like(grid)
    return CentroidPotentialTable(
        grid=grid,
        values=fit(grid),
        std_err=zeros,
        fit=fit,
        constant_mode="analytic",
        forces=forces,
        force_err=zeros,
        beta=beta,
        mass=m,
        fit_basis=(2,),
        tilt=f,
        pin=(0.0, 0.0),
        provenance={"source": "analytic"},
    )


def polynomial_table(fit: Polynomial, ts: ThermoState, grid=None) -> CentroidPotentialTable:
    """Wrap an arbitrary confining polynomial V^c as a noise-free table."""
    grid = np.linspace(-5.0, 5.0, 21) if grid is None else np.asarray(grid, dtype=float)
    zeros = np.zeros_like(grid)
    return CentroidPotentialTable(
        grid=grid,
        values=fit(grid),
        std_err=zeros,
        fit=fit,
        constant_mode="analytic",
        forces=derivative(fit, grid, 1),
        force_err=zeros,
        beta=ts.beta,
        mass=ts.mass,
        fit_basis=tuple(range(1, fit.degree + 1)),
        provenance={"source": "analytic"},
    )


def with_seed(cfg: PathEnsembleConfig, seed: int) -> PathEnsembleConfig:
    return replace(cfg, seed=seed)
