"""The acceptance matrix shared by ``epac verify`` and the test suite.

Each criterion returns a list of checks; a check carries the measured value,
its reference, the tolerance that judged it and the verdict.  Expensive
scheme runs are cached on the suite so criteria that share a run (scheme
agreement, oracle comparison, frequency enhancement, dynamics) pay for it
once.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .epac import (
    SchemeResult,
    envelope_decay,
    epac_autocorrelation,
    frequency_enhancement_check,
    harmonic_autocorrelation,
    harmonic_parameters,
    harmonic_standard_effective_potential,
    pointwise_effective_potential,
    run_scheme,
    time_average,
)
from .errors import EpacError
from .model import (
    ThermoState,
    asym_harmonic,
    harmonic,
    morse_hcl,
    hcl_quartic,
    hcl_even,
    hcl_tilted,
)
from .oracle import (
    Spectrum,
    exact_autocorrelation,
    solve_bound_states,
    thermal_expectation_q,
    thermal_expectation_q2,
)
from .quadrature import centroid_moments
from .sampler import PathEnsembleConfig, build_centroid_table, default_grid
from .transform import inverse_legendre, legendre_transform

BENCHMARK_BETAS = (0.1, 1.0, 10.0, 100.0)
# a harmonic table has noise-free forces, so its statistical error is zero;
# comparisons against it fall back to this roundoff floor
ROUNDOFF_SIGMA = 1e-8


@dataclass(frozen=True)
class Check:
    label: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        mark = "ok  " if self.passed else "FAIL"
        return f"    {mark} {self.label}: value={self.value:.10g} reference={self.reference:.10g} tol={self.tolerance:.3g}"


def close(label: str, value: float, reference: float, tol: float) -> Check:
    return Check(label, float(value), float(reference), float(tol), bool(abs(value - reference) <= tol))


def at_most(label: str, value: float, limit: float) -> Check:
    return Check(label, float(value), float(limit), 0.0, bool(value <= limit))


def at_least(label: str, value: float, limit: float) -> Check:
    return Check(label, float(value), float(limit), 0.0, bool(value >= limit))


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    checks: tuple[Check, ...] = ()
    error: str = ""
    skipped: bool = False
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.skipped or (not self.error and all(c.passed for c in self.checks))

    @property
    def status(self) -> str:
        return "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")

    def line(self) -> str:
        good = sum(c.passed for c in self.checks)
        text = f"criterion {self.number:2d} [{self.status}] {self.title} ({good}/{len(self.checks)} checks, {self.seconds:.1f} s)"
        if self.error:
            text += f": {self.error}"
        return text

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


@dataclass(frozen=True)
class SuiteSettings:
    betas: tuple[float, ...] = BENCHMARK_BETAS
    mass: float = 1.0
    sweeps: int = 1400
    burn_in: int = 200
    block_size: int = 200
    walkers: int = 64
    seed: int = 0
    n_boot: int = 64
    t_max: float = 20.0
    t_step: float = 0.05
    quick: bool = False
    beads: int | None = None

    def sampler(self, beta: float, seed: int | None = None) -> PathEnsembleConfig:
        kw = dict(sweeps=self.sweeps, burn_in=self.burn_in, block_size=self.block_size, walkers=self.walkers)
        kw["seed"] = self.seed if seed is None else seed
        if self.beads is not None:
            kw["beads"] = self.beads
        return PathEnsembleConfig.for_beta(beta, **kw)

    @property
    def times(self) -> np.ndarray:
        n = int(round(self.t_max / self.t_step))
        return self.t_step * np.arange(n + 1)


@dataclass
class Suite:
    settings: SuiteSettings = field(default_factory=SuiteSettings)
    _schemes: dict = field(default_factory=dict)
    _spectra: dict = field(default_factory=dict)

    # -- cached building blocks ------------------------------------------

    def ts(self, beta: float) -> ThermoState:
        return ThermoState(beta, self.settings.mass)

    def scheme(self, scheme: str, beta: float, route: str = "sampled") -> SchemeResult:
        key = (scheme, beta, route)
        if key not in self._schemes:
            cfg = self.settings.sampler(beta) if route == "sampled" else None
            self._schemes[key] = run_scheme(
                scheme, hcl_quartic(), self.ts(beta), cfg=cfg, route=route, n_boot=self.settings.n_boot
            )
        return self._schemes[key]

    def spectrum(self, beta: float) -> Spectrum:
        if beta not in self._spectra:
            self._spectra[beta] = solve_bound_states(hcl_quartic(), self.ts(beta))
        return self._spectra[beta]

    @property
    def production_route(self) -> str:
        return "oracle" if self.settings.quick else "sampled"

    def cached_results(self) -> list[SchemeResult]:
        return list(self._schemes.values())

    # -- criteria -------------------------------------------------------

    def criterion_1(self) -> list[Check]:
        out = []
        times = self.settings.times
        for beta in (0.1, 1.0, 10.0):
            ts = self.ts(beta)
            for omega in (0.5, 1.0, 2.0):
                p = harmonic(omega, self.settings.mass)
                closed = harmonic_autocorrelation(omega, ts, times)
                res = run_scheme("A", p, ts, route="analytic")
                dev = np.max(np.abs(epac_autocorrelation(res.params, times).values - closed.values))
                out.append(at_most(f"beta={beta} omega={omega} analytic EPAC vs closed form", dev, 1e-12))
                exact = exact_autocorrelation(solve_bound_states(p, ts), beta, times)
                dev = np.max(np.abs(exact.values - closed.values))
                out.append(at_most(f"beta={beta} omega={omega} oracle vs closed form", dev, 1e-8))
        return out

    def criterion_2(self) -> list[Check]:
        f, omega, m = 0.3, 1.0, self.settings.mass
        p = asym_harmonic(Fraction(3, 10), 1, m)
        Q_ref, E0_ref = -f / (m * omega**2), -(f**2) / (2 * m * omega**2) + omega / 2
        out = [close("closed-form E0 for f=0.3", E0_ref, 0.455, 1e-12)]
        ts = self.ts(100.0)
        for scheme in "AB":
            r = run_scheme(scheme, p, ts, route="analytic").params
            out.append(close(f"analytic scheme {scheme} Q_min", r.Q_min, Q_ref, 1e-10))
            out.append(close(f"analytic scheme {scheme} omega", r.omega_beta, omega, 1e-10))
            out.append(close(f"analytic scheme {scheme} E0", r.E0, E0_ref, 1e-10))
        if self.settings.quick:
            return out
        ts = self.ts(10.0)
        res = run_scheme(
            "A", p, ts, cfg=self.settings.sampler(10.0), n_boot=self.settings.n_boot, constant_mode="harmonic_TI"
        )
        r, table = res.params, res.table
        ref = harmonic_parameters(omega, ts, f)
        sq = max(r.Q_min_err, ROUNDOFF_SIGMA)
        out.append(at_most("sampled sigma(Q_min)", r.Q_min_err, 0.01))
        out.append(close("sampled Q_min within 3 sigma", r.Q_min, ref.Q_min, 3 * sq))
        out.append(close("sampled omega within 3 sigma", r.omega_beta, omega, 3 * max(r.omega_err, ROUNDOFF_SIGMA)))
        # E0 from thermodynamic integration, independent of the spectrum; the
        # beta = 10 reference keeps the finite-temperature term
        E0s = [-centroid_moments(fit._float, 10.0, m, 0.0, domain=table.domain)[0] for fit in table.replica_fits(self.settings.n_boot, self.settings.seed)]
        sE = max(float(np.std(E0s, ddof=1)), ROUNDOFF_SIGMA)
        out.append(close("sampled E0 (harmonic TI) within 3 sigma", r.E0, ref.E0, 3 * sE))
        return out

    def criterion_3(self) -> list[Check]:
        if self.settings.quick:
            raise _Skip
        out = []
        p = harmonic(1, 1)
        for beta in (100.0, 0.01):
            ts = ThermoState(beta, 1.0)
            # the constant comes from thermodynamic integration: the spectrum at
            # beta = 0.01 is beyond the dense eigensolver
            table = build_centroid_table(p, ts, cfg=self.settings.sampler(beta), constant_mode="harmonic_TI")
            V_beta, _ = pointwise_effective_potential(table, [0.0], n_boot=0)
            if beta == 100.0:
                out.append(close("beta=100 sampled V^c(0)", table.fit(0.0), 0.5, 0.01))
                out.append(close("beta=100 transformed V_beta(0)", V_beta[0], 0.5, 0.01))
            else:
                q = np.linspace(table.grid[0], table.grid[-1], 2001)
                out.append(close("beta=0.01 V^c minimum", float(np.min(table.fit(q))), 0.0, 0.01))
                out.append(at_most("beta=0.01 V_beta(0)", V_beta[0], -2.0))
        return out

    def criterion_4(self) -> list[Check]:
        out = []
        for beta in (0.1, 1.0, 10.0, 100.0):
            ts = self.ts(beta)
            for f in (-1.25, 0.3):
                res = run_scheme("A", asym_harmonic(f, 1, 1), ts, route="analytic")
                c = res.curve
                dev = np.max(np.abs(c.V - harmonic_standard_effective_potential(1.0, 0.0, ts, c.Q) - f * c.Q))
                out.append(at_most(f"analytic beta={beta} f={f}: V - U - fQ", dev, 1e-9))
        if self.settings.quick:
            return out
        ts = self.ts(10.0)
        sym = self.scheme("B", 10.0).table
        tilted = build_centroid_table(
            hcl_tilted(),
            ts,
            grid=default_grid(hcl_tilted(), ts, energy=60.0),
            cfg=self.settings.sampler(10.0, seed=self.settings.seed + 2),
        )
        mom = centroid_moments(tilted.fit._float, ts.beta, ts.mass, 0.0, domain=tilted.domain)
        X0, half = mom[1], 0.5 * math.sqrt(ts.beta * mom[2])
        X = X0 + half * np.linspace(-1.0, 1.0, 15)
        V, sV = pointwise_effective_potential(tilted, X, n_boot=32, seed=self.settings.seed + 3)
        U, sU = pointwise_effective_potential(sym, X, n_boot=32, seed=self.settings.seed + 4)
        for x, v, u, s1, s2 in zip(X, V, U, sV, sU):
            dev = v - u + 1.25 * x
            out.append(close(f"sampled Q={x - 2.5:+.4f}: V - U(Q+5/2) + (5/4)(Q+5/2)", dev, 0.0, 3 * math.hypot(s1, s2)))
        return out

    def criterion_5(self) -> list[Check]:
        if self.settings.quick:
            raise _Skip
        out = []
        for beta in self.settings.betas:
            A, B = self.scheme("A", beta).params, self.scheme("B", beta).params
            sQ, sw = math.hypot(A.Q_min_err, B.Q_min_err), math.hypot(A.omega_err, B.omega_err)
            out.append(close(f"beta={beta} Q_min A vs B", A.Q_min, B.Q_min, 3 * sQ))
            out.append(at_most(f"beta={beta} 3 sigma(Q_min)", 3 * sQ, 0.02))
            out.append(close(f"beta={beta} omega A vs B", A.omega_beta, B.omega_beta, 3 * sw))
            out.append(at_most(f"beta={beta} 3 sigma(omega)", 3 * sw, 0.02))
        return out

    def criterion_6(self) -> list[Check]:
        out = []
        for beta in self.settings.betas:
            s = self.spectrum(beta)
            r = self.scheme("B", beta, self.production_route).params
            out.append(close(f"beta={beta} Q_min vs oracle <q>", r.Q_min, thermal_expectation_q(s, beta), 0.01))
            C0 = thermal_expectation_q2(s, beta)
            CA = float(epac_autocorrelation(r, [0.0]).values[0].real)
            limit = 0.05 if beta < 1.0 else 0.02
            out.append(at_most(f"beta={beta} |C_AC(0) - C(0)| / C(0)", abs(CA - C0) / C0, limit))
        return out

    def criterion_7(self) -> list[Check]:
        out = []
        margins = []
        for beta in self.settings.betas:
            rep = frequency_enhancement_check(self.scheme("B", beta, "oracle"))
            out.append(at_least(f"beta={beta} oracle route omega_bar - omega_s", rep.margin, 0.0))
            margins.append(rep.margin)
        order = np.argsort(self.settings.betas)
        m = np.asarray(margins)[order]
        for lo, hi, b_lo, b_hi in zip(m[:-1], m[1:], np.sort(self.settings.betas)[:-1], np.sort(self.settings.betas)[1:]):
            out.append(at_most(f"margin at beta={b_lo} below margin at beta={b_hi}", lo - hi, 0.0))
        if not self.settings.quick:
            for beta in self.settings.betas:
                rep = frequency_enhancement_check(self.scheme("B", beta))
                out.append(at_least(f"beta={beta} sampled omega_bar - omega_s", rep.margin, 0.0))
        return out

    def criterion_8(self) -> list[Check]:
        times = self.settings.times
        out = []
        r = self.scheme("B", 10.0, self.production_route).params
        exact = exact_autocorrelation(self.spectrum(10.0), 10.0, times)
        dev = time_average(times, np.abs(epac_autocorrelation(r, times).values.real - exact.values.real))
        out.append(at_most("beta=10 <|Re C_AC - Re C|> / C(0)", dev / exact.values[0].real, 0.05))
        r = self.scheme("B", 0.1, self.production_route).params
        period = 2 * math.pi / r.omega_beta
        exact = exact_autocorrelation(self.spectrum(0.1), 0.1, times)
        out.append(at_least("beta=0.1 exact envelope decay", envelope_decay(exact, period), 0.5))
        out.append(at_most("beta=0.1 EPAC envelope decay", envelope_decay(epac_autocorrelation(r, times), period), 0.01))
        return out

    def criterion_9(self) -> list[Check]:
        out = []
        for beta in self.settings.betas:
            self.scheme("B", beta, "oracle")
        for res in self.cached_results():
            tag = f"{res.route} scheme {res.scheme} beta={res.params.beta}"
            g = res.generating
            out.append(Check(f"{tag}: w convex", 0, 0, 0, g.is_convex()))
            out.append(Check(f"{tag}: V convex", 0, 0, 0, res.curve.is_convex()))
            if res.symmetric_curve is not None:
                out.append(Check(f"{tag}: even V convex", 0, 0, 0, res.symmetric_curve.is_convex()))
            out.append(at_most(f"{tag}: Legendre involution", _involution_error(g), 1e-8))
            p = res.params
            out.append(close(f"{tag}: curve-route Q_min", p.Q_min_curve, p.Q_min, 1e-6 * max(1.0, abs(p.Q_min))))
            out.append(close(f"{tag}: curve-route omega", p.omega_curve, p.omega_beta, 1e-6 * p.omega_beta))
        times = self.settings.times
        sym = np.concatenate([-times[:0:-1], times])
        for beta in self.settings.betas:
            r = self.scheme("B", beta, "oracle").params
            for series in (epac_autocorrelation(r, sym), exact_autocorrelation(self.spectrum(beta), beta, sym)):
                dev = np.max(np.abs(np.conj(series.values) - series.values[::-1]))
                out.append(at_most(f"beta={beta} {series.kind}: C(t)* = C(-t)", dev, 1e-12))
        out.append(Check("seed reproducibility: byte-identical CSV", 0, 0, 0, _reproducible(self.settings.seed)))
        return out

    def criterion_10(self) -> list[Check]:
        ts = self.ts(100.0)
        m = morse_hcl()
        s = solve_bound_states(m, ts, n_states=2)
        w0, De = m.omega0, m.depth
        ref = [w0 * (n + 0.5) - (w0 * (n + 0.5)) ** 2 / (4 * De) for n in (0, 1)]
        out = [
            close("Morse closed-form E0", ref[0], 0.495, 1e-12),
            close("Morse closed-form E1", ref[1], 1.455, 1e-12),
            close("Morse oracle E0", s.energies[0], ref[0], 1e-6),
            close("Morse oracle E1", s.energies[1], ref[1], 1e-6),
        ]
        q = solve_bound_states(hcl_quartic(), ts, n_states=2)
        out.append(close("quartic E0 vs Morse E0", q.energies[0], s.energies[0], 0.002))
        return out

    # -- driver ---------------------------------------------------------

    def run(self, only: list[int] | None = None, report: Callable[[CriterionResult], None] | None = None):
        results = []
        for number in only or sorted(TITLES):
            t0 = time.perf_counter()
            try:
                checks = getattr(self, f"criterion_{number}")()
                res = CriterionResult(number, TITLES[number], tuple(checks))
            except _Skip:
                res = CriterionResult(number, TITLES[number], skipped=True)
            except EpacError as exc:
                res = CriterionResult(number, TITLES[number], error=f"{type(exc).__name__}: {exc}")
            res = CriterionResult(res.number, res.title, res.checks, res.error, res.skipped, time.perf_counter() - t0)
            if report is not None:
                report(res)
            results.append(res)
        return results


class _Skip(Exception):
    """Raised by a criterion that needs sampling when the suite runs in quick mode."""


TITLES = {
    1: "harmonic exactness",
    2: "asymmetric harmonic",
    3: "harmonic effective-potential limits",
    4: "decoupling of the linear term",
    5: "scheme A/B agreement",
    6: "static observables vs oracle",
    7: "frequency enhancement",
    8: "low-temperature dynamics",
    9: "property suites",
    10: "Morse oracle",
}


def _involution_error(g) -> float:
    """max |w(J) - (V*)(J)| over interior nodes, V being the transform of w."""
    Q = np.linspace(g.dw[1], g.dw[-2], 401)
    curve = legendre_transform(g, Q)
    inner = slice(2, -2)
    back = inverse_legendre(curve, g.J[inner])
    return float(np.max(np.abs(back - g.w[inner])))


def _reproducible(seed: int) -> bool:
    cfg = PathEnsembleConfig(beads=16, sweeps=300, burn_in=100, block_size=100, walkers=8, seed=seed)
    ts = ThermoState(2.0)
    grid = default_grid(hcl_even(), ts, points=9)
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for k in range(2):
            table = build_centroid_table(hcl_even(), ts, grid=grid, cfg=cfg)
            paths.append(table.to_csv(Path(tmp) / f"run{k}.csv", {"seed": seed}))
        return io.data_section(paths[0]) == io.data_section(paths[1])
