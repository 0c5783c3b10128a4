"""Command line: effective-potential curves, correlation functions and the acceptance run.

Config files are plain text, one ``key = value`` per line; ``#`` starts a
comment.  Lists are comma separated.  Recognised keys::

    system        registered name, optionally with arguments: asym-harmonic(0.3)
    potential     explicit potential spec (overrides system), e.g. poly(0, 1/2, 1/10, 1/100)
    betas         inverse temperatures, default 0.1, 1, 10, 100
    mass          particle mass, default 1
    beads         beads per path; omitted means chosen per beta
    sweeps, burn_in, block_size, walkers, seed, grid_points, n_boot
    constant_mode oracle_pin | harmonic_TI
    scheme        A | B (default B)
    route         sampled | oracle | analytic (default sampled)
    q_window      lo, hi: Q range of the emitted V_beta curves
    j_window      lo, hi: J range of the emitted w(J) tables
    curve_points  points per emitted V_beta curve
    t_max, t_step time grid of the correlation functions
    outdir        output directory
    pin_zero      true | false: shift every emitted curve so its minimum is 0
    quick         true | false: verify without sampling

Any key can also be given on the command line as ``--set key=value``.
Exit status: 0 success, 1 failed acceptance or propagated error, 2 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .acceptance import BENCHMARK_BETAS, Suite, SuiteSettings
from .epac import (
    ROUTES,
    SchemeResult,
    epac_autocorrelation,
    harmonic_effective_classical_potential,
    run_scheme,
    time_average,
)
from .errors import ConfigError, EpacError
from .model import PotentialModel, ThermoState, as_polynomial, parse_potential
from .oracle import exact_autocorrelation, solve_bound_states, thermal_expectation_q, thermal_expectation_q2
from .sampler import CONSTANT_MODES, PathEnsembleConfig
from .transform import legendre_transform


@dataclass(frozen=True)
class RunConfig:
    system: str = "hcl-quartic"
    potential: str = ""
    betas: tuple[float, ...] = BENCHMARK_BETAS
    mass: float = 1.0
    beads: int | None = None
    sweeps: int = 1400
    burn_in: int = 200
    block_size: int = 200
    walkers: int = 64
    seed: int = 0
    grid_points: int = 21
    n_boot: int = 64
    constant_mode: str = "oracle_pin"
    scheme: str = "B"
    route: str = "sampled"
    q_window: tuple[float, float] | None = None
    j_window: tuple[float, float] | None = None
    curve_points: int = 161
    t_max: float = 20.0
    t_step: float = 0.05
    outdir: str = "epac-out"
    pin_zero: bool = False
    quick: bool = False

    def __post_init__(self):
        if not self.betas or any(not (b > 0 and math.isfinite(b)) for b in self.betas):
            raise ConfigError("betas must be a non-empty list of positive numbers")
        if not self.mass > 0:
            raise ConfigError("mass must be positive")
        if self.scheme not in ("A", "B"):
            raise ConfigError("scheme must be A or B")
        if self.route not in ROUTES:
            raise ConfigError(f"route must be one of {ROUTES}")
        if self.constant_mode not in CONSTANT_MODES:
            raise ConfigError(f"constant_mode must be one of {CONSTANT_MODES}")
        for name in ("q_window", "j_window"):
            win = getattr(self, name)
            if win is not None and not win[0] < win[1]:
                raise ConfigError(f"{name} must be an increasing pair")
        if self.grid_points < 5 or self.curve_points < 5:
            raise ConfigError("grid_points and curve_points must be at least 5")
        if not (self.t_step > 0 and self.t_max > 0):
            raise ConfigError("t_max and t_step must be positive")
        if self.n_boot == 1 or self.n_boot < 0:
            raise ConfigError("n_boot must be 0 or at least 2")
        try:
            self.sampler(self.betas[0])
        except ValueError as exc:
            raise ConfigError(f"sampler settings: {exc}") from None
        self.model()

    # -- derived --------------------------------------------------------

    def model(self) -> PotentialModel:
        return parse_potential(self.potential or self.system)

    @property
    def label(self) -> str:
        return re.sub(r"[^A-Za-z0-9.+-]+", "_", self.system).strip("_")

    def sampler(self, beta: float) -> PathEnsembleConfig:
        kw = dict(
            sweeps=self.sweeps, burn_in=self.burn_in, block_size=self.block_size, walkers=self.walkers, seed=self.seed
        )
        if self.beads is not None:
            kw["beads"] = self.beads
        return PathEnsembleConfig.for_beta(beta, **kw)

    @property
    def times(self) -> np.ndarray:
        return self.t_step * np.arange(int(round(self.t_max / self.t_step)) + 1)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hash(self) -> str:
        # where the files go does not change what is in them
        d = self.as_dict()
        del d["outdir"]
        return io.config_hash(d)

    def meta(self, **extra) -> dict:
        return dict(
            config_hash=self.hash, seed=self.seed, system=self.system, potential=self.potential or self.system, **extra
        )

    def suite_settings(self) -> SuiteSettings:
        return SuiteSettings(
            betas=self.betas,
            mass=self.mass,
            sweeps=self.sweeps,
            burn_in=self.burn_in,
            block_size=self.block_size,
            walkers=self.walkers,
            seed=self.seed,
            n_boot=self.n_boot,
            t_max=self.t_max,
            t_step=self.t_step,
            quick=self.quick,
            beads=self.beads,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, text: str):
    text = text.strip()
    try:
        if key == "betas":
            return tuple(float(x) for x in text.replace(",", " ").split())
        if key in ("q_window", "j_window"):
            if text.lower() in ("", "none"):
                return None
            lo, hi = (float(x) for x in text.replace(",", " ").split())
            return (lo, hi)
        if key == "beads":
            return None if text.lower() in ("", "auto", "none") else int(text)
        if key in ("pin_zero", "quick"):
            if text.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "yes", "1")
        kind = type(getattr(RunConfig, key))
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        if key not in _FIELDS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _convert(key, val)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path: str | None, overrides: list[str]) -> RunConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    text += "\n" + "\n".join(overrides)
    return parse_config(text)


# ---------------------------------------------------------------------------
# experiments


def _scheme(cfg: RunConfig, beta: float) -> SchemeResult:
    ts = ThermoState(beta, cfg.mass)
    return run_scheme(
        cfg.scheme,
        cfg.model(),
        ts,
        cfg=cfg.sampler(beta) if cfg.route == "sampled" else None,
        route=cfg.route,
        n_boot=cfg.n_boot,
        curve_points=cfg.curve_points,
        constant_mode=cfg.constant_mode,
        grid_points=cfg.grid_points,
    )


def _centroid_rows(cfg: RunConfig, res: SchemeResult):
    """(q_c, V^c, err) for the configured potential, or None when no centroid table exists."""
    if res.table is not None:
        t = res.table
        if res.decomposition is None:
            return t.grid, t.values, t.std_err
        # the linear term passes through the centroid integral unchanged
        s, f = float(res.decomposition.shift), float(res.decomposition.f)
        return t.grid - s, t.values + f * t.grid, t.std_err
    poly = as_polynomial(cfg.model())
    if res.route == "analytic" and poly is not None and poly.degree == 2:
        omega = math.sqrt(2.0 * float(poly.coeff(2)) / cfg.mass)
        ts = ThermoState(res.params.beta, cfg.mass)
        q = res.curve.Q
        V = harmonic_effective_classical_potential(omega, ts, q, float(poly.coeff(1))) + float(poly.coeff(0))
        return q, V, np.zeros_like(q)
    return None


def _effective_curve(cfg: RunConfig, res: SchemeResult):
    if cfg.q_window is None:
        return res.curve
    Q = np.linspace(cfg.q_window[0], cfg.q_window[1], cfg.curve_points)
    if res.decomposition is None:
        return legendre_transform(res.generating, Q)
    s, f = float(res.decomposition.shift), float(res.decomposition.f)
    return legendre_transform(res.generating, Q + s).shifted(dQ=-s, f=f, c=f * s)


def _beta_tag(beta: float) -> str:
    return f"beta{beta:g}"


def cmd_effpot(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.outdir)
    files, rows = [], []
    for beta in cfg.betas:
        res = _scheme(cfg, beta)
        meta = cfg.meta(beta=beta, scheme=cfg.scheme, route=cfg.route)
        stem = f"effpot_{cfg.label}_{_beta_tag(beta)}"
        centroid = _centroid_rows(cfg, res)
        if centroid is not None:
            q, V, err = centroid
            V = V - V.min() if cfg.pin_zero else V
            rows_c = zip(q, V, err)
            files.append(io.write_csv(out / f"{stem}_Vc.csv", ["q_c", "V", "err"], rows_c, dict(meta, pin_zero=cfg.pin_zero)))
        curve = _effective_curve(cfg, res)
        files.append(curve.to_csv(out / f"{stem}_Vbeta.csv", meta, pin_zero=cfg.pin_zero))
        g = res.generating
        keep = np.ones_like(g.J, dtype=bool)
        if cfg.j_window is not None:
            keep = (g.J >= cfg.j_window[0]) & (g.J <= cfg.j_window[1])
        w_rows = zip(g.J[keep], g.w[keep], g.dw[keep], g.d2w[keep])
        files.append(io.write_csv(out / f"{stem}_w.csv", ["J", "w", "dw", "d2w"], w_rows, dict(meta, source=g.source)))
        rows.append(res.summary_row(cfg.label))
    columns = list(rows[0])
    files.append(io.write_csv(out / f"schemes_{cfg.label}.csv", columns, ([r[c] for c in columns] for r in rows), cfg.meta()))
    return files


def cmd_correlate(cfg: RunConfig) -> list[Path]:
    out = Path(cfg.outdir)
    times = cfg.times
    files = []
    p = cfg.model()
    for beta in cfg.betas:
        res = _scheme(cfg, beta)
        ts = ThermoState(beta, cfg.mass)
        meta = cfg.meta(beta=beta, scheme=cfg.scheme, route=cfg.route, Q_min=res.params.Q_min, omega_beta=res.params.omega_beta)
        stem = f"correlate_{cfg.label}_{_beta_tag(beta)}"
        ep = epac_autocorrelation(res.params, times)
        ex = exact_autocorrelation(solve_bound_states(p, ts), beta, times)
        files.append(ep.to_csv(out / f"{stem}_epac.csv", meta))
        files.append(ex.to_csv(out / f"{stem}_exact.csv", meta))
        overlay = zip(times, ep.values.real, ep.values.imag, ex.values.real, ex.values.imag, ep.values.real - ex.values.real)
        cols = ["t", "re_epac", "im_epac", "re_exact", "im_exact", "re_diff"]
        files.append(io.write_csv(out / f"{stem}_overlay.csv", cols, overlay, meta))
    return files


# ---------------------------------------------------------------------------
# comparison report


@dataclass(frozen=True)
class ComparisonRow:
    beta: float
    quantity: str
    epac: float
    oracle: float
    deviation: float
    tolerance: float | None

    @property
    def status(self) -> str:
        if self.tolerance is None:
            return "report"
        return "pass" if self.deviation <= self.tolerance else "fail"


@dataclass(frozen=True)
class ComparisonReport:
    system: str
    rows: tuple[ComparisonRow, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(r.status != "fail" for r in self.rows)

    def to_csv(self, path, meta=None):
        cols = ["beta", "quantity", "epac", "oracle", "deviation", "tolerance", "status"]
        body = (
            (r.beta, r.quantity, r.epac, r.oracle, r.deviation, "" if r.tolerance is None else r.tolerance, r.status)
            for r in self.rows
        )
        return io.write_csv(path, cols, body, dict(meta or {}, system=self.system))


def comparison_report(suite: Suite) -> ComparisonReport:
    """EPAC (scheme B, production route) against the spectrum of the quartic, per beta."""
    s = suite.settings
    times = s.times
    rows = []
    for beta in s.betas:
        res = suite.scheme("B", beta, suite.production_route)
        exact_route = suite.scheme("B", beta, "oracle").params
        spec = suite.spectrum(beta)
        p = res.params
        mean = thermal_expectation_q(spec, beta)
        rows.append(ComparisonRow(beta, "Q_min", p.Q_min, mean, abs(p.Q_min - mean), 0.01))
        rows.append(
            ComparisonRow(beta, "omega_beta", p.omega_beta, exact_route.omega_beta, abs(p.omega_beta - exact_route.omega_beta), None)
        )
        rows.append(ComparisonRow(beta, "omega_s", p.omega_s, exact_route.omega_s, abs(p.omega_s - exact_route.omega_s), None))
        C0 = thermal_expectation_q2(spec, beta)
        CA = float(epac_autocorrelation(p, [0.0]).values[0].real)
        rows.append(ComparisonRow(beta, "C(0) relative", CA, C0, abs(CA - C0) / C0, 0.05 if beta < 1 else 0.02))
        # -w(0) is the free energy; it approaches E0 only once excited states are frozen out
        E0 = float(spec.energies[0])
        rows.append(ComparisonRow(beta, "E0", p.E0, E0, abs(p.E0 - E0), 0.002 if beta >= 10 else None))
        ex = exact_autocorrelation(spec, beta, times)
        dev = time_average(times, np.abs(epac_autocorrelation(p, times).values.real - ex.values.real)) / C0
        rows.append(ComparisonRow(beta, "<|dRe C|>/C(0)", dev, 0.0, dev, 0.05 if beta == 10 else None))
    return ComparisonReport("hcl-quartic", tuple(rows))


def cmd_verify(cfg: RunConfig) -> int:
    out = Path(cfg.outdir)
    suite = Suite(cfg.suite_settings())

    def report(res):
        print(res.line(), flush=True)
        for c in res.failures():
            print(c.line(), flush=True)

    results = suite.run(report=report)
    rows = [
        (r.number, r.title, r.status, c.label, c.value, c.reference, c.tolerance, c.passed)
        for r in results
        for c in (r.checks or ())
    ]
    rows += [(r.number, r.title, r.status, r.error or "skipped", "", "", "", False) for r in results if r.error or r.skipped]
    cols = ["criterion", "title", "status", "check", "value", "reference", "tolerance", "passed"]
    io.write_csv(out / "acceptance.csv", cols, rows, cfg.meta(quick=cfg.quick))
    comp = comparison_report(suite)
    comp.to_csv(out / "comparison.csv", cfg.meta(route=suite.production_route))
    ok = all(r.passed for r in results) and comp.passed
    failed = [r.number for r in results if not r.passed]
    print(f"verify: {'PASS' if ok else 'FAIL'}" + (f" (failed criteria: {failed})" if failed else ""))
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epac", description=__doc__.split("\n", 1)[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("effpot", "write V^c, V_beta and w(J) curves per beta"),
        ("correlate", "write EPAC and exact correlation functions per beta"),
        ("verify", "run the acceptance matrix and write the comparison report"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", nargs="?", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--outdir", help="output directory")
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="analytic and oracle checks only, no sampling")
        else:
            p.add_argument("--pin-zero", action="store_true", help="shift curves so their minimum is 0")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.outdir:
        overrides.append(f"outdir = {args.outdir}")
    if getattr(args, "quick", False):
        overrides.append("quick = true")
    if getattr(args, "pin_zero", False):
        overrides.append("pin_zero = true")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return cmd_verify(cfg)
        files = cmd_effpot(cfg) if args.command == "effpot" else cmd_correlate(cfg)
    except (EpacError, ValueError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
