"""Classical potentials, thermodynamic state and their algebra.

Natural units are used throughout: hbar = k_B = 1.  Polynomial coefficients
supplied as fractions are kept as :class:`fractions.Fraction` so that the
linear-term decomposition is exact; they are converted to float only when a
potential is evaluated.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import ConfigError, NonQuartic

Number = Union[int, float, Fraction]

__all__ = [
    "ThermoState",
    "Polynomial",
    "Morse",
    "Tilted",
    "PotentialModel",
    "LinearDecomposition",
    "evaluate",
    "derivative",
    "is_confining",
    "is_even",
    "decompose_linear",
    "recompose",
    "morse_taylor4",
    "parse_potential",
    "format_potential",
    "named_system",
    "SYSTEMS",
    "harmonic",
    "asym_harmonic",
    "hcl_quartic",
    "hcl_even",
    "hcl_tilted",
    "morse_hcl",
    "even_base",
    "as_polynomial",
]


@dataclass(frozen=True)
class ThermoState:
    beta: float
    mass: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"mass must be positive and finite, got {self.mass}")


def _exact(x: Number) -> Number:
    if isinstance(x, (Fraction, float)):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return float(x)


@dataclass(frozen=True)
class Polynomial:
    """V(q) = sum_k coeffs[k] * q**k  (coeffs[0] is the constant term)."""

    coeffs: tuple[Number, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_exact(c) for c in self.coeffs))

    @classmethod
    def from_linear_up(cls, *a: Number, const: Number = 0) -> "Polynomial":
        """Build from (a1, a2, ..., aK), the ordering of the config grammar."""
        return cls((const, *a))

    @property
    def degree(self) -> int:
        for k in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[k] != 0:
                return k
        return 0

    def coeff(self, k: int) -> Number:
        return self.coeffs[k] if k < len(self.coeffs) else Fraction(0)

    @cached_property
    def _float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs[: self.degree + 1]])

    def __call__(self, q: ArrayLike) -> np.ndarray:
        return evaluate(self, q)


@dataclass(frozen=True)
class Morse:
    """V(q) = depth * (1 - exp(range_ * q))**2, minimum at q = 0."""

    depth: float
    range_: float

    @property
    def omega0(self) -> float:
        """Small-oscillation frequency for unit mass."""
        return abs(self.range_) * math.sqrt(2.0 * self.depth)


@dataclass(frozen=True)
class Tilted:
    """base(q) + f*q + c."""

    base: "PotentialModel"
    f: Number = 0
    c: Number = 0

    def __post_init__(self):
        object.__setattr__(self, "f", _exact(self.f))
        object.__setattr__(self, "c", _exact(self.c))


PotentialModel = Union[Polynomial, Morse, Tilted]


def _horner(c: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.full_like(q, c[-1])
    for a in c[-2::-1]:
        out = out * q + a
    return out


def derivative(p: PotentialModel, q: ArrayLike, order: int = 1) -> np.ndarray:
    """Exact analytic derivative d^order V / dq^order (order 0 is V itself)."""
    q = np.asarray(q, dtype=float)
    if isinstance(p, Polynomial):
        c = p._float
        for _ in range(order):
            c = c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.zeros(1)
        return _horner(c, q)
    if isinstance(p, Morse):
        a, d = p.range_, p.depth
        e = np.exp(a * q)
        # V = d(1 - 2e + e^2);  V^(n) = d(-2 a^n e + (2a)^n e^2)
        if order == 0:
            return d * (1.0 - e) ** 2
        return d * (-2.0 * a**order * e + (2.0 * a) ** order * e * e)
    if isinstance(p, Tilted):
        out = derivative(p.base, q, order)
        if order == 0:
            return out + float(p.f) * q + float(p.c)
        if order == 1:
            return out + float(p.f)
        return out
    raise TypeError(f"unknown potential {p!r}")


def evaluate(p: PotentialModel, q: ArrayLike) -> np.ndarray:
    return derivative(p, q, 0)


def as_polynomial(p: PotentialModel) -> Polynomial | None:
    """Collapse polynomial-based tilts into one Polynomial; None for Morse-based models."""
    if isinstance(p, Polynomial):
        return p
    if isinstance(p, Tilted):
        base = as_polynomial(p.base)
        if base is None:
            return None
        co = [base.coeff(k) for k in range(max(len(base.coeffs), 2))]
        co[0] = co[0] + p.c
        co[1] = co[1] + p.f
        return Polynomial(tuple(co))
    return None


def is_confining(p: PotentialModel) -> bool:
    """True when exp(-beta V) is integrable for every beta and every linear source."""
    if isinstance(p, Polynomial):
        n = p.degree
        return n >= 2 and n % 2 == 0 and p.coeffs[n] > 0
    if isinstance(p, Tilted):
        return is_confining(p.base)
    return False


def is_even(p: PotentialModel) -> bool:
    if isinstance(p, Polynomial):
        return all(c == 0 for c in p.coeffs[1::2])
    if isinstance(p, Tilted):
        return p.f == 0 and is_even(p.base)
    return False


def even_base(p: PotentialModel) -> tuple[PotentialModel, Number] | None:
    """(U, f) when p = U + f q + const with U even; None otherwise."""
    if isinstance(p, Tilted) and is_even(p.base):
        return p.base, p.f
    if is_even(p):
        return p, 0
    return None


@dataclass(frozen=True)
class LinearDecomposition:
    """V(q) = symmetric_part(x) + f*x + c with x = q + shift.

    ``symmetric_part`` holds the even powers only; the constant lives in ``c``.
    """

    shift: Number
    symmetric_part: Polynomial
    f: Number
    c: Number

    @property
    def symmetric_potential(self) -> Polynomial:
        """Even part including the constant (the potential sampled in scheme B)."""
        co = list(self.symmetric_part.coeffs)
        co[0] = co[0] + self.c
        return Polynomial(tuple(co))

    @property
    def tilted(self) -> Tilted:
        return Tilted(self.symmetric_potential, self.f, 0)


def _shift_poly(coeffs: list[Number], s: Number) -> list[Number]:
    """Coefficients in x of P(x - s) where P has coefficients `coeffs` in q."""
    n = len(coeffs)
    out: list[Number] = [Fraction(0)] * n
    for k, a in enumerate(coeffs):
        for j in range(k + 1):
            out[j] = out[j] + a * math.comb(k, j) * (-s) ** (k - j)
    return out


def decompose_linear(p: Polynomial) -> LinearDecomposition:
    """Shift a quartic so its cubic term vanishes and split off the linear part."""
    if not isinstance(p, Polynomial) or p.degree != 4:
        raise NonQuartic(f"decompose_linear needs a degree-4 polynomial, got {p!r}")
    a = [p.coeff(k) for k in range(5)]
    if not a[4] > 0:
        raise NonQuartic("quartic coefficient must be positive")
    s = a[3] / (4 * a[4])
    x = _shift_poly(a, s)
    sym = Polynomial((0 * x[0], 0 * x[1], x[2], 0 * x[3], x[4]))
    return LinearDecomposition(shift=s, symmetric_part=sym, f=x[1], c=x[0])


def recompose(d: LinearDecomposition) -> Polynomial:
    """Inverse of decompose_linear: coefficients in the original variable q."""
    co = list(d.symmetric_part.coeffs) + [0] * (5 - len(d.symmetric_part.coeffs))
    co[0] = co[0] + d.c
    co[1] = co[1] + d.f
    return Polynomial(tuple(_shift_poly(co, -d.shift)))


def morse_taylor4(depth: Number, range_: Number) -> Polynomial:
    """Fourth-order Taylor polynomial of depth*(1 - exp(range_*q))**2 about q = 0."""
    d, a = _exact(depth), _exact(range_)
    if not d > 0:
        raise ValueError("Morse depth must be positive")
    return Polynomial((0 * d, 0 * d, d * a**2, d * a**3, Fraction(7, 12) * d * a**4))


# --------------------------------------------------------------------------
# textual potential specification
#
#   poly(a1, a2, ..., aK)          sum_k a_k q^k
#   morse(De, a)                   De (1 - exp(a q))^2
#   tilt(<spec>, f, c)             <spec> + f q + c
#
# Numbers may be written as integers, fractions (5/4) or decimals.

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][\w-]*)|([-+]?\d+/\d+|[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(.))")


def _number(text: str) -> Number:
    if "/" in text:
        return Fraction(text)
    if re.fullmatch(r"[-+]?\d+", text):
        return Fraction(int(text))
    return float(text)


def parse_potential(text: str) -> PotentialModel:
    tokens = []
    for m in _TOKEN.finditer(text):
        word, num, sym = m.groups()
        if word:
            tokens.append(("w", word))
        elif num:
            tokens.append(("n", num))
        elif sym and not sym.isspace():
            tokens.append(("s", sym))
    pos = 0

    def expect(kind, value=None):
        nonlocal pos
        if pos >= len(tokens):
            raise ConfigError(f"unexpected end of potential spec {text!r}")
        k, v = tokens[pos]
        if k != kind or (value is not None and v != value):
            raise ConfigError(f"unexpected {v!r} in potential spec {text!r}")
        pos += 1
        return v

    def args():
        nonlocal pos
        out = []
        expect("s", "(")
        while True:
            out.append(expr())
            if pos < len(tokens) and tokens[pos] == ("s", ","):
                pos += 1
                continue
            expect("s", ")")
            return out

    def expr():
        if pos < len(tokens) and tokens[pos][0] == "n":
            return _number(expect("n"))
        name = expect("w")
        if name in SYSTEMS and (pos >= len(tokens) or tokens[pos][1] != "("):
            return SYSTEMS[name]()
        a = args()
        if name == "poly":
            if not a or not all(isinstance(x, (int, float, Fraction)) for x in a):
                raise ConfigError("poly(...) takes numeric coefficients a1..aK")
            return Polynomial.from_linear_up(*a)
        if name == "morse":
            if len(a) != 2:
                raise ConfigError("morse(De, a) takes two numbers")
            return Morse(float(a[0]), float(a[1]))
        if name == "tilt":
            if len(a) != 3 or isinstance(a[0], (int, float, Fraction)):
                raise ConfigError("tilt(base, f, c) takes a potential and two numbers")
            return Tilted(a[0], a[1], a[2])
        if name in SYSTEMS:
            return SYSTEMS[name](*a)
        raise ConfigError(f"unknown potential constructor {name!r}")

    result = expr()
    if pos != len(tokens):
        raise ConfigError(f"trailing input in potential spec {text!r}")
    return result


def _fmt(x: Number) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(float(x))


def format_potential(p: PotentialModel) -> str:
    """Inverse of parse_potential."""
    if isinstance(p, Polynomial):
        body = ", ".join(_fmt(p.coeff(k)) for k in range(1, max(p.degree, 1) + 1))
        s = f"poly({body})"
        return s if p.coeff(0) == 0 else f"tilt({s}, 0, {_fmt(p.coeff(0))})"
    if isinstance(p, Morse):
        return f"morse({_fmt(p.depth)}, {_fmt(p.range_)})"
    return f"tilt({format_potential(p.base)}, {_fmt(p.f)}, {_fmt(p.c)})"


def harmonic(omega: Number = 1, mass: Number = 1) -> Polynomial:
    return Polynomial((0, 0, Fraction(1, 2) * _exact(mass) * _exact(omega) ** 2))


def asym_harmonic(f: Number = Fraction(3, 10), omega: Number = 1, mass: Number = 1) -> Tilted:
    return Tilted(harmonic(omega, mass), f, 0)


def hcl_quartic() -> Polynomial:
    """q^2/2 + q^3/10 + q^4/100."""
    return Polynomial((0, 0, Fraction(1, 2), Fraction(1, 10), Fraction(1, 100)))


def hcl_even() -> Polynomial:
    """125/64 + x^2/8 + x^4/100, the even part of the shifted quartic."""
    return Polynomial((Fraction(125, 64), 0, Fraction(1, 8), 0, Fraction(1, 100)))


def hcl_tilted() -> Tilted:
    """The shifted quartic 125/64 - 5x/4 + x^2/8 + x^4/100."""
    return Tilted(hcl_even(), Fraction(-5, 4), 0)


def morse_hcl() -> Morse:
    return Morse(12.5, 0.2)


SYSTEMS = {
    "harmonic": harmonic,
    "asym-harmonic": asym_harmonic,
    "hcl-quartic": hcl_quartic,
    "hcl-even": hcl_even,
    "hcl-tilted": hcl_tilted,
    "morse-hcl": morse_hcl,
}


def named_system(name: str, *args: Number) -> PotentialModel:
    try:
        return SYSTEMS[name](*args)
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}") from None
