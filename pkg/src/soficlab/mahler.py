"""Logarithmic Mahler measure of integer Laurent polynomials."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy

VARIABLES = ("x", "y", "z", "w")
ZERO_THRESHOLD = 1e-14
LOW_CONFIDENCE_FRACTION = 1e-3
MIN_GRID = 16
CHUNK_POINTS = 1 << 20


class ZeroPolynomial(ValueError):
    pass


@dataclass(frozen=True)
class LaurentPoly:
    """Integer Laurent polynomial in d variables, stored as {exponent tuple: coefficient}."""

    d: int
    terms: dict = field(hash=False)

    def __init__(self, d: int, terms: dict):
        if not 1 <= d <= len(VARIABLES):
            raise ValueError(f"d must be between 1 and {len(VARIABLES)}")
        clean = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != d:
                raise ValueError(f"exponent {exps} has wrong length for d={d}")
            if int(c) != c:
                raise ValueError(f"non-integer coefficient {c}")
            c = int(c)
            if c:
                clean[exps] = clean.get(exps, 0) + c
                if clean[exps] == 0:
                    del clean[exps]
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "terms", clean)

    @classmethod
    def constant(cls, c: int, d: int = 1) -> "LaurentPoly":
        return cls(d, {(0,) * d: c})

    @classmethod
    def from_coeffs(cls, coeffs) -> "LaurentPoly":
        """One-variable polynomial from ascending coefficients c0 + c1 x + ..."""
        return cls(1, {(i,): c for i, c in enumerate(coeffs)})

    @classmethod
    def parse(cls, text: str, d: int | None = None) -> "LaurentPoly":
        """Parse e.g. "x^2 - x - 1" or "1 + x + y + 1/x".

        d defaults to the index of the highest variable used (at least 1).
        """
        syms = sympy.symbols(VARIABLES)
        local = dict(zip(VARIABLES, syms))
        try:
            expr = sympy.sympify(text.replace("^", "**"), locals=local)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"cannot parse polynomial {text!r}") from exc
        unknown = expr.free_symbols - set(syms)
        if unknown:
            raise ValueError(f"unknown variables {sorted(map(str, unknown))}; use x, y, z, w")
        if d is None:
            used = [i for i, s in enumerate(syms) if s in expr.free_symbols]
            d = max(used) + 1 if used else 1
        terms: dict = {}
        for term in sympy.Add.make_args(sympy.expand(expr)):
            coeff, mono = term.as_coeff_Mul()
            if not coeff.is_Integer:
                raise ValueError(f"non-integer coefficient in {term}")
            exps = [0] * d
            for base, e in mono.as_powers_dict().items():
                if base == 1:
                    continue
                if base not in syms[:d] or not e.is_Integer:
                    raise ValueError(f"term {term} is not a Laurent monomial in {VARIABLES[:d]}")
                exps[syms.index(base)] += int(e)
            key = tuple(exps)
            terms[key] = terms.get(key, 0) + int(coeff)
        return cls(d, terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __mul__(self, other: "LaurentPoly") -> "LaurentPoly":
        if isinstance(other, int):
            return LaurentPoly(self.d, {e: c * other for e, c in self.terms.items()})
        if other.d != self.d:
            raise ValueError("variable counts differ")
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0) + c1 * c2
        return LaurentPoly(self.d, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, LaurentPoly) and self.d == other.d and self.terms == other.terms

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for exps, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"{v}^{e}" if e != 1 else v for v, e in zip(VARIABLES, exps) if e)
            if not mono:
                parts.append(str(c))
            else:
                parts.append(mono if c == 1 else f"-{mono}" if c == -1 else f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        """Values at exp(2 pi i theta); theta has shape (..., d)."""
        theta = np.asarray(theta, dtype=float)
        exps = np.array(list(self.terms), dtype=float)
        coeffs = np.array(list(self.terms.values()), dtype=float)
        phase = np.exp(2j * np.pi * (theta @ exps.T))
        return phase @ coeffs


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    grid: int
    points: int
    excluded: int
    low_confidence: bool

    def __float__(self):
        return self.value


def _require_nonzero(f: LaurentPoly):
    if f.is_zero():
        raise ZeroPolynomial("log-Mahler measure of the zero polynomial is undefined")


def log_mahler_quadrature(f: LaurentPoly, grid: int = 1 << 12) -> QuadratureResult:
    """Midpoint-rule mean of ln|f| over the d-torus with grid points per axis.

    Points where |f| falls below the zero threshold are dropped; if more than
    0.1% of points are dropped the result is flagged low-confidence.
    """
    _require_nonzero(f)
    if grid < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}")
    d = f.d
    total = grid ** d
    axis = (np.arange(grid) + 0.5) / grid
    # chunk over the leading axes so memory stays bounded
    inner = 1
    lead = d
    while lead > 0 and inner * grid <= CHUNK_POINTS:
        inner *= grid
        lead -= 1
    inner_pts = np.stack(np.meshgrid(*([axis] * (d - lead)), indexing="ij"), axis=-1).reshape(-1, d - lead)
    sums = []
    excluded = 0
    for prefix in np.ndindex(*([grid] * lead)):
        pts = np.concatenate([np.broadcast_to(axis[list(prefix)], (len(inner_pts), lead)), inner_pts], axis=1)
        mag = np.abs(f.evaluate(pts))
        keep = mag >= ZERO_THRESHOLD
        excluded += int(np.count_nonzero(~keep))
        sums.append(np.sum(np.log(mag[keep])))
    value = float(np.sum(sums)) / (total - excluded) if total > excluded else float("-inf")
    return QuadratureResult(value, grid, total, excluded, excluded > LOW_CONFIDENCE_FRACTION * total)


@dataclass(frozen=True)
class RootsResult:
    value: float
    leading: int
    roots: np.ndarray
    residuals: np.ndarray

    def __float__(self):
        return self.value


def log_mahler_roots(f: LaurentPoly) -> RootsResult:
    """ln|leading coeff| + sum over roots of max(0, ln|root|), for one variable."""
    _require_nonzero(f)
    if f.d != 1:
        raise ValueError("the root formula needs a one-variable polynomial")
    lo = min(e[0] for e in f.terms)
    hi = max(e[0] for e in f.terms)
    coeffs = np.zeros(hi - lo + 1)
    for (e,), c in f.terms.items():
        coeffs[e - lo] = c
    desc = coeffs[::-1]
    roots = np.roots(desc) if hi > lo else np.zeros(0, dtype=complex)
    residuals = np.abs(np.polyval(desc, roots)) if len(roots) else np.zeros(0)
    leading = int(desc[0])
    value = float(np.log(abs(leading)) + np.sum(np.maximum(0.0, np.log(np.abs(roots)))))
    return RootsResult(value, leading, roots, residuals)


def multiplicativity_check(f: LaurentPoly, g: LaurentPoly) -> float:
    """|M(fg) - M(f) - M(g)| using the root formula."""
    return abs(log_mahler_roots(f * g).value - log_mahler_roots(f).value - log_mahler_roots(g).value)


def random_integer_quadratic(rng: np.random.Generator, bound: int = 9, margin: float = 1e-3) -> LaurentPoly:
    """Integer quadratic with nonzero leading coefficient and no root within margin of the unit circle."""
    while True:
        c = rng.integers(-bound, bound + 1, size=3)
        if c[2] == 0 or c[0] == 0:
            continue
        roots = np.roots(c[::-1].astype(float))
        if np.all(np.abs(np.abs(roots) - 1.0) > margin):
            return LaurentPoly.from_coeffs(c.tolist())
