"""Relativity premiums and Loimaranta efficiency.

Four estimators of the per-level relativity are provided:

* ``bayes-claims`` -- posterior mean of the risk given the claim count,
  averaged over the predictive law of the count (the tabulated convention);
* ``bayes-level`` -- posterior mean of the risk given the occupied level;
* ``ordinary-linear`` -- the least-squares line ``alpha + beta * l`` of
  the risk on the level (Gilde & Sundt);
* ``optimal-linear`` -- the line closest, in weighted mean square, to both
  Bayes relativities simultaneously.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .bms import BonusMalusSystem, level_distribution, level_mass, steady_state_at
from .distributions import ClaimCountModel, GammaComponent, GammaMixturePrior, Poisson, ZIPoisson
from .errors import (
    ClassCViolationWarning,
    DegenerateDistributionError,
    DomainError,
    UnreachableLevelError,
)
from .numerics import DEFAULT_QUADRATURE, QuadratureSpec, integrate_halfline, log_derivative

__all__ = [
    "METHODS",
    "RelativityTable",
    "WeightSetting",
    "bayes_relativity_claims",
    "expected_bayes_relativity_claims",
    "bayes_relativity_level",
    "ordinary_linear_coefficients",
    "optimal_linear_coefficients",
    "weighted_mse",
    "fit_xi",
    "loimaranta_efficiency",
    "efficiency_sweep",
    "EfficiencySweep",
    "relativity_tables",
]

METHODS = ("bayes-claims", "bayes-level", "ordinary-linear", "optimal-linear")


@dataclass(frozen=True)
class RelativityTable:
    """Per-level relativities produced by one method.

    For the linear methods ``alpha`` and ``beta`` are set and
    ``values[l-1] == alpha + beta * l`` exactly.
    """

    method: str
    values: tuple
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown relativity method {self.method!r}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if any(not (v > 0) for v in vals):
            raise DomainError(f"{self.method} relativities must be strictly positive: {vals}")
        if self.method.endswith("linear") and (self.alpha is None or self.beta is None):
            raise DomainError("linear relativity tables need alpha and beta")

    @classmethod
    def linear(cls, method: str, alpha: float, beta: float, levels: int):
        vals = tuple(alpha + beta * l for l in range(1, levels + 1))
        return cls(method, vals, float(alpha), float(beta))

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


@dataclass(frozen=True)
class WeightSetting:
    """Weight ``xi`` placed on the claims-based Bayes target (``1 - xi`` on the level-based one)."""

    xi: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.xi <= 1.0):
            raise DomainError(f"xi must lie in [0, 1], got {self.xi}")


def _check_gamma_args(a, b, lam):
    if not (a > 0 and b > 0 and lam > 0):
        raise DomainError(f"need a, b, lambda > 0, got a={a}, b={b}, lambda={lam}")


def bayes_relativity_claims(n: int, a: float, b: float, lam: float, model: ClaimCountModel) -> float:
    """Posterior mean of ``Theta`` given ``N = n`` claims, prior Gamma(a, b), rate ``lam * Theta``.

    For ZIP counts the zero-claim posterior mixes the inflated point mass
    (which carries no information on ``Theta``) with the Poisson branch::

        a [p b^(-a-1) + (1-p)(lam+b)^(-a-1)] / [p b^(-a) + (1-p)(lam+b)^(-a)]

    computed in log space.  For ``n >= 1`` the ZIP and Poisson answers agree.
    """
    _check_gamma_args(a, b, lam)
    if n < 0:
        raise DomainError(f"claim count must be >= 0, got {n}")
    if isinstance(model, ZIPoisson) and n == 0:
        p = model.p
        if p == 0:
            return a / (lam + b)
        if p == 1:
            return a / b
        lp, lq = math.log(p), math.log1p(-p)
        num = np.logaddexp(lp - (a + 1) * math.log(b), lq - (a + 1) * math.log(lam + b))
        den = np.logaddexp(lp - a * math.log(b), lq - a * math.log(lam + b))
        return a * math.exp(num - den)
    if not isinstance(model, (Poisson, ZIPoisson)):
        raise DomainError(f"unsupported claim count model {model!r}")
    return (n + a) / (lam + b)


def _predictive_pmf(n, a, b, lam, model):
    # Poisson-Gamma predictive is negative binomial; ZIP inflates zero.
    n = np.asarray(n, dtype=float)
    lognb = (
        gammaln(n + a) - gammaln(a) - gammaln(n + 1)
        + a * math.log(b / (b + lam)) + n * math.log(lam / (b + lam))
    )
    nb = np.exp(lognb)
    if isinstance(model, ZIPoisson):
        return np.where(n == 0, model.p + (1 - model.p) * nb, (1 - model.p) * nb)
    return nb


def expected_bayes_relativity_claims(
    a: float, b: float, lam: float, model: ClaimCountModel, tail_tol: float = 1e-17
) -> float:
    """Average of :func:`bayes_relativity_claims` over the predictive law of ``N``.

    Equals ``a / b`` for any count model by the tower property; for Poisson
    this is returned in closed form, for ZIP the predictive sum is carried out
    past the mode until a term's mass drops below ``tail_tol``.
    """
    _check_gamma_args(a, b, lam)
    if isinstance(model, Poisson):
        return a / b
    total = 0.0
    mass = 0.0
    n = 0
    while True:
        w = float(_predictive_pmf(n, a, b, lam, model))
        total += w * bayes_relativity_claims(n, a, b, lam, model)
        mass += w
        n += 1
        if w < tail_tol and n > (a / b) * lam + 1:
            break
        if n > 100000:
            break
    return total / mass


def bayes_relativity_level(
    level: int,
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    lam: float,
    prior: GammaComponent,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """``E(Theta | L = level)`` under the prior ``Gamma(a_l, b_l)``.

    Ratio of ``int theta pi_l(lam theta) dF`` to ``int pi_l(lam theta) dF``.
    """
    if not 1 <= level <= bms.levels:
        raise DomainError(f"level {level} outside [1, {bms.levels}]")
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    idx = level - 1

    def log_den(theta):
        pi = steady_state_at(bms, model, lam * theta)[:, idx]
        with np.errstate(divide="ignore"):
            return np.log(pi) + prior.logpdf(theta)

    def log_num(theta):
        with np.errstate(divide="ignore"):
            return log_den(theta) + np.log(theta)

    den = integrate_halfline(log_den, spec)
    if den.sign == 0 or den.log_abs < math.log(1e-300):
        raise UnreachableLevelError(f"level {level} has no steady-state mass under {prior}")
    num = integrate_halfline(log_num, spec)
    return (num / den).value


def _level_moments(P):
    P = np.asarray(P, dtype=float)
    L = np.arange(1, len(P) + 1, dtype=float)
    EL = float(P @ L)
    VL = float(P @ (L - EL) ** 2)
    return L, EL, VL


def ordinary_linear_coefficients(
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    lam: float,
    prior: GammaMixturePrior,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    P=None,
) -> tuple[float, float]:
    """Gilde-Sundt line: ``beta = Cov(Theta, L) / Var(L)``, ``alpha = E(Theta) - beta E(L)``.

    ``P`` may be supplied to reuse a level distribution already computed for
    the same inputs.
    """
    if P is None:
        P = level_distribution(bms, model, lam, prior, spec)
    L, EL, VL = _level_moments(P)
    if VL <= 1e-300:
        raise DegenerateDistributionError("Var(L) = 0; the level distribution is degenerate")
    e_theta = prior.mean
    joint = np.array(
        [level_mass(bms, model, lam, prior, l, 1, spec) for l in range(1, bms.levels + 1)]
    )
    cov = float(L @ joint) - e_theta * EL
    beta = cov / VL
    alpha = e_theta - beta * EL
    return alpha, beta


def optimal_linear_coefficients(
    r1: Sequence[float],
    r2: Sequence[float],
    P: Sequence[float],
    xi: WeightSetting | float = 0.5,
) -> tuple[float, float]:
    """Minimiser of ``xi E(r1_L - a - b L)^2 + (1 - xi) E(r2_L - a - b L)^2``.

    All moments of ``L`` are taken with the weights ``P(L = l)``.  A negative
    slope is returned as is, with a :class:`ClassCViolationWarning`.
    """
    w = xi if isinstance(xi, WeightSetting) else WeightSetting(float(xi))
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    P = np.asarray(P, dtype=float)
    if not (r1.shape == r2.shape == P.shape):
        raise DomainError("r1, r2 and P must have the same length")
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-8:
        raise DomainError("P must be a probability vector")
    L, EL, VL = _level_moments(P)
    if VL <= 1e-300:
        raise DegenerateDistributionError("Var(L) = 0; the level distribution is degenerate")
    target = w.xi * r1 + (1.0 - w.xi) * r2
    e_target = float(P @ target)
    cov = float(P @ ((L - EL) * target))
    beta = cov / VL
    alpha = e_target - beta * EL
    if beta < 0:
        warnings.warn(
            f"optimal linear slope {beta:.4g} < 0 lies outside the class C",
            ClassCViolationWarning,
            stacklevel=2,
        )
    return alpha, beta


def weighted_mse(alpha, beta, r1, r2, P, xi) -> float:
    """Objective minimised by :func:`optimal_linear_coefficients`."""
    r1, r2, P = (np.asarray(x, dtype=float) for x in (r1, r2, P))
    lin = alpha + beta * np.arange(1, len(P) + 1)
    return float(xi * (P @ (r1 - lin) ** 2) + (1 - xi) * (P @ (r2 - lin) ** 2))


def fit_xi(r1, r2, P, reference, step: float = 1e-3):
    """Grid search for the ``xi`` whose optimal line is closest (max-norm) to ``reference``.

    Returns ``(xi, max_abs_deviation)``.
    """
    reference = np.asarray(reference, dtype=float)
    L = np.arange(1, len(P) + 1)
    best = (None, math.inf)
    count = int(round(1.0 / step))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClassCViolationWarning)
        for i in range(count + 1):
            xi = i / count
            a, b = optimal_linear_coefficients(r1, r2, P, xi)
            dev = float(np.max(np.abs(a + b * L - reference)))
            if dev < best[1]:
                best = (xi, dev)
    return best


# ---------------------------------------------------------------------------
# Loimaranta efficiency
# ---------------------------------------------------------------------------


def _values(r) -> np.ndarray:
    if isinstance(r, RelativityTable):
        return r.as_array()
    return np.asarray(r, dtype=float)


def mean_relativity(r, bms: BonusMalusSystem, model: ClaimCountModel, freq: float) -> float:
    """Stationary mean relativity ``sum_l r_l pi_l(freq)``."""
    pi = steady_state_at(bms, model, np.array([freq]))[0]
    return float(pi @ _values(r))


def loimaranta_efficiency(
    r, bms: BonusMalusSystem, model: ClaimCountModel, freq: float, h: float = 1e-4
) -> float:
    """Elasticity ``d ln R(freq) / d ln freq`` of the stationary mean relativity."""
    vals = _values(r)
    if vals.shape != (bms.levels,):
        raise DomainError(f"need {bms.levels} relativities, got {vals.shape}")
    if not freq > 0:
        raise DomainError(f"claim frequency must be positive, got {freq}")

    def R(x):
        v = mean_relativity(vals, bms, model, x)
        if not v > 0:
            raise DomainError(f"mean relativity {v} is not positive at frequency {x}")
        return v

    return log_derivative(R, freq, h)


@dataclass(frozen=True)
class EfficiencySweep:
    """Efficiency curves over a frequency grid, one column per method."""

    grid: tuple
    curves: Mapping = field(default_factory=dict)

    def rows(self):
        methods = list(self.curves)
        for i, x in enumerate(self.grid):
            yield (x, *(self.curves[m][i] for m in methods))

    @property
    def methods(self):
        return tuple(self.curves)


def efficiency_sweep(
    tables: Mapping[str, object] | Sequence[RelativityTable],
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    grid: Sequence[float],
    h: float = 1e-4,
) -> EfficiencySweep:
    """Loimaranta efficiency of several relativity tables over ``grid``."""
    grid = [float(x) for x in grid]
    if not grid:
        raise DomainError("efficiency sweep needs a non-empty grid")
    if any(x <= 0 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid must be strictly positive and strictly increasing")
    if not isinstance(tables, Mapping):
        tables = {t.method: t for t in tables}
    curves = {
        name: tuple(loimaranta_efficiency(t, bms, model, x, h) for x in grid)
        for name, t in tables.items()
    }
    return EfficiencySweep(tuple(grid), curves)


# ---------------------------------------------------------------------------
# All four tables at once
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelativityResult:
    """Level distribution plus the four relativity tables for one setting."""

    P: tuple
    tables: Mapping
    xi: float
    lam: float
    per_level_priors: tuple

    def __getitem__(self, method):
        return self.tables[method]


def relativity_tables(
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    lam: float,
    prior: GammaMixturePrior,
    xi: float = 0.5,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> RelativityResult:
    """Compute ``P(L = l)`` and all four relativity tables.

    Component ``l`` of ``prior`` serves as the prior of level ``l``, so the
    prior must have exactly one component per level.
    """
    if len(prior) != bms.levels:
        raise DomainError(
            f"prior has {len(prior)} components but the BMS has {bms.levels} levels"
        )
    P = level_distribution(bms, model, lam, prior, spec)
    comps = prior.components
    r1 = [expected_bayes_relativity_claims(c.shape, c.rate, lam, model) for c in comps]
    r2 = [bayes_relativity_level(l, bms, model, lam, c, spec) for l, c in enumerate(comps, 1)]
    a_lin, b_lin = ordinary_linear_coefficients(bms, model, lam, prior, spec, P=P)
    a_opt, b_opt = optimal_linear_coefficients(r1, r2, P, xi)
    s = bms.levels
    tables = {
        "bayes-claims": RelativityTable("bayes-claims", tuple(r1)),
        "bayes-level": RelativityTable("bayes-level", tuple(r2)),
        "ordinary-linear": RelativityTable.linear("ordinary-linear", a_lin, b_lin, s),
        "optimal-linear": RelativityTable.linear("optimal-linear", a_opt, b_opt, s),
    }
    return RelativityResult(tuple(P), tables, float(xi), float(lam), tuple(comps))
