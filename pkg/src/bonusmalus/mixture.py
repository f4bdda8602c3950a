"""Bayesian base premium under finite-mixture claim-size models.

The joint density of an i.i.d. sample from an equal-weight mixture
``f = (1/k) sum_i g_i`` is approximated by the mixture of the per-component
joints, ``(1/k) sum_i g_i(x_1, ..., x_n)``.  Combined with a Gamma-mixture
prior ``sum_l w_l pi_l`` the posterior mean of the claim-size parameter
becomes a convex combination of the ``k * s`` single-component posterior
means (:func:`approx_bayes_base_premium`), which avoids label switching.

Everything is evaluated in log space: a typical Model-1 kernel is of order
``exp(-94)`` and the unit-variance Normal component of the same sample is
near ``exp(-31000)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .distributions import GammaMixturePrior
from .errors import DomainError, NumericDegeneracyError, OracleScaleError
from .numerics import DEFAULT_QUADRATURE, QuadratureSpec, integrate_halfline

__all__ = [
    "SufficientStats",
    "LogNormalUnitVariance",
    "NormalUnitVariance",
    "GammaShapeTwo",
    "ParetoTypeOne",
    "MixtureClaimModel",
    "BasePremiumResult",
    "approx_bayes_base_premium",
    "lognormal_normal_estimator",
    "gamma_pareto_estimator",
    "exact_mixture_joint",
    "mixture_product",
    "partition_count",
    "mixture_bound",
    "mixture_bound_check",
    "density_sup",
    "level_premium",
    "MODEL_PRESETS",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SufficientStats:
    """Sufficient statistics of a positive claim-size sample.

    ``T1 = sum ln^2 x``, ``T2 = sum ln x``, ``T3 = sum x^2``, ``T4 = sum x``.
    Statistics a model does not need may be left as ``None``.  ``n = 0``
    denotes "no data" (all kernels equal one).
    """

    n: int
    T1: float | None = None
    T2: float | None = None
    T3: float | None = None
    T4: float | None = None
    x_min: float | None = None

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"sample size must be >= 0, got {self.n}")
        if self.n == 0:
            return
        slack = 1e-9
        if self.T1 is not None and self.T2 is not None:
            if self.T1 < self.T2 ** 2 / self.n * (1 - slack) - slack:
                raise DomainError("T1 < T2^2/n violates Cauchy-Schwarz")
        if self.T3 is not None and self.T4 is not None:
            if self.T3 < self.T4 ** 2 / self.n * (1 - slack) - slack:
                raise DomainError("T3 < T4^2/n violates Cauchy-Schwarz")
        if self.x_min is not None and not self.x_min > 0:
            raise DomainError("x_min must be positive")

    @classmethod
    def from_sample(cls, x: Sequence[float]) -> "SufficientStats":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or len(x) == 0:
            raise DomainError("need a non-empty 1-d sample")
        if np.any(x <= 0):
            raise DomainError("claim sizes must be positive")
        lx = np.log(x)
        return cls(
            n=len(x),
            T1=float(np.sum(lx ** 2)),
            T2=float(np.sum(lx)),
            T3=float(np.sum(x ** 2)),
            T4=float(np.sum(x)),
            x_min=float(np.min(x)),
        )

    def require(self, *names):
        if self.n == 0:
            return
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DomainError(f"sufficient statistics missing: {', '.join(missing)}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("n", "T1", "T2", "T3", "T4", "x_min")
                if getattr(self, k) is not None}


# ---------------------------------------------------------------------------
# Component families (parameter eta)
# ---------------------------------------------------------------------------


class ComponentFamily:
    """One-parameter claim-size density ``g(x | eta)``."""

    name = "abstract"

    def logpdf(self, x, eta):
        raise NotImplementedError

    def joint_logpdf(self, stats: SufficientStats, eta):
        """Log of ``prod_j g(x_j | eta)`` through the sufficient statistics."""
        raise NotImplementedError

    def sample_joint_logpdf(self, x, eta):
        """Log joint density computed directly from the sample."""
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.logpdf(x, eta)))

    def to_dict(self) -> dict:
        return {"family": self.name}


@dataclass(frozen=True)
class LogNormalUnitVariance(ComponentFamily):
    """LogNormal with log-location ``eta`` and unit log-scale."""

    name = "lognormal"

    def logpdf(self, x, eta):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            out = -lx - 0.5 * _LOG_2PI - 0.5 * (lx - eta) ** 2
        return np.where(x > 0, out, -np.inf)

    def joint_logpdf(self, stats, eta):
        eta = np.asarray(eta, dtype=float)
        if stats.n == 0:
            return np.zeros_like(eta)
        stats.require("T1", "T2")
        n = stats.n
        return -0.5 * n * _LOG_2PI - 0.5 * (stats.T1 - 2 * eta * stats.T2 + 2 * stats.T2 + n * eta ** 2)


@dataclass(frozen=True)
class NormalUnitVariance(ComponentFamily):
    """Normal with mean ``eta`` and unit variance."""

    name = "normal"

    def logpdf(self, x, eta):
        x = np.asarray(x, dtype=float)
        return -0.5 * _LOG_2PI - 0.5 * (x - eta) ** 2

    def joint_logpdf(self, stats, eta):
        eta = np.asarray(eta, dtype=float)
        if stats.n == 0:
            return np.zeros_like(eta)
        stats.require("T3", "T4")
        n = stats.n
        return -0.5 * n * _LOG_2PI - 0.5 * (stats.T3 - 2 * eta * stats.T4 + n * eta ** 2)


@dataclass(frozen=True)
class GammaShapeTwo(ComponentFamily):
    """Gamma with shape 2 and rate ``eta``: ``eta^2 x exp(-eta x)``."""

    name = "gamma2"

    def logpdf(self, x, eta):
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 2 * np.log(eta) + np.log(x) - eta * x
        return np.where(x > 0, out, -np.inf)

    def joint_logpdf(self, stats, eta):
        eta = np.asarray(eta, dtype=float)
        if stats.n == 0:
            return np.zeros_like(eta)
        stats.require("T2", "T4")
        with np.errstate(divide="ignore"):
            return 2 * stats.n * np.log(eta) + stats.T2 - eta * stats.T4


@dataclass(frozen=True)
class ParetoTypeOne(ComponentFamily):
    """Pareto type I with fixed ``scale`` and shape ``eta``: ``eta scale^eta / x^(eta+1)``.

    ``exponent="joint"`` uses the exact i.i.d. joint ``eta^n scale^(n eta)
    exp(-(eta+1) T2)``.  ``exponent="printed"`` replaces ``scale^(n eta)`` by
    ``scale^(2 eta)``, the kernel behind the reference Model 2/4 base
    premiums. It is not the joint density of any i.i.d. sample.
    """

    scale: float = 0.3
    exponent: str = "joint"
    name = "pareto1"

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("Pareto scale must be positive")
        if self.exponent not in ("joint", "printed"):
            raise DomainError(f"exponent must be 'joint' or 'printed', got {self.exponent!r}")

    def logpdf(self, x, eta):
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(eta) + eta * math.log(self.scale) - (eta + 1) * np.log(x)
        return np.where(x >= self.scale, out, -np.inf)

    def joint_logpdf(self, stats, eta):
        eta = np.asarray(eta, dtype=float)
        if stats.n == 0:
            return np.zeros_like(eta)
        stats.require("T2", "x_min")
        if stats.x_min < self.scale:
            return np.full_like(eta, -np.inf)
        power = stats.n if self.exponent == "joint" else 2
        with np.errstate(divide="ignore"):
            return (
                stats.n * np.log(eta)
                + power * eta * math.log(self.scale)
                - (eta + 1) * stats.T2
            )

    def to_dict(self):
        return {"family": self.name, "scale": self.scale, "exponent": self.exponent}


FAMILIES = {
    "lognormal": LogNormalUnitVariance,
    "normal": NormalUnitVariance,
    "gamma2": GammaShapeTwo,
    "pareto1": ParetoTypeOne,
}


@dataclass(frozen=True)
class MixtureClaimModel:
    """Equal-weight mixture ``(1/k) sum_i g_i``; heavier components are repeated."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DomainError("a mixture needs at least one component")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_weights(cls, weighted: Sequence[tuple]) -> "MixtureClaimModel":
        """Expand ``[(family, weight), ...]`` with rational weights into repeated components."""
        fracs = [(fam, Fraction(w).limit_denominator(10_000)) for fam, w in weighted]
        if sum(f for _, f in fracs) != 1:
            raise DomainError("mixture weights must sum to one")
        denom = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for _, f in fracs), 1)
        comps = []
        for fam, f in fracs:
            comps.extend([fam] * int(f * denom))
        return cls(tuple(comps))

    @property
    def k(self) -> int:
        return len(self.components)

    def logpdf(self, x, eta):
        terms = np.stack([np.broadcast_to(c.logpdf(x, eta), np.shape(x)) for c in self.components])
        return logsumexp(terms, axis=0) - math.log(self.k)

    def to_dict(self):
        return {"components": [c.to_dict() for c in self.components]}


# ---------------------------------------------------------------------------
# Base premium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasePremiumResult:
    """Approximate Bayes estimate of the claim-size parameter.

    ``rho[i][l]`` is the posterior weight of (mixture component ``i``,
    prior component ``l``) and ``delta[i][l]`` the corresponding
    single-model posterior mean; ``estimate = sum rho * delta``.
    """

    estimate: float
    rho: tuple
    delta: tuple
    log_marginals: tuple

    def rho_array(self):
        return np.array(self.rho)

    def delta_array(self):
        return np.array(self.delta)


def _log_eta(eta):
    with np.errstate(divide="ignore"):
        return np.log(eta)


def approx_bayes_base_premium(
    model: MixtureClaimModel,
    stats: SufficientStats,
    prior: GammaMixturePrior,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> BasePremiumResult:
    """Posterior mean of ``eta`` under the mixture-of-joints approximation.

    For every pair (component ``g_i``, prior component ``pi_l``) computes
    ``m_il = int g_i(x|eta) pi_l(eta) d eta`` and the single-model posterior
    mean ``delta_il``, then combines them with weights
    ``rho_il = w_l m_il / sum w_l' m_i'l'``.
    """
    k, s = model.k, len(prior)
    log_m = np.full((k, s), -np.inf)
    delta = np.zeros((k, s))
    for i, comp in enumerate(model.components):
        for l, (w, pc) in enumerate(zip(prior.weights, prior.components)):
            if w == 0:
                continue

            def log_den(eta, comp=comp, pc=pc):
                return comp.joint_logpdf(stats, eta) + pc.logpdf(eta)

            den = integrate_halfline(log_den, spec)
            if den.sign == 0:
                continue
            num = integrate_halfline(lambda eta, f=log_den: f(eta) + _log_eta(eta), spec)
            log_m[i, l] = den.log_abs
            delta[i, l] = (num / den).value
    log_w = np.log(np.asarray(prior.weights))[None, :] + log_m
    if np.all(log_w == -np.inf):
        raise NumericDegeneracyError("every marginal likelihood is zero, even in log space")
    log_rho = log_w - logsumexp(log_w)
    rho = np.exp(log_rho)
    # fixed row-major accumulation order
    estimate = 0.0
    for i in range(k):
        for l in range(s):
            estimate += rho[i, l] * delta[i, l]
    return BasePremiumResult(
        estimate=float(estimate),
        rho=tuple(tuple(map(float, r)) for r in rho),
        delta=tuple(tuple(map(float, r)) for r in delta),
        log_marginals=tuple(tuple(map(float, r)) for r in log_m),
    )


def _ratio_of_kernels(log_kernels, weights, prior, spec):
    """``sum_j c_j int eta pi K_j / sum_j c_j int pi K_j`` with the whole mixture prior."""
    num_terms, den_terms = [], []
    for lk, c in zip(log_kernels, weights):
        def log_den(eta, lk=lk):
            return lk(eta) + prior.logpdf(eta)

        den = integrate_halfline(log_den, spec)
        if den.sign == 0:
            continue
        num = integrate_halfline(lambda eta, f=log_den: f(eta) + _log_eta(eta), spec)
        den_terms.append(math.log(c) + den.log_abs)
        num_terms.append(math.log(c) + num.log_abs)
    if not den_terms:
        raise NumericDegeneracyError("all kernels vanish")
    return math.exp(logsumexp(num_terms) - logsumexp(den_terms))


def lognormal_normal_estimator(
    stats: SufficientStats, prior: GammaMixturePrior, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Closed ratio for ``2/3 LogNormal(eta, 1) + 1/3 Normal(eta, 1)``.

    Kernels ``exp{-(T1 - 2 eta T2 + 2 T2 + n eta^2)/2}`` (weight 2) and
    ``exp{-(T3 - 2 eta T4 + n eta^2)/2}`` (weight 1); the common
    ``(2 pi)^(-n/2)`` factor is dropped.
    """
    stats.require("T1", "T2", "T3", "T4")
    n = stats.n

    def k_lognormal(eta):
        return -0.5 * (stats.T1 - 2 * eta * stats.T2 + 2 * stats.T2 + n * eta ** 2)

    def k_normal(eta):
        return -0.5 * (stats.T3 - 2 * eta * stats.T4 + n * eta ** 2)

    if n == 0:
        return prior.mean
    return _ratio_of_kernels([k_lognormal, k_normal], [2.0, 1.0], prior, spec)


def gamma_pareto_estimator(
    stats: SufficientStats,
    prior: GammaMixturePrior,
    exponent: str = "printed",
    scale: float = 0.3,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Closed ratio for ``1/2 Gamma(2, eta) + 1/2 Pareto_I(scale, eta)``.

    Gamma kernel ``eta^(2n) exp(T2 - eta T4)``; Pareto kernel
    ``eta^n scale^(c eta) exp(-(eta + 1) T2)`` with ``c = 2`` for
    ``exponent="printed"`` and ``c = n`` for the exact joint.  The Pareto
    term is dropped when ``x_min < scale``.
    """
    if exponent not in ("printed", "joint"):
        raise DomainError(f"exponent must be 'printed' or 'joint', got {exponent!r}")
    stats.require("T2", "T4", "x_min")
    n = stats.n
    if n == 0:
        return prior.mean
    c = 2 if exponent == "printed" else n

    def k_gamma(eta):
        with np.errstate(divide="ignore"):
            return 2 * n * np.log(eta) + stats.T2 - eta * stats.T4

    def k_pareto(eta):
        with np.errstate(divide="ignore"):
            return n * np.log(eta) + c * eta * math.log(scale) - (eta + 1) * stats.T2

    kernels = [k_gamma]
    if stats.x_min >= scale:
        kernels.append(k_pareto)
    return _ratio_of_kernels(kernels, [1.0] * len(kernels), prior, spec)


def level_premium(base: float, r: float) -> float:
    """Premium at a level: base premium times its relativity."""
    if not (base > 0 and r > 0):
        raise DomainError(f"base and relativity must be positive, got {base}, {r}")
    return base * r


# ---------------------------------------------------------------------------
# Exact joint (brute force) and the partition-count bound
# ---------------------------------------------------------------------------

_MAX_ORACLE_N = 12


def exact_mixture_joint(samples: Sequence[float], model: MixtureClaimModel, eta: float) -> float:
    """Joint density as a sum over all ``k^n`` assignments of observations to components."""
    x = np.asarray(samples, dtype=float)
    n, k = len(x), model.k
    if n > _MAX_ORACLE_N:
        raise OracleScaleError(f"brute-force joint limited to n <= {_MAX_ORACLE_N}, got {n}")
    if n == 0:
        return 1.0
    # table[i, j] = log g_i(x_j | eta) - log k
    table = np.stack([c.logpdf(x, eta) for c in model.components]) - math.log(k)
    terms = [
        sum(table[c, j] for j, c in enumerate(assign))
        for assign in itertools.product(range(k), repeat=n)
    ]
    return float(np.exp(logsumexp(terms)))


def mixture_product(samples: Sequence[float], model: MixtureClaimModel, eta: float) -> float:
    """``prod_j f(x_j | eta)`` for the mixture density ``f``."""
    x = np.asarray(samples, dtype=float)
    return float(np.exp(np.sum(model.logpdf(x, eta))))


def partition_count(n: int) -> int:
    """Number of integer partitions of ``n`` (Euler's pentagonal recurrence)."""
    if not isinstance(n, (int, np.integer)) or n < 0 or n > 200:
        raise DomainError(f"partition_count supports integers 0 <= n <= 200, got {n!r}")
    p = [1] + [0] * n
    for m in range(1, n + 1):
        total = 0
        j = 1
        while True:
            g1 = j * (3 * j - 1) // 2
            if g1 > m:
                break
            sign = 1 if j % 2 else -1
            total += sign * p[m - g1]
            g2 = j * (3 * j + 1) // 2
            if g2 <= m:
                total += sign * p[m - g2]
            j += 1
        p[m] = total
    return p[n]


def mixture_bound(M: float, k: int, n: int) -> float:
    """``M^k / k^n * P(n)``, the stated bound on the mixture-of-joints error."""
    if not M > 0:
        raise DomainError(f"density bound M must be positive, got {M}")
    if k < 1 or n < 0:
        raise DomainError("need k >= 1 and n >= 0")
    return M ** k / k ** n * partition_count(n)


def density_sup(samples, model: MixtureClaimModel, eta: float, num: int = 10_000) -> float:
    """Max of ``f`` and every ``g_i`` on a grid spanning the sample range."""
    x = np.asarray(samples, dtype=float)
    grid = np.linspace(x.min(), x.max(), num) if x.max() > x.min() else x[:1]
    grid = np.unique(np.concatenate([grid, x]))
    vals = [np.exp(model.logpdf(grid, eta))]
    vals += [np.exp(c.logpdf(grid, eta)) for c in model.components]
    return float(max(np.max(v) for v in vals))


@dataclass(frozen=True)
class MixtureBoundCheck:
    lhs: float
    bound: float
    M: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound


def mixture_bound_check(samples, model: MixtureClaimModel, eta: float, M: float | None = None) -> MixtureBoundCheck:
    """Compare ``|prod f(x_j) - (1/k) sum_i prod g_i(x_j)|`` with :func:`mixture_bound`."""
    x = np.asarray(samples, dtype=float)
    if M is None:
        M = density_sup(x, model, eta)
    exact = mixture_product(x, model, eta)
    approx = float(np.mean([math.exp(c.sample_joint_logpdf(x, eta)) for c in model.components]))
    lhs = abs(exact - approx)
    return MixtureBoundCheck(lhs=lhs, bound=mixture_bound(M, model.k, len(x)), M=M)


# ---------------------------------------------------------------------------
# Models 1-4 (``model3``/``model4`` share the claim-size side of 1/2)
# ---------------------------------------------------------------------------

MODEL1_STATS = SufficientStats(n=20, T1=188.7745, T2=56.95046, T3=86422.7, T4=691.2832)
MODEL2_STATS = SufficientStats(n=200, T2=201.1964, T4=676.6038, x_min=0.3159083)

LN_NORMAL_MODEL = MixtureClaimModel.from_weights(
    [(LogNormalUnitVariance(), Fraction(2, 3)), (NormalUnitVariance(), Fraction(1, 3))]
)
GAMMA_PARETO_MODEL = MixtureClaimModel((GammaShapeTwo(), ParetoTypeOne(0.3, "printed")))
GAMMA_PARETO_MODEL_JOINT = MixtureClaimModel((GammaShapeTwo(), ParetoTypeOne(0.3, "joint")))

MODEL_PRESETS = {
    "model1": (LN_NORMAL_MODEL, MODEL1_STATS, "poisson"),
    "model2": (GAMMA_PARETO_MODEL, MODEL2_STATS, "poisson"),
    "model3": (LN_NORMAL_MODEL, MODEL1_STATS, "zip"),
    "model4": (GAMMA_PARETO_MODEL, MODEL2_STATS, "zip"),
}
