"""Bonus-Malus systems as Markov chains.

Level 1 is the maximum-bonus (cheapest) level and level ``s`` the
maximum-malus level.  Levels are 1-based in the public API and 0-based in
array indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .distributions import ClaimCountModel, GammaMixturePrior
from .errors import DomainError, MalformedRuleError, ToleranceError
from .numerics import DEFAULT_QUADRATURE, QuadratureSpec, integrate_halfline, solve_stationary

__all__ = [
    "TransitionRule",
    "Step",
    "JumpToTop",
    "Explicit",
    "BonusMalusSystem",
    "compile_transition_table",
    "transition_matrix",
    "steady_state",
    "steady_state_at",
    "level_distribution",
    "level_mass",
    "PRESETS",
    "preset",
]


class TransitionRule:
    """Deterministic map ``(level, claims) -> next level``."""

    def target(self, level: int, n: int, levels: int) -> int:
        raise NotImplementedError

    def saturation(self, levels: int) -> int:
        """Smallest ``n*`` with ``T(n) == T(n*)`` for all ``n >= n*``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Step(TransitionRule):
    """Down ``bonus_step`` levels per claim-free year, up ``malus_step`` per claim."""

    bonus_step: int = 1
    malus_step: int = 1

    def __post_init__(self):
        if self.bonus_step < 1 or self.malus_step < 1:
            raise DomainError("bonus_step and malus_step must be >= 1")

    def target(self, level, n, levels):
        if n == 0:
            return max(level - self.bonus_step, 1)
        return min(level + n * self.malus_step, levels)

    def saturation(self, levels):
        return math.ceil((levels - 1) / self.malus_step)

    def to_dict(self):
        return {"type": "step", "bonus_step": self.bonus_step, "malus_step": self.malus_step}


@dataclass(frozen=True)
class JumpToTop(TransitionRule):
    """Down ``bonus_step`` levels per claim-free year, straight to the top after any claim."""

    bonus_step: int = 1

    def __post_init__(self):
        if self.bonus_step < 1:
            raise DomainError("bonus_step must be >= 1")

    def target(self, level, n, levels):
        if n == 0:
            return max(level - self.bonus_step, 1)
        return levels

    def saturation(self, levels):
        return 1

    def to_dict(self):
        return {"type": "jump_to_top", "bonus_step": self.bonus_step}


@dataclass(frozen=True)
class Explicit(TransitionRule):
    """Tabulated targets ``{(level, n): target}`` for ``n = 0..saturation``.

    Targets for ``n > saturation`` repeat those of ``n = saturation``.
    Targets outside ``[1, s]`` are clamped.
    """

    targets: Mapping = field(default_factory=dict)
    saturation_count: int = 1

    def __post_init__(self):
        if self.saturation_count < 0:
            raise DomainError("saturation count must be >= 0")
        object.__setattr__(
            self, "targets", {(int(l), int(n)): int(t) for (l, n), t in dict(self.targets).items()}
        )

    def __hash__(self):
        return hash((tuple(sorted(self.targets.items())), self.saturation_count))

    def target(self, level, n, levels):
        key = (level, min(n, self.saturation_count))
        try:
            t = self.targets[key]
        except KeyError:
            raise MalformedRuleError(
                f"explicit rule has no target for level {key[0]} with {key[1]} claims"
            ) from None
        return min(max(t, 1), levels)

    def saturation(self, levels):
        return self.saturation_count

    def to_dict(self):
        return {
            "type": "explicit",
            "saturation": self.saturation_count,
            "targets": [[l, n, t] for (l, n), t in sorted(self.targets.items())],
        }


@dataclass(frozen=True)
class BonusMalusSystem:
    """An ``s``-level Bonus-Malus scale with a starting level and transition rule."""

    levels: int
    start_level: int
    rule: TransitionRule
    name: str = ""

    def __post_init__(self):
        if self.levels < 2:
            raise DomainError(f"a BMS needs at least 2 levels, got {self.levels}")
        if not 1 <= self.start_level <= self.levels:
            raise DomainError(
                f"start level {self.start_level} outside [1, {self.levels}]"
            )
        # validate the rule eagerly so malformed explicit tables fail at construction
        for n in range(self.saturation + 1):
            compile_transition_table(self, n)

    @property
    def saturation(self) -> int:
        return self.rule.saturation(self.levels)

    @cached_property
    def _target_table(self) -> np.ndarray:
        return _targets(self)

    def targets(self) -> np.ndarray:
        """0-based target indices, shape ``(n* + 1, s)``; row ``n`` holds ``T(n)``."""
        return self._target_table


def _targets(bms: BonusMalusSystem) -> np.ndarray:
    s = bms.levels
    out = np.empty((bms.saturation + 1, s), dtype=int)
    for n in range(bms.saturation + 1):
        for i in range(1, s + 1):
            out[n, i - 1] = bms.rule.target(i, n, s) - 1
    return out


def compile_transition_table(bms: BonusMalusSystem, n: int) -> np.ndarray:
    """The 0/1 matrix ``T(n)`` sending each level to its successor after ``n`` claims."""
    if n < 0:
        raise DomainError(f"claim count must be >= 0, got {n}")
    s = bms.levels
    T = np.zeros((s, s))
    for i in range(1, s + 1):
        j = bms.rule.target(i, int(n), s)
        if not 1 <= j <= s:
            raise MalformedRuleError(f"target {j} outside [1, {s}]")
        T[i - 1, j - 1] = 1.0
    return T


def _batched_matrices(bms: BonusMalusSystem, model: ClaimCountModel, mus: np.ndarray) -> np.ndarray:
    """Transition matrices for rates ``mus`` of shape ``(m, s)`` (row-wise rates)."""
    s = bms.levels
    tgt = bms.targets()
    nstar = bms.saturation
    m = mus.shape[0]
    A = np.zeros((m, s, s))
    rows = np.arange(s)
    for n in range(nstar):
        prob = model.pmf(n, mus)
        A[:, rows, tgt[n]] += prob
    # exact tail mass P(N >= n*) goes to T(n*)
    A[:, rows, tgt[nstar]] += model.tail(nstar, mus)
    return A


def transition_matrix(bms: BonusMalusSystem, model: ClaimCountModel, mu) -> np.ndarray:
    """Row-stochastic ``A = sum_n T(n) P(N = n | mu)``.

    ``mu`` is either a scalar rate applied to every level or a length-``s``
    vector giving a separate rate for each current level.
    """
    mu_arr = np.asarray(mu, dtype=float)
    if mu_arr.ndim == 0:
        mu_arr = np.full(bms.levels, float(mu_arr))
    elif mu_arr.shape != (bms.levels,):
        raise DomainError(f"mu must be a scalar or have shape ({bms.levels},)")
    if not np.all(mu_arr > 0) or not np.all(np.isfinite(mu_arr)):
        raise DomainError("claim rate mu must be positive and finite")
    return _batched_matrices(bms, model, mu_arr[None, :])[0]


def steady_state(A) -> np.ndarray:
    """Stationary law of a transition matrix (left eigenvector for eigenvalue 1)."""
    return solve_stationary(A)


def steady_state_at(bms: BonusMalusSystem, model: ClaimCountModel, mu) -> np.ndarray:
    """Steady-state level probabilities for claim rates ``mu`` (array-valued).

    Returns an array of shape ``mu.shape + (s,)``.  Rates of exactly zero are
    allowed here (everyone drifts to level 1).
    """
    mu = np.asarray(mu, dtype=float)
    flat = mu.ravel()
    if np.any(flat < 0):
        raise DomainError("claim rate must be nonnegative")
    A = _batched_matrices(bms, model, np.repeat(flat[:, None], bms.levels, axis=1))
    return solve_stationary(A).reshape(mu.shape + (bms.levels,))


def _log_level_integrand(bms, model, lam, level_idx, log_prior, theta_power=0):
    def f(theta):
        pi = steady_state_at(bms, model, lam * theta)[:, level_idx]
        with np.errstate(divide="ignore"):
            out = np.log(pi) + log_prior(theta)
            if theta_power:
                out = out + theta_power * np.log(theta)
        return out

    return f


def level_mass(
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    lam: float,
    prior: GammaMixturePrior,
    level: int,
    theta_power: int = 0,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """``sum_c w_c int theta^k pi_level(lam*theta) dGamma_c(theta)`` for ``k = theta_power``."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if not 1 <= level <= bms.levels:
        raise DomainError(f"level {level} outside [1, {bms.levels}]")
    total = 0.0
    for w, comp in zip(prior.weights, prior.components):
        if w == 0:
            continue
        iv = integrate_halfline(
            _log_level_integrand(bms, model, lam, level - 1, comp.logpdf, theta_power), spec
        )
        total += w * iv.value
    return total


def level_distribution(
    bms: BonusMalusSystem,
    model: ClaimCountModel,
    lam: float,
    prior: GammaMixturePrior,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> np.ndarray:
    """``P(L = l) = int pi_l(lam*theta) dF(theta)`` for every level."""
    P = np.array(
        [level_mass(bms, model, lam, prior, l, 0, spec) for l in range(1, bms.levels + 1)]
    )
    if abs(P.sum() - 1.0) > 1e-8:
        raise ToleranceError(
            "level distribution does not sum to one", estimate=float(P.sum()),
            diagnostics={"P": P.tolist()},
        )
    return P


# "ireland" and "hongkong" name the same 6-level scale.
PRESETS = {
    "kenya": BonusMalusSystem(7, 7, JumpToTop(1), name="kenya"),
    "hongkong": BonusMalusSystem(6, 6, Step(1, 3), name="hongkong"),
    "ireland": BonusMalusSystem(6, 6, Step(1, 3), name="hongkong"),
    "brazil": BonusMalusSystem(7, 7, Step(1, 1), name="brazil"),
}


def preset(name: str) -> BonusMalusSystem:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise DomainError(f"unknown BMS preset {name!r}; known: {sorted(PRESETS)}") from None
