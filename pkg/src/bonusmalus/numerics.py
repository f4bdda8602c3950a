"""Shared numerical kernel.

Half-line quadrature of log-integrands, the stationary-distribution solve,
numerical log-log derivatives and signed log-space values.

Every integral over ``[0, inf)`` in the package goes through
:func:`integrate_halfline`.  The integrand is supplied as a *log* density so
that kernels such as ``exp(-T1/2)`` (which underflow double precision by
hundreds of orders of magnitude) never leave log space until the peak has
been subtracted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, roots_legendre

from .errors import DomainError, NoUniqueStationaryError, ToleranceError

__all__ = [
    "LogValue",
    "QuadratureSpec",
    "integrate_halfline",
    "solve_stationary",
    "log_derivative",
    "stable_sum",
]


# ---------------------------------------------------------------------------
# Signed log-space values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log_abs)``.

    ``sign`` is -1, 0 or +1 and ``sign == 0`` exactly when
    ``log_abs == -inf``.
    """

    sign: int
    log_abs: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise DomainError(f"sign must be -1, 0 or 1, got {self.sign}")
        if math.isnan(self.log_abs):
            raise DomainError("log magnitude is NaN")
        if (self.sign == 0) != (self.log_abs == -math.inf):
            raise DomainError("sign 0 must pair with log magnitude -inf")

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(0, -math.inf)

    @classmethod
    def from_log(cls, log_abs: float, sign: int = 1) -> "LogValue":
        if log_abs == -math.inf:
            return cls.zero()
        return cls(sign, float(log_abs))

    @classmethod
    def from_float(cls, x: float) -> "LogValue":
        if x == 0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)

    def __float__(self) -> float:
        return self.value

    def __neg__(self) -> "LogValue":
        return LogValue(-self.sign, self.log_abs)

    def __mul__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log_abs + other.log_abs)

    def __truediv__(self, other: "LogValue") -> "LogValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a LogValue equal to zero")
        if self.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log_abs - other.log_abs)

    def __add__(self, other: "LogValue") -> "LogValue":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        log_abs, sign = logsumexp(
            [self.log_abs, other.log_abs], b=[self.sign, other.sign], return_sign=True
        )
        return LogValue.from_log(float(log_abs), int(sign))

    def __sub__(self, other: "LogValue") -> "LogValue":
        return self + (-other)


def stable_sum(values) -> float:
    """Sum in fixed left-to-right order (bit-stable across runs)."""
    total = 0.0
    for v in values:
        total += float(v)
    return total


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance policy for :func:`integrate_halfline`.

    Parameters
    ----------
    rtol : float
        Target relative error, in ``(0, 1e-4]``.
    max_depth : int
        Maximum number of bisections applied to any initial panel.
    max_intervals : int
        Hard cap on the number of live subintervals.
    cross_check : bool
        Re-evaluate with a fixed composite Gauss-Legendre rule and compare.
    cross_check_rtol : float
        Allowed relative disagreement between the two rules.
    """

    rtol: float = 1e-10
    max_depth: int = 60
    max_intervals: int = 20000
    cross_check: bool = True
    cross_check_rtol: float = 1e-8
    transform: str = "u=eta/(1+eta)"

    def __post_init__(self):
        if not (0 < self.rtol <= 1e-4):
            raise DomainError(f"rtol must lie in (0, 1e-4], got {self.rtol}")
        if self.max_depth < 10:
            raise DomainError(f"max_depth must be >= 10, got {self.max_depth}")
        if self.transform != "u=eta/(1+eta)":
            raise DomainError(f"unsupported transform {self.transform!r}")


DEFAULT_QUADRATURE = QuadratureSpec()

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_KNODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss-7 nodes are the odd-indexed Kronrod nodes.
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

_GL_NODES, _GL_WEIGHTS = roots_legendre(20)
_EPS = np.finfo(float).eps


def _log_in_u(log_integrand: Callable[[np.ndarray], np.ndarray]):
    """Log-integrand on ``u in (0, 1)`` including the Jacobian of ``eta = u/(1-u)``."""

    def g(u):
        u = np.asarray(u, dtype=float)
        one_minus = 1.0 - u
        eta = u / one_minus
        vals = np.asarray(log_integrand(eta), dtype=float)
        if vals.shape != eta.shape:
            vals = np.broadcast_to(vals, eta.shape).astype(float)
        if np.any(np.isnan(vals)) or np.any(vals == np.inf):
            bad = eta[np.isnan(vals) | (vals == np.inf)]
            raise DomainError(f"log-integrand not finite at eta={bad[:3]}")
        return vals - 2.0 * np.log(one_minus)

    return g


def _locate_peak(g):
    """Return (u_peak, g_peak, left_width, right_width, samples) for a unimodal-ish g."""
    u_uni = (np.arange(512) + 0.5) / 512
    eta_log = np.logspace(-10, 10, 201)
    u = np.unique(np.concatenate([u_uni, eta_log / (1.0 + eta_log)]))
    u = u[(u > 0) & (u < 1)]
    vals = g(u)
    idx = int(np.argmax(vals))
    if vals[idx] == -np.inf:
        return None
    lo = u[idx - 1] if idx > 0 else u[idx] * 0.5
    hi = u[idx + 1] if idx < len(u) - 1 else 0.5 * (u[idx] + 1.0)
    res = minimize_scalar(
        lambda x: -float(g(np.array([x]))[0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-14 * max(1.0, hi)},
    )
    u_star, g_star = u[idx], vals[idx]
    if res.success and -res.fun > g_star:
        u_star, g_star = float(res.x), float(-res.fun)

    def half_width(direction):
        # distance to the point where g has dropped by 1/2 nat (one sd of a Gaussian)
        target = g_star - 0.5
        if direction < 0:
            mask = u < u_star
            cand, cvals = u[mask][::-1], vals[mask][::-1]
            edge = 0.0
        else:
            mask = u > u_star
            cand, cvals = u[mask], vals[mask]
            edge = 1.0
        below = np.nonzero(cvals < target)[0]
        if len(below) == 0:
            return abs(edge - u_star)
        j = int(below[0])
        outer = cand[j]
        inner = cand[j - 1] if j > 0 else u_star
        # two vectorised refinement rounds; the width only needs to be rough
        for _ in range(2):
            pts = np.linspace(inner, outer, 17)
            pv = g(pts)
            k = int(np.nonzero(pv < target)[0][0]) if np.any(pv < target) else 16
            inner, outer = pts[max(k - 1, 0)], pts[k]
        return max(abs(0.5 * (inner + outer) - u_star), 1e-15)

    return u_star, g_star, half_width(-1), half_width(+1)


def _breakpoints(u_star, wl, wr):
    pts = [np.linspace(0.0, 1.0, 17)]
    mult = np.array([0.5, 1, 2, 3, 4, 6, 8, 12, 16, 32, 64, 128])
    pts.append([u_star])
    pts.append(u_star - wl * mult)
    pts.append(u_star + wr * mult)
    p = np.unique(np.clip(np.concatenate([np.atleast_1d(x) for x in pts]), 0.0, 1.0))
    keep = [p[0]]
    for x in p[1:]:
        if x - keep[-1] > 1e-14:
            keep.append(x)
    if keep[-1] != 1.0:
        keep[-1] = 1.0
    return np.array(keep)


def _gk15(h, a, b):
    """Vectorised GK15 over arrays of panel ends. Returns (K, err)."""
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    x = c[:, None] + r[:, None] * _KNODES[None, :]
    fx = h(x.ravel()).reshape(x.shape)
    k = r * (fx @ _KWEIGHTS)
    gauss = r * (fx @ _GWEIGHTS)
    mean = k / np.where(r > 0, 2 * r, 1.0)
    resasc = r * (np.abs(fx - mean[:, None]) @ _KWEIGHTS)
    resabs = r * (np.abs(fx) @ _KWEIGHTS)
    err = np.abs(k - gauss)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(
            (resasc > 0) & (err > 0),
            resasc * np.minimum(1.0, (200.0 * err / np.where(resasc > 0, resasc, 1.0)) ** 1.5),
            err,
        )
    floor = 50.0 * _EPS * resabs
    err = np.where(resabs > np.finfo(float).tiny / (50 * _EPS), np.maximum(scaled, floor), scaled)
    return k, err


def _fixed_rule(h, breaks, sub=8):
    total = 0.0
    parts = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if a == 0.0:
            # geometric grading resolves u^(a-1) behaviour at the origin
            edges = np.concatenate([[0.0], b * 2.0 ** -np.arange(48, -1, -1.0)])
        else:
            edges = np.linspace(a, b, sub + 1)
        c = 0.5 * (edges[:-1] + edges[1:])
        r = 0.5 * (edges[1:] - edges[:-1])
        x = c[:, None] + r[:, None] * _GL_NODES[None, :]
        parts.append((x, r))
    xs = np.concatenate([p[0].ravel() for p in parts])
    fx = h(xs)
    pos = 0
    for x, r in parts:
        n = x.size
        block = fx[pos:pos + n].reshape(x.shape)
        pos += n
        total += float(np.sum(r * (block @ _GL_WEIGHTS)))
    return total


def integrate_halfline(
    log_integrand: Callable[[np.ndarray], np.ndarray],
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> LogValue:
    """Integrate ``exp(log_integrand(eta))`` over ``eta in [0, inf)``.

    The integrand must be nonnegative and is passed in log form; it is called
    with 1-d arrays of ``eta`` and must return an array of the same shape
    (``-inf`` for zeros).  After the map ``u = eta / (1 + eta)`` the peak of
    the log-integrand is subtracted and the rescaled integral is computed by
    globally adaptive Gauss-Kronrod bisection.  When ``spec.cross_check`` is set, an independent composite
    Gauss-Legendre rule on peak-adapted panels must agree to
    ``spec.cross_check_rtol``.

    Returns
    -------
    LogValue
        The logarithm of the integral.

    Raises
    ------
    ToleranceError
        If the adaptive rule does not converge or the cross-check fails.
    """
    g = _log_in_u(log_integrand)
    peak = _locate_peak(g)
    if peak is None:
        return LogValue.zero()
    u_star, shift, wl, wr = peak

    def h(u):
        return np.exp(g(u) - shift)

    breaks = _breakpoints(u_star, wl, wr)
    a = breaks[:-1].copy()
    b = breaks[1:].copy()
    depth = np.zeros(len(a), dtype=int)
    k, err = _gk15(h, a, b)

    while True:
        total = float(np.sum(k))
        tol = spec.rtol * abs(total)
        if float(np.sum(err)) <= tol:
            break
        splittable = depth < spec.max_depth
        if not np.any(splittable & (err > 0)) or len(a) >= spec.max_intervals:
            raise ToleranceError(
                "half-line quadrature did not converge",
                estimate=math.log(total) + shift if total > 0 else -math.inf,
                diagnostics={
                    "error_estimate": float(np.sum(err)) / total if total else math.inf,
                    "intervals": len(a),
                    "peak_u": u_star,
                },
            )
        order = np.argsort(-np.where(splittable, err, -1.0))
        budget = tol / max(len(a), 1)
        chosen = [i for i in order[:64] if splittable[i] and err[i] > budget]
        if not chosen:
            chosen = [int(order[0])]
        chosen = np.array(chosen)
        mid = 0.5 * (a[chosen] + b[chosen])
        na = np.concatenate([a[chosen], mid])
        nb = np.concatenate([mid, b[chosen]])
        nd = np.concatenate([depth[chosen] + 1, depth[chosen] + 1])
        nk, ne = _gk15(h, na, nb)
        keep = np.ones(len(a), dtype=bool)
        keep[chosen] = False
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        depth = np.concatenate([depth[keep], nd])
        k = np.concatenate([k[keep], nk])
        err = np.concatenate([err[keep], ne])

    # fixed summation order (sorted by panel start) for bit-stable results
    order = np.argsort(a, kind="stable")
    total = stable_sum(k[order])
    if total <= 0:
        return LogValue.zero()
    if spec.cross_check:
        fixed = _fixed_rule(h, breaks)
        if abs(fixed - total) > spec.cross_check_rtol * abs(total):
            raise ToleranceError(
                "quadrature cross-check disagreement",
                estimate=math.log(total) + shift,
                diagnostics={
                    "adaptive": total,
                    "fixed": fixed,
                    "relative_gap": abs(fixed - total) / abs(total),
                    "peak_u": u_star,
                },
            )
    return LogValue(1, math.log(total) + shift)


# ---------------------------------------------------------------------------
# Stationary distribution
# ---------------------------------------------------------------------------


_GTH_MIN_PIVOT = 1e-290


def _gth(A: np.ndarray):
    """Grassmann-Taksar-Heyman elimination on a stack of row-stochastic matrices.

    Subtraction-free, hence every component of ``pi`` is obtained with small
    relative error even when it is many orders of magnitude below the others.
    Also returns a mask that is False where a pivot vanished.
    """
    A = np.asarray(A, dtype=float)
    s = A.shape[-1]
    batch = A.shape[:-2]
    # stack axis last so every elimination step runs over contiguous memory
    B = np.moveaxis(A.reshape(-1, s, s), 0, -1).copy()
    ok = np.ones(B.shape[-1], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(s - 1, 0, -1):
            pivot = B[k, :k].sum(axis=0)
            ok &= pivot > _GTH_MIN_PIVOT
            B[:k, k] /= np.where(pivot > _GTH_MIN_PIVOT, pivot, 1.0)
            B[:k, :k] += B[:k, k][:, None, :] * B[k, :k][None, :, :]
        x = np.zeros((s, B.shape[-1]))
        x[0] = 1.0
        for k in range(1, s):
            x[k] = np.sum(x[:k] * B[:k, k], axis=0)
        x = x / x.sum(axis=0)
    ok &= np.all(np.isfinite(x), axis=0)
    return x.T.reshape(batch + (s,)), ok.reshape(batch)


def _lu_stationary(A: np.ndarray) -> np.ndarray:
    s = A.shape[-1]
    M = np.swapaxes(A, -1, -2) - np.eye(s)
    M[..., -1, :] = 1.0
    rhs = np.zeros(A.shape[:-1])
    rhs[..., -1] = 1.0
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NoUniqueStationaryError("balance equations are singular") from exc


def solve_stationary(A, method: str = "gth") -> np.ndarray:
    """Stationary distribution ``pi`` with ``pi A = pi`` and ``sum(pi) = 1``.

    ``A`` may be a single ``(s, s)`` matrix or a stack ``(..., s, s)``.

    Parameters
    ----------
    method : {"gth", "lu"}
        ``"gth"`` (default) eliminates states without subtractions, which
        keeps tiny level probabilities accurate to a few ulps.  ``"lu"``
        replaces the last balance equation by the normalisation and solves
        by LU with partial pivoting; it is also the fallback for chains with
        a zero GTH pivot (transient states).

    Raises
    ------
    NoUniqueStationaryError
        If the system is singular or the solution is not a probability vector.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {A.shape}")
    if np.any(A < 0) or np.any(np.abs(A.sum(axis=-1) - 1.0) > 1e-12):
        raise DomainError("matrix is not row-stochastic")
    if method == "gth":
        pi, ok = _gth(A)
        if not np.all(ok):
            pi[~ok] = _lu_stationary(A[~ok])
    elif method == "lu":
        pi = _lu_stationary(A)
    else:
        raise DomainError(f"unknown stationary method {method!r}")
    if not np.all(np.isfinite(pi)) or np.any(pi < -1e-10):
        raise NoUniqueStationaryError("no unique stationary distribution")
    pi = np.where(pi < 0, 0.0, pi)
    pi = pi / pi.sum(axis=-1, keepdims=True)
    resid = np.max(np.abs(np.einsum("...i,...ij->...j", pi, A) - pi))
    if resid > 1e-10:
        raise NoUniqueStationaryError(f"stationary residual {resid:.3g} too large")
    return pi


# ---------------------------------------------------------------------------
# Log-log derivative
# ---------------------------------------------------------------------------


def log_derivative(f: Callable[[float], float], x0: float, h: float = 1e-4) -> float:
    """Central difference of ``ln f`` in ``ln x``: ``d ln f / d ln x`` at ``x0``."""
    if not x0 > 0:
        raise DomainError(f"x0 must be positive, got {x0}")
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    up = f(x0 * math.exp(h))
    down = f(x0 * math.exp(-h))
    if not (up > 0 and down > 0):
        raise DomainError("f must be positive at both evaluation points")
    return (math.log(up) - math.log(down)) / (2.0 * h)
