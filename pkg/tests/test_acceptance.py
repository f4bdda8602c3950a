"""Acceptance suite: one test per criterion, at the stated tolerances.

Printed reference values are the published 3-decimal tables.  Criteria that
cannot be met are kept at full tolerance and marked ``xfail(strict=True)``:
they still run, still print FAIL, and turn the suite red if they ever pass.
"""

import math
import warnings

import numpy as np
import pytest

from bonusmalus.bms import level_mass, preset, steady_state_at, transition_matrix
from bonusmalus.config import PRIOR_PRESETS
from bonusmalus.distributions import Poisson, ZIPoisson
from bonusmalus.errors import ClassCViolationWarning
from bonusmalus.mixture import (
    LN_NORMAL_MODEL,
    GAMMA_PARETO_MODEL,
    GAMMA_PARETO_MODEL_JOINT,
    MODEL1_STATS,
    MODEL2_STATS,
    GammaShapeTwo,
    LogNormalUnitVariance,
    MixtureClaimModel,
    NormalUnitVariance,
    ParetoTypeOne,
    approx_bayes_base_premium,
    exact_mixture_joint,
    mixture_product,
    partition_count,
    mixture_bound_check,
)
from bonusmalus.numerics import integrate_halfline, log_derivative, solve_stationary
from bonusmalus.relativity import (
    METHODS,
    efficiency_sweep,
    expected_bayes_relativity_claims,
    fit_xi,
    loimaranta_efficiency,
    optimal_linear_coefficients,
    relativity_tables,
)
from scipy.special import gammaln

LAM = 0.1474
SEED = 20240611
PI1, PI2 = PRIOR_PRESETS["pi1"], PRIOR_PRESETS["pi2"]
SYSTEMS = {"kenya": PI1, "hongkong": PI2, "brazil": PI1}

# Poisson halves of the relativity tables
PRINTED = {
    "kenya": {
        "P": [0.486, 0.051, 0.061, 0.073, 0.088, 0.108, 0.133],
        "r1": [0.143, 0.429, 0.714, 1.000, 1.286, 1.571, 1.857],
        "r2": [0.127, 0.513, 0.783, 1.065, 1.358, 1.663, 1.980],
        "lin": [0.796, 0.894, 0.992, 1.090, 1.188, 1.287, 1.385],  # printed "1.90" read as 1.090
        "opt": [0.139, 0.436, 0.732, 1.029, 1.326, 1.622, 1.919],
        "r1_zip": [0.143, 0.429, 0.714, 1.000, 1.286, 1.571, 1.857],
    },
    "hongkong": {
        "r1": [0.167, 0.500, 0.833, 1.167, 1.500, 1.833],
        "r1_zip": [0.167, 0.500, 0.833, 1.167, 1.500, 1.833],
    },
    "brazil": {
        "r1": [0.143, 0.429, 0.714, 0.999, 1.286, 1.571, 1.857],
        "r1_zip": [0.143, 0.429, 0.714, 1.000, 1.286, 1.571, 1.857],
    },
}

# Premium_l columns for Models 1 and 2 (Poisson claim counts)
PRINTED_PREMIUMS = {
    "kenya": {
        "model1": [0.376, 1.179, 1.983, 2.786, 3.590, 4.393, 5.196],
        "model2": [0.137, 0.429, 0.721, 1.014, 1.306, 1.598, 1.890],
    },
    "hongkong": {
        "model1": [2.480, 2.802, 3.124, 3.446, 3.768, 4.090],
        "model2": [0.902, 1.019, 1.137, 1.254, 1.371, 1.488],
    },
    "brazil": {
        "model1": [0.381, 1.350, 2.318, 3.287, 4.255, 5.223, 6.192],
        "model2": [0.139, 0.491, 0.843, 1.196, 1.548, 1.900, 2.252],
    },
}
PRINTED_BASE = {("model1", "pi1"): 2.705, ("model1", "pi2"): 2.719,
                ("model2", "pi1"): 0.984, ("model2", "pi2"): 0.983}


def fmt(values, digits=3):
    return "(" + ", ".join(f"{v:.{digits}f}" for v in values) + ")"


# ---------------------------------------------------------------------------
# Independent closed-form oracles for the -1/Top scale
# ---------------------------------------------------------------------------


def kenya_P_oracle(prior=PI1, lam=LAM, s=7):
    P = np.zeros(s)
    for w, c in zip(prior.weights, prior.components):
        E = lambda k: (c.rate / (c.rate + k * lam)) ** c.shape
        P[0] += w * E(s - 1)
        for l in range(2, s + 1):
            P[l - 1] += w * (E(s - l) - E(s - l + 1))
    return P


def kenya_r2_oracle(level, a, b, lam=LAM, s=7):
    E0 = lambda k: (b / (b + k * lam)) ** a
    E1 = lambda k: a / (b + k * lam) * E0(k)
    if level == 1:
        return a / (b + (s - 1) * lam)
    k = s - level
    return (E1(k) - E1(k + 1)) / (E0(k) - E0(k + 1))


# ---------------------------------------------------------------------------
# Shared computations
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def poisson_tables():
    return {name: relativity_tables(preset(name), Poisson(), LAM, pr, xi=0.5)
            for name, pr in SYSTEMS.items()}


@pytest.fixture(scope="module")
def base_premiums():
    out = {}
    for pname, prior in (("pi1", PI1), ("pi2", PI2)):
        out[("model1", pname)] = approx_bayes_base_premium(LN_NORMAL_MODEL, MODEL1_STATS, prior).estimate
        out[("model2", pname)] = approx_bayes_base_premium(GAMMA_PARETO_MODEL, MODEL2_STATS, prior).estimate
        out[("model2-joint", pname)] = approx_bayes_base_premium(
            GAMMA_PARETO_MODEL_JOINT, MODEL2_STATS, prior).estimate
    return out


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_criterion_01_kenya_level_distribution(poisson_tables, criterion):
    P = np.array(poisson_tables["kenya"].P)
    dev_tab = np.max(np.abs(P - PRINTED["kenya"]["P"]))
    dev_orc = np.max(np.abs(P - kenya_P_oracle()))
    ok = dev_tab < 2e-3 and dev_orc < 1e-9
    criterion(1, ok, f"P(L=l)={fmt(P)}; table dev {dev_tab:.1e} (tol 2e-3); "
                     f"oracle dev {dev_orc:.1e} (tol 1e-9)")
    assert ok


def test_criterion_02_kenya_r2(poisson_tables, criterion):
    r2 = np.array(poisson_tables["kenya"]["bayes-level"].values)
    oracle = np.array([kenya_r2_oracle(l, c.shape, c.rate) for l, c in enumerate(PI1.components, 1)])
    dev_tab = np.max(np.abs(r2 - PRINTED["kenya"]["r2"]))
    dev_orc = np.max(np.abs(r2 - oracle))
    ok = dev_tab < 5e-3 and dev_orc < 1e-9
    criterion(2, ok, f"r2={fmt(r2)}; table dev {dev_tab:.1e} (tol 5e-3); "
                     f"oracle dev {dev_orc:.1e} (tol 1e-9)")
    assert ok


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="Brazil level-4 r1 is printed 0.999 while a/b = 7/7 = 1.000")
def test_criterion_03_claims_relativity(poisson_tables, criterion):
    closed = 0.0
    mismatches = []
    for name, prior in SYSTEMS.items():
        zip_r1 = [expected_bayes_relativity_claims(c.shape, c.rate, LAM, ZIPoisson(0.2))
                  for c in prior.components]
        for half, values in (("r1", poisson_tables[name]["bayes-claims"].values), ("r1_zip", zip_r1)):
            for l, (v, c) in enumerate(zip(values, prior.components), 1):
                closed = max(closed, abs(v - c.shape / c.rate))
                if f"{v:.3f}" != f"{PRINTED[name][half][l - 1]:.3f}":
                    mismatches.append(f"{name} {half} l={l}: {v:.3f} vs printed {PRINTED[name][half][l - 1]:.3f}")
    ok = closed < 1e-12 and not mismatches
    criterion(3, ok, f"|r1 - a/b| max {closed:.1e} (tol 1e-12); 3-decimal mismatches: "
                     f"{'; '.join(mismatches) or 'none'}")
    assert ok


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="Gilde-Sundt line under the stated prior has slope 0.137, table implies 0.098")
def test_criterion_04_ordinary_linear(poisson_tables, criterion):
    lin = poisson_tables["kenya"]["ordinary-linear"]
    dev = np.max(np.abs(np.array(lin.values) - PRINTED["kenya"]["lin"]))
    ok = dev < 1e-2
    criterion(4, ok, f"r_lin={fmt(lin.values)} (alpha {lin.alpha:.4f}, beta {lin.beta:.4f}); "
                     f"max dev {dev:.3f} (tol 1e-2)")
    assert ok


def test_criterion_05_optimal_linear_xi_fit(poisson_tables, criterion):
    res = poisson_tables["kenya"]
    xi, dev = fit_xi(res["bayes-claims"].values, res["bayes-level"].values, res.P, PRINTED["kenya"]["opt"])
    ok = dev < 1e-2
    criterion(5, ok, f"fitted xi={xi:.3f}; max dev {dev:.1e} (tol 1e-2)")
    assert ok


def test_criterion_06_base_premiums(base_premiums, criterion):
    devs = {k: abs(base_premiums[k] - v) for k, v in PRINTED_BASE.items()}
    joint = {p: base_premiums[("model2-joint", p)] for p in ("pi1", "pi2")}
    joint_dev = max(abs(joint[p] - PRINTED_BASE[("model2", p)]) for p in joint)
    ok = max(devs.values()) < 5e-3
    vals = ", ".join(f"{m}/{p}={base_premiums[(m, p)]:.5f}" for m, p in PRINTED_BASE)
    criterion(6, ok, f"{vals}; max dev {max(devs.values()):.1e} (tol 5e-3); Model 2 printed-kernel "
                     f"reading matches, exact-joint reading gives {joint['pi1']:.5f}/{joint['pi2']:.5f} "
                     f"(dev {joint_dev:.3f})")
    assert ok


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="Hong Kong premiums follow an increasing line no xi reproduces")
def test_criterion_07_level_premiums(poisson_tables, base_premiums, criterion):
    L_all = {}
    parts, ok = [], True
    for name, prior in SYSTEMS.items():
        res = poisson_tables[name]
        pname = "pi1" if prior is PI1 else "pi2"
        s = preset(name).levels
        L = np.arange(1, s + 1)
        best = (None, math.inf)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClassCViolationWarning)
            for i in range(1001):
                xi = i / 1000
                a, b = optimal_linear_coefficients(res["bayes-claims"].values, res["bayes-level"].values,
                                                   res.P, xi)
                dev = max(np.max(np.abs(base_premiums[(m, pname)] * (a + b * L)
                                        - np.array(PRINTED_PREMIUMS[name][m])))
                          for m in ("model1", "model2"))
                if dev < best[1]:
                    best = (xi, dev)
        L_all[name] = best
        ok &= best[1] < 5e-3
        parts.append(f"{name} xi={best[0]:.3f} dev {best[1]:.1e}")
    criterion(7, ok, "; ".join(parts) + " (tol 5e-3)")
    assert ok


def _random_case(rng):
    fams = [LogNormalUnitVariance(), NormalUnitVariance(), GammaShapeTwo(), ParetoTypeOne(0.3)]
    k = int(rng.integers(1, 4))
    n = int(rng.integers(1, 9))
    model = MixtureClaimModel(tuple(fams[i] for i in rng.integers(0, 4, size=k)))
    return model, rng.uniform(0.3, 4.0, size=n), float(rng.uniform(0.5, 3.0))


def _brute_partitions(n, largest=None):
    largest = n if largest is None else largest
    if n == 0:
        return 1
    return sum(_brute_partitions(n - p, p) for p in range(min(n, largest), 0, -1))


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="the M^k/k^n P(n) bound fails when k > n and M < 1")
def test_criterion_08_mixture_joint_properties(criterion):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(200):
        model, x, eta = _random_case(rng)
        exact = exact_mixture_joint(x, model, eta)
        worst = max(worst, abs(exact - mixture_product(x, model, eta)) / exact)
    rng = np.random.default_rng(SEED + 1)
    held, violations = 0, []
    for _ in range(100):
        model, x, eta = _random_case(rng)
        c = mixture_bound_check(x, model, eta)
        held += c.holds
        if not c.holds:
            violations.append(f"n={len(x)},k={model.k}")
    parts_ok = all(partition_count(n) == _brute_partitions(n) for n in range(11)) and partition_count(10) == 42
    ok = worst < 1e-12 and held == 100 and parts_ok
    criterion(8, ok, f"exact joint vs product worst rel {worst:.1e} (tol 1e-12); bound held "
                     f"{held}/100 (violations: {', '.join(violations) or 'none'}); "
                     f"partitions {'ok' if parts_ok else 'WRONG'}, P(10)={partition_count(10)}")
    assert ok


def test_criterion_09_loimaranta(poisson_tables, criterion):
    bms = preset("kenya")
    res = poisson_tables["kenya"]
    grid = np.linspace(0.01, 1.0, 25)
    const = max(abs(loimaranta_efficiency(np.full(7, 0.8), bms, Poisson(), x)) for x in grid)
    scale = max(
        abs(loimaranta_efficiency(res[m].as_array(), bms, Poisson(), x)
            - loimaranta_efficiency(2 * res[m].as_array(), bms, Poisson(), x))
        for m in METHODS for x in grid[::4]
    )
    sweep = efficiency_sweep(res.tables, bms, Poisson(), np.linspace(0.05, 1.0, 100))
    gap = np.array(sweep.curves["optimal-linear"]) - np.array(sweep.curves["ordinary-linear"])
    ok = const < 1e-10 and scale < 1e-10 and np.all(gap >= 0)
    criterion(9, ok, f"constant {const:.1e}, r->2r {scale:.1e} (tol 1e-10); "
                     f"opt - lin efficiency min {gap.min():.3f} over 100 points")
    assert ok


def _invariants(res, bms, model, prior):
    P = np.array(res.P)
    assert abs(P.sum() - 1) < 1e-8 and np.all(P > 0)
    for c, v in zip(prior.components, res["bayes-claims"].values):
        assert abs(v - c.shape / c.rate) < 1e-12
    for m in ("ordinary-linear", "optimal-linear"):
        t = res[m]
        assert t.values == tuple(t.alpha + t.beta * l for l in range(1, bms.levels + 1))
    for m in METHODS:
        assert all(v > 0 for v in res[m].values)
    for mu in (1e-3, LAM, 1.0):
        A = transition_matrix(bms, model, mu)
        pi = solve_stationary(A)
        assert np.max(np.abs(pi @ A - pi)) < 1e-12
    assert abs(loimaranta_efficiency(np.ones(bms.levels), bms, model, 0.3)) < 1e-10


def test_criterion_10_zip(poisson_tables, criterion):
    # p = 0 must degenerate to the Poisson path in every column
    worst = 0.0
    for name, prior in SYSTEMS.items():
        z = relativity_tables(preset(name), ZIPoisson(0.0), LAM, prior, xi=0.5)
        p = poisson_tables[name]
        worst = max(worst, np.max(np.abs(np.array(z.P) - p.P)))
        for m in METHODS:
            worst = max(worst, np.max(np.abs(np.array(z[m].values) - p[m].values)))
    z0 = relativity_tables(preset("kenya"), ZIPoisson(0.0), LAM, PI1, xi=0.5)
    same_tol = (np.max(np.abs(np.array(z0.P) - PRINTED["kenya"]["P"])) < 2e-3
                and np.max(np.abs(np.array(z0["bayes-level"].values) - PRINTED["kenya"]["r2"])) < 5e-3)
    for p in (0.1, 0.2, 0.3):
        for name, prior in SYSTEMS.items():
            model = ZIPoisson(p)
            _invariants(relativity_tables(preset(name), model, LAM, prior), preset(name), model, prior)
    best = min(((abs(level_mass(preset("kenya"), ZIPoisson(i / 100), LAM, PI1, 1) - 0.635), i / 100)
                for i in range(61)))
    p_fit = best[1]
    P1 = level_mass(preset("kenya"), ZIPoisson(p_fit), LAM, PI1, 1)
    ok = worst < 1e-12 and same_tol
    criterion(10, ok, f"ZIP(p=0) vs Poisson max diff {worst:.1e}; invariants pass for p in (0.1, 0.2, 0.3); "
                      f"closest p to Kenya ZIP P(L=1)=0.635 is p={p_fit:.2f} (P(L=1)={P1:.4f})")
    assert ok


def _gamma_kernel(a, b, power=0, s=0.0):
    def f(t):
        with np.errstate(divide="ignore"):
            return a * math.log(b) - gammaln(a) + (a - 1 + power) * np.log(t) - (b + s) * t
    return f


def test_criterion_11_numerics(criterion):
    quad = 0.0
    for a in (1.0, 3.0, 7.0, 13.0):
        for b in (7.0, 6.0, 0.5):
            quad = max(quad, abs(integrate_halfline(_gamma_kernel(a, b)).value - 1.0))
            quad = max(quad, abs(integrate_halfline(_gamma_kernel(a, b, 1)).value / (a / b) - 1.0))
            s = 0.7
            quad = max(quad, abs(integrate_halfline(_gamma_kernel(a, b, 0, s)).value / (b / (b + s)) ** a - 1.0))
    rng = np.random.default_rng(SEED)
    resid = 0.0
    for _ in range(1000):
        s = int(rng.integers(2, 12))
        A = rng.random((s, s)) + 1e-3
        A /= A.sum(axis=1, keepdims=True)
        pi = solve_stationary(A)
        resid = max(resid, np.max(np.abs(pi @ A - pi)))

    def f(x):
        return x ** 3 * math.exp(x)
    errs = [abs(log_derivative(f, 0.7, h) - 3.7) for h in (0.1, 0.05, 0.025)]
    order = math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])
    ok = quad < 1e-10 and resid < 1e-12 and all(abs(o - 2) < 0.1 for o in order)
    criterion(11, ok, f"quadrature max rel err {quad:.1e} (tol 1e-10); stationary residual "
                      f"{resid:.1e} over 1000 chains (tol 1e-12); log-derivative order "
                      f"{order[0]:.2f}, {order[1]:.2f}")
    assert ok
