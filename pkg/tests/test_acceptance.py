"""Acceptance battery for the primary component.

Each test prints exactly one line

    [PRIMARY] criterion <tag>: PASS|FAIL - <measured detail>

and then asserts, so the printed verdicts match the pytest outcome.
Run with -s (or -rA) to see the lines for passing criteria too.
Benchmark targets that the implementation cannot meet are asserted at
their stated tolerance anyway and fail with the measured numbers.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from patree.asymptotics import fisher_V0, limit_score
from patree.estimators import hessian, loglik, score
from patree.families import (
    Affine,
    EventuallyConstant,
    LogPower,
    PowerOffset,
)
from patree.limits import limit_law, malthusian
from patree.montecarlo import run_bootstrap_coverage, run_mc, run_wald_experiment
from patree.rng import substream
from patree.simulate import grow, snapshot_of, total_preference_trace
from patree.urns import affine_pk, build_affine_urn, build_cutoff_urn, limit_covariance

from conftest import THETA_F2, THETA_F4, THETA_F5


def _line(tag, ok, detail):
    print(f"[PRIMARY] criterion {tag}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


# ---------------------------------------------------------------------------
# 1. limit variance benchmarks
# ---------------------------------------------------------------------------

_VARIANCE_TARGETS = {
    "f2": (THETA_F2, np.array([[169.30, 47.56], [47.56, 14.94]])),
    "f4": (THETA_F4, np.array([[42429.33, 4716.76], [4716.76, 539.75]])),
    "f5": (THETA_F5, np.array([[1762.05, 316.58], [316.58, 61.64]])),
}


@pytest.mark.parametrize("name", ["f2", "f4", "f5"])
def test_criterion_01_limit_variance(name):
    theta, target = _VARIANCE_TARGETS[name]
    family = PowerOffset()
    law = limit_law(family, theta)
    t0 = time.perf_counter()
    info = fisher_V0(family, theta, law)
    dt = time.perf_counter() - t0
    rel = float((np.abs(info.V0_inv - target) / np.abs(target)).max())
    ok = rel <= 5e-3 and dt < 1.0
    detail = (
        f"max entrywise deviation {rel:.2e} from the benchmark inverse "
        f"variance (tol 5e-3), {dt:.2f}s (< 1s)"
    )
    assert _line(f"1 ({name})", ok, detail), detail


# ---------------------------------------------------------------------------
# 2. affine growth rate and law closed forms
# ---------------------------------------------------------------------------


def test_criterion_02_affine_closed_forms():
    t0 = time.perf_counter()
    dev_lam = max(
        abs(malthusian(Affine(), [alpha]) - (2.0 + alpha))
        for alpha in (-0.5, 0.0, 2.0)
    )
    law = limit_law(Affine(), [0.0])
    dev_law = max(
        abs(law.probs[k - 1] - 4.0 / (k * (k + 1) * (k + 2))) for k in range(1, 21)
    )
    dt = time.perf_counter() - t0
    ok = dev_lam <= 1e-10 and dev_law <= 1e-10 and dt < 1.0
    detail = (
        f"growth-rate deviation {dev_lam:.2e}, law deviation {dev_law:.2e} "
        f"(tol 1e-10), {dt:.2f}s (< 1s)"
    )
    assert _line("2", ok, detail), detail


# ---------------------------------------------------------------------------
# 3. exact identities on simulated trees
# ---------------------------------------------------------------------------

_MIXED = (
    (PowerOffset(), THETA_F2),
    (Affine(), (1.0,)),
    (LogPower(), (0.8,)),
    (EventuallyConstant(3), (1.0, 1.5, 2.0)),
    (PowerOffset(), THETA_F4),
)


def _naive_loglik(family, theta, degrees):
    th = family.validate_theta(theta)

    def f(k):
        return float(family.eval(th, k))

    counts = {1: 1}
    S = f(1)
    total = 0.0
    for d in degrees:
        d = int(d)
        total += math.log(f(d)) - math.log(S)
        counts[d] -= 1
        counts[d + 1] = counts.get(d + 1, 0) + 1
        counts[1] = counts.get(1, 0) + 1
        S += f(d + 1) - f(d) + f(1)
    return total / (degrees.size + 1)


def test_criterion_03_identity_suite():
    worst_sf = worst_ll = 0.0
    count_ok = True
    for i in range(50):
        family, theta = _MIXED[i % len(_MIXED)]
        hist, snap = grow(family, theta, 1000, substream(20260803, i))
        degs = hist.degrees_chosen

        # attachment counts at degree k match the final tail count
        chosen = np.bincount(degs)
        kmax = max(snap.counts)
        for k in range(1, kmax + 1):
            n_gt = sum(c for j, c in snap.counts.items() if j > k)
            got = int(chosen[k]) if k < chosen.size else 0
            count_ok = count_ok and got == n_gt

        # running normalizer matches a from-scratch recomputation; the
        # trace entry at t is the total in force when attachment t is drawn
        trace = total_preference_trace(family, theta, hist)
        counts = {1: 1}
        th = family.validate_theta(theta)
        for t, d in enumerate(degs):
            d = int(d)
            fresh = sum(c * float(family.eval(th, k)) for k, c in counts.items() if c)
            worst_sf = max(worst_sf, abs(trace[t] - fresh) / max(1.0, abs(fresh)))
            counts[d] -= 1
            counts[d + 1] = counts.get(d + 1, 0) + 1
            counts[1] = counts.get(1, 0) + 1

        ll = loglik(family, theta, hist)
        worst_ll = max(worst_ll, abs(ll - _naive_loglik(family, theta, degs)))
    ok = count_ok and worst_sf <= 1e-12 and worst_ll <= 1e-12
    detail = (
        f"count identity {'exact' if count_ok else 'VIOLATED'}, normalizer "
        f"recursion dev {worst_sf:.2e}, loglik vs stepwise oracle dev "
        f"{worst_ll:.2e} (tol 1e-12, 50 trees)"
    )
    assert _line("3", ok, detail), detail


# ---------------------------------------------------------------------------
# 4. derivative consistency
# ---------------------------------------------------------------------------

_GRID = [(0.5, 0.55), (2.0, 0.7), (4.0, 0.8), (0.0, 0.62), (1.2, 0.45)]


def test_criterion_04_derivative_checks():
    family = PowerOffset()
    worst_s = worst_h = 0.0
    for i in range(10):
        hist, _ = grow(family, THETA_F2, 1000, substream(20260804, i))
        for theta in _GRID:
            th = np.asarray(theta, dtype=float)
            s = score(family, th, hist)
            h_mat = hessian(family, th, hist)
            fd_s = np.empty(2)
            fd_h = np.empty((2, 2))
            for j in range(2):
                step = 1e-6 * max(1.0, abs(th[j]))
                up, dn = th.copy(), th.copy()
                up[j] += step
                dn[j] -= step
                fd_s[j] = (loglik(family, up, hist) - loglik(family, dn, hist)) / (2 * step)
                fd_h[:, j] = (score(family, up, hist) - score(family, dn, hist)) / (2 * step)
            worst_s = max(worst_s, float(np.abs(s - fd_s).max() / max(1.0, np.abs(s).max())))
            worst_h = max(worst_h, float(np.abs(h_mat - fd_h).max() / max(1.0, np.abs(h_mat).max())))
    ok = worst_s <= 1e-6 and worst_h <= 1e-5
    detail = (
        f"score vs differenced loglik {worst_s:.2e} (tol 1e-6), hessian vs "
        f"differenced score {worst_h:.2e} (tol 1e-5), 5 points x 10 trees"
    )
    assert _line("4", ok, detail), detail


# ---------------------------------------------------------------------------
# 5. the limit score vanishes at the truth
# ---------------------------------------------------------------------------


def test_criterion_05_limit_score_zero():
    cases = (
        (PowerOffset(), THETA_F2),
        (Affine(), (1.0,)),
        (LogPower(), (0.8,)),
        (EventuallyConstant(3), (1.0, 1.5, 2.0)),
    )
    # the affine tail decays polynomially, so resolve the law finely
    # enough that score-sum truncation sits below the 1e-9 target
    worst = max(
        float(np.abs(limit_score(fam, th, limit_law(fam, th, tail_tol=1e-14))).max())
        for fam, th in cases
    )
    ok = worst <= 1e-9
    detail = f"max |limit score| {worst:.2e} over four family kinds (tol 1e-9)"
    assert _line("5", ok, detail), detail


# ---------------------------------------------------------------------------
# 6. full-history estimator normality at desk scale
# ---------------------------------------------------------------------------


def test_criterion_06_mle_normality():
    family = PowerOffset()
    info = fisher_V0(family, THETA_F2, limit_law(family, THETA_F2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_mc(
            {"family": family, "theta0": THETA_F2, "n": 10_000, "reps": 200,
             "method": "mle", "seed": 20260806}
        )
    se = np.sqrt(np.diag(info.V0_inv) / (10_000 * report.N))
    z = np.abs(report.sample_mean_diff) / se
    rel = float((np.abs(report.rescaled_cov - info.V0_inv) / np.abs(info.V0_inv)).max())
    ok = bool(z.max() <= 4.0) and rel <= 0.25
    detail = (
        f"mean diff {z.max():.2f} standard errors (tol 4), rescaled "
        f"covariance within {rel:.1%} of the limit (tol 25%), N={report.N}"
    )
    assert _line("6", ok, detail), detail


# ---------------------------------------------------------------------------
# 7. affinity test size and power at desk scale
# ---------------------------------------------------------------------------


def test_criterion_07_wald_size():
    family = PowerOffset()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = run_wald_experiment(
            {"family": family, "theta0": THETA_F5, "n": 100_000, "reps": 200,
             "size": 0.05, "seed": 20260807}
        )
    lo = int(stats.binom.ppf(0.025, out["used"], 0.05))
    hi = int(stats.binom.ppf(0.975, out["used"], 0.05))
    ok = lo <= out["rejections"] <= hi
    detail = (
        f"{out['rejections']}/{out['used']} rejections under the null, "
        f"binomial 95% acceptance band [{lo}, {hi}] at p=0.05"
    )
    assert _line("7 (size)", ok, detail), detail


def test_criterion_07_wald_power():
    family = PowerOffset()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = run_wald_experiment(
            {"family": family, "theta0": THETA_F4, "n": 100_000, "reps": 50,
             "size": 0.05, "seed": 20260871}
        )
    ok = out["proportion"] == 1.0
    detail = (
        f"rejection proportion {out['proportion']:.3f} on strictly concave "
        f"data (need 1.0), N={out['used']}; at this n the statistic centers "
        f"near -2, at n=1e6 it centers near -6 and every replicate rejects"
    )
    assert _line("7 (power)", ok, detail), detail


# ---------------------------------------------------------------------------
# 8. urn covariance closed forms
# ---------------------------------------------------------------------------


def test_criterion_08_uniform_urn():
    system = build_cutoff_urn(EventuallyConstant(1), [1.0], kappa=1)
    sigma = limit_covariance(system)
    target = np.array([[1.0, -1.0], [-1.0, 1.0]]) / 12.0
    dev = float(np.abs(sigma - target).max())
    ok = dev <= 1e-10
    detail = f"max deviation {dev:.2e} from [[1,-1],[-1,1]]/12 (tol 1e-10)"
    assert _line("8 (uniform)", ok, detail), detail


def test_criterion_08_affine_tail_map():
    kappa = 4
    sigma = limit_covariance(build_affine_urn(0.0, kappa))
    L = np.zeros((kappa, kappa + 1))
    for k in range(kappa):
        L[k, : k + 1] = -1.0  # sqrt(n) tail fluctuation = -summed counts
    mapped = L @ sigma @ L.T
    p = np.array([affine_pk(0.0, k) for k in range(1, kappa + 1)])
    formula = np.diag(p * (1.0 - p)) - np.outer(p, p) * (1.0 - np.eye(kappa))
    dev = float(np.abs(mapped - formula).max())
    ok = dev <= 1e-8
    detail = (
        f"max deviation {dev:.2e} (tol 1e-8); leading mapped entry "
        f"{mapped[0, 0]:.6f} vs formula {formula[0, 0]:.6f}, and simulated "
        f"fluctuations side with the mapped value"
    )
    assert _line("8 (affine tail map)", ok, detail), detail


# ---------------------------------------------------------------------------
# 9. affine urn spectrum factorization
# ---------------------------------------------------------------------------


def test_criterion_09_affine_spectrum():
    worst = 0.0
    for kappa in range(2, 9):
        for alpha in (0.0, 2.0):
            w = np.linalg.eigvals(build_affine_urn(alpha, kappa).A)
            worst = max(worst, float(np.abs(w.imag).max()))
            got = np.sort(w.real)
            want = np.sort(
                np.array([2.0 + alpha] + [-(l + alpha) for l in range(1, kappa + 1)])
            )
            worst = max(worst, float(np.abs(got - want).max()))
    ok = worst <= 1e-8
    detail = (
        f"max eigenvalue deviation {worst:.2e} from the factorized roots "
        f"(tol 1e-8, kappa 2..8, alpha 0 and 2)"
    )
    assert _line("9", ok, detail), detail


# ---------------------------------------------------------------------------
# 10. bootstrap test size at desk scale
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "tag,coordinate,null_value,seed",
    [("alpha", 0, 0.0, 20260810), ("beta", 1, 2.0 / 3.0, 20260811)],
)
def test_criterion_10_bootstrap_size(tag, coordinate, null_value, seed):
    out = run_bootstrap_coverage(
        {"family": PowerOffset(), "theta0": THETA_F2, "n": 10_000,
         "reps": 200, "m": 10_000, "s": 200, "coordinate": coordinate,
         "null_value": null_value, "size": 0.05, "seed": seed}
    )
    ok = 0.02 <= out["proportion"] <= 0.10
    detail = (
        f"rejection rate {out['proportion']:.3f} under the true "
        f"{tag} (band [0.02, 0.10]), N={out['used']}"
    )
    assert _line(f"10 ({tag})", ok, detail), detail


# ---------------------------------------------------------------------------
# 11. estimator efficiency ordering
# ---------------------------------------------------------------------------


def test_criterion_11_estimator_ordering():
    family = PowerOffset()
    traces = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for method in ("mle", "pmle", "ee"):
            report = run_mc(
                {"family": family, "theta0": THETA_F2, "n": 100_000,
                 "reps": 200, "method": method, "seed": 20260812}
            )
            traces[method] = float(np.trace(report.rescaled_cov))
    ratio = traces["ee"] / traces["mle"]
    ok = traces["mle"] < traces["pmle"] < traces["ee"] and ratio > 5.0
    detail = (
        f"trace mle {traces['mle']:.1f} < pmle {traces['pmle']:.1f} < "
        f"ee {traces['ee']:.1f}, ee/mle ratio {ratio:.1f} (need > 5)"
    )
    assert _line("11", ok, detail), detail
