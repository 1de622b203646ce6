"""Asymptotic inference: limit score, covariance V0, the affinity test,
and the simulation bootstrap for snapshot estimators.

V0 is the covariance of the limiting score,

    V0 = sum_k (grad f/f)(k) (grad f/f)(k)^T p_{>k}  -  m m^T,
    m  = sum_k (grad f/f)(k) p_{>k},

where p_{>k} are survivals of the limiting degree law; sqrt(n) times
the MLE error is asymptotically N(0, V0^{-1}).  The limit Hessian
equals -V0 at the true parameter, which is verified internally for
power-offset families through the a..f moment route.

The affinity test compares beta_hat against the boundary value 1 with a
left-tailed normal critical value (the limit of the statistic is
Z 1{Z <= 0}); the bootstrap variance grows s fresh trees of size m at
the fitted parameter and rescales the scatter of their snapshot fits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.integrate import quad
from scipy.special import digamma, gammaln

from .errors import (
    ConvergenceError,
    DegeneracyError,
    DomainError,
    ProcedureError,
    TruncationError,
)
from .estimators import FitResult, fit_pmle
from .families import PowerOffset
from .limits import LimitLaw, degree_probs, limit_law
from .rng import as_generator, digest, substream
from .simulate import grow

Z_TWO_SIDED_005 = 1.959964  # upper 2.5% standard normal point
Z_LEFT_005 = -1.644854  # lower 5% standard normal point

_V0_TOL = 1e-10  # truncation target for the V0 series
_V0_CAP = 1 << 22


def _norm_left_quantile(size: float) -> float:
    if not 0.0 < size < 0.5:
        raise DomainError("test size must be in (0, 0.5)")
    return Z_LEFT_005 if size == 0.05 else float(stats.norm.ppf(size))


def _norm_two_sided_quantile(size: float) -> float:
    if not 0.0 < size < 0.5:
        raise DomainError("test size must be in (0, 0.5)")
    return Z_TWO_SIDED_005 if size == 0.05 else float(stats.norm.ppf(1.0 - size / 2.0))


@dataclass
class AsymptoticInfo:
    """V0, its inverse, and the limit Hessian, with truncation records."""

    V0: np.ndarray
    V0_inv: np.ndarray
    hessian_limit: np.ndarray
    truncation_K: int
    truncation_error_bound: float


@dataclass
class WaldReport:
    """A Wald-type test outcome.

    tail is "left" (reject iff statistic < critical_value) or
    "two-sided" (reject iff |statistic| > critical_value).
    """

    statistic: float
    critical_value: float
    reject: bool
    variance_entry: float
    tail: str = "left"


@dataclass
class BootstrapVariance:
    """Rescaled scatter of bootstrap snapshot fits (m * sample covariance)."""

    sigma_tilde: np.ndarray
    m: int
    s: int
    seed_digest: str


# ---------------------------------------------------------------------------
# limit score
# ---------------------------------------------------------------------------


def limit_score(family, theta, law0: LimitLaw) -> np.ndarray:
    """Asymptotic score i(f_theta) under the degree law law0.

    Computed over the law's retained support; raises TruncationError if
    the estimated contribution of the discarded tail exceeds 1e-6.
    """
    th = family.validate_theta(theta)
    p = law0.probs
    K = p.size
    ks = np.arange(1, K + 1)
    f = family.eval(th, ks)
    if np.any(f <= 0.0):
        raise DomainError("preference function must be positive")
    g = family.grad(th, ks)
    surv = law0.tail_probs()[1:]  # p_{>k}, k = 1..K

    glf = g / f[:, None]
    term1 = glf.T @ surv
    num = p @ g
    den = float(np.dot(p, f))
    value = term1 - num / den

    # tail estimate: sum_{k>=1} p_{>k} = 1 and sum_k k p_k = 2 pin the
    # discarded masses; grad-log factors are extrapolated from K and 4K
    R1 = max(0.0, 1.0 - float(surv.sum()))
    R2 = max(0.0, 2.0 - float(np.dot(ks, p)))
    G = max(
        float(np.abs(glf[-1]).max()),
        float(np.abs(family.grad(th, 4 * K) / family.eval(th, 4 * K)).max()),
    )
    f4K = float(family.eval(th, 4 * K))
    mass_tail = (f4K / (4.0 * K)) * R2 * 2.0  # bounds sum_{k>K} p_k f(k)
    tail = 2.0 * G * R1 + (G * mass_tail + float(np.abs(num).max()) / den * mass_tail) / den
    if tail > 1e-6:
        raise TruncationError(
            f"discarded tail may contribute {tail:.2e} > 1e-06 to the limit score"
        )
    return value


# ---------------------------------------------------------------------------
# V0 and the limit Hessian
# ---------------------------------------------------------------------------


def _v0_at(family, th, lam, K):
    ks = np.arange(1, K + 1)
    p = degree_probs(family, th, lam, K)
    f = family.eval(th, ks)
    g = family.grad(th, ks)
    h = family.hess(th, ks)
    t = f * p / lam  # p_{>k}, exact tail identity
    glf = g / f[:, None]
    m = glf.T @ t
    M2 = np.einsum("ki,kj,k->ij", glf, glf, t)
    V0 = M2 - np.outer(m, m)

    pg = p @ g
    ph = np.einsum("k,kij->ij", p, h)
    hlf = np.einsum("kij,k->ij", h / f[:, None, None], t)
    hess_general = (hlf - M2) - ph / lam + np.outer(pg, pg) / lam**2

    # growth model |grad f/f| <= C log^gamma k, fitted on two grid points
    k1, k2 = max(8, K // 2), K
    G1 = float(np.abs(family.grad(th, k1) / family.eval(th, k1)).max())
    G2 = float(np.abs(family.grad(th, k2) / family.eval(th, k2)).max())
    if G1 > 0.0 and G2 > 0.0:
        gamma = np.clip(
            np.log(G2 / G1) / np.log(np.log(k2) / np.log(k1)), 0.0, 6.0
        )
        C = G2 / np.log(k2) ** gamma
    else:
        gamma, C = 0.0, 0.0
    tail_t = max(0.0, 1.0 - float(t.sum()))
    bound = tail_t * (C * np.log(K) ** gamma) ** 2

    extras = (p, f, t)
    return V0, hess_general, bound, extras


def fisher_V0(family, theta0, law0: LimitLaw) -> AsymptoticInfo:
    """Asymptotic covariance V0 of the score at theta0, and its inverse.

    The series is extended past the law's truncation until the running
    increment and the growth-model tail bound both drop below 1e-10.
    For power-offset families the limit Hessian is assembled from the
    a..f moments and cross-checked against -V0.  On the affine line
    beta = 1, where the series tail thins out too slowly to sum near
    alpha = 0, the closed-form law takes over and the moment tails are
    integrated instead; elsewhere an uncertifiable tail raises
    TruncationError.
    """
    th = family.validate_theta(theta0)
    lam = law0.lambda_star
    K = max(law0.truncation_K, 16)
    V0, hess_general, bound, extras = _v0_at(family, th, lam, K)
    exact_route = False
    while True:
        if K >= _V0_CAP:
            # on the affine line beta = 1 the moment tails decay like
            # log^2 K / K^(1+alpha), far too slowly to sum near alpha = 0,
            # but the law is closed form there and the tails integrate
            if isinstance(family, PowerOffset) and abs(float(th[1]) - 1.0) <= 1e-9:
                V0_b, bound_b, K_b = _v0_affine_boundary(float(th[0]))
                if bound_b <= _V0_TOL:
                    V0, bound, K = V0_b, bound_b, K_b
                    exact_route = True
                    break
            raise TruncationError(
                f"V0 series not stable within {_V0_CAP} terms (bound {bound:.2e})"
            )
        V0_next, hess_next, bound_next, extras_next = _v0_at(family, th, lam, 2 * K)
        inc = float(np.abs(V0_next - V0).max())
        K, V0, hess_general, bound, extras = (
            2 * K,
            V0_next,
            hess_next,
            bound_next,
            extras_next,
        )
        if inc <= _V0_TOL and bound <= _V0_TOL:
            break

    V0 = 0.5 * (V0 + V0.T)
    eig = np.linalg.eigvalsh(V0)
    # relative threshold: a scale-invariant family makes V0 exactly
    # singular, and rounding can leave the null eigenvalue at +-1e-16
    if eig.min() <= 1e-10 * max(eig.max(), 0.0):
        raise DegeneracyError(f"V0 is singular (eigenvalues {eig})")
    V0_inv = np.linalg.inv(V0)
    V0_inv = 0.5 * (V0_inv + V0_inv.T)

    if exact_route:
        # a = lambda and the a..f moments reduce to the V0 moments on
        # the affine line, so the moment-route Hessian is -V0 exactly
        hessian_limit = -V0.copy()
    elif isinstance(family, PowerOffset):
        hessian_limit = _power_offset_hessian(th, *extras)
        if float(np.abs(hessian_limit + V0).max()) > 1e-8:
            raise DegeneracyError(
                "moment-route Hessian does not match -V0; series inconsistency"
            )
    else:
        hessian_limit = 0.5 * (hess_general + hess_general.T)
    return AsymptoticInfo(
        V0=V0,
        V0_inv=V0_inv,
        hessian_limit=hessian_limit,
        truncation_K=K,
        truncation_error_bound=float(bound),
    )


def _power_offset_hessian(th, p, f, t):
    """Limit Hessian of a power-offset family from the a..f moments."""
    alpha, beta = th
    K = p.size
    k = np.arange(1, K + 1, dtype=float)
    w = p * f
    base = k + alpha
    lb = np.log(base)
    a = float(w.sum())
    b = float((w * beta**2 / base**2).sum())
    c = float((w * beta / base).sum())
    d = float((w * beta * lb / base).sum())
    e = float((w * lb).sum())
    f6 = float((w * lb**2).sum())
    return (-1.0 / a**2) * np.array([[a * b - c**2, a * d - c * e],
                                     [a * d - c * e, a * f6 - e**2]])


def _v0_affine_boundary(alpha, K0=200_000):
    """V0 of the power-offset family on the line beta = 1.

    There f(k) = k + alpha and the survival weights have the closed form
    t_k = Gamma(k+1+a) Gamma(3+2a) / (Gamma(k+3+2a) Gamma(1+a)), decaying
    like k^-(2+alpha).  The log-weighted moments are summed directly to K0
    and extended by integrating the gamma-ratio continuation with the
    midpoint rule, substituting x = mid e^s so the power-law tail becomes
    exponential decay; Stirling's series for the log gamma ratio avoids
    both overflow and large-x cancellation.  The returned bound collects
    the |h'|/24 cell-error total, the quadrature error estimates, the
    head roundoff, and the deviation of the mass identity sum_k t_k = 1.
    """
    lc = gammaln(3.0 + 2.0 * alpha) - gammaln(1.0 + alpha)
    ks = np.arange(1, K0 + 1, dtype=float)
    t = np.exp(gammaln(ks + 1.0 + alpha) - gammaln(ks + 3.0 + 2.0 * alpha) + lc)
    base = ks + alpha
    lb = np.log(base)

    # log Gamma(x+a) - log Gamma(x+b) = (a-b) log x + A/x + B/x^2 + O(x^-3)
    A = 0.5 * ((1.0 + alpha) * alpha - (3.0 + 2.0 * alpha) * (2.0 + 2.0 * alpha))
    B = (2.0 + alpha) * (14.0 * alpha + 15.0) * (alpha + 1.0) / 12.0
    mid = K0 + 0.5
    lmid = np.log(mid)

    def g(s, j, r):
        ix = np.exp(-s) / mid
        lx = lmid + s
        lbx = lx + np.log1p(alpha * ix)  # log(x + alpha)
        lg = lc - (2.0 + alpha) * lx + A * ix + B * ix * ix - r * lbx + lx
        if j:
            lg += j * np.log(lbx)
        return np.exp(lg) if lg > -745.0 else 0.0

    S = {}
    err = 5e2 / mid**3  # Stirling remainder, relative to O(1) moments
    for j, r in ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)):
        terms = t * lb**j / base**r
        head = float(terms.sum())
        err += float(np.finfo(float).eps * (terms * ks * np.log(ks + 4.0 + 2.0 * alpha)).sum())

        tail, qerr = quad(g, 0.0, np.inf, args=(j, r), epsabs=1e-14, epsrel=1e-12, limit=400)
        dlog = digamma(mid + 1.0 + alpha) - digamma(mid + 3.0 + 2.0 * alpha)
        dlog -= r / (mid + alpha)
        if j:
            dlog += j / ((mid + alpha) * np.log(mid + alpha))
        err += abs(qerr) + abs(g(0.0, j, r) / mid * dlog) / 24.0
        S[(j, r)] = head + float(tail)

    err += abs(S[(0, 0)] - 1.0)
    m = np.array([S[(0, 1)], S[(1, 0)]])
    M2 = np.array([[S[(0, 2)], S[(1, 1)]], [S[(1, 1)], S[(2, 0)]]])
    return M2 - np.outer(m, m), float(err), K0


# ---------------------------------------------------------------------------
# affinity (boundary) test
# ---------------------------------------------------------------------------


def wald_affinity(family, fit: FitResult, beta_hat: float, n: int,
                  size: float = 0.05) -> WaldReport:
    """Left-tailed test of beta = 1 within a power-offset family.

    fit must be the constrained fit with beta pinned at 1; its alpha is
    plugged into V to compute the variance entry for beta.
    """
    if not isinstance(family, PowerOffset):
        raise DomainError("the affinity test is defined for power-offset families")
    n = int(n)
    if n < 2:
        raise DomainError("need n >= 2")
    alpha_hat = float(fit.theta_hat[0])
    theta_null = np.array([alpha_hat, 1.0])
    law = limit_law(family, theta_null)
    info = fisher_V0(family, theta_null, law)
    ve = float(info.V0_inv[1, 1])
    if not np.isfinite(ve) or ve <= 0.0:
        raise DegeneracyError(f"variance entry {ve} not usable")
    statistic = np.sqrt(n) * (float(beta_hat) - 1.0) / np.sqrt(ve)
    q = _norm_left_quantile(size)
    return WaldReport(
        statistic=float(statistic),
        critical_value=q,
        reject=bool(statistic < q),
        variance_entry=ve,
        tail="left",
    )


def boundary_limit_sample(a, V, V0, seed) -> float:
    """One draw of W 1{W <= 0}, W ~ N(0, a^T V0^{-1} V V0^{-1} a).

    This is the limit null of the affinity statistic when the true
    parameter sits on the boundary.
    """
    a = np.asarray(a, dtype=float)
    V = np.asarray(V, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    for name, mat in (("V", V), ("V0", V0)):
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            raise DomainError(f"{name} must be positive definite") from None
    x = np.linalg.solve(V0, a)
    var = float(x @ V @ x)
    w = float(as_generator(seed).normal(0.0, np.sqrt(var)))
    return w if w <= 0.0 else 0.0


# ---------------------------------------------------------------------------
# bootstrap variance
# ---------------------------------------------------------------------------


def bootstrap_variance(family, theta_tilde, m: int, s: int, seed) -> BootstrapVariance:
    """Scatter of snapshot fits over s simulated trees of size m.

    Returns m * (mean outer product - outer product of the mean) of the
    pseudo-MLE fits under f at theta_tilde; replicate r uses the RNG
    substream (seed, r), so results do not depend on scheduling.
    """
    th = family.validate_theta(theta_tilde)
    m = int(m)
    s = int(s)
    if m < 10:
        raise DomainError("need bootstrap tree size m >= 10")
    if s < 2:
        raise DomainError("need at least 2 bootstrap replicates")
    fits = []
    dropped = 0
    for i in range(s):
        _, snap = grow(family, th, m, substream(seed, i))
        try:
            r = fit_pmle(family, snap, init=th)
            ok = r.converged
        except ConvergenceError:
            ok = False
        if ok:
            fits.append(r.theta_hat)
        else:
            dropped += 1
            warnings.warn(f"bootstrap replicate {i} failed to fit; dropped")
    if dropped > 0.1 * s:
        raise ProcedureError(f"{dropped}/{s} bootstrap replicates failed")
    X = np.asarray(fits)
    mean = X.mean(axis=0)
    sigma = m * (X.T @ X / X.shape[0] - np.outer(mean, mean))
    return BootstrapVariance(
        sigma_tilde=0.5 * (sigma + sigma.T), m=m, s=s, seed_digest=digest(seed, s)
    )


def bootstrap_wald(theta_tilde, sigma_tilde, coordinate: int, null_value: float,
                   n: int, size: float = 0.05) -> WaldReport:
    """Two-sided coordinate test using a bootstrap variance."""
    th = np.asarray(theta_tilde, dtype=float)
    sig = np.asarray(sigma_tilde, dtype=float)
    c = int(coordinate)
    if not 0 <= c < th.size:
        raise DomainError(f"coordinate {c} out of range")
    v = float(sig[c, c])
    if not np.isfinite(v) or v <= 0.0:
        raise DegeneracyError(f"variance entry {v} not usable")
    statistic = np.sqrt(int(n)) * (th[c] - float(null_value)) / np.sqrt(v)
    z = _norm_two_sided_quantile(size)
    return WaldReport(
        statistic=float(statistic),
        critical_value=z,
        reject=bool(abs(statistic) > z),
        variance_entry=v,
        tail="two-sided",
    )
