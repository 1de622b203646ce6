"""Limit quantities of the attachment rule: the Laplace-type transform
rho, the Malthusian parameter lambda*, and the limiting degree law.

rho(lam) = sum_{l>=1} prod_{k<=l} f(k) / (lam + f(k)); lambda* solves
rho(lambda*) = 1, and the limiting degree distribution is

    p_k = lambda*/(lambda* + f(k)) * prod_{j<k} f(j)/(lambda* + f(j)),

with the tail identity p_{>k} = f(k) p_k / lambda* and mean preference
sum_k f(k) p_k = lambda*.

Affine f(k) = k + alpha admits closed forms (rho = (1+alpha)/(lam-1),
lambda* = 2 + alpha); eventually constant f sums exactly as a geometric
series.  Strictly sublinear unbounded kinds are summed with a certified
tail bound: term ratios r_l = f(l)/(lam+f(l)) increase with l, so the
tail past l is bounded segment by segment using the ratio at a doubled
horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, NumericError, TruncationError
from .families import EventuallyConstant

_TERM_CAP = 50_000_000  # raw series terms per rho evaluation
_LAW_CAP = 1 << 22  # retained atoms in a degree law


# ---------------------------------------------------------------------------
# rho
# ---------------------------------------------------------------------------


def _tail_bound_strict(feval, lam, t, ell):
    """Certified bound on sum_{l > ell} t_l given t_ell = t.

    Within (ell, 2 ell] every ratio is at most r = f(2 ell)/(lam+f(2 ell))
    because f is non-decreasing, so the segment sum is <= t r/(1-r) and
    t_{2 ell} <= t r^ell; chain over doubled horizons until negligible.
    """
    bound = 0.0
    for _ in range(200):
        if ell > (1 << 50):
            return np.inf
        f2 = float(feval(np.array([2 * ell], dtype=np.int64))[0])
        r = f2 / (lam + f2)
        if not 0.0 < r < 1.0:
            raise NumericError("preference values must be positive and finite")
        seg = t * r / (1.0 - r)
        bound += seg
        t = t * r ** float(ell)
        if t < max(1e-18 * bound, 1e-300):
            return bound
        ell *= 2
    return np.inf


def _rho_strict(feval, lam, tol, sign_only=False):
    """(partial sum, tail bound, sign of rho - 1) for unbounded sublinear f.

    sign_only exits as soon as the partial sum passes 1, which makes
    root bracketing cheap even where the full series is very long.
    """
    total = 0.0
    t = 1.0
    ell = 0
    block = 64
    while ell < _TERM_CAP:
        ks = np.arange(ell + 1, ell + block + 1, dtype=np.int64)
        f = feval(ks)
        r = f / (lam + f)
        if not np.all((r > 0.0) & (r < 1.0) & np.isfinite(r)):
            raise NumericError("preference values must be positive and finite")
        terms = t * np.cumprod(r)
        total += float(terms.sum())
        t = float(terms[-1])
        ell += block
        if sign_only and total > 1.0:
            return total, np.inf, 1
        bound = _tail_bound_strict(feval, lam, t, ell)
        if bound <= tol:
            if total > 1.0:
                sign = 1
            elif total + bound < 1.0:
                sign = -1
            else:
                sign = 0
            return total, bound, sign
        block = min(block * 2, 1 << 20)
    raise TruncationError(
        f"rho series not certified below tol={tol} within {_TERM_CAP} terms"
    )


def _rho_eventually_constant(family, th, lam):
    K = family.cutoff
    f = family.eval(th, np.arange(1, K + 1))
    r = f / (lam + f)
    t = np.cumprod(r)
    return float(t[: K - 1].sum() + t[K - 1] / (1.0 - r[-1]))


def rho(family, theta, lam, tol: float = 1e-12) -> float:
    """Transform rho_f(lam), absolute error at most tol.

    lam must exceed 1 for affine members (the series diverges at
    lam <= 1) and 0 otherwise.
    """
    th = family.validate_theta(theta)
    lam = float(lam)
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    if family.sublinearity(th) == "affine":
        if lam <= 1.0:
            raise DomainError("rho of an affine preference needs lam > 1")
        alpha = th[0]
        return (1.0 + alpha) / (lam - 1.0)
    if lam <= 0.0:
        raise DomainError("rho needs lam > 0")
    if isinstance(family, EventuallyConstant):
        return _rho_eventually_constant(family, th, lam)
    total, _, _ = _rho_strict(lambda ks: family.eval(th, ks), lam, tol)
    return total


def _rho_sign(family, th, lam, tol):
    """Sign of rho(lam) - 1; 0 means |rho - 1| below the certification tol."""
    if family.sublinearity(th) == "affine":
        val = (1.0 + th[0]) / (lam - 1.0)
        return 0 if val == 1.0 else (1 if val > 1.0 else -1)
    if isinstance(family, EventuallyConstant):
        val = _rho_eventually_constant(family, th, lam)
        return 0 if val == 1.0 else (1 if val > 1.0 else -1)
    _, _, sign = _rho_strict(lambda ks: family.eval(th, ks), lam, tol, sign_only=True)
    return sign


def malthusian(family, theta, tol: float = 1e-12) -> float:
    """Solve rho(lambda*) = 1; the result satisfies |rho(lambda*) - 1| <= tol.

    Brackets by doubling up from the domain edge, then bisects on the
    sign of rho - 1 (rho is strictly decreasing).
    """
    th = family.validate_theta(theta)
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    edge = 1.0 if family.sublinearity(th) == "affine" else 0.0
    sign_tol = min(tol, 1e-12) * 0.1

    lo = edge + 1e-8
    if _rho_sign(family, th, lo, sign_tol) < 0:
        raise ConvergenceError("rho < 1 already at the domain edge")
    hi = edge + 1.0
    for _ in range(200):
        if _rho_sign(family, th, hi, sign_tol) < 0:
            break
        hi = edge + 2.0 * (hi - edge)
    else:
        raise ConvergenceError("no upper bracket for lambda* within 200 doublings")

    root = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = _rho_sign(family, th, mid, sign_tol)
        if s == 0:
            root = mid
            break
        if s > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    if root is None:
        root = 0.5 * (lo + hi)
    if abs(rho(family, th, root, tol=sign_tol) - 1.0) > tol:
        raise ConvergenceError(f"lambda* bisection left |rho - 1| > {tol}")
    return root


# ---------------------------------------------------------------------------
# limiting degree law
# ---------------------------------------------------------------------------


@dataclass
class LimitLaw:
    """Limiting degree distribution at a parameter point.

    probs[k - 1] = p_k for k = 1..K; tail_mass = p_{>K} (exact via the
    tail identity); mean_preference = sum over all k of f(k) p_k, which
    equals lambda_star in exact arithmetic.
    """

    lambda_star: float
    probs: np.ndarray
    tail_mass: float
    mean_preference: float

    @property
    def truncation_K(self) -> int:
        return int(self.probs.size)

    def degrees(self) -> np.ndarray:
        return np.arange(1, self.probs.size + 1)

    def tail_probs(self) -> np.ndarray:
        """p_{>k} for k = 0..K (index k), with p_{>0} = 1.

        Accumulated backward from tail_mass so that deep-tail entries
        keep full relative accuracy (no 1 - cumsum cancellation).
        """
        out = np.empty(self.probs.size + 1)
        out[-1] = self.tail_mass
        out[:-1] = self.tail_mass + np.cumsum(self.probs[::-1])[::-1]
        return out


def degree_probs(family, theta, lam, K: int) -> np.ndarray:
    """First K atoms p_1..p_K of the degree law with parameter lam."""
    th = family.validate_theta(theta)
    if K < 1:
        raise DomainError("need K >= 1")
    f = family.eval(th, np.arange(1, K + 2))
    p1 = lam / (lam + f[0])
    if K == 1:
        return np.array([p1])
    # p_{k+1} = p_k * f(k) / (lam + f(k+1))
    ratios = f[: K - 1] / (lam + f[1:K])
    out = np.empty(K)
    out[0] = p1
    out[1:] = p1 * np.cumprod(ratios)
    return out


def limit_law(family, theta, tail_tol: float = 1e-12) -> LimitLaw:
    """Degree law truncated at the first K with p_{>K} <= tail_tol.

    mean_preference includes an exact or negligible correction for the
    mass beyond K, so it matches lambda_star to high accuracy even when
    f grows.
    """
    th = family.validate_theta(theta)
    if tail_tol <= 0.0:
        raise DomainError("tail_tol must be positive")
    lam = malthusian(family, th, tol=1e-12)
    kind = family.sublinearity(th)

    chunks = []
    f_prev = None
    p_prev = None
    k_done = 0
    K = None
    block = 256
    while k_done < _LAW_CAP:
        ks = np.arange(k_done + 1, k_done + block + 1)
        f = family.eval(th, np.append(ks, ks[-1] + 1))
        if k_done == 0:
            p = np.empty(block)
            p[0] = lam / (lam + f[0])
            p[1:] = p[0] * np.cumprod(f[:-2] / (lam + f[1:-1]))
        else:
            ratios = np.empty(block)
            ratios[0] = f_prev / (lam + f[0])
            ratios[1:] = f[:-2] / (lam + f[1:-1])
            p = p_prev * np.cumprod(ratios)
        tails = f[:-1] * p / lam
        hit = np.nonzero(tails <= tail_tol)[0]
        if hit.size:
            cut = int(hit[0]) + 1
            chunks.append(p[:cut])
            K = k_done + cut
            break
        chunks.append(p)
        f_prev = float(f[-2])
        p_prev = float(p[-1])
        k_done += block
        block = min(block * 2, 1 << 18)
    if K is None:
        raise TruncationError(
            f"degree law needs more than {_LAW_CAP} atoms for tail_tol={tail_tol}"
        )
    probs = np.concatenate(chunks)
    fK = float(family.eval(th, K))
    tail_mass = fK * probs[-1] / lam

    fvals = family.eval(th, np.arange(1, K + 1))
    mean_pref = float(np.dot(fvals, probs))
    if kind == "affine":
        alpha = th[0]
        mean_pref += (K + alpha) * (K + 1 + alpha) * probs[-1] / (1.0 + alpha)
    elif isinstance(family, EventuallyConstant):
        # beyond max(K, cutoff) the preference is constant
        if K < family.cutoff:
            extra = degree_probs(family, th, lam, family.cutoff)
            fv = family.eval(th, np.arange(1, family.cutoff + 1))
            mean_pref = float(np.dot(fv, extra))
            fc = float(fv[-1])
            mean_pref += fc * (fc * extra[-1] / lam)
        else:
            mean_pref += float(family.eval(th, K)) * tail_mass
    else:
        mean_pref += _mean_pref_tail_strict(family, th, lam, K, probs[-1])
    return LimitLaw(
        lambda_star=lam, probs=probs, tail_mass=tail_mass, mean_preference=mean_pref
    )


def _mean_pref_tail_strict(family, th, lam, K, pK):
    """sum_{k > K} f(k) p_k for unbounded sublinear f, by extending the
    recursion until increments vanish at double precision."""
    acc = 0.0
    p = pK
    f_prev = float(family.eval(th, K))
    k = K
    block = 512
    for _ in range(64):
        ks = np.arange(k + 1, k + block + 1)
        f = family.eval(th, ks)
        ratios = np.empty(block)
        ratios[0] = f_prev / (lam + f[0])
        ratios[1:] = f[:-1] / (lam + f[1:])
        p_chunk = p * np.cumprod(ratios)
        acc += float(np.dot(f, p_chunk))
        p = float(p_chunk[-1])
        f_prev = float(f[-1])
        k += block
        # terms g_j = f(j) p_j decrease with ratio f(j+1)/(lam + f(j+1));
        # certify the remainder with the shifted-horizon bound
        rem = _tail_bound_strict(
            lambda kk: family.eval(th, kk + 1), lam, f_prev * p, k
        )
        if rem < 1e-15 * max(acc, 1e-3):
            return acc
        block = min(block * 2, 1 << 18)
    raise TruncationError("mean preference tail did not converge")
