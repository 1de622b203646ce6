"""Parameter estimation from grown trees.

Three estimators are provided.  The history-based MLE maximizes the
normalized log-likelihood

    l_n(theta) = sum_k log f(k) P_{>k}(n) - (1/n) sum_{t=2..n} log S_f(t-1),

the theta-free combinatorial term being dropped.  The snapshot-based
pseudo-MLE replaces the running normalizers with the endpoint,

    l~_n(theta) = sum_k log f(k) P_{>k}(n) - log S_f(n),

and the empirical estimator matches preference ratios f(k)/f(1) to the
observed ratios r_k = N_{>k}/N_k.  Both likelihood fits run a projected
Newton iteration with analytic derivatives, Armijo backtracking, and a
gradient fallback when the Hessian is not negative definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    ConvergenceError,
    DomainError,
    InsufficientDataError,
    UndefinedRatioError,
)
from .simulate import DegreeSnapshot, GrowthHistory, snapshot_of

_BOUND_ATOL = 1e-10  # distance to a box face that counts as "at the boundary"


@dataclass
class FitResult:
    """Outcome of a likelihood fit.

    score_norm is the max-abs raw score at theta_hat; at_boundary flags
    coordinates sitting on a box face with the score pushing outward.
    converged means score_norm <= tol, or the boundary-projected score
    is <= tol with some coordinate at the boundary, or the predicted
    ascent fell below the objective's double-precision rounding floor
    (no further progress is certifiable in float arithmetic).
    """

    theta_hat: np.ndarray
    objective: float
    score_norm: float
    iterations: int
    converged: bool
    at_boundary: np.ndarray


# ---------------------------------------------------------------------------
# likelihood, score, Hessian from a full history
# ---------------------------------------------------------------------------


def _history_data(history: GrowthHistory):
    D = np.asarray(history.degrees_chosen, dtype=np.int64)
    n = D.size + 1
    m = int(D.max()) + 1 if D.size else 1
    c = np.bincount(D, minlength=m + 1).astype(float)  # c[k] = N_{>k}(n)
    return D, n, m, c


def _degree_tables(family, th, m, order):
    ks = np.arange(1, m + 1)
    f = np.zeros(m + 1)
    f[1:] = family.eval(th, ks)
    if not np.all(np.isfinite(f[1:])) or np.any(f[1:] <= 0.0):
        raise DomainError("preference function must be positive and finite")
    g = h = None
    if order >= 1:
        g = np.zeros((m + 1, family.dim))
        g[1:] = family.grad(th, ks)
    if order >= 2:
        h = np.zeros((m + 1, family.dim, family.dim))
        h[1:] = family.hess(th, ks)
    return f, g, h


def _mle_eval(family, th, data, order):
    """(value, score, hessian) of the normalized log-likelihood; higher
    orders are skipped when order < 2 (score) / < 1 (value only)."""
    D, n, m, c = data
    f, g, h = _degree_tables(family, th, m, order)

    # running total preference S(u), u = 1..n-1
    S = f[1] * np.arange(1, n, dtype=float)
    if n > 2:
        S[1:] += np.cumsum(f[D + 1] - f[D])[: n - 2]
    value = (float(np.dot(c[1:], np.log(f[1:]))) - float(np.log(S).sum())) / n
    if order == 0:
        return value, None, None

    w = 1.0 / S
    uw = float(np.dot(np.arange(1, n, dtype=float), w))
    # per-degree weights: sum over steps v (2..n-1) of sum_{u>=v} 1/S(u),
    # grouped by the chosen degree D_v; turns trace sums of grad/hess
    # into O(max_degree) contractions
    Wk = np.zeros(m + 1)
    if n > 2:
        R = np.cumsum(w[::-1])[::-1]
        Wk = np.bincount(D[: n - 2], weights=R[1:], minlength=m + 1)
    dW = Wk[1:m]  # weight on f(k+1) - f(k), k = 1..m-1

    gf = g[1:] / f[1:, None]
    trace_g = g[1] * uw + ((g[2 : m + 1] - g[1:m]) * dW[:, None]).sum(axis=0)
    score = (c[1:] @ gf - trace_g) / n
    if order == 1:
        return value, score, None

    outer_k = np.einsum("ki,kj->kij", g[1:], g[1:])
    curv_k = h[1:] / f[1:, None, None] - outer_k / (f[1:] ** 2)[:, None, None]
    part_k = np.einsum("k,kij->ij", c[1:], curv_k)

    Sg = np.arange(1, n, dtype=float)[:, None] * g[1]
    if n > 2:
        Sg[1:] += np.cumsum(g[D + 1] - g[D], axis=0)[: n - 2]
    trace_h = h[1] * uw + np.einsum(
        "kij,k->ij", h[2 : m + 1] - h[1:m], dW
    )
    outer_u = (Sg * (w * w)[:, None]).T @ Sg
    hess = (part_k - (trace_h - outer_u)) / n
    return value, score, 0.5 * (hess + hess.T)


def loglik(family, theta, history: GrowthHistory) -> float:
    """Normalized log-likelihood of a history (theta-free term dropped)."""
    th = family.validate_theta(theta)
    v, _, _ = _mle_eval(family, th, _history_data(history), 0)
    return v


def score(family, theta, history: GrowthHistory) -> np.ndarray:
    """Gradient of loglik in theta."""
    th = family.validate_theta(theta)
    _, s, _ = _mle_eval(family, th, _history_data(history), 1)
    return s


def hessian(family, theta, history: GrowthHistory) -> np.ndarray:
    """Hessian of loglik in theta (symmetric d x d)."""
    th = family.validate_theta(theta)
    _, _, H = _mle_eval(family, th, _history_data(history), 2)
    return H


# ---------------------------------------------------------------------------
# pseudo likelihood from a snapshot
# ---------------------------------------------------------------------------


def _snapshot_data(snapshot: DegreeSnapshot):
    N = snapshot.dense().astype(float)
    m = N.size - 1
    n = float(N.sum())
    if n < 1:
        raise InsufficientDataError("empty snapshot")
    T = n - np.cumsum(N)  # T[k] = N_{>k}
    return N, T, n, m


def _pseudo_eval(family, th, data, order):
    N, T, n, m = data
    f, g, h = _degree_tables(family, th, m, order)
    Sf = float(np.dot(N[1:], f[1:]))
    value = float(np.dot(T[1:], np.log(f[1:]))) / n - np.log(Sf)
    if order == 0:
        return value, None, None
    Sg = N[1:] @ g[1:]
    score = (T[1:] @ (g[1:] / f[1:, None])) / n - Sg / Sf
    if order == 1:
        return value, score, None
    outer_k = np.einsum("ki,kj->kij", g[1:], g[1:])
    curv_k = h[1:] / f[1:, None, None] - outer_k / (f[1:] ** 2)[:, None, None]
    Sh = np.einsum("k,kij->ij", N[1:], h[1:])
    hess = (
        np.einsum("k,kij->ij", T[1:], curv_k) / n
        - Sh / Sf
        + np.outer(Sg, Sg) / Sf**2
    )
    return value, score, 0.5 * (hess + hess.T)


def pseudo_loglik(family, theta, snapshot: DegreeSnapshot) -> float:
    """Snapshot-only likelihood surrogate l~_n (see module docstring)."""
    th = family.validate_theta(theta)
    v, _, _ = _pseudo_eval(family, th, _snapshot_data(snapshot), 0)
    return v


def pseudo_score(family, theta, snapshot: DegreeSnapshot) -> np.ndarray:
    th = family.validate_theta(theta)
    _, s, _ = _pseudo_eval(family, th, _snapshot_data(snapshot), 1)
    return s


def pseudo_hessian(family, theta, snapshot: DegreeSnapshot) -> np.ndarray:
    th = family.validate_theta(theta)
    _, _, H = _pseudo_eval(family, th, _snapshot_data(snapshot), 2)
    return H


# ---------------------------------------------------------------------------
# empirical ratio estimator
# ---------------------------------------------------------------------------


def empirical_rk(snapshot: DegreeSnapshot, k: int) -> float:
    """r_k = N_{>k} / N_k; undefined when no node has degree k."""
    k = int(k)
    if k < 1:
        raise DomainError("need k >= 1")
    dense = snapshot.dense()
    Nk = dense[k] if k < dense.size else 0
    if Nk == 0:
        raise UndefinedRatioError(f"no nodes of degree {k}")
    return float(snapshot.n - dense[: k + 1].sum()) / float(Nk)


def _observed_ratio_targets(family, snapshot):
    """(degrees k, targets r_k/r_1) for k = 2..dim+1 where defined."""
    dense = snapshot.dense()
    if dense.size < 2 or dense[1] == 0:
        raise InsufficientDataError("no degree-1 nodes; ratios undefined")
    n = snapshot.n
    tails = n - np.cumsum(dense)
    r1 = tails[1] / dense[1]
    if r1 <= 0.0:
        raise InsufficientDataError("all nodes have degree 1; ratios degenerate")
    ks, targets = [], []
    for k in range(2, family.dim + 2):
        if k < dense.size and dense[k] > 0:
            ks.append(k)
            targets.append((tails[k] / dense[k]) / r1)
    return np.array(ks), np.array(targets)


def empirical_fit(family, snapshot: DegreeSnapshot) -> np.ndarray:
    """Solve f(k)/f(1) = r_k/r_1 for k = 2..dim+1 by damped Newton.

    Requires every degree 1..dim+1 to be occupied.  Raises
    ConvergenceError with the residual when the projected Newton
    iteration cannot drive the system to zero inside the box.
    """
    dense = snapshot.dense()
    need = np.arange(1, family.dim + 2)
    missing = [int(k) for k in need if k >= dense.size or dense[k] == 0]
    if missing:
        raise InsufficientDataError(f"no nodes at degrees {missing}")
    ks, targets = _observed_ratio_targets(family, snapshot)

    box = family.box
    th = box.center()

    def residual(t):
        f1 = float(family.eval(t, 1))
        return family.eval(t, ks) / f1 - targets

    def jacobian(t):
        f1 = float(family.eval(t, 1))
        g1 = family.grad(t, 1)
        fk = family.eval(t, ks)
        gk = family.grad(t, ks)
        return gk / f1 - np.outer(fk, g1) / f1**2

    r = residual(th)
    norm = float(np.abs(r).max())
    for _ in range(100):
        if norm <= 1e-11 * max(1.0, float(np.abs(targets).max())):
            return th
        J = jacobian(th)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        a = 1.0
        for _ in range(60):
            cand = box.clip(th + a * step)
            rc = residual(cand)
            nc = float(np.abs(rc).max())
            if nc < norm * (1.0 - 1e-4 * a) and not np.array_equal(cand, th):
                th, r, norm = cand, rc, nc
                break
            a *= 0.5
        else:
            raise ConvergenceError(
                f"ratio system stalled at residual {norm:.3e}", best=th
            )
    raise ConvergenceError(f"ratio system not solved, residual {norm:.3e}", best=th)


def hybrid_select(family, candidate_roots, snapshot: DegreeSnapshot) -> np.ndarray:
    """Pick the candidate whose preference ratios best match the data.

    Score is sum_k |f(k)/f(1) - r_k/r_1| over the defined k in 2..dim+1;
    ties go to the earlier candidate.
    """
    if len(candidate_roots) == 0:
        raise DomainError("need at least one candidate")
    ks, targets = _observed_ratio_targets(family, snapshot)
    if ks.size == 0:
        raise InsufficientDataError("no usable ratios in 2..dim+1")
    scores = []
    for cand in candidate_roots:
        th = family.validate_theta(cand)
        f1 = float(family.eval(th, 1))
        scores.append(float(np.abs(family.eval(th, ks) / f1 - targets).sum()))
    return np.asarray(candidate_roots[int(np.argmin(scores))], dtype=float)


# ---------------------------------------------------------------------------
# projected Newton maximizer
# ---------------------------------------------------------------------------


def _boundary_state(th, g, lo, hi):
    near_lo = th - lo <= _BOUND_ATOL
    near_hi = hi - th <= _BOUND_ATOL
    at_boundary = (near_lo & (g < 0.0)) | (near_hi & (g > 0.0))
    proj = np.where(at_boundary, 0.0, g)
    return at_boundary, proj


def _maximize(family, evaluate, init, tol, max_iter):
    box = family.box
    lo, hi = box.arrays()
    th = box.clip(np.asarray(init, dtype=float))
    it = 0
    v, g, H = evaluate(th, 2)
    while True:
        at_boundary, proj = _boundary_state(th, g, lo, hi)
        raw = float(np.abs(g).max())
        if raw <= tol or (float(np.abs(proj).max()) <= tol and at_boundary.any()):
            return FitResult(
                theta_hat=th,
                objective=v,
                score_norm=raw,
                iterations=it,
                converged=True,
                at_boundary=at_boundary,
            )
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence in {max_iter} iterations (score {raw:.3e})",
                best=FitResult(th, v, raw, it, False, at_boundary),
            )
        it += 1
        free = ~at_boundary
        step = np.zeros_like(th)
        if free.any():
            # modified Newton: replacing eigenvalues by their magnitudes
            # keeps the exact Newton step where the surface is concave and
            # still ascends across saddles and flat ridges (where plain
            # Newton diverges and gradient steps crawl)
            Hff = H[np.ix_(free, free)]
            w, V = linalg.eigh(Hff)
            curv = np.maximum(np.abs(w), 1e-12 * max(1.0, float(np.abs(w).max())))
            step[free] = V @ ((V.T @ g[free]) / curv)
            sn = float(np.abs(step).max())
            diam = float(np.abs(hi - lo).max())
            if sn > diam:
                step *= diam / sn
        a = 1.0
        moved = False
        for _ in range(60):
            cand = box.clip(th + a * step)
            if np.array_equal(cand, th):
                a *= 0.5
                continue
            vc, _, _ = evaluate(cand, 0)
            if vc >= v + 1e-4 * float(np.dot(g, cand - th)):
                th = cand
                v, g, H = evaluate(th, 2)
                moved = True
                break
            a *= 0.5
        if not moved:
            at_boundary, proj = _boundary_state(th, g, lo, hi)
            raw = float(np.abs(g).max())
            done = raw <= tol or (
                float(np.abs(proj).max()) <= tol and at_boundary.any()
            )
            if not done and free.any():
                # predicted ascent of the full step is below the rounding
                # floor of the objective: no double-precision line search
                # can certify further progress, so this is the numerical
                # optimum even though the score sits just above tol
                gain = 0.5 * float(np.dot(g, step))
                done = gain <= 64.0 * np.finfo(float).eps * max(1.0, abs(v))
            result = FitResult(th, v, raw, it, done, at_boundary)
            if done:
                return result
            raise ConvergenceError(
                f"line search stagnated (score {raw:.3e})", best=result
            )


def _default_init(family, snapshot):
    try:
        return family.box.clip(empirical_fit(family, snapshot))
    except (InsufficientDataError, UndefinedRatioError, ConvergenceError):
        return family.box.center()


def fit_mle(family, history: GrowthHistory, init=None, tol: float = 1e-8,
            max_iter: int = 200) -> FitResult:
    """Maximize the history likelihood over the family's box."""
    if history.n < 2:
        raise InsufficientDataError("need at least two nodes to fit")
    data = _history_data(history)
    if init is None:
        init = _default_init(family, snapshot_of(history))
    return _maximize(
        family, lambda t, o: _mle_eval(family, t, data, o), init, tol, max_iter
    )


def fit_pmle(family, snapshot: DegreeSnapshot, init=None, tol: float = 1e-8,
             max_iter: int = 200) -> FitResult:
    """Maximize the snapshot pseudo-likelihood over the family's box."""
    data = _snapshot_data(snapshot)
    if init is None:
        init = _default_init(family, snapshot)
    return _maximize(
        family, lambda t, o: _pseudo_eval(family, t, data, o), init, tol, max_iter
    )
