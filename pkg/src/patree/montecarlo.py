"""Seeded Monte Carlo harnesses: estimator replication studies, QQ data
emission, and the projected-bootstrap normality diagnostic.

Replicate i always draws from the RNG substream (seed, i), so reports
are byte-identical for a given seed regardless of worker count or
scheduling order.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .asymptotics import bootstrap_variance, bootstrap_wald, wald_affinity
from .errors import (
    ConvergenceError,
    DegeneracyError,
    DomainError,
    InsufficientDataError,
    ProcedureError,
    UndefinedRatioError,
)
from .estimators import empirical_fit, fit_mle, fit_pmle
from .families import PowerOffset, family_from_config, family_to_config
from .rng import as_generator, substream
from .simulate import grow

_METHODS = ("mle", "pmle", "ee")
_EIG_FLOOR = 1e-12
_FAIL_FLAG_FRACTION = 0.05


@dataclass
class MCReport:
    """Replication-study summary.

    rescaled_cov is (n/N) sum_i (theta_hat_i - theta0)(theta_hat_i -
    theta0)^T over the N successful replicates; its limit for the MLE
    and PMLE is the inverse asymptotic information, carried (when
    supplied) in reference.
    """

    family_config: dict
    theta0: np.ndarray
    n: int
    method: str
    requested: int
    estimates: np.ndarray
    failed: int
    flagged_failed: bool
    sample_mean_diff: np.ndarray
    rescaled_cov: np.ndarray
    reference: np.ndarray = None

    @property
    def N(self) -> int:
        return self.estimates.shape[0]


def _fit_task(args):
    """One replicate: grow a tree and fit it.  Returns (index, theta or None)."""
    i, family, theta0, n, method, seed = args
    hist, snap = grow(family, theta0, n, substream(seed, i))
    try:
        if method == "mle":
            r = fit_mle(family, hist)
        elif method == "pmle":
            r = fit_pmle(family, snap)
        else:
            return i, empirical_fit(family, snap)
        if not r.converged:
            return i, None
        return i, r.theta_hat
    except (ConvergenceError, InsufficientDataError, UndefinedRatioError):
        return i, None


def _run_tasks(task, args_list, workers):
    if workers > 1:
        chunk = max(1, len(args_list) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(task, args_list, chunksize=chunk))
    else:
        out = [task(a) for a in args_list]
    out.sort(key=lambda r: r[0])
    return out


def run_mc(config) -> MCReport:
    """Grow and fit `reps` independent trees; summarize the estimates.

    config keys: family, theta0, n, reps, method (mle|pmle|ee), seed,
    workers, reference (optional matrix).  Failed fits are excluded
    with a warning; more than 5% failures flags the run.
    """
    cfg = dict(config)
    family = cfg["family"]
    theta0 = family.validate_theta(cfg["theta0"])
    n = int(cfg["n"])
    reps = int(cfg["reps"])
    method = cfg.get("method", "mle")
    seed = cfg.get("seed", 0)
    workers = int(cfg.get("workers", 1))
    reference = cfg.get("reference")
    if method not in _METHODS:
        raise DomainError(f"method must be one of {_METHODS}")
    if n < 2 or reps < 1:
        raise DomainError("need n >= 2 and reps >= 1")

    args = [(i, family, theta0, n, method, seed) for i in range(reps)]
    results = _run_tasks(_fit_task, args, workers)
    ests = []
    failed = 0
    for i, th in results:
        if th is None:
            failed += 1
            warnings.warn(f"replicate {i} failed to fit; excluded")
        else:
            ests.append(th)
    if not ests:
        raise ProcedureError("every replicate failed to fit")
    X = np.asarray(ests)
    diffs = X - theta0
    cov = (n / X.shape[0]) * (diffs.T @ diffs)
    return MCReport(
        family_config=family_to_config(family),
        theta0=theta0,
        n=n,
        method=method,
        requested=reps,
        estimates=X,
        failed=failed,
        flagged_failed=failed > _FAIL_FLAG_FRACTION * reps,
        sample_mean_diff=diffs.mean(axis=0),
        rescaled_cov=0.5 * (cov + cov.T),
        reference=None if reference is None else np.asarray(reference, dtype=float),
    )


# ---------------------------------------------------------------------------
# test-calibration experiments
# ---------------------------------------------------------------------------


def _wald_task(args):
    i, family, theta0, n, method, size, seed = args
    hist, snap = grow(family, theta0, n, substream(seed, i))
    pinned = PowerOffset(box=family.box.with_pinned(1, 1.0))
    try:
        if method == "mle":
            fit_u = fit_mle(family, hist)
            fit_c = fit_mle(pinned, hist)
        else:
            fit_u = fit_pmle(family, snap)
            fit_c = fit_pmle(pinned, snap)
        rep = wald_affinity(family, fit_c, float(fit_u.theta_hat[1]), n, size)
    except (ConvergenceError, DegeneracyError):
        return i, None
    return i, rep.reject


def run_wald_experiment(config) -> dict:
    """Rejection proportion of the affinity test over seeded replicates.

    config keys: family (power-offset), theta0, n, reps, method
    (mle, the default, or pmle; the plug-in variance matches the
    full-history estimator), size, seed, workers.
    """
    cfg = dict(config)
    family = cfg["family"]
    theta0 = family.validate_theta(cfg["theta0"])
    n = int(cfg["n"])
    reps = int(cfg["reps"])
    method = cfg.get("method", "mle")
    size = float(cfg.get("size", 0.05))
    seed = cfg.get("seed", 0)
    workers = int(cfg.get("workers", 1))
    if method not in ("mle", "pmle"):
        raise DomainError("wald experiment method must be mle or pmle")

    args = [(i, family, theta0, n, method, size, seed) for i in range(reps)]
    results = _run_tasks(_wald_task, args, workers)
    used = rejections = 0
    for i, rej in results:
        if rej is None:
            warnings.warn(f"wald replicate {i} failed; excluded")
            continue
        used += 1
        rejections += int(rej)
    if used == 0:
        raise ProcedureError("every wald replicate failed")
    return {
        "requested": reps,
        "used": used,
        "rejections": rejections,
        "proportion": rejections / used,
        "size": size,
    }


def _coverage_task(args):
    i, family, theta0, n, m, s, coordinate, null_value, size, seed = args
    sub = substream(seed, i)
    hist, snap = grow(family, theta0, n, substream(sub, 0))
    try:
        fit = fit_pmle(family, snap)
        theta_sim = fit.theta_hat.copy()
        theta_sim[coordinate] = null_value  # simulate under the null-plugged f
        bv = bootstrap_variance(family, theta_sim, m, s, substream(sub, 1))
        rep = bootstrap_wald(fit.theta_hat, bv.sigma_tilde, coordinate, null_value, n, size)
    except (ConvergenceError, ProcedureError, DegeneracyError, DomainError):
        return i, None
    return i, rep.reject


def run_bootstrap_coverage(config) -> dict:
    """Rejection proportion of the bootstrap coordinate test under H0.

    config keys: family, theta0, n, reps, m, s, coordinate, null_value,
    size, seed, workers.  Each replicate grows a fresh tree at theta0,
    fits it, simulates the bootstrap under the fit with the tested
    coordinate pinned to its null value, and runs the two-sided test.
    """
    cfg = dict(config)
    family = cfg["family"]
    theta0 = family.validate_theta(cfg["theta0"])
    n = int(cfg["n"])
    reps = int(cfg["reps"])
    m = int(cfg["m"])
    s = int(cfg["s"])
    coordinate = int(cfg["coordinate"])
    null_value = float(cfg["null_value"])
    size = float(cfg.get("size", 0.05))
    seed = cfg.get("seed", 0)
    workers = int(cfg.get("workers", 1))

    args = [
        (i, family, theta0, n, m, s, coordinate, null_value, size, seed)
        for i in range(reps)
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # per-replicate drop warnings
        results = _run_tasks(_coverage_task, args, workers)
    used = rejections = 0
    for i, rej in results:
        if rej is None:
            continue
        used += 1
        rejections += int(rej)
    if used == 0:
        raise ProcedureError("every coverage replicate failed")
    return {
        "requested": reps,
        "used": used,
        "rejections": rejections,
        "proportion": rejections / used,
        "size": size,
    }


# ---------------------------------------------------------------------------
# QQ data
# ---------------------------------------------------------------------------


def emit_qq(estimates, reference_sd=None, center=None) -> np.ndarray:
    """Pair sorted standardized estimates with normal plotting quantiles.

    Column 0 holds Phi^{-1}((i - 0.5)/N), column 1 the i-th order
    statistic of (estimates - center)/scale with center defaulting to
    the sample mean and scale to the sample standard deviation.
    """
    x = np.asarray(estimates, dtype=float).ravel()
    if x.size < 10:
        raise DomainError("need at least 10 estimates")
    if np.ptp(x) == 0.0:
        raise DegeneracyError("estimates are constant")
    c = float(x.mean()) if center is None else float(center)
    scale = float(x.std(ddof=1)) if reference_sd is None else float(reference_sd)
    if not scale > 0.0:
        raise DomainError("reference_sd must be positive")
    z = np.sort((x - c) / scale)
    q = stats.norm.ppf((np.arange(1, x.size + 1) - 0.5) / x.size)
    return np.column_stack([q, z])


def _inv_sqrt_psd(mat, floor=_EIG_FLOOR):
    """Symmetric inverse square root, or None when not PD."""
    w, V = np.linalg.eigh(0.5 * (mat + mat.T))
    if w.min() <= 0.0:
        return None
    w = np.maximum(w, floor)
    return (V / np.sqrt(w)) @ V.T


def _projected_task(args):
    """One projected-bootstrap replicate; returns (index, d or None)."""
    i, family, theta0, n, m, s, seed, center_theta0 = args
    sub = substream(seed, i)
    hist, snap = grow(family, theta0, n, substream(sub, 0))
    try:
        fit = fit_pmle(family, snap)
        if not fit.converged:
            return i, None
        bv = bootstrap_variance(family, fit.theta_hat, m, s, substream(sub, 1))
    except (ConvergenceError, ProcedureError, DomainError):
        return i, None
    root = _inv_sqrt_psd(bv.sigma_tilde)
    if root is None:
        return i, None
    g = as_generator(substream(sub, 2)).normal(size=theta0.size)
    r = g / np.linalg.norm(g)
    dev = fit.theta_hat - (theta0 if center_theta0 else 0.0)
    return i, float(np.sqrt(n) * (r @ root @ dev))


def run_projected_bootstrap_qq(config) -> np.ndarray:
    """QQ table for the randomly projected, bootstrap-normalized PMLE.

    Each replicate grows a tree of size n, fits it, bootstrap-estimates
    the fit's covariance from s trees of size m, and projects the
    normalized deviation on a uniform random direction; the d-values
    are standard normal in the limit, so the table pairs them with
    normal quantiles unscaled.  config keys: family, theta0, n, m, s,
    reps, seed, workers, center ("theta0", the default, or "zero" for
    the uncentered literal form).
    """
    cfg = dict(config)
    family = cfg["family"]
    theta0 = family.validate_theta(cfg["theta0"])
    n = int(cfg["n"])
    m = int(cfg["m"])
    s = int(cfg["s"])
    reps = int(cfg["reps"])
    seed = cfg.get("seed", 0)
    workers = int(cfg.get("workers", 1))
    center = cfg.get("center", "theta0")
    if center not in ("theta0", "zero"):
        raise DomainError("center must be 'theta0' or 'zero'")

    args = [
        (i, family, theta0, n, m, s, seed, center == "theta0") for i in range(reps)
    ]
    results = _run_tasks(_projected_task, args, workers)
    ds = []
    for i, d in results:
        if d is None:
            warnings.warn(f"projected replicate {i} dropped")
        else:
            ds.append(d)
    if len(ds) < 10:
        raise ProcedureError(f"only {len(ds)}/{reps} projected replicates usable")
    d = np.sort(np.asarray(ds))
    q = stats.norm.ppf((np.arange(1, d.size + 1) - 0.5) / d.size)
    return np.column_stack([q, d])


# ---------------------------------------------------------------------------
# renderers
# ---------------------------------------------------------------------------


def _matrix_lines(name, mat, indent="  "):
    rows = [f"{indent}{name}:"]
    for r in np.atleast_2d(mat):
        rows.append(indent + "  " + "  ".join(f"{v: .6e}" for v in r))
    return rows


def mc_report_text(report: MCReport) -> str:
    rows = [
        "monte carlo report",
        f"  family      : {json.dumps(report.family_config)}",
        f"  theta0      : {list(map(float, report.theta0))}",
        f"  n           : {report.n}",
        f"  method      : {report.method}",
        f"  replicates  : {report.N} used / {report.requested} requested"
        + (f" ({report.failed} failed)" if report.failed else ""),
    ]
    if report.flagged_failed:
        rows.append("  status      : FAILED (more than 5% of fits failed)")
    rows.append(
        "  mean diff   : " + "  ".join(f"{v: .6e}" for v in report.sample_mean_diff)
    )
    rows += _matrix_lines("rescaled cov", report.rescaled_cov)
    if report.reference is not None:
        rows += _matrix_lines("reference", report.reference)
    return "\n".join(rows) + "\n"


def mc_csv(report: MCReport) -> str:
    """Meta JSON line, then one CSV row of estimates per replicate."""
    meta = {
        "family": report.family_config,
        "theta0": [float(v) for v in report.theta0],
        "n": report.n,
        "method": report.method,
        "requested": report.requested,
        "failed": report.failed,
        "flagged_failed": report.flagged_failed,
        "sample_mean_diff": [float(v) for v in report.sample_mean_diff],
        "rescaled_cov": [[float(v) for v in r] for r in report.rescaled_cov],
        "reference": None
        if report.reference is None
        else [[float(v) for v in r] for r in report.reference],
    }
    names = family_from_config(report.family_config)[0].names
    lines = ["# " + json.dumps(meta), ",".join(names)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in report.estimates)
    return "\n".join(lines) + "\n"


def qq_csv(table: np.ndarray) -> str:
    lines = ["normal_quantile,value"]
    lines.extend(f"{float(q)!r},{float(v)!r}" for q, v in table)
    return "\n".join(lines) + "\n"
