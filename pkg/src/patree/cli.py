"""Command-line interface for tree simulation, estimation, and experiments.

Subcommands
-----------
simulate   grow a tree, write its attachment history and/or degree snapshot
estimate   fit theta from a saved history or snapshot (mle, pmle, ee)
mc         replicated estimation study with rescaled sample covariance
wald       test whether the preference function is affine, on saved data
bootstrap  bootstrap variance of the snapshot fit, optional coordinate test
urn        degree urn: spectrum, eigenvalue condition, limit covariance
limits     limiting degree law, growth rate, and mean limiting preference
qq         QQ-plot data: replicated estimates or projected bootstrap pivots

A JSON config file (--config) mirrors the long flag names; explicit flags
override config values, which override the built-in desk-scale defaults
(n=10^4, reps=200, m=10^4, bootstrap reps=200).

Exit codes: 0 success, 2 convergence or runtime failure, 3 invalid config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .asymptotics import (
    bootstrap_variance,
    bootstrap_wald,
    fisher_V0,
    limit_score,
    wald_affinity,
)
from .errors import (
    ConvergenceError,
    DomainError,
    InsufficientDataError,
    IntegrityError,
    PatreeError,
)
from .estimators import empirical_fit, fit_mle, fit_pmle
from .families import family_from_config, make_family
from .io import (
    bootstrap_csv,
    bootstrap_report,
    fit_csv,
    fit_report,
    history_csv,
    law_csv,
    save_report,
    snapshot_csv,
    urn_bundle,
    wald_csv,
    wald_report,
)
from .limits import limit_law
from .montecarlo import (
    emit_qq,
    mc_csv,
    mc_report_text,
    qq_csv,
    run_mc,
    run_projected_bootstrap_qq,
)
from .simulate import grow, snapshot_of
from .urns import build_affine_urn, build_cutoff_urn, eigen_condition, limit_covariance, urn_simulate

_DESK_N = 10_000
_DESK_REPS = 200
_DESK_M = 10_000
_DESK_S = 200


class _Parser(argparse.ArgumentParser):
    """Argument errors are config errors: exit 3, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared option plumbing
# ---------------------------------------------------------------------------


def _get(args, name, default=None, required=False):
    value = getattr(args, name, None)
    if value is None:
        if required:
            flag = "--" + name.replace("_", "-")
            raise DomainError(f"missing required option {flag}")
        return default
    return value


def _parse_theta(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(part) for part in str(value).split(",")]


def _family_from_args(args, meta=None):
    """Family and optional theta from flags, falling back to file metadata."""
    kind = _get(args, "family")
    theta = _parse_theta(_get(args, "theta"))
    if kind is not None:
        fam = make_family(kind, cutoff=_get(args, "cutoff"))
        return fam, theta
    fam_meta = (meta or {}).get("family")
    if fam_meta is not None:
        fam, meta_theta = family_from_config(fam_meta)
        return fam, theta if theta is not None else (
            None if meta_theta is None else [float(v) for v in meta_theta]
        )
    raise DomainError("no family given (use --family, a config file, or file metadata)")


def _require_theta(family, theta):
    if theta is None:
        raise DomainError("no parameter vector given (use --theta)")
    return family.validate_theta(theta)


def _apply_config(args):
    path = getattr(args, "config", None)
    if path is None:
        return
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise DomainError("config file must hold a JSON object")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if attr == "in":
            attr = "in_path"
        if not hasattr(args, attr) or attr in ("config", "func"):
            raise DomainError(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        save_report(out, text)


def _load_data(path):
    """Returns (kind, data, meta) where kind is 'history' or 'snapshot'."""
    from .io import load_history, load_snapshot

    lines = Path(path).read_text().splitlines()
    if len(lines) >= 2 and lines[1].strip() == "k,count":
        snap, meta = load_snapshot(path)
        return "snapshot", snap, meta
    hist, meta = load_history(path)
    return "history", hist, meta


def _coordinate_index(family, spec):
    """Coordinate by parameter name or integer index."""
    text = str(spec)
    if text in family.names:
        return family.names.index(text)
    idx = int(text)
    if not 0 <= idx < len(family.names):
        raise DomainError(f"coordinate {spec!r} out of range for {family.kind}")
    return idx


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_simulate(args):
    family, theta = _family_from_args(args)
    theta = _require_theta(family, theta)
    n = int(_get(args, "n", _DESK_N))
    seed = _get(args, "seed", 0)
    hist, snap = grow(family, theta, n, seed)
    if _get(args, "snapshot_out") is not None:
        _emit(snapshot_csv(snap, family, theta, seed), args.snapshot_out)
    wants_history = _get(args, "snapshot_out") is None or _get(args, "out") is not None
    if wants_history:
        _emit(history_csv(hist, family, theta, seed), _get(args, "out"))
    return 0


def _cmd_estimate(args):
    kind, data, meta = _load_data(_get(args, "in_path", required=True))
    family, theta = _family_from_args(args, meta)
    method = _get(args, "method", "pmle")
    init = None if theta is None else family.validate_theta(theta)
    if method == "mle":
        if kind != "history":
            raise DomainError("method mle needs a full attachment history")
        fit = fit_mle(family, data, init=init)
    else:
        snap = data if kind == "snapshot" else snapshot_of(data)
        if method == "pmle":
            fit = fit_pmle(family, snap, init=init)
        elif method == "ee":
            theta_hat = empirical_fit(family, snap)
            from .estimators import FitResult

            fit = FitResult(
                theta_hat=theta_hat,
                objective=float("nan"),
                score_norm=float("nan"),
                iterations=0,
                converged=True,
                at_boundary=np.zeros(theta_hat.size, dtype=bool),
            )
        else:
            raise DomainError(f"unknown method {method!r}")
    text = fit_csv(fit, family) if _get(args, "format", "report") == "csv" else fit_report(fit, family)
    _emit(text, _get(args, "out"))
    if method != "ee" and not fit.converged:
        raise ConvergenceError("fit did not converge")
    return 0


def _mc_config(args, need_method=True):
    family, theta = _family_from_args(args)
    theta = _require_theta(family, theta)
    cfg = {
        "family": family,
        "theta0": theta,
        "n": int(_get(args, "n", _DESK_N)),
        "reps": int(_get(args, "reps", _DESK_REPS)),
        "seed": _get(args, "seed", 0),
        "workers": int(_get(args, "workers", 1)),
    }
    if need_method:
        cfg["method"] = _get(args, "method", "mle")
    return family, theta, cfg


def _cmd_mc(args):
    family, theta, cfg = _mc_config(args)
    if cfg["method"] in ("mle", "pmle"):
        try:
            cfg["reference"] = fisher_V0(family, theta, limit_law(family, theta)).V0_inv
        except PatreeError:
            pass
    report = run_mc(cfg)
    text = mc_csv(report) if _get(args, "format", "report") == "csv" else mc_report_text(report)
    _emit(text, _get(args, "out"))
    if report.flagged_failed:
        raise ConvergenceError(
            f"{report.failed} of {report.requested} replicates failed to fit"
        )
    return 0


def _cmd_wald(args):
    kind, data, meta = _load_data(_get(args, "in_path", required=True))
    family, _ = _family_from_args(args, meta)
    if family.kind != "power_offset":
        raise DomainError("the affinity test needs the power_offset family")
    method = _get(args, "method", "mle")
    size = float(_get(args, "size", 0.05))
    pinned = make_family(family.kind, box=family.box.with_pinned(1, 1.0))
    if method == "mle":
        if kind != "history":
            raise DomainError("method mle needs a full attachment history")
        fit_u = fit_mle(family, data)
        fit_c = fit_mle(pinned, data)
        n = data.n
    elif method == "pmle":
        snap = data if kind == "snapshot" else snapshot_of(data)
        fit_u = fit_pmle(family, snap)
        fit_c = fit_pmle(pinned, snap)
        n = snap.n
    else:
        raise DomainError("wald method must be mle or pmle")
    report = wald_affinity(family, fit_c, float(fit_u.theta_hat[1]), n, size)
    text = wald_csv(report) if _get(args, "format", "report") == "csv" else wald_report(report)
    _emit(text, _get(args, "out"))
    return 0


def _cmd_bootstrap(args):
    kind, data, meta = _load_data(_get(args, "in_path", required=True))
    family, _ = _family_from_args(args, meta)
    snap = data if kind == "snapshot" else snapshot_of(data)
    m = int(_get(args, "m", _DESK_M))
    s = int(_get(args, "reps", _DESK_S))
    seed = _get(args, "seed", 0)
    size = float(_get(args, "size", 0.05))
    fit = fit_pmle(family, snap)
    theta_tilde = fit.theta_hat
    test = _get(args, "test")
    theta_sim = np.array(theta_tilde, dtype=float)
    coordinate = null_value = None
    if test is not None:
        name, _, raw = str(test).partition("=")
        if not raw:
            raise DomainError("--test expects coordinate=null_value")
        coordinate = _coordinate_index(family, name.strip())
        null_value = float(raw)
        theta_sim[coordinate] = null_value
    bv = bootstrap_variance(family, theta_sim, m, s, seed)
    as_csv = _get(args, "format", "report") == "csv"
    text = bootstrap_csv(bv) if as_csv else bootstrap_report(bv)
    if test is not None:
        wr = bootstrap_wald(theta_tilde, bv.sigma_tilde, coordinate, null_value, snap.n, size)
        text += wald_csv(wr) if as_csv else wald_report(wr)
    _emit(text, _get(args, "out"))
    return 0


def _cmd_urn(args):
    kind = _get(args, "family", "affine")
    theta = _parse_theta(_get(args, "theta"))
    kappa = _get(args, "kappa")
    if kind == "affine":
        alpha = 0.0 if theta is None else float(theta[0])
        system = build_affine_urn(alpha, int(kappa) if kappa is not None else 5)
    elif kind == "eventually_constant":
        family = make_family(kind, cutoff=_get(args, "cutoff", required=True))
        theta = _require_theta(family, theta)
        system = build_cutoff_urn(family, theta, None if kappa is None else int(kappa))
    else:
        raise DomainError("urn family must be affine or eventually_constant")
    lam1, lam2, ok = eigen_condition(system)
    if ok:
        limit_covariance(system)
    composition = None
    steps = _get(args, "simulate")
    if steps is not None:
        composition = urn_simulate(system, int(steps), _get(args, "seed", 0))
    if _get(args, "format", "report") == "csv":
        text = urn_bundle(system)
        if composition is not None:
            text += "# block composition 1 %d\n" % composition.size
            text += ",".join(str(int(v)) for v in composition) + "\n"
    else:
        rows = [
            "urn system",
            f"  types            : {system.q}" + (f"  ({', '.join(system.labels)})" if system.labels else ""),
            f"  lambda1          : {system.lambda1!r}",
            f"  lambda2_real     : {system.lambda2_real!r}",
            f"  clt condition    : {'satisfied' if ok else 'NOT satisfied'} (needs Re lambda2 < lambda1/2)",
        ]
        if system.Sigma is not None:
            rows.append("  Sigma:")
            rows.extend("    " + "  ".join(repr(float(v)) for v in r) for r in system.Sigma)
        if composition is not None:
            rows.append(
                "  composition after %s draws: %s"
                % (steps, "  ".join(str(int(v)) for v in composition))
            )
        text = "\n".join(rows) + "\n"
    _emit(text, _get(args, "out"))
    return 0


def _cmd_limits(args):
    family, theta = _family_from_args(args)
    theta = _require_theta(family, theta)
    law = limit_law(family, theta, tail_tol=float(_get(args, "tail_tol", 1e-12)))
    if _get(args, "format", "report") == "csv":
        text = law_csv(law, family, theta)
    else:
        score = limit_score(family, theta, law)
        head = min(10, law.probs.size)
        rows = [
            "limiting degree law",
            f"  growth rate       : {float(law.lambda_star)!r}",
            f"  mean preference   : {float(law.mean_preference)!r}",
            f"  tail mass past K  : {float(law.tail_mass)!r}  (K={law.probs.size})",
            f"  score at theta    : " + "  ".join(repr(float(v)) for v in score),
            "  leading masses    :",
        ]
        rows.extend(f"    p_{k} = {float(law.probs[k - 1])!r}" for k in range(1, head + 1))
        text = "\n".join(rows) + "\n"
    _emit(text, _get(args, "out"))
    return 0


def _cmd_qq(args):
    if _get(args, "projected"):
        family, theta = _family_from_args(args)
        theta = _require_theta(family, theta)
        table = run_projected_bootstrap_qq(
            {
                "family": family,
                "theta0": theta,
                "n": int(_get(args, "n", _DESK_N)),
                "m": int(_get(args, "m", _DESK_M)),
                "s": int(_get(args, "bootstrap_reps", _DESK_S)),
                "reps": int(_get(args, "reps", _DESK_REPS)),
                "seed": _get(args, "seed", 0),
                "workers": int(_get(args, "workers", 1)),
                "center": _get(args, "center", "theta0"),
            }
        )
    else:
        family, theta, cfg = _mc_config(args)
        report = run_mc(cfg)
        coord = _coordinate_index(family, _get(args, "coordinate", 0))
        reference_sd = center = None
        if cfg["method"] == "mle":
            try:
                info = fisher_V0(family, theta, limit_law(family, theta))
                # limit covariance of sqrt(n)(theta_hat - theta0) is the
                # inverse of the information-like matrix
                reference_sd = float(np.sqrt(info.V0_inv[coord, coord] / cfg["n"]))
                center = float(theta[coord])
            except PatreeError:
                pass
        table = emit_qq(report.estimates[:, coord], reference_sd, center)
    if _get(args, "format", "csv") == "report":
        corr = float(np.corrcoef(table[:, 0], table[:, 1])[0, 1])
        dev = float(np.abs(table[:, 0] - table[:, 1]).max())
        text = (
            "qq data\n"
            f"  points             : {table.shape[0]}\n"
            f"  quantile correlation: {corr!r}\n"
            f"  max |deviation|    : {dev!r}\n"
        )
    else:
        text = qq_csv(table)
    _emit(text, _get(args, "out"))
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_common(p, *names):
    p.add_argument("--config", metavar="JSON", help="JSON file mirroring the long flags")
    p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    if "format" in names:
        p.add_argument("--format", choices=("csv", "report"))
    if "family" in names:
        p.add_argument("--family", choices=("power_offset", "affine", "log_power", "eventually_constant"))
        p.add_argument("--theta", help="comma-separated parameter values")
        p.add_argument("--cutoff", type=int, help="step point for eventually_constant")
    if "seed" in names:
        p.add_argument("--seed", type=int)
    if "n" in names:
        p.add_argument("--n", type=int, help=f"tree size (default {_DESK_N})")
    if "reps" in names:
        p.add_argument("--reps", type=int, help=f"replicate count (default {_DESK_REPS})")
    if "workers" in names:
        p.add_argument("--workers", type=int, help="worker processes (default 1)")
    if "method" in names:
        p.add_argument("--method", choices=("mle", "pmle", "ee"))
    if "in" in names:
        p.add_argument("--in", dest="in_path", metavar="PATH", help="saved history or snapshot")
    if "size" in names:
        p.add_argument("--size", type=float, help="test size (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="grow a tree and save it")
    _add_common(p, "family", "seed", "n")
    p.add_argument("--snapshot-out", metavar="PATH", help="also write the degree snapshot")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="fit theta from saved data")
    _add_common(p, "family", "in", "method", "format")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("mc", help="replicated estimation study")
    _add_common(p, "family", "seed", "n", "reps", "workers", "method", "format")
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("wald", help="affinity test on saved data")
    _add_common(p, "family", "in", "method", "size", "format")
    p.set_defaults(func=_cmd_wald)

    p = sub.add_parser("bootstrap", help="bootstrap variance of the snapshot fit")
    _add_common(p, "family", "in", "seed", "reps", "size", "format")
    p.add_argument("--m", type=int, help=f"bootstrap tree size (default {_DESK_M})")
    p.add_argument("--test", metavar="COORD=NULL", help="also run the coordinate test")
    p.set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("urn", help="degree urn spectrum and limit covariance")
    _add_common(p, "family", "seed", "format")
    p.add_argument("--kappa", type=int, help="tracked degree cap")
    p.add_argument("--simulate", type=int, metavar="STEPS", help="also draw this many urn steps")
    p.set_defaults(func=_cmd_urn)

    p = sub.add_parser("limits", help="limiting degree law and growth rate")
    _add_common(p, "family", "format")
    p.add_argument("--tail-tol", type=float, help="law truncation tolerance (default 1e-12)")
    p.set_defaults(func=_cmd_limits)

    p = sub.add_parser("qq", help="QQ-plot data for estimates or projected pivots")
    _add_common(p, "family", "seed", "n", "reps", "workers", "method", "format")
    p.add_argument("--coordinate", help="parameter name or index (default 0)")
    p.add_argument("--projected", action="store_true", default=None,
                   help="projected bootstrap pivots instead of replicated estimates")
    p.add_argument("--m", type=int, help=f"bootstrap tree size (default {_DESK_M})")
    p.add_argument("--bootstrap-reps", type=int, help=f"bootstrap fits per replicate (default {_DESK_S})")
    p.add_argument("--center", choices=("theta0", "zero"), help="projected pivot centering")
    p.set_defaults(func=_cmd_qq)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config(args)
        return int(args.func(args) or 0)
    except ConvergenceError as exc:
        print(f"patree: convergence failure: {exc}", file=sys.stderr)
        return 2
    except (DomainError, IntegrityError, InsufficientDataError) as exc:
        print(f"patree: invalid config: {exc}", file=sys.stderr)
        return 3
    except PatreeError as exc:
        print(f"patree: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"patree: invalid config: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
