"""File formats: seven small text formats, all round-trippable where the
object is data (history, snapshot, law, family config, urn bundle) and
report-style where it is a result (fits, tests, bootstrap variances).

Every float is written with repr(), which round-trips bit-exactly
through float(); metadata rides in a single leading JSON comment line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainError, IntegrityError
from .families import family_from_config, family_to_config
from .limits import LimitLaw
from .simulate import DegreeSnapshot, GrowthHistory
from .urns import UrnSystem


def _meta_line(meta: dict) -> str:
    return "# " + json.dumps(meta)


def _read_meta(line: str) -> dict:
    if not line.startswith("# "):
        raise IntegrityError("missing metadata header line")
    return json.loads(line[2:])


def _family_meta(family, theta):
    if family is None:
        return None
    return family_to_config(family, theta)


# ---------------------------------------------------------------------------
# family config
# ---------------------------------------------------------------------------


def save_family_config(path, family, theta=None) -> None:
    Path(path).write_text(json.dumps(family_to_config(family, theta), indent=2) + "\n")


def load_family_config(path):
    """Returns (family, theta-or-None)."""
    return family_from_config(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# histories and snapshots
# ---------------------------------------------------------------------------


def history_csv(history: GrowthHistory, family=None, theta=None, seed=None) -> str:
    """One attachment degree per line, oldest first."""
    meta = {"n": history.n, "seed": seed, "family": _family_meta(family, theta)}
    lines = [_meta_line(meta)]
    lines.extend(str(int(d)) for d in history.degrees_chosen)
    return "\n".join(lines) + "\n"


def save_history(path, history: GrowthHistory, family=None, theta=None, seed=None) -> None:
    Path(path).write_text(history_csv(history, family, theta, seed))


def load_history(path):
    """Returns (history, meta dict)."""
    lines = Path(path).read_text().splitlines()
    meta = _read_meta(lines[0])
    degs = np.array([int(s) for s in lines[1:] if s.strip()], dtype=np.int64)
    if degs.size != meta["n"] - 1:
        raise IntegrityError(
            f"header says n={meta['n']} but found {degs.size} attachment degrees"
        )
    return GrowthHistory(degrees_chosen=degs), meta


def snapshot_csv(snapshot: DegreeSnapshot, family=None, theta=None, seed=None) -> str:
    meta = {"n": snapshot.n, "seed": seed, "family": _family_meta(family, theta)}
    lines = [_meta_line(meta), "k,count"]
    lines.extend(f"{k},{c}" for k, c in sorted(snapshot.counts.items()))
    return "\n".join(lines) + "\n"


def save_snapshot(path, snapshot: DegreeSnapshot, family=None, theta=None, seed=None) -> None:
    Path(path).write_text(snapshot_csv(snapshot, family, theta, seed))


def load_snapshot(path):
    """Returns (snapshot, meta dict)."""
    lines = Path(path).read_text().splitlines()
    meta = _read_meta(lines[0])
    if lines[1] != "k,count":
        raise IntegrityError("expected 'k,count' column header")
    counts = {}
    for line in lines[2:]:
        if not line.strip():
            continue
        k, c = line.split(",")
        counts[int(k)] = int(c)
    snap = DegreeSnapshot(counts=counts)
    if snap.n != meta["n"]:
        raise IntegrityError(f"header says n={meta['n']} but counts give n={snap.n}")
    return snap, meta


# ---------------------------------------------------------------------------
# limit laws
# ---------------------------------------------------------------------------


def law_csv(law: LimitLaw, family=None, theta=None) -> str:
    meta = {
        "lambda_star": law.lambda_star,
        "tail_mass": law.tail_mass,
        "mean_preference": law.mean_preference,
        "family": _family_meta(family, theta),
    }
    lines = [_meta_line(meta), "k,p_k"]
    lines.extend(f"{k},{float(p)!r}" for k, p in enumerate(law.probs, start=1))
    return "\n".join(lines) + "\n"


def save_law(path, law: LimitLaw, family=None, theta=None) -> None:
    Path(path).write_text(law_csv(law, family, theta))


def load_law(path):
    """Returns (law, meta dict)."""
    lines = Path(path).read_text().splitlines()
    meta = _read_meta(lines[0])
    if lines[1] != "k,p_k":
        raise IntegrityError("expected 'k,p_k' column header")
    probs = []
    for i, line in enumerate(lines[2:], start=1):
        if not line.strip():
            continue
        k, p = line.split(",")
        if int(k) != i:
            raise IntegrityError(f"law rows must be consecutive from k=1, got {k}")
        probs.append(float(p))
    law = LimitLaw(
        lambda_star=meta["lambda_star"],
        probs=np.array(probs),
        tail_mass=meta["tail_mass"],
        mean_preference=meta["mean_preference"],
    )
    return law, meta


# ---------------------------------------------------------------------------
# result reports (fit, tests, bootstrap)
# ---------------------------------------------------------------------------


def _names_for(family, d):
    if family is not None and len(family.names) == d:
        return family.names
    return tuple(f"theta_{i}" for i in range(d))


def fit_report(fit, family=None) -> str:
    names = _names_for(family, fit.theta_hat.size)
    rows = [
        "fit result",
        "  theta_hat   : "
        + "  ".join(f"{n}={float(v)!r}" for n, v in zip(names, fit.theta_hat)),
        f"  objective   : {float(fit.objective)!r}",
        f"  score_norm  : {float(fit.score_norm)!r}",
        f"  iterations  : {fit.iterations}",
        f"  converged   : {'yes' if fit.converged else 'no'}",
        "  at_boundary : "
        + "  ".join(f"{n}={'yes' if b else 'no'}" for n, b in zip(names, fit.at_boundary)),
    ]
    return "\n".join(rows) + "\n"


def fit_csv(fit, family=None) -> str:
    names = _names_for(family, fit.theta_hat.size)
    head = (
        list(names)
        + ["objective", "score_norm", "iterations", "converged"]
        + [f"at_boundary_{n}" for n in names]
    )
    row = (
        [repr(float(v)) for v in fit.theta_hat]
        + [repr(float(fit.objective)), repr(float(fit.score_norm)), str(fit.iterations),
           str(int(fit.converged))]
        + [str(int(b)) for b in fit.at_boundary]
    )
    return ",".join(head) + "\n" + ",".join(row) + "\n"


def wald_report(report) -> str:
    rows = [
        "wald test",
        f"  tail           : {report.tail}",
        f"  statistic      : {report.statistic!r}",
        f"  critical_value : {report.critical_value!r}",
        f"  variance_entry : {report.variance_entry!r}",
        f"  reject         : {'yes' if report.reject else 'no'}",
    ]
    return "\n".join(rows) + "\n"


def wald_csv(report) -> str:
    head = "tail,statistic,critical_value,variance_entry,reject"
    row = ",".join(
        [report.tail, repr(float(report.statistic)), repr(float(report.critical_value)),
         repr(float(report.variance_entry)), str(int(report.reject))]
    )
    return head + "\n" + row + "\n"


def bootstrap_report(bv) -> str:
    rows = [
        "bootstrap variance",
        f"  tree size m : {bv.m}",
        f"  replicates s: {bv.s}",
        f"  seed_digest : {bv.seed_digest}",
        "  sigma_tilde :",
    ]
    for r in bv.sigma_tilde:
        rows.append("    " + "  ".join(repr(float(v)) for v in r))
    return "\n".join(rows) + "\n"


def bootstrap_csv(bv) -> str:
    d = bv.sigma_tilde.shape[0]
    head = ["m", "s", "seed_digest"] + [
        f"sigma_{i}{j}" for i in range(d) for j in range(d)
    ]
    row = [str(bv.m), str(bv.s), bv.seed_digest] + [
        repr(float(v)) for v in bv.sigma_tilde.ravel()
    ]
    return ",".join(head) + "\n" + ",".join(row) + "\n"


def save_report(path, text: str) -> None:
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# urn bundles
# ---------------------------------------------------------------------------


def _block(name, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    lines = [f"# block {name} {arr.shape[0]} {arr.shape[1]}"]
    lines.extend(",".join(repr(float(v)) for v in row) for row in arr)
    return lines


def urn_bundle(system: UrnSystem) -> str:
    """CSV bundle: manifest line, then one block per matrix."""
    meta = {
        "q": system.q,
        "lambda1": system.lambda1,
        "lambda2_real": system.lambda2_real,
        "labels": list(system.labels),
        "has_sigma": system.Sigma is not None,
    }
    lines = [_meta_line(meta)]
    lines += _block("activities", system.activities)
    lines += _block("transitions", system.transitions)
    lines += _block("A", system.A)
    lines += _block("v1", system.v1)
    lines += _block("u1", system.u1)
    if system.Sigma is not None:
        lines += _block("Sigma", system.Sigma)
    return "\n".join(lines) + "\n"


def save_urn(path, system: UrnSystem) -> None:
    Path(path).write_text(urn_bundle(system))


def load_urn(path) -> UrnSystem:
    lines = Path(path).read_text().splitlines()
    meta = _read_meta(lines[0])
    blocks = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if parts[:2] != ["#", "block"]:
            raise IntegrityError(f"expected block header at line {i + 1}")
        name, nr, nc = parts[2], int(parts[3]), int(parts[4])
        rows = [
            [float(v) for v in lines[i + 1 + r].split(",")] for r in range(nr)
        ]
        arr = np.array(rows)
        if arr.shape != (nr, nc):
            raise IntegrityError(f"block {name} shape mismatch")
        blocks[name] = arr
        i += 1 + nr
    need = {"activities", "transitions", "A", "v1", "u1"}
    if not need <= set(blocks):
        raise IntegrityError(f"missing blocks {need - set(blocks)}")
    q = meta["q"]
    system = UrnSystem(
        activities=blocks["activities"].ravel(),
        transitions=blocks["transitions"],
        A=blocks["A"],
        lambda1=meta["lambda1"],
        v1=blocks["v1"].ravel(),
        u1=blocks["u1"].ravel(),
        lambda2_real=meta["lambda2_real"],
        Sigma=blocks.get("Sigma"),
        labels=tuple(meta["labels"]),
    )
    if system.q != q or system.A.shape != (q, q):
        raise DomainError("inconsistent urn bundle dimensions")
    A_check = (system.activities[:, None] * system.transitions).T
    if not np.array_equal(A_check, system.A):
        raise IntegrityError("transfer matrix does not match activities and transitions")
    return system
