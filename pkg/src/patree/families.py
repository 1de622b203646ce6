"""Parametric families of preferential attachment functions.

A family assigns to each parameter vector theta a positive, non-decreasing
weight function f_theta on the degrees k = 1, 2, ...  Four kinds are
provided:

* :class:`PowerOffset`      f(k) = (k + alpha)^beta,  theta = (alpha, beta)
* :class:`Affine`           f(k) = k + alpha,         theta = (alpha,)
* :class:`LogPower`         f(k) = log(max(k, 2))^beta, theta = (beta,)
* :class:`EventuallyConstant`  f(k) = theta_min(k, K) for a cutoff K

Parameters live in a compact box (:class:`ParamBox`); evaluation outside
the box raises :class:`~patree.errors.DomainError`.  All evaluators are
vectorized over k and return derivative arrays with the parameter axes
last, so ``grad(theta, k)`` has shape ``k.shape + (dim,)`` and
``hess(theta, k)`` has shape ``k.shape + (dim, dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Half-width of the default parameter boxes: offsets live in
# [-1 + BOX_EPS, 1 / BOX_EPS], positive scales in [BOX_EPS, 1 / BOX_EPS].
BOX_EPS = 0.05


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned compact parameter box.

    A degenerate axis (lower == upper) pins that coordinate; fitting
    routines treat pinned coordinates as fixed.
    """

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        if len(lo) != len(hi):
            raise DomainError("box lower and upper must have equal length")
        if any(not np.isfinite(a) or not np.isfinite(b) for a, b in zip(lo, hi)):
            raise DomainError("box must be bounded")
        if any(a > b for a, b in zip(lo, hi)):
            raise DomainError("box has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def arrays(self):
        return np.array(self.lower), np.array(self.upper)

    def contains(self, theta, atol: float = 1e-12) -> bool:
        th = np.asarray(theta, dtype=float)
        lo, hi = self.arrays()
        return bool(np.all(th >= lo - atol) and np.all(th <= hi + atol))

    def clip(self, theta) -> np.ndarray:
        lo, hi = self.arrays()
        return np.clip(np.asarray(theta, dtype=float), lo, hi)

    def center(self) -> np.ndarray:
        lo, hi = self.arrays()
        return 0.5 * (lo + hi)

    def pinned(self) -> np.ndarray:
        """Boolean mask of degenerate (fixed) coordinates."""
        lo, hi = self.arrays()
        return lo == hi

    def with_pinned(self, index: int, value: float) -> "ParamBox":
        """Copy of the box with coordinate ``index`` pinned to ``value``."""
        lo = list(self.lower)
        hi = list(self.upper)
        if not lo[index] <= value <= hi[index]:
            raise DomainError(f"pinned value {value} outside box axis {index}")
        lo[index] = hi[index] = float(value)
        return ParamBox(tuple(lo), tuple(hi))


def _check_theta(family, theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (family.dim,):
        raise DomainError(
            f"{family.kind} expects {family.dim} parameter(s), got shape {th.shape}"
        )
    if not family.box.contains(th):
        raise DomainError(f"theta {th.tolist()} outside box of {family.kind}")
    return th


def _check_degrees(k):
    """Degrees must be integers >= 1.  Returns (float array, was_scalar)."""
    arr = np.asarray(k)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise DomainError("degrees must be integers")
    if arr.size and arr.min() < 1:
        raise DomainError("degrees must be >= 1")
    return arr.astype(float), scalar


def _shape(out, scalar):
    if scalar:
        return out[0] if out.ndim == 1 else out[0, ...]
    return out


@dataclass(frozen=True)
class PowerOffset:
    """f(k) = (k + alpha)^beta with theta = (alpha, beta).

    The default box keeps k + alpha bounded away from zero and beta in
    [0, 1], so every member is non-decreasing and at most linear.
    """

    box: ParamBox = field(
        default_factory=lambda: ParamBox((-1.0 + BOX_EPS, 0.0), (1.0 / BOX_EPS, 1.0))
    )

    kind = "power_offset"
    names = ("alpha", "beta")
    dim = 2

    def eval(self, theta, k):
        alpha, beta = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape((kk + alpha) ** beta, scalar)

    def grad(self, theta, k):
        alpha, beta = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        base = kk + alpha
        out = np.empty(kk.shape + (2,))
        out[..., 0] = beta * base ** (beta - 1.0)
        out[..., 1] = base**beta * np.log(base)
        return _shape(out, scalar)

    def hess(self, theta, k):
        alpha, beta = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        base = kk + alpha
        lb = np.log(base)
        out = np.empty(kk.shape + (2, 2))
        out[..., 0, 0] = beta * (beta - 1.0) * base ** (beta - 2.0)
        out[..., 0, 1] = base ** (beta - 1.0) * (1.0 + beta * lb)
        out[..., 1, 0] = out[..., 0, 1]
        out[..., 1, 1] = base**beta * lb**2
        return _shape(out, scalar)

    def validate_theta(self, theta) -> np.ndarray:
        return _check_theta(self, theta)

    def sublinearity(self, theta) -> str:
        _, beta = _check_theta(self, theta)
        return "affine" if beta == 1.0 else "strict"

    def label(self, theta) -> str:
        a, b = np.asarray(theta, dtype=float)
        return f"(k{a:+g})^{b:g}"


@dataclass(frozen=True)
class Affine:
    """f(k) = k + alpha with theta = (alpha,)."""

    box: ParamBox = field(
        default_factory=lambda: ParamBox((-1.0 + BOX_EPS,), (1.0 / BOX_EPS,))
    )

    kind = "affine"
    names = ("alpha",)
    dim = 1

    def eval(self, theta, k):
        (alpha,) = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(kk + alpha, scalar)

    def grad(self, theta, k):
        _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(np.ones(kk.shape + (1,)), scalar)

    def hess(self, theta, k):
        _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(np.zeros(kk.shape + (1, 1)), scalar)

    def validate_theta(self, theta) -> np.ndarray:
        return _check_theta(self, theta)

    def sublinearity(self, theta) -> str:
        return "affine"

    def label(self, theta) -> str:
        (a,) = np.asarray(theta, dtype=float)
        return f"k{a:+g}"


@dataclass(frozen=True)
class LogPower:
    """f(k) = log(max(k, 2))^beta with theta = (beta,).

    The floor at k = 2 keeps f(1) positive (log 1 would vanish); the
    function is constant on {1, 2} and strictly increasing afterwards.
    """

    box: ParamBox = field(
        default_factory=lambda: ParamBox((BOX_EPS,), (1.0 / BOX_EPS,))
    )

    kind = "log_power"
    names = ("beta",)
    dim = 1

    def eval(self, theta, k):
        (beta,) = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(np.log(np.maximum(kk, 2.0)) ** beta, scalar)

    def grad(self, theta, k):
        (beta,) = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        ell = np.log(np.maximum(kk, 2.0))
        out = (ell**beta * np.log(ell))[..., None]
        return _shape(out, scalar)

    def hess(self, theta, k):
        (beta,) = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        ell = np.log(np.maximum(kk, 2.0))
        out = (ell**beta * np.log(ell) ** 2)[..., None, None]
        return _shape(out, scalar)

    def validate_theta(self, theta) -> np.ndarray:
        return _check_theta(self, theta)

    def sublinearity(self, theta) -> str:
        return "strict"

    def label(self, theta) -> str:
        (b,) = np.asarray(theta, dtype=float)
        return f"log(k)^{b:g}"


@dataclass(frozen=True)
class EventuallyConstant:
    """f(k) = theta_min(k, K): free values up to a cutoff, then constant.

    theta has one coordinate per degree 1..K, each positive.  The family
    is saturated in the sense that any positive non-decreasing function
    on 1..K arises; validate_theta additionally enforces monotonicity,
    which fitting routines do not assume on intermediate iterates.
    """

    cutoff: int
    box: ParamBox = None

    kind = "eventually_constant"

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise DomainError("cutoff must be an integer >= 1")
        object.__setattr__(self, "cutoff", int(self.cutoff))
        if self.box is None:
            k = self.cutoff
            object.__setattr__(
                self, "box", ParamBox((BOX_EPS,) * k, (1.0 / BOX_EPS,) * k)
            )
        if self.box.dim != self.cutoff:
            raise DomainError("box dimension must equal cutoff")

    @property
    def names(self):
        return tuple(f"f{j}" for j in range(1, self.cutoff + 1))

    @property
    def dim(self) -> int:
        return self.cutoff

    def _index(self, kk):
        return np.minimum(kk.astype(int), self.cutoff) - 1

    def eval(self, theta, k):
        th = _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(th[self._index(kk)], scalar)

    def grad(self, theta, k):
        _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        out = np.zeros(kk.shape + (self.dim,))
        idx = self._index(kk)
        np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
        return _shape(out, scalar)

    def hess(self, theta, k):
        _check_theta(self, theta)
        kk, scalar = _check_degrees(k)
        return _shape(np.zeros(kk.shape + (self.dim, self.dim)), scalar)

    def validate_theta(self, theta) -> np.ndarray:
        th = _check_theta(self, theta)
        if np.any(th <= 0.0):
            raise DomainError("eventually constant values must be positive")
        if np.any(np.diff(th) < 0.0):
            raise DomainError("eventually constant values must be non-decreasing")
        return th

    def sublinearity(self, theta) -> str:
        return "strict"

    def label(self, theta) -> str:
        vals = ",".join(f"{v:g}" for v in np.asarray(theta, dtype=float))
        return f"steps({vals})"


FAMILY_KINDS = {
    "power_offset": PowerOffset,
    "affine": Affine,
    "log_power": LogPower,
    "eventually_constant": EventuallyConstant,
}


def make_family(kind: str, cutoff: int = None, box: ParamBox = None):
    """Build a family by kind name; cutoff is required for step families."""
    if kind not in FAMILY_KINDS:
        raise DomainError(f"unknown family kind {kind!r}")
    if kind == "eventually_constant":
        if cutoff is None:
            raise DomainError("eventually_constant needs a cutoff")
        return EventuallyConstant(cutoff=cutoff) if box is None else EventuallyConstant(cutoff=cutoff, box=box)
    cls = FAMILY_KINDS[kind]
    return cls() if box is None else cls(box=box)


def family_to_config(family, theta=None) -> dict:
    """Plain-dict form of a family (and optionally a parameter point)."""
    cfg = {
        "kind": family.kind,
        "bounds": {"lower": list(family.box.lower), "upper": list(family.box.upper)},
    }
    if isinstance(family, EventuallyConstant):
        cfg["cutoff"] = family.cutoff
    if theta is not None:
        th = np.asarray(theta, dtype=float)
        cfg["parameters"] = {name: float(v) for name, v in zip(family.names, th)}
    return cfg


def family_from_config(cfg: dict):
    """Inverse of :func:`family_to_config`; returns (family, theta or None)."""
    if "kind" not in cfg:
        raise DomainError("family config needs a 'kind' key")
    kind = cfg["kind"]
    box = None
    if "bounds" in cfg:
        box = ParamBox(tuple(cfg["bounds"]["lower"]), tuple(cfg["bounds"]["upper"]))
    family = make_family(kind, cutoff=cfg.get("cutoff"), box=box)
    theta = None
    if "parameters" in cfg:
        p = cfg["parameters"]
        if isinstance(p, dict):
            missing = [n for n in family.names if n not in p]
            if missing:
                raise DomainError(f"family config parameters missing {missing}")
            theta = np.array([float(p[n]) for n in family.names])
        else:
            theta = np.asarray(p, dtype=float)
            if theta.shape != (family.dim,):
                raise DomainError("family config parameters have wrong length")
    return family, theta
