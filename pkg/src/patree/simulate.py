"""Tree growth under a preferential attachment rule.

Trees start from a single root of degree one (the root keeps a loose
edge, so degrees sum to 2n - 1).  At step t a newcomer attaches to an
existing node of degree k with probability f(k) N_k(t-1) / S_f(t-1),
where S_f(t) = sum_k f(k) N_k(t).  Only the chosen degree D_t matters
for inference, so the sampler tracks degree classes, not adjacency:
class weights f(k) N_k live in a Fenwick (binary indexed) tree and each
step is an inverse-prefix search, O(log max_degree).

The stepping loop is compiled with numba; growing an n = 10^6 tree
takes well under a second after the first call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DomainError, IntegrityError
from .rng import as_generator


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fen_build(w):
    """Fenwick array over w[1..cap] (w[0] ignored), built in place, O(cap)."""
    fen = w.copy()
    cap = fen.shape[0] - 1
    for i in range(1, cap + 1):
        j = i + (i & -i)
        if j <= cap:
            fen[j] += fen[i]
    return fen


@njit(cache=True)
def _draw_class(fen, topbit, counts, maxdeg, target):
    """Smallest degree class k with prefix weight > target.

    Float roundoff can land the descent on an empty class or past the
    populated range; the guards snap to the nearest occupied class.
    """
    cap = fen.shape[0] - 1
    k = 0
    rem = target
    bm = topbit
    while bm:
        nk = k + bm
        if nk <= cap and fen[nk] <= rem:
            rem -= fen[nk]
            k = nk
        bm >>= 1
    k += 1
    if k > maxdeg:
        k = maxdeg
    if counts[k] == 0:
        j = k - 1
        while j >= 1 and counts[j] == 0:
            j -= 1
        if j >= 1:
            k = j
        else:
            while counts[k] == 0:
                k += 1
    return k


@njit(cache=True)
def _grow_steps(fen, counts, fvals, total, uni, degrees, t0, n, maxdeg):
    """Run attachment steps t = t0..n until done or capacity is reached.

    Returns (next step to run, max degree, running total weight); the
    caller re-enters with doubled arrays when the max degree hits the
    Fenwick capacity.
    """
    cap = fen.shape[0] - 1
    topbit = 1
    while topbit * 2 <= cap:
        topbit *= 2
    t = t0
    while t <= n:
        k = _draw_class(fen, topbit, counts, maxdeg, uni[t - 2] * total)
        degrees[t - 2] = k
        counts[k] -= 1
        counts[k + 1] += 1
        counts[1] += 1
        dk = fvals[k + 1] - fvals[k]
        i = k
        while i <= cap:
            fen[i] -= fvals[k]
            i += i & -i
        i = k + 1
        while i <= cap:
            fen[i] += fvals[k + 1]
            i += i & -i
        i = 1
        while i <= cap:
            fen[i] += fvals[1]
            i += i & -i
        total += dk + fvals[1]
        if k + 1 > maxdeg:
            maxdeg = k + 1
        t += 1
        if maxdeg >= cap:
            break
    return t, maxdeg, total


@njit(cache=True)
def _draw_many(fen, counts, maxdeg, total, uni, out):
    cap = fen.shape[0] - 1
    topbit = 1
    while topbit * 2 <= cap:
        topbit *= 2
    for i in range(uni.shape[0]):
        out[i] = _draw_class(fen, topbit, counts, maxdeg, uni[i] * total)


@njit(cache=True)
def _replay(D, counts):
    """Apply the degree-count update along a history.

    counts must be zeroed with room for max(D) + 1.  Returns 0 on
    success, else the step index t at which the history is inconsistent
    (chooses a degree class that is empty or not yet reachable).
    """
    counts[1] = 1
    for i in range(D.shape[0]):
        k = D[i]
        if k < 1 or k > i + 1 or counts[k] <= 0:
            return i + 2
        counts[k] -= 1
        counts[k + 1] += 1
        counts[1] += 1
    return 0


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class GrowthHistory:
    """Attachment record of a grown tree.

    degrees_chosen[t - 2] is the degree the t-th node's target had just
    before the attachment, for t = 2..n.  Parent node indices (1-based,
    root = 1) are kept only when the tree was grown with
    record_parents=True.
    """

    degrees_chosen: np.ndarray
    parents: np.ndarray = None

    def __post_init__(self):
        self.degrees_chosen = np.asarray(self.degrees_chosen, dtype=np.int64)
        if self.degrees_chosen.ndim != 1:
            raise DomainError("degrees_chosen must be a 1-d sequence")

    @property
    def n(self) -> int:
        return self.degrees_chosen.size + 1

    def validate(self) -> "GrowthHistory":
        D = self.degrees_chosen
        if D.size:
            buf = np.zeros(int(D.max()) + 2, dtype=np.int64)
            bad = _replay(D, buf)
            if bad:
                raise IntegrityError(f"history inconsistent at step t={bad}")
        return self


@dataclass
class DegreeSnapshot:
    """Degree histogram of a tree: counts[k] = number of nodes of degree k.

    Only nonzero degrees are stored.  For a tree grown here the counts
    satisfy sum_k counts[k] = n and sum_k k * counts[k] = 2n - 1 (the
    root's loose edge contributes one).
    """

    counts: dict

    def __post_init__(self):
        self.counts = {int(k): int(c) for k, c in self.counts.items() if c != 0}

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    @property
    def max_degree(self) -> int:
        return max(self.counts) if self.counts else 0

    @classmethod
    def from_dense(cls, arr) -> "DegreeSnapshot":
        arr = np.asarray(arr)
        return cls({k: int(c) for k, c in enumerate(arr) if c != 0})

    def dense(self, length: int = None) -> np.ndarray:
        """Counts as an array indexed by degree (entry 0 unused)."""
        m = self.max_degree
        length = m + 1 if length is None else length
        out = np.zeros(length, dtype=np.int64)
        for k, c in self.counts.items():
            if k < length:
                out[k] = c
        return out

    def tail_counts(self) -> np.ndarray:
        """tail[k] = number of nodes of degree > k, for k = 0..max_degree."""
        dense = self.dense()
        return self.n - np.cumsum(dense)

    def validate(self) -> "DegreeSnapshot":
        if any(k < 1 or c < 0 for k, c in self.counts.items()):
            raise IntegrityError("snapshot has a degree < 1 or a negative count")
        n = self.n
        if n < 1:
            raise IntegrityError("snapshot is empty")
        degree_sum = sum(k * c for k, c in self.counts.items())
        if degree_sum != 2 * n - 1:
            raise IntegrityError(
                f"degree sum {degree_sum} != 2n-1 = {2 * n - 1} (loose-edge convention)"
            )
        return self


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def grow(family, theta, n: int, seed, record_parents: bool = False,
         initial_capacity: int = 256):
    """Grow an n-node tree; returns (GrowthHistory, DegreeSnapshot).

    Deterministic given the seed.  record_parents switches to a slow
    O(n^2) reference path that also stores parent node indices.
    """
    th = family.validate_theta(theta)
    n = int(n)
    if n < 1:
        raise DomainError("need n >= 1 nodes")
    if record_parents:
        return _grow_with_parents(family, th, n, seed)
    rng = as_generator(seed)
    uni = rng.random(n - 1)
    degrees = np.zeros(n - 1, dtype=np.int64)

    cap = max(int(initial_capacity), 4)
    counts = np.zeros(cap + 1, dtype=np.int64)
    counts[1] = 1
    fvals = np.zeros(cap + 1)
    fvals[1:] = family.eval(th, np.arange(1, cap + 1))
    fen = _fen_build(fvals * counts)
    total = fvals[1]
    maxdeg = 1
    t = 2
    while t <= n:
        t, maxdeg, total = _grow_steps(
            fen, counts, fvals, total, uni, degrees, t, n, maxdeg
        )
        if t <= n:  # max degree reached capacity: double and re-enter
            cap *= 2
            grown = np.zeros(cap + 1, dtype=np.int64)
            grown[: counts.size] = counts
            counts = grown
            fvals = np.zeros(cap + 1)
            fvals[1:] = family.eval(th, np.arange(1, cap + 1))
            fen = _fen_build(fvals * counts)
            total = float(np.dot(fvals, counts))
    history = GrowthHistory(degrees_chosen=degrees)
    snapshot = DegreeSnapshot.from_dense(counts)
    return history, snapshot


def _grow_with_parents(family, th, n, seed):
    rng = as_generator(seed)
    deg = np.ones(n + 1, dtype=np.int64)  # deg[v] for v = 1..t-1
    degrees = np.zeros(n - 1, dtype=np.int64)
    parents = np.zeros(n - 1, dtype=np.int64)
    kmax = 1
    fval = family.eval(th, np.arange(1, n + 2))
    for t in range(2, n + 1):
        w = fval[deg[1:t] - 1]
        c = np.cumsum(w)
        v = 1 + int(np.searchsorted(c, rng.random() * c[-1], side="right"))
        v = min(v, t - 1)
        degrees[t - 2] = deg[v]
        parents[t - 2] = v
        deg[v] += 1
        kmax = max(kmax, deg[v])
    history = GrowthHistory(degrees_chosen=degrees, parents=parents)
    snapshot = DegreeSnapshot.from_dense(np.bincount(deg[1 : n + 1]))
    return history, snapshot


def snapshot_of(history: GrowthHistory) -> DegreeSnapshot:
    """Degree histogram implied by a history, via the count update rule."""
    D = history.degrees_chosen
    if D.size == 0:
        return DegreeSnapshot({1: 1})
    buf = np.zeros(int(D.max()) + 2, dtype=np.int64)
    bad = _replay(D, buf)
    if bad:
        raise IntegrityError(f"history inconsistent at step t={bad}")
    return DegreeSnapshot.from_dense(buf)


def total_preference_trace(family, theta, history: GrowthHistory) -> np.ndarray:
    """S_f(t) = sum_k f(k) N_k(t) for t = 1..n-1 along a history.

    Uses the one-step recursion S(t) = S(t-1) + f(D_t + 1) - f(D_t) + f(1)
    started from S(1) = f(1); these are the denominators of the
    attachment probabilities actually faced by nodes 2..n.
    """
    th = family.validate_theta(theta)
    n = history.n
    if n == 1:
        return np.empty(0)
    f1 = float(family.eval(th, 1))
    S = f1 * np.arange(1, n, dtype=float)
    if n > 2:
        D = history.degrees_chosen
        step = family.eval(th, D + 1) - family.eval(th, D)
        S[1:] += np.cumsum(step)[: n - 2]
    return S


def sample_attachment_degrees(family, theta, snapshot: DegreeSnapshot,
                              reps: int, seed) -> np.ndarray:
    """Draw reps one-step attachment degrees from a frozen snapshot.

    Exercises the same Fenwick search as grow() but never updates the
    counts; the draws are i.i.d. with P(k) = f(k) N_k / S_f.
    """
    th = family.validate_theta(theta)
    counts = snapshot.dense()
    cap = counts.size - 1
    if cap < 1 or counts.sum() < 1:
        raise DomainError("snapshot has no nodes to attach to")
    fvals = np.zeros(cap + 1)
    fvals[1:] = family.eval(th, np.arange(1, cap + 1))
    fen = _fen_build(fvals * counts)
    total = float(np.dot(fvals, counts))
    rng = as_generator(seed)
    out = np.zeros(reps, dtype=np.int64)
    _draw_many(fen, counts, snapshot.max_degree, total, rng.random(reps), out)
    return out
