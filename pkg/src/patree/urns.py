"""Generalized Polya urns for degree-class counts of growing trees.

An urn holds q colors with activities a_i >= 0.  Each step draws color i
with probability a_i X_i / sum_j a_j X_j and adds the deterministic
replacement vector xi_i to the composition X.  The transfer matrix
A_ij = a_j xi_{j,i} drives the asymptotics: X_n / n -> lambda1 v1 with
(lambda1, v1) the Perron pair of A, and when Re lambda2 < lambda1 / 2,

    sqrt(n) (X_n / n - lambda1 v1)  ->  N(0, Sigma),

    Sigma = int_0^inf psi(s) B psi(s)^T lambda1 e^{-lambda1 s} ds
            - lambda1^2 v1 v1^T,
    B     = sum_i v1_i a_i xi_i xi_i^T,
    psi(s) = e^{sA} - lambda1 v1 a^T phi(s, A),   phi(s, A) = int_0^s e^{uA} du.

Two urn builders cover the tree models: the affine urn tracks degree
classes 1..kappa plus the pooled preference mass of higher degrees for
f(k) = k + alpha; the cutoff urn tracks degree classes 1..kappa plus the
pooled count of higher degrees for an eventually constant f.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import quad_vec
from scipy.linalg import eig, expm
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from .errors import AbsorbingStateError, DomainError, NumericError
from .families import EventuallyConstant
from .rng import as_generator

_EIG_TOL = 1e-8
_MAX_PANELS = 64


@dataclass
class UrnSystem:
    """A generalized Polya urn with its Perron data.

    transitions[i] is the replacement vector xi_i added after drawing
    color i.  v1 is normalized by activities^T v1 = 1 and u1 (the left
    Perron vector) by u1^T v1 = 1, so X_n / n -> lambda1 v1.
    """

    activities: np.ndarray
    transitions: np.ndarray
    A: np.ndarray
    lambda1: float
    v1: np.ndarray
    u1: np.ndarray
    lambda2_real: float
    Sigma: np.ndarray = None
    labels: tuple = field(default=())

    @property
    def q(self) -> int:
        return self.activities.size


def _assemble(a: np.ndarray, xi: np.ndarray, labels=()) -> UrnSystem:
    """Build the transfer matrix, validate structure, find the Perron pair."""
    a = np.asarray(a, dtype=float)
    xi = np.asarray(xi, dtype=float)
    q = a.size
    if xi.shape != (q, q):
        raise DomainError(f"need {q} replacement vectors of length {q}")
    if np.any(a < 0.0) or not np.any(a > 0.0):
        raise DomainError("activities must be nonnegative with at least one positive")
    sums = xi.sum(axis=1)
    if np.any(sums < 0.0) or not np.any(sums > 0.0):
        raise DomainError("replacements must not shrink the total content")

    A = (a[:, None] * xi).T  # A_ij = a_j xi_{j,i}

    ncomp, _ = connected_components(csr_matrix(A != 0.0), connection="strong")
    if ncomp != 1:
        raise DomainError("transfer matrix is reducible")

    try:
        w, vl, vr = eig(A, left=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError(f"eigen decomposition failed: {exc}") from None
    i1 = int(np.argmax(w.real))
    lam1 = w[i1]
    scale = max(1.0, abs(lam1))
    if abs(lam1.imag) > _EIG_TOL * scale or lam1.real <= 0.0:
        raise NumericError(f"leading eigenvalue {lam1} is not real positive")
    if np.sum(np.abs(w - lam1) < _EIG_TOL * scale) != 1:
        raise NumericError("leading eigenvalue is not simple")
    lam1 = float(lam1.real)
    rest = np.delete(w, i1)
    lam2 = float(rest.real.max()) if rest.size else -np.inf

    v1 = vr[:, i1].real
    v1 = v1 * np.sign(v1[np.argmax(np.abs(v1))])
    if np.any(v1 <= 0.0):
        raise NumericError("Perron eigenvector is not strictly positive")
    v1 = v1 / float(a @ v1)
    u1 = vl[:, i1].real
    u1 = u1 / float(u1 @ v1)
    if max(
        float(np.abs(A @ v1 - lam1 * v1).max()),
        float(np.abs(u1 @ A - lam1 * u1).max()),
    ) > _EIG_TOL * scale:
        raise NumericError("Perron pair residual too large")
    return UrnSystem(
        activities=a,
        transitions=xi,
        A=A,
        lambda1=lam1,
        v1=v1,
        u1=u1,
        lambda2_real=lam2,
        labels=tuple(labels),
    )


def build_affine_urn(alpha: float, kappa: int) -> UrnSystem:
    """Urn for f(k) = k + alpha: classes are degree 1..kappa counts plus
    the pooled preference mass sum_{deg > kappa} (deg + alpha).

    Drawing class i < kappa moves a node of degree i up one class and
    adds the new leaf; drawing class kappa pushes its node's full weight
    kappa + 1 + alpha into the mass class; drawing the mass class adds
    one unit of weight (a pooled node gained a degree).
    """
    alpha = float(alpha)
    if alpha <= -1.0:
        raise DomainError("need alpha > -1")
    kappa = int(kappa)
    if kappa < 2:
        raise DomainError("need kappa >= 2")
    q = kappa + 1
    a = np.empty(q)
    a[:kappa] = np.arange(1, kappa + 1) + alpha
    a[kappa] = 1.0
    xi = np.zeros((q, q))
    for i in range(kappa - 1):
        xi[i, i] -= 1.0
        xi[i, i + 1] += 1.0
        xi[i, 0] += 1.0
    xi[kappa - 1, kappa - 1] -= 1.0
    xi[kappa - 1, kappa] += kappa + 1.0 + alpha
    xi[kappa - 1, 0] += 1.0
    xi[kappa, kappa] += 1.0
    xi[kappa, 0] += 1.0
    labels = tuple(f"deg{k}" for k in range(1, kappa + 1)) + ("mass",)
    return _assemble(a, xi, labels)


def build_cutoff_urn(family: EventuallyConstant, theta, kappa: int = None) -> UrnSystem:
    """Urn for an eventually constant f: classes are degree 1..kappa
    counts plus the pooled count of degrees above kappa.

    Valid when f is constant on [kappa, inf), so every pooled node has
    the same activity f(kappa) and gaining a degree changes nothing.
    """
    if not isinstance(family, EventuallyConstant):
        raise DomainError("cutoff urns need an eventually constant family")
    th = family.validate_theta(theta)
    kappa = family.cutoff if kappa is None else int(kappa)
    if kappa < 1:
        raise DomainError("need kappa >= 1")
    if kappa < family.cutoff:
        raise DomainError(
            f"f is not constant beyond {kappa} (cutoff {family.cutoff})"
        )
    q = kappa + 1
    a = family.eval(th, np.minimum(np.arange(1, q + 1), kappa))
    xi = np.zeros((q, q))
    for i in range(kappa):
        xi[i, i] -= 1.0
        xi[i, i + 1] += 1.0
        xi[i, 0] += 1.0
    xi[kappa, 0] += 1.0
    labels = tuple(f"deg{k}" for k in range(1, kappa + 1)) + (f"deg>{kappa}",)
    return _assemble(a, xi, labels)


def eigen_condition(system: UrnSystem):
    """(lambda1, lambda2_real, satisfied): the CLT needs Re lambda2 < lambda1/2."""
    return (
        system.lambda1,
        system.lambda2_real,
        bool(system.lambda2_real < 0.5 * system.lambda1),
    )


# ---------------------------------------------------------------------------
# limit covariance
# ---------------------------------------------------------------------------


def _psi_factory(system: UrnSystem):
    """psi(s) evaluator in the deflated form.

    With M = A - lambda1 v1 u1^T (spectrum of A with lambda1 replaced by
    0) one has e^{sA} = e^{sM} + (e^{lambda1 s} - 1) v1 u1^T, and the
    exponentially growing parts of the defining expression
    e^{sA} - lambda1 v1 a^T phi(s, A) cancel exactly, leaving

        psi(s) = e^{sM} - lambda1 v1 (a^T phi(s, M)) + lambda1 s v1 u1^T.

    phi(s, M) = int_0^s e^{uM} du comes out of one matrix exponential of
    the augmented block [[M, I], [0, 0]] (top-right block).
    """
    q = system.q
    lam1 = system.lambda1
    v1 = system.v1
    u1 = system.u1
    a = system.activities
    M = system.A - lam1 * np.outer(v1, u1)
    aug = np.zeros((2 * q, 2 * q))
    aug[:q, :q] = M
    aug[:q, q:] = np.eye(q)

    def psi(s: float) -> np.ndarray:
        blocks = expm(s * aug)
        esM = blocks[:q, :q]
        phi = blocks[:q, q:]
        return esM - lam1 * np.outer(v1, a @ phi) + (lam1 * s) * np.outer(v1, u1)

    return psi


def limit_covariance(system: UrnSystem, tol: float = 1e-10) -> np.ndarray:
    """Covariance Sigma of the urn CLT, by quadrature of the psi integral.

    Integrates on doubling panels [S, 2S] with adaptive Gauss-Kronrod
    until a panel contributes below tol/10 and the observed geometric
    decay certifies the remaining tail below tol.  Stores the result on
    system.Sigma and returns it.
    """
    lam1, lam2, ok = eigen_condition(system)
    if not ok:
        raise DomainError(
            f"covariance needs Re lambda2 < lambda1/2 (got {lam2} vs {lam1 / 2})"
        )
    a = system.activities
    xi = system.transitions
    B = np.einsum("i,ij,ik->jk", system.v1 * a, xi, xi)
    psi = _psi_factory(system)

    def integrand(s):
        P = psi(s)
        return (P @ B @ P.T) * (lam1 * np.exp(-lam1 * s))

    # integrand decays like e^{-delta s} up to polynomial factors
    delta = lam1 - 2.0 * max(lam2, 0.0)
    total = np.zeros((system.q, system.q))
    qerr = 0.0
    s_lo, s_hi = 0.0, max(1.0, 8.0 / delta)
    prev = np.inf
    for _ in range(_MAX_PANELS):
        panel, err = quad_vec(integrand, s_lo, s_hi, epsabs=tol / 100.0, epsrel=0.0)
        total += panel
        qerr += err
        contrib = float(np.abs(panel).max())
        if contrib < tol / 10.0:
            r = contrib / prev if prev > 0.0 else 0.0
            if r < 0.5:
                tail = contrib * r / (1.0 - r)
                if qerr + tail <= tol:
                    break
        prev = max(contrib, 1e-300)
        s_lo, s_hi = s_hi, 2.0 * s_hi
    else:
        raise NumericError("covariance quadrature did not stabilize")

    sigma = total - lam1**2 * np.outer(system.v1, system.v1)
    sigma = 0.5 * (sigma + sigma.T)
    eigs = np.linalg.eigvalsh(sigma)
    if eigs.min() < -1e-6 * max(1.0, eigs.max()):
        raise NumericError(f"covariance not PSD (eigenvalues {eigs})")
    system.Sigma = sigma
    return sigma


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@njit(cache=True)
def _urn_steps(x, a, xi, uni):
    q = x.size
    for t in range(uni.size):
        total = 0.0
        for j in range(q):
            total += a[j] * x[j]
        if total <= 0.0:
            return t
        u = uni[t] * total
        acc = 0.0
        pick = q - 1
        for j in range(q):
            acc += a[j] * x[j]
            if u < acc:
                pick = j
                break
        for j in range(q):
            x[j] += xi[pick, j]
    return -1


def urn_simulate(system: UrnSystem, n: int, seed, x0=None) -> np.ndarray:
    """Run n draws and return the final composition X_n.

    Starts from a single degree-1 node (X0 = e1) unless x0 is given.
    """
    n = int(n)
    if n < 0:
        raise DomainError("need n >= 0")
    if x0 is None:
        x = np.zeros(system.q)
        x[0] = 1.0
    else:
        x = np.asarray(x0, dtype=float).copy()
        if x.shape != (system.q,) or np.any(x < 0.0):
            raise DomainError("x0 must be a nonnegative q-vector")
    if n == 0:
        return x
    uni = as_generator(seed).random(n)
    stopped = _urn_steps(x, system.activities, system.transitions, uni)
    if stopped >= 0:
        raise AbsorbingStateError(f"all activities exhausted at step {stopped}")
    return x


# ---------------------------------------------------------------------------
# affine closed forms
# ---------------------------------------------------------------------------


def affine_pk(alpha: float, k: int) -> float:
    """Limit degree probability p_k for f(k) = k + alpha, by recursion.

    p_1 = (2 + alpha)/(3 + 2 alpha) and
    p_{l+1} = p_l (l + alpha)/(l + 3 + 2 alpha).
    """
    alpha = float(alpha)
    if alpha <= -1.0:
        raise DomainError("need alpha > -1")
    k = int(k)
    if k < 1:
        raise DomainError("need k >= 1")
    p = (2.0 + alpha) / (3.0 + 2.0 * alpha)
    for l in range(1, k):
        p *= (l + alpha) / (l + 3.0 + 2.0 * alpha)
    return p


def affine_tail_identity(alpha: float, k: int):
    """(lhs, rhs) of the affine weighted-tail identity.

    lhs = sum_{l > k} p_l (l + alpha), summed directly to a certified
    1e-12 relative truncation; rhs = (k + alpha)(k + 1 + alpha) p_k /
    (1 + alpha).  The two agree for every alpha > -1, k >= 1.

    Terms decay like l^{-(2+alpha)}, so very small alpha may exhaust
    the term budget before the tail is certified.
    """
    alpha = float(alpha)
    if alpha <= -1.0:
        raise DomainError("need alpha > -1")
    k = int(k)
    if k < 1:
        raise DomainError("need k >= 1")
    rhs = (k + alpha) * (k + 1.0 + alpha) * affine_pk(alpha, k) / (1.0 + alpha)

    # t_l = p_l (l + alpha) = C Gamma(l+1+alpha)/Gamma(l+3+2 alpha);
    # with u_l = t_l (l+1+alpha), the increments u_l - u_{l+1} equal
    # (1+alpha) t_l (l+1+alpha)/(l+3+2 alpha), so the telescoped sum of
    # u brackets the remainder from both sides.
    logC = (
        np.log(2.0 + alpha)
        - np.log(3.0 + 2.0 * alpha)
        + gammaln(4.0 + 2.0 * alpha)
        - gammaln(1.0 + alpha)
    )

    def t_of(ls):
        return np.exp(logC + gammaln(ls + 1.0 + alpha) - gammaln(ls + 3.0 + 2.0 * alpha))

    lhs = 0.0
    lo = k + 1
    chunk = 1 << 14
    while True:
        ls = np.arange(lo, lo + chunk, dtype=float)
        lhs += float(t_of(ls).sum())
        M = float(lo + chunk)
        uM = t_of(np.array([M]))[0] * (M + 1.0 + alpha)
        r_lo = uM / (1.0 + alpha)
        r_hi = uM * (M + 3.0 + 2.0 * alpha) / ((1.0 + alpha) * (M + 1.0 + alpha))
        if r_hi - r_lo <= 2e-12 * max(lhs + r_lo, 1e-300):
            return lhs + 0.5 * (r_lo + r_hi), rhs
        lo += chunk
        if lo > (1 << 27):
            raise NumericError("tail not certified within the term budget")
        chunk = min(2 * chunk, 1 << 22)
