"""Urn builders, Perron data, the CLT covariance, and urn simulation.

Anchors: the f == 1 single-class-plus-pool urn has the exact covariance
[[1, -1], [-1, 1]]/12; the affine urn composition converges to the
degree law (p_1..p_kappa, pooled weighted tail), with the pooled entry
given by the weighted-tail identity; the affine transfer matrix has the
factorized spectrum {2 + alpha} union {-(l + alpha), l = 1..kappa}.
Simulated compositions cross-check Sigma at Monte Carlo accuracy.
"""

import numpy as np
import pytest

from patree.errors import AbsorbingStateError, DomainError
from patree.families import EventuallyConstant, PowerOffset
from patree.rng import substream
from patree.urns import (
    UrnSystem,
    _assemble,
    affine_pk,
    affine_tail_identity,
    build_affine_urn,
    build_cutoff_urn,
    eigen_condition,
    limit_covariance,
    urn_simulate,
)


def test_affine_pk_closed_form_at_alpha_zero():
    for k in range(1, 21):
        assert affine_pk(0.0, k) == pytest.approx(
            4.0 / (k * (k + 1) * (k + 2)), rel=1e-13
        )


def test_affine_pk_rejects_bad_arguments():
    with pytest.raises(DomainError):
        affine_pk(-1.0, 3)
    with pytest.raises(DomainError):
        affine_pk(0.5, 0)


def test_affine_tail_identity_agrees():
    for alpha, k in ((0.0, 1), (0.0, 5), (2.0, 3), (1.0, 2), (4.0, 1)):
        lhs, rhs = affine_tail_identity(alpha, k)
        assert lhs == pytest.approx(rhs, rel=5e-12)


def test_uniform_attachment_covariance_is_exact():
    system = build_cutoff_urn(EventuallyConstant(1), [1.0], kappa=1)
    assert system.lambda1 == pytest.approx(1.0, abs=1e-12)
    assert np.abs(system.v1 - 0.5).max() < 1e-12
    sigma = limit_covariance(system)
    expected = np.array([[1.0, -1.0], [-1.0, 1.0]]) / 12.0
    assert np.abs(sigma - expected).max() < 1e-10
    assert system.Sigma is sigma


def test_affine_urn_perron_pair_matches_degree_law():
    for alpha, kappa in ((0.0, 4), (2.0, 3), (-0.5, 2)):
        system = build_affine_urn(alpha, kappa)
        lam1 = system.lambda1
        assert lam1 == pytest.approx(2.0 + alpha, rel=1e-12)
        for k in range(1, kappa + 1):
            assert lam1 * system.v1[k - 1] == pytest.approx(
                affine_pk(alpha, k), rel=1e-10
            )
        # pooled class carries sum_{l > kappa} p_l (l + alpha)
        pooled = (
            (kappa + alpha)
            * (kappa + 1.0 + alpha)
            * affine_pk(alpha, kappa)
            / (1.0 + alpha)
        )
        assert lam1 * system.v1[kappa] == pytest.approx(pooled, rel=1e-10)
        assert float(system.activities @ system.v1) == pytest.approx(1.0, rel=1e-12)
        assert float(system.u1 @ system.v1) == pytest.approx(1.0, rel=1e-12)
        assert system.labels[0] == "deg1" and system.labels[-1] == "mass"


def test_affine_spectrum_factorizes():
    for kappa in (2, 5, 8):
        for alpha in (0.0, 2.0):
            system = build_affine_urn(alpha, kappa)
            w = np.linalg.eigvals(system.A)
            assert np.abs(w.imag).max() < 1e-8
            got = np.sort(w.real)
            want = np.sort(
                np.array([2.0 + alpha] + [-(l + alpha) for l in range(1, kappa + 1)])
            )
            assert np.abs(got - want).max() < 1e-8


def test_affine_covariance_leading_entry():
    sigma = limit_covariance(build_affine_urn(0.0, 4))
    assert sigma[0, 0] == pytest.approx(1.0 / 9.0, rel=1e-8)


def test_cutoff_urn_structure():
    family = EventuallyConstant(2)
    system = build_cutoff_urn(family, [1.0, 1.7], kappa=3)
    assert np.abs(system.transitions.sum(axis=1) - 1.0).max() == 0.0
    assert np.abs(system.activities - [1.0, 1.7, 1.7, 1.7]).max() == 0.0
    assert system.labels == ("deg1", "deg2", "deg3", "deg>3")
    with pytest.raises(DomainError):
        build_cutoff_urn(family, [1.0, 1.7], kappa=1)
    with pytest.raises(DomainError):
        build_cutoff_urn(PowerOffset(), [0.0, 1.0], kappa=3)


def test_cutoff_count_fluctuations_sum_to_zero():
    system = build_cutoff_urn(EventuallyConstant(2), [1.0, 3.0], kappa=2)
    lam1, lam2, ok = eigen_condition(system)
    assert ok and lam2 < 0.5 * lam1
    sigma = limit_covariance(system)
    # one node is added per draw, so the counts sum deterministically
    assert np.abs(sigma @ np.ones(system.q)).max() < 1e-12
    assert np.linalg.eigvalsh(sigma).min() > -1e-12


def test_eigen_condition_failure_blocks_covariance():
    system = _assemble([1.0, 1.0], [[0.9, 0.1], [0.1, 0.9]])
    lam1, lam2, ok = eigen_condition(system)
    assert lam1 == pytest.approx(1.0, abs=1e-12)
    assert lam2 == pytest.approx(0.8, abs=1e-12)
    assert not ok
    with pytest.raises(DomainError):
        limit_covariance(system)


def test_assemble_rejects_bad_systems():
    with pytest.raises(DomainError):
        _assemble([1.0, -1.0], [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DomainError):
        _assemble([0.0, 0.0], [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DomainError):
        _assemble([1.0, 1.0], [[-1.0, -1.0], [1.0, 1.0]])
    with pytest.raises(DomainError):
        _assemble([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])  # reducible
    with pytest.raises(DomainError):
        _assemble([1.0, 1.0], [[0.0, 1.0]])


def test_urn_simulate_tracks_limit_composition():
    n = 200_000
    for system in (
        build_cutoff_urn(EventuallyConstant(1), [1.0], kappa=1),
        build_affine_urn(1.0, 2),
    ):
        sigma = limit_covariance(system)
        x = urn_simulate(system, n, 20260814)
        half_width = 6.0 * np.sqrt(np.diag(sigma) * n)
        assert np.all(np.abs(x - n * system.lambda1 * system.v1) <= half_width)


def test_urn_simulate_deterministic_and_validated():
    system = build_affine_urn(0.5, 3)
    x1 = urn_simulate(system, 5_000, 7)
    x2 = urn_simulate(system, 5_000, 7)
    x3 = urn_simulate(system, 5_000, 8)
    assert np.array_equal(x1, x2)
    assert not np.array_equal(x1, x3)
    x0 = np.array([2.0, 1.0, 0.0, 3.0])
    assert np.array_equal(urn_simulate(system, 0, 7, x0=x0), x0)
    with pytest.raises(DomainError):
        urn_simulate(system, -1, 7)
    with pytest.raises(DomainError):
        urn_simulate(system, 10, 7, x0=np.ones(2))
    with pytest.raises(DomainError):
        urn_simulate(system, 10, 7, x0=-np.ones(4))


def test_urn_simulate_reports_absorption():
    system = UrnSystem(
        activities=np.array([1.0, 0.0]),
        transitions=np.array([[-1.0, 1.0], [0.0, 0.0]]),
        A=np.zeros((2, 2)),
        lambda1=1.0,
        v1=np.ones(2),
        u1=np.ones(2),
        lambda2_real=0.0,
    )
    with pytest.raises(AbsorbingStateError):
        urn_simulate(system, 3, 1)


def test_covariance_matches_simulated_fluctuations():
    reps, n = 500, 4_000
    for label, system in (
        ("uniform", build_cutoff_urn(EventuallyConstant(1), [1.0], kappa=1)),
        ("affine", build_affine_urn(1.0, 2)),
    ):
        sigma = limit_covariance(system)
        target = n * system.lambda1 * system.v1
        z = np.empty((reps, system.q))
        for i in range(reps):
            z[i] = (urn_simulate(system, n, substream(20260814, i)) - target)
        emp = np.cov(z.T / np.sqrt(n))
        mc_sd = np.sqrt(
            (np.outer(np.diag(sigma), np.diag(sigma)) + sigma**2) / reps
        )
        assert np.abs(emp - sigma).max() <= 6.0 * mc_sd.max(), label
