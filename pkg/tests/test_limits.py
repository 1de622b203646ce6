"""Growth rate and limiting degree law."""

import numpy as np
import pytest

from patree.errors import DomainError
from patree.families import Affine, EventuallyConstant, LogPower, PowerOffset
from patree.limits import degree_probs, limit_law, malthusian, rho

from conftest import LAMBDA_F2, LAMBDA_F4, LAMBDA_F5, THETA_F2, THETA_F4, THETA_F5


def test_affine_growth_rate_closed_form():
    for alpha in (-0.5, 0.0, 2.0):
        assert malthusian(Affine(), [alpha]) == pytest.approx(2.0 + alpha, abs=1e-10)


def test_affine_law_closed_form():
    # alpha = 0: p_k = 4 / (k (k+1) (k+2))
    law = limit_law(Affine(), [0.0])
    ks = np.arange(1, 21)
    want = 4.0 / (ks * (ks + 1) * (ks + 2))
    np.testing.assert_allclose(law.probs[:20], want, atol=1e-10, rtol=0)


def test_benchmark_growth_rates_frozen():
    fam = PowerOffset()
    assert malthusian(fam, THETA_F2) == pytest.approx(LAMBDA_F2, abs=1e-12)
    assert malthusian(fam, THETA_F4) == pytest.approx(LAMBDA_F4, abs=1e-12)
    assert malthusian(fam, THETA_F5) == pytest.approx(LAMBDA_F5, abs=1e-12)


@pytest.mark.parametrize(
    "fam,theta",
    [
        (PowerOffset(), THETA_F2),
        (PowerOffset(), THETA_F4),
        (Affine(), [2.0]),
        (LogPower(), [0.7]),
        (EventuallyConstant(3), [1.0, 1.5, 2.0]),
    ],
)
def test_mean_preference_equals_growth_rate(fam, theta):
    # the growth rate is the fixed point lambda = sum f(k) p_k(lambda)
    law = limit_law(fam, theta)
    assert law.mean_preference == pytest.approx(law.lambda_star, rel=1e-9)


def test_law_mass_accounting():
    law = limit_law(PowerOffset(), THETA_F2, tail_tol=1e-12)
    assert law.tail_mass <= 1e-12
    assert float(law.probs.sum()) == pytest.approx(1.0 - law.tail_mass, abs=1e-14)
    assert np.all(law.probs > 0)


def test_rho_fixed_point_and_monotonicity():
    fam = PowerOffset()
    lam = malthusian(fam, THETA_F4)
    assert rho(fam, THETA_F4, lam) == pytest.approx(1.0, abs=1e-10)
    vals = [rho(fam, THETA_F4, lam * s) for s in (0.8, 1.0, 1.25, 1.6)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_law_product_structure():
    # p_1 = lambda/(lambda + f(1)); p_{k+1}/p_k = f(k+1)... via the
    # survival ratio: p_{k+1} = p_k * f(k)/(lambda + f(k+1)) does not
    # hold in general; check the defining product form instead
    fam = Affine()
    theta = [2.0]
    law = limit_law(fam, theta)
    lam = law.lambda_star
    f = lambda k: float(fam.eval(theta, k))
    # p_k = (lambda/(lambda+f(k))) prod_{j<k} f(j)/(lambda+f(j))
    prod = 1.0
    for k in range(1, 15):
        want = lam / (lam + f(k)) * prod
        assert law.probs[k - 1] == pytest.approx(want, rel=1e-12)
        prod *= f(k) / (lam + f(k))


def test_mean_degree_is_two():
    # degrees sum to 2n - 1, so the limit law has mean 2; the cubic
    # affine tail leaves a mean deficit of about 4/K at truncation K
    law = limit_law(PowerOffset(), THETA_F2)
    ks = np.arange(1, law.probs.size + 1)
    assert float(ks @ law.probs) == pytest.approx(2.0, abs=1e-9)
    law = limit_law(Affine(), [0.0])
    ks = np.arange(1, law.probs.size + 1)
    deficit = 4.0 / law.probs.size
    assert float(ks @ law.probs) == pytest.approx(2.0, abs=2 * deficit)


def test_constant_preference_gives_geometric_law():
    # f == c: attachment is uniform, p_k = 2^{-k}, growth rate c
    law = limit_law(EventuallyConstant(1), [2.0])
    assert law.lambda_star == pytest.approx(2.0, abs=1e-12)
    ks = np.arange(1, 16)
    np.testing.assert_allclose(law.probs[:15], 0.5**ks, rtol=1e-12)


def test_degree_probs_prefix_matches_law():
    fam = PowerOffset()
    law = limit_law(fam, THETA_F4)
    lam = law.lambda_star
    head = degree_probs(fam, THETA_F4, lam, 12)
    np.testing.assert_allclose(head, law.probs[:12], rtol=1e-12)


def test_limit_law_rejects_bad_theta():
    with pytest.raises(DomainError):
        limit_law(PowerOffset(), [0.0, 1.5])
