"""Shared fixtures: benchmark parameter points and frozen constants.

The three benchmark preference functions used throughout the suite:

    f2(k) = k^(2/3)        power_offset theta = (0, 2/3)
    f4(k) = (k + 4)^(4/5)  power_offset theta = (4, 4/5)
    f5(k) = k + 2          power_offset theta = (2, 1), the affine edge

Frozen numbers below were computed once by the package's own routines
at far tighter tolerances than the tests assert (growth rates at tail
tolerance 1e-14; covariance limits with certified truncation bounds at
1e-10) and then cross-checked against independent oracles where one
exists.  They pin today's behavior so regressions surface as diffs.
"""

import numpy as np
import pytest

from patree.families import PowerOffset

THETA_F2 = (0.0, 2.0 / 3.0)
THETA_F4 = (4.0, 4.0 / 5.0)
THETA_F5 = (2.0, 1.0)

LAMBDA_F2 = 1.486749198052308
LAMBDA_F4 = 4.172840087540864
LAMBDA_F5 = 4.0

# information-like limit matrix V0 and its inverse (the limit
# covariance of sqrt(n)(theta_hat - theta0)) for the three benchmarks
V0_F2 = np.array(
    [
        [0.055814806298779995, -0.17764113576506135],
        [-0.17764113576506135, 0.6322857699167745],
    ]
)
V0_INV_F2 = np.array(
    [
        [169.3077793910836, 47.56714077062234],
        [47.56714077062234, 14.94558530525487],
    ]
)
V0_F4 = np.array(
    [
        [0.0008260472391060925, -0.007217574186206277],
        [-0.007217574186206277, 0.0649394667268921],
    ]
)
V0_INV_F4 = np.array(
    [
        [41904.80934067896, 4657.4307646713705],
        [4657.4307646713705, 533.0402882227623],
    ]
)
V0_F5 = np.array(
    [
        [0.007344336056729767, -0.03772284157818534],
        [-0.03772284157818534, 0.20994356816748416],
    ]
)
V0_INV_F5 = np.array(
    [
        [1765.9628900689536, 317.30973669020005],
        [317.30973669020005, 61.77767216966295],
    ]
)


@pytest.fixture(scope="session")
def power_family():
    return PowerOffset()


@pytest.fixture(scope="session")
def f2_tree(power_family):
    """One cached mid-size tree under f2 for reuse across tests."""
    from patree.simulate import grow

    return grow(power_family, THETA_F2, 10_000, 20260814)
