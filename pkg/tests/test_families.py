"""Preference families: values, derivatives, boxes, config round trips."""

import numpy as np
import pytest

from patree.errors import DomainError
from patree.families import (
    Affine,
    EventuallyConstant,
    LogPower,
    ParamBox,
    PowerOffset,
    family_from_config,
    family_to_config,
    make_family,
)

KS = np.arange(1, 30)


def _cases():
    return [
        (PowerOffset(), [0.0, 2.0 / 3.0]),
        (PowerOffset(), [4.0, 0.8]),
        (PowerOffset(), [-0.5, 0.3]),
        (Affine(), [0.0]),
        (Affine(), [2.0]),
        (LogPower(), [0.7]),
        (EventuallyConstant(3), [1.0, 1.5, 2.0]),
        (EventuallyConstant(1), [2.0]),
    ]


# ---------------------------------------------------------------------------
# hand values
# ---------------------------------------------------------------------------


def test_power_offset_hand_values():
    fam = PowerOffset()
    assert fam.eval([4.0, 0.8], 3) == pytest.approx(7.0**0.8, rel=1e-15)
    assert fam.eval([0.0, 2.0 / 3.0], 8) == pytest.approx(4.0, rel=1e-15)
    assert fam.eval([2.0, 1.0], 5) == pytest.approx(7.0, rel=1e-15)


def test_affine_hand_values():
    fam = Affine()
    np.testing.assert_allclose(fam.eval([1.5], KS), KS + 1.5, rtol=1e-15)


def test_log_power_hand_values():
    fam = LogPower()
    # degree 1 is lifted to 2 so the preference stays positive
    assert fam.eval([0.7], 1) == pytest.approx(np.log(2.0) ** 0.7, rel=1e-15)
    assert fam.eval([0.7], 2) == pytest.approx(np.log(2.0) ** 0.7, rel=1e-15)
    assert fam.eval([0.7], 9) == pytest.approx(np.log(9.0) ** 0.7, rel=1e-15)


def test_eventually_constant_hand_values():
    fam = EventuallyConstant(3)
    th = [1.0, 1.5, 2.0]
    np.testing.assert_allclose(fam.eval(th, [1, 2, 3]), [1.0, 1.5, 2.0], rtol=1e-15)
    np.testing.assert_allclose(fam.eval(th, [4, 17]), [2.0, 2.0], rtol=1e-15)


def test_positive_on_valid_theta():
    for fam, th in _cases():
        vals = fam.eval(th, KS)
        assert np.all(np.isfinite(vals)) and np.all(vals > 0.0)


# ---------------------------------------------------------------------------
# derivatives against central differences
# ---------------------------------------------------------------------------


def _fd_grad(fam, th, ks, eps):
    th = np.asarray(th, dtype=float)
    cols = []
    for i in range(th.size):
        up, dn = th.copy(), th.copy()
        up[i] += eps
        dn[i] -= eps
        cols.append((fam.eval(up, ks) - fam.eval(dn, ks)) / (2 * eps))
    return np.stack(cols, axis=-1)


def _fd_hess(fam, th, ks, eps):
    th = np.asarray(th, dtype=float)
    cols = []
    for i in range(th.size):
        up, dn = th.copy(), th.copy()
        up[i] += eps
        dn[i] -= eps
        cols.append((fam.grad(up, ks) - fam.grad(dn, ks)) / (2 * eps))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("case", range(len(_cases())))
def test_grad_matches_finite_differences(case):
    fam, th = _cases()[case]
    got = fam.grad(th, KS)
    want = _fd_grad(fam, th, KS, 1e-6)
    np.testing.assert_allclose(got, want, rtol=2e-8, atol=1e-9)


@pytest.mark.parametrize("case", range(len(_cases())))
def test_hess_matches_finite_differences(case):
    fam, th = _cases()[case]
    got = fam.hess(th, KS)
    want = _fd_hess(fam, th, KS, 1e-6)
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-8)


def test_grad_shapes():
    for fam, th in _cases():
        assert fam.grad(th, KS).shape == (KS.size, fam.dim)
        assert fam.hess(th, KS).shape == (KS.size, fam.dim, fam.dim)


# ---------------------------------------------------------------------------
# parameter boxes
# ---------------------------------------------------------------------------


def test_box_clip_and_contains():
    box = ParamBox((-0.95, 0.0), (20.0, 1.0))
    np.testing.assert_allclose(box.clip([-3.0, 2.0]), [-0.95, 1.0])
    assert box.contains([0.0, 0.5])
    assert not box.contains([0.0, 1.5])
    np.testing.assert_allclose(box.center(), [(20.0 - 0.95) / 2, 0.5])


def test_box_with_pinned_degenerate_axis():
    box = ParamBox((-0.95, 0.0), (20.0, 1.0)).with_pinned(1, 1.0)
    lo, hi = box.arrays()
    assert lo[1] == hi[1] == 1.0
    np.testing.assert_allclose(box.clip([5.0, 0.3]), [5.0, 1.0])
    with pytest.raises(DomainError):
        ParamBox((-0.95, 0.0), (20.0, 1.0)).with_pinned(1, 7.0)


def test_validate_theta_rejects_outside_box():
    fam = PowerOffset()
    with pytest.raises(DomainError):
        fam.validate_theta([0.0, 1.2])
    with pytest.raises(DomainError):
        fam.validate_theta([-2.0, 0.5])
    with pytest.raises(DomainError):
        fam.validate_theta([0.0])  # wrong length


def test_validate_theta_returns_float_array():
    fam = Affine()
    out = fam.validate_theta([1])
    assert out.dtype == np.float64 and out.shape == (1,)


# ---------------------------------------------------------------------------
# construction and config round trips
# ---------------------------------------------------------------------------


def test_make_family_kinds():
    assert make_family("affine").kind == "affine"
    assert make_family("eventually_constant", cutoff=4).dim == 4
    with pytest.raises(DomainError):
        make_family("nope")
    with pytest.raises(DomainError):
        make_family("eventually_constant")  # cutoff missing


def test_config_round_trip_all_kinds():
    for fam, th in _cases():
        cfg = family_to_config(fam, th)
        fam2, th2 = family_from_config(cfg)
        assert fam2.kind == fam.kind and fam2.dim == fam.dim
        np.testing.assert_array_equal(fam2.box.arrays()[0], fam.box.arrays()[0])
        np.testing.assert_array_equal(fam2.box.arrays()[1], fam.box.arrays()[1])
        np.testing.assert_allclose(th2, th, rtol=0, atol=0)


def test_config_round_trip_without_theta():
    cfg = family_to_config(LogPower())
    fam, th = family_from_config(cfg)
    assert fam.kind == "log_power" and th is None


def test_config_rejects_unknown_kind():
    with pytest.raises(DomainError):
        family_from_config({"kind": "mystery"})


def test_names_match_dim():
    for fam, _ in _cases():
        assert len(fam.names) == fam.dim


def test_power_offset_monotone_in_k_for_positive_beta():
    fam = PowerOffset()
    vals = fam.eval([0.5, 0.9], KS)
    assert np.all(np.diff(vals) > 0)
