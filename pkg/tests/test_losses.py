import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import directional_errors
from lcdbnet.losses import branch_loss, charbonnier, joint_loss, ssim_loss
from lcdbnet.metrics import ssim


def t(a):
    return torch.from_numpy(np.asarray(a, dtype=np.float64))


def test_charbonnier_identical_is_eps(rng):
    x = t(rng.random((1, 1, 8, 8)))
    assert float(charbonnier(x, x)) == pytest.approx(0.001, abs=1e-15)


def test_charbonnier_scalar_pair():
    assert float(charbonnier(t([0.5]), t([0.1]))) == pytest.approx(math.sqrt(0.16 + 1e-6), abs=1e-12)
    assert float(charbonnier(t([0.5]), t([0.1]))) == pytest.approx(0.4000012, abs=1e-7)


def test_charbonnier_direct_sum(rng):
    x, y = rng.random((8, 8)), rng.random((8, 8))
    total = sum(math.sqrt((a - b) ** 2 + 1e-6) for a, b in zip(x.ravel(), y.ravel()))
    assert float(charbonnier(t(x), t(y))) == pytest.approx(total / 64, abs=1e-9)


def test_charbonnier_errors():
    with pytest.raises(ValueError):
        charbonnier(t([1.0]), t([1.0]), eps=0)
    with pytest.raises(ValueError):
        charbonnier(t([1.0]), t([1.0, 2.0]))


@given(st.floats(0, 1), st.floats(0, 1))
def test_charbonnier_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    z = t([0.0])
    a, b = float(charbonnier(t([hi]), z)), float(charbonnier(t([lo]), z))
    assert a >= b
    # below ~1e-6 the squared gap is lost against eps^2 in float64
    if hi - lo > 1e-6:
        assert a > b


def test_ssim_loss_matches_metric(rng):
    x, y = rng.random((16, 16)), rng.random((16, 16))
    got = float(ssim_loss(t(x)[None, None], t(y)[None, None]))
    assert got == pytest.approx(1 - ssim(x, y), abs=1e-9)
    assert float(ssim_loss(t(x)[None, None], t(x)[None, None])) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ssim_loss_range(seed):
    r = np.random.default_rng(seed)
    v = float(ssim_loss(t(r.random((1, 1, 12, 12))), t(r.random((1, 1, 12, 12)))))
    assert 0 <= v <= 2


def test_branch_loss(rng):
    x = t(rng.random((1, 3, 16, 16)))
    y = t(rng.random((1, 3, 16, 16)))
    assert float(branch_loss(x, x)) == pytest.approx(0.001, abs=1e-12)
    assert float(branch_loss(x, y)) == pytest.approx(float(charbonnier(x, y)) + float(ssim_loss(x, y)), abs=1e-12)
    xn, yn = x.numpy(), y.numpy()
    char = np.mean(np.sqrt((xn - yn) ** 2 + 1e-6))
    ss = np.mean([ssim(xn[0, c], yn[0, c]) for c in range(3)])
    assert float(branch_loss(x, y)) == pytest.approx(char + 1 - ss, abs=1e-9)


def test_joint_loss_perfect_prediction(rng):
    ref = t(rng.random((2, 3, 16, 16)))
    b = joint_loss(ref[:, :1], ref[:, 1:], ref, ref)
    assert float(b.total) == pytest.approx(0.0012, abs=1e-12)
    assert b.lan_term == pytest.approx(0.001) and b.crn_term == pytest.approx(0.001)


def test_joint_loss_zero_weights(rng):
    ref, pred = t(rng.random((1, 3, 16, 16))), t(rng.random((1, 3, 16, 16)))
    b = joint_loss(pred[:, :1], pred[:, 1:], pred, ref, lambda1=0.0, lambda2=0.0)
    assert float(b.total) == pytest.approx(b.main_term, abs=1e-15)


def test_joint_loss_hand_sum(rng):
    ref, pred = t(rng.random((1, 3, 16, 16))), t(rng.random((1, 3, 16, 16)))
    lum, chrom = t(rng.random((1, 1, 16, 16))), t(rng.random((1, 2, 16, 16)))
    b = joint_loss(lum, chrom, pred, ref, lambda1=0.3, lambda2=0.7)
    want = 0.3 * float(branch_loss(lum, ref[:, :1])) + 0.7 * float(branch_loss(chrom, ref[:, 1:])) \
        + float(branch_loss(pred, ref))
    assert float(b.total) == pytest.approx(want, abs=1e-9)
    d = b.as_dict()
    assert d["total"] == pytest.approx(0.3 * d["lan_term"] + 0.7 * d["crn_term"] + d["main_term"], abs=1e-12)
    assert d["main_term"] == pytest.approx(d["main_charbonnier"] + d["main_ssim"], abs=1e-12)


def test_joint_loss_without_branch_terms(rng):
    ref = t(rng.random((1, 3, 16, 16)))
    b = joint_loss(None, None, ref, ref)
    assert float(b.total) == pytest.approx(0.001) and b.lan is None and "lan_term" not in b.as_dict()


def test_joint_loss_shape_errors(rng):
    ref = t(rng.random((1, 3, 16, 16)))
    with pytest.raises(ValueError):
        joint_loss(ref[:, :2], ref[:, 1:], ref, ref)
    with pytest.raises(ValueError):
        joint_loss(ref[:, :1], ref[:, 1:], ref[..., :8], ref)


def test_joint_loss_batch_permutation_invariant(rng):
    ref, pred = t(rng.random((4, 3, 16, 16))), t(rng.random((4, 3, 16, 16)))
    perm = torch.tensor([2, 0, 3, 1])
    a = joint_loss(pred[:, :1], pred[:, 1:], pred, ref)
    b = joint_loss(pred[perm, :1], pred[perm, 1:], pred[perm], ref[perm])
    assert float(a.total) == pytest.approx(float(b.total), abs=1e-12)


@pytest.mark.parametrize("name", ["charbonnier", "ssim_loss", "branch_loss", "joint_loss"])
def test_loss_gradients(rng, name):
    ref = t(rng.random((1, 3, 8, 8)))
    pred = t(rng.random((1, 3, 8, 8)))
    lum, chrom = t(rng.random((1, 1, 8, 8))), t(rng.random((1, 2, 8, 8)))
    fns = {
        "charbonnier": lambda: charbonnier(pred, ref),
        "ssim_loss": lambda: ssim_loss(pred, ref),
        "branch_loss": lambda: branch_loss(pred, ref),
        "joint_loss": lambda: joint_loss(lum, chrom, pred, ref).total,
    }
    tensors = [pred, lum, chrom] if name == "joint_loss" else [pred]
    errors = directional_errors(fns[name], tensors)
    assert max(errors) < 1e-3, errors
