import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from sketchmatch.exceptions import ConfigurationError, DimensionError, DomainError
from sketchmatch.losses import (GENUINE, IMPOSTOR, ContrastiveConfig, LossWeights, attribute_loss,
                                batch_verification_loss, contrastive_loss, euclidean_distance,
                                joint_loss, per_sample_mean)

from oracles import central_differences


@pytest.mark.parametrize("a,b,label,expected", [
    ([0.0, 0.0], [0.0, 0.0], GENUINE, 0.0),
    ([0.0, 0.0], [2.0, 0.0], GENUINE, 2.0),
    ([0.0, 0.0], [2.0, 0.0], IMPOSTOR, 0.0),
    ([0.0, 0.0], [0.0, 0.0], IMPOSTOR, 0.5),
])
def test_contrastive_closed_forms(a, b, label, expected):
    assert float(contrastive_loss(a, b, label)) == expected


def test_impostor_inside_margin():
    # D = 0.4, m = 1: (0.6)^2 / 2
    assert float(contrastive_loss([0.0], [0.4], IMPOSTOR)) == pytest.approx(0.18, abs=1e-15)


def test_margin_validation():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ConfigurationError):
            ContrastiveConfig(bad)
    with pytest.raises(ConfigurationError):
        LossWeights(-0.1, 1.0)


def test_length_mismatch():
    with pytest.raises(DimensionError):
        contrastive_loss([0.0, 1.0], [0.0], GENUINE)


def test_batch_mean_brute_force(rng):
    a, b = rng.normal(size=(10, 5)), rng.normal(size=(10, 5)) * 0.3
    labels = rng.integers(0, 2, size=10)
    m = 1.5
    expected = 0.0
    for ai, bi, y in zip(a, b, labels):
        d = math.dist(ai, bi)
        expected += 0.5 * d * d if y == 0 else 0.5 * max(0.0, m - d) ** 2
    expected /= 10
    got = float(batch_verification_loss(a, b, labels, ContrastiveConfig(m)))
    assert got == pytest.approx(expected, abs=1e-12)


def test_empty_batch():
    with pytest.raises(DomainError):
        batch_verification_loss(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))


def test_zero_distance_gradient_is_zero():
    a = torch.zeros(3, dtype=torch.float64, requires_grad=True)
    loss = contrastive_loss(a, torch.zeros(3, dtype=torch.float64), IMPOSTOR)
    (g,) = torch.autograd.grad(loss, a)
    assert torch.all(g == 0) and torch.isfinite(g).all()


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 4.0))
def test_genuine_homogeneity(x, y, c):
    a, b = np.array([x, 0.0]), np.array([0.0, y])
    base = float(contrastive_loss(a, b, GENUINE))
    assert float(contrastive_loss(c * a, c * b, GENUINE)) == pytest.approx(c * c * base, rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.2, 2.0))
def test_impostor_continuous_nonincreasing(d, m):
    cfg = ContrastiveConfig(m)
    f = lambda t: float(contrastive_loss([0.0], [t], IMPOSTOR, cfg))
    assert f(d + 1e-3) <= f(d) + 1e-15
    assert abs(f(d + 1e-7) - f(d)) < 1e-5


def test_attribute_loss_zero_logits():
    val = float(attribute_loss(np.zeros(12), np.array([1, 0] * 6)))
    assert abs(val - 12 * math.log(2)) < 1e-12


def test_attribute_loss_matches_formula(rng):
    z, y = rng.normal(size=(4, 12)), rng.integers(0, 2, size=(4, 12))
    p = 1 / (1 + np.exp(-z))
    expected = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum(-1)
    np.testing.assert_allclose(attribute_loss(z, y).numpy(), expected, atol=1e-12)


def test_attribute_loss_extreme_logits_finite():
    out = attribute_loss(np.array([1e4, -1e4]), np.array([0, 1]))
    assert torch.isfinite(out) and float(out) == pytest.approx(2e4)


def test_attribute_loss_gradient_fd(rng):
    y = rng.integers(0, 2, size=12)
    z0 = rng.normal(size=12)
    z = torch.tensor(z0, requires_grad=True)
    (g,) = torch.autograd.grad(attribute_loss(z, y), z)
    fd = central_differences(lambda v: float(attribute_loss(v, y)), z0, 1e-5)
    np.testing.assert_allclose(g.numpy(), fd, atol=1e-8)


def test_per_sample_mean_weights():
    vals = torch.tensor([1.0, 1.0, 1.0, 4.0], dtype=torch.float64)
    # sample 'a' appears three times, 'b' once: (1 + 4) / 2
    assert float(per_sample_mean(vals, ["a", "a", "a", "b"])) == 2.5


def test_joint_total(rng):
    n, d, t = 6, 4, 12
    args = (rng.normal(size=(n, d)), rng.normal(size=(n, t)), rng.normal(size=(n, d)),
            rng.normal(size=(n, t)), rng.integers(0, 2, n), rng.integers(0, 2, (n, t)),
            rng.integers(0, 2, (n, t)), np.arange(n), np.arange(n))
    parts = joint_loss(*args)
    assert abs(float(parts.LT) - float(parts.L1 + parts.L2 + parts.L3)) < 1e-12
    weighted = joint_loss(*args, weights=LossWeights(0.3, 2.0))
    assert float(weighted.LT) == pytest.approx(float(parts.L1 + 0.3 * parts.L2 + 2.0 * parts.L3), abs=1e-12)
    zero = joint_loss(*args, weights=LossWeights(0, 0))
    assert float(zero.LT) == float(zero.L1)


def test_euclidean_distance_rows():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.array([[3.0, 4.0], [1.0, 1.0]])
    np.testing.assert_array_equal(euclidean_distance(a, b).numpy(), [5.0, 0.0])
