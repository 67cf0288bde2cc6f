import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from raindiff.errors import ConfigError, ContractError
from raindiff.gan_losses import (
    GanLossInputs,
    expected_generation,
    hinge_generator_loss,
    nonhinge_generator_loss,
    weight_fn,
    weighted_regularizer,
)

from .oracles import weighted_l1_loop


def _inputs(d, t, lam=0.0, gen=None, target=None):
    gen = torch.zeros(4, 8, 8) if gen is None else gen
    target = torch.zeros(4, 8, 8) if target is None else target
    return GanLossInputs(torch.tensor(d, dtype=torch.float64), torch.tensor(t, dtype=torch.float64),
                         gen, target, lam)


@pytest.mark.parametrize("i,w", [(0.0, 24.0), (24.0, 24.0), (100.0, 100.0)])
def test_weight_fn_max(i, w):
    assert weight_fn(i).item() == w


def test_weight_fn_min_mode():
    assert weight_fn(100.0, "min24").item() == 24.0
    assert weight_fn(3.0, "min24").item() == 3.0
    with pytest.raises(ConfigError):
        weight_fn(1.0, "median")


def test_regularizer_zero_residual():
    x = torch.rand(4, 8, 8) * 50
    assert weighted_regularizer(x, x).item() == 0.0


def test_regularizer_constant_residual():
    target = torch.zeros(4, 8, 8, dtype=torch.float64)
    assert weighted_regularizer(target + 1, target).item() == 24.0


@pytest.mark.parametrize("mode", ["max24", "min24"])
def test_regularizer_matches_loop(mode):
    rng = np.random.default_rng(0)
    gen, target = rng.random((2, 2)) * 40, rng.random((2, 2)) * 40
    got = weighted_regularizer(torch.from_numpy(gen), torch.from_numpy(target), mode).item()
    assert got == pytest.approx(weighted_l1_loop(gen.tolist(), target.tolist(), mode), rel=1e-14)


def test_regularizer_shape_mismatch():
    with pytest.raises(ContractError):
        weighted_regularizer(torch.zeros(2, 2), torch.zeros(2, 3))


@given(st.floats(-50, 50), st.floats(0, 128))
def test_regularizer_nonnegative_and_positive_off_target(delta, level):
    target = torch.full((1, 2, 2), level, dtype=torch.float64)
    gen = target + delta
    r = weighted_regularizer(gen, target).item()
    assert r >= 0
    if torch.any(gen != target):
        assert r > 0


def test_hinge_closed_forms():
    assert hinge_generator_loss(_inputs([1.0], [1.0])).item() == 0.0
    assert hinge_generator_loss(_inputs([0.0], [0.0])).item() == 2.0
    assert hinge_generator_loss(_inputs([3.0], [-1.0])).item() == 2.0


def test_hinge_adds_weighted_regularizer():
    target = torch.zeros(4, 8, 8, dtype=torch.float64)
    inp = _inputs([1.0, 1.0], [1.0, 1.0], lam=0.5, gen=target + 1, target=target)
    assert hinge_generator_loss(inp).item() == pytest.approx(12.0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.data())
def test_hinge_matches_per_sample_loop(d, data):
    t = data.draw(st.lists(st.floats(-5, 5), min_size=len(d), max_size=len(d)))
    got = hinge_generator_loss(_inputs(d, t)).item()
    ref = sum(max(0.0, 1 - a) + max(0.0, 1 - b) for a, b in zip(d, t)) / len(d)
    assert got == pytest.approx(ref, abs=1e-12)
    assert got >= 0


def test_nonhinge_closed_forms():
    assert nonhinge_generator_loss(_inputs([0.0], [0.0])).item() == 0.0
    assert nonhinge_generator_loss(_inputs([1.0], [2.0])).item() == 3.0
    target = torch.zeros(4, 8, 8, dtype=torch.float64)
    r = weighted_regularizer(target + 0.5, target).item()
    inp = _inputs([0.0], [0.0], lam=1.0, gen=target + 0.5, target=target)
    assert nonhinge_generator_loss(inp).item() == pytest.approx(-r)


def test_inputs_validation():
    with pytest.raises(ContractError):
        _inputs([0.0], [0.0], gen=torch.zeros(4, 8, 8), target=torch.zeros(4, 8, 7))
    with pytest.raises(ConfigError):
        _inputs([0.0], [0.0], lam=-1.0)


def test_expected_generation_averages_draws():
    draws = iter([torch.ones(2, 2), 3 * torch.ones(2, 2)])
    assert torch.equal(expected_generation(lambda: next(draws), 2), 2 * torch.ones(2, 2))
    with pytest.raises(ConfigError):
        expected_generation(lambda: torch.zeros(1), 0)


def test_losses_are_differentiable_wrt_generator_output():
    gen = torch.rand(4, 8, 8, dtype=torch.float64, requires_grad=True)
    target = torch.rand(4, 8, 8, dtype=torch.float64) * 30
    loss = hinge_generator_loss(_inputs([0.2], [0.4], lam=1.0, gen=gen, target=target))
    loss.backward()
    assert gen.grad is not None and torch.isfinite(gen.grad).all()
