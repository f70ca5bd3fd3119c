import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attrinfer import losses
from attrinfer.errors import ConfigurationError, NumericalError
from attrinfer.graph import AttributeSchema, UserPartition
from attrinfer.numerics import make_rng, softmax_blocks


def direct_infonce(x, y):
    """Unstabilised evaluation of the bound, straight from its definition."""
    k = x.shape[0]
    total = 0.0
    for i in range(k):
        num = math.exp(float(x[i] @ y[i]))
        den = sum(math.exp(float(x[i] @ y[j])) for j in range(k)) / k
        total += math.log(num / den)
    return total / k


# ---------------------------------------------------------- reconstruction


def test_recon_uniform_block_is_log_k():
    schema = AttributeSchema.from_counts([4])
    x = np.array([[0, 0, 1, 0]], dtype=float)
    x_hat = np.full((1, 4), 0.25)
    assert losses.recon_loss(x_hat, x, np.ones((1, 1), bool), schema) == pytest.approx(math.log(4), abs=1e-12)


def test_recon_perfect_is_zero():
    schema = AttributeSchema.from_counts([2, 3])
    x = np.array([[1, 0, 0, 0, 1], [0, 1, 1, 0, 0]], dtype=float)
    assert losses.recon_loss(x.copy(), x, np.ones((2, 2), bool), schema) == 0.0


def test_recon_two_cells_closed_form():
    schema = AttributeSchema.from_counts([2, 4])
    x = np.array([[1, 0, 0, 0, 0, 1]], dtype=float)
    x_hat = np.array([[0.5, 0.5, 0.25, 0.25, 0.25, 0.25]])
    expected = (math.log(2) + math.log(4)) / 2
    assert abs(losses.recon_loss(x_hat, x, np.ones((1, 2), bool), schema) - expected) < 1e-9


def test_recon_ignores_masked_cells_and_rejects_zero_prob():
    schema = AttributeSchema.from_counts([2, 2])
    x = np.array([[1, 0, 0, 0]], dtype=float)
    mask = np.array([[True, False]])
    x_hat = np.array([[0.5, 0.5, 0.0, 1.0]])
    assert losses.recon_loss(x_hat, x, mask, schema) == pytest.approx(math.log(2))
    with pytest.raises(NumericalError):
        losses.recon_loss(np.array([[0.0, 1.0, 0.5, 0.5]]), x, mask, schema)


def test_recon_monotone_in_target_probability():
    schema = AttributeSchema.from_counts([3])
    x = np.array([[0, 1, 0]], dtype=float)
    mask = np.ones((1, 1), bool)
    vals = []
    for p in np.linspace(0.1, 0.9, 9):
        rest = (1 - p) / 2
        vals.append(losses.recon_loss(np.array([[rest, p, rest]]), x, mask, schema))
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_recon_grad_is_gradient_wrt_logits():
    schema = AttributeSchema.from_counts([3, 2])
    rng = make_rng(0)
    logits = rng.standard_normal((4, 5))
    x = np.zeros((4, 5))
    labels = [(0, 2, 1), (1, 0, 0), (2, 1, 1), (3, 0, 1)]
    mask = np.zeros((4, 2), bool)
    for i, a, b in labels:
        x[i, a] = x[i, 3 + b] = 1.0
        mask[i] = True
    mask[1, 1] = False
    x[1, 3:] = 0
    f = lambda m: losses.recon_loss(softmax_blocks(m, schema.blocks), x, mask, schema)
    _, g = losses.recon_loss_grad(softmax_blocks(logits, schema.blocks), x, mask, schema)
    for idx in np.ndindex(logits.shape):
        e = np.zeros_like(logits)
        e[idx] = 1e-6
        assert g[idx] == pytest.approx((f(logits + e) - f(logits - e)) / 2e-6, abs=1e-8)


# --------------------------------------------------------------------- KL


def test_kl_examples():
    assert losses.kl_gauss(np.zeros((3, 2)), np.zeros((3, 2))) == 0.0
    # 0.5 * (e^0 + 1 - 1 - 0) = 0.5
    assert abs(losses.kl_gauss(np.ones((1, 1)), np.zeros((1, 1))) - 0.5) < 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_kl_nonnegative(mu, lv):
    v = losses.kl_gauss(mu, lv)
    assert v >= 0
    if np.any(mu != 0) or np.any(lv != 0):
        assert v > 0 or np.allclose(mu, 0, atol=1e-6) and np.allclose(lv, 0, atol=1e-6)


def test_kl_grad_finite_differences():
    rng = make_rng(1)
    mu, lv = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    _, dmu, dlv = losses.kl_gauss_grad(mu, lv)
    for idx in np.ndindex(mu.shape):
        e = np.zeros_like(mu)
        e[idx] = 1e-6
        assert dmu[idx] == pytest.approx((losses.kl_gauss(mu + e, lv) - losses.kl_gauss(mu - e, lv)) / 2e-6, abs=1e-8)
        assert dlv[idx] == pytest.approx((losses.kl_gauss(mu, lv + e) - losses.kl_gauss(mu, lv - e)) / 2e-6, abs=1e-8)


# ------------------------------------------------------------- adversarial


def test_disc_loss_examples():
    assert losses.disc_loss(np.full(3, 0.5), np.full(5, 0.5)) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert losses.disc_loss(np.array([1 - 1e-12]), np.array([1e-12])) < 1e-10
    expected = -math.log(0.8) - math.log(0.7)
    assert abs(losses.disc_loss(np.array([0.8]), np.array([0.3])) - expected) < 1e-9
    with pytest.raises(ConfigurationError):
        losses.disc_loss(np.array([]), np.array([0.5]))


def test_disc_loss_constant_discriminator_minimised_at_half():
    cs = np.linspace(0.05, 0.95, 19)
    vals = [losses.disc_loss(np.full(4, c), np.full(7, c)) for c in cs]
    for c, v in zip(cs, vals):
        assert v == pytest.approx(-math.log(c) - math.log(1 - c), abs=1e-12)
    assert cs[int(np.argmin(vals))] == pytest.approx(0.5)


def test_gen_loss_examples():
    assert losses.gen_loss(np.array([1 - 1e-15])) < 1e-14
    assert losses.gen_loss(np.array([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)
    assert abs(losses.gen_loss(np.array([math.exp(-1)])) - 1.0) < 1e-9


def test_adversarial_grads_wrt_logits():
    from attrinfer.numerics import sigmoid

    rng = make_rng(2)
    a, b = rng.standard_normal(3), rng.standard_normal(4)
    _, dpos, dneg = losses.disc_loss_grad(sigmoid(a), sigmoid(b))
    _, dgen = losses.gen_loss_grad(sigmoid(b))
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        num = (losses.disc_loss(sigmoid(a + e), sigmoid(b)) - losses.disc_loss(sigmoid(a - e), sigmoid(b))) / (2 * h)
        assert dpos[i] == pytest.approx(num, abs=1e-8)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        num = (losses.disc_loss(sigmoid(a), sigmoid(b + e)) - losses.disc_loss(sigmoid(a), sigmoid(b - e))) / (2 * h)
        assert dneg[i] == pytest.approx(num, abs=1e-8)
        num = (losses.gen_loss(sigmoid(b + e)) - losses.gen_loss(sigmoid(b - e))) / (2 * h)
        assert dgen[i] == pytest.approx(num, abs=1e-8)


# ----------------------------------------------------------------- InfoNCE


def test_infonce_single_sample_is_zero():
    assert losses.infonce(np.array([[3.0, -1.0]]), np.array([[0.5, 2.0]])) == 0.0


def test_infonce_indistinguishable_rows_is_zero():
    x = np.tile([[0.3, 0.7, 0.1]], (5, 1))
    y = np.tile([[0.9, 0.2, 0.4]], (5, 1))
    assert abs(losses.infonce(x, y)) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_infonce_matches_direct_evaluation(seed):
    rng = make_rng(seed)
    x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    v = losses.infonce(x, y)
    assert abs(v - direct_infonce(x, y)) < 1e-9
    assert v <= math.log(3) + 1e-12


def test_infonce_errors():
    with pytest.raises(ConfigurationError):
        losses.infonce(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ConfigurationError):
        losses.infonce(np.zeros((2, 3)), np.zeros((3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10_000))
def test_infonce_permutation_invariant_and_bounded(k, seed):
    rng = make_rng(seed)
    x, y = rng.standard_normal((k, 3)) * 3, rng.standard_normal((k, 3)) * 3
    perm = rng.permutation(k)
    v = losses.infonce(x, y)
    assert v <= math.log(k) + 1e-9
    assert losses.infonce(x[perm], y[perm]) == pytest.approx(v, abs=1e-10)


def test_infonce_grad_finite_differences():
    rng = make_rng(3)
    x, y = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    _, dx, dy = losses.infonce_grad(x, y)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = 1e-6
        assert dx[idx] == pytest.approx((losses.infonce(x + e, y) - losses.infonce(x - e, y)) / 2e-6, abs=1e-8)
        assert dy[idx] == pytest.approx((losses.infonce(x, y + e) - losses.infonce(x, y - e)) / 2e-6, abs=1e-8)


# -------------------------------------------------------- MI constraint


def test_mi_constraint_compositions():
    rng = make_rng(4)
    xm, xu = rng.random((4, 3)), rng.random((4, 3))
    split = UserPartition(np.array([0, 2]), np.array([1, 3]))
    expected = -direct_infonce(xm[[0, 2]], xu[[0, 2]]) + direct_infonce(xm[[1, 3]], xu[[1, 3]])
    assert abs(losses.mi_constraint(xm, xu, split) - expected) < 1e-9

    only_l = UserPartition(np.arange(4), np.array([], dtype=int))
    assert losses.mi_constraint(xm, xu, only_l) == pytest.approx(-losses.infonce(xm, xu), abs=1e-15)

    # identical pairs on both sides cancel
    xm2 = np.concatenate([xm[:2], xm[:2]])
    xu2 = np.concatenate([xu[:2], xu[:2]])
    assert losses.mi_constraint(xm2, xu2, UserPartition(np.array([0, 1]), np.array([2, 3]))) == pytest.approx(0, abs=1e-15)

    with pytest.raises(ConfigurationError):
        losses.mi_constraint(xm, xu, UserPartition(np.array([], dtype=int), np.arange(4)))


def test_mi_constraint_grad_finite_differences():
    rng = make_rng(5)
    xm, xu = rng.random((5, 3)), rng.random((5, 3))
    split = UserPartition(np.array([0, 3]), np.array([1, 2, 4]))
    _, dxm, dxu = losses.mi_constraint_grad(xm, xu, split)
    for idx in np.ndindex(xm.shape):
        e = np.zeros_like(xm)
        e[idx] = 1e-6
        num = (losses.mi_constraint(xm + e, xu, split) - losses.mi_constraint(xm - e, xu, split)) / 2e-6
        assert dxm[idx] == pytest.approx(num, abs=1e-8)
        num = (losses.mi_constraint(xm, xu + e, split) - losses.mi_constraint(xm, xu - e, split)) / 2e-6
        assert dxu[idx] == pytest.approx(num, abs=1e-8)


# -------------------------------------------------------------------- total


def test_total_loss():
    assert losses.total_loss(1.7, 5.0, 6.0, 9.0, beta=0.0, lam=0.0) == 1.7
    assert abs(losses.total_loss(1.0, 2.0, 3.0, 4.0, beta=0.3, lam=0.2) - 3.3) < 1e-9
    with pytest.raises(NumericalError, match="l_gnn"):
        losses.total_loss(1.0, 2.0, float("inf"), 4.0)


def test_total_loss_defaults_and_linearity():
    import inspect

    sig = inspect.signature(losses.total_loss)
    assert (sig.parameters["beta"].default, sig.parameters["lam"].default) == (0.3, 0.2)
    base = np.array([1.0, 2.0, 3.0, 4.0])
    coeffs = (1.0, 0.3, 0.3, 0.2)
    for i, c in enumerate(coeffs):
        bumped = base.copy()
        bumped[i] += 1.0
        assert losses.total_loss(*bumped) - losses.total_loss(*base) == pytest.approx(c, abs=1e-12)
