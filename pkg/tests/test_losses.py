import numpy as np
import pytest

from oracles import central_diff, random_orthonormal, rel_error
from subalign.errors import ParameterError
from subalign.losses import (
    LossWeights,
    alignment_loss,
    class_balance,
    classifier_loss,
    conditional_entropy,
    cross_entropy,
    tafe_loss,
)
from subalign.models import ClassifierParams
from subalign.numerics import make_rng, softmax_rows
from subalign.subspace import AlignmentMatrix, SubspaceBasis


def _random_instance(rng, n=12, k=5):
    logits = rng.standard_normal((n, k)) * 2.0
    labels = rng.integers(0, k, size=n)
    return logits, labels


# ---------------------------------------------------------------------------
# hand-evaluated values


def test_cross_entropy_values():
    assert cross_entropy([[0.5, 0.5]], [0]).value == pytest.approx(
        0.6931471805599453
    )
    assert cross_entropy([[0.0, 1.0]], [1]).value == pytest.approx(0.0, abs=1e-15)
    assert cross_entropy([[0.8, 0.2]], [1]).value == pytest.approx(
        1.6094379124341003
    )


def test_cross_entropy_label_validation():
    with pytest.raises(ParameterError):
        cross_entropy([[0.5, 0.5]], [2])
    with pytest.raises(ParameterError):
        cross_entropy([[0.5, 0.5]], [-1])


def test_conditional_entropy_values():
    uniform = np.full((6, 4), 0.25)
    assert conditional_entropy(uniform).value == pytest.approx(1.3862943611198906)
    onehot = np.eye(4)
    assert conditional_entropy(onehot).value == pytest.approx(0.0, abs=1e-15)
    assert conditional_entropy([[0.8, 0.2]]).value == pytest.approx(
        0.5004024235381879
    )


def test_conditional_entropy_range():
    rng = make_rng(31)
    for _ in range(20):
        probs = softmax_rows(rng.standard_normal((9, 6)) * 3)
        value = conditional_entropy(probs).value
        assert 0.0 <= value <= np.log(6) + 1e-12


def test_class_balance_values():
    # uniform mean prediction sits at the analytic minimum 2 ln 2
    assert class_balance([[0.5, 0.5], [0.5, 0.5]]).value == pytest.approx(
        2.0 * np.log(2.0)
    )
    # mean prediction (0.9, 0.1): -[ln 0.9 + ln 0.1] by the stated formula
    assert class_balance([[0.9, 0.1]]).value == pytest.approx(2.407945608651872)


def test_class_balance_minimised_at_uniform_mean():
    rng = make_rng(32)
    uniform_value = class_balance(np.full((4, 3), 1.0 / 3.0)).value
    for _ in range(200):
        raw = rng.uniform(0.05, 1.0, size=3)
        pbar = raw / raw.sum()
        value = class_balance(np.tile(pbar, (4, 1))).value
        assert value >= uniform_value - 1e-12


def test_class_balance_weighted_mask_recovers_standard():
    rng = make_rng(33)
    probs = softmax_rows(rng.standard_normal((8, 5)))
    plain = class_balance(probs)
    weighted = class_balance(probs, class_weights=np.ones(5))
    assert weighted.value == pytest.approx(plain.value)
    np.testing.assert_allclose(weighted.grad, plain.grad)


# ---------------------------------------------------------------------------
# finite-difference gradient suite


def _fd_check(loss_fn, rng, trials=20, tol=1e-4, n=10, k=4):
    for _ in range(trials):
        logits, labels = _random_instance(rng, n=n, k=k)

        def value_at(lg):
            return loss_fn(softmax_rows(lg), labels).value

        analytic = loss_fn(softmax_rows(logits), labels).grad
        numeric = central_diff(value_at, logits)
        assert rel_error(analytic, numeric) < tol


def test_cross_entropy_gradient_matches_finite_differences():
    _fd_check(lambda p, y: cross_entropy(p, y), make_rng(41))


def test_conditional_entropy_gradient_matches_finite_differences():
    _fd_check(lambda p, y: conditional_entropy(p), make_rng(42))


def test_class_balance_gradient_matches_finite_differences():
    _fd_check(lambda p, y: class_balance(p), make_rng(43))


def test_weighted_entropy_gradients_match_finite_differences():
    rng = make_rng(44)
    weights = np.array([1.0, 0.5, 0.0, 0.25])
    for _ in range(10):
        logits, _ = _random_instance(rng, n=8, k=4)

        def ent_at(lg):
            return conditional_entropy(softmax_rows(lg), weights).value

        analytic = conditional_entropy(softmax_rows(logits), weights).grad
        assert rel_error(analytic, central_diff(ent_at, logits)) < 1e-4

        def bal_at(lg):
            return class_balance(softmax_rows(lg), weights).value

        analytic = class_balance(softmax_rows(logits), weights).grad
        assert rel_error(analytic, central_diff(bal_at, logits)) < 1e-4


# ---------------------------------------------------------------------------
# composites


def test_tafe_loss_zero_weights_equals_cross_entropy():
    rng = make_rng(45)
    src = softmax_rows(rng.standard_normal((7, 4)))
    tgt = softmax_rows(rng.standard_normal((5, 4)))
    labels = rng.integers(0, 4, size=7)
    comp = tafe_loss(src, labels, tgt, LossWeights(lambda_c=0.0, lambda_cb=0.0))
    assert comp.value == pytest.approx(cross_entropy(src, labels).value)
    np.testing.assert_allclose(comp.grad_target, np.zeros_like(tgt))


def test_tafe_loss_weighted_sum_matches_components():
    rng = make_rng(46)
    src = softmax_rows(rng.standard_normal((7, 4)))
    tgt = softmax_rows(rng.standard_normal((5, 4)))
    labels = rng.integers(0, 4, size=7)
    weights = LossWeights(lambda_c=0.1, lambda_cb=0.1)
    comp = tafe_loss(src, labels, tgt, weights)
    expected = (
        cross_entropy(src, labels).value
        + 0.1 * conditional_entropy(tgt).value
        + 0.1 * class_balance(tgt).value
    )
    assert comp.value == pytest.approx(expected, abs=1e-12)
    recomposed = 0.1 * conditional_entropy(tgt).grad + 0.1 * class_balance(tgt).grad
    assert np.abs(comp.grad_target - recomposed).max() <= 1e-12
    assert np.abs(comp.grad_source - cross_entropy(src, labels).grad).max() <= 1e-12


def test_composites_linear_in_weights():
    rng = make_rng(47)
    src = softmax_rows(rng.standard_normal((6, 3)))
    tgt = softmax_rows(rng.standard_normal((6, 3)))
    labels = rng.integers(0, 3, size=6)

    def value(scale):
        w = LossWeights(gamma_c=0.2 * scale, gamma_cb=0.3 * scale)
        return classifier_loss(src, labels, tgt, w).value

    base = value(0.0)
    assert value(2.0) - base == pytest.approx(2.0 * (value(1.0) - base), abs=1e-12)


def test_classifier_loss_gradient_wrt_head_finite_differences():
    rng = make_rng(48)
    n, dim, k = 9, 6, 3
    zs = rng.standard_normal((n, dim))
    zt = rng.standard_normal((n, dim))
    labels = rng.integers(0, k, size=n)
    weights = LossWeights(gamma_c=0.1, gamma_cb=0.1)
    head = ClassifierParams(rng.standard_normal((dim, k)), rng.standard_normal(k))

    from subalign.models import classifier_loss_grads

    comp, grad_w, grad_b = classifier_loss_grads(head, zs, labels, zt, weights)

    def value_at_w(w):
        probe = ClassifierParams(w, head.bias)
        probs_s = softmax_rows(zs @ probe.weight + probe.bias)
        probs_t = softmax_rows(zt @ probe.weight + probe.bias)
        return classifier_loss(probs_s, labels, probs_t, weights).value

    def value_at_b(b):
        probe = ClassifierParams(head.weight, b)
        probs_s = softmax_rows(zs @ probe.weight + probe.bias)
        probs_t = softmax_rows(zt @ probe.weight + probe.bias)
        return classifier_loss(probs_s, labels, probs_t, weights).value

    assert rel_error(grad_w, central_diff(value_at_w, head.weight)) < 1e-6
    assert rel_error(grad_b, central_diff(value_at_b, head.bias)) < 1e-6


# ---------------------------------------------------------------------------
# alignment objective


def _alignment_instance(rng, ambient=10, dim=3, k=4, n=20):
    ws = SubspaceBasis(random_orthonormal(rng, ambient, dim), rng.standard_normal(ambient) * 0.1)
    wt = SubspaceBasis(random_orthonormal(rng, ambient, dim), rng.standard_normal(ambient) * 0.1)
    zt = rng.standard_normal((n, ambient))
    head = ClassifierParams(rng.standard_normal((ambient, k)), rng.standard_normal(k))
    return ws, wt, zt, head


def test_alignment_loss_quadratic_gradient_and_stationarity():
    rng = make_rng(49)
    ws, wt, zt, head = _alignment_instance(rng)
    weights = LossWeights(gamma_c=0.0, gamma_cb=0.0)
    probe = AlignmentMatrix(rng.standard_normal((3, 3)))
    res = alignment_loss(ws, wt, probe, zt, head, weights)
    expected_grad = 2.0 * wt.basis.T @ (wt.basis @ probe.matrix - ws.basis)
    np.testing.assert_allclose(res.grad, expected_grad, atol=1e-12)
    closed = AlignmentMatrix(wt.basis.T @ ws.basis)
    at_min = alignment_loss(ws, wt, closed, zt, head, weights)
    assert np.abs(at_min.grad).max() <= 1e-12


def test_alignment_loss_residual_identity_at_closed_form():
    rng = make_rng(50)
    ws, wt, zt, head = _alignment_instance(rng)
    closed = AlignmentMatrix(wt.basis.T @ ws.basis)
    res = alignment_loss(ws, wt, closed, zt, head, LossWeights(gamma_c=0.0, gamma_cb=0.0))
    overlap = wt.basis.T @ ws.basis
    assert res.value == pytest.approx(3.0 - float(np.sum(overlap * overlap)), abs=1e-10)


def test_alignment_loss_full_gradient_finite_differences():
    rng = make_rng(51)
    weights = LossWeights(gamma_c=0.1, gamma_cb=0.1)
    ws, wt, zt, head = _alignment_instance(rng, ambient=10, dim=3, k=4, n=20)
    probe = rng.standard_normal((3, 3))

    def value_at(matrix):
        return alignment_loss(ws, wt, AlignmentMatrix(matrix), zt, head, weights).value

    analytic = alignment_loss(ws, wt, AlignmentMatrix(probe), zt, head, weights).grad
    assert rel_error(analytic, central_diff(value_at, probe)) < 1e-5


def test_alignment_loss_gradient_suite_20_instances():
    rng = make_rng(52)
    weights = LossWeights(gamma_c=0.2, gamma_cb=0.15)
    for _ in range(20):
        ws, wt, zt, head = _alignment_instance(rng, ambient=8, dim=2, k=3, n=12)
        probe = rng.standard_normal((2, 2))

        def value_at(matrix):
            return alignment_loss(
                ws, wt, AlignmentMatrix(matrix), zt, head, weights
            ).value

        analytic = alignment_loss(
            ws, wt, AlignmentMatrix(probe), zt, head, weights
        ).grad
        assert rel_error(analytic, central_diff(value_at, probe)) < 1e-4


def test_loss_weights_validation():
    with pytest.raises(ParameterError):
        LossWeights(lambda_c=-0.1)
