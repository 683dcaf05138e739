"""Alignment and supervision objectives and their combination."""

import logging
import math

import numpy as np
import pytest

from tabfuse import autodiff as ad
from tabfuse.autodiff import Tape
from tabfuse.losses import (LossConfig, consistency_loss, joint_loss, normalized_rows,
                            supervised_loss)


def cons_value(text, graph, tau=0.1):
    tape = Tape()
    t = tape.leaf(np.asarray(text, dtype=np.float64))
    g = tape.leaf(np.asarray(graph, dtype=np.float64))
    return float(consistency_loss(tape, t, g, tau).data[0, 0])


def test_single_row_batch_costs_nothing():
    assert cons_value([[3.0, 4.0]], [[-1.0, 2.0]]) == 0.0


def test_orthogonal_aligned_pair_oracle():
    embeddings = [[1.0, 0.0], [0.0, 1.0]]
    expect = math.log1p(math.exp(-1.0 / 0.1))
    assert cons_value(embeddings, embeddings, tau=0.1) == pytest.approx(expect, abs=1e-9)


def test_collapsed_pair_costs_ln_two():
    embeddings = [[0.5, 0.5], [0.5, 0.5]]
    assert cons_value(embeddings, embeddings) == pytest.approx(math.log(2.0), abs=1e-9)


def test_value_is_symmetric_and_scale_invariant_on_random_batches():
    rng = np.random.default_rng(0)
    for trial in range(100):
        b, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
        t = rng.normal(size=(b, d))
        g = rng.normal(size=(b, d))
        base = cons_value(t, g)
        assert cons_value(g, t) == pytest.approx(base, rel=1e-12)
        row_scales = rng.uniform(0.1, 10.0, size=(b, 1))
        assert cons_value(t * row_scales, g) == pytest.approx(base, rel=1e-9)
        assert cons_value(t, g * rng.uniform(0.1, 10.0)) == pytest.approx(base, rel=1e-9)
        assert base <= math.log(b) + 1e-9 or base > 0  # finite, sane


def test_one_sided_variant_gives_stopped_operand_exactly_zero_gradient():
    rng = np.random.default_rng(1)
    tape = Tape()
    t = tape.param("t", rng.normal(size=(4, 6)))
    g = tape.param("g", rng.normal(size=(4, 6)))
    t_hat = ad.row_l2_normalize(t)
    g_hat = ad.row_l2_normalize(g)
    logits = ad.scale(ad.matmul(t_hat, ad.transpose(ad.stop_gradient(g_hat))), 10.0)
    picked = ad.gather_rows(ad.log_softmax(logits), np.arange(4))
    loss = ad.scale(ad.total_sum(picked), -0.25)
    tape.backward(loss)
    assert np.array_equal(g.grad, np.zeros_like(g.grad))
    assert np.abs(t.grad).max() > 0.0


def test_symmetric_loss_feeds_gradient_to_both_branches():
    rng = np.random.default_rng(2)
    tape = Tape()
    t = tape.param("t", rng.normal(size=(4, 6)))
    g = tape.param("g", rng.normal(size=(4, 6)))
    tape.backward(consistency_loss(tape, t, g, 0.1))
    assert np.abs(t.grad).max() > 0.0
    assert np.abs(g.grad).max() > 0.0


def test_frozen_operands_reproduce_stop_gradient_at_base_point():
    rng = np.random.default_rng(3)
    t_np = rng.normal(size=(5, 4))
    g_np = rng.normal(size=(5, 4))

    tape1 = Tape()
    t1, g1 = tape1.param("t", t_np), tape1.param("g", g_np)
    live = consistency_loss(tape1, t1, g1, 0.1)
    tape1.backward(live)

    tape2 = Tape()
    t2, g2 = tape2.param("t", t_np), tape2.param("g", g_np)
    frozen = consistency_loss(tape2, t2, g2, 0.1,
                              frozen_text=normalized_rows(t_np),
                              frozen_graph=normalized_rows(g_np))
    tape2.backward(frozen)

    assert frozen.data[0, 0] == pytest.approx(live.data[0, 0], rel=1e-12)
    assert np.allclose(t1.grad, t2.grad)
    assert np.allclose(g1.grad, g2.grad)


def test_zero_norm_rows_are_guarded_with_a_warning(caplog):
    t = np.array([[0.0, 0.0], [1.0, 2.0]])
    g = np.array([[1.0, 1.0], [2.0, 1.0]])
    with caplog.at_level(logging.WARNING, logger="tabfuse"):
        value = cons_value(t, g)
    assert math.isfinite(value)
    assert any("zero-norm" in r.message for r in caplog.records)


def test_consistency_rejects_shape_mismatch_and_bad_tau():
    tape = Tape()
    t = tape.leaf(np.ones((2, 3)))
    g = tape.leaf(np.ones((2, 4)))
    with pytest.raises(ValueError, match="shapes"):
        consistency_loss(tape, t, g, 0.1)
    g2 = tape.leaf(np.ones((2, 3)))
    with pytest.raises(ValueError, match="tau"):
        consistency_loss(tape, t, g2, 0.0)


def sup_value(logits, labels):
    tape = Tape()
    return float(supervised_loss(tape, tape.leaf(np.asarray(logits, float)), labels).data[0, 0])


def test_supervised_peaked_logits_cost_almost_nothing():
    logits = [[20.0, 0.0], [0.0, 20.0]]
    assert sup_value(logits, [0, 1]) < 1e-8


def test_supervised_uniform_logits_cost_ln_classes():
    assert sup_value([[0.0] * 4] * 3, [0, 1, 2]) == pytest.approx(math.log(4.0), abs=1e-12)


def test_supervised_single_row_oracle():
    expect = math.log1p(math.exp(-2.0))
    assert sup_value([[1.0, -1.0]], [0]) == pytest.approx(expect, abs=1e-9)


def test_supervised_rejects_out_of_range_labels():
    tape = Tape()
    logits = tape.leaf(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="out of range"):
        supervised_loss(tape, logits, [0, 3])
    with pytest.raises(ValueError, match="labels"):
        supervised_loss(tape, logits, [0])


def test_joint_mixing_arithmetic():
    tape = Tape()
    sup = tape.leaf([[1.0]])
    cons = tape.leaf([[0.5]])
    assert joint_loss(sup, cons, 0.0).data[0, 0] == 1.0
    assert joint_loss(sup, cons, 0.2).data[0, 0] == pytest.approx(0.9)
    assert joint_loss(sup, cons, 1.0).data[0, 0] == 0.5
    with pytest.raises(ValueError, match="lambda"):
        joint_loss(sup, cons, 1.5)


def test_loss_config_validation():
    cfg = LossConfig()
    assert (cfg.tau, cfg.lam) == (0.1, 0.2)
    with pytest.raises(ValueError, match="tau"):
        LossConfig(tau=0.0)
    with pytest.raises(ValueError, match="lambda"):
        LossConfig(lam=-0.1)
