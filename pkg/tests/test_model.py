import math

import numpy as np
import pytest

from cslm import model as m
from cslm import numcore as nc
from cslm.corpus import Batch, Lang
from cslm.gradcheck import numeric_grad, rel_error


def batch(rng, V, steps, bs):
    return Batch(rng.integers(0, V, (steps, bs)), rng.integers(0, V, (steps, bs)), Lang.L1)


def tiny(dtype=np.float64, seed=0):
    rng = np.random.default_rng(seed)
    p = m.init_params(m.ModelDims(5, 3, 4), seed, dtype=dtype, init_range=0.5)
    for b in (p.b_ih, p.b_hh, p.b_out):
        b[:] = rng.normal(size=b.shape) * 0.3
    return p, batch(rng, 5, 2, 2), m.HiddenState(rng.normal(size=(2, 4)).astype(dtype),
                                                 rng.normal(size=(2, 4)).astype(dtype))


def test_init_deterministic_and_ranged():
    dims = m.ModelDims(10, 4, 6)
    a, b = m.init_params(dims, 3), m.init_params(dims, 3)
    for (name, x), y in zip(a.items(), b.arrays()):
        assert x.tobytes() == y.tobytes()
        assert np.abs(x).max() <= 0.1
        if name.startswith("b_"):
            assert not x.any()
    assert a.W_out.shape == (10, 6) and a.W_ih.shape == (24, 4)
    assert a.E.dtype == np.float32


def test_zero_state():
    s = m.zero_state(40, m.ModelDims(7))
    assert s.h.shape == s.c.shape == (40, 650)
    assert s.h.sum() == 0 and s.c.sum() == 0
    assert m.zero_state(1, m.ModelDims(7)).h.shape == (1, 650)


def test_zero_params_give_uniform():
    dims = m.ModelDims(4, 3, 5)
    p = m.zero_params(dims)
    b = batch(np.random.default_rng(0), 4, 3, 2)
    logits, _ = m.forward(p, b, m.zero_state(2, dims))
    assert not logits.any()
    loss, _, _ = m.loss_and_grads(p, b, m.zero_state(2, dims))
    assert loss == pytest.approx(math.log(4), rel=1e-7)


def test_eval_deterministic():
    p, b, s = tiny(np.float32)
    a, sa = m.forward(p, b, s)
    c, sc = m.forward(p, b, s)
    assert a.tobytes() == c.tobytes() and sa.h.tobytes() == sc.h.tobytes()


@pytest.mark.parametrize("train", [False, True])
def test_full_model_gradients(train):
    p, b, s = tiny()

    def f():
        return m.loss_and_grads(p, b, s, train, 0.3, nc.make_rng(9))[0]

    _, g, _ = m.loss_and_grads(p, b, s, train, 0.3, nc.make_rng(9))
    for name, arr in p.items():
        assert rel_error(getattr(g, name), numeric_grad(f, arr)) < 1e-5, name


def test_float32_gradients_within_1e3():
    p64, b, s = tiny()
    p32 = p64.astype(np.float32)
    s32 = m.HiddenState(s.h.astype(np.float32), s.c.astype(np.float32))
    _, g32, _ = m.loss_and_grads(p32, b, s32)
    f = lambda: m.loss_and_grads(p64, b, s)[0]
    for name, arr in p64.items():
        assert rel_error(getattr(g32, name), numeric_grad(f, arr)) < 1e-3, name


def test_unused_embedding_rows_get_zero_gradient():
    p, _, s = tiny()
    b = Batch(np.array([[0, 1], [1, 0]]), np.array([[2, 3], [4, 2]]), Lang.L1)
    _, g, _ = m.loss_and_grads(p, b, s)
    assert not g.E[2:].any() and g.E[:2].any()


def test_state_carryover_matches_single_call():
    rng = np.random.default_rng(1)
    dims = m.ModelDims(11, 5, 7)
    p = m.init_params(dims, 2)
    ids = rng.integers(0, 11, (8, 3))
    whole = Batch(ids, ids, Lang.L1)
    first, second = Batch(ids[:4], ids[:4], Lang.L1), Batch(ids[4:], ids[4:], Lang.L1)
    full, _ = m.forward(p, whole, m.zero_state(3, dims))
    a, state = m.forward(p, first, m.zero_state(3, dims))
    b, _ = m.forward(p, second, m.detach(state))
    np.testing.assert_allclose(np.concatenate([a, b]), full, atol=1e-5)


def test_detach_preserves_values():
    _, _, s = tiny()
    d = m.detach(s)
    assert d.h.tobytes() == s.h.tobytes() and d.h is not s.h


def test_truncation_at_carried_state():
    """Batch-2 gradients equal those computed with the carried state as a frozen input.

    Perturbing a parameter changes batch-2's loss through two routes: directly,
    and through batch-1's output state. With the state held fixed only the
    direct route remains, and that is exactly what the analytic gradient holds.
    """
    p, b1, s0 = tiny()
    b2 = batch(np.random.default_rng(5), 5, 2, 2)
    _, s1 = m.forward(p, b1, s0)
    frozen = m.detach(s1)
    _, g2, _ = m.loss_and_grads(p, b2, frozen)

    def through_frozen():
        return m.loss_and_grads(p, b2, frozen)[0]

    def through_both():
        return m.loss_and_grads(p, b2, m.forward(p, b1, s0)[1])[0]

    num_frozen = numeric_grad(through_frozen, p.W_hh)
    num_both = numeric_grad(through_both, p.W_hh)
    assert rel_error(g2.W_hh, num_frozen) < 1e-5
    # batch-1 parameters do influence batch 2 through the carried values
    assert rel_error(g2.W_hh, num_both) > 1e-3


def test_state_shape_mismatch():
    p, b, _ = tiny()
    with pytest.raises(nc.ShapeError):
        m.forward(p, b, m.zero_state(3, p.dims, np.float64))


def test_saturating_inputs_stay_finite():
    p = m.init_params(m.ModelDims(6, 3, 4), 0, dtype=np.float32, init_range=50.0)
    b = batch(np.random.default_rng(0), 6, 5, 2)
    logits, state = m.forward(p, b, m.zero_state(2, p.dims))
    assert np.isfinite(logits).all() and np.isfinite(state.c).all()
