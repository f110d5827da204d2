import numpy as np
import pytest

from conftest import direct_forward, direct_memory, random_model, random_topology
from dfsmn.errors import ConfigError, ShapeError
from dfsmn.layers import (
    LayerParams,
    MemoryBlockParams,
    forward,
    fsmn_next_hidden,
    init_model,
    memory_block_cfsmn,
    memory_block_dfsmn,
    memory_block_vfsmn,
)
from dfsmn.topology import parse_topology, receptive_field

COL = lambda *v: np.array(v, dtype=float).reshape(-1, 1)  # noqa: E731


def test_vfsmn_identity_taps(rng):
    h = rng.standard_normal((6, 3))
    out = memory_block_vfsmn(h, MemoryBlockParams(np.ones((1, 3)), np.zeros((0, 3))))
    np.testing.assert_array_equal(out, h)


def test_vfsmn_hand_case():
    out = memory_block_vfsmn(COL(1, 2, 3), MemoryBlockParams(COL(1, 0.5), COL(0.25)))
    np.testing.assert_allclose(out, COL(1.5, 3.25, 4.0), rtol=0, atol=1e-15)


def test_vfsmn_float32_matches_float64_oracle(rng):
    h = rng.standard_normal((20, 5))
    a, c = rng.standard_normal((4, 5)), rng.standard_normal((3, 5))
    ref = direct_memory(h, a, c)
    got = memory_block_vfsmn(h.astype(np.float32), MemoryBlockParams(a.astype(np.float32), c.astype(np.float32)))
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


def test_vfsmn_rejects_strides_and_bad_shapes():
    with pytest.raises(ConfigError):
        memory_block_vfsmn(np.zeros((3, 2)), MemoryBlockParams(np.ones((2, 2)), np.zeros((0, 2)), s1=2))
    with pytest.raises(ShapeError):
        memory_block_vfsmn(np.zeros((3, 2)), MemoryBlockParams(np.ones((2, 3)), np.zeros((0, 2))))


def test_fsmn_next_hidden(rng):
    h, ht = rng.standard_normal((5, 3)), np.abs(rng.standard_normal((5, 3)))
    W, b = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
    plain = np.maximum(h @ W + b, 0)
    np.testing.assert_allclose(fsmn_next_hidden(h, ht, LayerParams(W, b, W_tilde=np.zeros((3, 4)))), plain)
    ident = LayerParams(np.zeros((3, 3)), np.zeros((1, 3)), W_tilde=np.eye(3))
    np.testing.assert_allclose(fsmn_next_hidden(h, ht, ident), ht)
    Wt = rng.standard_normal((3, 4))
    oracle = np.array([[max(0.0, sum(h[t, k] * W[k, j] + ht[t, k] * Wt[k, j] for k in range(3)) + b[0, j]) for j in range(4)] for t in range(5)])
    np.testing.assert_allclose(fsmn_next_hidden(h, ht, LayerParams(W, b, W_tilde=Wt)), oracle, rtol=1e-6)


def test_cfsmn_zero_coefficients_identity(rng):
    p = rng.standard_normal((7, 4))
    out = memory_block_cfsmn(p, MemoryBlockParams(np.zeros((3, 4)), np.zeros((2, 4))))
    np.testing.assert_array_equal(out, p)


def test_cfsmn_hand_case():
    out = memory_block_cfsmn(COL(1, 2, 3), MemoryBlockParams(COL(1, 0.5), COL(0.25)))
    np.testing.assert_allclose(out, COL(2.5, 5.25, 7.0), rtol=0, atol=1e-15)


def test_cfsmn_random_vs_oracle(rng):
    p = rng.standard_normal((15, 6))
    a, c = rng.standard_normal((3, 6)), rng.standard_normal((4, 6))
    got = memory_block_cfsmn(p.astype(np.float32), MemoryBlockParams(a.astype(np.float32), c.astype(np.float32)))
    ref = p + direct_memory(p, a, c)
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


def test_dfsmn_skeleton(rng):
    p, skip = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    out = memory_block_dfsmn(p, skip, MemoryBlockParams(np.zeros((2, 3)), np.zeros((1, 3)), 2, 3, "identity"))
    np.testing.assert_array_equal(out, skip + p)


def test_dfsmn_strided_hand_case():
    out = memory_block_dfsmn(COL(1, 2, 3, 4, 5), None, MemoryBlockParams(COL(0, 1), np.zeros((0, 1)), s1=2))
    np.testing.assert_array_equal(out, COL(1, 2, 4, 6, 8))


def test_dfsmn_unit_stride_equals_cfsmn(rng):
    p = rng.standard_normal((10, 4))
    mem = MemoryBlockParams(rng.standard_normal((3, 4)), rng.standard_normal((2, 4)))
    np.testing.assert_array_equal(memory_block_dfsmn(p, None, mem), memory_block_cfsmn(p, mem))


@pytest.mark.parametrize("s1,s2", [(1, 1), (2, 1), (1, 3), (3, 2)])
def test_dfsmn_strided_vs_oracle(rng, s1, s2):
    p, skip = rng.standard_normal((25, 3)), rng.standard_normal((25, 3))
    a, c = rng.standard_normal((4, 3)), rng.standard_normal((3, 3))
    got = memory_block_dfsmn(p, skip, MemoryBlockParams(a, c, s1, s2, "identity"))
    np.testing.assert_allclose(got, skip + p + direct_memory(p, a, c, s1, s2), rtol=1e-12, atol=1e-12)


def test_dfsmn_skip_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        memory_block_dfsmn(np.zeros((4, 3)), np.zeros((4, 2)), MemoryBlockParams(np.zeros((1, 3)), np.zeros((0, 3)), skip="identity"))


def test_scalar_coefficients_tie_dimensions(rng):
    p = rng.standard_normal((8, 5))
    a, c = rng.standard_normal((3, 1)), rng.standard_normal((2, 1))
    tied = MemoryBlockParams(np.repeat(a, 5, axis=1), np.repeat(c, 5, axis=1))
    np.testing.assert_allclose(memory_block_cfsmn(p, MemoryBlockParams(a, c)), memory_block_cfsmn(p, tied))


def test_forward_zero_model_uniform_posteriors():
    spec = parse_topology("1*3-2x[4-2(0,0)]-1x4-3-5")
    model = init_model(spec)
    for k in model.params:
        model.params[k][...] = 0
    _, post, _ = forward(model, np.ones((1, 3)))
    np.testing.assert_allclose(post, np.full((1, 5), 0.2), rtol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_forward_matches_direct_oracle_and_sums_to_one(seed):
    r = np.random.default_rng(seed)
    model = random_model(random_topology(r), seed)
    x = r.standard_normal((int(r.integers(1, 30)), model.spec.stacked_dim))
    _, post, _ = forward(model, x)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(post, direct_forward(model, x), rtol=1e-10, atol=1e-12)


def test_forward_width_mismatch():
    model = init_model(parse_topology("3*2-1x[4-2(1,1)]-3-2"))
    with pytest.raises(ShapeError):
        forward(model, np.zeros((5, 2)))


def test_forward_is_pure(rng):
    model = random_model("3*2-3x[5-3(2;1;2;1)]-1x4-3-3", 0)
    x = rng.standard_normal((12, 6))
    before = {k: v.copy() for k, v in model.params.items()}
    a = forward(model, x)[1]
    b = forward(model, x.copy())[1]
    assert a.tobytes() == b.tobytes()
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_reduction_dfsmn_no_skip_equals_cfsmn(rng):
    d = random_model("dfsmn:3*2-3x[6-4(2;2;1;1;none)]-1x5-4-3", 3)
    c = d.copy()
    c.spec = parse_topology("cfsmn:3*2-3x[6-4(2,2)]-1x5-4-3")
    x = rng.standard_normal((15, 6))
    np.testing.assert_allclose(forward(d, x)[0], forward(c, x)[0], rtol=1e-7)


def test_time_shift_equivariance(rng):
    model = random_model("1*2-2x[5-3(2;1;2;1)]-1x4-3-3", 5)
    past, future = receptive_field(model.spec)
    x = rng.standard_normal((40, 2))
    k = 7
    shifted = np.concatenate([rng.standard_normal((k, 2)), x])
    a, b = forward(model, x)[1], forward(model, shifted)[1]
    # frames whose full receptive field lies inside both sequences
    valid = [t for t in range(past, 40 - future)]
    np.testing.assert_allclose(a[valid], b[[t + k for t in valid]], rtol=1e-12)
