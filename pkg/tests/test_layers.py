import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basisgan import tensor as T
from basisgan.layers import (BasisGenerator, FilterGenConvLayer, FilterGenerator, StochasticConvLayer,
                             count_params, generate_basis, generate_filters_direct, reconstruct_filters,
                             sample_latent, stochastic_conv)
from basisgan.lowrank import effective_rank, stack_filters
from basisgan.tensor import ShapeError


def loop_reconstruct(psi, a):
    L, _, K = psi.shape
    _, cin, cout = a.shape
    w = np.zeros((cout, cin, L, L))
    for c in range(cout):
        for cp in range(cin):
            for i in range(L):
                for j in range(L):
                    w[c, cp, i, j] = sum(psi[i, j, k] * a[k, cp, c] for k in range(K))
    return w


def constant_generator(psi0, d_z=4, d_h=3):
    L, _, K = psi0.shape
    return BasisGenerator(T.parameter(np.ones((d_h, d_z))), T.parameter(np.zeros(d_h)),
                          T.parameter(np.zeros((L * L * K, d_h))), T.parameter(psi0.reshape(-1)), d_z, d_h, L, K)


# --- sample_latent ---

def test_latent_determinism_and_seed_sensitivity():
    assert np.array_equal(sample_latent(42, 64), sample_latent(42, 64))
    assert np.any(sample_latent(1, 64) != sample_latent(2, 64))


def test_latent_moments():
    z = sample_latent(np.random.default_rng(0), 64, 100_000)
    assert np.all(np.abs(z.mean(0)) < 0.02)
    assert np.all((z.var(0) > 0.95) & (z.var(0) < 1.05))


def test_latent_rejects_zero_dim():
    with pytest.raises(ValueError):
        sample_latent(0, 0)


# --- generate_basis ---

def test_constant_net_emits_its_bias():
    psi0 = np.random.default_rng(0).standard_normal((3, 3, 2))
    gen = constant_generator(psi0)
    for seed in range(3):
        np.testing.assert_array_equal(generate_basis(gen, sample_latent(seed, 4)).data, psi0)


def test_default_sizes_give_63_outputs():
    gen = BasisGenerator.init(0)
    out = generate_basis(gen, sample_latent(1, 64))
    assert gen.W2.shape == (63, 64) and out.shape == (3, 3, 7)


def test_basis_varies_with_latent():
    rng = np.random.default_rng(3)
    gen = BasisGenerator.init(rng)
    psi = generate_basis(gen, sample_latent(rng, 64, 1000)).data
    assert psi.shape == (1000, 3, 3, 7)
    assert np.all(psi.var(axis=0) > 0)
    assert np.any(psi[0] != psi[1])


def test_batched_basis_matches_single():
    rng = np.random.default_rng(4)
    gen = BasisGenerator.init(rng, d_z=5, d_h=6, L=3, K=2)
    z = rng.standard_normal((3, 5))
    batched = generate_basis(gen, z).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], generate_basis(gen, z[i]).data, atol=1e-15)


def test_basis_latent_mismatch():
    with pytest.raises(ShapeError):
        generate_basis(BasisGenerator.init(0, d_z=8), np.zeros(7))


# --- reconstruct_filters ---

def test_single_basis_with_unit_coefficients():
    psi = np.random.default_rng(5).standard_normal((3, 3, 1))
    w = reconstruct_filters(psi, np.ones((1, 2, 4))).data
    assert w.shape == (4, 2, 3, 3)
    for c in range(4):
        for cp in range(2):
            np.testing.assert_array_equal(w[c, cp], psi[:, :, 0])


def test_bilinearity_is_exact():
    rng = np.random.default_rng(6)
    psi, a = rng.standard_normal((3, 3, 4)), rng.standard_normal((4, 3, 5))
    w = reconstruct_filters(psi, a).data
    assert np.array_equal(reconstruct_filters(2 * psi, a).data, 2 * w)
    assert np.array_equal(reconstruct_filters(psi, 2 * a).data, 2 * w)


def test_matches_loop_contraction():
    rng = np.random.default_rng(7)
    psi, a = rng.standard_normal((3, 3, 2)), rng.standard_normal((2, 2, 2))
    np.testing.assert_allclose(reconstruct_filters(psi, a).data, loop_reconstruct(psi, a), rtol=0, atol=1e-14)


def test_batched_reconstruction():
    rng = np.random.default_rng(8)
    psi, a = rng.standard_normal((4, 3, 3, 2)), rng.standard_normal((2, 3, 2))
    w = reconstruct_filters(psi, a).data
    assert w.shape == (4, 2, 3, 3, 3)
    for i in range(4):
        np.testing.assert_allclose(w[i], loop_reconstruct(psi[i], a), atol=1e-13)


def test_k_mismatch():
    with pytest.raises(ShapeError):
        reconstruct_filters(np.zeros((3, 3, 2)), np.zeros((3, 1, 1)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 3, 5]), st.integers(0, 10**6))
def test_every_slice_lies_in_basis_span(K, cin, cout, L, seed):
    rng = np.random.default_rng(seed)
    psi, a = rng.standard_normal((L, L, K)), rng.standard_normal((K, cin, cout))
    w = reconstruct_filters(psi, a).data
    basis = psi.reshape(L * L, K)
    slices = w.reshape(cout * cin, L * L).T
    coef, *_ = np.linalg.lstsq(basis, slices, rcond=None)
    assert np.max(np.abs(basis @ coef - slices)) < 1e-10


# --- stochastic_conv ---

def delta_layer(cin):
    psi0 = np.zeros((3, 3, 1))
    psi0[1, 1, 0] = 1.0
    a = np.zeros((1, cin, cin))
    a[0, np.arange(cin), np.arange(cin)] = 1.0
    return StochasticConvLayer(T.parameter(a), constant_generator(psi0))


def test_centered_delta_is_identity():
    x = np.random.default_rng(9).standard_normal((2, 3, 5, 5))
    out, _ = stochastic_conv(x, delta_layer(3), np.random.default_rng(0))
    np.testing.assert_array_equal(out.data, x)


def test_single_channel_delta_with_ones_coefficients():
    psi0 = np.zeros((3, 3, 1))
    psi0[1, 1, 0] = 1.0
    layer = StochasticConvLayer(T.parameter(np.ones((1, 1, 1))), constant_generator(psi0))
    x = np.random.default_rng(10).standard_normal((1, 4, 4))
    np.testing.assert_array_equal(stochastic_conv(x, layer, 0)[0].data, x)


def test_stochastic_conv_deterministic_per_seed_and_varies_across_seeds():
    layer = StochasticConvLayer.init(0, 2, 3)
    x = np.random.default_rng(11).standard_normal((2, 2, 6, 6))
    a1, _ = stochastic_conv(x, layer, np.random.default_rng(5))
    a2, _ = stochastic_conv(x, layer, np.random.default_rng(5))
    b, _ = stochastic_conv(x, layer, np.random.default_rng(6))
    assert np.array_equal(a1.data, a2.data)
    assert np.mean(np.abs(a1.data - b.data)) > 0


def test_per_sample_draws_one_latent_per_row():
    layer = StochasticConvLayer.init(0, 1, 1)
    x = np.ones((4, 1, 5, 5))
    out, z = stochastic_conv(x, layer, 1, per_sample=True)
    assert z.shape == (4, 64)
    assert not np.array_equal(out.data[0], out.data[1])


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        stochastic_conv(np.zeros((1, 2, 5, 5)), StochasticConvLayer.init(0, 3, 1), 0)


def test_gradients_reach_theta_a_and_x():
    layer = StochasticConvLayer.init(1, 2, 2, K=3, d_z=4, d_h=5)
    x = T.parameter(np.random.default_rng(2).standard_normal((1, 2, 4, 4)))
    out, _ = stochastic_conv(x, layer, 3)
    T.backward(T.tsum(out * out))
    for p in layer.parameters() + [x]:
        assert p.grad is not None and np.any(p.grad != 0)


def test_sampling_never_touches_coefficients():
    layer = StochasticConvLayer.init(2, 2, 2)
    before = layer.coefficients.data.copy()
    rng = np.random.default_rng(0)
    for _ in range(100):
        stochastic_conv(np.ones((1, 2, 4, 4)), layer, rng)
    assert np.array_equal(layer.coefficients.data, before)


def test_named_parameters_follow_checkpoint_names():
    names = StochasticConvLayer.init(0, 1, 1).named_parameters("layer3")
    assert sorted(names) == ["layer3.W1", "layer3.W2", "layer3.a", "layer3.b1", "layer3.b2"]


# --- filter generator ---

def test_direct_constant_net():
    w0 = np.random.default_rng(12).standard_normal((2, 3, 3, 3))
    gen = FilterGenerator(T.parameter(np.ones((3, 4))), T.parameter(np.zeros(3)),
                          T.parameter(np.zeros((w0.size, 3))), T.parameter(w0.reshape(-1)), 4, 3, 3, 3, 2)
    np.testing.assert_array_equal(generate_filters_direct(gen, sample_latent(0, 4)).data, w0)


def test_direct_generator_output_layer_size():
    gen = FilterGenerator.init(0, 8, 8)
    assert gen.W2.size == 64 * 576 == 36_864


def test_direct_samples_have_high_rank_basis_samples_do_not():
    rng = np.random.default_rng(13)
    direct = FilterGenConvLayer.init(rng, 4, 4, d_z=16, d_h=16)
    basis = StochasticConvLayer.init(rng, 4, 4, K=3, d_z=16, d_h=16)
    z = rng.standard_normal((60, 16))
    assert effective_rank(stack_filters(list(basis.filters(z).data)), 1e-6) <= 3
    assert effective_rank(stack_filters(list(direct.filters(z).data)), 1e-6) == 16


# --- count_params ---

def test_counts_at_256():
    c = count_params(3, 256, 256, 7, 64, 64)
    assert c == {"baseline": 589_824, "basis": 467_007, "filtergen": 38_342_720}


def test_counts_at_64_basis_not_smaller():
    c = count_params(3, 64, 64, 7, 64, 64)
    assert c["baseline"] == 36_864 and c["basis"] == 36_927


def test_counts_match_real_layers():
    rng = np.random.default_rng(0)
    b = StochasticConvLayer.init(rng, 5, 6, K=4, d_z=7, d_h=8)
    f = FilterGenConvLayer.init(rng, 5, 6, d_z=7, d_h=8)
    c = count_params(3, 5, 6, 4, 7, 8)
    assert sum(p.size for p in b.parameters()) == c["basis"]
    assert sum(p.size for p in f.parameters()) == c["filtergen"]


def test_counts_reject_nonpositive():
    with pytest.raises(ValueError):
        count_params(3, 0, 1, 1, 1, 1)
