import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidevae.engine import ops
from tidevae.engine.rng import Rng
from tidevae.engine.tensor import Tensor, backward, no_grad
from tidevae.model import (
    LatentStats,
    TideConfig,
    build_model,
    clone_config,
    count_parameters,
    decode,
    encode,
    encode_features,
    generate,
    msb_forward,
    reparameterize,
    total_parameters,
)
from tidevae.trainer import elbo_loss

# narrow variant so forward passes stay cheap; geometry is width-independent
SMALL = dict(stem_filters=2, msb_filters=(4, 8, 16, 32), pool_filters=(8, 16, 32), encoder_fc=16)


def small(size=(32, 32), **kw):
    return TideConfig(image_size=size, **{**SMALL, **kw})


@pytest.fixture(scope="module")
def default_model():
    return build_model(TideConfig(), Rng(0))


def test_default_geometry(default_model):
    cfg = default_model.config
    assert cfg.decoder_fc == 36864 == 256 * 12 * 12
    assert default_model.params["decoder.fc_expand.weight"].shape == (6, 36864)
    assert default_model.params["encoder.fc_mu.weight"].shape == (256, 6)
    assert default_model.params["encoder.fc_logvar.weight"].shape == (256, 6)
    assert TideConfig(image_size=(32, 32)).decoder_fc == 4096


def test_default_forward_shapes(default_model):
    x = Rng(1).uniform(2 * 3 * 96 * 96).reshape(2, 3, 96, 96).astype(np.float32)
    with no_grad():
        feats = encode_features(default_model, x)
        stats = encode(default_model, x)
        log_p, _ = decode(default_model, stats.mu)
    assert feats.shape == (2, 256, 12, 12)
    assert stats.mu.shape == (2, 6) and stats.logvar.shape == (2, 6)
    assert log_p.shape == x.shape


def test_config_validation():
    with pytest.raises(ValueError, match="divisible by 8"):
        TideConfig(image_size=(36, 32))
    with pytest.raises(ValueError, match="double"):
        TideConfig(msb_filters=(32, 64, 96, 256))
    with pytest.raises(ValueError):
        TideConfig(pool_filters=(64, 128))
    assert clone_config(TideConfig(), latent_dim=4).latent_dim == 4


@settings(max_examples=6, deadline=None)
@given(h=st.sampled_from([8, 16, 24, 32, 40]), w=st.sampled_from([8, 16, 24, 32]))
def test_round_trip_shape(h, w):
    m = build_model(small((h, w)), Rng(h * 100 + w))
    x = Rng(2).uniform(3 * h * w).reshape(1, 3, h, w)
    with no_grad():
        stats = encode(m, x)
        log_p, logits = decode(m, reparameterize(stats, Rng(3)))
    assert log_p.shape == logits.shape == (1, 3, h, w)
    assert np.all(log_p.data < 0)


def test_stage_extents():
    m = build_model(small(), Rng(4))
    h = Tensor(np.ones((1, 2, 32, 32), dtype=np.float32))
    out = msb_forward(m.msb("encoder.msb0"), Tensor(np.ones((1, 2, 32, 32), dtype=np.float32)))
    assert out.shape == (1, 4, 32, 32)
    w, b = m.layer("encoder.pool0")
    assert ops.conv2d(out, w, b, stride=2, pad=1).shape[2:] == (16, 16)
    w, b = m.layer("decoder.up0")
    up = ops.conv_transpose2d(Tensor(np.ones((1, 32, 4, 4), dtype=np.float32)), w, b, 2, 1, 1)
    assert up.shape == (1, 16, 8, 8)
    with pytest.raises(ValueError, match="channels"):
        msb_forward(m.msb("encoder.msb1"), h)


def test_msb_zero_input_zero_output():
    m = build_model(TideConfig(image_size=(16, 16)), Rng(5))
    p = m.msb("encoder.msb0")
    x = Tensor(np.zeros((1, 16, 12, 12), dtype=np.float32))
    y = msb_forward(p, x)
    assert y.shape == (1, 32, 12, 12)
    assert not y.data.any()


def test_encode_is_pure_and_rowwise():
    m = build_model(small(), Rng(6))
    img = Rng(7).uniform(3 * 32 * 32).reshape(1, 3, 32, 32)
    x = np.concatenate([img, img]).astype(np.float32)
    with no_grad():
        a, b = encode(m, x), encode(m, x)
    np.testing.assert_array_equal(a.mu.data[0], a.mu.data[1])
    np.testing.assert_array_equal(a.logvar.data[0], a.logvar.data[1])
    np.testing.assert_array_equal(a.mu.data, b.mu.data)
    with pytest.raises(ValueError):
        encode(m, np.zeros((1, 3, 16, 16), dtype=np.float32))


def test_reparameterize_cases():
    mu = Tensor(np.array([[0.5, -1.0]]))
    logvar = Tensor(np.array([[0.3, 0.0]]))
    np.testing.assert_array_equal(reparameterize(LatentStats(mu, logvar), eps=np.zeros((1, 2))).data, mu.data)
    e = np.array([[0.2, -0.7]])
    z = reparameterize(LatentStats(mu, Tensor(np.zeros((1, 2)))), eps=e).data
    np.testing.assert_allclose(z, mu.data + e, atol=1e-15)


def test_reparameterize_monte_carlo():
    n = 100_000
    mu = np.array([0.5, -2.0])
    logvar = np.array([0.4, -1.0])
    stats = LatentStats(Tensor(np.tile(mu, (n, 1))), Tensor(np.tile(logvar, (n, 1))))
    z = reparameterize(stats, Rng(8)).data
    assert np.all(np.abs(z.mean(axis=0) - mu) < 0.02)
    np.testing.assert_allclose(z.var(axis=0), np.exp(logvar), rtol=0.03)


def test_reparameterize_gradients_reach_mu_and_logvar():
    mu = Tensor(np.array([[1.0]]), requires_grad=True)
    logvar = Tensor(np.array([[0.5]]), requires_grad=True)
    e = np.array([[0.3]])
    backward(ops.sum(reparameterize(LatentStats(mu, logvar), eps=e)))
    assert mu.grad[0, 0] == 1.0
    assert logvar.grad[0, 0] == pytest.approx(0.5 * np.exp(0.25) * 0.3)


def test_decode_rejects_latent_mismatch():
    m = build_model(small(), Rng(9))
    with pytest.raises(ValueError, match="latent"):
        decode(m, np.zeros((2, 5), dtype=np.float32))


def test_generate_deterministic_and_bounded():
    m = build_model(small(), Rng(10))
    a = generate(m, Rng(11), 4)
    b = generate(m, Rng(11), 4)
    assert a.shape == (4, 3, 32, 32)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
    with pytest.raises(ValueError):
        generate(m, Rng(11), 0)


def test_parameter_counts(default_model):
    counts = {c.name: c.count for c in count_parameters(default_model)}
    assert counts["encoder.stem.weight"] + counts["encoder.stem.bias"] == 448
    assert counts["encoder.fc_mu.weight"] + counts["encoder.fc_mu.bias"] == 1542
    assert total_parameters(build_model(small(), Rng(1))) == total_parameters(build_model(small(), Rng(2)))


def test_he_uniform_init():
    m = build_model(TideConfig(image_size=(16, 16)), Rng(12))
    w = m.params["encoder.msb1.branch7.weight"].data
    bound = np.sqrt(6.0 / (64 * 49))  # msb1 reads the 64-channel pool0 output
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.95 * bound
    assert not any(p.data.any() for k, p in m.params.items() if k.endswith(".bias"))
    w = m.params["decoder.up0.weight"].data  # transposed: fan_in from the leading axis
    assert np.abs(w).max() <= np.sqrt(6.0 / (256 * 9))
    np.testing.assert_array_equal(build_model(small(), Rng(3)).params["decoder.out.weight"].data,
                                  build_model(small(), Rng(3)).params["decoder.out.weight"].data)


def test_every_parameter_receives_gradient():
    m = build_model(small(), Rng(13), dtype=np.float64)
    x = Rng(14).uniform(4 * 3 * 32 * 32).reshape(4, 3, 32, 32)
    total, _, _ = elbo_loss(m, x, Rng(15))
    backward(total)
    dead = [k for k, p in m.params.items() if p.grad is None or not p.grad.any()]
    assert not dead
