"""Tests for the encoder/decoder networks and the reconstruction loss."""

import numpy as np
import pytest

import diffcore as dc
from errors import CheckpointError, DataError, ShapeError
from model import Autoencoder, LatentPair, Network, decode, encode, make_latent_pair, recon_loss


def test_identity_network_maps_input_to_itself(rng):
    x = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(encode(Network.identity(3), x).values, x)


def test_zero_network_outputs_zeros(rng):
    net = Network.zeros([3, 4, 2])
    np.testing.assert_array_equal(net(rng.normal(size=(5, 3))).values, np.zeros((5, 2)))


def test_forward_rejects_wrong_input_width(rng):
    net = Network.initialize([3, 4, 2], rng)
    with pytest.raises(ShapeError, match="expected input of shape"):
        net(np.ones((2, 5)))


def test_last_layer_is_linear():
    net = Network([1, 1], [np.array([[1.0]])], [np.zeros(1)])
    np.testing.assert_array_equal(net(np.array([[-2.0]])).values, [[-2.0]])


def test_hidden_layers_use_leaky_rectifier():
    net = Network([1, 1, 1], [np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)],
                  slope=0.2)
    np.testing.assert_allclose(net(np.array([[-2.0], [3.0]])).values, [[-0.4], [3.0]])


def test_autoencoder_mirrors_hidden_layers(rng):
    model = Autoencoder.initialize(6, 4, [8, 5], rng)
    assert model.encoder.layer_dims == [6, 8, 5, 4]
    assert model.decoder.layer_dims == [4, 5, 8, 6]
    assert model.latent_dim == 4
    assert len(model.parameters()) == 12


def test_autoencoder_rejects_mismatched_halves(rng):
    with pytest.raises(ShapeError):
        Autoencoder(Network.initialize([6, 4], rng), Network.initialize([3, 6], rng))


def test_network_dict_round_trip_preserves_outputs(rng, small_model):
    x = rng.normal(size=(3, 6))
    restored = Autoencoder.from_dict(small_model.to_dict())
    np.testing.assert_array_equal(encode(restored.encoder, x).values,
                                  encode(small_model.encoder, x).values)


def test_network_from_malformed_dict():
    with pytest.raises(CheckpointError):
        Network.from_dict({"layer_dims": [2, 2]})


def test_latent_pair_validates_delta_t(rng, small_model):
    x = rng.normal(size=(2, 6))
    with pytest.raises(DataError):
        make_latent_pair(small_model.encoder, x, x, [1.0, 0.0])
    pair = make_latent_pair(small_model.encoder, x, x, [1.0, 2.0])
    assert isinstance(pair, LatentPair)
    assert pair.z_u.shape == (2, 4)


def test_recon_loss_zero_for_identity_maps(rng):
    identity = Network.identity(3)
    x_u, x_v = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    loss = recon_loss(x_u, x_v, encode(identity, x_u), encode(identity, x_v),
                      dc.Tensor(x_u), dc.Tensor(x_v), identity)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_recon_loss_counts_all_four_terms():
    zero = Network.zeros([2, 2])
    x = np.ones((1, 2))
    z = dc.Tensor(np.zeros((1, 2)))
    # each of the four terms contributes |x|^2 = 2
    assert recon_loss(x, x, z, z, z, z, zero).item() == pytest.approx(8.0)
    assert recon_loss(x, x, z, z, None, None, zero).item() == pytest.approx(4.0)


def test_recon_loss_is_batch_mean(rng):
    zero = Network.zeros([2, 2])
    x = np.ones((4, 2))
    z = dc.Tensor(np.zeros((4, 2)))
    assert recon_loss(x, x, z, z, z, z, zero).item() == pytest.approx(8.0)


def test_recon_loss_shape_mismatch(rng, small_model):
    z = dc.Tensor(rng.normal(size=(2, 4)))
    with pytest.raises(ShapeError):
        recon_loss(np.ones((2, 5)), np.ones((2, 5)), z, z, None, None, small_model.decoder)


def test_recon_loss_gradients_match_finite_differences(rng, small_model):
    x_u, x_v = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
    g_u = dc.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    g_v = dc.Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def fn():
        pair = make_latent_pair(small_model.encoder, x_u, x_v, np.ones(3))
        return recon_loss(x_u, x_v, pair.z_u, pair.z_v, g_u, g_v, small_model.decoder)

    dc.backward(fn())
    for tensor in [small_model.encoder.weights[0], small_model.decoder.biases[-1], g_u]:
        analytic = tensor.grad.copy()
        np.testing.assert_allclose(analytic, dc.numerical_gradient(fn, tensor),
                                   rtol=1e-4, atol=1e-6)


def test_decode_applies_decoder(rng, small_model):
    z = rng.normal(size=(2, 4))
    assert decode(small_model.decoder, z).shape == (2, 6)
