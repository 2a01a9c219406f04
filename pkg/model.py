"""
Model - Encoder and decoder as dense leaky-rectifier networks
Latent pair construction and the reconstruction loss
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import diffcore as dc
from diffcore import Tensor
from errors import CheckpointError, DataError, ShapeError


class Network:
    """
    Fully connected network: affine layers with a leaky rectifier between
    them and none after the last one.
    """

    def __init__(self, layer_dims, weights, biases, slope=dc.DEFAULT_LEAKY_SLOPE, name="net"):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2:
            raise ShapeError(f"{name}: need at least input and output dims, got {layer_dims}")
        if len(weights) != len(layer_dims) - 1 or len(biases) != len(weights):
            raise ShapeError(f"{name}: {len(weights)} weights for layer dims {layer_dims}")

        self.layer_dims = layer_dims
        self.slope = float(slope)
        self.name = name
        self.weights = []
        self.biases = []
        for layer, (w, b) in enumerate(zip(weights, biases)):
            expected = (layer_dims[layer], layer_dims[layer + 1])
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != expected or b.shape != (expected[1],):
                raise ShapeError(
                    f"{name}: layer {layer} expects weight {expected} and bias {(expected[1],)}, "
                    f"got {w.shape} and {b.shape}")
            self.weights.append(Tensor(w, requires_grad=True, name=f"{name}.W{layer}"))
            self.biases.append(Tensor(b, requires_grad=True, name=f"{name}.b{layer}"))

    @classmethod
    def initialize(cls, layer_dims, rng, slope=dc.DEFAULT_LEAKY_SLOPE, name="net"):
        """He-style normal weights for leaky rectifiers, zero biases."""
        gain = np.sqrt(2.0 / (1.0 + slope * slope))
        weights = [rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))
                   for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:])]
        biases = [np.zeros(fan_out) for fan_out in layer_dims[1:]]
        return cls(layer_dims, weights, biases, slope, name)

    @classmethod
    def identity(cls, dim, name="net"):
        return cls([dim, dim], [np.eye(dim)], [np.zeros(dim)], name=name)

    @classmethod
    def zeros(cls, layer_dims, slope=dc.DEFAULT_LEAKY_SLOPE, name="net"):
        weights = [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])]
        biases = [np.zeros(b) for b in layer_dims[1:]]
        return cls(layer_dims, weights, biases, slope, name)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def forward(self, x):
        x = dc.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(
                f"{self.name}: expected input of shape (batch, {self.input_dim}), got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer < last:
                h = dc.leaky_relu(h, self.slope)
        return h

    def __call__(self, x):
        return self.forward(x)

    def to_dict(self):
        return {
            'layer_dims': list(self.layer_dims),
            'slope': self.slope,
            'weights': [w.values.ravel().tolist() for w in self.weights],
            'biases': [b.values.tolist() for b in self.biases]
        }

    @classmethod
    def from_dict(cls, data, name="net"):
        try:
            dims = data['layer_dims']
            weights = [np.asarray(flat, dtype=np.float64).reshape(a, b)
                       for flat, a, b in zip(data['weights'], dims[:-1], dims[1:])]
            return cls(dims, weights, data['biases'], data['slope'], name)
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"{name}: malformed network record ({e})") from None


def encode(params: Network, x) -> Tensor:
    """z = F(x) for a (batch, input_dim) matrix."""
    return params.forward(x)


def decode(params: Network, z) -> Tensor:
    """x~ = H(z) for a (batch, D) matrix."""
    return params.forward(z)


class Autoencoder:
    """Encoder F and decoder H sharing the latent dimension D."""

    def __init__(self, encoder: Network, decoder: Network):
        if encoder.output_dim != decoder.input_dim:
            raise ShapeError(
                f"autoencoder: encoder emits {encoder.output_dim} dims, "
                f"decoder expects {decoder.input_dim}")
        if decoder.output_dim != encoder.input_dim:
            raise ShapeError(
                f"autoencoder: decoder emits {decoder.output_dim} dims, "
                f"encoder reads {encoder.input_dim}")
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def initialize(cls, input_dim, latent_dim, hidden_dims, rng, slope=dc.DEFAULT_LEAKY_SLOPE):
        hidden = [int(h) for h in hidden_dims]
        encoder = Network.initialize([input_dim, *hidden, latent_dim], rng, slope, "encoder")
        decoder = Network.initialize([latent_dim, *reversed(hidden), input_dim], rng, slope, "decoder")
        return cls(encoder, decoder)

    @property
    def latent_dim(self):
        return self.encoder.output_dim

    @property
    def input_dim(self):
        return self.encoder.input_dim

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def to_dict(self):
        return {'encoder': self.encoder.to_dict(), 'decoder': self.decoder.to_dict()}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(Network.from_dict(data['encoder'], "encoder"),
                       Network.from_dict(data['decoder'], "decoder"))
        except KeyError as e:
            raise CheckpointError(f"autoencoder record lacks {e}") from None


@dataclass
class LatentPair:
    """Latents of a batch of (earlier, later) observation pairs."""
    z_u: Tensor
    z_v: Tensor
    delta_t: np.ndarray

    def __post_init__(self):
        self.delta_t = np.atleast_1d(np.asarray(self.delta_t, dtype=np.float64))
        if self.z_u.shape != self.z_v.shape:
            raise ShapeError(f"latent pair: z_u {self.z_u.shape} vs z_v {self.z_v.shape}")
        if np.any(~(self.delta_t > 0)):
            raise DataError("latent pair: every delta_t must be positive")


def make_latent_pair(encoder: Network, x_u, x_v, delta_t) -> LatentPair:
    return LatentPair(encode(encoder, x_u), encode(encoder, x_v), delta_t)


def _squared_error(x, reconstruction):
    x = dc.as_tensor(x)
    if x.shape != reconstruction.shape:
        raise ShapeError(
            f"recon_loss: input {x.shape} vs reconstruction {reconstruction.shape}")
    return dc.sum_squares(x - reconstruction)


def recon_loss(x_u, x_v, z_u, z_v, g_eps_u, g_eps_v, decoder: Network) -> Tensor:
    """
    Batch mean of |x^u - H(z^u)|^2 + |x^u - H(g_eps^u)|^2 + the same for v.
    With g_eps_u = g_eps_v = None only the latent terms are kept (pretraining).
    """
    batch = dc.as_tensor(x_u).shape[0]
    total = _squared_error(x_u, decode(decoder, z_u)) + _squared_error(x_v, decode(decoder, z_v))
    if g_eps_u is not None:
        total = total + _squared_error(x_u, decode(decoder, g_eps_u))
    if g_eps_v is not None:
        total = total + _squared_error(x_v, decode(decoder, g_eps_v))
    return dc.scale(total, 1.0 / batch)
