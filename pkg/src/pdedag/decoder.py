"""Mesh-free coordinate decoder: a polynomial-style INR with hypernets.

Each hidden layer l is conditioned on one row of the latent code through two
independent 3-layer perceptrons that emit its scale/shift modulations:

    g_l = W_in_l [t; x] + b_in_l
    q_l = scale_l * (W_h_l (h_{l-1} * g_l) + b_h_l) + shift_l
    h_l = clip(leaky_relu(q_l, 0.2), -256, 256)

with h_0 = 1 and output W_last h_L + b_last. Every coordinate is decoded
independently, so any batch of (t, x) points is valid input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor
from .config import ModelConfig

ACT_SLOPE = 0.2
ACT_CLIP = 256.0


@dataclass
class HyperNetParams:
    w1: Tensor  # (d_e, hidden)
    b1: Tensor
    w2: Tensor  # (hidden, hidden)
    b2: Tensor
    w3: Tensor  # (hidden, d_h)
    b3: Tensor


@dataclass
class DecoderLayerParams:
    w_in: Tensor   # (2, d_h)
    b_in: Tensor
    w_h: Tensor    # (d_h, d_h)
    b_h: Tensor
    scale_mlp: HyperNetParams
    shift_mlp: HyperNetParams


@dataclass
class DecoderParams:
    layers: list[DecoderLayerParams]
    w_last: Tensor  # (d_h, 1)
    b_last: Tensor


def init_decoder_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> DecoderParams:
    def param(arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

    def linear(fan_in, fan_out):
        return param(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))

    def hypernet(out_dim, out_bias):
        return HyperNetParams(
            w1=linear(cfg.d_e, cfg.hyper_hidden),
            b1=param(np.zeros(cfg.hyper_hidden)),
            w2=linear(cfg.hyper_hidden, cfg.hyper_hidden),
            b2=param(np.zeros(cfg.hyper_hidden)),
            w3=linear(cfg.hyper_hidden, out_dim),
            b3=param(np.full(out_dim, out_bias)),
        )

    layers = []
    for _ in range(cfg.n_mod):
        layers.append(
            DecoderLayerParams(
                w_in=linear(2, cfg.d_h),
                b_in=param(np.zeros(cfg.d_h)),
                w_h=linear(cfg.d_h, cfg.d_h),
                b_h=param(np.zeros(cfg.d_h)),
                # scale modulations start near one so early layers pass signal
                scale_mlp=hypernet(cfg.d_h, 1.0),
                shift_mlp=hypernet(cfg.d_h, 0.0),
            )
        )
    return DecoderParams(layers=layers, w_last=linear(cfg.d_h, 1), b_last=param(np.zeros(1)))


def _mlp(x: Tensor, net: HyperNetParams) -> Tensor:
    h = ad.relu(ad.matmul(x, net.w1) + net.b1)
    h = ad.relu(ad.matmul(h, net.w2) + net.b2)
    return ad.matmul(h, net.w3) + net.b3


def hypernet_modulations(mu_l: Tensor, params: DecoderParams, layer: int) -> tuple[Tensor, Tensor]:
    """Scale and shift vectors for hidden layer ``layer`` (1-based)."""
    lp = params.layers[layer - 1]
    row = ad.reshape(mu_l, (1, mu_l.shape[-1]))
    scale = ad.reshape(_mlp(row, lp.scale_mlp), (-1,))
    shift = ad.reshape(_mlp(row, lp.shift_mlp), (-1,))
    return scale, shift


def decode(mu: Tensor, coords: np.ndarray, params: DecoderParams) -> Tensor:
    """Evaluate the INR at a (K, 2) batch of (t, x) coordinates."""
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeMismatch(f"coords must be (K, 2), got {coords.shape}")
    if mu.shape[0] != len(params.layers):
        raise ShapeMismatch(f"latent code has {mu.shape[0]} rows for {len(params.layers)} layers")
    pts = Tensor(coords.astype(mu.dtype))
    d_h = params.layers[0].w_h.shape[0]
    h = Tensor(np.ones((coords.shape[0], d_h), dtype=mu.dtype))
    for lidx, lp in enumerate(params.layers):
        scale, shift = hypernet_modulations(ad.gather(mu, np.asarray([lidx])), params, lidx + 1)
        g = ad.matmul(pts, lp.w_in) + lp.b_in
        q = scale * (ad.matmul(h * g, lp.w_h) + lp.b_h) + shift
        h = ad.leaky_relu_clip(q, ACT_SLOPE, -ACT_CLIP, ACT_CLIP)
    out = ad.matmul(h, params.w_last) + params.b_last
    return ad.reshape(out, (-1,))
