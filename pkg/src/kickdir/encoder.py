"""Temporal branch encoder: input projection, a pre-norm residual stack of
gated SSM blocks, and attention pooling down to a single vector per sequence.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import require_finite, softmax
from .ssm import (
    SsmLayerParams,
    init_ssm_layer,
    ssm_layer_apply,
    ssm_layer_backward,
    ssm_layer_forward,
    ssm_layer_param_arrays,
)

LN_EPS = 1e-5


def layer_norm_forward(x, gamma, beta, eps=LN_EPS):
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def layer_norm_backward(cache, dy):
    xhat, inv, gamma = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = np.sum(dy * xhat, axis=axes)
    dbeta = np.sum(dy, axis=axes)
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def attn_pool_forward(h, w):
    """Score each timestep by <w, h_t>, softmax over time, weighted sum.

    h: (B, T, D), w: (D,) -> (pooled (B, D), cache). A zero w gives uniform
    weights, so the pool starts out as a plain mean over time.
    """
    if h.shape[-2] < 1:
        raise ValueError("attn_pool: empty sequence")
    scores = h @ w
    alpha = softmax(scores, axis=-1)
    pooled = np.einsum("bt,btd->bd", alpha, h)
    return pooled, (h, w, alpha)


def attn_pool(h, w):
    """Public pooling entry point: returns (pooled, alphas).

    Accepts a single (T, D) sequence or a (B, T, D) batch.
    """
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    squeeze = h.ndim == 2
    if squeeze:
        h = h[None]
    pooled, (_, _, alpha) = attn_pool_forward(h, w)
    return (pooled[0], alpha[0]) if squeeze else (pooled, alpha)


def attn_pool_backward(cache, dpooled):
    h, w, alpha = cache
    dh = alpha[..., None] * dpooled[:, None, :]
    dalpha = np.einsum("bd,btd->bt", dpooled, h)
    # softmax jacobian applied to dalpha
    dscores = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
    dw = np.einsum("bt,btd->d", dscores, h)
    dh += dscores[..., None] * w
    return dh, dw


@dataclass
class EncoderLayer:
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    block: SsmLayerParams


@dataclass
class BranchEncoderParams:
    """One temporal branch: project to the working width, run the residual
    SSM stack, pool over time. Each branch owns an independent copy."""

    w_proj: np.ndarray  # (H, D_in)
    b_proj: np.ndarray  # (H,)
    layers: list[EncoderLayer] = field(default_factory=list)
    pool_w: np.ndarray = None  # (H,)

    @property
    def width(self):
        return self.w_proj.shape[0]


def init_branch_encoder(in_dim, width, state_size, n_layers, rng, expand=2,
                        conv_width=4, use_conv=True):
    if n_layers < 1:
        raise ValueError("branch encoder needs at least one layer")
    scale = 1.0 / np.sqrt(in_dim)
    layers = [
        EncoderLayer(
            ln_gamma=np.ones(width),
            ln_beta=np.zeros(width),
            block=init_ssm_layer(width, state_size, rng, expand=expand,
                                 conv_width=conv_width, use_conv=use_conv),
        )
        for _ in range(n_layers)
    ]
    return BranchEncoderParams(
        w_proj=rng.uniform(-scale, scale, size=(width, in_dim)),
        b_proj=np.zeros(width),
        layers=layers,
        pool_w=np.zeros(width),
    )


@dataclass
class BranchEncoderCache:
    x_in: np.ndarray
    layer_caches: list
    pool_cache: tuple
    params: BranchEncoderParams


def encode_branch_forward(x, params):
    """x: (B, T, D_in) -> (pooled (B, H), cache). Training path, sequential scan."""
    x = np.asarray(x, dtype=np.float64)
    require_finite("encode_branch_forward", x)
    if x.ndim != 3:
        raise ValueError("encode_branch_forward: expected (B, T, D) input")
    if x.shape[-1] != params.w_proj.shape[1]:
        raise ValueError(
            f"encode_branch_forward: expected {params.w_proj.shape[1]} features, "
            f"got {x.shape[-1]}")
    h = x @ params.w_proj.T + params.b_proj
    layer_caches = []
    for lay in params.layers:
        normed, ln_cache = layer_norm_forward(h, lay.ln_gamma, lay.ln_beta)
        out, blk_cache = ssm_layer_forward(normed, lay.block)
        layer_caches.append((ln_cache, blk_cache))
        h = h + out
    pooled, pool_cache = attn_pool_forward(h, params.pool_w)
    return pooled, BranchEncoderCache(x_in=x, layer_caches=layer_caches,
                                      pool_cache=pool_cache, params=params)


def encode_branch_apply(x, params):
    """Cache-free evaluation using the parallel scan inside each block."""
    x = np.asarray(x, dtype=np.float64)
    h = x @ params.w_proj.T + params.b_proj
    for lay in params.layers:
        normed, _ = layer_norm_forward(h, lay.ln_gamma, lay.ln_beta)
        h = h + ssm_layer_apply(normed, lay.block)
    pooled, _ = attn_pool_forward(h, params.pool_w)
    return pooled


def encode_branch_backward(cache, dpooled):
    """Returns (dx, grads) with grads keyed proj_w, proj_b, pool_w and
    layers.<i>.<field> for the stack."""
    params = cache.params
    dh, dpool_w = attn_pool_backward(cache.pool_cache, dpooled)
    grads = {"pool_w": dpool_w}
    for i in range(len(params.layers) - 1, -1, -1):
        ln_cache, blk_cache = cache.layer_caches[i]
        dnormed, blk_grads = ssm_layer_backward(blk_cache, dh)
        for k, v in blk_grads.items():
            grads[f"layers.{i}.{k}"] = v
        dres, dgamma, dbeta = layer_norm_backward(ln_cache, dnormed)
        grads[f"layers.{i}.ln_gamma"] = dgamma
        grads[f"layers.{i}.ln_beta"] = dbeta
        dh = dh + dres
    grads["proj_w"] = np.einsum("bth,btd->hd", dh, cache.x_in)
    grads["proj_b"] = dh.sum(axis=(0, 1))
    dx = dh @ params.w_proj
    return dx, grads


def branch_param_arrays(params, prefix=""):
    """Yield (name, array) for every learnable tensor in the branch."""
    yield prefix + "proj_w", params.w_proj
    yield prefix + "proj_b", params.b_proj
    for i, lay in enumerate(params.layers):
        yield f"{prefix}layers.{i}.ln_gamma", lay.ln_gamma
        yield f"{prefix}layers.{i}.ln_beta", lay.ln_beta
        yield from ssm_layer_param_arrays(lay.block, prefix=f"{prefix}layers.{i}.")
    yield prefix + "pool_w", params.pool_w
