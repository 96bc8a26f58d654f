"""Selective state-space layer: discretization, input-dependent projections,
and the linear recurrence evaluated sequentially or as an associative scan.

The recurrence per channel h and state n is

    s_t = a_bar[t] * s_{t-1} + b_bar[t] * x_t,     y_t = <c_t, s_t> + d * x_t

where a_bar, b_bar come from zero-order-hold discretization of a diagonal
continuous-time system with an input-dependent step size, and b_t, c_t,
delta_t are affine functions of the current input (the selection mechanism).

All forward functions have hand-derived reverse-mode counterparts; every
gradient is checked against central finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import require_finite, sigmoid, softplus, softplus_inverse

# Below this |delta * a| the exact b_bar expression (exp(z)-1)/a * b is
# replaced by its limit delta * b to avoid catastrophic cancellation.
ZOH_LIMIT = 1e-6


@dataclass
class SsmParams:
    """Parameters of one selective SSM core over H channels and N states.

    The evolution parameter is diagonal per channel: a = -exp(a_log), which
    keeps every entry strictly negative so the ZOH exponential stays in (0,1)
    for any positive step size.
    """

    a_log: np.ndarray   # (H, N)
    skip_d: np.ndarray  # (H,)  direct feedthrough
    w_delta: np.ndarray  # (H, H) step-size projection
    b_delta: np.ndarray  # (H,)  step-size bias (controls initial delta)
    w_b: np.ndarray     # (N, H) input projection
    b_b: np.ndarray     # (N,)
    w_c: np.ndarray     # (N, H) readout projection
    b_c: np.ndarray     # (N,)

    @property
    def channels(self):
        return self.a_log.shape[0]

    @property
    def state_size(self):
        return self.a_log.shape[1]


def init_ssm_params(channels, state_size, rng, delta_range=(0.001, 0.1)):
    """Initialize an SSM core.

    a_log starts at log(1..N) per channel; the delta bias is sampled so the
    initial step size softplus(b_delta) lands log-uniformly in delta_range.
    """
    if channels < 1 or state_size < 1:
        raise ValueError("channels and state_size must be >= 1")
    a_log = np.tile(np.log(np.arange(1, state_size + 1, dtype=np.float64)),
                    (channels, 1))
    lo, hi = delta_range
    delta_init = np.exp(rng.uniform(np.log(lo), np.log(hi), size=channels))
    scale = 1.0 / np.sqrt(channels)
    return SsmParams(
        a_log=a_log,
        skip_d=np.ones(channels),
        w_delta=rng.uniform(-scale, scale, size=(channels, channels)),
        b_delta=softplus_inverse(delta_init),
        w_b=rng.uniform(-scale, scale, size=(state_size, channels)),
        b_b=np.zeros(state_size),
        w_c=rng.uniform(-scale, scale, size=(state_size, channels)),
        b_c=np.zeros(state_size),
    )


def discretize_zoh(a, b, delta):
    """Zero-order-hold discretization of the diagonal system (a, b).

    Returns (a_bar, b_bar) with a_bar = exp(delta*a) and
    b_bar = ((exp(delta*a) - 1)/a) * b, switching to the analytic limit
    delta*b when |delta*a| < ZOH_LIMIT. Inputs broadcast elementwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    require_finite("discretize_zoh", a, b, delta)
    if np.any(a >= 0):
        raise ValueError("discretize_zoh: evolution parameter must be negative")
    if np.any(delta < 0):
        raise ValueError("discretize_zoh: step size must be non-negative")
    z = delta * a
    a_bar = np.exp(z)
    b_bar = np.where(np.abs(z) < ZOH_LIMIT, delta * b, (a_bar - 1.0) / a * b)
    return a_bar, b_bar


def selective_project(x, params):
    """Input-dependent SSM parameters for each timestep of x (..., H).

    Returns (b, c, delta) with shapes (..., N), (..., N), (..., H); delta is
    strictly positive via softplus.
    """
    x = np.asarray(x, dtype=np.float64)
    require_finite("selective_project", x)
    if x.shape[-1] != params.channels:
        raise ValueError(
            f"selective_project: expected {params.channels} channels, got {x.shape[-1]}")
    b = x @ params.w_b.T + params.b_b
    c = x @ params.w_c.T + params.b_c
    delta = softplus(x @ params.w_delta.T + params.b_delta)
    return b, c, delta


@dataclass
class ScanCache:
    x: np.ndarray       # (B, T, H) scan input
    pre: np.ndarray     # (B, T, H) delta pre-activation
    delta: np.ndarray   # (B, T, H)
    b: np.ndarray       # (B, T, N)
    c: np.ndarray       # (B, T, N)
    a: np.ndarray       # (H, N)
    a_bar: np.ndarray   # (B, T, H, N)
    phi: np.ndarray     # (B, T, H, N) b_bar = phi * b
    b_bar: np.ndarray   # (B, T, H, N)
    small: np.ndarray   # (B, T, H, N) bool, limit-branch mask
    hs: np.ndarray      # (B, T, H, N) hidden states
    params: SsmParams


def _selective_parts(x, params):
    """Shared precomputation for both scan evaluations. x is (B, T, H)."""
    pre = x @ params.w_delta.T + params.b_delta
    delta = softplus(pre)
    b = x @ params.w_b.T + params.b_b
    c = x @ params.w_c.T + params.b_c
    a = -np.exp(params.a_log)
    z = delta[..., None] * a
    a_bar = np.exp(z)
    small = np.abs(z) < ZOH_LIMIT
    phi = np.where(small, np.broadcast_to(delta[..., None], z.shape),
                   (a_bar - 1.0) / a)
    b_bar = phi * b[:, :, None, :]
    u = b_bar * x[..., None]
    return pre, delta, b, c, a, a_bar, small, phi, b_bar, u


def _readout(hs, c, x, skip_d):
    return np.einsum("bthn,btn->bth", hs, c) + skip_d * x


def _check_scan_input(name, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"{name}: expected (T, H) or (B, T, H) input")
    if x.shape[1] < 1:
        raise ValueError(f"{name}: empty sequence")
    require_finite(name, x)
    return x, squeeze


def scan_recurrent(x, params):
    """Left-to-right evaluation of the selective recurrence.

    x: (T, H) or (B, T, H); returns y of the same shape. O(T*H*N) work.
    """
    x, squeeze = _check_scan_input("scan_recurrent", x)
    y, _ = _scan_forward(x, params)
    return y[0] if squeeze else y


def _scan_forward(x, params):
    pre, delta, b, c, a, a_bar, small, phi, b_bar, u = _selective_parts(x, params)
    bsz, t_len = x.shape[0], x.shape[1]
    hs = np.empty_like(u)
    h = np.zeros((bsz,) + u.shape[2:])
    for t in range(t_len):
        h = a_bar[:, t] * h + u[:, t]
        hs[:, t] = h
    y = _readout(hs, c, x, params.skip_d)
    cache = ScanCache(x=x, pre=pre, delta=delta, b=b, c=c, a=a, a_bar=a_bar,
                      phi=phi, b_bar=b_bar, small=small, hs=hs, params=params)
    return y, cache


def _compose_affine(a2, u2, a1, u1):
    """Composition of affine maps h -> a*h + u: apply (a1,u1) first, then (a2,u2)."""
    return a2 * a1, a2 * u1 + u2


def scan_parallel(x, params):
    """Associative-scan evaluation of the same recurrence.

    Each timestep is the affine map h -> a_bar*h + b_bar*x_t; maps compose as
    (a2,u2)o(a1,u1) = (a2*a1, a2*u1 + u2), so an inclusive scan with stride
    doubling yields all hidden states in ceil(log2 T) combine passes.
    """
    x, squeeze = _check_scan_input("scan_parallel", x)
    _, _, _, c, _, a_bar, _, _, _, u = _selective_parts(x, params)
    a_acc = a_bar.copy()
    u_acc = u.copy()
    t_len = x.shape[1]
    offset = 1
    while offset < t_len:
        a_new, u_new = _compose_affine(a_acc[:, offset:], u_acc[:, offset:],
                                       a_acc[:, :-offset], u_acc[:, :-offset])
        a_acc[:, offset:] = a_new
        u_acc[:, offset:] = u_new
        offset *= 2
    y = _readout(u_acc, c, x, params.skip_d)
    return y[0] if squeeze else y


def scan_backward(cache, dy):
    """Reverse-mode gradients of _scan_forward.

    Returns (dx, grads) where grads maps SsmParams field names to arrays.
    State gradients propagate right-to-left: ds_{t-1} += a_bar_t * ds_t.
    """
    p = cache.params
    x, hs, a_bar = cache.x, cache.hs, cache.a_bar
    bsz, t_len = x.shape[0], x.shape[1]

    d_skip = np.einsum("bth,bth->h", dy, x)
    dx = dy * p.skip_d
    dc = np.einsum("bth,bthn->btn", dy, hs)
    dh_direct = dy[..., None] * cache.c[:, :, None, :]

    d_hs = np.empty_like(hs)
    carry = np.zeros((bsz,) + hs.shape[2:])
    for t in range(t_len - 1, -1, -1):
        carry = dh_direct[:, t] + carry
        d_hs[:, t] = carry
        carry = a_bar[:, t] * carry

    h_prev = np.concatenate([np.zeros_like(hs[:, :1]), hs[:, :-1]], axis=1)
    d_a_bar = d_hs * h_prev
    du = d_hs
    db_bar = du * x[..., None]
    dx += np.einsum("bthn,bthn->bth", du, cache.b_bar)

    # through b_bar = phi * b
    dphi = db_bar * cache.b[:, :, None, :]
    db = np.einsum("bthn,bthn->btn", db_bar, cache.phi)
    delta_e = cache.delta[..., None]
    # phi branches: limit is delta (d/ddelta = 1, d/da = 0); exact branch is
    # (a_bar - 1)/a (d/ddelta = a_bar, d/da = (delta*a_bar - phi)/a)
    ddelta = np.einsum("bthn->bth", dphi * np.where(cache.small, 1.0, a_bar))
    da = np.sum(dphi * np.where(cache.small, 0.0,
                                (delta_e * a_bar - cache.phi) / cache.a),
                axis=(0, 1))
    # through a_bar = exp(delta * a)
    ddelta += np.einsum("bthn->bth", d_a_bar * a_bar * cache.a)
    da += np.sum(d_a_bar * a_bar * delta_e, axis=(0, 1))
    da_log = da * cache.a  # a = -exp(a_log)

    dpre = ddelta * sigmoid(cache.pre)
    dw_delta = np.einsum("bth,btg->hg", dpre, x)
    db_delta = dpre.sum(axis=(0, 1))
    dx += dpre @ p.w_delta

    dw_b = np.einsum("btn,bth->nh", db, x)
    db_b = db.sum(axis=(0, 1))
    dx += db @ p.w_b
    dw_c = np.einsum("btn,bth->nh", dc, x)
    db_c = dc.sum(axis=(0, 1))
    dx += dc @ p.w_c

    grads = {"a_log": da_log, "skip_d": d_skip,
             "w_delta": dw_delta, "b_delta": db_delta,
             "w_b": dw_b, "b_b": db_b, "w_c": dw_c, "b_c": db_c}
    return dx, grads


@dataclass
class SsmLayerParams:
    """Gated block around one SSM core: main branch (projection, optional
    depthwise causal conv, scan) multiplied by a sigmoid-linear gate, then an
    output projection back to the block width."""

    w_in: np.ndarray    # (E, D)
    b_in: np.ndarray    # (E,)
    w_gate: np.ndarray  # (E, D)
    b_gate: np.ndarray  # (E,)
    conv_w: np.ndarray | None  # (E, K) depthwise causal kernel, None = no conv
    conv_b: np.ndarray | None  # (E,)
    ssm: SsmParams      # channels = E
    w_out: np.ndarray   # (D, E)
    b_out: np.ndarray   # (D,)


def init_ssm_layer(d_model, state_size, rng, expand=2, conv_width=4,
                   use_conv=True):
    inner = expand * d_model
    s_in = 1.0 / np.sqrt(d_model)
    s_out = 1.0 / np.sqrt(inner)
    conv_w = conv_b = None
    if use_conv:
        s_conv = 1.0 / np.sqrt(conv_width)
        conv_w = rng.uniform(-s_conv, s_conv, size=(inner, conv_width))
        conv_b = np.zeros(inner)
    return SsmLayerParams(
        w_in=rng.uniform(-s_in, s_in, size=(inner, d_model)),
        b_in=np.zeros(inner),
        w_gate=rng.uniform(-s_in, s_in, size=(inner, d_model)),
        b_gate=np.zeros(inner),
        conv_w=conv_w,
        conv_b=conv_b,
        ssm=init_ssm_params(inner, state_size, rng),
        w_out=rng.uniform(-s_out, s_out, size=(d_model, inner)),
        b_out=np.zeros(d_model),
    )


def _causal_conv(u, conv_w, conv_b):
    """Depthwise causal convolution over time; zero-padded on the left."""
    k = conv_w.shape[1]
    t_len = u.shape[1]
    up = np.pad(u, ((0, 0), (k - 1, 0), (0, 0)))
    out = np.broadcast_to(conv_b, u.shape).copy()
    for j in range(k):
        out += conv_w[:, j] * up[:, k - 1 - j:k - 1 - j + t_len]
    return out


def _causal_conv_backward(dout, u, conv_w):
    k = conv_w.shape[1]
    t_len = u.shape[1]
    up = np.pad(u, ((0, 0), (k - 1, 0), (0, 0)))
    dconv_b = dout.sum(axis=(0, 1))
    dconv_w = np.empty_like(conv_w)
    dup = np.zeros_like(up)
    for j in range(k):
        seg = slice(k - 1 - j, k - 1 - j + t_len)
        dconv_w[:, j] = np.einsum("bth,bth->h", dout, up[:, seg])
        dup[:, seg] += conv_w[:, j] * dout
    return dup[:, k - 1:], dconv_w, dconv_b


@dataclass
class SsmLayerCache:
    x: np.ndarray
    u: np.ndarray
    xc: np.ndarray
    gate: np.ndarray
    scan_y: np.ndarray
    gated: np.ndarray
    scan_cache: ScanCache
    layer: SsmLayerParams


def ssm_layer_forward(x, layer):
    """Gated SSM block, caching intermediates for the backward pass.

    x: (B, T, D) -> (y: (B, T, D), cache).
    """
    x = np.asarray(x, dtype=np.float64)
    require_finite("ssm_layer_forward", x)
    u = x @ layer.w_in.T + layer.b_in
    xc = _causal_conv(u, layer.conv_w, layer.conv_b) if layer.conv_w is not None else u
    scan_y, scan_cache = _scan_forward(xc, layer.ssm)
    gate = sigmoid(x @ layer.w_gate.T + layer.b_gate)
    gated = gate * scan_y
    y = gated @ layer.w_out.T + layer.b_out
    cache = SsmLayerCache(x=x, u=u, xc=xc, gate=gate, scan_y=scan_y,
                          gated=gated, scan_cache=scan_cache, layer=layer)
    return y, cache


def ssm_layer_apply(x, layer):
    """Cache-free evaluation of the gated block using the parallel scan."""
    u = x @ layer.w_in.T + layer.b_in
    xc = _causal_conv(u, layer.conv_w, layer.conv_b) if layer.conv_w is not None else u
    scan_y = scan_parallel(xc, layer.ssm)
    gate = sigmoid(x @ layer.w_gate.T + layer.b_gate)
    return (gate * scan_y) @ layer.w_out.T + layer.b_out


def ssm_layer_backward(cache, dy):
    """Reverse-mode gradients of ssm_layer_forward.

    Returns (dx, grads); grads keys mirror SsmLayerParams, with the core's
    gradients nested under "ssm.<field>".
    """
    layer = cache.layer
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != cache.x.shape:
        raise ValueError("ssm_layer_backward: dy shape does not match forward input")

    dgated = dy @ layer.w_out
    dw_out = np.einsum("btd,bte->de", dy, cache.gated)
    db_out = dy.sum(axis=(0, 1))

    dgate = dgated * cache.scan_y
    dscan_y = dgated * cache.gate
    dgpre = dgate * cache.gate * (1.0 - cache.gate)
    dx = dgpre @ layer.w_gate
    dw_gate = np.einsum("bte,btd->ed", dgpre, cache.x)
    db_gate = dgpre.sum(axis=(0, 1))

    dxc, ssm_grads = scan_backward(cache.scan_cache, dscan_y)
    grads = {f"ssm.{k}": v for k, v in ssm_grads.items()}

    if layer.conv_w is not None:
        du, dconv_w, dconv_b = _causal_conv_backward(dxc, cache.u, layer.conv_w)
        grads["conv_w"] = dconv_w
        grads["conv_b"] = dconv_b
    else:
        du = dxc

    dx += du @ layer.w_in
    grads["w_in"] = np.einsum("bte,btd->ed", du, cache.x)
    grads["b_in"] = du.sum(axis=(0, 1))
    grads["w_out"] = dw_out
    grads["b_out"] = db_out
    grads["w_gate"] = dw_gate
    grads["b_gate"] = db_gate
    return dx, grads


def ssm_layer_param_arrays(layer, prefix=""):
    """Yield (name, array) pairs for every learnable tensor in the block."""
    for field in ("w_in", "b_in", "w_gate", "b_gate", "conv_w", "conv_b"):
        arr = getattr(layer, field)
        if arr is not None:
            yield prefix + field, arr
    for field in ("a_log", "skip_d", "w_delta", "b_delta", "w_b", "b_b",
                  "w_c", "b_c"):
        yield f"{prefix}ssm.{field}", getattr(layer.ssm, field)
    yield prefix + "w_out", layer.w_out
    yield prefix + "b_out", layer.b_out
