"""Full model: two temporal branch encoders, the metadata branch, and the
fusion classifier, with flat name->array registries for optimization and
serialization, plus branch masking for ablation studies.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import (
    branch_param_arrays,
    encode_branch_apply,
    encode_branch_backward,
    encode_branch_forward,
    init_branch_encoder,
)
from .fusion import (
    fuse_and_classify,
    fusion_backward,
    fusion_param_arrays,
    fusion_state_arrays,
    init_fusion,
    meta_branch_backward,
    meta_branch_forward,
)

ALL_BRANCHES = frozenset({"run", "kick", "meta"})


def normalize_branches(branches):
    got = frozenset(branches)
    if not got:
        raise ValueError("at least one branch must stay enabled")
    unknown = got - ALL_BRANCHES
    if unknown:
        raise ValueError(f"unknown branches: {sorted(unknown)}")
    return got


@dataclass
class ModelBundle:
    """All learnable parameters plus the shape facts needed to rebuild."""

    embedding_dim: int
    n_classes: int
    run_enc: object
    kick_enc: object
    fusion: object
    head_branches: frozenset = ALL_BRANCHES

    @property
    def branch_width(self):
        return self.run_enc.width


def build_model(embedding_dim, n_classes, cfg, rng, head_branches=None):
    """Construct a fresh bundle from a TrainConfig's architecture fields.

    head_branches narrows the fusion head outright: excluded segments are
    removed from the hidden affine map's input instead of arriving as
    zeros. The run branch is always required.
    """
    head = ALL_BRANCHES if head_branches is None else \
        normalize_branches(head_branches)
    if "run" not in head:
        raise ValueError("the run branch cannot be removed from the head")
    width = cfg.branch_width if cfg.branch_width > 0 else embedding_dim
    kwargs = dict(in_dim=embedding_dim, width=width, state_size=cfg.state_size,
                  n_layers=cfg.n_layers, expand=cfg.expand,
                  conv_width=cfg.conv_width, use_conv=cfg.use_conv)
    run_enc = init_branch_encoder(rng=rng, **kwargs)
    kick_enc = init_branch_encoder(rng=rng, **kwargs)
    fusion = init_fusion(branch_width=width, n_classes=n_classes, rng=rng,
                         meta_dim=cfg.meta_dim, hidden=cfg.fusion_hidden,
                         dropout=cfg.dropout, bn_eps=cfg.bn_eps,
                         bn_momentum=cfg.bn_momentum,
                         with_kick="kick" in head, with_meta="meta" in head)
    return ModelBundle(embedding_dim=embedding_dim, n_classes=n_classes,
                       run_enc=run_enc, kick_enc=kick_enc, fusion=fusion,
                       head_branches=head)


def named_params(bundle):
    """Flat name -> array view of every learnable tensor."""
    out = dict(branch_param_arrays(bundle.run_enc, prefix="run_enc."))
    out.update(branch_param_arrays(bundle.kick_enc, prefix="kick_enc."))
    out.update(fusion_param_arrays(bundle.fusion, prefix="fusion."))
    return out


def named_state(bundle):
    """Non-learnable buffers (batch-norm running statistics)."""
    return dict(fusion_state_arrays(bundle.fusion, prefix="fusion."))


def batch_inputs(samples):
    """Stack a list of samples into model inputs (float64)."""
    run_x = np.stack([s.run_seq for s in samples]).astype(np.float64)
    kick_x = np.stack([s.kick_seq for s in samples]).astype(np.float64)
    gamma = np.stack([s.meta_inputs() for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return run_x, kick_x, gamma, labels


@dataclass
class ModelCache:
    run_cache: object
    kick_cache: object
    meta_cache: object
    fusion_cache: object
    branches: frozenset
    batch: int


def model_forward(bundle, run_x, kick_x, gamma, mode="train", rng=None,
                  branches=ALL_BRANCHES):
    """Forward pass. Branches masked out of `branches` contribute zero
    vectors at the fusion input and their encoders are never evaluated;
    branches excluded from the bundle's head at build time are absent from
    the fusion input entirely and cannot be requested here.

    Returns (logits, cache); cache is None in eval mode.
    """
    branches = normalize_branches(branches)
    extra = branches - bundle.head_branches
    if extra:
        raise ValueError(
            f"branches {sorted(extra)} are not part of this model's head")
    train = mode == "train"
    batch = run_x.shape[0]
    width = bundle.branch_width
    in_head = bundle.head_branches
    run_cache = kick_cache = meta_cache = None
    if "run" in branches:
        if train:
            t_run, run_cache = encode_branch_forward(run_x, bundle.run_enc)
        else:
            t_run = encode_branch_apply(run_x, bundle.run_enc)
    else:
        t_run = np.zeros((batch, width))
    if "kick" not in in_head:
        t_kick = None
    elif "kick" in branches:
        if train:
            t_kick, kick_cache = encode_branch_forward(kick_x, bundle.kick_enc)
        else:
            t_kick = encode_branch_apply(kick_x, bundle.kick_enc)
    else:
        t_kick = np.zeros((batch, width))
    if "meta" not in in_head:
        t_meta = None
    elif "meta" in branches:
        t_meta, meta_cache = meta_branch_forward(gamma, bundle.fusion)
    else:
        t_meta = np.zeros((batch, bundle.fusion.meta_dim))
    logits, fusion_cache = fuse_and_classify(t_run, t_kick, t_meta,
                                             bundle.fusion, mode=mode, rng=rng)
    if not train:
        return logits, None
    cache = ModelCache(run_cache=run_cache, kick_cache=kick_cache,
                       meta_cache=meta_cache, fusion_cache=fusion_cache,
                       branches=branches, batch=batch)
    return logits, cache


def model_backward(bundle, cache, dlogits):
    """Gradients for every learnable tensor; masked branches get zeros."""
    dt_run, dt_kick, dt_meta, fusion_grads = fusion_backward(
        cache.fusion_cache, dlogits)
    grads = {f"fusion.{k}": v for k, v in fusion_grads.items()}
    if cache.meta_cache is not None:
        _, meta_grads = meta_branch_backward(cache.meta_cache, dt_meta,
                                             bundle.fusion)
        for k, v in meta_grads.items():
            grads[f"fusion.{k}"] = v
    if cache.run_cache is not None:
        _, run_grads = encode_branch_backward(cache.run_cache, dt_run)
        for k, v in run_grads.items():
            grads[f"run_enc.{k}"] = v
    if cache.kick_cache is not None:
        _, kick_grads = encode_branch_backward(cache.kick_cache, dt_kick)
        for k, v in kick_grads.items():
            grads[f"kick_enc.{k}"] = v
    params = named_params(bundle)
    for name, arr in params.items():
        if name not in grads:
            grads[name] = np.zeros_like(arr)
    return grads


def predict_logits(bundle, samples, branches=None):
    """Eval-mode logits for a sample list. branches=None enables every
    branch the bundle's head carries."""
    if branches is None:
        branches = bundle.head_branches
    if not samples:
        return np.zeros((0, bundle.n_classes))
    run_x, kick_x, gamma, _ = batch_inputs(samples)
    logits, _ = model_forward(bundle, run_x, kick_x, gamma, mode="eval",
                              branches=branches)
    return logits


def predict(bundle, samples, branches=None):
    """Predicted labels; argmax ties resolve to the lowest class index."""
    logits = predict_logits(bundle, samples, branches=branches)
    return np.argmax(logits, axis=1)
