"""Optimization loop: AdamW with decoupled decay, cosine warmup, global
gradient clipping, early stopping on validation accuracy, checkpointing.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .augment import augment
from .config import TrainConfig
from .data import compute_class_weights
from .errors import ConfigError, DataError, TrainingDivergedError
from .fusion import LossConfig, loss_backward, weighted_smoothed_ce
from .model import (
    batch_inputs,
    build_model,
    model_backward,
    model_forward,
    named_params,
    named_state,
    predict_logits,
)


def clip_gradients(grads, max_norm=1.0, step=None):
    """Scale every gradient by max_norm/g when the global L2 norm g exceeds
    max_norm. Returns (grads, global_norm). Mutates in place."""
    total = 0.0
    for name, g in grads.items():
        s = float(np.sum(g * g))
        if not np.isfinite(s):
            raise TrainingDivergedError(
                f"non-finite gradient in {name}", step=step)
        total += s
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads, norm


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(params, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState(
        m={k: np.zeros_like(a) for k, a in params.items()},
        v={k: np.zeros_like(a) for k, a in params.items()},
        t=0, beta1=beta1, beta2=beta2, eps=eps)


def adamw_step(params, grads, state, lr_t, wd=5e-2):
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr_t * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """
    if set(params) != set(grads):
        raise ValueError("parameter and gradient registries disagree")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= lr_t * (m_hat / (np.sqrt(v_hat) + state.eps) + wd * theta)
    return params, state


def cosine_warmup_lr(step, warmup_steps, total_steps, lr_max=1e-3):
    """Linear ramp 0 -> lr_max over warmup_steps, then a half-cosine decay
    to 0 at total_steps."""
    if not 0 <= warmup_steps < total_steps:
        raise ValueError("need 0 <= warmup_steps < total_steps")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return lr_max * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    # Native float so logged schedules render the same after a round trip.
    return float(lr_max * 0.5 * (1.0 + np.cos(np.pi * progress)))


@dataclass
class TrainHistory:
    """Everything logged during one fold's training."""

    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    step_lr: list = field(default_factory=list)
    step_grad_norm: list = field(default_factory=list)
    step_grad_norm_clipped: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = float("-inf")
    stopped_epoch: int = 0

    def to_text(self):
        lines = []
        for i in range(len(self.epoch)):
            lines.append(
                f"epoch={self.epoch[i]} train_loss={self.train_loss[i]!r} "
                f"val_loss={self.val_loss[i]!r} val_acc={self.val_acc[i]!r} "
                f"lr={self.lr[i]!r}")
        lines.append(f"best_epoch={self.best_epoch} "
                     f"best_val_acc={self.best_val_acc!r} "
                     f"stopped_epoch={self.stopped_epoch}")
        return "\n".join(lines) + "\n"


def _evaluate_loss_acc(bundle, samples, loss_cfg, batch_size, branches=None):
    """Eval-mode loss and accuracy over a sample list."""
    if branches is None:
        branches = bundle.head_branches
    total_w = 0.0
    total_loss = 0.0
    correct = 0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        run_x, kick_x, gamma, labels = batch_inputs(chunk)
        logits, _ = model_forward(bundle, run_x, kick_x, gamma, mode="eval",
                                  branches=branches)
        w = float(np.sum(loss_cfg.class_weights[labels])) \
            if loss_cfg.normalization == "weight_sum" else float(len(chunk))
        total_loss += weighted_smoothed_ce(logits, labels, loss_cfg) * w
        total_w += w
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
    return total_loss / total_w, correct / len(samples)


def train_fold(train_samples, val_samples, cfg, fold=0, branches=None,
               head_branches=None):
    """Train one fold to early stopping; returns (bundle, opt, history).

    The fold seed derives from (config seed, fold index) so folds can run
    concurrently with independent streams. `branches` zero-masks excluded
    branch vectors at the fusion input during both training and validation;
    `head_branches` instead builds the fusion head without them.
    """
    if len(train_samples) < cfg.batch_size:
        raise DataError("training fold smaller than one batch")
    if not val_samples:
        raise DataError("validation fold is empty")
    for s in train_samples + val_samples:
        if not (np.isfinite(s.run_seq).all() and np.isfinite(s.kick_seq).all()):
            raise DataError(f"sample {s.id!r} has non-finite embeddings")
    d = train_samples[0].run_seq.shape[1]
    rng = np.random.default_rng([cfg.seed, fold])
    bundle = build_model(d, cfg.n_classes, cfg, rng,
                         head_branches=head_branches)
    if branches is None:
        branches = bundle.head_branches
    params = named_params(bundle)
    state = named_state(bundle)
    opt = init_optimizer(params, beta1=cfg.beta1, beta2=cfg.beta2,
                         eps=cfg.adam_eps)
    labels = [s.label for s in train_samples]
    weights = compute_class_weights(labels, cfg.n_classes)
    loss_cfg = LossConfig(class_weights=weights,
                          label_smoothing=cfg.label_smoothing,
                          normalization=cfg.loss_normalization)
    aug_cfg = cfg.augment_config() if cfg.augment else None

    batches_per_epoch = len(train_samples) // cfg.batch_size
    total_steps = cfg.max_epochs * batches_per_epoch
    warmup_steps = int(cfg.warmup_frac * total_steps)
    if warmup_steps >= total_steps:
        raise ConfigError("warmup covers the whole schedule")

    history = TrainHistory()
    snapshot = None
    since_improvement = 0
    global_step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(train_samples))
        epoch_losses = []
        lr_t = 0.0
        for b in range(batches_per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            chunk = [train_samples[i] for i in idx]
            if aug_cfg is not None:
                chunk = [augment(s, aug_cfg, rng) for s in chunk]
            run_x, kick_x, gamma, y = batch_inputs(chunk)
            try:
                logits, cache = model_forward(bundle, run_x, kick_x, gamma,
                                              mode="train", rng=rng,
                                              branches=branches)
                loss = weighted_smoothed_ce(logits, y, loss_cfg)
            except ValueError as exc:
                # Finite inputs were validated up front, so a mid-training
                # ValueError means activations overflowed.
                raise TrainingDivergedError(str(exc), step=global_step) \
                    from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite training loss",
                                            step=global_step)
            grads = model_backward(bundle, cache,
                                   loss_backward(logits, y, loss_cfg))
            _, norm = clip_gradients(grads, cfg.clip_norm, step=global_step)
            lr_t = cosine_warmup_lr(global_step, warmup_steps, total_steps,
                                    cfg.lr)
            adamw_step(params, grads, opt, lr_t, wd=cfg.weight_decay)
            history.step_lr.append(lr_t)
            history.step_grad_norm.append(norm)
            history.step_grad_norm_clipped.append(min(norm, cfg.clip_norm))
            epoch_losses.append(loss)
            global_step += 1

        val_loss, val_acc = _evaluate_loss_acc(bundle, val_samples, loss_cfg,
                                               cfg.batch_size,
                                               branches=branches)
        history.epoch.append(epoch)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        history.lr.append(lr_t)
        if val_acc > history.best_val_acc:
            history.best_val_acc = val_acc
            history.best_epoch = epoch
            snapshot = {k: a.copy() for k, a in {**params, **state}.items()}
            since_improvement = 0
        else:
            since_improvement += 1
        history.stopped_epoch = epoch
        if since_improvement >= cfg.patience:
            break

    merged = {**params, **state}
    for name, arr in snapshot.items():
        np.copyto(merged[name], arr)
    return bundle, opt, history


def crossval_folds(samples, split, cfg):
    """Yield (fold, train_samples, val_samples) triples in fold order."""
    for fold in range(split.k):
        train, val = split.split(samples, fold)
        yield fold, train, val


def save_checkpoint(path, bundle, opt, history, cfg):
    """Lossless checkpoint: parameters, buffers, optimizer moments, history,
    and the config text needed to rebuild the bundle."""
    params = named_params(bundle)
    state = named_state(bundle)
    meta = {
        "embedding_dim": bundle.embedding_dim,
        "n_classes": bundle.n_classes,
        "head_branches": sorted(bundle.head_branches),
        "opt_t": opt.t,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "best_epoch": history.best_epoch,
        "best_val_acc": history.best_val_acc,
        "stopped_epoch": history.stopped_epoch,
        "config_text": cfg.to_text(),
    }
    arrays = {"meta_json": np.array(json.dumps(meta))}
    for k, a in params.items():
        arrays[f"param.{k}"] = a
    for k, a in state.items():
        arrays[f"state.{k}"] = a
    for k, a in opt.m.items():
        arrays[f"opt_m.{k}"] = a
    for k, a in opt.v.items():
        arrays[f"opt_v.{k}"] = a
    for name in ("epoch", "train_loss", "val_loss", "val_acc", "lr",
                 "step_lr", "step_grad_norm", "step_grad_norm_clipped"):
        arrays[f"hist.{name}"] = np.asarray(getattr(history, name))
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (bundle, opt, history, cfg)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        cfg = TrainConfig.from_text(meta["config_text"])
        rng = np.random.default_rng(0)  # placeholder values, overwritten below
        bundle = build_model(meta["embedding_dim"], meta["n_classes"], cfg, rng,
                             head_branches=frozenset(meta["head_branches"]))
        params = named_params(bundle)
        state = named_state(bundle)
        for k, arr in params.items():
            np.copyto(arr, data[f"param.{k}"])
        for k, arr in state.items():
            np.copyto(arr, data[f"state.{k}"])
        opt = OptimizerState(
            m={k: data[f"opt_m.{k}"].copy() for k in params},
            v={k: data[f"opt_v.{k}"].copy() for k in params},
            t=meta["opt_t"], beta1=meta["beta1"], beta2=meta["beta2"],
            eps=meta["eps"])
        # .tolist() hands back native Python scalars, so a reloaded
        # history renders to the exact text the original produced.
        history = TrainHistory(
            epoch=data["hist.epoch"].tolist(),
            train_loss=data["hist.train_loss"].tolist(),
            val_loss=data["hist.val_loss"].tolist(),
            val_acc=data["hist.val_acc"].tolist(),
            lr=data["hist.lr"].tolist(),
            step_lr=data["hist.step_lr"].tolist(),
            step_grad_norm=data["hist.step_grad_norm"].tolist(),
            step_grad_norm_clipped=data["hist.step_grad_norm_clipped"].tolist(),
            best_epoch=meta["best_epoch"],
            best_val_acc=meta["best_val_acc"],
            stopped_epoch=meta["stopped_epoch"])
    return bundle, opt, history, cfg
