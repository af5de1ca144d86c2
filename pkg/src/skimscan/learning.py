"""Losses, plain SGD and finite-difference gradient checking.

A *model* here is any object exposing

    forward(inputs) -> logits            # (B, n_in) -> (B, n_out)
    gradients(inputs, grad_logits) -> {name: array}   # summed over batch
    parameters() -> {name: array}
    with_parameters(params) -> new model

Losses are callables ``loss(logits, targets) -> (values, grad_logits)``
returning per-example values of shape (B,) and the per-example gradient
with respect to the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, SkimScanError
from .infotheory import kl_divergence, softmax


class TrainingDivergedError(SkimScanError):
    kind = "diverged-training"

    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.8
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be >= 0")


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.005
    epochs: int = 4
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


def _log_softmax(z):
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def cross_entropy(logits, target) -> float:
    """``-ln softmax(logits)[target]``."""
    logits = np.asarray(logits, dtype=float)
    if not 0 <= target < logits.shape[-1]:
        raise ConfigError(f"target {target} outside [0, {logits.shape[-1]})")
    return float(-_log_softmax(logits)[target])


def binary_cross_entropy(logits, target) -> float:
    if target not in (0, 1):
        raise ConfigError("binary target must be 0 or 1")
    return cross_entropy(np.asarray(logits, dtype=float)[:2], int(target))


def distill_loss(student_logits, teacher_logits, target, cfg: DistillConfig = DistillConfig()) -> float:
    """Cross-entropy plus ``alpha * T^2 * KL(teacher_T || student_T)``."""
    ce = cross_entropy(student_logits, target)
    if cfg.alpha == 0:
        return ce
    T = cfg.temperature
    pt = softmax(np.asarray(teacher_logits, dtype=float) / T)
    ps = softmax(np.asarray(student_logits, dtype=float) / T)
    return ce + cfg.alpha * T * T * float(kl_divergence(pt, ps))


# ---- batched losses with gradients -------------------------------------


class CrossEntropyLoss:
    """Targets are integer class indices."""

    name = "ce"

    def __call__(self, logits, targets):
        logits = np.atleast_2d(np.asarray(logits, dtype=float))
        t = np.asarray(targets, dtype=int).reshape(-1)
        logp = _log_softmax(logits)
        rows = np.arange(len(t))
        values = -logp[rows, t]
        grad = np.exp(logp)
        grad[rows, t] -= 1.0
        return values, grad


class BinaryCrossEntropyLoss(CrossEntropyLoss):
    name = "bce"


class DistillLoss:
    """Targets are ``(class_index, teacher_logits)`` pairs."""

    name = "distill"

    def __init__(self, cfg: DistillConfig = DistillConfig()):
        self.cfg = cfg

    def __call__(self, logits, targets):
        logits = np.atleast_2d(np.asarray(logits, dtype=float))
        labels = [t[0] for t in targets]
        values, grad = CrossEntropyLoss()(logits, labels)
        if self.cfg.alpha == 0:
            return values, grad
        T, a = self.cfg.temperature, self.cfg.alpha
        teacher = np.stack([np.asarray(t[1], dtype=float) for t in targets])
        pt = softmax(teacher / T)
        ps = softmax(logits / T)
        values = values + a * T * T * kl_divergence(pt, ps)
        # d/ds of T^2 KL(pt || softmax(s/T)) is T (ps - pt)
        grad = grad + a * T * (ps - pt)
        return values, grad


LOSSES = {"ce": CrossEntropyLoss, "bce": BinaryCrossEntropyLoss, "distill": DistillLoss}


def get_loss(loss):
    if isinstance(loss, str):
        try:
            return LOSSES[loss]()
        except KeyError:
            raise ConfigError(f"unknown loss {loss!r}") from None
    return loss


# ---- training ----------------------------------------------------------


def batch_loss_and_grads(model, inputs, targets, loss):
    """Mean loss over the batch and mean parameter gradients."""
    logits = model.forward(inputs)
    values, grad_logits = loss(logits, targets)
    n = len(values)
    grads = model.gradients(inputs, grad_logits)
    return float(values.mean()), {k: g / n for k, g in grads.items()}


def sgd_step(model, grads, lr):
    params = model.parameters()
    return model.with_parameters({k: params[k] - lr * grads[k] for k in params})


def sgd_train(model, data, loss, cfg: SgdConfig):
    """Plain minibatch SGD.

    ``data`` is a sequence of ``(input_vector, target)`` pairs.  Returns the
    trained model and the per-epoch mean loss trace (length ``cfg.epochs``).
    Shuffling is driven only by ``cfg.seed``.
    """
    if not data:
        raise ConfigError("sgd_train needs at least one example")
    loss = get_loss(loss)
    inputs = np.stack([np.asarray(x, dtype=float) for x, _ in data])
    targets = [t for _, t in data]
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            value, grads = batch_loss_and_grads(model, inputs[idx], [targets[i] for i in idx], loss)
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, b)
            total += value * len(idx)
            if cfg.learning_rate != 0:
                model = sgd_step(model, grads, cfg.learning_rate)
        trace.append(total / n)
    return model, trace


def grad_check(model, inputs, target, loss, epsilon=1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError("epsilon must lie in [1e-7, 1e-3]")
    loss = get_loss(loss)
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = [target] * len(x)

    def f(m):
        values, _ = loss(m.forward(x), targets)
        return float(values.mean())

    _, analytic = batch_loss_and_grads(model, x, targets, loss)
    params = {k: np.array(v, dtype=float) for k, v in model.parameters().items()}
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = f(model.with_parameters(params))
            flat[i] = orig - epsilon
            down = f(model.with_parameters(params))
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            a = float(np.asarray(analytic[name]).reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def train_student(student, features, labels, teacher_logits, cfg: SgdConfig, distill: DistillConfig = DistillConfig()):
    """Distil a teacher's logits into ``student`` (e.g. a LinearHead)."""
    data = [(f, (int(y), t)) for f, y, t in zip(features, labels, teacher_logits)]
    return sgd_train(student, data, DistillLoss(distill), cfg)
