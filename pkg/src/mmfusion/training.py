"""Teacher-forced cross-entropy training with RMSprop or AdaDelta and L2."""

from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, DataError, DimensionError, DivergenceError
from .model import Model
from .tensor import Tensor

log = logging.getLogger(__name__)

OPTIMIZERS = ("rmsprop", "adadelta")


@dataclass
class Example:
    """One training pair: a feature array per modality and the reference token ids."""

    clip_id: str
    features: list[np.ndarray]
    target: list[int]

    @property
    def key(self) -> tuple:
        return tuple(f.shape[0] for f in self.features) + (len(self.target),)


class SequenceLoss(NamedTuple):
    total: Tensor
    per_token: Tensor
    n_tokens: int


def batch_loss(model: Model, features: list, targets: np.ndarray) -> SequenceLoss:
    """Cross-entropy of ``targets`` (``[B, M]``) followed by ``<eos>``, teacher forced.

    ``features`` holds one ``[B, L_k, D_k]`` array per modality.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim != 2 or targets.shape[1] == 0:
        raise ContractError("reference must contain at least one token")
    B, M = targets.shape
    eos = model.vocab.eos
    enc = model.encode(features)
    state = model.initial_state(enc)
    total = None
    for i in range(M + 1):
        out = model.step(state, enc)
        y = targets[:, i] if i < M else np.full(B, eos)
        lp = T.tsum(T.pick(out.logp, y))
        total = lp if total is None else T.add(total, lp)
        if i < M:
            state = model.advance(state, y, out.d)
    total = T.neg(total)
    n = B * (M + 1)
    return SequenceLoss(total, T.mul(total, 1.0 / n), n)


def sequence_loss(model: Model, features: list, reference: list[int]) -> SequenceLoss:
    """Loss for a single clip: ``-sum_i log P(y_i | s_{i-1}, c_i) - log P(<eos> | s_M)``."""
    if len(reference) == 0:
        raise ContractError("reference must contain at least one token")
    batched = [np.asarray(f, dtype=np.float64)[None] for f in features]
    return batch_loss(model, batched, np.asarray([reference]))


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    kind: str
    lr: float = 0.001
    rho: float = 0.9
    eps: float = 1e-8
    l2: float = 0.0
    mean_sq: dict = field(default_factory=dict)
    mean_sq_update: dict = field(default_factory=dict)

    @classmethod
    def create(cls, kind: str, lr: float | None = None, rho: float | None = None, eps: float | None = None, l2: float = 1e-6):
        if kind == "rmsprop":
            return cls(kind, lr=0.001 if lr is None else lr, rho=0.9 if rho is None else rho,
                       eps=1e-8 if eps is None else eps, l2=l2)
        if kind == "adadelta":
            return cls(kind, lr=1.0, rho=0.95 if rho is None else rho, eps=1e-6 if eps is None else eps, l2=l2)
        raise ConfigurationError(f"unknown optimizer {kind!r}; allowed: {', '.join(OPTIMIZERS)}")


def _regularized(name, theta, grads, state):
    g = grads.get(name)
    if g is None:
        g = np.zeros_like(theta)
    if g.shape != theta.shape:
        raise DimensionError(f"{name}: gradient shape {g.shape} vs parameter shape {theta.shape}")
    if state.l2:
        g = g + state.l2 * theta
    return g


def rmsprop_update(params: dict, grads: dict, state: OptimizerState) -> dict:
    """In place: ``ms <- rho ms + (1-rho) g^2``; ``theta <- theta - lr g / sqrt(ms + eps)``."""
    for name, theta in params.items():
        g = _regularized(name, theta, grads, state)
        ms = state.mean_sq.get(name)
        if ms is None:
            ms = np.zeros_like(theta)
        ms = state.rho * ms + (1.0 - state.rho) * g * g
        state.mean_sq[name] = ms
        theta -= state.lr * g / np.sqrt(ms + state.eps)
    return params


def adadelta_update(params: dict, grads: dict, state: OptimizerState) -> dict:
    """In place AdaDelta step (no learning rate)."""
    for name, theta in params.items():
        g = _regularized(name, theta, grads, state)
        eg = state.mean_sq.get(name)
        ed = state.mean_sq_update.get(name)
        if eg is None:
            eg = np.zeros_like(theta)
            ed = np.zeros_like(theta)
        eg = state.rho * eg + (1.0 - state.rho) * g * g
        delta = -(np.sqrt(ed + state.eps) / np.sqrt(eg + state.eps)) * g
        ed = state.rho * ed + (1.0 - state.rho) * delta * delta
        state.mean_sq[name] = eg
        state.mean_sq_update[name] = ed
        theta += delta
    return params


def optimizer_step(params: dict, grads: dict, state: OptimizerState) -> dict:
    if state.kind == "rmsprop":
        return rmsprop_update(params, grads, state)
    if state.kind == "adadelta":
        return adadelta_update(params, grads, state)
    raise ConfigurationError(f"unknown optimizer {state.kind!r}")


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    if not max_norm or max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {n: g * scale for n, g in grads.items()}


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    clip: float = 5.0
    optimizer: str = "rmsprop"
    lr: float | None = None
    rho: float | None = None
    eps: float | None = None
    l2: float = 1e-6

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}; allowed: {', '.join(OPTIMIZERS)}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Model  # best by validation loss
    final_model: Model
    log: list[dict]
    best_epoch: int


def make_batches(examples: list[Example], batch_size: int, rng: np.random.Generator | None = None) -> list[list[Example]]:
    """Group examples with identical sequence lengths, then chunk; no padding."""
    groups = defaultdict(list)
    for ex in examples:
        groups[ex.key].append(ex)
    batches = []
    for key in sorted(groups):
        items = groups[key]
        if rng is not None:
            items = [items[j] for j in rng.permutation(len(items))]
        for start in range(0, len(items), batch_size):
            batches.append(items[start : start + batch_size])
    if rng is not None:
        batches = [batches[j] for j in rng.permutation(len(batches))]
    return batches


def _stack(batch: list[Example]):
    K = len(batch[0].features)
    feats = [np.stack([ex.features[k] for ex in batch]).astype(np.float64) for k in range(K)]
    return feats, np.asarray([ex.target for ex in batch], dtype=np.int64)


def evaluate_loss(model: Model, examples: list[Example], batch_size: int = 64) -> float:
    """Token-averaged cross-entropy over ``examples``."""
    if not examples:
        raise DataError("cannot evaluate loss on an empty split")
    total, count = 0.0, 0
    with T.no_grad():
        for batch in make_batches(examples, batch_size):
            feats, targets = _stack(batch)
            loss = batch_loss(model, feats, targets)
            total += float(loss.total.data)
            count += loss.n_tokens
    return total / count


def train(model: Model, train_set: list[Example], val_set: list[Example], config: TrainConfig, log_path=None) -> TrainResult:
    """Minibatch training; keeps the parameters with the lowest validation loss.

    One JSON record per epoch ``{epoch, train_loss, val_loss, wall_ms}`` is
    returned and, if ``log_path`` is given, written line by line.
    """
    if not train_set:
        raise DataError("training split is empty")
    if not val_set:
        raise DataError("validation split is empty")
    rng = np.random.default_rng(config.seed)
    opt = OptimizerState.create(config.optimizer, config.lr, config.rho, config.eps, config.l2)
    arrays = {n: p.data for n, p in model.params.items()}
    records = []
    best_loss, best_arrays, best_epoch = np.inf, None, 0
    fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            total, count = 0.0, 0
            for step, batch in enumerate(make_batches(train_set, config.batch_size, rng)):
                feats, targets = _stack(batch)
                loss = batch_loss(model, feats, targets)
                value = float(loss.total.data)
                if not np.isfinite(value):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
                grads = T.backward(loss.per_token)
                grads = clip_by_global_norm({n: g for n, g in grads.items() if n in arrays}, config.clip)
                optimizer_step(arrays, grads, opt)
                total += value
                count += loss.n_tokens
            train_loss = total / count
            val_loss = evaluate_loss(model, val_set)
            if not np.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            if val_loss < best_loss:
                best_loss, best_epoch = val_loss, epoch
                best_arrays = {n: a.copy() for n, a in arrays.items()}
            record = {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3),
            }
            records.append(record)
            log.info("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
            if fh is not None:
                fh.write(json.dumps(record) + "\n")
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    best = Model.from_arrays(model.config, best_arrays)
    return TrainResult(best, model, records, best_epoch)
