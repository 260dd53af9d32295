"""Joint training of the coupled model: losses, optimizer, loop, metrics.

The objective is relative, not absolute: cascade error is measured against
each cascade's true size and trait error against each node's true scores, so
both tasks are scale-free and can share one weighted sum,
``loss = cascade_term + lam * trait_term``.

One optimizer step covers a minibatch of cascades.  All forwards of a batch
share one tape; the batch loss averages the per-cascade squared relative size
errors and (once per batch) the all-node trait losses of those forwards.
Early stopping watches validation cascade RMRSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .data import Dataset
from .models import (ForwardResult, ModelConfig, ParameterStore, forward_cascade,
                     forward_constants, init_params)


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    lam: float = 1.0              # weight of the trait-recognition term
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise TrainError("learning rate must be positive")
        if self.lam < 0:
            raise TrainError("lam must be non-negative")
        if self.patience < 1:
            raise TrainError("patience must be at least 1")
        if self.batch_size < 1:
            raise TrainError("batch size must be at least 1")
        if self.max_epochs < 0:
            raise TrainError("max_epochs must be non-negative")


@dataclass
class MetricsRecord:
    rmrse: float
    mape: float
    split: str
    epoch: int | None = None


# ---------------------------------------------------------------------------
# numeric losses and metrics


def cascade_loss(predicted, actual) -> float:
    """Mean squared relative size error."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise TrainError("prediction and target lists must match and be non-empty")
    if np.any(actual == 0):
        raise TrainError("cascade sizes must be non-zero")
    rel = (predicted - actual) / actual
    return float(np.mean(rel * rel))


def personality_loss(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Mean over nodes of the squared relative trait error norm."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.ndim != 2:
        raise TrainError("trait matrices must have matching (nodes, traits) shape")
    if np.any(actual <= 0):
        raise TrainError("ground-truth traits must be strictly positive")
    rel = (predicted - actual) / actual
    return float(np.mean(np.sum(rel * rel, axis=1)))


def total_loss(cas: float, per: float, lam: float) -> float:
    return float(cas + lam * per)


def rmrse(predicted, actual) -> float:
    return float(np.sqrt(cascade_loss(predicted, actual)))


def mape(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if np.any(actual == 0):
        raise TrainError("targets must be non-zero")
    return float(np.mean(np.abs((predicted - actual) / actual)))


# ---------------------------------------------------------------------------
# tape-side loss assembly


def _squared_rel_error(tape: Tape, pred: Tensor, target: float) -> Tensor:
    diff = tape.add(pred, Tensor(np.asarray(-float(target))))
    rel = tape.scale(diff, 1.0 / float(target))
    return tape.mul(rel, rel)


def _trait_loss_term(tape: Tape, result: ForwardResult, truth: Tensor,
                     inv_truth: Tensor, n_nodes: int) -> Tensor:
    rel = tape.mul(tape.sub(result.trait_pred, truth), inv_truth)
    return tape.scale(tape.sum(tape.mul(rel, rel)), 1.0 / n_nodes)


def batch_loss(tape: Tape, results: list[ForwardResult], targets: list[int],
               truth: Tensor, inv_truth: Tensor, lam: float) -> Tensor:
    """Mean relative cascade loss plus ``lam`` times the trait term."""
    n_nodes = truth.shape[0]
    acc = None
    for res, size in zip(results, targets):
        term = _squared_rel_error(tape, res.size_pred, size)
        acc = term if acc is None else tape.add(acc, term)
    loss = tape.scale(acc, 1.0 / len(results))
    if lam > 0:
        pacc = None
        for res in results:
            term = _trait_loss_term(tape, res, truth, inv_truth, n_nodes)
            pacc = term if pacc is None else tape.add(pacc, term)
        loss = tape.add(loss, tape.scale(pacc, lam / len(results)))
    return loss


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Bias-corrected adaptive updates; steps with non-finite gradients are
    skipped and counted."""

    def __init__(self, params: list[Tensor], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.skipped = 0

    def step(self, grads: dict[Tensor, np.ndarray]) -> bool:
        gs = []
        for p in self.params:
            g = grads.get(p)
            gs.append(np.zeros_like(p.data) if g is None else np.asarray(g))
        if any(not np.all(np.isfinite(g)) for g in gs):
            self.skipped += 1
            return False
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True


# ---------------------------------------------------------------------------
# evaluation


def evaluate(store: ParameterStore, dataset: Dataset, split: str,
             config: ModelConfig | None = None,
             graph_consts: dict | None = None,
             epoch: int | None = None) -> tuple[MetricsRecord, MetricsRecord]:
    """Cascade metrics over a split plus all-node trait metrics.

    Trait predictions are averaged over the split's forwards (in gated mode
    each cascade context yields slightly different trait vectors) and scored
    against every node's true traits.
    """
    config = config or store.config
    cascades = dataset.cascades_in(split)
    if not cascades:
        raise TrainError(f"split '{split}' is empty")
    if graph_consts is None:
        graph_consts = forward_constants(dataset.graph)
    preds, sizes = [], []
    trait_sum = np.zeros_like(dataset.personalities)
    for c in cascades:
        res = forward_cascade(store, dataset.graph, config, c, graph_consts=graph_consts)
        preds.append(res.size_pred.item())
        sizes.append(c.total_size)
        trait_sum += res.trait_pred.data
    trait_mean = trait_sum / len(cascades)

    cas = MetricsRecord(rmrse(preds, sizes), mape(preds, sizes), split, epoch)
    flat_pred = trait_mean.reshape(-1)
    flat_true = dataset.personalities.reshape(-1)
    per = MetricsRecord(rmrse(flat_pred, flat_true), mape(flat_pred, flat_true),
                        split, epoch)
    return cas, per


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_cascade_loss: float
    train_trait_loss: float
    val_rmrse: float
    val_mape: float


@dataclass
class TrainResult:
    store: ParameterStore
    history: list[EpochRecord]
    best_epoch: int
    skipped_steps: int


HISTORY_HEADER = "epoch,train_loss,train_cascade_loss,train_trait_loss,val_rmrse,val_mape"


def history_to_csv(history: list[EpochRecord]) -> str:
    lines = [HISTORY_HEADER]
    for r in history:
        lines.append(",".join([
            str(r.epoch),
            repr(r.train_loss),
            repr(r.train_cascade_loss),
            repr(r.train_trait_loss),
            repr(r.val_rmrse),
            repr(r.val_mape),
        ]))
    return "\n".join(lines) + "\n"


def train(config: ModelConfig, dataset: Dataset, tconf: TrainConfig,
          store: ParameterStore | None = None) -> TrainResult:
    """Minibatch training with early stopping on validation cascade RMRSE.

    Deterministic for a fixed ``tconf.seed``: initialization, every epoch's
    shuffle, and the optimizer trajectory are all seeded.  Returns the
    parameters of the best validation epoch.
    """
    config.validate()
    tconf.validate()
    if dataset.split is None:
        raise TrainError("dataset has no split assignment")
    train_cascades = dataset.cascades_in("train")
    if not train_cascades:
        raise TrainError("no training cascades")
    for c in train_cascades:
        if c.observed_len is None:
            raise TrainError(f"cascade {c.cid} has no observed prefix")

    if store is None:
        store = init_params(config, dataset.graph, dataset.features, tconf.seed)
    graph_consts = forward_constants(dataset.graph)
    truth = Tensor(dataset.personalities)
    inv_truth = Tensor(1.0 / dataset.personalities)

    opt = Adam(store.trainable(), tconf.learning_rate)
    history: list[EpochRecord] = []
    best = np.inf
    best_epoch = 0
    best_snapshot = store.snapshot()
    bad_epochs = 0

    for epoch in range(1, tconf.max_epochs + 1):
        order = np.random.default_rng([tconf.seed, epoch]).permutation(len(train_cascades))
        epoch_losses, epoch_cas, epoch_per = [], [], []
        for start in range(0, len(order), tconf.batch_size):
            batch = [train_cascades[int(i)] for i in order[start: start + tconf.batch_size]]
            tape = Tape()
            results = [forward_cascade(store, dataset.graph, config, c,
                                       tape=tape, graph_consts=graph_consts)
                       for c in batch]
            targets = [c.total_size for c in batch]
            loss = batch_loss(tape, results, targets, truth, inv_truth, tconf.lam)
            grads = tape.backward(loss)
            opt.step(grads)

            epoch_losses.append(loss.item())
            epoch_cas.append(cascade_loss([r.size_pred.item() for r in results], targets))
            epoch_per.append(np.mean([personality_loss(r.trait_pred.data,
                                                       dataset.personalities)
                                      for r in results]))

        val_cas, _ = evaluate(store, dataset, "val", config, graph_consts, epoch)
        history.append(EpochRecord(epoch,
                                   float(np.mean(epoch_losses)),
                                   float(np.mean(epoch_cas)),
                                   float(np.mean(epoch_per)),
                                   val_cas.rmrse, val_cas.mape))
        if val_cas.rmrse < best:
            best = val_cas.rmrse
            best_epoch = epoch
            best_snapshot = store.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= tconf.patience:
                break

    out = store.copy()
    out.load_values(best_snapshot)
    return TrainResult(out, history, best_epoch, opt.skipped)
