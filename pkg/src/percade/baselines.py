"""Feature-based reference models: ridge regression and a small MLP.

Cascade baselines regress the total size on seven cascade features (observed
prefix size plus the mean of each structural measure over the observed
adopters).  Trait baselines regress the five trait scores on each node's six
structural measures; labels exist for every node, so these fit and score
transductively, mirroring how the coupled model's trait metrics are computed.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor
from .data import Cascade, Dataset
from .training import Adam, MetricsRecord, mape, rmrse


class BaselineError(ValueError):
    pass


def user_features(dataset: Dataset) -> np.ndarray:
    """One row per node: the six structural measures."""
    return dataset.features.copy()


def cascade_features(dataset: Dataset, cascade: Cascade) -> np.ndarray:
    """Observed prefix size followed by mean structural measures of the prefix."""
    if cascade.observed_len is None:
        raise BaselineError(f"cascade {cascade.cid} has no observed prefix")
    prefix = np.asarray(cascade.adopters[: cascade.observed_len], dtype=np.int64)
    if prefix.size == 0:
        raise BaselineError("empty observed prefix")
    means = dataset.features[prefix].mean(axis=0)
    return np.concatenate([[float(cascade.observed_len)], means])


# ---------------------------------------------------------------------------
# ridge regression


def fit_linear(rows: np.ndarray, targets: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Least squares with a bias column via ridge-damped normal equations."""
    rows = np.asarray(rows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise BaselineError("need at least two rows to fit")
    if targets.shape[0] != rows.shape[0]:
        raise BaselineError("row/target count mismatch")
    x = np.column_stack([rows, np.ones(rows.shape[0])])
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ targets)


def predict_linear(weights: np.ndarray, rows: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    x = np.column_stack([rows, np.ones(rows.shape[0])])
    return x @ weights


# ---------------------------------------------------------------------------
# three-layer MLP on the shared autodiff core


class MLP:
    """Input -> hidden -> hidden -> output with ReLU, trained on MSE.

    Biases are stored as 1 x d matrices and broadcast through a ones-column
    matmul, which keeps every op inside the tape's shape rules.
    """

    def __init__(self, in_dim: int, out_dim: int, hidden: int, seed: int):
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        dims = [in_dim, hidden, hidden, out_dim]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            bound = np.sqrt(6.0 / (a + b))
            self.weights.append(Tensor(rng.uniform(-bound, bound, size=(b, a)),
                                       requires_grad=True, name=f"w{i}"))
            self.biases.append(Tensor(np.zeros((1, b)), requires_grad=True, name=f"b{i}"))

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, tape: Tape, x: Tensor) -> Tensor:
        h = x
        ones_col = Tensor(np.ones((x.shape[0], 1)))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = tape.add(tape.matmul(h, tape.transpose(w)),
                         tape.matmul(ones_col, b))
            if i != last:
                h = tape.relu(h)
        return h

    def predict(self, rows: np.ndarray) -> np.ndarray:
        h = np.asarray(rows, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data.T + b.data[0]
            if i != last:
                h = np.maximum(h, 0.0)
        return h


def fit_mlp(rows: np.ndarray, targets: np.ndarray, hidden: int = 16,
            epochs: int = 400, learning_rate: float = 1e-2, seed: int = 0) -> MLP:
    """Full-batch Adam on mean squared error; returns the fitted network."""
    rows = np.asarray(rows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise BaselineError("need at least one training row")
    if targets.ndim == 1:
        targets = targets[:, None]
    model = MLP(rows.shape[1], targets.shape[1], hidden, seed)
    opt = Adam(model.params(), learning_rate)
    x_const = Tensor(rows)
    y_const = Tensor(targets)
    scale = 1.0 / targets.size
    for _ in range(epochs):
        tape = Tape()
        pred = model.forward(tape, x_const)
        diff = tape.sub(pred, y_const)
        loss = tape.scale(tape.sum(tape.mul(diff, diff)), scale)
        grads = tape.backward(loss)
        opt.step(grads)
    return model


def mlp_mse(model: MLP, rows: np.ndarray, targets: np.ndarray) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    diff = model.predict(rows) - targets
    return float(np.mean(diff * diff))


def linear_mse(weights: np.ndarray, rows: np.ndarray, targets: np.ndarray) -> float:
    diff = predict_linear(weights, rows) - np.asarray(targets, dtype=np.float64)
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# the four reference models over a dataset


def run_baselines(dataset: Dataset, mlp_epochs: int = 400, seed: int = 0) -> dict[str, MetricsRecord]:
    """Fit all four baselines; returns metrics keyed by baseline name.

    Cascade baselines fit on the training split and score the test split;
    trait baselines fit and score on all nodes (transductive labels).
    """
    if dataset.split is None:
        raise BaselineError("dataset has no split assignment")
    train_rows = np.array([cascade_features(dataset, c)
                           for c in dataset.cascades_in("train")])
    train_sizes = np.array([float(c.total_size) for c in dataset.cascades_in("train")])
    test_rows = np.array([cascade_features(dataset, c)
                          for c in dataset.cascades_in("test")])
    test_sizes = np.array([float(c.total_size) for c in dataset.cascades_in("test")])

    out: dict[str, MetricsRecord] = {}

    w = fit_linear(train_rows, train_sizes)
    pred = predict_linear(w, test_rows)
    out["cascade_linear"] = MetricsRecord(rmrse(pred, test_sizes),
                                          mape(pred, test_sizes), "test")

    mlp_c = fit_mlp(train_rows, train_sizes, epochs=mlp_epochs, seed=seed)
    pred = mlp_c.predict(test_rows)[:, 0]
    out["cascade_mlp"] = MetricsRecord(rmrse(pred, test_sizes),
                                       mape(pred, test_sizes), "test")

    node_rows = user_features(dataset)
    traits = dataset.personalities
    w = fit_linear(node_rows, traits)
    pred = predict_linear(w, node_rows)
    out["trait_linear"] = MetricsRecord(rmrse(pred.reshape(-1), traits.reshape(-1)),
                                        mape(pred.reshape(-1), traits.reshape(-1)),
                                        "all_nodes")

    mlp_p = fit_mlp(node_rows, traits, epochs=mlp_epochs, seed=seed)
    pred = mlp_p.predict(node_rows)
    out["trait_mlp"] = MetricsRecord(rmrse(pred.reshape(-1), traits.reshape(-1)),
                                     mape(pred.reshape(-1), traits.reshape(-1)),
                                     "all_nodes")
    return out
