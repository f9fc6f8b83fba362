"""Synthetic client networks and loss/utility evaluation.

Each client owns a linear regression task ``y = sign * u^T x + noise`` where the
ground-truth vector ``u = v + r`` shares a common component ``v`` across the
network and a client-specific deviation ``r ~ N(0, rho^2 I)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Iterator, Literal, Optional

import numpy as np

from .errors import ConfigError, ShapeError

if TYPE_CHECKING:
    from .pareto import LinearModel


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1:
            raise ShapeError("features must be 2-d and labels 1-d")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def moments(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Per-sample second moments ``(A^T A / n, A^T y / n, y^T y / n)``.

        ``A`` is the feature matrix with a trailing column of ones, so any
        linear model's MSE is ``b^T G b - 2 r^T b + c`` with these three terms.
        """
        A = _augment(self.features)
        n = max(self.n_samples, 1)
        gram = A.T @ A / n
        rhs = A.T @ self.labels / n
        return gram, rhs, float(self.labels @ self.labels / n)


@dataclass(frozen=True, eq=False)
class Client:
    id: int
    train: Dataset
    validation: Dataset
    test: Dataset
    ground_truth: Optional[np.ndarray] = None
    sign: int = 1

    @property
    def n_features(self) -> int:
        return self.train.n_features


class ClientSet:
    """Immutable, id-indexed roster of clients."""

    def __init__(self, clients: Iterable[Client]):
        clients = tuple(sorted(clients, key=lambda c: c.id))
        ids = [c.id for c in clients]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate client ids in {ids}")
        widths = {c.n_features for c in clients}
        for c in clients:
            widths |= {c.validation.n_features, c.test.n_features}
        if len(widths) > 1:
            raise ShapeError(f"clients disagree on n_features: {sorted(widths)}")
        self._clients = clients
        self._by_id = {c.id: c for c in clients}

    def __iter__(self) -> Iterator[Client]:
        return iter(self._clients)

    def __len__(self) -> int:
        return len(self._clients)

    def __getitem__(self, client_id: int) -> Client:
        return self._by_id[client_id]

    def __contains__(self, client_id: object) -> bool:
        return client_id in self._by_id

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(self._by_id)

    def subset(self, ids: Iterable[int]) -> "ClientSet":
        return ClientSet(self._by_id[i] for i in ids)

    def __repr__(self) -> str:
        return f"ClientSet(ids={list(self.ids)})"


@dataclass(frozen=True)
class SyntheticConfig:
    n_clients: int = 6
    n_features: int = 10
    n_train: int = 2000
    rho: float = 0.1
    sigma: float = 0.1
    flip_set: frozenset = field(default_factory=frozenset)
    val_fraction: float = 0.13
    n_test: int = 1000
    seed: int = 0
    # Test labels default to the noise-free response, so test MSE is the
    # estimation error against each client's true regression function.
    test_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "flip_set", frozenset(int(i) for i in self.flip_set))
        for name in ("n_clients", "n_features", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_train < 2:
            raise ConfigError("n_train must be >= 2")
        if self.rho < 0 or self.sigma < 0:
            raise ConfigError("rho and sigma must be non-negative")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")
        n_val = self.n_validation
        if n_val < 1 or self.n_train - n_val < 1:
            raise ConfigError("val_fraction leaves an empty train or validation split")
        if not self.flip_set <= set(range(self.n_clients)):
            raise ConfigError(
                f"flip_set {sorted(self.flip_set)} not within 0..{self.n_clients - 1}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def n_validation(self) -> int:
        return int(round(self.val_fraction * self.n_train))


def generate_synthetic_network(cfg: SyntheticConfig) -> ClientSet:
    """Draw the client network described by ``cfg``; bit-identical per seed."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.n_features
    shared = rng.uniform(0.0, 1.0, size=d)
    n_val = cfg.n_validation
    clients = []
    for i in range(cfg.n_clients):
        u = shared + rng.normal(0.0, cfg.rho, size=d)
        sign = -1 if i in cfg.flip_set else 1
        X = rng.uniform(-1.0, 1.0, size=(cfg.n_train, d))
        y = sign * (X @ u) + rng.normal(0.0, cfg.sigma, size=cfg.n_train)
        order = rng.permutation(cfg.n_train)
        val_idx, train_idx = order[:n_val], order[n_val:]
        X_test = rng.uniform(-1.0, 1.0, size=(cfg.n_test, d))
        y_test = sign * (X_test @ u)
        if cfg.test_noise:
            y_test = y_test + rng.normal(0.0, cfg.sigma, size=cfg.n_test)
        clients.append(
            Client(
                id=i,
                train=Dataset(X[train_idx], y[train_idx]),
                validation=Dataset(X[val_idx], y[val_idx]),
                test=Dataset(X_test, y_test),
                ground_truth=u,
                sign=sign,
            )
        )
    return ClientSet(clients)


def evaluate_mse(model: "LinearModel", data: Dataset) -> float:
    coef = np.asarray(model.coefficients)
    if coef.shape != (data.n_features,):
        raise ShapeError(
            f"model has {coef.shape[0]} coefficients, data has {data.n_features} features"
        )
    resid = data.features @ coef + model.intercept - data.labels
    return float(np.mean(resid * resid))


def utility(
    model: "LinearModel",
    client: Client,
    split: Literal["validation", "test"] = "validation",
) -> float:
    """Negative MSE of ``model`` on one of the client's held-out splits."""
    if split not in ("validation", "test"):
        raise ValueError(f"unknown split {split!r}")
    return -evaluate_mse(model, getattr(client, split))
