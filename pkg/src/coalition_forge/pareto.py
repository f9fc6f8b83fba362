"""Pareto-front machinery for convex per-client ridge objectives.

Every point on the front of a coalition is indexed by a weight vector on the
probability simplex: the model minimizing ``sum_i w_i * MSE_i(h) + lam * |coef|^2``.
Because the losses are strictly convex quadratics, this map is exact, which
makes dominance and sub-coalition embedding checkable to rounding precision.
"""
from __future__ import annotations

import itertools
import logging
import math
import threading
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, NumericalError, ShapeError
from .tasks import Client, evaluate_mse, utility

log = logging.getLogger(__name__)


class OcsFallbackWarning(UserWarning):
    """The support of the SPO optimum did not reproduce its utility."""


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ConfigError("empty weight vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError(f"weights must be finite and non-negative: {w}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, raw: Sequence[float]) -> "SimplexWeights":
        raw = np.asarray(raw, dtype=np.float64)
        return cls(raw / raw.sum())

    def __len__(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        return isinstance(other, SimplexWeights) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


@dataclass(frozen=True, eq=False)
class LinearModel:
    coefficients: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(coef)) and math.isfinite(self.intercept)):
            raise NumericalError("model has non-finite parameters")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.coefficients + self.intercept

    def __eq__(self, other):
        return (
            isinstance(other, LinearModel)
            and np.array_equal(self.coefficients, other.coefficients)
            and self.intercept == other.intercept
        )


@dataclass(frozen=True, eq=False)
class ParetoPoint:
    weights: SimplexWeights
    model: LinearModel
    train_losses: np.ndarray


@dataclass(frozen=True, eq=False)
class SpoResult:
    target: int
    coalition: tuple[int, ...]
    best_weights: SimplexWeights
    best_model: LinearModel
    val_utility: float
    test_utility: float

    def weight_of(self, client_id: int) -> float:
        return float(self.best_weights.weights[self.coalition.index(client_id)])

    def __eq__(self, other):
        return isinstance(other, SpoResult) and (
            self.target,
            self.coalition,
            self.best_weights,
            self.best_model,
            self.val_utility,
            self.test_utility,
        ) == (
            other.target,
            other.coalition,
            other.best_weights,
            other.best_model,
            other.val_utility,
            other.test_utility,
        )


@dataclass(frozen=True)
class SearchConfig:
    grid_resolution: int = 10
    sample_budget: int = 4096
    refine_steps: int = 30
    refine_init_step: float = 0.1
    ridge_lambda: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.grid_resolution < 1:
            raise ConfigError("grid_resolution must be >= 1")
        if self.sample_budget < 1:
            raise ConfigError("sample_budget must be >= 1")
        if self.refine_steps < 0 or self.refine_init_step <= 0:
            raise ConfigError("refine_steps must be >= 0 and refine_init_step > 0")
        if not self.ridge_lambda > 0:
            raise ConfigError("ridge_lambda must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def uses_grid(self, m: int) -> bool:
        return math.comb(self.grid_resolution + m - 1, m - 1) <= self.sample_budget


@dataclass(frozen=True)
class ToleranceConfig:
    """Support threshold and utility-equivalence margin.

    The margin applied to a utility ``u`` is ``max(delta_u, delta_u_rel * |u|)``;
    set ``delta_u_rel=0`` for a purely absolute margin.
    """

    eps_w: float = 0.02
    delta_u: float = 1e-4
    delta_u_rel: float = 0.01

    def __post_init__(self):
        if not 0 < self.eps_w < 1:
            raise ConfigError("eps_w must lie in (0, 1)")
        if not self.delta_u > 0:
            raise ConfigError("delta_u must be > 0")
        if self.delta_u_rel < 0:
            raise ConfigError("delta_u_rel must be >= 0")

    def delta(self, u: float) -> float:
        return max(self.delta_u, self.delta_u_rel * abs(u))


class SpoCache:
    """Thread-safe write-once memo of SPO results for one client network.

    Keys are ``(target, sorted coalition ids, SearchConfig)``; the first value
    stored for a key is the one every later lookup returns.
    """

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, key, compute: Callable[[], SpoResult]) -> SpoResult:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            self.misses += 1
            return self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


# -- scalarized solve ---------------------------------------------------------


def _stack_moments(clients: Sequence[Client], fit_intercept: bool = True):
    end = None if fit_intercept else -1
    grams = np.ascontiguousarray(np.stack([c.train.moments[0][:end, :end] for c in clients]))
    rhs = np.ascontiguousarray(np.stack([c.train.moments[1][:end] for c in clients]))
    return grams, rhs


def _penalty(n_features: int, lam: float, fit_intercept: bool) -> np.ndarray:
    pen = np.full(n_features + (1 if fit_intercept else 0), float(lam))
    if fit_intercept:
        pen[-1] = 0.0
    return pen


def _model_from_beta(beta: np.ndarray, fit_intercept: bool) -> LinearModel:
    if not np.all(np.isfinite(beta)):
        raise NumericalError("scalarized normal equations are singular")
    if fit_intercept:
        return LinearModel(beta[:-1], float(beta[-1]))
    return LinearModel(beta, 0.0)


def _check_coalition(clients: Sequence[Client]) -> None:
    if len(clients) == 0:
        raise ConfigError("empty coalition")
    widths = {c.n_features for c in clients}
    if len(widths) != 1:
        raise ShapeError(f"clients disagree on n_features: {sorted(widths)}")


def solve_scalarized(
    clients: Sequence[Client],
    weights: SimplexWeights,
    lam: float,
    fit_intercept: bool = True,
) -> LinearModel:
    """Minimizer of ``sum_i w_i * MSE_i + lam * |coef|^2`` over the train splits.

    Each client's loss is a per-sample mean, so the weighted objective has the
    same scale for every weight vector and ``lam`` needs no rescaling. The
    intercept is left unpenalized. ``lam=0`` is allowed for full-rank data.
    """
    clients = list(clients)
    _check_coalition(clients)
    if len(weights) != len(clients):
        raise ShapeError(f"{len(weights)} weights for {len(clients)} clients")
    if lam < 0:
        raise ConfigError("lam must be >= 0")
    grams, rhs = _stack_moments(clients, fit_intercept)
    w = np.ascontiguousarray(weights.weights[None, :])
    beta = kernels.solve_batch(grams, rhs, w, _penalty(clients[0].n_features, lam, fit_intercept))
    return _model_from_beta(beta[0], fit_intercept)


# -- simplex candidates -------------------------------------------------------


def simplex_grid(m: int, k: int) -> np.ndarray:
    """All weight vectors on the ``m``-simplex with entries in ``{0, 1/k, ..., 1}``.

    Rows are in lexicographic order of the underlying stars-and-bars layout.
    """
    if m == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(k + m - 1), m - 1):
        counts = np.diff((-1,) + bars + (k + m - 1,)) - 1
        rows.append(counts)
    return np.asarray(rows, dtype=np.float64) / k


def _candidate_weights(m: int, target_pos: int, cfg: SearchConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.uses_grid(m):
        return simplex_grid(m, cfg.grid_resolution)
    # Dirichlet(1, ..., 1) via normalized exponentials: a prefix of a larger
    # draw equals the smaller draw, so more budget never loses candidates.
    draws = rng.standard_exponential(size=(cfg.sample_budget, m))
    draws /= draws.sum(axis=1, keepdims=True)
    vertex = np.zeros((1, m))
    vertex[0, target_pos] = 1.0
    return np.vstack([vertex, draws])


def _coalition_seed(cfg: SearchConfig, target: int, ids: Sequence[int]) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, target, len(ids), *ids])


def sample_pareto_front(clients: Sequence[Client], cfg: SearchConfig) -> list[ParetoPoint]:
    """Solve the scalarized problem at every grid (or sampled) weight vector."""
    clients = sorted(clients, key=lambda c: c.id)
    _check_coalition(clients)
    ids = [c.id for c in clients]
    m = len(clients)
    # front sampling gets its own stream, apart from any per-target SPO stream
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, len(ids), *ids], spawn_key=(1,)))
    if cfg.uses_grid(m):
        W = simplex_grid(m, cfg.grid_resolution)
    else:
        W = rng.standard_exponential(size=(cfg.sample_budget, m))
        W /= W.sum(axis=1, keepdims=True)
    grams, rhs = _stack_moments(clients)
    betas = kernels.solve_batch(grams, rhs, np.ascontiguousarray(W), _penalty(clients[0].n_features, cfg.ridge_lambda, True))
    points = []
    for w, beta in zip(W, betas):
        model = _model_from_beta(beta, True)
        losses = np.array([evaluate_mse(model, c.train) for c in clients])
        points.append(ParetoPoint(SimplexWeights(w / w.sum()), model, losses))
    return points


# -- specific Pareto optimization ---------------------------------------------


class _TargetObjective:
    """Validation utility of the target as a function of simplex weights."""

    def __init__(self, members: Sequence[Client], target: Client, lam: float):
        self.grams, self.rhs = _stack_moments(members)
        self.penalty = _penalty(target.n_features, lam, True)
        self.vgram, self.vrhs, self.vconst = target.validation.moments

    def __call__(self, W: np.ndarray) -> np.ndarray:
        mse = kernels.quadratic_loss_batch(
            self.grams, self.rhs, np.ascontiguousarray(W, dtype=np.float64),
            self.penalty, self.vgram, self.vrhs, self.vconst,
        )
        return np.where(np.isfinite(mse), -mse, -np.inf)


def _spo_uncached(target: int, members: list[Client], cfg: SearchConfig) -> SpoResult:
    ids = tuple(c.id for c in members)
    pos = ids.index(target)
    m = len(members)
    sample_ss, refine_ss = _coalition_seed(cfg, target, ids).spawn(2)
    objective = _TargetObjective(members, members[pos], cfg.ridge_lambda)

    W = _candidate_weights(m, pos, cfg, np.random.default_rng(sample_ss))
    scores = objective(W)
    best = int(np.argmax(scores))
    w, u = W[best].copy(), scores[best]

    if m > 1:
        rng = np.random.default_rng(refine_ss)
        step = cfg.refine_init_step
        for _ in range(cfg.refine_steps):
            j = int(rng.integers(m))
            trial = w.copy()
            trial[j] = max(0.0, trial[j] + (step if rng.random() < 0.5 else -step))
            total = trial.sum()
            if total > 0:
                trial /= total
                u_trial = objective(trial[None, :])[0]
                if u_trial > u:
                    w, u = trial, u_trial
                    continue
            step /= 2.0

    weights = SimplexWeights.normalized(w)
    model = solve_scalarized(members, weights, cfg.ridge_lambda)
    return SpoResult(
        target=target,
        coalition=ids,
        best_weights=weights,
        best_model=model,
        val_utility=utility(model, members[pos], "validation"),
        test_utility=utility(model, members[pos], "test"),
    )


def spo(
    target: int,
    coalition: Iterable[Client],
    cfg: SearchConfig,
    cache: Optional[SpoCache] = None,
) -> SpoResult:
    """Best Pareto model for ``target`` by validation utility.

    Searches the simplex over ``coalition`` (exhaustive grid when it fits in
    ``cfg.sample_budget``, seeded Dirichlet samples otherwise), then refines the
    best point by seeded coordinate perturbations. Results depend only on
    ``(data, target, coalition ids, cfg)``, never on call order.
    """
    members = sorted(coalition, key=lambda c: c.id)
    if not members:
        raise ConfigError("empty coalition")
    _check_coalition(members)
    ids = tuple(c.id for c in members)
    if target not in ids:
        raise ConfigError(f"target {target} not in coalition {ids}")
    if cache is None:
        return _spo_uncached(target, members, cfg)
    return cache.get_or_compute((target, ids, cfg), lambda: _spo_uncached(target, members, cfg))


def extract_ocs(
    result: SpoResult,
    coalition: Iterable[Client],
    cfg: SearchConfig,
    tol: ToleranceConfig,
    cache: Optional[SpoCache] = None,
) -> frozenset[int]:
    """Optimal collaborator set of ``result.target`` (always contains the target).

    Starts from the support of the SPO weights, checks that the support alone
    reproduces the utility, then drops members (smallest weight first) whose
    removal costs less than the utility margin relative to ``result``.
    """
    by_id = {c.id: c for c in coalition}
    target = result.target
    weight = {j: result.weight_of(j) for j in result.coalition}
    reference = result.val_utility
    margin = tol.delta(reference)

    def value(ids) -> float:
        return spo(target, [by_id[j] for j in ids], cfg, cache).val_utility

    current = {j for j, wj in weight.items() if wj > tol.eps_w} | {target}
    if current != set(weight) and value(current) < reference - margin:
        msg = (
            f"support {sorted(current)} of client {target}'s optimum does not "
            f"reproduce its utility; using the full coalition"
        )
        warnings.warn(msg, OcsFallbackWarning, stacklevel=2)
        log.warning(msg)
        current = set(weight)

    for j in sorted(current - {target}, key=lambda j: (weight[j], j)):
        trial = current - {j}
        if reference - value(trial) < margin:
            current = trial
    return frozenset(current)


# -- dominance and embedding --------------------------------------------------


class Dominance(str, Enum):
    A_DOMINATES = "a_dominates"
    B_DOMINATES = "b_dominates"
    INCOMPARABLE = "incomparable"
    EQUAL = "equal"


def check_dominance(a: Sequence[float], b: Sequence[float], tol: float = 1e-12) -> Dominance:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"loss vectors of shape {a.shape} and {b.shape}")
    diff = a - b
    if np.all(np.abs(diff) <= tol):
        return Dominance.EQUAL
    if np.all(diff <= tol):
        return Dominance.A_DOMINATES
    if np.all(diff >= -tol):
        return Dominance.B_DOMINATES
    return Dominance.INCOMPARABLE


def verify_embedding(
    sub: Sequence[Client],
    full: Sequence[Client],
    weights_sub: SimplexWeights,
    lam: float,
) -> float:
    """Max train-loss gap on ``sub`` between its own front point and the zero-padded full one."""
    pairs = sorted(zip(sub, weights_sub.weights), key=lambda cw: cw[0].id)
    sub = [c for c, _ in pairs]
    weights_sub = SimplexWeights(np.array([w for _, w in pairs]))
    full = sorted(full, key=lambda c: c.id)
    full_ids = [c.id for c in full]
    if not {c.id for c in sub} <= set(full_ids):
        raise ConfigError("sub is not contained in full")
    padded = np.zeros(len(full))
    for c, w in pairs:
        padded[full_ids.index(c.id)] = w
    h_sub = solve_scalarized(sub, weights_sub, lam)
    h_full = solve_scalarized(full, SimplexWeights(padded), lam)
    return max(abs(evaluate_mse(h_sub, c.train) - evaluate_mse(h_full, c.train)) for c in sub)
