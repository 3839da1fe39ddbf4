"""Training-set selection: uniform random, furthest-point and gradient-guided
furthest-point sampling.

FPS greedily picks the point whose minimum descriptor distance to the
already-selected set is largest. GGFPS multiplies that distance by the
candidate's gradient norm raised to an iteration-dependent exponent, so the
selection can be biased toward (or away from) high-force regions while the
exponent sweep keeps early picks covering both extremes. Minimum distances
are maintained incrementally; the full pairwise matrix is never built.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledSet, dumps_17g

METHODS = ("URS", "FPS", "GGFPS")
BETA_MODES = ("swept", "constant")
INIT_MODES = ("random_uniform", "gradient_weighted", "gradient_argmax")


class CapacityError(ValueError):
    """Requested more samples than the pool holds."""


class SelectionStateError(ValueError):
    """Attempted an update that contradicts the selection state."""


@dataclass(frozen=True)
class SamplerConfig:
    method: str
    n: int
    beta: float = 0.0
    beta_mode: str = "swept"
    init_mode: str | None = None
    seed: int = 0
    grad_floor_rel: float = 1e-12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method: must be one of {METHODS}, got {self.method!r}")
        if self.n < 1:
            raise ValueError("n: must be >= 1")
        if self.beta < 0:
            raise ValueError("beta: must be nonnegative")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode: must be one of {BETA_MODES}")
        if self.grad_floor_rel < 0:
            raise ValueError("grad_floor_rel: must be nonnegative")
        if self.init_mode is None:
            default = "gradient_weighted" if self.method == "GGFPS" else "random_uniform"
            object.__setattr__(self, "init_mode", default)
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode: must be one of {INIT_MODES}")
        if self.method != "GGFPS" and self.init_mode != "random_uniform":
            raise ValueError("init_mode: gradient-based initialization requires method GGFPS")


@dataclass(frozen=True)
class BetaSchedule:
    """Per-iteration exponent sequence derived from the sweep bound beta."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class SelectionState:
    """Growing index set plus incrementally maintained minimum distances.

    ``remaining`` is a boolean mask over all indices (True = not yet
    selected); ``min_dist[j]`` is the distance from j to the closest
    selected point, +inf before the first selection.
    """

    selected: list[int]
    remaining: np.ndarray
    min_dist: np.ndarray

    @classmethod
    def fresh(cls, n_total: int) -> "SelectionState":
        return cls(
            selected=[],
            remaining=np.ones(n_total, dtype=bool),
            min_dist=np.full(n_total, np.inf),
        )


def min_dist_update(state: SelectionState, new_index: int, X: np.ndarray) -> SelectionState:
    """Move ``new_index`` into the selected set and tighten minimum distances.

    Returns a new state; for every remaining j, min_dist[j] becomes
    min(min_dist[j], ||x_j - x_new||).
    """
    new_index = int(new_index)
    if not state.remaining[new_index]:
        raise SelectionStateError(f"index {new_index} is already selected")
    remaining = state.remaining.copy()
    remaining[new_index] = False
    dist_to_new = np.linalg.norm(X - X[new_index], axis=1)
    min_dist = np.minimum(state.min_dist, dist_to_new)
    return SelectionState(
        selected=state.selected + [new_index],
        remaining=remaining,
        min_dist=min_dist,
    )


def urs(n_total: int, n: int, seed: int) -> list[int]:
    """n distinct indices drawn uniformly without replacement, deterministic per seed.

    Implemented as a prefix of a seeded permutation, so a shorter draw with
    the same seed is a prefix of a longer one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > n_total:
        raise CapacityError(f"cannot draw {n} from {n_total} samples")
    perm = np.random.default_rng(seed).permutation(n_total)
    return [int(i) for i in perm[:n]]


def beta_schedule(beta: float, n: int, mode: str = "swept") -> BetaSchedule:
    """Exponent sequence for n selections.

    Swept mode takes the n linearly spaced values over [-beta, beta] and
    reorders them by descending magnitude with alternating signs starting
    positive: {+beta, -beta, ...} decaying toward 0, so the earliest
    selections see both extreme exponents. Constant mode repeats beta.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "constant":
        return BetaSchedule(np.full(n, float(beta)))
    if mode != "swept":
        raise ValueError(f"mode: must be one of {BETA_MODES}")
    magnitudes = np.sort(np.abs(np.linspace(-beta, beta, n)))[::-1]
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return BetaSchedule(magnitudes * signs + 0.0)


def _validate_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("descriptor matrix must be 2-D")
    if not np.isfinite(X).all():
        raise ValueError("descriptor matrix must be finite")
    return X


def fps(X: np.ndarray, n: int, init: int | None = None, seed: int = 0) -> list[int]:
    """Furthest point sampling over descriptor rows.

    Starts from ``init`` (or a uniform-random index per ``seed``), then
    repeatedly selects the remaining index with the largest minimum distance
    to the selected set, ties broken by smallest index.
    """
    X = _validate_matrix(X)
    n_total = X.shape[0]
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > n_total:
        raise CapacityError(f"cannot select {n} from {n_total} samples")
    if init is None:
        init = int(np.random.default_rng(seed).integers(n_total))
    state = SelectionState.fresh(n_total)
    state = min_dist_update(state, init, X)
    while len(state.selected) < n:
        cand = np.where(state.remaining, state.min_dist, -np.inf)
        state = min_dist_update(state, int(np.argmax(cand)), X)
    return state.selected


def ggfps(
    labeled: LabeledSet,
    config: SamplerConfig,
    init: int | None = None,
    horizon: int | None = None,
) -> "SelectionResult":
    """Gradient-guided furthest point sampling.

    The initial point follows ``config.init_mode``: drawn with probability
    proportional to the gradient norms, taken as their argmax, or uniform.
    Iteration k then maximises g_j^beta_k * d_j over the remaining points
    (smallest index on ties), with beta_k from the schedule and d_j the
    incrementally maintained minimum distance. Scores are compared in the
    log domain so large norms and |beta| up to 2 cannot overflow.

    ``horizon`` pins the schedule length independently of n (default n), so
    shorter runs sharing a horizon are prefixes of longer ones. An explicit
    ``init`` index overrides the configured initialization.
    """
    if config.method != "GGFPS":
        raise ValueError("config.method must be GGFPS")
    X = _validate_matrix(labeled.descriptors)
    g = labeled.gradient_norms
    n_total = X.shape[0]
    n = config.n
    if n > n_total:
        raise CapacityError(f"cannot select {n} from {n_total} samples")
    if horizon is None:
        horizon = n
    if horizon < n:
        raise ValueError("horizon must be at least n")
    schedule = beta_schedule(config.beta, horizon, config.beta_mode).values

    warnings: list[str] = []
    rng = np.random.default_rng(config.seed)
    if init is None:
        init_mode = config.init_mode
        if init_mode == "gradient_weighted" and not np.any(g > 0):
            warnings.append("all gradient norms are zero; fell back to random_uniform init")
            init_mode = "random_uniform"
        if init_mode == "gradient_weighted":
            probs = g / g.sum()
            init = int(rng.choice(n_total, p=probs))
        elif init_mode == "gradient_argmax":
            init = int(np.argmax(g))
        else:
            init = int(rng.integers(n_total))
    else:
        init = int(init)

    # Floor the norms so negative exponents stay finite; relative to max(g)
    # the floor preserves the ordering of all nonzero norms.
    gmax = float(g.max()) if len(g) else 0.0
    floor = config.grad_floor_rel * gmax if gmax > 0 else np.finfo(float).tiny
    floor = max(floor, np.finfo(float).tiny)
    log_g = np.log(np.maximum(g, floor))

    state = SelectionState.fresh(n_total)
    state = min_dist_update(state, init, X)
    k = 1
    with np.errstate(divide="ignore"):
        while len(state.selected) < n:
            beta_k = schedule[k]  # entry 0 belongs to the initial point
            if beta_k == 0.0:
                score = state.min_dist
            else:
                score = beta_k * log_g + np.log(state.min_dist)
            score = np.where(state.remaining, score, -np.inf)
            state = min_dist_update(state, int(np.argmax(score)), X)
            k += 1
    return SelectionResult(
        method="GGFPS",
        seed=config.seed,
        beta=config.beta,
        beta_mode=config.beta_mode,
        init_mode=config.init_mode,
        indices=state.selected,
        warnings=warnings,
    )


@dataclass(frozen=True)
class SelectionResult:
    """A selection run plus the configuration that produced it."""

    method: str
    seed: int
    beta: float | None
    beta_mode: str | None
    init_mode: str | None
    indices: list[int]
    warnings: list[str] = field(default_factory=list)

    def to_json(self, indent: int | None = None) -> str:
        doc = {
            "method": self.method,
            "seed": self.seed,
            "beta": self.beta,
            "beta_mode": self.beta_mode,
            "init_mode": self.init_mode,
            "indices": [int(i) for i in self.indices],
            "warnings": list(self.warnings),
        }
        return dumps_17g(doc, indent=indent) + "\n"


def select(labeled: LabeledSet, config: SamplerConfig) -> SelectionResult:
    """Run the configured sampler over a labeled set."""
    if config.method == "URS":
        indices = urs(len(labeled), config.n, config.seed)
        return SelectionResult(
            method="URS", seed=config.seed, beta=None, beta_mode=None,
            init_mode=None, indices=indices,
        )
    if config.method == "FPS":
        indices = fps(labeled.descriptors, config.n, seed=config.seed)
        return SelectionResult(
            method="FPS", seed=config.seed, beta=None, beta_mode=None,
            init_mode=config.init_mode, indices=indices,
        )
    return ggfps(labeled, config)
