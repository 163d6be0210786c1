"""Online decision engine over per-group regression models.

Each configuration group owns its own model instance and its own
standardizer; scores are mapped back to raw reward units before groups are
compared, so the argmax is taken on a common scale. Exploration is either
explicit (epsilon-greedy with per-group decaying epsilon, used with the
boosting models) or implicit through the UCB variance term (GP policy).
Until a group has seen ``n_init`` observations it is served by uniform
random bootstrap draws.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import boosting, gp
from .errors import ConfigurationError, DataError
from .perf import Dataset, PerformanceRecord, fit_standardizer
from .space import ConfigGroup, SolverConfig, encode, enumerate_candidates, validate_config

MODEL_POLICIES = ("heuristic", "gp")
POLICY_KINDS = MODEL_POLICIES + ("random", "fixed")


@dataclass(frozen=True)
class SelectorPolicy:
    """Which decision rule to run and its hyperparameters."""

    kind: str = "heuristic"
    epsilon0: float = 0.5
    gamma: float = 0.9
    n_init: int = 3
    alpha: float = 2.0
    ucb_use_std: bool = False
    boosting_params: boosting.BoostingParams = field(default_factory=boosting.BoostingParams)
    gp_length_grid: tuple[float, float, int] = gp.DEFAULT_LENGTH_GRID
    gp_noise_grid: tuple[float, float, int] = gp.DEFAULT_NOISE_GRID
    fixed_config: SolverConfig | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ConfigurationError(f"epsilon0 must lie in [0, 1], got {self.epsilon0}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.n_init < 0:
            raise ConfigurationError(f"n_init must be >= 0, got {self.n_init}")
        if self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.kind == "fixed" and self.fixed_config is None:
            raise ConfigurationError("fixed policy requires fixed_config")


class GroupState:
    """Mutable per-group selection state: candidates, model, exploration."""

    def __init__(self, group: ConfigGroup, policy: SelectorPolicy, candidate_cap: int):
        self.group = group
        self.candidates = enumerate_candidates(group, cap=candidate_cap)
        if not self.candidates:
            raise ConfigurationError(f"group {group.group_id} has no candidates")
        self._values = np.array([c.numeric_values for c in self.candidates], dtype=float)
        if self._values.size == 0:
            self._values = self._values.reshape(len(self.candidates), 0)
        self.policy = policy
        self.model = None
        self.standardizer = None
        self.n_obs = 0
        self.explore_count = 0

    @property
    def group_id(self) -> int:
        return self.group.group_id

    @property
    def epsilon(self) -> float:
        # Recomputed from the explore count so that epsilon equals
        # epsilon0 * gamma^E to the last ulp.
        return self.policy.epsilon0 * self.policy.gamma**self.explore_count

    def record_exploration(self) -> None:
        self.explore_count += 1

    @property
    def needs_bootstrap(self) -> bool:
        # A model exists only once n_obs >= max(1, n_init); until then the
        # group can only be served randomly.
        return self.n_obs < max(1, self.policy.n_init)

    def query_matrix(self, context: np.ndarray) -> np.ndarray:
        """Encoded [numeric values, context] rows for every candidate."""
        ctx = np.tile(np.asarray(context, dtype=float), (len(self.candidates), 1))
        return np.hstack([self._values, ctx])

    def raw_scores(self, context: np.ndarray) -> np.ndarray:
        """Model scores per candidate, mapped back to raw reward units."""
        if self.model is None or self.standardizer is None:
            raise DataError(f"group {self.group_id} has no fitted model")
        Xq = self.standardizer.transform_features(self.query_matrix(context))
        if self.policy.kind == "gp":
            mean, var = gp.predict_batch(self.model, Xq)
            raw_mean = mean * self.standardizer.target_std + self.standardizer.target_mean
            raw_var = var * self.standardizer.target_std**2
            spread = np.sqrt(raw_var) if self.policy.ucb_use_std else raw_var
            return raw_mean + self.policy.alpha * spread
        pred = self.model.predict(Xq)
        return pred * self.standardizer.target_std + self.standardizer.target_mean


@dataclass(frozen=True)
class Decision:
    config: SolverConfig
    tag: str  # bootstrap | explore | exploit | ucb | random | fixed


@dataclass(frozen=True)
class ObserveResult:
    refit_seconds: float
    refit: bool
    gp_length_scale: float | None = None
    gp_noise: float | None = None
    gp_log_marginal: float | None = None


class Selector:
    """One selection loop instance; single-threaded by design."""

    def __init__(
        self,
        groups: Sequence[ConfigGroup],
        policy: SelectorPolicy,
        rng: np.random.Generator,
        candidate_cap: int = 10**6,
    ):
        if not groups:
            raise ConfigurationError("need at least one configuration group")
        self.policy = policy
        self.rng = rng
        self.states = [GroupState(g, policy, candidate_cap) for g in groups]
        self._by_id = {s.group_id: s for s in self.states}
        self.dataset = Dataset()
        if policy.kind == "fixed":
            state = self._by_id.get(policy.fixed_config.group_id)
            if state is None:
                raise ConfigurationError(
                    f"fixed config names unknown group {policy.fixed_config.group_id}"
                )
            validate_config(state.group, policy.fixed_config)

    def state(self, group_id: int) -> GroupState:
        try:
            return self._by_id[group_id]
        except KeyError:
            raise ConfigurationError(f"unknown group id {group_id}") from None

    # -- observation intake --------------------------------------------------

    def load_records(self, records: Sequence[PerformanceRecord]) -> None:
        """Warm start: import prior records, then fit every eligible group once."""
        for record in records:
            tagged = record if record.source == "imported" else replace(record, source="imported")
            state = self.state(record.group_id)
            self.dataset.append(tagged)
            state.n_obs += 1
        if self.policy.kind in MODEL_POLICIES:
            for state in self.states:
                if not state.needs_bootstrap and state.n_obs > 0:
                    self._refit(state)

    def observe(self, record: PerformanceRecord) -> ObserveResult:
        state = self.state(record.group_id)
        self.dataset.append(record)
        state.n_obs += 1
        if self.policy.kind not in MODEL_POLICIES or state.needs_bootstrap:
            return ObserveResult(refit_seconds=0.0, refit=False)
        return self._refit(state)

    def _refit(self, state: GroupState) -> ObserveResult:
        X, y = self.dataset.group_xy(state.group_id)
        start = time.perf_counter()
        standardizer = fit_standardizer(X, y)
        Xs = standardizer.transform_features(X)
        ys = standardizer.transform_targets(y)
        if self.policy.kind == "gp":
            model = gp.fit(
                Xs, ys,
                length_grid=self.policy.gp_length_grid,
                noise_grid=self.policy.gp_noise_grid,
            )
            elapsed = time.perf_counter() - start
            state.model, state.standardizer = model, standardizer
            return ObserveResult(
                refit_seconds=elapsed,
                refit=True,
                gp_length_scale=model.length_scale,
                gp_noise=model.noise,
                gp_log_marginal=model.log_marginal,
            )
        model = boosting.fit(Xs, ys, self.policy.boosting_params)
        elapsed = time.perf_counter() - start
        state.model, state.standardizer = model, standardizer
        return ObserveResult(refit_seconds=elapsed, refit=True)

    # -- decision rules -------------------------------------------------------

    def combined_explore_prob(self) -> float:
        """Probability that at least one group explores: 1 - prod(1 - eps_i)."""
        prod = 1.0
        for state in self.states:
            prod *= 1.0 - state.epsilon
        return 1.0 - prod

    def _random_candidate(self, state: GroupState) -> SolverConfig:
        return state.candidates[int(self.rng.integers(len(state.candidates)))]

    def _greedy_argmax(self, context: np.ndarray) -> SolverConfig:
        best_score = -np.inf
        best_config = None
        for state in self.states:  # ascending group_id: ties keep the lowest
            scores = state.raw_scores(context)
            i = int(np.argmax(scores))  # first index wins ties within a group
            if scores[i] > best_score:
                best_score = float(scores[i])
                best_config = state.candidates[i]
        return best_config

    def select(self, context: Sequence[float]) -> Decision:
        context = np.asarray(context, dtype=float)
        policy = self.policy

        if policy.kind == "fixed":
            return Decision(policy.fixed_config, "fixed")
        if policy.kind == "random":
            flat = [c for state in self.states for c in state.candidates]
            return Decision(flat[int(self.rng.integers(len(flat)))], "random")

        pending = [s for s in self.states if s.needs_bootstrap]
        if pending:
            state = pending[int(self.rng.integers(len(pending)))]
            return Decision(self._random_candidate(state), "bootstrap")

        if policy.kind == "gp":
            return Decision(self._greedy_argmax(context), "ucb")

        # Heuristic: independent per-group exploration draws; an exploring
        # group preempts every greedy prediction.
        exploring = [s for s in self.states if self.rng.random() < s.epsilon]
        if exploring:
            state = exploring[int(self.rng.integers(len(exploring)))]
            config = self._random_candidate(state)
            state.record_exploration()
            return Decision(config, "explore")
        return Decision(self._greedy_argmax(context), "exploit")
