"""Surrogate benchmark environments for exercising the selection loop.

No linear systems are solved here. Each scenario is a parametric cost model
that maps (configuration, simulation state) to a synthetic solve time with
multiplicative noise, so selection policies can be compared against an
oracle that knows the noise-free costs.

Two scenario families are provided:

* ``convex_param``: one configuration group with a single tunable parameter;
  the iteration count is a convex parabola in the parameter, so there is a
  unique grid optimum. The context is void.
* ``regime_switch``: two preconditioner families whose relative cost flips
  with a Peclet-like regime variable driven by a cyclic injection schedule;
  one family can fail at the control-switch steps. An extended mode expands
  the space to 19 groups via seeded per-group cost offsets.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .context import ContextField, ContextSchema, build_context
from .errors import ConfigurationError, DomainError
from .perf import Dataset, PerformanceRecord, RunningMax, compute_reward
from .selector import Selector, SelectorPolicy
from .space import (
    ConfigGroup,
    DecisionNode,
    NumericParam,
    SolverConfig,
    enumerate_candidates,
    enumerate_groups,
)

_T_SOL_FLOOR = 1e-9


@dataclass(frozen=True)
class SolveOutcome:
    """What the environment reports for one solve attempt."""

    t_sol: float
    success: bool
    newton_iters: int
    context_raw: dict


def dt_controller(
    prev_dt: float,
    newton_iters: int,
    dt_min: float = 1e-6,
    dt_max: float = 1e12,
) -> float:
    """Adapt the time step toward a target of 4 Newton iterations.

    The growth/shrink factor is clamped to [0.5, 2.0] per step and the result
    to [dt_min, dt_max].
    """
    if newton_iters <= 0:
        raise DomainError(f"newton_iters must be positive, got {newton_iters}")
    factor = min(2.0, max(0.5, 4.0 / newton_iters))
    return min(dt_max, max(dt_min, prev_dt * factor))


# ---------------------------------------------------------------------------
# Scenario A: convex response in one numeric parameter, void context.
# ---------------------------------------------------------------------------


class _StateA:
    __slots__ = ("step",)

    def __init__(self):
        self.step = 0


@dataclass(frozen=True)
class ConvexParamScenario:
    kind: str = "convex_param"
    n_steps: int = 100
    noise_rel: float = 0.05
    iters_min: float = 30.0
    iters_curvature: float = 170.0
    optimum: float = 0.6
    tau: float = 0.01
    lower: float = 0.0
    upper: float = 1.0
    grid_points: int = 20
    dt: float = 10.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        if self.noise_rel < 0.0:
            raise ConfigurationError("noise_rel must be >= 0")

    def solver_space(self) -> DecisionNode:
        return DecisionNode.numeric(
            NumericParam("stabilization", self.lower, self.upper, self.grid_points)
        )

    def context_schema(self) -> ContextSchema:
        return ContextSchema(())

    def initial_state(self) -> _StateA:
        return _StateA()

    def raw_context(self, state: _StateA) -> dict:
        return {}

    def iterations(self, value: float) -> int:
        return int(round(self.iters_min + self.iters_curvature * (value - self.optimum) ** 2))

    def expected_cost(self, state: _StateA, config: SolverConfig) -> float:
        return self.tau * self.iterations(config.numeric_values[0])

    def solve(self, state: _StateA, config: SolverConfig, rng: np.random.Generator) -> SolveOutcome:
        base = self.expected_cost(state, config)
        t_sol = max(_T_SOL_FLOOR, base * (1.0 + self.noise_rel * rng.standard_normal()))
        return SolveOutcome(t_sol=float(t_sol), success=True, newton_iters=4, context_raw={})

    def advance(self, state: _StateA, outcome: SolveOutcome) -> None:
        state.step += 1


# ---------------------------------------------------------------------------
# Scenario B: two preconditioner families, regime driven by an injection
# schedule, failures at control-switch steps.
# ---------------------------------------------------------------------------


class _StateB:
    __slots__ = ("step", "dt")

    def __init__(self, dt: float):
        self.step = 0
        self.dt = dt


@dataclass(frozen=True)
class RegimeSwitchScenario:
    kind: str = "regime_switch"
    n_steps: int = 300
    noise_rel: float = 0.05
    base_cost: float = 0.05
    beta_cpr: float = 2.0
    beta_schur: float = 0.05
    cpr_scale: float = 1.0
    schur_scale: float = 1.0
    direct_cost: float = 0.12
    fail_prob: float = 0.5
    fail_time_factor: float = 4.0
    pe_high: float = 40.0
    pe_low: float = 0.5
    pe_decay: float = 0.3
    injection_starts: tuple[int, ...] = (0, 100, 200)
    injection_length: int = 20
    rate_control_length: int = 10
    rate_max: float = 1e-3
    rate_floor: float = 1e-6
    dt0: float = 10.0
    dt_min: float = 0.1
    dt_max: float = 1e4
    extended: bool = False
    offset_low: float = 0.9
    offset_high: float = 1.5
    offset_seed: int = 7

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        if self.noise_rel < 0.0:
            raise ConfigurationError("noise_rel must be >= 0")
        if not 0.0 <= self.fail_prob <= 1.0:
            raise ConfigurationError("fail_prob must lie in [0, 1]")

    # -- configuration space -------------------------------------------------

    def solver_space(self) -> DecisionNode:
        if not self.extended:
            return DecisionNode.categorical(
                "preconditioner", [("cpr", ()), ("schur", ())]
            )
        factorization = DecisionNode.categorical(
            "factorization", [("lower", ()), ("upper", ()), ("full", ())]
        )
        inner = lambda name: DecisionNode.categorical(name, [("amg", ()), ("gmres_amg", ())])
        return DecisionNode.categorical(
            "krylov",
            [
                (
                    "gmres",
                    (
                        DecisionNode.categorical(
                            "preconditioner",
                            [("schur", (factorization,)), ("cpr", ())],
                        ),
                    ),
                ),
                (
                    "fgmres",
                    (
                        DecisionNode.categorical(
                            "preconditioner",
                            [
                                (
                                    "schur",
                                    (factorization, inner("thermal_solver"), inner("flow_solver")),
                                ),
                                ("cpr", (inner("flow_solver"),)),
                            ],
                        ),
                    ),
                ),
                ("direct", ()),
            ],
        )

    def group_families(self) -> list[str]:
        """Cost-model family of each group, in group-id order."""
        families = []
        for group in enumerate_groups(self.solver_space()):
            choices = dict(group.cat_path)
            if choices.get("krylov") == "direct":
                families.append("direct")
            else:
                families.append(choices["preconditioner"])
        return families

    def group_offsets(self) -> np.ndarray:
        n = len(self.group_families())
        if not self.extended:
            return np.ones(n)
        rng = np.random.default_rng(self.offset_seed)
        return rng.uniform(self.offset_low, self.offset_high, size=n)

    def context_schema(self) -> ContextSchema:
        return ContextSchema(
            (
                ContextField("dt", "log", "scalar"),
                ContextField("peclet_max", "log_max", "array", source="peclet"),
                ContextField("peclet_mean", "log_mean", "array", source="peclet"),
                ContextField("injection_rate", "log", "scalar"),
                ContextField("production_rate", "log", "scalar"),
                ContextField("well_active", "identity", "scalar"),
            )
        )

    # -- schedule ------------------------------------------------------------

    def _window_phase(self, step: int) -> tuple[str, int]:
        """(phase, steps into phase): rate | pressure | off."""
        for start in self.injection_starts:
            if start <= step < start + self.rate_control_length:
                return "rate", step - start
            if start + self.rate_control_length <= step < start + self.injection_length:
                return "pressure", step - start - self.rate_control_length
        return "off", 0

    def is_switch_step(self, step: int) -> bool:
        """First pressure-controlled step of each injection window."""
        return any(step == s + self.rate_control_length for s in self.injection_starts)

    def peclet(self, step: int) -> float:
        phase, k = self._window_phase(step)
        if phase == "rate":
            return self.pe_high
        if phase == "pressure":
            return max(self.pe_low, self.pe_high * math.exp(-self.pe_decay * (k + 1)))
        return self.pe_low

    def injection_rate(self, step: int) -> float:
        phase, k = self._window_phase(step)
        if phase == "rate":
            return self.rate_max
        if phase == "pressure":
            return max(self.rate_floor, self.rate_max * math.exp(-self.pe_decay * (k + 1)))
        return self.rate_floor

    def well_active(self, step: int) -> float:
        return 0.0 if self._window_phase(step)[0] == "off" else 1.0

    @property
    def pe_crossover(self) -> float:
        """Regime value at which the two base cost models are equal."""
        return math.sqrt(
            (self.beta_cpr * self.cpr_scale)
            / (self.beta_schur * self.schur_scale)
            * (self.cpr_scale / self.cpr_scale)
        )

    # -- costs ---------------------------------------------------------------

    def _base_time(self, step: int, group_id: int) -> float:
        family = self.group_families()[group_id]
        offset = float(self.group_offsets()[group_id])
        pe = self.peclet(step)
        if family == "cpr":
            return self.base_cost * self.cpr_scale * offset * (1.0 + self.beta_cpr / pe)
        if family == "schur":
            return self.base_cost * self.schur_scale * offset * (1.0 + self.beta_schur * pe)
        return self.direct_cost * offset

    def expected_cost(self, state: _StateB, config: SolverConfig) -> float:
        """Noise-free expected solve time, failure risk included."""
        t = self._base_time(state.step, config.group_id)
        family = self.group_families()[config.group_id]
        if family == "cpr" and self.is_switch_step(state.step):
            t = (1.0 - self.fail_prob) * t + self.fail_prob * self.fail_time_factor * t
        return t

    def newton_iterations(self, step: int, rng: np.random.Generator) -> int:
        drift = math.tanh(math.log(self.peclet(step)) - math.log(self.pe_crossover))
        base = int(round(4.0 * (1.0 + 0.5 * drift)))
        return max(1, base + int(rng.integers(-1, 2)))

    def initial_state(self) -> _StateB:
        return _StateB(self.dt0)

    def raw_context(self, state: _StateB) -> dict:
        pe = self.peclet(state.step)
        return {
            "dt": state.dt,
            "peclet": [0.5 * pe, pe, 2.0 * pe],
            "injection_rate": self.injection_rate(state.step),
            "production_rate": max(self.rate_floor, 0.8 * self.injection_rate(state.step)),
            "well_active": self.well_active(state.step),
        }

    def solve(self, state: _StateB, config: SolverConfig, rng: np.random.Generator) -> SolveOutcome:
        raw = self.raw_context(state)
        newton = self.newton_iterations(state.step, rng)
        family = self.group_families()[config.group_id]
        base = self._base_time(state.step, config.group_id)
        failed = (
            family == "cpr"
            and self.is_switch_step(state.step)
            and float(rng.random()) < self.fail_prob
        )
        if failed:
            base = self.fail_time_factor * base
        t_sol = max(_T_SOL_FLOOR, base * (1.0 + self.noise_rel * rng.standard_normal()))
        return SolveOutcome(
            t_sol=float(t_sol), success=not failed, newton_iters=newton, context_raw=raw
        )

    def advance(self, state: _StateB, outcome: SolveOutcome) -> None:
        state.dt = dt_controller(state.dt, outcome.newton_iters, self.dt_min, self.dt_max)
        state.step += 1


Scenario = ConvexParamScenario | RegimeSwitchScenario


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    doc = {}
    for name in scenario.__dataclass_fields__:
        value = getattr(scenario, name)
        doc[name] = list(value) if isinstance(value, tuple) else value
    return doc


def scenario_from_dict(doc: Mapping) -> Scenario:
    doc = dict(doc)
    kind = doc.get("kind")
    if kind == "convex_param":
        cls = ConvexParamScenario
    elif kind == "regime_switch":
        cls = RegimeSwitchScenario
    else:
        raise ConfigurationError(f"unknown scenario kind {kind!r}")
    known = set(cls.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown scenario fields: {sorted(unknown)}")
    if "injection_starts" in doc:
        doc["injection_starts"] = tuple(int(v) for v in doc["injection_starts"])
    return cls(**doc)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")


def scenario_hash(scenario: Scenario) -> str:
    canonical = json.dumps(scenario_to_dict(scenario), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Episode driver
# ---------------------------------------------------------------------------

ORACLE = "oracle"


@dataclass(frozen=True)
class TraceRow:
    step: int
    group_id: int
    numeric_values: tuple[float, ...]
    tag: str
    epsilon: float | None
    explore_prob: float | None
    reward: float
    t_sol: float
    success: bool
    cumulative_t_sol: float
    gp_length_scale: float | None
    gp_noise: float | None
    gp_log_marginal: float | None


@dataclass
class EpisodeTrace:
    policy_label: str
    seed: int
    scenario_digest: str
    rows: list[TraceRow] = field(default_factory=list)
    refit_seconds: list[float] = field(default_factory=list)

    @property
    def cumulative_t_sol(self) -> float:
        return self.rows[-1].cumulative_t_sol if self.rows else 0.0

    def tag_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for row in self.rows:
            counts[row.tag] = counts.get(row.tag, 0) + 1
        return counts

    @property
    def failure_count(self) -> int:
        return sum(1 for row in self.rows if not row.success)


def run_episode(
    scenario: Scenario,
    policy: SelectorPolicy | str,
    seed: int,
    warm_records: Sequence[PerformanceRecord] | None = None,
    policy_label: str | None = None,
) -> tuple[EpisodeTrace, Dataset]:
    """Drive one seeded episode of the selection loop over a scenario.

    ``policy`` may be a :class:`SelectorPolicy` or the string ``"oracle"``
    for the noise-free per-step optimum, which serves as the regret
    reference. Deterministic for a fixed (scenario, policy, seed).
    """
    rng = np.random.default_rng(seed)
    schema = scenario.context_schema()
    groups = enumerate_groups(scenario.solver_space())
    oracle_mode = isinstance(policy, str)
    if oracle_mode:
        if policy != ORACLE:
            raise ConfigurationError(f"unknown policy {policy!r}")
        candidates = [(g, enumerate_candidates(g)) for g in groups]
        selector = None
        label = policy_label or ORACLE
        dataset = Dataset()
    else:
        selector = Selector(groups, policy, rng)
        if warm_records:
            selector.load_records(warm_records)
        label = policy_label or policy.kind
        dataset = selector.dataset

    trace = EpisodeTrace(policy_label=label, seed=seed, scenario_digest=scenario_hash(scenario))
    running_max = RunningMax()
    state = scenario.initial_state()
    cumulative = 0.0

    for step in range(scenario.n_steps):
        ctx = build_context(schema, scenario.raw_context(state))
        epsilon = None
        explore_prob = None
        if oracle_mode:
            config = None
            best = math.inf
            for group, cands in candidates:
                for cand in cands:
                    cost = scenario.expected_cost(state, cand)
                    if cost < best:
                        best, config = cost, cand
            tag = ORACLE
        else:
            if policy.kind == "heuristic":
                explore_prob = selector.combined_explore_prob()
            decision = selector.select(ctx)
            config, tag = decision.config, decision.tag

        outcome = scenario.solve(state, config, rng)
        reward = compute_reward(outcome.t_sol if outcome.success else None, outcome.success, running_max)
        record = PerformanceRecord(
            group_id=config.group_id,
            numeric_values=tuple(float(v) for v in config.numeric_values),
            context=tuple(float(v) for v in ctx),
            t_sol=outcome.t_sol if outcome.success else None,
            success=outcome.success,
            reward=reward,
            step_index=step,
        )
        if oracle_mode:
            dataset.append(record)
            observed = None
        else:
            observed = selector.observe(record)
            if policy.kind == "heuristic":
                epsilon = selector.state(config.group_id).epsilon

        cumulative += outcome.t_sol
        trace.rows.append(
            TraceRow(
                step=step,
                group_id=config.group_id,
                numeric_values=tuple(float(v) for v in config.numeric_values),
                tag=tag,
                epsilon=epsilon,
                explore_prob=explore_prob,
                reward=reward,
                t_sol=outcome.t_sol,
                success=outcome.success,
                cumulative_t_sol=cumulative,
                gp_length_scale=observed.gp_length_scale if observed else None,
                gp_noise=observed.gp_noise if observed else None,
                gp_log_marginal=observed.gp_log_marginal if observed else None,
            )
        )
        trace.refit_seconds.append(observed.refit_seconds if observed else 0.0)
        scenario.advance(state, outcome)

    return trace, dataset
