"""Solver configuration spaces.

A space is a tree of decisions: categorical nodes branch into alternative
sub-solvers, numeric nodes attach a tunable parameter, leaves end a branch.
Flattening the tree gives one :class:`ConfigGroup` per combination of
categorical choices; each group carries the numeric parameters reachable
along its path. Numeric parameters are searched on a finite, evenly spaced
grid, so every group has a finite candidate list.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CapacityError, StructuralError

DEFAULT_GRID_POINTS = 20
DEFAULT_CANDIDATE_CAP = 10**6

_MAX_TREE_DEPTH = 1000


@dataclass(frozen=True)
class NumericParam:
    """A real- or integer-valued tuning parameter with a finite grid.

    Integer parameters are kept on a real grid and rounded at the point of
    use (see :func:`resolved_values`).
    """

    name: str
    lower: float
    upper: float
    grid_points: int = DEFAULT_GRID_POINTS
    integer: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise StructuralError(
                f"parameter {self.name!r}: lower ({self.lower}) must be < upper ({self.upper})"
            )
        if self.grid_points < 2:
            raise StructuralError(
                f"parameter {self.name!r}: grid_points must be >= 2, got {self.grid_points}"
            )


@dataclass(frozen=True)
class DecisionNode:
    """One node of a solver decision tree.

    kind is one of:
      * ``categorical``: ``children`` holds (label, branch) pairs, where a
        branch is the sequence of nodes that follow once the label is chosen.
      * ``numeric``: ``param`` holds the attached :class:`NumericParam`.
      * ``leaf``: terminates a branch, contributes nothing.
    """

    name: str
    kind: str
    children: tuple[tuple[str, tuple["DecisionNode", ...]], ...] = ()
    param: NumericParam | None = None

    @staticmethod
    def categorical(name: str, children: Sequence[tuple[str, Sequence["DecisionNode"]]]) -> "DecisionNode":
        return DecisionNode(
            name=name,
            kind="categorical",
            children=tuple((label, tuple(branch)) for label, branch in children),
        )

    @staticmethod
    def numeric(param: NumericParam) -> "DecisionNode":
        return DecisionNode(name=param.name, kind="numeric", param=param)

    @staticmethod
    def leaf(name: str = "leaf") -> "DecisionNode":
        return DecisionNode(name=name, kind="leaf")


@dataclass(frozen=True)
class ConfigGroup:
    """One combination of categorical choices plus its numeric parameters."""

    group_id: int
    cat_path: tuple[tuple[str, str], ...]
    numeric_params: tuple[NumericParam, ...]

    @property
    def label(self) -> str:
        if not self.cat_path:
            return "default"
        return "/".join(choice for _, choice in self.cat_path)


@dataclass(frozen=True)
class SolverConfig:
    """A fully specified solver: a group plus one value per numeric parameter."""

    group_id: int
    numeric_values: tuple[float, ...] = ()


def discretize(param: NumericParam) -> list[float]:
    """Evenly spaced grid over [lower, upper], both endpoints included."""
    return [float(v) for v in np.linspace(param.lower, param.upper, param.grid_points)]


def _validate_node(node: DecisionNode) -> None:
    if node.kind == "categorical":
        if not node.children:
            raise StructuralError(f"categorical node {node.name!r} has no children")
        if node.param is not None:
            raise StructuralError(f"categorical node {node.name!r} must not carry a param")
    elif node.kind == "numeric":
        if node.param is None:
            raise StructuralError(f"numeric node {node.name!r} is missing its param")
        if node.children:
            raise StructuralError(f"numeric node {node.name!r} must not have children")
    elif node.kind == "leaf":
        if node.children or node.param is not None:
            raise StructuralError(f"leaf node {node.name!r} must be empty")
    else:
        raise StructuralError(f"node {node.name!r} has unknown kind {node.kind!r}")


def enumerate_groups(space: DecisionNode | Sequence[DecisionNode]) -> list[ConfigGroup]:
    """Flatten a decision tree into its configuration groups.

    Groups are emitted depth-first in branch declaration order, so group ids
    are stable across runs for a given space.
    """
    roots = (space,) if isinstance(space, DecisionNode) else tuple(space)
    groups: list[ConfigGroup] = []

    def walk(pending: tuple[DecisionNode, ...], cat_path, params, depth: int) -> None:
        if depth > _MAX_TREE_DEPTH:
            raise StructuralError("decision tree exceeds maximum depth (cycle?)")
        if not pending:
            groups.append(ConfigGroup(len(groups), tuple(cat_path), tuple(params)))
            return
        node, rest = pending[0], pending[1:]
        _validate_node(node)
        if node.kind == "leaf":
            walk(rest, cat_path, params, depth + 1)
        elif node.kind == "numeric":
            walk(rest, cat_path, params + [node.param], depth + 1)
        else:
            for label, branch in node.children:
                walk(branch + rest, cat_path + [(node.name, label)], params, depth + 1)

    walk(roots, [], [], 0)
    return groups


def enumerate_candidates(group: ConfigGroup, cap: int = DEFAULT_CANDIDATE_CAP) -> list[SolverConfig]:
    """All grid combinations of a group's parameters, in lexicographic grid order.

    A group with no numeric parameters yields exactly one configuration.
    """
    size = 1
    for p in group.numeric_params:
        size *= p.grid_points
    if size > cap:
        raise CapacityError(
            f"group {group.group_id} has {size} candidates, exceeding the cap of {cap}"
        )
    if not group.numeric_params:
        return [SolverConfig(group.group_id)]
    grids = [discretize(p) for p in group.numeric_params]
    return [SolverConfig(group.group_id, values) for values in itertools.product(*grids)]


def validate_config(group: ConfigGroup, config: SolverConfig, tol: float = 1e-9) -> None:
    """Check that a config belongs to the group and all values lie on the grid."""
    if config.group_id != group.group_id:
        raise StructuralError(
            f"config group_id {config.group_id} does not match group {group.group_id}"
        )
    if len(config.numeric_values) != len(group.numeric_params):
        raise StructuralError(
            f"config has {len(config.numeric_values)} values, group expects "
            f"{len(group.numeric_params)}"
        )
    for value, param in zip(config.numeric_values, group.numeric_params):
        grid = discretize(param)
        if min(abs(value - g) for g in grid) > tol:
            raise StructuralError(
                f"value {value} for parameter {param.name!r} is not on its grid"
            )


def snap_to_grid(group: ConfigGroup, values: Sequence[float]) -> SolverConfig:
    """Build a config from raw values by snapping each to the nearest grid point."""
    if len(values) != len(group.numeric_params):
        raise StructuralError(
            f"expected {len(group.numeric_params)} values for group {group.group_id}, "
            f"got {len(values)}"
        )
    snapped = []
    for value, param in zip(values, group.numeric_params):
        grid = discretize(param)
        snapped.append(min(grid, key=lambda g: abs(g - value)))
    return SolverConfig(group.group_id, tuple(snapped))


def resolved_values(group: ConfigGroup, config: SolverConfig) -> list[float]:
    """Numeric values as handed to an actual solver: integer params rounded."""
    out = []
    for value, param in zip(config.numeric_values, group.numeric_params):
        out.append(float(round(value)) if param.integer else float(value))
    return out


def encode(config: SolverConfig, context: Sequence[float]) -> np.ndarray:
    """Feature vector for the regression models: numeric values then context.

    Categorical identity is deliberately absent: each group owns its own
    model instance, so the group never needs encoding.
    """
    return np.concatenate(
        [np.asarray(config.numeric_values, dtype=float), np.asarray(context, dtype=float)]
    )


# ---------------------------------------------------------------------------
# JSON document form
#
# node := {"name": str, "kind": "categorical",
#          "children": [{"label": str, "nodes": [node, ...]}, ...]}
#       | {"name": str, "kind": "numeric", "lower": f, "upper": f,
#          "grid_points": int, "integer": bool}
#       | {"name": str, "kind": "leaf"}
# document := node | {"nodes": [node, ...]}
# ---------------------------------------------------------------------------


def node_to_dict(node: DecisionNode) -> dict:
    if node.kind == "categorical":
        return {
            "name": node.name,
            "kind": "categorical",
            "children": [
                {"label": label, "nodes": [node_to_dict(n) for n in branch]}
                for label, branch in node.children
            ],
        }
    if node.kind == "numeric":
        p = node.param
        return {
            "name": node.name,
            "kind": "numeric",
            "lower": p.lower,
            "upper": p.upper,
            "grid_points": p.grid_points,
            "integer": p.integer,
        }
    return {"name": node.name, "kind": "leaf"}


def node_from_dict(doc: Mapping) -> DecisionNode:
    try:
        kind = doc["kind"]
        name = doc.get("name", kind)
        if kind == "categorical":
            children = [
                (c["label"], tuple(node_from_dict(n) for n in c.get("nodes", [])))
                for c in doc["children"]
            ]
            return DecisionNode(name=name, kind="categorical", children=tuple(children))
        if kind == "numeric":
            param = NumericParam(
                name=name,
                lower=float(doc["lower"]),
                upper=float(doc["upper"]),
                grid_points=int(doc.get("grid_points", DEFAULT_GRID_POINTS)),
                integer=bool(doc.get("integer", False)),
            )
            return DecisionNode(name=name, kind="numeric", param=param)
        if kind == "leaf":
            return DecisionNode(name=name, kind="leaf")
    except (KeyError, TypeError) as exc:
        raise StructuralError(f"malformed space document: {exc}") from exc
    raise StructuralError(f"unknown node kind {kind!r}")


def space_to_dict(space: DecisionNode | Sequence[DecisionNode]) -> dict:
    if isinstance(space, DecisionNode):
        return node_to_dict(space)
    return {"nodes": [node_to_dict(n) for n in space]}


def space_from_dict(doc: Mapping) -> DecisionNode | tuple[DecisionNode, ...]:
    if "nodes" in doc and "kind" not in doc:
        return tuple(node_from_dict(n) for n in doc["nodes"])
    return node_from_dict(doc)


def load_space(path) -> DecisionNode | tuple[DecisionNode, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        return space_from_dict(json.load(fh))


def dump_space(space: DecisionNode | Sequence[DecisionNode], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space_to_dict(space), fh, indent=2, sort_keys=True)
        fh.write("\n")
