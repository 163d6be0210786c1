"""Performance records, rewards, standardization, and warm-start persistence.

The reward of a successful solve is the negative natural log of its solve
time; a failed solve is penalized with the negative log of twice the largest
solve time seen so far, which is strictly worse than any observed success.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import DataError, DomainError, ParseError

DATASET_SCHEMA_VERSION = 1
_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class PerformanceRecord:
    """One observation: the configuration tried, its context, and the outcome."""

    group_id: int
    numeric_values: tuple[float, ...]
    context: tuple[float, ...]
    t_sol: float | None
    success: bool
    reward: float
    step_index: int
    source: str = "online"

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "numeric_values": list(self.numeric_values),
            "context": list(self.context),
            "t_sol": self.t_sol,
            "success": self.success,
            "reward": self.reward,
            "step_index": self.step_index,
            "source": self.source,
        }

    @staticmethod
    def from_dict(doc: dict) -> "PerformanceRecord":
        return PerformanceRecord(
            group_id=int(doc["group_id"]),
            numeric_values=tuple(float(v) for v in doc["numeric_values"]),
            context=tuple(float(v) for v in doc["context"]),
            t_sol=None if doc["t_sol"] is None else float(doc["t_sol"]),
            success=bool(doc["success"]),
            reward=float(doc["reward"]),
            step_index=int(doc["step_index"]),
            source=str(doc.get("source", "online")),
        )


class RunningMax:
    """Largest successful solve time seen so far; drives the failure penalty.

    The floor keeps the penalty defined even when the very first event of a
    run is a failure.
    """

    def __init__(self, floor: float = 1.0):
        self.max_t_sol = float(floor)

    def update(self, t_sol: float) -> None:
        if t_sol > self.max_t_sol:
            self.max_t_sol = float(t_sol)


def compute_reward(t_sol: float | None, success: bool, running_max: RunningMax) -> float:
    """Reward of one solve attempt; updates the running max on success."""
    if success:
        if t_sol is None or t_sol <= 0.0:
            raise DomainError(f"successful solve requires t_sol > 0, got {t_sol}")
        running_max.update(t_sol)
        return -math.log(t_sol)
    return -math.log(2.0 * running_max.max_t_sol)


class Dataset:
    """Append-only store of performance records with a per-group index.

    Imported (warm-start) and online records coexist without distinction in
    model fitting.
    """

    def __init__(self, records: Iterable[PerformanceRecord] = ()):
        self.records: list[PerformanceRecord] = []
        self._by_group: dict[int, list[int]] = {}
        for r in records:
            self.append(r)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: PerformanceRecord) -> None:
        self._by_group.setdefault(record.group_id, []).append(len(self.records))
        self.records.append(record)

    def group_records(self, group_id: int) -> list[PerformanceRecord]:
        return [self.records[i] for i in self._by_group.get(group_id, [])]

    def group_size(self, group_id: int) -> int:
        return len(self._by_group.get(group_id, []))

    def group_xy(self, group_id: int) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix (numeric values then context) and reward vector."""
        records = self.group_records(group_id)
        if not records:
            raise DataError(f"no records for group {group_id}")
        X = np.array([list(r.numeric_values) + list(r.context) for r in records], dtype=float)
        y = np.array([r.reward for r in records], dtype=float)
        return X, y


@dataclass(frozen=True)
class Standardizer:
    """Zero-mean unit-variance transform for features and reward targets.

    Uses the population standard deviation; dimensions with (near) zero
    variance keep std 1 so the transform stays invertible.
    """

    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float

    def transform_features(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_means) / self.feature_stds

    def transform_targets(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def untransform_targets(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.target_std + self.target_mean

    def untransform_mean(self, mean: float) -> float:
        return float(mean) * self.target_std + self.target_mean

    def untransform_variance(self, variance: float) -> float:
        return float(variance) * self.target_std**2


def fit_standardizer(points: np.ndarray, targets: np.ndarray) -> Standardizer:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(targets, dtype=float)
    if X.shape[0] == 0 or y.shape[0] == 0:
        raise DataError("cannot fit a standardizer on empty data")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < _STD_FLOOR, 1.0, stds)
    t_std = float(y.std())
    if t_std < _STD_FLOOR:
        t_std = 1.0
    return Standardizer(means, stds, float(y.mean()), t_std)


# ---------------------------------------------------------------------------
# Persistence: UTF-8, one JSON object per line, preceded by a header line
# {"schema": 1}. Append-friendly and diffable.
# ---------------------------------------------------------------------------


def dumps_dataset(dataset: Dataset) -> str:
    lines = [json.dumps({"schema": DATASET_SCHEMA_VERSION})]
    lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in dataset.records)
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_dataset(dataset))


def loads_dataset(text: str) -> Dataset:
    """Parse a persisted dataset; every loaded record is tagged as imported."""
    dataset = Dataset()
    lines = text.splitlines()
    if not lines or all(not line.strip() for line in lines):
        return dataset
    start = 0
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=1) from exc
    if isinstance(header, dict) and "schema" in header and "group_id" not in header:
        if header["schema"] != DATASET_SCHEMA_VERSION:
            raise ParseError(f"unsupported schema version {header['schema']}", line=1)
        start = 1
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            record = PerformanceRecord.from_dict(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad record: {exc}", line=lineno) from exc
        dataset.append(replace(record, source="imported"))
    return dataset


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_dataset(fh.read())
