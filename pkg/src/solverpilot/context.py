"""Simulation context: raw features transformed into the model input vector.

The schema is expert knowledge supplied by the user; each field names a raw
simulation quantity and the transformation applied to it. Array-valued raw
inputs are reduced (max or mean) before the log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, SchemaError

TRANSFORMS = ("identity", "log", "log_max", "log_mean")
_ARRAY_TRANSFORMS = ("log_max", "log_mean")


@dataclass(frozen=True)
class ContextField:
    """One context feature.

    ``source`` is the key in the raw input mapping; it defaults to ``name``
    and exists so that several features can reduce the same raw array in
    different ways.
    """

    name: str
    transform: str = "identity"
    arity: str = "scalar"
    source: str | None = None

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise SchemaError(f"field {self.name!r}: unknown transform {self.transform!r}")
        if self.arity not in ("scalar", "array"):
            raise SchemaError(f"field {self.name!r}: arity must be scalar or array")
        if self.transform in _ARRAY_TRANSFORMS and self.arity != "array":
            raise SchemaError(f"field {self.name!r}: {self.transform} requires array arity")
        if self.transform in ("identity", "log") and self.arity != "scalar":
            raise SchemaError(f"field {self.name!r}: {self.transform} requires scalar arity")

    @property
    def raw_key(self) -> str:
        return self.source if self.source is not None else self.name


@dataclass(frozen=True)
class ContextSchema:
    fields: tuple[ContextField, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("context field names must be unique")

    @property
    def dimension(self) -> int:
        return len(self.fields)

    def to_dict(self) -> list[dict]:
        return [
            {"name": f.name, "transform": f.transform, "arity": f.arity, "source": f.source}
            for f in self.fields
        ]

    @staticmethod
    def from_dict(doc: Sequence[Mapping]) -> "ContextSchema":
        return ContextSchema(
            tuple(
                ContextField(
                    name=d["name"],
                    transform=d.get("transform", "identity"),
                    arity=d.get("arity", "scalar"),
                    source=d.get("source"),
                )
                for d in doc
            )
        )


def _positive(values: np.ndarray, field: ContextField) -> None:
    if np.any(values <= 0.0):
        raise DomainError(
            f"field {field.name!r}: {field.transform} requires strictly positive inputs"
        )


def build_context(schema: ContextSchema, raw: Mapping[str, object]) -> np.ndarray:
    """Transform raw simulation values into the context vector, in schema order.

    A void schema yields the empty vector.
    """
    out = np.empty(schema.dimension, dtype=float)
    for i, field in enumerate(schema.fields):
        key = field.raw_key
        if key not in raw:
            raise SchemaError(f"raw context is missing field {key!r}")
        value = raw[key]
        if field.arity == "scalar":
            v = float(value)  # type: ignore[arg-type]
            if field.transform == "identity":
                out[i] = v
            else:
                if v <= 0.0:
                    raise DomainError(f"field {field.name!r}: log requires a positive input")
                out[i] = math.log(v)
        else:
            arr = np.asarray(value, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise SchemaError(f"field {field.name!r}: expected a non-empty 1-d array")
            _positive(arr, field)
            reduced = float(arr.max()) if field.transform == "log_max" else float(arr.mean())
            out[i] = math.log(reduced)
    return out
