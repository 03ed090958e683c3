"""Run configuration, bath construction from config, and artifact writers.

Numbers are written with ``repr``, the shortest decimal that round-trips the
double, so reruns are byte-identical and nothing is truncated.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import jsonschema

from .models import BATHS, BathSpec, Flat, HighCutoff, Lorentzian, ModelKind, make_baths

_POS = {"type": "number", "exclusiveMinimum": 0}
_RANGE = {
    "omega_c_min": _POS,
    "omega_c_max": _POS,
}

_FILTER = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "Flat"}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "HighCutoff"}, "omega_max": _POS},
            "required": ["type", "omega_max"],
            "additionalProperties": False,
        },
        {
            # cutoff that follows the bare work frequency omega_h - omega_c
            "type": "object",
            "properties": {
                "type": {"const": "HighCutoff"},
                "track": {"const": "omega_w"},
                "offset": {"type": "number"},
            },
            "required": ["type", "track"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "Lorentzian"}, "center": _POS, "width": _POS},
            "required": ["type", "center", "width"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "chiller run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "omega_h"],
            "properties": {
                "kind": {"enum": [k.value for k in ModelKind]},
                "omega_c": _POS,
                "omega_h": _POS,
                "g": {"type": "number", "minimum": 0},
                "kappa": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "baths": {
            "type": "array",
            "minItems": 3,
            "maxItems": 3,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["label", "T"],
                "properties": {
                    "label": {"enum": list(BATHS)},
                    "T": _POS,
                    "gamma": _POS,
                    "filter": _FILTER,
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **_RANGE,
                "n_points": {"type": "integer", "minimum": 2},
                "refine_edges": {"type": "boolean"},
            },
        },
        "breakdown": {
            "type": "object",
            "additionalProperties": False,
            "properties": {**_RANGE, "n_points": {"type": "integer", "minimum": 1}},
        },
        "optimize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **_RANGE,
                "n_grid": {"type": "integer", "minimum": 3},
                "xtol": _POS,
            },
        },
        "mcwf": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_trajectories": {"type": "integer", "minimum": 2},
                "duration": _POS,
            },
        },
        "fig2": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "g_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "open_g": {"type": "number", "exclusiveMinimum": 0},
                "share_g": {"type": "number", "exclusiveMinimum": 0},
                "n_points": {"type": "integer", "minimum": 2},
                "share_points": {"type": "integer", "minimum": 2},
            },
        },
    },
}


class ConfigError(ValueError):
    """Schema or semantic problem with a run configuration."""


def validate_config(cfg: Any) -> dict:
    """Validate against CONFIG_SCHEMA; the message names the offending key."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    labels = [b["label"] for b in cfg.get("baths", [])]
    if labels and sorted(labels) != sorted(BATHS):
        raise ConfigError(f"config error at baths: need exactly one of each label {BATHS}, got {labels}")
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return validate_config(cfg)


def config_digest(cfg: Mapping) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


REFERENCE_BATHS = [
    {"label": "w", "T": 9.0, "gamma": 1e-3},
    {"label": "h", "T": 8.0, "gamma": 1e-3},
    {"label": "c", "T": 7.0, "gamma": 1e-3},
]


@dataclass(frozen=True)
class ConfigBaths:
    """Bath factory ``omega_c -> {label: BathSpec}`` built from config entries."""

    entries: tuple[tuple[str, float, float, tuple], ...]
    omega_h: float

    @classmethod
    def from_config(cls, baths: Iterable[Mapping], omega_h: float) -> "ConfigBaths":
        entries = []
        for b in baths:
            f = b.get("filter", {"type": "Flat"})
            entries.append((b["label"], float(b["T"]), float(b.get("gamma", 1e-3)), tuple(sorted(f.items()))))
        return cls(tuple(entries), float(omega_h))

    @property
    def tracking(self) -> bool:
        return any(dict(f).get("track") for *_, f in self.entries)

    def __call__(self, omega_c: float) -> dict[str, BathSpec]:
        out = {}
        for label, T, gamma, f in self.entries:
            out[label] = BathSpec(label, T, gamma, self._filter(dict(f), omega_c))
        return out

    def _filter(self, f, omega_c):
        kind = f["type"]
        if kind == "Flat":
            return Flat()
        if kind == "Lorentzian":
            return Lorentzian(float(f["center"]), float(f["width"]))
        if "track" in f:
            if omega_c is None:
                raise ConfigError("a tracking cutoff needs omega_c")
            return HighCutoff(self.omega_h - omega_c + float(f.get("offset", 0.0)))
        return HighCutoff(float(f["omega_max"]))

    def temperatures(self) -> dict[str, float]:
        return {label: T for label, T, *_ in self.entries}


def reference_baths(gamma: float = 1e-3):
    return make_baths(9.0, 8.0, 7.0, gamma)


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    """CSV cell: ``repr`` for floats, empty for None, lowercase booleans."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x + 0.0)  # folds -0.0 into 0.0
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(x, "item") and callable(x.item):  # numpy scalar
        return _jsonable(x.item())
    return x


def write_json(path: Path, obj) -> Path:
    # json.dumps uses repr for floats, which round-trips
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path
