"""JSON run configuration: schema validation, canonical hashing, table building."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .quadrature import QuadratureSettings
from .table import Obstacle, TableConfig


@dataclass(frozen=True)
class RunConfig:
    table: TableConfig
    seed: int | None
    quadrature: QuadratureSettings
    opposite_map: dict[int, int] = field(default_factory=dict)
    config_hash: str = ""


def schema() -> dict:
    return json.loads(resources.files("hornbilliard").joinpath("data/config.schema.json").read_text())


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(doc) -> str:
    """sha256 of the canonical JSON form (first 16 hex digits)."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:16]


def _field_path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def build(doc: dict) -> RunConfig:
    """Validate a parsed document and build the run configuration."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_field_path(e)}: {e.message}" for e in errors]
        raise ConfigError("schema violation:\n  " + "\n  ".join(lines))
    t = doc["table"]
    obstacles = tuple(
        Obstacle(tuple(o["center"]), o["radius"], o.get("beta") if o["kind"] == "horn" else None)
        for o in t["obstacles"]
    )
    table = TableConfig(t["kind"], t["width"], t["height"], obstacles, t.get("length_cap"))
    q = QuadratureSettings(**doc.get("quadrature", {}))
    opp = {int(k): int(v) for k, v in doc.get("opposite_map", {}).items()}
    for k, v in opp.items():
        if not (0 <= k < len(obstacles) and 0 <= v < len(obstacles)):
            raise ConfigError(f"opposite_map/{k}: obstacle index out of range")
    return RunConfig(table, doc.get("seed"), q, opp, config_hash(doc))


def read_doc(path) -> dict:
    """Parsed JSON document; syntax errors report line and column."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def shipped_doc(name: str) -> dict:
    path = resources.files("hornbilliard").joinpath(f"data/{name}.json")
    if not path.is_file():
        raise ConfigError(f"no shipped configuration {name!r}")
    return json.loads(path.read_text())


def parse_config(path) -> RunConfig:
    return build(read_doc(path))


def load_shipped(name: str) -> RunConfig:
    """A configuration shipped with the package (e.g. ``reference``)."""
    return build(shipped_doc(name))
