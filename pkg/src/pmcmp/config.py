"""Engine configuration: defaults, JSON config file and environment overrides.

Precedence: built-in defaults < config file < PMCMP_* environment variables
< explicit overrides (CLI flags).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

MAX_QUEUE_RATE = 100.0

_ENV_PREFIX = "PMCMP_"


@dataclass
class EngineConfig:
    queue_rate: float = 4.0
    bucket_size: int = 10
    workers: int = 4
    chunk_budget: int = 1000
    max_retries: int = 3
    retention_days: float = 7.0
    cache_capacity: int = 256

    def __post_init__(self) -> None:
        if not 0 < self.queue_rate <= MAX_QUEUE_RATE:
            raise ValueError(
                f"queue_rate must be in (0, {MAX_QUEUE_RATE}], got {self.queue_rate}"
            )
        if self.bucket_size < 1:
            raise ValueError("bucket_size must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.chunk_budget < 1:
            raise ValueError("chunk_budget must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")


def load_config(
    config_file: str | None = None,
    env: dict | None = None,
    **overrides,
) -> EngineConfig:
    values: dict = {}
    if config_file:
        with open(config_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"{config_file}: config must be a JSON object")
        values.update(doc)

    env = os.environ if env is None else env
    for f in fields(EngineConfig):
        raw = env.get(_ENV_PREFIX + f.name.upper())
        if raw is not None:
            values[f.name] = raw

    for key, value in overrides.items():
        if value is not None:
            values[key] = value

    known = {f.name: f.type for f in fields(EngineConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    coerced = {}
    for f in fields(EngineConfig):
        if f.name not in values:
            continue
        raw = values[f.name]
        caster = float if f.name in ("queue_rate", "retention_days") else int
        coerced[f.name] = caster(raw)
    return EngineConfig(**coerced)
