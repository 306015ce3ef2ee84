"""Config resolution and run manifests.

Precedence for every key: CLI flag > environment variable > config file >
built-in default. The resolved config is hashed (canonical JSON, secrets
excluded) into the run manifest so any run can be reproduced.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .assembler import DEFAULT_GENERAL_INSTRUCTION, DEFAULT_QUERY_INSTRUCTION_FORMAT

TOOL_VERSION = "0.1.0"

ENV_KEYS = {
    "LLM_ENDPOINT": "llm_endpoint",
    "LLM_API_KEY": "llm_api_key",
}


@dataclass
class ToolConfig:
    llm_endpoint: str | None = None
    llm_api_key: str | None = None
    retry_limit: int = 2
    backoff_base: float = 0.5
    max_in_flight: int = 4
    similarity_threshold: float = 0.65
    similarity_baseline: float = 0.0
    failure_cap: float = 0.05
    workers: int = 1
    seed: int = 0
    general_instruction: str = DEFAULT_GENERAL_INSTRUCTION
    query_instruction_format: str = DEFAULT_QUERY_INSTRUCTION_FORMAT
    template_overrides: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def resolve_config(
    config_path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ToolConfig:
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(file_values) - {f.name for f in dataclasses.fields(ToolConfig)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for env_key, field_name in ENV_KEYS.items():
        if env.get(env_key):
            values[field_name] = env[env_key]
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return ToolConfig(**values)


def config_hash(config: ToolConfig) -> str:
    """Deterministic fingerprint of the resolved config; the API key is
    excluded so manifests never embed secret-derived material."""
    payload = config.to_dict()
    payload.pop("llm_api_key", None)
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    seed: int
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            subcommand=str(d["subcommand"]),
            config_hash=str(d["config_hash"]),
            seed=int(d["seed"]),
            inputs=list(d.get("inputs", [])),
            outputs=list(d.get("outputs", [])),
            started_at=str(d.get("started_at", "")),
            finished_at=str(d.get("finished_at", "")),
            tool_version=str(d.get("tool_version", TOOL_VERSION)),
        )


def utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return path
