"""Configuration layering and artifact provenance.

Values resolve file < environment < flags. Every artifact a command writes
embeds ``config_hash`` (sha256 over the canonical JSON of the effective
configuration) plus the toolkit version, so identical configs reproduce
identical artifacts for all deterministic stages.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

VERSION = "0.1.0"
ENV_PREFIX = "MEMEKIT_"


def load_config_file(path: Optional[str | Path]) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        return tomllib.loads(path.read_text(encoding="utf-8"))
    return json.loads(path.read_text(encoding="utf-8"))


def env_overrides(environ: Mapping[str, str] = os.environ) -> dict:
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            out[key[len(ENV_PREFIX):].lower()] = value
    return out


def layer_config(file_config: Mapping[str, Any], env: Mapping[str, Any],
                 flags: Mapping[str, Any]) -> dict:
    """Merge with precedence file < environment < explicit flags."""
    merged = dict(file_config)
    merged.update(env)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def config_hash(config: Mapping[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def provenance(config: Mapping[str, Any]) -> dict:
    return {"config_hash": config_hash(config), "toolkit_version": VERSION}
