"""Service configuration: JSON file with environment-variable overrides."""

import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..errors import ParseError

ENV_PREFIX = "MASKFLOW_"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8765
    host: str = "127.0.0.1"
    dataset_root: str = "."
    backend: str = "reference"
    adapter_socket: str | None = None


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """Defaults <- config file <- MASKFLOW_* environment variables."""
    values: dict = {}
    if path is not None:
        try:
            values.update(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON config: {exc}") from exc
    env = os.environ if env is None else env
    mapping = {
        "PORT": ("port", int),
        "HOST": ("host", str),
        "DATASET_ROOT": ("dataset_root", str),
        "BACKEND": ("backend", str),
        "ADAPTER_SOCKET": ("adapter_socket", str),
    }
    for suffix, (key, cast) in mapping.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None:
            values[key] = cast(raw)
    known = set(ServiceConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    return ServiceConfig(**values)
