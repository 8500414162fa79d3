"""Run configuration with flags > environment > config file > defaults.

The environment layer is deliberately narrow: it carries provider credentials
only (TRACEREVIEW_ANALYST_TOKEN and friends), never budgets or paths, so a
run's behavior is fully described by its flags and config file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .errors import MalformedRecord

ENV_TOKENS = {
    "analyst": "TRACEREVIEW_ANALYST_TOKEN",
    "retriever": "TRACEREVIEW_RETRIEVER_TOKEN",
    "judge": "TRACEREVIEW_JUDGE_TOKEN",
}


@dataclass
class RunConfig:
    """Everything a command needs to run reproducibly."""

    alpha: int = 3
    beta: int = 3
    gamma: int = 10
    seed: int = 0
    mode: str = "stub"
    extra_category: str | None = None
    analyst_fixture: str | None = None
    retriever_fixture: str | None = None
    judge_fixture: str | None = None
    analyst_url: str | None = None
    retriever_url: str | None = None
    judge_url: str | None = None
    timeout: float = 30.0
    workers: int = 4
    resamples: int = 1000

    @classmethod
    def resolve(
        cls,
        flag_values: Mapping[str, object] | None = None,
        config_path: str | Path | None = None,
    ) -> "RunConfig":
        """Layer the sources: defaults, then config file, then explicit flags.

        Flag values of None mean "not given" and do not override.

        Raises:
            MalformedRecord: unreadable config file or unknown config key.
        """
        values: dict[str, object] = {}
        known = {f.name for f in fields(cls)}
        if config_path is not None:
            try:
                loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise MalformedRecord(f"cannot read config file {config_path}: {exc}") from exc
            if not isinstance(loaded, dict):
                raise MalformedRecord("config file must hold a JSON object")
            for key, value in loaded.items():
                if key not in known:
                    raise MalformedRecord(f"unknown config key {key!r}")
                values[key] = value
        if flag_values:
            for key, value in flag_values.items():
                if key in known and value is not None:
                    values[key] = value
        return cls(**values)

    def token_for(self, provider: str) -> str | None:
        """Credential lookup; the environment is the only source."""
        return os.environ.get(ENV_TOKENS[provider])
