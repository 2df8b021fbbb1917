"""Chat-completions client shared by the remote decomposer and validator."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from string import Template

import httpx

from .errors import TransportError

log = logging.getLogger(__name__)


@dataclass
class EndpointConfig:
    endpoint: str
    model: str = "default"
    api_key: str | None = None
    timeout: float = 30.0
    max_attempts: int = 3
    backoff: float = 0.5

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        endpoint = overrides.pop("endpoint", None) or os.environ.get("LVLM_ENDPOINT")
        if not endpoint:
            raise ValueError("no LVLM endpoint configured (set LVLM_ENDPOINT)")
        return cls(
            endpoint=endpoint,
            model=overrides.pop("model", None) or os.environ.get("LVLM_MODEL", "default"),
            api_key=overrides.pop("api_key", None) or os.environ.get("LVLM_API_KEY"),
            **overrides,
        )


def load_prompt(name: str) -> Template:
    text = resources.files("semnav").joinpath("data").joinpath("prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


class LVLMClient:
    def __init__(self, cfg: EndpointConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)

    def complete_json(self, prompt: str) -> str:
        """Send one user message and return the assistant's raw content string."""
        body = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "response_format": {"type": "json_object"},
        }
        headers = {"Authorization": f"Bearer {self.cfg.api_key}"} if self.cfg.api_key else {}
        last_exc: Exception | None = None
        for attempt in range(1, self.cfg.max_attempts + 1):
            try:
                resp = self._client.post(self.cfg.endpoint, json=body, headers=headers)
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last_exc = exc
                log.warning("LVLM request failed (attempt %d/%d): %s", attempt, self.cfg.max_attempts, exc)
                if attempt < self.cfg.max_attempts and self.cfg.backoff:
                    time.sleep(self.cfg.backoff * attempt)
        raise TransportError(f"LVLM endpoint {self.cfg.endpoint} failed: {last_exc}", self.cfg.max_attempts)


def parse_json_object(content: str) -> dict:
    obj = json.loads(content)
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    return obj
