"""Flat key=value configuration shared by the CLI and the session runner.

Files hold one `key = value` pair per line; blank lines and # comments
are skipped. Precedence is command-line flags over file values over
defaults. The CHAINPLAN_CONFIG environment variable names a default
config file for the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

ENV_CONFIG = "CHAINPLAN_CONFIG"


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected key = value, got {line!r}"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", field=key)
        out[key] = value
    return out


def parse_kv_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_kv_text(text, source=str(p))


def _to_bool(value: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a bool: {value!r}")


@dataclass
class SessionConfig:
    backend: str = "rulebased"            # rulebased | scripted | http
    playback_path: str | None = None
    http_base_url: str | None = None
    http_model: str | None = None
    http_api_key: str | None = None
    manifest_path: str | None = None
    sop_dir: str | None = None
    primary_table: str = "sales"
    reference_date: str = "2024-01-01"
    currency_unit: str = "RMB"
    promo_uplift_pct: float = 15.0
    promo_budget_increase_pct: float = 150.0
    plan_sub_periods: int = 4
    season_length: int = 12
    deviation_threshold: float = 0.10
    uplift_cap: float = 0.50
    max_iterations: int = 16
    retries: int = 2
    audit_path: str | None = None

    @classmethod
    def from_mapping(cls, mapping: dict[str, str],
                     base: "SessionConfig | None" = None) -> "SessionConfig":
        cfg = base or cls()
        coercers = _coercers(cls)
        for key, value in mapping.items():
            if key not in coercers:
                raise ConfigError(f"unknown config key {key!r}", field=key)
            try:
                setattr(cfg, key, coercers[key](value))
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), field=key) from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.backend not in ("rulebased", "scripted", "http"):
            raise ConfigError(
                f"backend must be rulebased, scripted, or http, "
                f"got {self.backend!r}",
                field="backend",
            )
        if self.backend == "scripted" and not self.playback_path:
            raise ConfigError(
                "scripted backend needs playback_path", field="playback_path"
            )
        if self.backend == "http" and not (self.http_base_url and self.http_model):
            raise ConfigError(
                "http backend needs http_base_url and http_model",
                field="http_base_url",
            )
        if self.plan_sub_periods < 1:
            raise ConfigError(
                "plan_sub_periods must be at least 1", field="plan_sub_periods"
            )
        if self.season_length < 1:
            raise ConfigError(
                "season_length must be at least 1", field="season_length"
            )
        if self.deviation_threshold < 0:
            raise ConfigError(
                "deviation_threshold must be >= 0", field="deviation_threshold"
            )
        if self.max_iterations < 1:
            raise ConfigError(
                "max_iterations must be at least 1", field="max_iterations"
            )
        if self.retries < 0:
            raise ConfigError(
                "retries must be >= 0", field="retries"
            )


def _coercers(cls) -> dict[str, object]:
    out = {}
    for f in fields(cls):
        if f.type in ("float", "float | None"):
            out[f.name] = float
        elif f.type in ("int", "int | None"):
            out[f.name] = int
        elif f.type == "bool":
            out[f.name] = _to_bool
        else:
            out[f.name] = lambda v: v if v != "" else None
    return out


def load_session_config(path: str | Path,
                        base: SessionConfig | None = None) -> SessionConfig:
    return SessionConfig.from_mapping(parse_kv_file(path), base=base)
