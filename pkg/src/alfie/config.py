"""Configuration: a flat TOML file of dotted keys.

Every key is optional; absent keys take the defaults below. Unknown keys
are rejected so typos fail loudly. Example::

    embedding.backend = "remote"
    embedding.endpoint = "http://127.0.0.1:8081"
    feedback.probability = 0.25
    prosody.Joy = [1.1, 1.05]
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adaptation import AdaptationParams
from .dialog import DEFAULT_FEEDBACK_PROBABILITY, DEFAULT_PROSODY, Prosody
from .embedding import DEFAULT_CACHE_CAPACITY, DEFAULT_DIM
from .moral import DEFAULT_PROTOTYPES, EMOTION_ORDER, Emotion, Verdict, VerdictThresholds

__all__ = [
    "Config",
    "EmbeddingSettings",
    "ConfigError",
    "MissingFile",
    "InvalidValue",
    "UnknownKey",
    "load_config",
    "parse_config",
    "dump_config",
]


class ConfigError(Exception):
    key: str | None = None


class MissingFile(ConfigError, FileNotFoundError):
    pass


class InvalidValue(ConfigError, ValueError):
    def __init__(self, key: str, constraint: str, value: Any = None) -> None:
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint} (got {value!r})")


class UnknownKey(ConfigError, KeyError):
    def __init__(self, key: str) -> None:
        self.key = key
        super().__init__(key)

    def __str__(self) -> str:
        return f"unknown configuration key {self.key!r}"


@dataclass(frozen=True)
class EmbeddingSettings:
    backend: str = "deterministic"
    endpoint: str = ""
    model_name: str = ""
    dim: int = DEFAULT_DIM
    cache_capacity: int = DEFAULT_CACHE_CAPACITY


@dataclass(frozen=True)
class Config:
    embedding: EmbeddingSettings = EmbeddingSettings()
    thresholds: VerdictThresholds = VerdictThresholds()
    feedback_probability: float = DEFAULT_FEEDBACK_PROBABILITY
    feedback_seed: int = 42
    adaptation: AdaptationParams = AdaptationParams()
    storage_dir: str = "alfie-data"
    bank_path: str = ""
    prototypes: dict[Emotion, str] = field(default_factory=lambda: dict(DEFAULT_PROTOTYPES))
    prosody: dict[Emotion, Prosody] = field(default_factory=lambda: dict(DEFAULT_PROSODY))
    listen: str = "127.0.0.1:8000"

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


# -- value checkers --------------------------------------------------------

def _real(lo: float, hi: float, *, lo_open: bool = False, hi_open: bool = False) -> Callable[[str, Any], float]:
    lo_b, hi_b = "(" if lo_open else "[", ")" if hi_open else "]"
    constraint = f"must be a real number in {lo_b}{lo}, {hi}{hi_b}"

    def check(key: str, v: Any) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InvalidValue(key, constraint, v)
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        if not (ok_lo and ok_hi):
            raise InvalidValue(key, constraint, v)
        return float(v)

    return check


def _int(lo: int, hi: int) -> Callable[[str, Any], int]:
    def check(key: str, v: Any) -> int:
        if isinstance(v, bool) or not isinstance(v, int) or not lo <= v <= hi:
            raise InvalidValue(key, f"must be an integer in [{lo}, {hi}]", v)
        return v

    return check


def _text(*, non_empty: bool = False) -> Callable[[str, Any], str]:
    def check(key: str, v: Any) -> str:
        if not isinstance(v, str) or (non_empty and not v.strip()):
            raise InvalidValue(key, "must be a non-empty string" if non_empty else "must be a string", v)
        return v

    return check


def _choice(*options: str) -> Callable[[str, Any], str]:
    def check(key: str, v: Any) -> str:
        if v not in options:
            raise InvalidValue(key, f"must be one of {', '.join(options)}", v)
        return v

    return check


def _prosody(key: str, v: Any) -> Prosody:
    if (
        not isinstance(v, list)
        or len(v) != 2
        or any(isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) or x <= 0 for x in v)
    ):
        raise InvalidValue(key, "must be [pitch, rate] with positive multipliers", v)
    return Prosody(float(v[0]), float(v[1]))


def _listen(key: str, v: Any) -> str:
    if not isinstance(v, str) or ":" not in v:
        raise InvalidValue(key, "must be host:port", v)
    host, port = v.rsplit(":", 1)
    if not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise InvalidValue(key, "must be host:port with port in [0, 65535]", v)
    return v


_CHECKS: dict[str, Callable[[str, Any], Any]] = {
    "embedding.backend": _choice("deterministic", "remote"),
    "embedding.endpoint": _text(),
    "embedding.model_name": _text(),
    "embedding.dim": _int(2, 1 << 16),
    "embedding.cache_capacity": _int(1, 1 << 31),
    "thresholds.neutral_band": _real(0.0, 1.0, lo_open=True, hi_open=True),
    "feedback.probability": _real(0.0, 1.0),
    "feedback.seed": _int(0, (1 << 64) - 1),
    "adaptation.tau": _real(0.0, 1.0, lo_open=True, hi_open=True),
    **{f"adaptation.targets.{v.value}": _real(-1.0, 1.0) for v in Verdict},
    "storage.dir": _text(non_empty=True),
    "bank.path": _text(),
    **{f"prototypes.{e.value}": _text(non_empty=True) for e in EMOTION_ORDER},
    **{f"prosody.{e.value}": _prosody for e in EMOTION_ORDER},
    "server.listen": _listen,
}


def _flatten(table: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for k, v in table.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _to_flat(cfg: Config) -> dict[str, Any]:
    e = cfg.embedding
    flat: dict[str, Any] = {
        "embedding.backend": e.backend,
        "embedding.endpoint": e.endpoint,
        "embedding.model_name": e.model_name,
        "embedding.dim": e.dim,
        "embedding.cache_capacity": e.cache_capacity,
        "thresholds.neutral_band": cfg.thresholds.neutral_band,
        "feedback.probability": cfg.feedback_probability,
        "feedback.seed": cfg.feedback_seed,
        "adaptation.tau": cfg.adaptation.tau,
    }
    flat.update({f"adaptation.targets.{v.value}": cfg.adaptation.targets[v] for v in Verdict})
    flat["storage.dir"] = cfg.storage_dir
    flat["bank.path"] = cfg.bank_path
    flat.update({f"prototypes.{e.value}": cfg.prototypes[e] for e in EMOTION_ORDER})
    flat.update({f"prosody.{e.value}": [cfg.prosody[e].pitch, cfg.prosody[e].rate] for e in EMOTION_ORDER})
    flat["server.listen"] = cfg.listen
    return flat


def parse_config(text: str) -> Config:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"configuration is not valid TOML: {exc}") from exc
    given = _flatten(raw)
    for key in given:
        if key not in _CHECKS:
            raise UnknownKey(key)

    values = _to_flat(Config())
    values.update(given)
    v = {key: _CHECKS[key](key, values[key]) for key in _CHECKS}

    if v["embedding.backend"] == "remote" and not v["embedding.endpoint"].strip():
        raise InvalidValue("embedding.endpoint", "required when embedding.backend is remote", v["embedding.endpoint"])

    thresholds = VerdictThresholds(v["thresholds.neutral_band"])
    adaptation = AdaptationParams(
        tau=v["adaptation.tau"],
        targets={t: v[f"adaptation.targets.{t.value}"] for t in Verdict},
    )
    try:
        adaptation.validate(thresholds)
    except ValueError as exc:
        key = str(exc).split(" ", 1)[0]
        raise InvalidValue(key, str(exc).split(" ", 1)[1], v.get(key)) from None

    return Config(
        embedding=EmbeddingSettings(
            backend=v["embedding.backend"],
            endpoint=v["embedding.endpoint"],
            model_name=v["embedding.model_name"],
            dim=v["embedding.dim"],
            cache_capacity=v["embedding.cache_capacity"],
        ),
        thresholds=thresholds,
        feedback_probability=v["feedback.probability"],
        feedback_seed=v["feedback.seed"],
        adaptation=adaptation,
        storage_dir=v["storage.dir"],
        bank_path=v["bank.path"],
        prototypes={e: v[f"prototypes.{e.value}"] for e in EMOTION_ORDER},
        prosody={e: v[f"prosody.{e.value}"] for e in EMOTION_ORDER},
        listen=v["server.listen"],
    )


def load_config(path: str | Path) -> Config:
    p = Path(path)
    if not p.exists() or p.is_dir():
        raise MissingFile(f"configuration file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"))


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r} as TOML")


def dump_config(cfg: Config) -> str:
    """Serialize ``cfg`` to the dotted-key format ``parse_config`` reads."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in _to_flat(cfg).items())
