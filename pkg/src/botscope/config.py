"""Flat ``key = value`` config files.

Section headers are optional and ignored; ``#`` and ``;`` start comments::

    tu_threshold = 0.703
    damping = 0.85
    window_start = 2020-02-27T00:00:00Z
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path
from typing import Optional

from . import synth

ENV_VAR = "BOTSCOPE_CONFIG"


class ConfigError(ValueError):
    pass


def _bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


PIPELINE_KEYS = {
    "tu_threshold": float,
    "tfq_threshold": float,
    "ffr_threshold": float,
    "min_tweets": int,
    "activity_window_days": int,
    "tu_normalization": str,
    "damping": float,
    "tol": float,
    "max_iter": int,
    "threat_percentile": float,
    "infer_rt_prefix": _bool,
    "seed": int,
    "window_start": str,
    "window_end": str,
    "workers": int,
}

SYNTH_KEYS = {
    "humans": int,
    "phrase_pool_size": int,
    "first_user_id": int,
    "human_rate_min": float,
    "human_rate_max": float,
    "human_retweet_propensity": float,
    "human_ffr_min": float,
    "human_ffr_max": float,
}
for _name in synth.ARCHETYPES:
    SYNTH_KEYS[f"{_name}_count"] = int
    for _attr in ("duplicate_probability", "tweets_per_day", "ffr_target", "retweet_propensity"):
        SYNTH_KEYS[f"{_name}_{_attr}"] = float

KNOWN_KEYS = {**PIPELINE_KEYS, **SYNTH_KEYS}


def load_config(path) -> dict:
    """Read and type-convert a config file. Unknown keys are an error."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[__root__]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            try:
                values[key] = KNOWN_KEYS[key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {key}: {exc}") from exc
    return values


def resolve_config(path: Optional[str]) -> dict:
    """Load ``path``, else ``$BOTSCOPE_CONFIG``, else nothing."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return {}
    return load_config(path)
