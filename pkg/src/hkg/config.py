"""Simple key-value run configuration files.

One ``section.key = value`` assignment per line, ``#`` comments. Values
are parsed as bool, int, float, bracketed or comma-separated lists, or
bare strings. This deliberately stays a flat dotted-key format so the keys
documented per module (``engage.v_high``, ``split.ratios``,
``sample.fanouts``, ...) appear verbatim in the file.
"""

from __future__ import annotations

from pathlib import Path

from .engage import EngageThresholds
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig


def parse_scalar(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
        return [parse_scalar(part) for part in text.split(",") if part.strip()]
    if "," in text:
        return [parse_scalar(part) for part in text.split(",") if part.strip()]
    return parse_scalar(text)


def load_config(path: Path | str) -> dict:
    """Parse a config file into a flat {dotted.key: value} mapping."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = parse_value(value)
    return values


def _get(cfg: dict, key: str, default, cast=None):
    if key not in cfg:
        return default
    value = cfg[key]
    if cast is not None:
        try:
            return cast(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}: cannot interpret {value!r}") from exc
    return value


def _as_tuple(value, cast) -> tuple:
    if not isinstance(value, (list, tuple)):
        value = [value]
    return tuple(cast(v) for v in value)


def train_config_from(cfg: dict, **overrides) -> TrainConfig:
    base = TrainConfig()
    merged = dict(
        epochs=_get(cfg, "train.epochs", base.epochs, int),
        learning_rate=_get(cfg, "train.learning_rate", base.learning_rate, float),
        batch_size=_get(cfg, "sample.batch_size", base.batch_size, int),
        beta1=_get(cfg, "train.beta1", base.beta1, float),
        beta2=_get(cfg, "train.beta2", base.beta2, float),
        eps=_get(cfg, "train.eps", base.eps, float),
        runs=_get(cfg, "train.runs", base.runs, int),
        seed=_get(cfg, "split.seed", base.seed, int),
        ratios=_as_tuple(_get(cfg, "split.ratios", list(base.ratios)), float),
        fanouts=_as_tuple(_get(cfg, "sample.fanouts", list(base.fanouts)), int),
        split_by_user=_get(cfg, "split.mode", "edge") == "user",
    )
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return TrainConfig(**merged)


def model_config_from(cfg: dict, **overrides) -> ModelConfig:
    base = ModelConfig()
    merged = dict(
        hidden_dim=_get(cfg, "model.hidden_dim", base.hidden_dim, int),
        out_dim=_get(cfg, "model.out_dim", base.out_dim, int),
        embed_dim=_get(cfg, "model.embed_dim", base.embed_dim, int),
        num_layers=_get(cfg, "model.num_layers", base.num_layers, int),
        use_edge_weights=_get(cfg, "model.use_edge_weights", base.use_edge_weights, bool),
    )
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return ModelConfig(**merged)


def engage_thresholds_from(cfg: dict) -> EngageThresholds:
    base = EngageThresholds()
    return EngageThresholds(
        v_high=_get(cfg, "engage.v_high", base.v_high, float),
        a_high=_get(cfg, "engage.a_high", base.a_high, float),
        v_norm=_get(cfg, "engage.v_norm", base.v_norm, float),
        a_norm=_get(cfg, "engage.a_norm", base.a_norm, float),
    )
