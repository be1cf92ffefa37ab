"""
Configuration settings for NAVAR training and evaluation.

Runtime settings come from the environment (or a local .env file); model
hyperparameters live in NavarConfig and in the tabulated PRESETS.
"""

import os
from dataclasses import dataclass, fields, replace, asdict
from enum import Enum

from dotenv import load_dotenv, dotenv_values

from errors import ConfigError

load_dotenv()

# Runtime settings
LOG_DIR = os.getenv("NAVAR_LOG_DIR", "logs")
LOG_TO_FILE = os.getenv("NAVAR_LOG_TO_FILE", "false").lower() == "true"
LOG_EVERY = int(os.getenv("NAVAR_LOG_EVERY", 100))
MAX_WORKERS = int(os.getenv("NAVAR_MAX_WORKERS", 4))
DEFAULT_SEED = int(os.getenv("NAVAR_DEFAULT_SEED", 0))

# Training guards
DIVERGENCE_LIMIT = 1e6
DEFAULT_VAL_FRACTION = 0.2


class BackboneKind(Enum):
    """Network family instantiated once per input variable."""

    MLP = "mlp"
    LSTM = "lstm"


@dataclass(frozen=True)
class NavarConfig:
    """Hyperparameters of a NAVAR model and its training run.

    For the MLP backbone ``K`` is the number of lags in the input window; for
    the LSTM backbone it is the length of the sequences the network is
    unrolled over.
    """

    backbone_kind: BackboneKind = BackboneKind.MLP
    K: int = 2
    hidden_units: int = 16
    hidden_layers: int = 1
    batch_size: int = 64
    learning_rate: float = 1e-3
    penalty: float = 0.1
    weight_decay: float = 1e-4
    epochs: int = 200
    seed: int = DEFAULT_SEED
    val_fraction: float = DEFAULT_VAL_FRACTION
    warmup_steps: int = 1
    log_every: int = LOG_EVERY

    def validate(self):
        """Raise ConfigError if any field is out of range; return self."""
        if not isinstance(self.backbone_kind, BackboneKind):
            raise ConfigError(f"unknown backbone kind: {self.backbone_kind!r}")
        checks = [
            (self.K >= 1, f"K must be >= 1, got {self.K}"),
            (self.hidden_units >= 1, f"hidden_units must be >= 1, got {self.hidden_units}"),
            (self.hidden_layers >= 1, f"hidden_layers must be >= 1, got {self.hidden_layers}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}"),
            (self.penalty >= 0, f"penalty (lambda) must be >= 0, got {self.penalty}"),
            (self.weight_decay >= 0, f"weight_decay (mu) must be >= 0, got {self.weight_decay}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (0 <= self.val_fraction < 1, f"val_fraction must be in [0, 1), got {self.val_fraction}"),
            (self.warmup_steps >= 1, f"warmup_steps must be >= 1, got {self.warmup_steps}"),
            (self.log_every >= 1, f"log_every must be >= 1, got {self.log_every}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def to_dict(self):
        """Flat mapping of field name to plain value."""
        values = asdict(self)
        values["backbone_kind"] = self.backbone_kind.value
        return values


_FIELD_TYPES = {f.name: f.type for f in fields(NavarConfig)}

# Names accepted in config files and on the command line
KEY_ALIASES = {
    "lambda": "penalty",
    "mu": "weight_decay",
    "lr": "learning_rate",
    "backbone": "backbone_kind",
    "hidden": "hidden_units",
    "layers": "hidden_layers",
    "batch": "batch_size",
}


def _coerce(key, raw):
    """Convert a raw string (or value) to the type of NavarConfig.<key>."""
    target = _FIELD_TYPES[key]
    try:
        if target is BackboneKind:
            return raw if isinstance(raw, BackboneKind) else BackboneKind(str(raw).strip().lower())
        if target is int:
            as_float = float(raw)
            if not as_float.is_integer():
                raise ValueError(raw)
            return int(as_float)
        return target(raw)
    except ValueError:
        raise ConfigError(f"invalid value for '{key}': {raw!r}") from None


def apply_overrides(base, overrides):
    """
    Return a copy of ``base`` with ``overrides`` applied.

    Args:
        base (NavarConfig): Starting configuration.
        overrides (dict): Mapping of field names (or aliases) to values or strings.

    Returns:
        NavarConfig: The validated configuration.
    """
    changes = {}
    for raw_key, raw_value in overrides.items():
        if raw_value is None:
            continue
        key = KEY_ALIASES.get(raw_key.strip(), raw_key.strip())
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key: '{raw_key}'")
        changes[key] = _coerce(key, raw_value)
    return replace(base, **changes).validate()


def load_config_file(path, base=None):
    """
    Read a flat key=value config file on top of ``base``.

    Args:
        path (str): Config file path.
        base (NavarConfig, optional): Configuration to start from.

    Returns:
        NavarConfig: The merged, validated configuration.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"config keys without a value in {path}: {', '.join(missing)}")
    return apply_overrides(base or NavarConfig(), values)


def dump_config(config):
    """Render a config in the key=value file format."""
    return "".join(f"{key}={value}\n" for key, value in config.to_dict().items())


def _preset(kind, K, hidden, layers, batch, lr, penalty, mu, epochs=5000):
    return NavarConfig(
        backbone_kind=kind,
        K=K,
        hidden_units=hidden,
        hidden_layers=layers,
        batch_size=batch,
        learning_rate=lr,
        penalty=penalty,
        weight_decay=mu,
        epochs=epochs,
    )


MLP = BackboneKind.MLP
LSTM = BackboneKind.LSTM

# Tuned hyperparameters per benchmark dataset
PRESETS = {
    # CauseMe, MLP backbone
    "nonlinear-var-n3": _preset(MLP, 5, 32, 1, 64, 0.00005, 0.1344, 2.903e-3),
    "nonlinear-var-n5": _preset(MLP, 5, 16, 1, 64, 0.0001, 0.1596, 2.420e-3),
    "nonlinear-var-n10": _preset(MLP, 5, 128, 1, 64, 0.0005, 0.2014, 8.557e-3),
    "nonlinear-var-n20": _preset(MLP, 5, 32, 1, 64, 0.0002, 0.2434, 4.508e-3),
    "climate": _preset(MLP, 2, 32, 1, 16, 0.0002, 0.3924, 4.322e-3),
    "weather": _preset(MLP, 5, 32, 1, 64, 0.0001, 0.0560, 4.903e-3),
    "river": _preset(MLP, 5, 8, 1, 256, 0.0001, 0.1708, 5.092e-4),
    # CauseMe, LSTM backbone
    "nonlinear-var-n3-lstm": _preset(LSTM, 5, 16, 1, 64, 0.0001, 0.1370, 8.952e-4),
    "nonlinear-var-n5-lstm": _preset(LSTM, 5, 32, 1, 32, 0.00005, 0.2445, 2.6756e-4),
    "nonlinear-var-n10-lstm": _preset(LSTM, 5, 64, 1, 128, 0.0001, 0.0784, 7.1237e-4),
    "nonlinear-var-n20-lstm": _preset(LSTM, 5, 128, 1, 64, 0.00005, 0.3512, 1.901e-6),
    "climate-lstm": _preset(LSTM, 2, 64, 1, 128, 0.0002, 0.2334, 6.231e-4),
    "weather-lstm": _preset(LSTM, 5, 8, 1, 256, 0.0005, 0.0172, 1.687e-3),
    "river-lstm": _preset(LSTM, 5, 128, 1, 128, 0.001, 0.0544, 4.465e-4),
    # DREAM3, MLP backbone
    "ecoli1": _preset(MLP, 2, 10, 1, 128, 0.0005, 0.1883, 1.114e-4),
    "ecoli2": _preset(MLP, 2, 10, 1, 32, 0.001, 0.2011, 1.710e-4),
    "yeast1": _preset(MLP, 2, 10, 2, 16, 0.002, 0.2697, 1.424e-4),
    "yeast2": _preset(MLP, 2, 10, 1, 256, 0.0002, 0.1563, 2.013e-4),
    "yeast3": _preset(MLP, 2, 10, 1, 16, 0.0002, 0.1559, 1.644e-4),
    # DREAM3, LSTM backbone (one 21-step sequence per replicate, 46 per batch)
    "ecoli1-lstm": _preset(LSTM, 21, 10, 1, 46, 0.002, 0.2208, 1.094e-5),
    "ecoli2-lstm": _preset(LSTM, 21, 10, 1, 46, 0.002, 0.1958, 3.233e-6),
    "yeast1-lstm": _preset(LSTM, 21, 10, 1, 46, 0.002, 0.2343, 5.309e-5),
    "yeast2-lstm": _preset(LSTM, 21, 10, 1, 46, 0.002, 0.2189, 1.987e-5),
    "yeast3-lstm": _preset(LSTM, 21, 10, 1, 46, 0.002, 0.2128, 1.049e-5),
    # Desk-scale runs on the synthetic structural models
    "toy3-small": _preset(MLP, 2, 16, 1, 64, 0.001, 0.1, 1e-4, epochs=2000),
    "lag2-mlp": _preset(MLP, 8, 32, 1, 64, 0.001, 0.05, 1e-4, epochs=1000),
}

DEFAULT_PRESET = "toy3-small"


def get_preset(name):
    """Return the preset named ``name`` or raise ConfigError."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})"
        ) from None


def resolve_config(preset=None, config_path=None, overrides=None):
    """
    Build a NavarConfig from a preset, a config file and explicit overrides,
    applied in that order.

    Args:
        preset (str, optional): Preset name.
        config_path (str, optional): Path to a key=value config file.
        overrides (dict, optional): Field overrides, None values ignored.

    Returns:
        NavarConfig: The validated configuration.
    """
    base = get_preset(preset) if preset else NavarConfig()
    if config_path:
        base = load_config_file(config_path, base)
    return apply_overrides(base, overrides or {})
