"""Flat key=value config files for the CLI.

Format: one `key = value` pair per line; blank lines and `#` comments are
ignored. Keys mirror the TrainConfig / PredictorParams / SyntheticDataSpec
field names plus a handful of command-specific knobs. Unknown or duplicate
keys are rejected by name so a typo never silently falls back to a
default.
"""

import numpy as np

from .matfun import SqrtIterConfig
from .predictors import PredictorKind, PredictorParams
from .trainer import SyntheticDataSpec, TrainConfig


class ConfigError(ValueError):
    """Malformed config file or unknown/invalid key."""


def parse_kv_file(path) -> dict[str, str]:
    """Parse a flat key=value file into a string map.

    Args:
        path: Config file path.

    Returns:
        Mapping of keys to raw value strings.

    Raises:
        ConfigError: Unreadable file, malformed line, or duplicate key.
    """
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        out[key] = value
    return out


def _convert(key: str, value: str, kind):
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind is PredictorKind:
            try:
                return PredictorKind(value)
            except ValueError:
                options = ", ".join(k.value for k in PredictorKind)
                raise ValueError(f"must be one of {options}") from None
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"config key '{key}': {exc}") from exc


class KeyReader:
    """Typed, tracked access to a parsed key=value map.

    Every fetched key is marked consumed; `finish()` rejects leftovers so
    each command validates exactly its own key set.
    """

    def __init__(self, kv: dict[str, str], source: str = "config"):
        self._kv = dict(kv)
        self._consumed: set[str] = set()
        self._source = source

    def get(self, key: str, kind, default):
        if key not in self._kv:
            return default
        self._consumed.add(key)
        return _convert(key, self._kv[key], kind)

    def finish(self) -> None:
        unknown = sorted(set(self._kv) - self._consumed)
        if unknown:
            raise ConfigError(
                f"unknown config key(s) in {self._source}: {', '.join(unknown)}"
            )


#: Keys accepted by `selfpred train` (besides the command-specific ones).
TRAIN_KEYS_DOC = (
    "d f b steps lr weight_decay tau_target predictor_kind loss_normalized "
    "seed aug_noise_sigma aug_mask_prob ablate_stop_gradient ablate_target_ema "
    "log_interval latent_rank obs_noise ridge_alpha ema_rho n_iters visser_eta "
    "pinv_cutoff spectral_normalize scale_direct_cov"
)


def read_predictor_params(reader: KeyReader, kind: PredictorKind) -> PredictorParams:
    """Predictor settings from config keys, defaulting per kind."""
    base = PredictorParams.for_kind(kind)
    sqrt_cfg = SqrtIterConfig(
        n_iters=reader.get("n_iters", int, base.sqrt_cfg.n_iters),
        visser_eta=reader.get("visser_eta", float, base.sqrt_cfg.visser_eta),
    )
    try:
        return PredictorParams(
            ridge_alpha=reader.get("ridge_alpha", float, base.ridge_alpha),
            ema_rho=reader.get("ema_rho", float, base.ema_rho),
            sqrt_cfg=sqrt_cfg,
            pinv_cutoff=reader.get("pinv_cutoff", float, base.pinv_cutoff),
            spectral_normalize=reader.get(
                "spectral_normalize", bool, base.spectral_normalize
            ),
            scale_direct_cov=reader.get(
                "scale_direct_cov", bool, base.scale_direct_cov
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_train_config(reader: KeyReader, seed_override: int | None = None) -> TrainConfig:
    """Build a TrainConfig from config keys.

    The data model's mixing matrix is drawn from substream [seed, 0], so
    the full run remains a pure function of the config text plus the seed.

    Args:
        reader: Key reader over the parsed config.
        seed_override: Replaces the config seed when not None (--seed).

    Raises:
        ConfigError: Unknown key, bad value, or invalid combination.
    """
    seed = reader.get("seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    d = reader.get("d", int, 32)
    f = reader.get("f", int, 16)
    kind = reader.get("predictor_kind", PredictorKind, PredictorKind.NS)
    params = read_predictor_params(reader, kind)
    latent_rank = reader.get("latent_rank", int, min(d, 16))
    obs_noise = reader.get("obs_noise", float, 0.05)
    try:
        data_model = SyntheticDataSpec.make(
            d, latent_rank, np.random.default_rng([seed, 0]), obs_noise
        )
        return TrainConfig(
            d=d,
            f=f,
            b=reader.get("b", int, 64),
            steps=reader.get("steps", int, 1000),
            # Larger steps (0.01+) blow up the default d=32/f=16 run within
            # a few thousand iterations; 0.005 is stable with margin.
            lr=reader.get("lr", float, 0.005),
            weight_decay=reader.get("weight_decay", float, 1e-4),
            tau_target=reader.get("tau_target", float, 0.99),
            predictor_kind=kind,
            predictor_params=params,
            loss_normalized=reader.get("loss_normalized", bool, False),
            seed=seed,
            aug_noise_sigma=reader.get("aug_noise_sigma", float, 0.1),
            aug_mask_prob=reader.get("aug_mask_prob", float, 0.1),
            data_model=data_model,
            ablate_stop_gradient=reader.get("ablate_stop_gradient", bool, False),
            ablate_target_ema=reader.get("ablate_target_ema", bool, False),
            log_interval=reader.get("log_interval", int, 10),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
