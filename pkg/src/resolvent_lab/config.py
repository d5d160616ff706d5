"""Experiment configuration: flat ``key = value`` files plus overrides."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError

SEED_MAX = 2**64 - 1


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key.replace("-", "_")] = value
    return out


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def parse_list(value, kind=float, name: str = "list"):
    """Comma-separated values (or an already parsed sequence); must be nonempty."""
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [s.strip() for s in str(value).split(",") if s.strip()]
    if not items:
        raise ConfigError(f"{name} must be nonempty")
    try:
        return [kind(v) for v in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad entry in {name}: {exc}") from exc


def parse_complex(value, name: str = "z") -> complex:
    try:
        return complex(str(value).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"{name} is not a complex number: {value!r}") from exc


@dataclass
class ExperimentConfig:
    """One experiment run: its name, parameters, seed and output path.

    ``params`` holds raw strings or parsed values keyed by option name; the
    typed accessors convert them and raise :class:`ConfigError` on bad input.
    """

    name: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if not 0 <= int(self.seed) <= SEED_MAX:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")

    def _raw(self, key, default):
        value = self.params.get(key)
        return default if value is None else value

    def get(self, key, default=None, kind=str):
        value = self._raw(key, default)
        if value is None:
            raise ConfigError(f"missing required option {key!r}")
        try:
            return kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"option {key!r}: {exc}") from exc

    def get_int(self, key, default=None) -> int:
        return self.get(key, default, int)

    def get_float(self, key, default=None) -> float:
        return self.get(key, default, float)

    def get_list(self, key, default=None, kind=float):
        value = self._raw(key, default)
        if value is None:
            raise ConfigError(f"missing required option {key!r}")
        return parse_list(value, kind, key)

    def get_complex(self, key, default=None) -> complex:
        return parse_complex(self._raw(key, default), key)


def merge_config(name: str, file_params: dict, overrides: dict, seed=None, out=None,
                 workers=None) -> ExperimentConfig:
    """Defaults < config file < command line. ``seed``, ``out`` and ``workers`` may come from either."""
    params = dict(file_params)
    for key in ("seed", "out", "workers"):
        params.pop(key, None)
    params.update({k: v for k, v in overrides.items() if v is not None})

    def pick(key, value, kind, default):
        if value is not None:
            return kind(value)
        if key in file_params:
            try:
                return kind(file_params[key])
            except ValueError as exc:
                raise ConfigError(f"option {key!r}: {exc}") from exc
        return default

    return ExperimentConfig(
        name,
        params,
        seed=pick("seed", seed, int, 0),
        out=pick("out", out, str, None),
        workers=pick("workers", workers, int, 1),
    )
