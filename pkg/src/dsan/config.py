"""Run configuration: plain-text key=value files plus CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

__all__ = ["RunConfig", "ConfigError"]


class ConfigError(ValueError):
    """Unknown key, bad value type, or a module precondition violation."""


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_ints(v: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in v.split(",") if x.strip() != "")
    except ValueError as e:
        raise ConfigError(f"not an int list: {v!r}") from e


@dataclass
class RunConfig:
    """Every knob a run needs; file keys mirror the field names.

    The field ``lambda_freq`` is spelled ``lambda`` in config files.
    """

    task: str = "dehaze"  # dehaze | deblur | desnow
    c0: int = 16
    num_blocks: int = 2
    dilation: int = 3
    strip_lengths: tuple[int, ...] = (3, 5, 7, 9)
    use_dsam: bool = True
    lambda_freq: float = 0.1
    lr0: float = 1e-4
    lr_min: float = 1e-6
    steps: int = 2000
    batch_size: int = 4
    patch_size: int = 64
    seed: int = 0
    data_root: str = ""
    checkpoint: str = ""
    precision: str = "f32"  # f32 | f64
    eval_interval: int = 200

    _KEY_ALIASES = {"lambda": "lambda_freq"}

    @classmethod
    def key_names(cls) -> list[str]:
        names = []
        for f in fields(cls):
            names.append("lambda" if f.name == "lambda_freq" else f.name)
        return names

    @classmethod
    def from_items(cls, items: dict[str, str], base: "RunConfig | None" = None) -> "RunConfig":
        cfg = base if base is not None else cls()
        by_name = {f.name: f for f in fields(cls)}
        updates = {}
        for key, raw in items.items():
            name = cls._KEY_ALIASES.get(key, key)
            f = by_name.get(name)
            if f is None:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                if f.type == "bool" or isinstance(getattr(cfg, name), bool):
                    updates[name] = _parse_bool(raw)
                elif isinstance(getattr(cfg, name), int):
                    updates[name] = int(raw)
                elif isinstance(getattr(cfg, name), float):
                    updates[name] = float(raw)
                elif isinstance(getattr(cfg, name), tuple):
                    updates[name] = _parse_ints(raw)
                else:
                    updates[name] = raw
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {raw!r}") from e
        out = replace(cfg, **updates)
        out.validate()
        return out

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        items = {}
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            items[k.strip()] = v.strip()
        return cls.from_items(items, base)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "lambda_freq" else f.name
            val = getattr(self, f.name)
            if isinstance(val, bool):
                val = "1" if val else "0"
            elif isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        if self.task not in ("dehaze", "deblur", "desnow"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.c0 < 1 or self.num_blocks < 1:
            raise ConfigError("c0 and num_blocks must be >= 1")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        if not self.strip_lengths:
            raise ConfigError("strip_lengths is empty")
        for k in self.strip_lengths:
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"strip lengths must be odd and >= 1, got {self.strip_lengths}")
        if self.c0 % len(self.strip_lengths) != 0:
            raise ConfigError(
                f"c0={self.c0} must divide into {len(self.strip_lengths)} channel groups"
            )
        if self.lambda_freq < 0:
            raise ConfigError("lambda must be >= 0")
        if self.lr0 <= 0 or self.lr_min <= 0 or self.lr_min > self.lr0:
            raise ConfigError(f"need 0 < lr_min <= lr0, got {self.lr_min}, {self.lr0}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.patch_size < 4 or self.patch_size % 4:
            raise ConfigError(f"patch_size must be a positive multiple of 4, got {self.patch_size}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
