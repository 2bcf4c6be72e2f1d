"""Run configuration: line-oriented `key = value` text with `#` comments.

``SGFSIS_CONFIG`` may point at a default config file.
"""

import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .labels import MAG_PRESETS

ENV_VAR = "SGFSIS_CONFIG"


@dataclass
class RunConfig:
    dataset_root: str = "."
    feature_dir: str = ""
    output_dir: str = "out"
    boundary_radius: int = 1
    centroid_radius: int = 1
    t_f: float = 0.5
    t_b: float = 0.5
    t_c: float = 0.5
    sgm_fg: bool = True
    sgm_bd: bool = True
    sgm_ct: bool = True
    no_support_term: bool = False
    gcm_variant: str = "full"
    no_gamma_clamp: bool = False
    kernel_size: int = 1
    lr: float = 1e-2
    steps: int = 50
    seed: int = 7
    magnification: str = ""
    dice_smooth: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for t in (self.t_f, self.t_b, self.t_c):
            if not 0.0 < t < 1.0:
                raise ConfigError(f"thresholds must lie in (0,1), got {t}")
        if self.boundary_radius < 0 or self.centroid_radius < 0:
            raise ConfigError("radii must be >= 0")
        if self.gcm_variant not in ("full", "var1", "var2"):
            raise ConfigError(f"unknown gcm_variant {self.gcm_variant!r}")
        if self.magnification and self.magnification not in MAG_PRESETS:
            raise ConfigError(f"unknown magnification preset {self.magnification!r}")
        if self.kernel_size not in (1, 3):
            raise ConfigError("kernel_size must be 1 or 3")
        return self

    def effective_radii(self):
        if self.magnification:
            return MAG_PRESETS[self.magnification]
        return self.boundary_radius, self.centroid_radius

    def thresholds(self):
        return (self.t_f, self.t_b, self.t_c)

    def pipeline_config(self):
        br, cr = self.effective_radii()
        return {
            "boundary_radius": br,
            "centroid_radius": cr,
            "thresholds": self.thresholds(),
            "sgm_fg": self.sgm_fg,
            "sgm_bd": self.sgm_bd,
            "sgm_ct": self.sgm_ct,
            "no_support_term": self.no_support_term,
            "gcm_variant": self.gcm_variant,
            "no_gamma_clamp": self.no_gamma_clamp,
            "kernel_size": self.kernel_size,
            "lr": self.lr,
            "steps": self.steps,
            "seed": self.seed,
        }


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name, text):
    kind = _FIELDS[name]
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        if text.lower() in ("true", "1", "yes", "on"):
            return True
        if text.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: bad boolean {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, val.strip())
    return RunConfig(**values)


def serialize(config):
    lines = []
    for f in fields(RunConfig):
        val = getattr(config, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def load(path=None):
    if path is None:
        path = os.environ.get(ENV_VAR, "")
    if not path:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())
