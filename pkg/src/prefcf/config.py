"""Run configuration: defaults, key=value config files, and flag merging."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .em import AnnealSchedule, ConvergenceCriterion
from .errors import ConfigError

MODEL_KINDS = ("dm", "baseline", "mp", "am", "bc", "pd", "pcc", "vs")


@dataclass
class RunConfig:
    """Knobs shared by training, prediction, and evaluation runs."""

    model: str = "dm"
    k_x: int = 5            # item classes (decoupled, baseline, ordering)
    k_p: int = 3            # preference classes
    k_r: int = 10           # rating-style classes
    k_pref: int | None = None  # preference levels; None means the rating scale
    k_classes: int = 10     # aspect model / user clustering classes
    k_y: int = 3            # ordering-model user classes
    sigma: float = 1.0      # personality-diagnosis noise
    alpha: float = 1.0      # fold-in smoothing pseudo-count
    anneal: bool = True
    beta_start: float = 0.5
    beta_growth: float = 1.2
    inner_iters: int = 10
    max_iters: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    mode: str = "expected"  # or "argmax"
    pair_cap: int = 0       # ordering-model pairs per user; 0 = unlimited

    def validate(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model: unknown kind {self.model!r}")
        for key in ("k_x", "k_p", "k_r", "k_classes", "k_y"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        if self.k_pref is not None and self.k_pref < 1:
            raise ConfigError("k_pref: must be >= 1")
        if self.sigma <= 0:
            raise ConfigError("sigma: must be > 0")
        if self.alpha < 0:
            raise ConfigError("alpha: must be >= 0")
        if not 0.0 < self.beta_start <= 1.0:
            raise ConfigError("beta_start: must be in (0, 1]")
        if self.beta_growth <= 1.0:
            raise ConfigError("beta_growth: must be > 1")
        if self.inner_iters < 1:
            raise ConfigError("inner_iters: must be >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters: must be >= 1")
        if self.rel_tol <= 0:
            raise ConfigError("rel_tol: must be > 0")
        if self.mode not in ("expected", "argmax"):
            raise ConfigError(f"mode: unknown value {self.mode!r}")
        if self.pair_cap < 0:
            raise ConfigError("pair_cap: must be >= 0")
        return self

    def schedule(self):
        if not self.anneal:
            return None
        return AnnealSchedule(beta_start=self.beta_start, beta_growth=self.beta_growth,
                              inner_iters_per_beta=self.inner_iters)

    def criterion(self):
        return ConvergenceCriterion(max_iters=self.max_iters, rel_loglik_tol=self.rel_tol)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int" or key == "k_pref":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            low = str(value).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret value {value!r}") from None


def parse_config(path=None, overrides=None):
    """Build a RunConfig from a key=value file plus flag overrides (flags win)."""
    cfg = RunConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise ConfigError(f"line {lineno}: expected key=value, got {text!r}")
                key, _, value = text.partition("=")
                key = key.strip()
                if key not in _FIELD_TYPES:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                setattr(cfg, key, _coerce(key, value.strip()))
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            setattr(cfg, key, _coerce(key, value))
    return cfg.validate()
