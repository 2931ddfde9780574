"""Pipeline configuration: defaults, validation, and key=value file parsing."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union


@dataclass
class Config:
    """All pipeline parameters. Flag/file values override these defaults.

    The pipeline is free of random state: k-means uses quantile
    initialization and every tie is broken deterministically, so two runs
    with one config produce identical outputs.
    """

    k_bins: int = 5
    level_fraction: float = 0.25
    sigma: Optional[float] = None
    resolution: int = 128
    posthoc_threshold: float = 0.8
    span_fraction: float = 0.9
    pair_threshold: float = 0.85
    min_overlap_threshold: float = 0.8
    containment_threshold: float = 0.9
    edge_threshold: float = 0.05
    k_panels: int = 4
    mode: str = "exact"
    exact_cap: int = 20
    contrastive_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    descriptive_weights: tuple[float, float, float, float, float] = (
        1.0,
        1.0,
        1.0,
        1.0,
        1.0,
    )
    workers: int = 0  # 0 = all available cores
    panel_size: int = 320

    def validate(self) -> None:
        for name in (
            "level_fraction",
            "posthoc_threshold",
            "span_fraction",
            "pair_threshold",
            "min_overlap_threshold",
            "containment_threshold",
            "edge_threshold",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.level_fraction < 1.0:
            raise ValueError("level_fraction must lie strictly in (0, 1)")
        for name in ("k_bins", "k_panels", "exact_cap", "panel_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.mode not in ("exact", "greedy"):
            raise ValueError(f"mode must be 'exact' or 'greedy', got {self.mode!r}")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")
        if len(self.contrastive_weights) != 3 or len(self.descriptive_weights) != 5:
            raise ValueError("contrastive/descriptive weights need 3 and 5 entries")

    def replace(self, **changes) -> "Config":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_FIELD_TYPES = {f.name: f for f in fields(Config)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in ("contrastive_weights", "descriptive_weights"):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if name == "mode":
        return raw
    if name == "sigma":
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    if name in ("level_fraction", "posthoc_threshold", "span_fraction", "pair_threshold",
                "min_overlap_threshold", "containment_threshold", "edge_threshold"):
        return float(raw)
    return int(raw)


def load_config(path: Union[str, Path], base: Optional[Config] = None) -> Config:
    """Read a flat key=value config file; '#' starts a comment. Unknown keys
    are rejected."""
    cfg = base or Config()
    changes = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        changes[key] = _parse_value(key, raw)
    return cfg.replace(**changes)
