"""End-to-end orchestration: dataset + embedding in, layouts out."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from embexplain.config import Config
from embexplain.contrastive import select_contrastive
from embexplain.data import Dataset, dataset_indicators
from embexplain.density import adaptive_bandwidth
from embexplain.descriptive import (
    background_enrich,
    descriptive_merge,
    select_descriptive,
    split_disjoint,
)
from embexplain.panels import Layout
from embexplain.regions import (
    RegionAnnotation,
    RegionBuilder,
    construct_annotations,
    filter_uninformative,
    group_by_feature,
    posthoc_merge,
)

log = logging.getLogger(__name__)


@dataclass
class ExplainResult:
    sigma: float
    annotations: dict[str, list[RegionAnnotation]]
    contrastive: Layout
    descriptive: Layout
    timings: dict[str, float] = field(default_factory=dict)


class _StageTimer:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    def run(self, name: str, fn, *args, **kwargs):
        start = time.perf_counter()
        result = fn(*args, **kwargs)
        self.timings[name] = time.perf_counter() - start
        log.info("stage %s: %.3fs", name, self.timings[name])
        return result


def run_explain(
    dataset: Dataset,
    coords: np.ndarray,
    config: Optional[Config] = None,
    weights: Optional[np.ndarray] = None,
) -> ExplainResult:
    """Run the full pipeline: indicators, regions, merges, panel selection."""
    cfg = config or Config()
    cfg.validate()
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("embedding must be an N x 2 array")
    if coords.shape[0] != dataset.n_samples:
        raise ValueError(
            f"row count mismatch: dataset has {dataset.n_samples} rows, "
            f"embedding has {coords.shape[0]}"
        )
    if weights is None:
        weights = dataset.sample_weights
    if weights is not None and len(weights) != dataset.n_samples:
        raise ValueError("row count mismatch: weights not aligned with dataset")
    workers = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    timer = _StageTimer()

    sigma = cfg.sigma
    if sigma is None:
        sigma = timer.run("bandwidth", adaptive_bandwidth, coords)
    else:
        timer.timings["bandwidth"] = 0.0

    raw = timer.run(
        "region_construction",
        construct_annotations,
        dataset,
        coords,
        sigma=sigma,
        level_fraction=cfg.level_fraction,
        k_bins=cfg.k_bins,
        resolution=cfg.resolution,
        weights=weights,
        workers=workers,
    )
    builder = RegionBuilder(
        dataset=dataset,
        coords=coords,
        sigma=sigma,
        level_fraction=cfg.level_fraction,
        resolution=cfg.resolution,
        weights=weights,
    )

    def _merge_all() -> dict[str, list[RegionAnnotation]]:
        return {
            feature: posthoc_merge(annos, cfg.posthoc_threshold, builder)
            for feature, annos in group_by_feature(raw).items()
        }

    merged = timer.run("posthoc_merge", _merge_all)
    kept = timer.run(
        "filtering", filter_uninformative, merged, cfg.span_fraction, dataset.n_samples
    )

    contrastive = timer.run(
        "contrastive",
        select_contrastive,
        kept,
        k_panels=cfg.k_panels,
        pair_threshold=cfg.pair_threshold,
        weights=cfg.contrastive_weights,
        dataset=dataset,
    )

    def _descriptive() -> Layout:
        pool = [
            part
            for annos in kept.values()
            for a in annos
            for part in split_disjoint(a, coords)
        ]
        groups = descriptive_merge(pool, cfg.min_overlap_threshold, dataset)
        groups = background_enrich(groups, cfg.containment_threshold)
        return select_descriptive(
            groups,
            cfg.k_panels,
            edge_threshold=cfg.edge_threshold,
            mode=cfg.mode,
            exact_cap=cfg.exact_cap,
            weights=cfg.descriptive_weights,
            n_samples=dataset.n_samples,
        )

    descriptive = timer.run("descriptive", _descriptive)

    return ExplainResult(
        sigma=sigma,
        annotations=kept,
        contrastive=contrastive,
        descriptive=descriptive,
        timings=timer.timings,
    )
