"""Scaling benchmarks on parameter-determined synthetic datasets.

The generator plants a 2-D Gaussian mixture with per-cluster categorical
labels and cluster-correlated numeric features; everything derives from a
seed computed from (n_samples, n_features), so any cell of the report is
reproducible in isolation.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from typing import Optional

import numpy as np

from embexplain.config import Config
from embexplain.data import Dataset, Feature, FeatureKind
from embexplain.density import adaptive_bandwidth
from embexplain.descriptive import build_overlap_graph, descriptive_merge, split_disjoint
from embexplain.regions import (
    RegionBuilder,
    construct_annotations,
    filter_uninformative,
    group_by_feature,
    posthoc_merge,
)

log = logging.getLogger(__name__)

BENCH_STAGES = ("bandwidth", "region_construction", "posthoc_merge", "overlap_graph")


def synthetic_dataset(
    n_samples: int, n_features: int, n_clusters: int = 4
) -> tuple[Dataset, np.ndarray]:
    """Planted Gaussian-mixture embedding with cluster-correlated features.

    Feature 0 is the categorical cluster label; the remaining features are
    noisy linear projections of the cluster centers, so each one localizes
    in the embedding.
    """
    if n_features < 1:
        raise ValueError("need at least one feature")
    seed = 20_240_000 + 131 * n_samples + 7 * n_features + n_clusters
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(n_clusters) / n_clusters
    centers = 8.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    labels = rng.integers(0, n_clusters, size=n_samples)
    coords = centers[labels] + rng.normal(scale=1.5, size=(n_samples, 2))

    features = [
        Feature(
            name="cluster",
            kind=FeatureKind.NOMINAL,
            values=np.array([f"c{k}" for k in labels], dtype=object),
        )
    ]
    for j in range(1, n_features):
        theta = math.pi * j / max(1, n_features)
        signal = centers[labels, 0] * math.cos(theta) + centers[labels, 1] * math.sin(theta)
        noisy = signal + rng.normal(scale=1.0, size=n_samples)
        features.append(Feature(name=f"num{j:02d}", kind=FeatureKind.NUMERIC, values=noisy))
    return Dataset(features=features, n_samples=n_samples), coords


def run_case(n_samples: int, n_features: int, config: Optional[Config] = None) -> dict[str, float]:
    """Wall-clock seconds per pipeline stage for one synthetic cell."""
    cfg = config or Config()
    dataset, coords = synthetic_dataset(n_samples, n_features)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    sigma = adaptive_bandwidth(coords)
    timings["bandwidth"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    raw = construct_annotations(
        dataset,
        coords,
        sigma=sigma,
        level_fraction=cfg.level_fraction,
        k_bins=cfg.k_bins,
        resolution=cfg.resolution,
        workers=cfg.workers if cfg.workers > 0 else None,
    )
    timings["region_construction"] = time.perf_counter() - t0

    builder = RegionBuilder(
        dataset=dataset,
        coords=coords,
        sigma=sigma,
        level_fraction=cfg.level_fraction,
        resolution=cfg.resolution,
    )
    t0 = time.perf_counter()
    merged = {
        feature: posthoc_merge(annos, cfg.posthoc_threshold, builder)
        for feature, annos in group_by_feature(raw).items()
    }
    timings["posthoc_merge"] = time.perf_counter() - t0

    kept = filter_uninformative(merged, cfg.span_fraction, dataset.n_samples)
    pool = [
        part
        for annos in kept.values()
        for a in annos
        for part in split_disjoint(a, coords)
    ]
    t0 = time.perf_counter()
    build_overlap_graph(pool, cfg.edge_threshold)
    timings["overlap_graph"] = time.perf_counter() - t0
    timings["n_annotations"] = float(len(pool))
    return timings


def _fit_exponent(xs: list[float], ys: list[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.maximum(np.asarray(ys, dtype=float), 1e-12))
    slope = np.polyfit(lx, ly, 1)[0]
    return float(slope)


def run_bench(
    sizes: list[int],
    features: list[int],
    repeats: int = 3,
    config: Optional[Config] = None,
) -> list[dict]:
    """Raw timing rows for every (size, feature-count, repeat, stage)."""
    rows: list[dict] = []
    for f in features:
        for n in sizes:
            for rep in range(repeats):
                timings = run_case(n, f, config)
                log.info(
                    "bench n=%d f=%d rep=%d: %s",
                    n,
                    f,
                    rep,
                    {k: round(v, 3) for k, v in timings.items()},
                )
                for stage, seconds in timings.items():
                    if stage == "n_annotations":
                        continue
                    rows.append(
                        {
                            "kind": "timing",
                            "n": n,
                            "f": f,
                            "repeat": rep,
                            "stage": stage,
                            "value": seconds,
                        }
                    )
    return rows


def summarize_bench(rows: list[dict]) -> list[dict]:
    """Per-cell min/median plus fitted growth exponents per stage.

    Exponents come from log-log fits of cell medians: across sizes at fixed
    feature count (`exponent_n`) and across feature counts at fixed size
    (`exponent_f`).
    """
    cells: dict[tuple[int, int, str], list[float]] = {}
    for row in rows:
        if row["kind"] != "timing":
            continue
        cells.setdefault((row["n"], row["f"], row["stage"]), []).append(row["value"])

    out: list[dict] = []
    for (n, f, stage), values in sorted(cells.items()):
        out.append(
            {
                "kind": "cell_min",
                "n": n,
                "f": f,
                "repeat": "",
                "stage": stage,
                "value": min(values),
            }
        )
        out.append(
            {
                "kind": "cell_median",
                "n": n,
                "f": f,
                "repeat": "",
                "stage": stage,
                "value": float(np.median(values)),
            }
        )

    sizes = sorted({n for n, _, _ in cells})
    feats = sorted({f for _, f, _ in cells})
    stages = sorted({s for _, _, s in cells})
    for f in feats:
        for stage in stages:
            medians = [
                float(np.median(cells[(n, f, stage)]))
                for n in sizes
                if (n, f, stage) in cells
            ]
            if len(medians) >= 2:
                out.append(
                    {
                        "kind": "exponent_n",
                        "n": "",
                        "f": f,
                        "repeat": "",
                        "stage": stage,
                        "value": _fit_exponent(sizes[: len(medians)], medians),
                    }
                )
    for n in sizes:
        for stage in stages:
            medians = [
                float(np.median(cells[(n, f, stage)]))
                for f in feats
                if (n, f, stage) in cells
            ]
            if len(medians) >= 2:
                out.append(
                    {
                        "kind": "exponent_f",
                        "n": n,
                        "f": "",
                        "repeat": "",
                        "stage": stage,
                        "value": _fit_exponent(feats[: len(medians)], medians),
                    }
                )
    return out


def bench_report_csv(rows: list[dict]) -> str:
    """Raw timings plus summary rows as one CSV document."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["kind", "n", "f", "repeat", "stage", "value"])
    writer.writeheader()
    for row in rows:
        row = dict(row)
        row["value"] = f"{row['value']:.6f}"
        writer.writerow(row)
    for row in summarize_bench(rows):
        row = dict(row)
        row["value"] = f"{row['value']:.6f}"
        writer.writerow(row)
    return buf.getvalue()
