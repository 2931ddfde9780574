"""Panels, layouts, and multi-criteria mean-rank aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from embexplain.regions import RegionAnnotation


@dataclass
class Panel:
    """A set of region annotations displayed together, with its scores.

    `features` names the feature group the panel explains (one merged
    feature group for contrastive panels, the union of annotation features
    for descriptive ones).
    """

    annotations: list[RegionAnnotation]
    kind: str
    features: tuple[str, ...]
    scores: dict[str, float] = field(default_factory=dict)
    ranks: dict[str, float] = field(default_factory=dict)
    aggregate_rank: Optional[float] = None

    @property
    def size(self) -> int:
        return len(self.annotations)

    @property
    def label(self) -> str:
        return " + ".join(self.features)


@dataclass
class Layout:
    """Panels ordered best-first, rendered as small multiples."""

    panels: list[Panel]
    kind: str


def attention_score(panel: Panel) -> float:
    """|3 - panel size|: a readability prior favoring about three regions.

    Lower is better; panels of three annotations score 0.
    """
    return float(abs(3 - len(panel.annotations)))


def rank_aggregate(
    panels: list[Panel],
    weights: dict[str, float],
    directions: dict[str, str],
) -> list[Panel]:
    """Order panels by the weighted mean of their per-criterion ranks.

    Rank 1 is best per criterion; `directions[c]` is "asc" when smaller
    scores are better and "desc" otherwise. Ties share the average rank.
    Final ties break on higher mean purity, then on the panel label.
    """
    if not panels:
        return []
    if any(w < 0 for w in weights.values()):
        raise ValueError("criterion weights must be non-negative")
    total_weight = sum(weights.values())
    if total_weight == 0:
        raise ValueError("criterion weights must not all be zero")

    for criterion, weight in weights.items():
        direction = directions[criterion]
        try:
            values = np.array([p.scores[criterion] for p in panels], dtype=float)
        except KeyError:
            raise ValueError(f"panel missing score for criterion {criterion!r}") from None
        ranks = rankdata(values if direction == "asc" else -values, method="average")
        for p, r in zip(panels, ranks):
            p.ranks[criterion] = float(r)

    for p in panels:
        p.aggregate_rank = (
            sum(weights[c] * p.ranks[c] for c in weights) / total_weight
        )
    return sorted(
        panels,
        key=lambda p: (p.aggregate_rank, -p.scores.get("purity", 0.0), p.label),
    )
