"""Region annotations: construction, overlap metrics, merging, filtering.

A region annotation pairs a rule with the contour region traced from the
rule's KDE. Overlapping annotations of one feature are consolidated when
their rules are semantically compatible, and features whose single region
spans the whole embedding are discarded as uninformative.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Optional, Union

import numpy as np

from embexplain.data import (
    AnyRule,
    CategorySet,
    Conjunction,
    Dataset,
    Feature,
    FeatureKind,
    IndicatorVariable,
    Interval,
    IsMissing,
    Rule,
    dataset_indicators,
)
from embexplain.density import (
    RegionShape,
    adaptive_bandwidth,
    extract_contours,
    kde_grid,
)

log = logging.getLogger(__name__)

DEFAULT_LEVEL_FRACTION = 0.25
DEFAULT_RESOLUTION = 128
DEFAULT_MERGE_THRESHOLD = 0.8
DEFAULT_SPAN_FRACTION = 0.9


@dataclass
class RegionAnnotation:
    """A (region, rule) pair, the atomic unit of explanation.

    `members` is the authoritative member mask: for base annotations it
    equals the shape's point-in-polygon result; descriptive groups union
    their members while drawing only a representative shape. `span` holds
    the contiguous bin/category index range used for merge adjacency.
    """

    rule: AnyRule
    shape: RegionShape
    members: np.ndarray
    truth: np.ndarray
    feature: str
    purity: float
    key: str
    span: Optional[tuple[int, int]] = None
    provenance: tuple[str, ...] = ()
    background: tuple[AnyRule, ...] = ()
    is_group: bool = False

    @property
    def member_count(self) -> int:
        return int(np.count_nonzero(self.members))

    @property
    def features(self) -> tuple[str, ...]:
        return self.rule.features

    @property
    def is_missing_rule(self) -> bool:
        return isinstance(self.rule, Rule) and isinstance(self.rule.predicate, IsMissing)

    def label(self) -> str:
        return self.rule.label()

    def recomputed_purity(self) -> float:
        return _purity(self.members, self.truth)


def _purity(members: np.ndarray, truth: np.ndarray) -> float:
    count = int(np.count_nonzero(members))
    if count == 0:
        raise ValueError("purity of empty member set")
    return float(np.count_nonzero(members & truth)) / count


def _indicator_key(feature: str, indicator: IndicatorVariable) -> str:
    if isinstance(indicator.rule.predicate, IsMissing):
        return f"{feature}:NA"
    if indicator.position is not None and isinstance(indicator.rule.predicate, Interval):
        return f"{feature}[{indicator.position}:{indicator.position}]"
    if isinstance(indicator.rule.predicate, CategorySet):
        cats = "|".join(sorted(indicator.rule.predicate.categories))
        return f"{feature}={cats}"
    return f"{feature}?{indicator.position}"


@dataclass
class RegionBuilder:
    """Shared context for turning indicator truth vectors into regions."""

    dataset: Dataset
    coords: np.ndarray
    sigma: float
    level_fraction: float = DEFAULT_LEVEL_FRACTION
    resolution: int = DEFAULT_RESOLUTION
    weights: Optional[np.ndarray] = None

    def shape_for_truth(self, truth: np.ndarray) -> Optional[RegionShape]:
        """KDE + contour for an arbitrary truth vector; None when degenerate."""
        if not truth.any():
            return None
        grid = kde_grid(
            self.coords, truth, self.sigma, self.resolution, weights=self.weights
        )
        if grid.values.max() <= 0.0:
            return None
        return extract_contours(grid, self.level_fraction, self.coords)

    def annotate(self, indicator: IndicatorVariable) -> Optional[RegionAnnotation]:
        """Build the annotation for one indicator; None if its region is empty."""
        feature = indicator.rule.feature
        try:
            shape = self.shape_for_truth(indicator.truth)
        except ValueError as exc:
            log.warning("skipping indicator %s: %s", indicator.rule.label(), exc)
            return None
        if shape is None or shape.member_count == 0:
            log.warning("indicator %s produced an empty region", indicator.rule.label())
            return None
        span = None
        if indicator.position is not None:
            span = (indicator.position, indicator.position)
        key = _indicator_key(feature, indicator)
        return RegionAnnotation(
            rule=indicator.rule,
            shape=shape,
            members=shape.member_mask,
            truth=indicator.truth,
            feature=feature,
            purity=_purity(shape.member_mask, indicator.truth),
            key=key,
            span=span,
            provenance=(key,),
        )


def construct_annotations(
    dataset: Dataset,
    coords: np.ndarray,
    *,
    sigma: Optional[float] = None,
    level_fraction: float = DEFAULT_LEVEL_FRACTION,
    k_bins: int = 5,
    resolution: int = DEFAULT_RESOLUTION,
    weights: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> list[RegionAnnotation]:
    """Construct one region annotation per indicator variable of every feature.

    Per-indicator KDE/contour jobs are independent and run on a thread pool;
    the output order is fixed by the dataset's feature and bin order, so the
    result does not depend on scheduling. Indicators whose region ends up
    with no member samples are dropped with a warning.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("embedding must be an N x 2 array")
    if coords.shape[0] != dataset.n_samples:
        raise ValueError(
            f"row count mismatch: dataset has {dataset.n_samples} samples, "
            f"embedding has {coords.shape[0]}"
        )
    if not np.all(np.isfinite(coords)):
        raise ValueError("embedding contains non-finite coordinates")
    if sigma is None:
        sigma = adaptive_bandwidth(coords)
    if weights is None:
        weights = dataset.sample_weights

    builder = RegionBuilder(
        dataset=dataset,
        coords=coords,
        sigma=sigma,
        level_fraction=level_fraction,
        resolution=resolution,
        weights=weights,
    )
    indicators = [
        ind
        for feature_indicators in dataset_indicators(dataset, k_bins).values()
        for ind in feature_indicators
    ]
    if workers == 1 or len(indicators) <= 1:
        annotated = [builder.annotate(ind) for ind in indicators]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            annotated = list(pool.map(builder.annotate, indicators))
    return [a for a in annotated if a is not None]


def group_by_feature(annotations: Iterable[RegionAnnotation]) -> dict[str, list[RegionAnnotation]]:
    out: dict[str, list[RegionAnnotation]] = {}
    for a in annotations:
        out.setdefault(a.feature, []).append(a)
    return out


# ---------------------------------------------------------------------------
# Overlap metrics (over member-sample sets)

MaskLike = Union[RegionAnnotation, RegionShape, np.ndarray]


def _member_mask(x: MaskLike) -> np.ndarray:
    if isinstance(x, RegionAnnotation):
        return x.members
    if isinstance(x, RegionShape):
        return x.member_mask
    return np.asarray(x, dtype=bool)


def _overlap_parts(a: MaskLike, b: MaskLike) -> tuple[int, int, int]:
    ma, mb = _member_mask(a), _member_mask(b)
    na = int(np.count_nonzero(ma))
    nb = int(np.count_nonzero(mb))
    if na == 0 or nb == 0:
        raise ValueError("overlap of an empty member set")
    inter = int(np.count_nonzero(ma & mb))
    return inter, na, nb


def max_overlap(a: MaskLike, b: MaskLike) -> float:
    """max(|A&B|/|A|, |A&B|/|B|): 1.0 whenever one region contains the other."""
    inter, na, nb = _overlap_parts(a, b)
    return max(inter / na, inter / nb)


def min_overlap(a: MaskLike, b: MaskLike) -> float:
    """min(|A&B|/|A|, |A&B|/|B|): high only when both regions cover the same samples."""
    inter, na, nb = _overlap_parts(a, b)
    return min(inter / na, inter / nb)


def jaccard_overlap(a: MaskLike, b: MaskLike) -> float:
    inter, na, nb = _overlap_parts(a, b)
    return inter / (na + nb - inter)


# ---------------------------------------------------------------------------
# Post-hoc merging of one feature's annotations


def _merge_compatible(a: RegionAnnotation, b: RegionAnnotation, kind: FeatureKind) -> bool:
    """Adjacent bins/categories for numeric and ordinal features; any pair for
    nominal; missingness never merges with value rules."""
    if a.is_missing_rule or b.is_missing_rule:
        return False
    if kind is FeatureKind.NOMINAL:
        return True
    if a.span is None or b.span is None:
        return False
    return a.span[1] + 1 == b.span[0] or b.span[1] + 1 == a.span[0]


def _merged_rule(a: RegionAnnotation, b: RegionAnnotation, kind: FeatureKind) -> Rule:
    first, second = (a, b) if (a.span or (0, 0)) <= (b.span or (0, 0)) else (b, a)
    pa, pb = first.rule.predicate, second.rule.predicate
    if kind is FeatureKind.NUMERIC:
        assert isinstance(pa, Interval) and isinstance(pb, Interval)
        return Rule(a.feature, Interval(pa.lo, pb.hi, closed_right=pb.closed_right))
    assert isinstance(pa, CategorySet) and isinstance(pb, CategorySet)
    return Rule(a.feature, CategorySet(pa.categories | pb.categories))


def _merge_pair(
    a: RegionAnnotation, b: RegionAnnotation, kind: FeatureKind, builder: RegionBuilder
) -> Optional[RegionAnnotation]:
    truth = a.truth | b.truth
    shape = builder.shape_for_truth(truth)
    if shape is None or shape.member_count == 0:
        return None
    rule = _merged_rule(a, b, kind)
    span = None
    if a.span is not None and b.span is not None:
        span = (min(a.span[0], b.span[0]), max(a.span[1], b.span[1]))
    if kind is FeatureKind.NOMINAL:
        key = f"{a.feature}={'|'.join(sorted(rule.predicate.categories))}"
    elif span is not None:
        key = f"{a.feature}[{span[0]}:{span[1]}]"
    else:
        key = f"{a.feature}+{len(a.provenance) + len(b.provenance)}"
    return RegionAnnotation(
        rule=rule,
        shape=shape,
        members=shape.member_mask,
        truth=truth,
        feature=a.feature,
        purity=_purity(shape.member_mask, truth),
        key=key,
        span=span,
        provenance=a.provenance + b.provenance,
    )


def posthoc_merge(
    annotations: list[RegionAnnotation],
    threshold: float,
    builder: RegionBuilder,
) -> list[RegionAnnotation]:
    """Iteratively merge the most-overlapping compatible pair of one feature.

    The pair with the highest max_overlap above `threshold` merges first;
    ties break on the lower bin index, then on rule labels, making the
    result independent of the input order. Merged regions are re-traced
    from the KDE of the combined indicator rather than unioned as polygons.
    """
    if not annotations:
        return []
    features = {a.feature for a in annotations}
    if len(features) > 1:
        raise ValueError(f"posthoc_merge expects one feature, got {sorted(features)}")
    kind = builder.dataset.feature(annotations[0].feature).kind
    pool = sorted(annotations, key=lambda a: (a.span or (1 << 30, 0), a.key))
    blocked: set[frozenset[str]] = set()

    while True:
        best = None
        for a, b in combinations(pool, 2):
            if frozenset((a.key, b.key)) in blocked:
                continue
            if not _merge_compatible(a, b, kind):
                continue
            overlap = max_overlap(a, b)
            if overlap <= threshold:
                continue
            lo_bin = min(
                a.span[0] if a.span else 1 << 30, b.span[0] if b.span else 1 << 30
            )
            rank = (-overlap, lo_bin, tuple(sorted((a.key, b.key))))
            if best is None or rank < best[0]:
                best = (rank, a, b)
        if best is None:
            return pool
        _, a, b = best
        merged = _merge_pair(a, b, kind, builder)
        if merged is None:
            log.warning("merge of %s and %s produced an empty region", a.key, b.key)
            blocked.add(frozenset((a.key, b.key)))
            continue
        pool = [p for p in pool if p is not a and p is not b] + [merged]
        pool.sort(key=lambda x: (x.span or (1 << 30, 0), x.key))


def filter_uninformative(
    per_feature: dict[str, list[RegionAnnotation]],
    span_fraction: float,
    n_samples: int,
) -> dict[str, list[RegionAnnotation]]:
    """Drop features reduced to a single annotation spanning the embedding.

    Such regions reflect spatially uniform feature values and carry no
    structure. Coverage is measured over member samples.
    """
    kept: dict[str, list[RegionAnnotation]] = {}
    for feature, annos in per_feature.items():
        if len(annos) == 1 and annos[0].member_count >= span_fraction * n_samples:
            log.info(
                "dropping feature %r: single region covers %d/%d samples",
                feature,
                annos[0].member_count,
                n_samples,
            )
            continue
        if annos:
            kept[feature] = annos
    return kept
