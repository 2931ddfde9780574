"""Contrastive explanations: where the values of one feature occur.

One candidate panel per feature shows all of its region annotations.
Features whose annotations overlap near-perfectly pairwise are merged
into a single panel, and the candidates are ranked on region overlap,
purity, and the attention prior.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from itertools import combinations

from embexplain.data import AnyRule, Conjunction, Dataset, Rule
from embexplain.panels import Layout, Panel, attention_score, rank_aggregate
from embexplain.regions import RegionAnnotation, jaccard_overlap

log = logging.getLogger(__name__)

DEFAULT_PAIR_THRESHOLD = 0.85
DEFAULT_K_PANELS = 4

CRITERIA_DIRECTIONS = {"overlap": "asc", "purity": "desc", "attention": "asc"}


def total_region_overlap(panel: Panel) -> float:
    """Mean Jaccard overlap over all annotation pairs; 0 for single-region
    panels. Low overlap signals spatially localized feature values."""
    if panel.size < 2:
        return 0.0
    pairs = list(combinations(panel.annotations, 2))
    return sum(jaccard_overlap(a, b) for a, b in pairs) / len(pairs)


def mean_purity(panel: Panel) -> float:
    return sum(a.purity for a in panel.annotations) / panel.size


def _conjoin(rule_a: AnyRule, rule_b: AnyRule) -> Conjunction:
    parts_a = rule_a.rules if isinstance(rule_a, Conjunction) else (rule_a,)
    parts_b = rule_b.rules if isinstance(rule_b, Conjunction) else (rule_b,)
    return Conjunction(parts_a + parts_b)


def _match_lists(
    group: list[RegionAnnotation],
    candidate: list[RegionAnnotation],
    pair_threshold: float,
) -> list[tuple[int, int]] | None:
    """Greedy bipartite matching by descending Jaccard; None unless every
    annotation finds a counterpart with overlap >= pair_threshold."""
    if len(group) != len(candidate):
        return None
    scored = sorted(
        (
            (-jaccard_overlap(a, b), i, j)
            for i, a in enumerate(group)
            for j, b in enumerate(candidate)
        ),
    )
    taken_i: set[int] = set()
    taken_j: set[int] = set()
    matches: list[tuple[int, int]] = []
    for neg, i, j in scored:
        if i in taken_i or j in taken_j:
            continue
        if -neg < pair_threshold:
            break
        taken_i.add(i)
        taken_j.add(j)
        matches.append((i, j))
    if len(matches) != len(group):
        return None
    return sorted(matches)


def contrastive_merge(
    per_feature: dict[str, list[RegionAnnotation]],
    pair_threshold: float = DEFAULT_PAIR_THRESHOLD,
    dataset: Dataset | None = None,
) -> list[Panel]:
    """Greedy agglomeration of features whose annotation lists admit a
    perfect high-overlap matching, in dataset feature order.

    Matched pairs become grouped annotations carrying the conjunction of
    both rules, drawn with the first feature's regions.
    """
    panels: list[Panel] = []
    for feature, annos in per_feature.items():
        merged = False
        for panel in panels:
            matches = _match_lists(panel.annotations, annos, pair_threshold)
            if matches is None:
                continue
            grouped = []
            for i, j in matches:
                ga, fb = panel.annotations[i], annos[j]
                truth = ga.truth & fb.truth
                grouped.append(
                    replace(
                        ga,
                        rule=_conjoin(ga.rule, fb.rule),
                        truth=truth,
                        purity=float((ga.members & truth).sum()) / ga.member_count,
                        key=f"{ga.key}&{fb.key}",
                        provenance=ga.provenance + fb.provenance,
                        is_group=True,
                    )
                )
            panel.annotations = grouped
            panel.features = panel.features + (feature,)
            merged = True
            log.info("contrastive merge: %s joins %s", feature, panel.features[:-1])
            break
        if not merged:
            panels.append(Panel(annotations=list(annos), kind="contrastive", features=(feature,)))
    return panels


def select_contrastive(
    per_feature: dict[str, list[RegionAnnotation]],
    k_panels: int = DEFAULT_K_PANELS,
    pair_threshold: float = DEFAULT_PAIR_THRESHOLD,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    dataset: Dataset | None = None,
) -> Layout:
    """Merge, score, rank, and keep the top k contrastive panels."""
    panels = contrastive_merge(per_feature, pair_threshold, dataset)
    for p in panels:
        p.scores = {
            "overlap": total_region_overlap(p),
            "purity": mean_purity(p),
            "attention": attention_score(p),
        }
    weight_map = dict(zip(("overlap", "purity", "attention"), weights))
    ordered = rank_aggregate(panels, weight_map, CRITERIA_DIRECTIONS)
    return Layout(panels=ordered[:k_panels], kind="contrastive")
