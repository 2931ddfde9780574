"""Descriptive explanations: what characterizes each highlighted region.

Disjoint regions are split apart, near-coincident annotations are merged
into conjunctive groups, small regions borrow descriptors from enclosing
ones, and panels of mutually non-overlapping regions are enumerated as
independent sets of an overlap graph and selected iteratively.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Optional

import numpy as np

from embexplain.data import (
    CategorySet,
    Conjunction,
    Dataset,
    Interval,
    IsMissing,
    Predicate,
    PredicateUnion,
    Rule,
)
from embexplain.density import RegionShape, points_in_shape
from embexplain.panels import Layout, Panel, attention_score, rank_aggregate
from embexplain.regions import RegionAnnotation, max_overlap, min_overlap

log = logging.getLogger(__name__)

DEFAULT_MIN_OVERLAP_THRESHOLD = 0.8
DEFAULT_CONTAINMENT_THRESHOLD = 0.9
DEFAULT_EDGE_THRESHOLD = 0.05
DEFAULT_EXACT_CAP = 20

CRITERIA_DIRECTIONS = {
    "coverage": "desc",
    "purity": "desc",
    "attention": "asc",
    "mvo": "desc",
    "via": "desc",
}


def split_disjoint(annotation: RegionAnnotation, coords: np.ndarray) -> list[RegionAnnotation]:
    """Split an annotation with several disjoint polygons into one
    annotation per polygon; members are partitioned by containment and the
    rule is unchanged."""
    polys = annotation.shape.polygons
    if len(polys) <= 1:
        return [annotation]
    member_idx = np.flatnonzero(annotation.members)
    remaining = member_idx
    parts: list[RegionAnnotation] = []
    for pi, poly in enumerate(polys):
        if remaining.size == 0:
            break
        sub_shape = RegionShape(polygons=[poly], member_mask=np.zeros(len(coords), dtype=bool))
        inside = points_in_shape(sub_shape, coords[remaining])
        chosen = remaining[inside]
        remaining = remaining[~inside]
        if chosen.size == 0:
            continue
        mask = np.zeros(len(coords), dtype=bool)
        mask[chosen] = True
        sub_shape.member_mask = mask
        parts.append(
            replace(
                annotation,
                shape=sub_shape,
                members=mask,
                purity=float((mask & annotation.truth).sum()) / chosen.size,
                key=f"{annotation.key}#p{pi}",
            )
        )
    if remaining.size:
        log.warning(
            "%s: %d members not inside any split polygon", annotation.key, remaining.size
        )
    return parts if parts else [annotation]


# ---------------------------------------------------------------------------
# Descriptive merge


def _flatten_predicates(preds: list[Predicate]) -> list[Predicate]:
    flat: list[Predicate] = []
    for p in preds:
        if isinstance(p, PredicateUnion):
            flat.extend(p.parts)
        else:
            flat.append(p)
    return flat


def _union_predicate(preds: list[Predicate]) -> Predicate:
    """Union of same-feature predicates: intervals coalesce when contiguous,
    categories combine, missingness stays a separate disjunct."""
    flat = _flatten_predicates(preds)
    intervals = sorted(
        (p for p in flat if isinstance(p, Interval)), key=lambda p: (p.lo, p.hi)
    )
    merged_intervals: list[Interval] = []
    for iv in intervals:
        if merged_intervals and iv.lo <= merged_intervals[-1].hi:
            prev = merged_intervals[-1]
            merged_intervals[-1] = Interval(
                prev.lo,
                max(prev.hi, iv.hi),
                closed_right=iv.closed_right if iv.hi >= prev.hi else prev.closed_right,
            )
        else:
            merged_intervals.append(iv)
    parts: list[Predicate] = list(merged_intervals)
    cats = [p for p in flat if isinstance(p, CategorySet)]
    if cats:
        parts.append(CategorySet(frozenset().union(*(c.categories for c in cats))))
    if any(isinstance(p, IsMissing) for p in flat):
        parts.append(IsMissing())
    if len(parts) == 1:
        return parts[0]
    return PredicateUnion(tuple(parts))


def _group_rule(members: list[RegionAnnotation], dataset: Dataset) -> Rule | Conjunction:
    """Conjunction over features, unioning same-feature rules first."""
    by_feature: dict[str, list[Predicate]] = {}
    for a in members:
        rules = a.rule.rules if isinstance(a.rule, Conjunction) else (a.rule,)
        for r in rules:
            by_feature.setdefault(r.feature, []).append(r.predicate)
    order = {name: i for i, name in enumerate(dataset.feature_names)}
    features = sorted(by_feature, key=lambda f: order.get(f, 1 << 30))
    rules = tuple(Rule(f, _union_predicate(by_feature[f])) for f in features)
    if len(rules) == 1:
        return rules[0]
    return Conjunction(rules)


def descriptive_merge(
    annotations: list[RegionAnnotation],
    threshold: float = DEFAULT_MIN_OVERLAP_THRESHOLD,
    dataset: Optional[Dataset] = None,
) -> list[RegionAnnotation]:
    """Greedy agglomeration of annotations with high minimum overlap.

    Minimum overlap (not maximum) keeps the conjunction honest: both
    regions must cover nearly the same samples, otherwise points of the
    larger region would be claimed to satisfy the smaller region's rule.
    The group's region is the union of member regions; the largest
    member's polygons are kept as the drawn representative.
    """
    n = len(annotations)
    if n == 0:
        return []
    if dataset is None:
        raise ValueError("descriptive_merge requires the dataset for rule union")
    masks = [a.members.copy() for a in annotations]
    counts = [int(m.sum()) for m in masks]
    member_lists: dict[int, list[int]] = {i: [i] for i in range(n)}
    alive = set(range(n))

    overlap = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        inter = int((masks[i] & masks[j]).sum())
        overlap[i, j] = overlap[j, i] = min(inter / counts[i], inter / counts[j])

    while True:
        best = None
        for i in sorted(alive):
            for j in sorted(alive):
                if j <= i:
                    continue
                if overlap[i, j] > threshold:
                    rank = (-overlap[i, j], i, j)
                    if best is None or rank < best:
                        best = rank
        if best is None:
            break
        _, i, j = best
        member_lists[i].extend(member_lists.pop(j))
        masks[i] = masks[i] | masks[j]
        counts[i] = int(masks[i].sum())
        alive.discard(j)
        for k in alive:
            if k == i:
                continue
            inter = int((masks[i] & masks[k]).sum())
            overlap[i, k] = overlap[k, i] = min(inter / counts[i], inter / counts[k])

    groups: list[RegionAnnotation] = []
    for i in sorted(alive):
        idxs = member_lists[i]
        if len(idxs) == 1:
            groups.append(annotations[idxs[0]])
            continue
        members = [annotations[k] for k in idxs]
        members.sort(key=lambda a: a.key)
        rule = _group_rule(members, dataset)
        # Same-feature rules were unioned, so evaluate the group rule fresh
        # rather than AND-ing the member truth vectors.
        truth = rule.evaluate(dataset)
        union_mask = masks[i]
        largest = max(members, key=lambda a: (a.member_count, a.key))
        groups.append(
            RegionAnnotation(
                rule=rule,
                shape=largest.shape,
                members=union_mask,
                truth=truth,
                feature=members[0].feature,
                purity=float((union_mask & truth).sum()) / counts[i],
                key="+".join(a.key for a in members),
                provenance=tuple(a.key for a in members),
                is_group=True,
            )
        )
    return groups


def background_enrich(
    groups: list[RegionAnnotation],
    containment_threshold: float = DEFAULT_CONTAINMENT_THRESHOLD,
) -> list[RegionAnnotation]:
    """Append the rules of larger, enclosing regions as extra descriptors.

    A region gains the rule of every strictly larger region covering at
    least `containment_threshold` of its members, ordered by containment
    ratio. Geometry and member sets are never modified.
    """
    enriched: list[RegionAnnotation] = []
    for g in groups:
        g_count = g.member_count
        found: list[tuple[float, int, str, RegionAnnotation]] = []
        for b in groups:
            if b is g or b.member_count <= g_count:
                continue
            ratio = float((g.members & b.members).sum()) / g_count
            if ratio >= containment_threshold:
                found.append((-ratio, b.member_count, b.key, b))
        found.sort(key=lambda t: t[:3])
        if found:
            enriched.append(replace(g, background=tuple(b.rule for *_, b in found)))
        else:
            enriched.append(g)
    return enriched


# ---------------------------------------------------------------------------
# Candidate panels as independent sets


@dataclass
class OverlapGraph:
    """Annotations as nodes, edges marking overlap above a threshold."""

    n_nodes: int
    adjacency: list[frozenset[int]]
    threshold: float
    metric: str = "max_overlap"

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i in range(self.n_nodes)
            for j in self.adjacency[i]
            if i < j
        ]


def build_overlap_graph(
    groups: list[RegionAnnotation], edge_threshold: float = DEFAULT_EDGE_THRESHOLD
) -> OverlapGraph:
    n = len(groups)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i, j in combinations(range(n), 2):
        if max_overlap(groups[i], groups[j]) > edge_threshold:
            adj[i].add(j)
            adj[j].add(i)
    return OverlapGraph(
        n_nodes=n,
        adjacency=[frozenset(a) for a in adj],
        threshold=edge_threshold,
    )


def maximal_independent_sets(graph: OverlapGraph) -> list[tuple[int, ...]]:
    """All maximal independent sets, via pivoted clique enumeration on the
    complement graph. Deterministic ordering."""
    n = graph.n_nodes
    all_nodes = frozenset(range(n))
    comp = [all_nodes - graph.adjacency[v] - {v} for v in range(n)]
    results: list[tuple[int, ...]] = []

    def expand(clique: frozenset[int], cand: frozenset[int], excluded: frozenset[int]) -> None:
        if not cand and not excluded:
            results.append(tuple(sorted(clique)))
            return
        pivot = max(sorted(cand | excluded), key=lambda u: len(cand & comp[u]))
        for v in sorted(cand - comp[pivot]):
            expand(clique | {v}, cand & comp[v], excluded & comp[v])
            cand = cand - {v}
            excluded = excluded | {v}

    expand(frozenset(), all_nodes, frozenset())
    return sorted(results)


def greedy_color_classes(graph: OverlapGraph) -> list[tuple[int, ...]]:
    """Color classes of a greedy coloring in descending-degree order; each
    class is an independent set."""
    order = sorted(range(graph.n_nodes), key=lambda v: (-len(graph.adjacency[v]), v))
    color: dict[int, int] = {}
    for v in order:
        used = {color[u] for u in graph.adjacency[v] if u in color}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    n_colors = max(color.values()) + 1 if color else 0
    classes = [
        tuple(sorted(v for v, c in color.items() if c == ci)) for ci in range(n_colors)
    ]
    return classes


def _verify_independent(graph: OverlapGraph, node_set: tuple[int, ...]) -> None:
    for a, b in combinations(node_set, 2):
        if b in graph.adjacency[a]:
            raise RuntimeError(f"candidate panel {node_set} is not an independent set")


def candidate_panels(
    graph: OverlapGraph,
    mode: str = "exact",
    exact_cap: int = DEFAULT_EXACT_CAP,
) -> list[tuple[int, ...]]:
    """Candidate panels as independent node sets of the overlap graph.

    Exact mode enumerates all maximal independent sets; above `exact_cap`
    nodes it falls back to greedy graph coloring, whose color classes are
    independent sets. Every returned set is verified.
    """
    if graph.n_nodes == 0:
        raise ValueError("empty overlap graph")
    if mode not in ("exact", "greedy"):
        raise ValueError(f"unknown candidate mode {mode!r}")
    if mode == "exact" and graph.n_nodes > exact_cap:
        log.warning(
            "overlap graph has %d nodes (> exact cap %d); falling back to greedy coloring",
            graph.n_nodes,
            exact_cap,
        )
        mode = "greedy"
    sets = maximal_independent_sets(graph) if mode == "exact" else greedy_color_classes(graph)
    for s in sets:
        _verify_independent(graph, s)
    return sets


# ---------------------------------------------------------------------------
# Scoring and iterative selection


def _annotation_features(a: RegionAnnotation) -> frozenset[str]:
    feats = set(a.rule.features)
    for r in a.background:
        feats.update(r.features)
    return frozenset(feats)


def score_descriptive(panel: Panel, n_samples: int) -> dict[str, float]:
    """Five panel criteria: sample coverage, mean purity, attention prior,
    mean variable occurrence (MVO), and variables-in-all (VIA)."""
    union = np.zeros(n_samples, dtype=bool)
    for a in panel.annotations:
        union |= a.members
    feature_sets = [_annotation_features(a) for a in panel.annotations]
    occurrences = sum(len(fs) for fs in feature_sets)
    distinct = frozenset().union(*feature_sets)
    common = feature_sets[0]
    for fs in feature_sets[1:]:
        common = common & fs
    return {
        "coverage": float(union.sum()) / n_samples,
        "purity": sum(a.purity for a in panel.annotations) / panel.size,
        "attention": attention_score(panel),
        "mvo": occurrences / len(distinct),
        "via": float(len(common)),
    }


def select_descriptive(
    groups: list[RegionAnnotation],
    k_panels: int = 4,
    *,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    mode: str = "exact",
    exact_cap: int = DEFAULT_EXACT_CAP,
    weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0),
    n_samples: Optional[int] = None,
) -> Layout:
    """Iteratively pick the best non-overlapping panel and remove its
    annotations from the pool, until k panels or the pool is exhausted."""
    if n_samples is None and groups:
        n_samples = len(groups[0].members)
    pool = list(groups)
    chosen: list[Panel] = []
    weight_map = dict(zip(("coverage", "purity", "attention", "mvo", "via"), weights))
    while pool and len(chosen) < k_panels:
        graph = build_overlap_graph(pool, edge_threshold)
        candidates = candidate_panels(graph, mode=mode, exact_cap=exact_cap)
        panels = []
        for node_set in candidates:
            annos = [pool[i] for i in node_set]
            feats = sorted({f for a in annos for f in a.rule.features})
            panel = Panel(annotations=annos, kind="descriptive", features=tuple(feats))
            panel.scores = score_descriptive(panel, n_samples)
            panels.append(panel)
        ordered = rank_aggregate(panels, weight_map, CRITERIA_DIRECTIONS)
        best = ordered[0]
        chosen.append(best)
        taken = {id(a) for a in best.annotations}
        pool = [g for g in pool if id(g) not in taken]
    return Layout(panels=chosen, kind="descriptive")
