"""Dataset ingestion, feature typing, and binary indicator variables.

Raw tabular features are converted into binary indicator variables, each
carrying a rule (interval, category set, or missingness test) that can be
re-evaluated on any sample of the dataset.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

# Cell contents (stripped, lowercased) treated as missing values.
MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "?"})

DEFAULT_K_BINS = 5

# 1-D k-means convergence: max center shift below this fraction of the value
# range, hard iteration cap as a safety net.
_KMEANS_TOL = 1e-9
_KMEANS_MAX_ITER = 300


class FeatureKind(str, Enum):
    NUMERIC = "numeric"
    ORDINAL = "ordinal"
    NOMINAL = "nominal"


@dataclass(frozen=True)
class Feature:
    """One column of the dataset with a fixed kind.

    Numeric values are stored as float64 with NaN marking missing entries;
    categorical values as an object array of str with None for missing.
    For ordinal features `categories` fixes the category order.
    """

    name: str
    kind: FeatureKind
    values: np.ndarray
    categories: Optional[tuple[str, ...]] = None

    def missing_mask(self) -> np.ndarray:
        if self.kind is FeatureKind.NUMERIC:
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)


@dataclass
class Dataset:
    features: list[Feature]
    n_samples: int
    sample_weights: Optional[np.ndarray] = None
    source: str = ""

    def __post_init__(self) -> None:
        for f in self.features:
            if len(f.values) != self.n_samples:
                raise ValueError(
                    f"feature {f.name!r} has {len(f.values)} values, "
                    f"expected {self.n_samples}"
                )
        if self.sample_weights is not None:
            w = np.asarray(self.sample_weights, dtype=float)
            if w.shape != (self.n_samples,):
                raise ValueError("sample weights not aligned with dataset rows")
            if np.any(~np.isfinite(w)) or w.min() < 0.0 or w.max() > 1.0:
                raise ValueError("sample weights must lie in [0, 1]")
            self.sample_weights = w

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class Interval:
    """Half-open interval [lo, hi), optionally closed on the right.

    The last bin of a discretization closes at the feature maximum; a
    degenerate point interval (lo == hi) may arise from a constant feature
    and is always treated as closed.
    """

    lo: float
    hi: float
    closed_right: bool = False

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"interval lo {self.lo} > hi {self.hi}")

    def contains(self, values: np.ndarray) -> np.ndarray:
        # NaN compares false on both sides, so missing entries drop out.
        upper = values <= self.hi if (self.closed_right or self.lo == self.hi) else values < self.hi
        return (values >= self.lo) & upper


@dataclass(frozen=True)
class CategorySet:
    categories: frozenset[str]

    def __post_init__(self) -> None:
        if not self.categories:
            raise ValueError("empty category set")

    def contains(self, values: np.ndarray) -> np.ndarray:
        return np.array([v in self.categories for v in values], dtype=bool)


@dataclass(frozen=True)
class IsMissing:
    def contains(self, values: np.ndarray) -> np.ndarray:
        if values.dtype == object:
            return np.array([v is None for v in values], dtype=bool)
        return np.isnan(values)


@dataclass(frozen=True)
class PredicateUnion:
    """Disjunction of predicates over one feature; arises when non-adjacent
    bins (or a value rule and a missingness rule) of the same feature end
    up in one descriptive group."""

    parts: tuple["Predicate", ...]

    def contains(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(len(values), dtype=bool)
        for part in self.parts:
            out |= part.contains(values)
        return out


Predicate = Union[Interval, CategorySet, IsMissing, PredicateUnion]


def _fmt_num(x: float) -> str:
    """Format a number with 3 significant digits for rule labels."""
    if x == 0:
        return "0"
    if float(x).is_integer() and abs(x) < 1000:
        return str(int(x))
    return f"{x:.3g}"


@dataclass(frozen=True)
class Rule:
    """Binary predicate over one feature: phi(sample) in {0, 1}."""

    feature: str
    predicate: Predicate

    @property
    def features(self) -> tuple[str, ...]:
        return (self.feature,)

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        return self.evaluate_on(dataset.feature(self.feature))

    def evaluate_on(self, feature: Feature) -> np.ndarray:
        if feature.name != self.feature:
            raise ValueError(f"rule is over {self.feature!r}, got feature {feature.name!r}")
        return self.predicate.contains(feature.values)

    def label(self) -> str:
        p = self.predicate
        if isinstance(p, Interval):
            if p.lo == p.hi:
                return f"{self.feature} = {_fmt_num(p.lo)}"
            hi_br = "]" if p.closed_right else ")"
            return f"{self.feature} ∈ [{_fmt_num(p.lo)}, {_fmt_num(p.hi)}{hi_br}"
        if isinstance(p, PredicateUnion):
            if all(isinstance(q, Interval) for q in p.parts):
                spans = " ∪ ".join(
                    f"[{_fmt_num(q.lo)}, {_fmt_num(q.hi)}{']' if q.closed_right else ')'}"
                    for q in p.parts
                )
                return f"{self.feature} ∈ {spans}"
            return " ∨ ".join(Rule(self.feature, q).label() for q in p.parts)
        if isinstance(p, CategorySet):
            cats = " | ".join(sorted(p.categories))
            return f"{self.feature} = {cats}"
        return f"{self.feature} missing"


@dataclass(frozen=True)
class Conjunction:
    """Product of single-feature rules; at most one rule per feature."""

    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        names = [r.feature for r in self.rules]
        if len(names) != len(set(names)):
            raise ValueError("conjunction may contain at most one rule per feature")
        if not self.rules:
            raise ValueError("empty conjunction")

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(r.feature for r in self.rules)

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        out = self.rules[0].evaluate(dataset)
        for r in self.rules[1:]:
            out = out & r.evaluate(dataset)
        return out

    def label(self) -> str:
        return " ∧ ".join(r.label() for r in self.rules)


AnyRule = Union[Rule, Conjunction]


@dataclass(frozen=True)
class IndicatorVariable:
    """A rule plus its truth vector over the dataset.

    `position` is the bin/category order index used for adjacency checks
    when merging; None for missingness indicators.
    """

    rule: Rule
    truth: np.ndarray
    position: Optional[int] = None

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.truth))

    @property
    def is_missing_rule(self) -> bool:
        return isinstance(self.rule.predicate, IsMissing)


# ---------------------------------------------------------------------------
# Ingestion


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if header_line.count("\t") > header_line.count(",") else ","


def _is_missing_token(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def _try_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


SchemaValue = Union[str, tuple[str, Sequence[str]]]


def load_dataset(
    path: Union[str, Path],
    schema: Optional[dict[str, SchemaValue]] = None,
    sample_weights: Optional[np.ndarray] = None,
) -> Dataset:
    """Load a delimited text table (comma or tab, auto-detected) with header.

    Feature kinds are inferred: numeric if every non-missing cell parses as
    a number, nominal otherwise. Ordinal is never inferred; declare it in
    `schema` as ``("ordinal", [cat1, cat2, ...])``. Schema values may also
    be ``"numeric"``, ``"nominal"``, or ``"ignore"``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise ValueError(f"{path}: duplicate column names {dupes}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}"
            )

    schema = dict(schema or {})
    unknown = set(schema) - set(header)
    if unknown:
        raise ValueError(f"schema refers to unknown columns {sorted(unknown)}")

    features: list[Feature] = []
    for col, name in enumerate(header):
        cells = [row[col].strip() for row in body]
        spec = schema.get(name)
        if spec == "ignore":
            continue
        features.append(_build_feature(name, cells, spec))

    return Dataset(
        features=features,
        n_samples=len(body),
        sample_weights=sample_weights,
        source=str(path),
    )


def _build_feature(name: str, cells: list[str], spec: Optional[SchemaValue]) -> Feature:
    missing = [_is_missing_token(c) for c in cells]
    parsed = [None if m else _try_float(c) for c, m in zip(cells, missing)]
    all_numeric = all(p is not None for p, m in zip(parsed, missing) if not m)

    kind: FeatureKind
    categories: Optional[tuple[str, ...]] = None
    if spec is None:
        kind = FeatureKind.NUMERIC if all_numeric else FeatureKind.NOMINAL
    elif spec == "numeric":
        if not all_numeric:
            raise ValueError(f"column {name!r} declared numeric but has non-numeric cells")
        kind = FeatureKind.NUMERIC
    elif spec == "nominal":
        kind = FeatureKind.NOMINAL
    elif isinstance(spec, tuple) and spec[0] == "ordinal":
        kind = FeatureKind.ORDINAL
        categories = tuple(str(c) for c in spec[1])
        observed = {c for c, m in zip(cells, missing) if not m}
        undeclared = observed - set(categories)
        if undeclared:
            raise ValueError(
                f"column {name!r}: values {sorted(undeclared)} not in declared ordinal order"
            )
    else:
        raise ValueError(f"bad schema entry for column {name!r}: {spec!r}")

    if kind is FeatureKind.NUMERIC:
        values = np.array(
            [np.nan if m else float(c) for c, m in zip(cells, missing)], dtype=float
        )
    else:
        values = np.array(
            [None if m else c for c, m in zip(cells, missing)], dtype=object
        )
    return Feature(name=name, kind=kind, values=values, categories=categories)


def load_embedding(path: Union[str, Path]) -> np.ndarray:
    """Load a two-column numeric table (no header required) as N x 2 coords."""
    path = Path(path)
    rows: list[list[float]] = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace("\t", ",").split(",")
        if ln == 1 and _try_float(parts[0]) is None:
            continue  # header row
        if len(parts) != 2:
            raise ValueError(f"{path}: line {ln} has {len(parts)} columns, expected 2")
        rows.append([float(parts[0]), float(parts[1])])
    if not rows:
        raise ValueError(f"{path}: no coordinate rows")
    coords = np.array(rows, dtype=float)
    if not np.all(np.isfinite(coords)):
        raise ValueError(f"{path}: embedding contains non-finite coordinates")
    return coords


def load_weights(path: Union[str, Path]) -> np.ndarray:
    """Load a one-column numeric file of per-sample weights in [0, 1]."""
    path = Path(path)
    vals = [
        float(line.strip())
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    w = np.array(vals, dtype=float)
    if w.size == 0:
        raise ValueError(f"{path}: no weights")
    if w.min() < 0.0 or w.max() > 1.0:
        raise ValueError(f"{path}: weights must lie in [0, 1]")
    return w


# ---------------------------------------------------------------------------
# Indicator extraction


def one_hot(feature: Feature) -> list[IndicatorVariable]:
    """One indicator per observed category, plus a missingness indicator
    iff the feature has missing entries.

    Ordinal categories keep their declared order (`position`); nominal
    categories are ordered lexicographically.
    """
    if feature.kind is FeatureKind.NUMERIC:
        raise ValueError(f"one_hot called on numeric feature {feature.name!r}")
    missing = feature.missing_mask()
    observed = {v for v in feature.values if v is not None}
    if feature.kind is FeatureKind.ORDINAL:
        order = [c for c in (feature.categories or ()) if c in observed]
    else:
        order = sorted(observed)

    if len(order) == 1 and not missing.any():
        log.warning("feature %r has a single category %r", feature.name, order[0])

    indicators: list[IndicatorVariable] = []
    for pos, cat in enumerate(order):
        rule = Rule(feature.name, CategorySet(frozenset({cat})))
        truth = np.array([v == cat for v in feature.values], dtype=bool)
        indicators.append(IndicatorVariable(rule=rule, truth=truth, position=pos))
    if missing.any():
        rule = Rule(feature.name, IsMissing())
        indicators.append(IndicatorVariable(rule=rule, truth=missing, position=None))
    return indicators


def kmeans_1d(values: np.ndarray, k: int) -> np.ndarray:
    """Lloyd's algorithm on 1-D data with deterministic quantile init.

    Centers start at the (i + 0.5) / k quantiles and iterate until the
    largest center shift falls below 1e-9 of the value range. Returns the
    sorted cluster centers (possibly fewer than k if clusters collapse).
    """
    values = np.asarray(values, dtype=float)
    vmin, vmax = values.min(), values.max()
    vrange = vmax - vmin
    if vrange == 0.0:
        return np.array([vmin])
    centers = np.quantile(values, [(i + 0.5) / k for i in range(k)])
    centers = np.unique(centers)
    sorted_vals = np.sort(values)
    for _ in range(_KMEANS_MAX_ITER):
        if len(centers) == 1:
            break
        boundaries = (centers[:-1] + centers[1:]) / 2.0
        # Nearest-center assignment in 1-D is a binary search on boundaries.
        idx = np.searchsorted(boundaries, sorted_vals, side="left")
        new_centers = centers.copy()
        for c in range(len(centers)):
            members = sorted_vals[idx == c]
            if members.size:
                new_centers[c] = members.mean()
        shift = np.abs(new_centers - centers).max()
        centers = np.unique(new_centers)
        if shift < _KMEANS_TOL * vrange:
            break
    return np.sort(centers)


def discretize_numeric(feature: Feature, k_bins: int = DEFAULT_K_BINS) -> list[IndicatorVariable]:
    """Discretize a numeric feature into contiguous interval indicators.

    Bin boundaries are midpoints between adjacent 1-D k-means centers; the
    first/last bin extends to the observed min/max (last bin right-closed).
    Adds a missingness indicator iff the feature has missing entries.
    """
    if feature.kind is not FeatureKind.NUMERIC:
        raise ValueError(f"discretize_numeric called on {feature.kind} feature {feature.name!r}")
    missing = feature.missing_mask()
    present = feature.values[~missing]
    if present.size == 0:
        log.warning("feature %r has no non-missing values; skipped", feature.name)
        return []

    k = min(k_bins, len(np.unique(present)))
    centers = kmeans_1d(present, k)
    vmin, vmax = float(present.min()), float(present.max())
    boundaries = [vmin] + list((centers[:-1] + centers[1:]) / 2.0) + [vmax]

    indicators: list[IndicatorVariable] = []
    pos = 0
    for i in range(len(centers)):
        lo, hi = float(boundaries[i]), float(boundaries[i + 1])
        last = i == len(centers) - 1
        rule = Rule(feature.name, Interval(lo, hi, closed_right=last))
        truth = rule.evaluate_on(feature)
        if not truth.any():
            continue  # collapsed bin, nothing to annotate
        indicators.append(IndicatorVariable(rule=rule, truth=truth, position=pos))
        pos += 1
    if missing.any():
        rule = Rule(feature.name, IsMissing())
        indicators.append(IndicatorVariable(rule=rule, truth=missing, position=None))
    return indicators


def dataset_indicators(
    dataset: Dataset, k_bins: int = DEFAULT_K_BINS
) -> dict[str, list[IndicatorVariable]]:
    """Indicator variables for every feature, keyed by feature name."""
    out: dict[str, list[IndicatorVariable]] = {}
    for feat in dataset.features:
        if feat.kind is FeatureKind.NUMERIC:
            indicators = discretize_numeric(feat, k_bins)
        else:
            indicators = one_hot(feat)
        if indicators:
            out[feat.name] = indicators
    return out
