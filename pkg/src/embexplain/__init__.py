"""Region-based visual explanations for 2-D embeddings of tabular data."""

from embexplain.data import (
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
    discretize_numeric,
    load_dataset,
    load_embedding,
    load_weights,
    one_hot,
)
from embexplain.density import (
    DensityGrid,
    Polygon,
    RegionShape,
    adaptive_bandwidth,
    extract_contours,
    kde_grid,
    point_in_region,
    points_in_shape,
)
from embexplain.regions import (
    RegionAnnotation,
    RegionBuilder,
    construct_annotations,
    filter_uninformative,
    jaccard_overlap,
    max_overlap,
    min_overlap,
    posthoc_merge,
)
from embexplain.panels import Layout, Panel, attention_score, rank_aggregate
from embexplain.contrastive import (
    contrastive_merge,
    mean_purity,
    select_contrastive,
    total_region_overlap,
)
from embexplain.descriptive import (
    OverlapGraph,
    background_enrich,
    build_overlap_graph,
    candidate_panels,
    descriptive_merge,
    score_descriptive,
    select_descriptive,
    split_disjoint,
)
from embexplain.config import Config
from embexplain.pipeline import ExplainResult, run_explain

__version__ = "0.1.0"
