"""Command-line interface: explain, bench, and dump-annotations."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from embexplain.bench import bench_report_csv, run_bench
from embexplain.config import Config, load_config
from embexplain.data import Dataset, load_dataset, load_embedding, load_weights
from embexplain.pipeline import ExplainResult, run_explain
from embexplain.render import Style, render_layout_svg, render_manifest_json

log = logging.getLogger(__name__)


def parse_schema_file(path: Path) -> dict:
    """Schema lines are `column=numeric|nominal|ignore` or
    `column=ordinal:first|second|third`."""
    schema = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected column=kind")
        name, spec = (part.strip() for part in line.split("=", 1))
        if spec.startswith("ordinal:"):
            cats = [c.strip() for c in spec[len("ordinal:"):].split("|") if c.strip()]
            if not cats:
                raise ValueError(f"{path}:{ln}: ordinal declaration needs categories")
            schema[name] = ("ordinal", cats)
        elif spec in ("numeric", "nominal", "ignore"):
            schema[name] = spec
        else:
            raise ValueError(f"{path}:{ln}: unknown kind {spec!r}")
    return schema


_FLAG_FIELDS = [
    ("k_bins", int, "bins for numeric discretization"),
    ("level_fraction", float, "contour level as a fraction of each KDE maximum"),
    ("sigma", float, "kernel bandwidth override (default: adaptive)"),
    ("resolution", int, "density grid resolution per axis"),
    ("posthoc_threshold", float, "max-overlap threshold for same-feature merging"),
    ("span_fraction", float, "coverage above which a single-region feature is dropped"),
    ("pair_threshold", float, "Jaccard threshold for the cross-feature contrastive merge"),
    ("min_overlap_threshold", float, "min-overlap threshold for descriptive grouping"),
    ("containment_threshold", float, "containment ratio for background enrichment"),
    ("edge_threshold", float, "max-overlap above which panel regions conflict"),
    ("k_panels", int, "panels per layout"),
    ("exact_cap", int, "node limit for exact independent-set enumeration"),
    ("workers", int, "thread count (0 = all cores)"),
    ("panel_size", int, "panel edge length in pixels"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name, typ, help_text in _FLAG_FIELDS:
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None, help=help_text)
    parser.add_argument(
        "--mode",
        choices=("exact", "greedy"),
        default=None,
        help="candidate panel enumeration mode",
    )
    parser.add_argument(
        "--contrastive-weights",
        default=None,
        help="comma-separated weights for overlap,purity,attention",
    )
    parser.add_argument(
        "--descriptive-weights",
        default=None,
        help="comma-separated weights for coverage,purity,attention,mvo,via",
    )
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")


def _config_from_args(args: argparse.Namespace) -> Config:
    cfg = Config()
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    changes = {}
    for name, _typ, _ in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.contrastive_weights is not None:
        changes["contrastive_weights"] = tuple(
            float(x) for x in args.contrastive_weights.split(",")
        )
    if args.descriptive_weights is not None:
        changes["descriptive_weights"] = tuple(
            float(x) for x in args.descriptive_weights.split(",")
        )
    return cfg.replace(**changes)


def _load_inputs(args: argparse.Namespace) -> tuple[Dataset, np.ndarray, Optional[np.ndarray]]:
    schema = parse_schema_file(args.schema) if args.schema else None
    dataset = load_dataset(args.data, schema=schema)
    coords = load_embedding(args.embedding)
    weights = load_weights(args.weights) if args.weights else None
    return dataset, coords, weights


def _annotations_json(result: ExplainResult) -> str:
    entries = []
    for feature in sorted(result.annotations):
        for a in result.annotations[feature]:
            entries.append(
                {
                    "feature": feature,
                    "key": a.key,
                    "rule": a.rule.label(),
                    "member_count": a.member_count,
                    "purity": round(a.purity, 6),
                    "polygons": [
                        {
                            "exterior": [[round(float(x), 4), round(float(y), 4)] for x, y in p.exterior],
                            "holes": [
                                [[round(float(x), 4), round(float(y), 4)] for x, y in h]
                                for h in p.holes
                            ],
                        }
                        for p in a.shape.polygons
                    ],
                }
            )
    return json.dumps(entries, indent=2, ensure_ascii=False) + "\n"


def _provenance(args: argparse.Namespace, dataset: Dataset, cfg: Config, sigma: float) -> dict:
    return {
        "dataset": {
            "path": str(args.data),
            "embedding": str(args.embedding),
            "n_samples": dataset.n_samples,
            "features": [
                {"name": f.name, "kind": f.kind.value} for f in dataset.features
            ],
        },
        "parameters": cfg.as_dict(),
        "sigma": round(sigma, 9),
    }


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    dataset, coords, weights = _load_inputs(args)
    start = time.perf_counter()
    result = run_explain(dataset, coords, cfg, weights=weights)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    style = Style(panel_size=cfg.panel_size)
    written: list[str] = []
    for layout in (result.contrastive, result.descriptive):
        if not layout.panels:
            log.warning("no %s panels to render", layout.kind)
            continue
        for name, doc in render_layout_svg(layout, coords, style).items():
            (out_dir / name).write_text(doc, encoding="utf-8")
            written.append(name)

    manifest = render_manifest_json(
        {"contrastive": result.contrastive, "descriptive": result.descriptive},
        _provenance(args, dataset, cfg, result.sigma),
    )
    (out_dir / "manifest.json").write_text(manifest, encoding="utf-8")
    written.append("manifest.json")

    if args.dump_annotations:
        (out_dir / "annotations.json").write_text(
            _annotations_json(result), encoding="utf-8"
        )
        written.append("annotations.json")

    total = time.perf_counter() - start
    log_lines = [f"dataset: {args.data}", f"embedding: {args.embedding}"]
    log_lines += [f"sigma: {result.sigma:.9g}"]
    log_lines += [f"stage {name}: {secs:.3f}s" for name, secs in result.timings.items()]
    log_lines += [f"total: {total:.3f}s", "files: " + ", ".join(sorted(written))]
    (out_dir / "run_log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def cmd_dump_annotations(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    dataset, coords, weights = _load_inputs(args)
    result = run_explain(dataset, coords, cfg, weights=weights)
    text = _annotations_json(result)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    sizes = [int(x) for x in args.sizes.split(",") if x.strip()]
    features = [int(x) for x in args.features.split(",") if x.strip()]
    if not sizes or not features:
        raise ValueError("bench needs at least one size and one feature count")
    rows = run_bench(sizes, features, repeats=args.repeats, config=cfg)
    report = bench_report_csv(rows)
    if args.out == "-":
        sys.stdout.write(report)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report, encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexplain",
        description="Region-based visual explanations for 2-D embeddings",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser("explain", help="build panels and render SVGs + manifest")
    p_explain.add_argument("data", type=Path, help="delimited table with header")
    p_explain.add_argument("embedding", type=Path, help="two-column coordinates, row-aligned")
    p_explain.add_argument("--weights", type=Path, default=None, help="per-sample weights in [0,1]")
    p_explain.add_argument("--schema", type=Path, default=None, help="column kind overrides")
    p_explain.add_argument("--out", type=Path, default=Path("explain_out"))
    p_explain.add_argument(
        "--dump-annotations",
        action="store_true",
        help="also write intermediate annotations.json",
    )
    _add_config_flags(p_explain)
    p_explain.set_defaults(func=cmd_explain)

    p_dump = sub.add_parser(
        "dump-annotations", help="run the region stage only and dump annotations JSON"
    )
    p_dump.add_argument("data", type=Path)
    p_dump.add_argument("embedding", type=Path)
    p_dump.add_argument("--weights", type=Path, default=None)
    p_dump.add_argument("--schema", type=Path, default=None)
    p_dump.add_argument("--out", default="-", help="output file or - for stdout")
    _add_config_flags(p_dump)
    p_dump.set_defaults(func=cmd_dump_annotations)

    p_bench = sub.add_parser("bench", help="scaling benchmark on synthetic datasets")
    p_bench.add_argument("--sizes", default="10000,20000,40000", help="comma-separated N values")
    p_bench.add_argument("--features", default="10", help="comma-separated feature counts")
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--out", default="bench_report.csv")
    _add_config_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
