"""End-to-end runs: load, measure, standardise, cluster, write artifacts.

Everything is computed before anything is written, so a failing run leaves
the output directory untouched. Each file is written to a temporary name and
renamed into place.
"""

import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from fbtc.errors import FBTCError, InvalidKError
from fbtc.features import flag_outliers, standardize, winsorize
from fbtc.graph import write_similarity
from fbtc.io import csv_text, load_long_csv, write_text_atomic
from fbtc.measures import compute_measures, normalize_selection
from fbtc.spectral import eigen_residuals, spectral_cluster
from fbtc.trajectory import ENDPOINTS, WEIGHTINGS, center_vertically, shift_horizontally

MEASURES_FILE = "measures.csv"
ASSIGNMENTS_FILE = "assignments.csv"
REPORT_FILE = "report.json"
EMBEDDING_FILE = "embedding.csv"
SIMILARITY_FILE = "similarity.txt"

# Left out of the config echo in report.json: they must not change the bytes.
_NOT_ECHOED = ("threads", "output_dir", "timings")


@dataclass
class RunConfig:
    """Settings of one run. ``measures`` is a preset name or comma-separated ids."""

    input: str = ""
    K: int = 2
    measures: str = "all"
    center_vertical: bool = False
    shift_horizontal: bool = False
    midpoint: Optional[float] = None
    winsorize: Optional[float] = None
    p: Optional[int] = None
    partitioner: str = "hard"
    restarts: int = 50
    seed: int = 0
    output_dir: str = "fbtc_out"
    weighting: str = "proximity"
    endpoints: str = "one-sided"
    threads: int = 1
    flag_outliers: bool = False
    remove_outliers: bool = False
    outlier_k: Optional[int] = None
    embedding: bool = False
    dump_similarity: bool = False
    timings: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def validate(self, need_k: bool = True) -> None:
        if need_k and int(self.K) < 2:
            raise InvalidKError(f"K must be at least 2, got {self.K}", stage="config")
        if self.partitioner not in ("hard", "fuzzy"):
            raise ValueError(f"partitioner must be 'hard' or 'fuzzy', got {self.partitioner!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.endpoints not in ENDPOINTS:
            raise ValueError(f"endpoints must be one of {ENDPOINTS}, got {self.endpoints!r}")
        if self.winsorize is not None and not self.winsorize > 0:
            raise ValueError("winsorize limit must be positive")
        if int(self.restarts) < 1:
            raise ValueError("restarts must be at least 1")
        if int(self.threads) < 1:
            raise ValueError("threads must be at least 1")
        if not normalize_selection(self.measures):
            raise ValueError("measure selection is empty")

    def echo(self) -> dict:
        d = asdict(self)
        for k in _NOT_ECHOED:
            d.pop(k)
        d["measures"] = list(normalize_selection(self.measures))
        return d


class _Clock:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        except FBTCError as exc:
            if exc.stage is None:
                exc.stage = name
            raise
        finally:
            self.stages[name] = time.perf_counter() - start


def _prepare(trajectories, cfg):
    if cfg.shift_horizontal:
        trajectories = [shift_horizontally(tr) for tr in trajectories]
    if cfg.center_vertical:
        trajectories = [center_vertically(tr) for tr in trajectories]
    return trajectories


def _measure(cfg, clock):
    with clock.stage("load"):
        trajectories, _ = load_long_csv(cfg.input)
        trajectories = _prepare(trajectories, cfg)
    with clock.stage("measures"):
        raw, column_ids, _ = compute_measures(
            trajectories,
            cfg.measures,
            threads=int(cfg.threads),
            midpoint=cfg.midpoint,
            weighting=cfg.weighting,
            endpoints=cfg.endpoints,
        )
    ids = [tr.id for tr in trajectories]
    return ids, raw, column_ids


def _measures_text(ids, raw, column_ids):
    return csv_text(["id", *column_ids], ([i, *map(float, row)] for i, row in zip(ids, raw)))


def compute_run(cfg: RunConfig):
    """Run the full pipeline in memory; returns ``{file name: text}`` and the result."""
    cfg.validate()
    clock = _Clock()
    ids, raw, column_ids = _measure(cfg, clock)
    files = {MEASURES_FILE: _measures_text(ids, raw, column_ids)}
    warnings = []
    report = {"config": cfg.echo(), "n": len(ids)}

    with clock.stage("features"):
        values = raw
        if cfg.winsorize is not None:
            values, (lower, upper) = winsorize(raw, cfg.winsorize)
            report["winsorize_bounds"] = {
                c: [float(lo), float(hi)] for c, lo, hi in zip(column_ids, lower, upper)
            }
        features = standardize(values, column_ids)
        report["dropped_columns"] = list(features.dropped_columns)
        report["feature_columns"] = list(features.column_ids)

    keep = np.arange(len(ids))
    if cfg.flag_outliers or cfg.remove_outliers:
        with clock.stage("outliers"):
            flagged = sorted(flag_outliers(features, cfg.outlier_k, seed=cfg.seed))
        report["outliers"] = [ids[i] for i in flagged]
        if cfg.remove_outliers and flagged:
            keep = np.setdiff1d(keep, flagged)
            features = features.subset(keep)
            report["removed"] = [ids[i] for i in flagged]

    with clock.stage("cluster"):
        if int(cfg.K) > len(keep):
            raise InvalidKError(f"K={cfg.K} exceeds the number of trajectories ({len(keep)})")
        result = spectral_cluster(
            features,
            int(cfg.K),
            partitioner=cfg.partitioner,
            seed=int(cfg.seed),
            p=cfg.p,
            restarts=int(cfg.restarts),
            threads=int(cfg.threads),
        )
    kept_ids = [ids[i] for i in keep]
    p = result.diagnostics["p"]
    sizes = result.sizes
    objective = "fwcss" if cfg.partitioner == "fuzzy" else "wcss"
    report.update(
        p=p,
        eigenvalues=result.embedding.eigenvalues.tolist(),
        max_eigen_residual=float(eigen_residuals(result.graph.matrix, result.embedding).max()),
        graph_components=int(result.graph.components().max() + 1),
        cluster_sizes=sizes.tolist(),
        iterations=int(result.iterations),
        converged=bool(result.converged),
    )
    report[objective] = float(result.wcss)
    for k, size in enumerate(sizes, start=1):
        if size < p:
            warnings.append(f"cluster {k} has {size} member(s), fewer than p={p}; p may be too large for it")
    if result.embedding.degenerate_rows:
        rows = [kept_ids[i] for i in result.embedding.degenerate_rows]
        warnings.append(f"zero embedding rows left unnormalised: {', '.join(rows)}")
    if not result.converged:
        warnings.append("partitioner stopped at the iteration limit")
    if result.weights is not None:
        low = result.low_confidence
        report["low_confidence"] = [kept_ids[i] for i in np.flatnonzero(low)]
        report["max_row_sum_error"] = float(result.max_row_sum_error)

    header = ["id", "cluster"]
    if result.weights is None:
        rows = [[i, int(c)] for i, c in zip(kept_ids, result.labels)]
    else:
        header += [f"weight_{k}" for k in range(1, result.K + 1)]
        rows = [[i, int(c), *map(float, w)] for i, c, w in zip(kept_ids, result.labels, result.weights)]
    files[ASSIGNMENTS_FILE] = csv_text(header, rows)

    if cfg.embedding:
        emb = result.embedding.embedding
        files[EMBEDDING_FILE] = csv_text(
            ["id", *[f"e{k}" for k in range(1, emb.shape[1] + 1)]],
            ([i, *map(float, row)] for i, row in zip(kept_ids, emb)),
        )
    report["warnings"] = warnings
    if cfg.timings:
        report["timings"] = {k: round(v, 6) for k, v in clock.stages.items()}
    files[REPORT_FILE] = json.dumps(report, indent=2, sort_keys=True) + "\n"
    return files, result


def write_outputs(output_dir, files: dict, graph=None) -> list:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        write_text_atomic(out / name, files[name])
        written.append(str(out / name))
    if graph is not None:
        tmp = out / f".{SIMILARITY_FILE}.tmp"
        write_similarity(graph, tmp)
        tmp.replace(out / SIMILARITY_FILE)
        written.append(str(out / SIMILARITY_FILE))
    return written


def run(config: RunConfig) -> list:
    """Full clustering run; returns the paths written.

    BLAS is held to one thread so results do not depend on ``threads``.
    """
    with threadpool_limits(limits=1):
        files, result = compute_run(config)
    return write_outputs(config.output_dir, files, result.graph if config.dump_similarity else None)


def run_measures(config: RunConfig, output=None) -> str:
    """Measures only; writes ``measures.csv`` and returns its path."""
    config.validate(need_k=False)
    with threadpool_limits(limits=1):
        ids, raw, column_ids = _measure(config, _Clock())
    if output is None:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        output = Path(config.output_dir) / MEASURES_FILE
    write_text_atomic(output, _measures_text(ids, raw, column_ids))
    return str(output)

