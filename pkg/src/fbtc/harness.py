"""Synthetic three-group data and label-agreement evaluation."""

from dataclasses import asdict, dataclass, field, replace
from math import comb
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from fbtc.errors import LengthMismatchError
from fbtc.trajectory import Trajectory, validate_trajectory


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the three-group generator.

    Each parameter is drawn uniformly from ``centre +/- half_width /
    separation``, so ``separation`` tightens every group around its centre
    without moving the centres. All groups share the same offset range, which
    makes them overlap in level and differ only in shape.

    Group 1: ``offset + slope * t``.
    Group 2: ``offset + jump * 1[t >= step_time]``.
    Group 3: ``offset + curvature * t**2``.
    """

    n_per_group: int = 15
    n_obs: int = 10
    noise_sd: float = 0.0
    separation: float = 1.0
    t_start: float = 0.0
    t_end: float = 1.0
    offset: tuple = (1.0, 1.0)
    slope: tuple = (2.0, 1.0)
    jump: tuple = (2.0, 1.0)
    step_time: tuple = (0.5, 0.05)
    curvature: tuple = (1.0, 0.5)


@dataclass
class LabeledDataset:
    trajectories: list
    labels: list
    generator_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) != len(self.trajectories):
            raise LengthMismatchError(
                f"{len(self.labels)} labels for {len(self.trajectories)} trajectories"
            )

    def __len__(self):
        return len(self.trajectories)

    @property
    def ids(self):
        return [tr.id for tr in self.trajectories]


def _draw(rng, centre_half, separation):
    centre, half = centre_half
    half = half / separation
    return float(rng.uniform(centre - half, centre + half))


def generate_three_group(
    n_per_group: int = 15,
    n_obs: int = 10,
    seed: int = 0,
    noise_sd: float = 0.0,
    separation: float = 1.0,
    config: Optional[GeneratorConfig] = None,
) -> LabeledDataset:
    """Linear, step and slow-quadratic growth groups on a shared equidistant grid.

    Trajectory ids are ``g{group}_{index:02d}``; labels are 1, 2, 3. Each
    trajectory has its own random stream derived from ``(seed, group, index)``.
    """
    cfg = config or GeneratorConfig()
    cfg = replace(cfg, n_per_group=n_per_group, n_obs=n_obs, noise_sd=noise_sd, separation=separation)
    if cfg.n_per_group < 2:
        raise ValueError("n_per_group must be at least 2")
    if cfg.n_obs < 3:
        raise ValueError("n_obs must be at least 3")
    if cfg.separation <= 0:
        raise ValueError("separation must be positive")
    t = np.linspace(cfg.t_start, cfg.t_end, cfg.n_obs)
    sep = cfg.separation
    trajectories, labels = [], []
    for group in (1, 2, 3):
        for i in range(cfg.n_per_group):
            rng = np.random.default_rng([int(seed), group, i])
            a = _draw(rng, cfg.offset, sep)
            if group == 1:
                y = a + _draw(rng, cfg.slope, sep) * t
            elif group == 2:
                c = _draw(rng, cfg.jump, sep)
                t_step = cfg.t_start + (cfg.t_end - cfg.t_start) * _draw(rng, cfg.step_time, sep)
                y = a + c * (t >= t_step)
            else:
                y = a + _draw(rng, cfg.curvature, sep) * ((t - cfg.t_start) / (cfg.t_end - cfg.t_start)) ** 2
            if cfg.noise_sd > 0:
                y = y + rng.normal(0.0, cfg.noise_sd, size=t.shape)
            trajectories.append(validate_trajectory(t, y, id=f"g{group}_{i + 1:02d}"))
            labels.append(group)
    spec = asdict(cfg)
    spec["seed"] = int(seed)
    return LabeledDataset(trajectories, labels, spec)


@dataclass
class EvaluationReport:
    """Agreement between found clusters and reference groups.

    ``contingency[i, j]`` counts items with reference label
    ``reference_labels[i]`` and found label ``found_labels[j]``.
    """

    contingency: np.ndarray
    reference_labels: list
    found_labels: list
    matched: int
    n: int
    ari: float
    matching: dict

    @property
    def accuracy(self) -> float:
        return self.matched / self.n

    def to_dict(self):
        return {
            "n": self.n,
            "matched": self.matched,
            "accuracy": self.accuracy,
            "ari": self.ari,
            "reference_labels": [str(x) for x in self.reference_labels],
            "found_labels": [str(x) for x in self.found_labels],
            "contingency": self.contingency.tolist(),
            "matching": {str(k): str(v) for k, v in self.matching.items()},
        }

    def format_table(self) -> str:
        head = ["ref\\found"] + [str(f) for f in self.found_labels]
        rows = [[str(r)] + [str(int(v)) for v in row] for r, row in zip(self.reference_labels, self.contingency)]
        width = max(len(c) for line in [head] + rows for c in line)
        return "\n".join(" ".join(c.rjust(width) for c in line) for line in [head] + rows)


def _sorted_unique(labels):
    uniq = list(dict.fromkeys(labels))
    try:
        return sorted(uniq)
    except TypeError:
        return sorted(uniq, key=str)


def contingency_table(found: Sequence, reference: Sequence):
    if len(found) != len(reference):
        raise LengthMismatchError(f"{len(found)} found labels vs {len(reference)} reference labels")
    rows = _sorted_unique(reference)
    cols = _sorted_unique(found)
    ri = {r: i for i, r in enumerate(rows)}
    ci = {c: j for j, c in enumerate(cols)}
    table = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for f, r in zip(found, reference):
        table[ri[r], ci[f]] += 1
    return table, rows, cols


def adjusted_rand_index(table) -> float:
    """Chance-corrected pair agreement from a contingency table."""
    table = np.asarray(table, dtype=np.int64)
    n = int(table.sum())
    total = comb(n, 2)
    index = sum(comb(int(v), 2) for v in table.ravel())
    rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    if total == 0:
        return 1.0
    expected = rows * cols / total
    best = 0.5 * (rows + cols)
    if best == expected:
        return 1.0
    return float((index - expected) / (best - expected))


def evaluate(found_labels: Sequence, reference_labels: Sequence) -> EvaluationReport:
    """Contingency table, best one-to-one matching accuracy and ARI."""
    found_labels = list(found_labels)
    reference_labels = list(reference_labels)
    table, rows, cols = contingency_table(found_labels, reference_labels)
    r, c = linear_sum_assignment(table, maximize=True)
    matched = int(table[r, c].sum())
    return EvaluationReport(
        contingency=table,
        reference_labels=rows,
        found_labels=cols,
        matched=matched,
        n=len(found_labels),
        ari=adjusted_rand_index(table),
        matching={rows[i]: cols[j] for i, j in zip(r, c)},
    )
