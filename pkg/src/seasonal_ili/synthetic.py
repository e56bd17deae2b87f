"""Seeded synthetic datasets with seasonal confounders.

The ILI signal is ``baseline + trend*t + amplitude*sin(2 pi t/S)`` plus
Gaussian outbreak bumps and white noise. Three kinds of query columns are
generated:

* relevant: the ILI signal shifted by ``relevant_lag`` weeks plus noise,
  so they carry the outbreaks;
* spurious: the seasonal + trend component only, with a per-column phase
  jitter and a little noise. They track the annual cycle closely but are
  blind to outbreaks;
* noise: white noise.

Every column is standardized (sample statistics). All draws come from a
single ``numpy.random.default_rng(seed)`` stream in this order: ILI noise,
then each column left to right (relevant, spurious, noise). For a spurious
column the phase jitter is drawn before its noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Optional

import numpy as np

from .errors import InvalidConfig
from .ranking import fixture_queries
from .timeseries import QueryPanel, WeeklySeries, WeekRange, pearson


@dataclass(frozen=True)
class Outbreak:
    week: int
    magnitude: float
    width: float

    def profile(self, t: np.ndarray) -> np.ndarray:
        return self.magnitude * np.exp(-0.5 * ((t - self.week) / self.width) ** 2)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    weeks: int = 520
    season_length: int = 52
    baseline: float = 3.0
    trend: float = 0.002
    seasonal_amplitude: float = 2.0
    outbreaks: tuple = ()
    n_relevant: int = 10
    n_spurious: int = 40
    n_noise: int = 50
    relevant_lag: int = 0
    noise_sd: float = 0.5
    relevant_noise_sd: float = 0.9
    spurious_noise_sd: float = 0.2
    phase_jitter: float = 2.0

    def __post_init__(self):
        object.__setattr__(
            self,
            "outbreaks",
            tuple(o if isinstance(o, Outbreak) else Outbreak(*o) for o in self.outbreaks),
        )
        if self.season_length < 2:
            raise InvalidConfig("season_length must be >= 2")
        if self.weeks < 2 * self.season_length:
            raise InvalidConfig(f"need at least two seasons ({2 * self.season_length} weeks), got {self.weeks}")
        if min(self.n_relevant, self.n_spurious, self.n_noise) < 0:
            raise InvalidConfig("query counts must be non-negative")
        if min(self.noise_sd, self.relevant_noise_sd, self.spurious_noise_sd, self.phase_jitter) < 0:
            raise InvalidConfig("noise levels and phase jitter must be non-negative")
        if any(o.width <= 0 for o in self.outbreaks):
            raise InvalidConfig("outbreak widths must be positive")

    @property
    def counts(self) -> tuple:
        return (self.n_relevant, self.n_spurious, self.n_noise)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["outbreaks"] = [[o.week, o.magnitude, o.width] for o in self.outbreaks]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        known["outbreaks"] = tuple(tuple(o) for o in known.get("outbreaks", ()))
        return cls(**known)


@dataclass(frozen=True)
class SynthDataset:
    ili: WeeklySeries
    panel: QueryPanel
    truth: dict
    config: SynthConfig


def _standardize(col: np.ndarray) -> np.ndarray:
    centered = col - col.mean()
    sd = centered.std(ddof=1)
    return centered / sd if sd > 0 else centered


def generate(config: SynthConfig) -> SynthDataset:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.weeks, dtype=np.float64)
    angle = 2.0 * np.pi * t / cfg.season_length
    seasonal = cfg.baseline + cfg.trend * t + cfg.seasonal_amplitude * np.sin(angle)
    outbreak = np.zeros(cfg.weeks)
    for o in cfg.outbreaks:
        outbreak += o.profile(t)
    ili = seasonal + outbreak + cfg.noise_sd * rng.standard_normal(cfg.weeks)

    lagged = ili[np.clip(np.arange(cfg.weeks) - cfg.relevant_lag, 0, cfg.weeks - 1)]
    columns, names, labels, jitters = [], [], [], []
    for k in range(cfg.n_relevant):
        columns.append(_standardize(lagged + cfg.relevant_noise_sd * rng.standard_normal(cfg.weeks)))
        names.append(f"relevant_{k + 1:02d}")
        labels.append(True)
    for k in range(cfg.n_spurious):
        shift = rng.uniform(-cfg.phase_jitter, cfg.phase_jitter) if cfg.phase_jitter > 0 else 0.0
        jitters.append(float(shift))
        cycle = cfg.trend * t + cfg.seasonal_amplitude * np.sin(2.0 * np.pi * (t + shift) / cfg.season_length)
        columns.append(_standardize(cycle + cfg.spurious_noise_sd * rng.standard_normal(cfg.weeks)))
        names.append(f"spurious_{k + 1:02d}")
        labels.append(False)
    for k in range(cfg.n_noise):
        columns.append(_standardize(rng.standard_normal(cfg.weeks)))
        names.append(f"noise_{k + 1:02d}")
        labels.append(False)

    matrix = np.column_stack(columns) if columns else np.empty((cfg.weeks, 0))
    truth = {
        "seasonal": seasonal,
        "outbreak": outbreak,
        "spurious_phase_shift": jitters,
        "kinds": ["relevant"] * cfg.n_relevant + ["spurious"] * cfg.n_spurious + ["noise"] * cfg.n_noise,
    }
    return SynthDataset(
        ili=WeeklySeries(0, ili),
        panel=QueryPanel(0, names, matrix, labels),
        truth=truth,
        config=cfg,
    )


def correlate_order(panel: QueryPanel, ili: WeeklySeries, span: Optional[WeekRange] = None) -> list:
    """Column order by descending correlation with raw ILI over ``span``.

    Emulates the order in which a correlation search service returns
    candidate queries; ties keep panel order, constant columns go last.
    """
    span = span or ili.span
    target = ili.slice(span.first, span.last).values
    rows = panel.slice(span.first, span.last).matrix
    scores = []
    for i in range(panel.n_queries):
        col = rows[:, i]
        scores.append(pearson(col, target) if np.ptp(col) > 0 else -np.inf)
    return sorted(range(panel.n_queries), key=lambda i: (-scores[i], i))


def as_correlate_export(dataset: SynthDataset, span: Optional[WeekRange] = None) -> SynthDataset:
    """Dataset whose panel columns are in correlation-search order (see correlate_order)."""
    order = correlate_order(dataset.panel, dataset.ili, span)
    truth = dict(dataset.truth)
    truth["kinds"] = [dataset.truth["kinds"][i] for i in order]
    truth["generated_index"] = order
    return replace(dataset, panel=dataset.panel.select(order), truth=truth)


@dataclass(frozen=True)
class Benchmark:
    """Frozen benchmark: generator settings plus the train/test split used to evaluate it."""

    synth: SynthConfig
    train_range: WeekRange
    test_range: WeekRange
    version: int = 1
    window: int = 104

    def dataset(self, seed: Optional[int] = None) -> SynthDataset:
        cfg = self.synth if seed is None else replace(self.synth, seed=seed)
        return as_correlate_export(generate(cfg), self.train_range)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "synth": self.synth.to_dict(),
            "train_range": [self.train_range.first, self.train_range.last],
            "test_range": [self.test_range.first, self.test_range.last],
            "window": self.window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Benchmark":
        return cls(
            synth=SynthConfig.from_dict(data["synth"]),
            train_range=WeekRange(*data["train_range"]),
            test_range=WeekRange(*data["test_range"]),
            version=int(data.get("version", 1)),
            window=int(data.get("window", 104)),
        )


def load_benchmark() -> Benchmark:
    text = resources.files("seasonal_ili.data").joinpath("benchmark.json").read_text()
    return Benchmark.from_dict(json.loads(text))


def fixture_dataset(seed: int = 42, weeks: int = 520) -> SynthDataset:
    """Synthetic frequencies under the 100 real query names, in their original order.

    Relevant-labelled names get relevant columns, the rest get spurious
    seasonal columns; labels follow the fixture.
    """
    fixture = fixture_queries()
    n_rel = sum(1 for _, rel in fixture if rel)
    cfg = SynthConfig(seed=seed, weeks=weeks, n_relevant=n_rel, n_spurious=len(fixture) - n_rel, n_noise=0)
    data = generate(cfg)
    rel_cols = iter(range(n_rel))
    spur_cols = iter(range(n_rel, len(fixture)))
    order = [next(rel_cols) if rel else next(spur_cols) for _, rel in fixture]
    panel = QueryPanel(
        0,
        [name for name, _ in fixture],
        data.panel.matrix[:, order],
        [rel for _, rel in fixture],
    )
    truth = dict(data.truth)
    truth["kinds"] = [data.truth["kinds"][i] for i in order]
    return SynthDataset(data.ili, panel, truth, cfg)
