"""The evaluation process: split, poison, build training sets, train, test,
and compare, repeated and swept over a parameter grid.

Every repetition compares four models on one held-out test set: a monolithic
forest and a hash-based ensemble, each trained on the clean and on the
poisoned training set.  ``delta = acc_poisoned - acc_clean``; negative means
the poisoning cost accuracy.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import time
import tracemalloc
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import fmean
from typing import Callable, Iterable, Sequence

import numpy as np

from . import seeding
from .dataset import Dataset, SplitSpec, load_csv, split_train_test
from .forest import ForestConfig, accuracy
from .hashens import EnsembleConfig, build_assignment, train_ensemble
from .poison import Perturbation, PoisonSpec, poison

try:
    import resource
except ImportError:  # pragma: no cover - non-Unix
    resource = None

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240601
STEPS = ("split", "poison", "partition", "train_monolithic_clean", "train_monolithic_poisoned",
         "train_ensemble_clean", "train_ensemble_poisoned", "test")


# -- metering ---------------------------------------------------------------

@dataclass(frozen=True)
class Measurement:
    wall_seconds: float
    cpu_user_seconds: float | None = None
    peak_memory_bytes: int | None = None


def _user_time() -> float | None:
    if resource is None:
        return None
    own = resource.getrusage(resource.RUSAGE_SELF).ru_utime
    children = resource.getrusage(resource.RUSAGE_CHILDREN).ru_utime
    return own + children


def _children_maxrss() -> int | None:
    if resource is None:
        return None
    return resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss * 1024


def meter(step: Callable[[], object], memory: bool = False):
    """Run ``step`` and return ``(result, Measurement)``.

    CPU user time covers this process plus any worker processes reaped while
    the step ran.  Peak memory is the tracemalloc peak of the step, raised to
    the peak RSS of worker processes when those grew larger; it is ``None``
    unless ``memory`` is set.
    """
    started_tracing = memory and not tracemalloc.is_tracing()
    if started_tracing:
        tracemalloc.start()
    elif memory:
        tracemalloc.reset_peak()
    rss_before = _children_maxrss()
    cpu0 = _user_time()
    t0 = time.perf_counter()
    try:
        value = step()
    finally:
        wall = time.perf_counter() - t0
        cpu1 = _user_time()
        peak = None
        if memory:
            peak = tracemalloc.get_traced_memory()[1]
            rss_after = _children_maxrss()
            if rss_after is not None and rss_after != rss_before:
                peak = max(peak, rss_after)
            if started_tracing:
                tracemalloc.stop()
    cpu = None if cpu0 is None or cpu1 is None else cpu1 - cpu0
    return value, Measurement(wall, cpu, peak)


# -- configuration and reports ---------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Path | None
    poison: PoisonSpec
    ensemble: EnsembleConfig
    split: SplitSpec = field(default_factory=SplitSpec)
    repetitions: int = 5
    meter_resources: bool = False
    seed: int = DEFAULT_SEED
    label_column: str | None = None
    resplit: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def coordinate(self) -> "Coordinate":
        eps_f = self.poison.epsilon_f if self.poison.kind.uses_features else 0.0
        return Coordinate(self.poison.kind, self.ensemble.n_models, self.poison.epsilon_p, eps_f)


@dataclass(frozen=True, order=True)
class Coordinate:
    kind: Perturbation
    n_models: int
    epsilon_p: float
    epsilon_f: float

    def key(self) -> str:
        return (f"{self.kind.value}_N{self.n_models}_p{_num(self.epsilon_p)}"
                f"_f{_num(self.epsilon_f)}")


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class ModelScores:
    acc_clean: float
    acc_poisoned: float
    delta: float

    @classmethod
    def of(cls, acc_poisoned: float, acc_clean: float) -> "ModelScores":
        return cls(acc_clean, acc_poisoned, delta(acc_poisoned, acc_clean))

    @classmethod
    def mean(cls, items: Sequence["ModelScores"]) -> "ModelScores":
        return cls.of(fmean(s.acc_poisoned for s in items), fmean(s.acc_clean for s in items))


@dataclass(frozen=True)
class RepetitionResult:
    repetition: int
    seed: int
    monolithic: ModelScores
    ensemble: ModelScores
    train_size: int
    test_size: int
    test_digest: str
    timings: dict = field(default_factory=dict, compare=False)
    cpu_user_seconds: float | None = field(default=None, compare=False)
    peak_memory_bytes: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class EvaluationReport:
    coordinate: Coordinate
    seed: int
    monolithic: ModelScores
    ensemble: ModelScores
    repetitions: tuple[RepetitionResult, ...]

    @property
    def timings(self) -> dict:
        """Mean wall-clock seconds per step across repetitions."""
        return {s: fmean(r.timings[s] for r in self.repetitions) for s in STEPS
                if all(s in r.timings for r in self.repetitions)}

    @property
    def cpu_user_seconds(self) -> float | None:
        vals = [r.cpu_user_seconds for r in self.repetitions]
        return None if any(v is None for v in vals) else fmean(vals)

    @property
    def peak_memory_bytes(self) -> int | None:
        vals = [r.peak_memory_bytes for r in self.repetitions]
        return None if any(v is None for v in vals) else max(vals)

    @classmethod
    def aggregate(cls, coordinate: Coordinate, seed: int,
                  reps: Sequence[RepetitionResult]) -> "EvaluationReport":
        return cls(coordinate, seed, ModelScores.mean([r.monolithic for r in reps]),
                   ModelScores.mean([r.ensemble for r in reps]), tuple(reps))

    def to_dict(self, metering: bool = False) -> dict:
        """Plain-data form.  Without ``metering`` the result depends only on
        data, configuration and seeds."""
        c = self.coordinate
        out = {
            "perturbation": c.kind.value, "n_models": c.n_models,
            "epsilon_p": c.epsilon_p, "epsilon_f": c.epsilon_f, "seed": self.seed,
            "monolithic": asdict(self.monolithic), "ensemble": asdict(self.ensemble),
            "repetitions": [],
        }
        for r in self.repetitions:
            rd = {"repetition": r.repetition, "seed": r.seed,
                  "monolithic": asdict(r.monolithic), "ensemble": asdict(r.ensemble),
                  "train_size": r.train_size, "test_size": r.test_size,
                  "test_digest": r.test_digest}
            if metering:
                rd.update(timings=dict(r.timings), cpu_user_seconds=r.cpu_user_seconds,
                          peak_memory_bytes=r.peak_memory_bytes)
            out["repetitions"].append(rd)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        coord = Coordinate(Perturbation(data["perturbation"]), int(data["n_models"]),
                           float(data["epsilon_p"]), float(data["epsilon_f"]))
        reps = tuple(
            RepetitionResult(r["repetition"], r["seed"], ModelScores(**r["monolithic"]),
                             ModelScores(**r["ensemble"]), r["train_size"], r["test_size"],
                             r["test_digest"], dict(r.get("timings", {})),
                             r.get("cpu_user_seconds"), r.get("peak_memory_bytes"))
            for r in data["repetitions"])
        return cls(coord, int(data["seed"]), ModelScores(**data["monolithic"]),
                   ModelScores(**data["ensemble"]), reps)


def delta(acc_poisoned: float, acc_clean: float) -> float:
    """Accuracy change caused by poisoning, in percentage points."""
    for v in (acc_poisoned, acc_clean):
        if not 0 <= v <= 100:
            raise ValueError(f"accuracy {v} outside [0, 100]")
    return acc_poisoned - acc_clean


# -- running ----------------------------------------------------------------

class ScoreCache:
    """Memoizes test accuracy of models that a sweep would otherwise retrain.

    Keys cover the training data digest and every training parameter, so a
    hit returns exactly what retraining would produce.  The clean models and
    the monolithic model are shared by many grid coordinates.
    """

    def __init__(self):
        self._store: dict = {}

    def get_or_train(self, train: Dataset, test: Dataset, cfg: EnsembleConfig, assignment,
                     workers: int, memory: bool):
        key = (train.digest(), test.digest(), cfg)
        if key not in self._store:
            model, m = meter(lambda: train_ensemble(train, cfg, workers, assignment), memory)
            self._store[key] = (accuracy(model, test), m)
        return self._store[key]


def _test_digest(test: Dataset) -> str:
    # recomputed from the arrays each time, never from the cached digest
    h = hashlib.sha256(np.ascontiguousarray(test.X).tobytes())
    h.update(np.ascontiguousarray(test.y).tobytes())
    return h.hexdigest()


def _split_seed(cfg: ExperimentConfig, repetition_seed: int) -> int:
    base = repetition_seed if cfg.resplit else cfg.seed
    return seeding.derive_seed(base, seeding.SPLIT)


def run_single(cfg: ExperimentConfig, repetition_seed: int, data: Dataset | None = None, *,
               repetition: int = 0, workers: int = 1,
               cache: ScoreCache | None = None) -> RepetitionResult:
    """One pass of the six-step process for a single repetition seed."""
    if data is None:
        data = load_csv(cfg.dataset, cfg.label_column)
    cache = cache or ScoreCache()
    memory = cfg.meter_resources
    timings: dict[str, float] = {}
    cpu_total = 0.0
    peak = 0
    cpu_known = True

    def step(name, fn):
        try:
            value, m = meter(fn, memory)
        except Exception as exc:
            raise RuntimeError(f"step {name!r} failed: {exc}") from exc
        record(name, m)
        return value

    def record(name, m: Measurement):
        nonlocal cpu_total, peak, cpu_known
        timings[name] = m.wall_seconds
        if m.cpu_user_seconds is None:
            cpu_known = False
        else:
            cpu_total += m.cpu_user_seconds
        if m.peak_memory_bytes is not None:
            peak = max(peak, m.peak_memory_bytes)

    split = replace(cfg.split, seed=_split_seed(cfg, repetition_seed))
    train, test = step("split", lambda: split_train_test(data, split))
    digest = _test_digest(test)

    pspec = replace(cfg.poison, seed=seeding.derive_seed(repetition_seed, seeding.POISON))
    poisoned = step("poison", lambda: poison(train, pspec))

    fcfg = replace(cfg.ensemble.forest_config,
                   seed=seeding.derive_seed(repetition_seed, seeding.FOREST))
    ens_cfg = replace(cfg.ensemble, forest_config=fcfg)
    mono_cfg = replace(ens_cfg, n_models=1)
    assignments = step("partition", lambda: {
        (which, c.n_models): build_assignment(ds, c)
        for which, ds in (("clean", train), ("poisoned", poisoned))
        for c in (mono_cfg, ens_cfg)})

    acc = {}
    for which, ds in (("clean", train), ("poisoned", poisoned)):
        for label, c in (("monolithic", mono_cfg), ("ensemble", ens_cfg)):
            try:
                acc[label, which], m = cache.get_or_train(
                    ds, test, c, assignments[which, c.n_models], workers, memory)
            except Exception as exc:
                raise RuntimeError(f"step 'train_{label}_{which}' failed: {exc}") from exc
            record(f"train_{label}_{which}", m)

    t0 = time.perf_counter()
    if _test_digest(test) != digest:
        raise RuntimeError("held-out test set changed during the run")
    timings["test"] = time.perf_counter() - t0

    return RepetitionResult(
        repetition, repetition_seed,
        ModelScores.of(acc["monolithic", "poisoned"], acc["monolithic", "clean"]),
        ModelScores.of(acc["ensemble", "poisoned"], acc["ensemble", "clean"]),
        len(train), len(test), digest, timings,
        cpu_total if cpu_known else None, peak if memory else None)


def repetition_seed(master: int, r: int) -> int:
    return seeding.derive_seed(master, seeding.REPETITION, r)


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None, *, workers: int = 1,
                   cache: ScoreCache | None = None) -> EvaluationReport:
    """All repetitions of one configuration, averaged."""
    if data is None:
        data = load_csv(cfg.dataset, cfg.label_column)
    cache = cache or ScoreCache()
    reps = [run_single(cfg, repetition_seed(cfg.seed, r), data, repetition=r,
                       workers=workers, cache=cache)
            for r in range(cfg.repetitions)]
    return EvaluationReport.aggregate(cfg.coordinate(), cfg.seed, reps)


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    n_models: tuple[int, ...]
    perturbations: tuple[Perturbation, ...]
    epsilon_p: tuple[float, ...]
    epsilon_f: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "perturbations",
                           tuple(Perturbation.parse(p) for p in self.perturbations))
        if not (self.n_models and self.perturbations and self.epsilon_p):
            raise ValueError("grid needs at least one N, perturbation and epsilon_p")
        if any(p.uses_features for p in self.perturbations) and not self.epsilon_f:
            raise ValueError("feature perturbations need at least one epsilon_f")

    def coordinates(self) -> list[Coordinate]:
        out = []
        for kind in self.perturbations:
            fs = self.epsilon_f if kind.uses_features else (0.0,)
            for ef, ep, n in itertools.product(fs, self.epsilon_p, self.n_models):
                out.append(Coordinate(kind, n, float(ep), float(ef)))
        return out


@dataclass
class SweepOutcome:
    reports: list[EvaluationReport]
    failures: dict[str, str]
    skipped: list[str]


def config_at(base: ExperimentConfig, c: Coordinate) -> ExperimentConfig:
    return replace(base,
                   poison=replace(base.poison, kind=c.kind, epsilon_p=c.epsilon_p,
                                  epsilon_f=c.epsilon_f),
                   ensemble=replace(base.ensemble, n_models=c.n_models))


def run_sweep(grid: Grid, base: ExperimentConfig, out_dir: Path | None = None, *,
              data: Dataset | None = None, workers: int = 1,
              progress: Callable[[str], None] | None = None) -> SweepOutcome:
    """Run every grid coordinate.

    With ``out_dir`` each finished coordinate is stored as JSON and found
    again on the next call, which then skips it.  A failing coordinate is
    recorded and the sweep carries on.
    """
    from . import report as reporting

    if data is None:
        data = load_csv(base.dataset, base.label_column)
    cache = ScoreCache()
    reports, failures, skipped = [], {}, []
    for c in grid.coordinates():
        key = c.key()
        if out_dir is not None:
            done = reporting.load_coordinate(out_dir, key)
            if done is not None:
                reports.append(done)
                skipped.append(key)
                continue
        try:
            rep = run_experiment(config_at(base, c), data, workers=workers, cache=cache)
        except Exception as exc:
            log.warning("coordinate %s failed: %s", key, exc)
            failures[key] = f"{type(exc).__name__}: {exc}"
            continue
        if out_dir is not None:
            reporting.store_coordinate(out_dir, key, rep)
        reports.append(rep)
        if progress:
            progress(key)
    return SweepOutcome(reports, failures, skipped)


# -- sustainability scaling -------------------------------------------------

def run_scaling(train: Dataset, n_models: Iterable[int], data_percents: Iterable[float] = (100,),
                feature_percents: Iterable[float] = (100,), *, forest: ForestConfig | None = None,
                repetitions: int = 1, workers: int = 1, seed: int = DEFAULT_SEED,
                memory: bool = True) -> list[dict]:
    """Training cost of monolithic (N=1) and ensemble models as N, the share
    of points and the share of features vary.  One row per setting, averaged
    over repetitions.  Subsamples are seeded random subsets, nested so that a
    smaller share is contained in every larger one.
    """
    forest = forest or ForestConfig()
    point_order = seeding.rng_for(seed, seeding.SELECT).permutation(len(train))
    feature_order = seeding.rng_for(seed, seeding.SELECT, 1).permutation(train.n_features)
    rows = []
    for dp, fp, n in itertools.product(data_percents, feature_percents, n_models):
        n_pts = max(n, seeding.percent_count(dp, len(train)))
        n_feat = max(1, seeding.percent_count(fp, train.n_features))
        sub = (train.subset(np.sort(point_order[:n_pts]))
               .select_features(np.sort(feature_order[:n_feat])))
        walls, cpus, peaks = [], [], []
        for r in range(repetitions):
            cfg = EnsembleConfig(n, forest_config=replace(
                forest, seed=seeding.derive_seed(seed, seeding.FOREST, r)))
            assignment, m_part = meter(lambda: build_assignment(sub, cfg), memory)
            _, m = meter(lambda: train_ensemble(sub, cfg, workers, assignment), memory)
            walls.append(m.wall_seconds)
            cpus.append(m.cpu_user_seconds)
            peaks.append(None if m.peak_memory_bytes is None
                         else max(m.peak_memory_bytes, m_part.peak_memory_bytes or 0))
        rows.append({
            "n_models": n, "data_percent": dp, "feature_percent": fp,
            "points": n_pts, "features": n_feat,
            "wall_seconds": fmean(walls),
            "cpu_user_seconds": None if None in cpus else fmean(cpus),
            "peak_memory_bytes": None if None in peaks else max(peaks),
        })
    return rows
