"""Cross-identity experiments: discriminativeness, robustness, clusterability.

Every experiment fits models on the learning identities of a split and
scores templates of the disjoint evaluation identities. Results land in an
:class:`EvaluationReport`, one row per (method, split, corruption, metric).

Randomness is derived from the run seed and a textual cell id, so a cell's
result never depends on which other cells ran or in what order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GaitlabError, ParameterError, UndefinedScoreError
from .geometric import load_spec
from .learned import FeatureModel, fit_model
from .metrics import clustering_scores, evaluate, kmeans, whiten
from .mocap import DEFAULT_FRAMES, Dataset
from .skeleton import EXCLUSION_GROUPS, JOINTS, JointMask

logger = logging.getLogger(__name__)

SEPARATION_METRICS = ("dbi", "sc", "roc", "pr")
CLUSTER_METRICS = ("P", "RI", "F", "JI", "FMI")

# MMC row of the published clusterability table at the (9, 55) split
TABLE1_MMC = {"P": 0.4491, "RI": 0.9538, "F": 0.2147, "JI": 0.1203, "FMI": 0.2202}


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitConfiguration:
    learning: tuple[str, ...]
    evaluation: tuple[str, ...]

    def __post_init__(self):
        if not self.learning or not self.evaluation:
            raise ParameterError("learning and evaluation identity sets must be non-empty")
        if set(self.learning) & set(self.evaluation):
            raise ParameterError("learning and evaluation identities overlap")

    @property
    def size(self) -> tuple[int, int]:
        return len(self.learning), len(self.evaluation)

    def split(self, dataset: Dataset) -> tuple[Dataset, Dataset]:
        learn = dataset.subset(self.learning)
        held = dataset.subset(self.evaluation)
        assert not set(learn.class_counts) & set(held.class_counts)
        return learn, held


def configuration_sequence(dataset: Dataset | Sequence[str], start: tuple[int, int] = (2, 62),
                           end_learning: int = 32, seed: int = 0) -> list[SplitConfiguration]:
    """Splits growing the learning side by one random evaluation identity at a time.

    The first split draws ``start[0]`` learning and ``start[1]`` evaluation
    identities at random; the sequence stops once ``end_learning`` learning
    identities are reached.
    """
    identities = list(dataset.classes if isinstance(dataset, Dataset) else dataset)
    n_learn, n_eval = start
    if n_learn < 1 or n_eval < 1:
        raise ParameterError(f"start split must have both sides >= 1, got {start}")
    if n_learn + n_eval > len(identities):
        raise ParameterError(
            f"start split {start} needs {n_learn + n_eval} identities, dataset has {len(identities)}")
    if not n_learn <= end_learning < n_learn + n_eval:
        raise ParameterError(
            f"end_learning must lie in {n_learn}..{n_learn + n_eval - 1}, got {end_learning}")
    rng = np.random.default_rng(seed)
    order = [identities[i] for i in rng.permutation(len(identities))]
    learning = order[:n_learn]
    evaluation = order[n_learn:n_learn + n_eval]
    sequence = [SplitConfiguration(tuple(learning), tuple(evaluation))]
    while len(learning) < end_learning:
        moved = evaluation.pop(int(rng.integers(len(evaluation))))
        learning.append(moved)
        sequence.append(SplitConfiguration(tuple(learning), tuple(evaluation)))
    return sequence


def random_split(dataset: Dataset, n_learn: int, n_eval: int, seed: int) -> SplitConfiguration:
    return configuration_sequence(dataset, (n_learn, n_eval), n_learn, seed)[0]


# ---------------------------------------------------------------------------
# corruption
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionSpec:
    kind: str = "none"
    x: float = 0.0
    mask: JointMask | None = None
    name: str = ""

    KINDS = ("none", "mult", "subst", "exclude")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown corruption kind {self.kind!r}")
        if not 0 <= self.x <= 100:
            raise ParameterError(f"noise percentage must lie in [0, 100], got {self.x}")
        if self.kind == "exclude" and self.mask is None:
            raise ParameterError("joint exclusion needs a mask")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "exclude":
            return f"exclude:{self.name or ','.join(self.mask.names)}"
        return f"{self.kind}:{self.x:g}"

    @property
    def is_noise(self) -> bool:
        return self.kind in ("mult", "subst")

    @classmethod
    def parse(cls, text: str) -> "CorruptionSpec":
        """``none``, ``mult:30``, ``subst:30`` or ``exclude:<joint>[,<joint>...]``."""
        if text == "none":
            return cls()
        kind, _, arg = text.partition(":")
        if kind in ("mult", "subst"):
            return cls(kind, float(arg))
        if kind == "exclude":
            dropped = EXCLUSION_GROUPS.get(arg) or tuple(arg.split(","))
            return cls("exclude", mask=JointMask.excluding(dropped), name=arg)
        raise ParameterError(f"cannot parse corruption {text!r}")


def minmax_normalize(dataset: Dataset) -> Dataset:
    """Affinely map each coordinate axis onto [0, 1] over the whole dataset."""
    lo = np.min([s.frames.min(axis=(0, 1)) for s in dataset], axis=0)
    hi = np.max([s.frames.max(axis=(0, 1)) for s in dataset], axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return dataset.map(lambda s: s.with_frames(np.clip((s.frames - lo) / span, 0.0, 1.0)))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def corrupt_multiplicative(dataset: Dataset, x: float, seed) -> Dataset:
    """Scale every coordinate by an independent draw from ``U(1 - x/100, 1 + x/100)``."""
    if not 0 <= x <= 100:
        raise ParameterError(f"noise percentage must lie in [0, 100], got {x}")
    rng = _rng(seed)
    lo, hi = 1.0 - x / 100.0, 1.0 + x / 100.0
    return dataset.map(lambda s: s.with_frames(s.frames * rng.uniform(lo, hi, s.frames.shape)))


def corrupt_substitution(dataset: Dataset, x: float, seed) -> Dataset:
    """Replace each coordinate, with probability ``x/100``, by a ``U(0, 1)`` draw.

    Coordinates must already lie in [0, 1] (see :func:`minmax_normalize`).
    """
    if not 0 <= x <= 100:
        raise ParameterError(f"noise percentage must lie in [0, 100], got {x}")
    for s in dataset:
        if s.frames.min() < 0 or s.frames.max() > 1:
            raise ParameterError("substitution noise expects min-max normalized coordinates")
    rng = _rng(seed)
    p = x / 100.0

    def corrupt(s):
        hit = rng.random(s.frames.shape) < p
        fresh = rng.random(s.frames.shape)
        return s.with_frames(np.where(hit, fresh, s.frames))

    return dataset.map(corrupt)


def apply_noise(dataset: Dataset, corruption: CorruptionSpec, seed) -> Dataset:
    if corruption.kind == "mult":
        return corrupt_multiplicative(dataset, corruption.x, seed)
    if corruption.kind == "subst":
        return corrupt_substitution(dataset, corruption.x, seed)
    return dataset


def default_exclusions() -> list[CorruptionSpec]:
    """The 31 single-joint exclusions followed by the 14 joint-group exclusions."""
    singles = [CorruptionSpec("exclude", mask=JointMask.excluding([j]), name=j) for j in JOINTS]
    groups = [CorruptionSpec("exclude", mask=JointMask.excluding(js), name=name)
              for name, js in EXCLUSION_GROUPS.items()]
    return singles + groups


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def relative_scores(old: dict, new: dict) -> dict:
    """Percentages of a corrupted run against the clean baseline (100 = unchanged)."""
    if new["dbi"] == 0:
        raise UndefinedScoreError("DBI of the corrupted run is zero")
    if old["roc"] == 0 or old["pr"] == 0:
        raise UndefinedScoreError("baseline ROC or PR area is zero")
    if old["sc"] == -1:
        raise UndefinedScoreError("baseline silhouette is -1")
    return {
        "dbi": 100.0 * (old["dbi"] / new["dbi"]),
        "sc": 100.0 * ((new["sc"] + 1.0) / (old["sc"] + 1.0)),
        "roc": 100.0 * (new["roc"] / old["roc"]),
        "pr": 100.0 * (new["pr"] / old["pr"]),
    }


@dataclass(frozen=True)
class ReportRow:
    method: str
    config_learn: int
    config_eval: int
    corruption: str
    metric: str
    value: float
    relative_score: float | None = None


CSV_HEADER = ("method", "config_learn", "config_eval", "corruption", "metric", "value",
              "relative_score")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)

    def extend(self, other: "EvaluationReport") -> None:
        self.rows.extend(other.rows)
        self.errors.extend(other.errors)

    def select(self, **criteria) -> list[ReportRow]:
        return [r for r in self.rows
                if all(getattr(r, k) == v for k, v in criteria.items())]

    def value(self, **criteria) -> float:
        rows = self.select(**criteria)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {criteria}")
        return rows[0].value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.method, r.config_learn, r.config_eval, r.corruption, r.metric,
                        _fmt(r.value), _fmt(r.relative_score)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "rows": [dict(zip(CSV_HEADER, (r.method, r.config_learn, r.config_eval,
                                           r.corruption, r.metric, r.value, r.relative_score)))
                     for r in self.rows],
            "errors": self.errors,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def write(self, path) -> list[Path]:
        """Write the CSV at ``path``, its JSON mirror, and per-figure tables next to it."""
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        written = [path, path.with_suffix(".json")]
        written[1].write_text(self.to_json(), encoding="utf-8")
        for name, text in figure_tables(self).items():
            target = path.with_name(f"{path.stem}.{name}.csv")
            target.write_text(text, encoding="utf-8")
            written.append(target)
        return written


def _pivot(rows: Iterable[ReportRow], row_key, col_key, val) -> str:
    rows = list(rows)
    row_keys = list(dict.fromkeys(row_key(r) for r in rows))
    col_keys = list(dict.fromkeys(col_key(r) for r in rows))
    cells = {(row_key(r), col_key(r)): val(r) for r in rows}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *col_keys])
    for rk in row_keys:
        w.writerow([rk, *(_fmt(cells.get((rk, ck))) for ck in col_keys)])
    return buf.getvalue()


def figure_tables(report: EvaluationReport) -> dict[str, str]:
    """Wide tables laid out like the published figures, keyed by table name."""
    tables = {}
    config = lambda r: f"({r.config_learn},{r.config_eval})"  # noqa: E731
    clean = [r for r in report.rows if r.corruption == "none"]
    configs = {config(r) for r in clean}
    if len(configs) > 1:
        for m in SEPARATION_METRICS:
            sel = [r for r in clean if r.metric == m]
            if sel:
                tables[f"fig3_{m}"] = _pivot(sel, config, lambda r: r.method, lambda r: r.value)
    excl = [r for r in report.rows if r.corruption.startswith("exclude:")]
    if excl:
        tables["fig4"] = _pivot(excl, lambda r: r.corruption.split(":", 1)[1],
                                lambda r: r.metric, lambda r: r.relative_score)
    for kind in ("mult", "subst"):
        for m in ("roc", "pr"):
            sel = [r for r in report.rows if r.metric == m
                   and (r.corruption.startswith(kind + ":") or r.corruption == "none")]
            if any(r.corruption != "none" for r in sel):
                x = lambda r: "0" if r.corruption == "none" else r.corruption.split(":")[1]  # noqa: E731
                tables[f"fig5_{kind}_{m}"] = _pivot(sel, x, lambda r: r.method, lambda r: r.value)
    clus = [r for r in report.rows if r.metric in CLUSTER_METRICS]
    if clus:
        tables["table1"] = _pivot(clus, lambda r: r.method, lambda r: r.metric,
                                  lambda r: r.value)
    return tables


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def cell_rng(run_seed: int, cell_id: str) -> np.random.Generator:
    """Private generator of one experiment cell."""
    digest = int.from_bytes(hashlib.sha256(cell_id.encode()).digest()[:8], "little")
    return np.random.default_rng([int(run_seed), digest])


def _method_args(method: str, dataset: Dataset) -> dict:
    name, _, arg = method.partition(":")
    if name == "geometric":
        return {"method": "geometric", "spec": load_spec(arg or "preset-broad"),
                "frame_rate": dataset.frame_rate}
    if name == "pcalda" and arg:
        return {"method": "pcalda", "variance_keep": float(arg)}
    if name in ("mmc", "pcalda", "raw"):
        return {"method": name}
    raise ParameterError(f"unknown method {method!r}")


def fit_for(method: str, learn: Dataset, mask: JointMask | None = None,
            frames: int = DEFAULT_FRAMES) -> FeatureModel:
    """Fit a method given as ``mmc``, ``pcalda[:keep]``, ``raw`` or ``geometric[:spec]``."""
    return fit_model(learn=learn.samples, mask=mask, frames=frames, **_method_args(method, learn))


def score_templates(model: FeatureModel, held: Dataset,
                    metrics: Sequence[str] = SEPARATION_METRICS) -> dict:
    return evaluate(model.transform(held.samples), held.labels, model, metrics)


def run_sweep(methods: Sequence[str], dataset: Dataset, sequence: Sequence[SplitConfiguration],
              corruptions: Sequence[CorruptionSpec] | CorruptionSpec | None = None,
              seed: int = 0, frames: int = DEFAULT_FRAMES, corrupt_learn: bool = False,
              metrics: Sequence[str] = SEPARATION_METRICS) -> EvaluationReport:
    """Fit on each split's learning part and score its evaluation part.

    With corruptions, the clean run of each cell is the baseline and the
    corrupted rows carry relative scores. Noise runs use min-max normalized
    coordinates throughout, baseline included. Noise touches evaluation data
    only unless ``corrupt_learn``; joint exclusion refits on the masked data.
    Model failures are logged in ``report.errors`` and the sweep continues.
    """
    if not sequence:
        raise ParameterError("empty configuration sequence")
    if isinstance(corruptions, CorruptionSpec):
        corruptions = [corruptions]
    corruptions = [c for c in (corruptions or []) if c.kind != "none"]
    if any(c.is_noise for c in corruptions):
        dataset = minmax_normalize(dataset)
    report = EvaluationReport(metadata={
        "seed": seed, "frames": frames, "dataset": dataset.fingerprint(),
        "methods": list(methods), "corrupt_learn": corrupt_learn,
        "corruptions": [c.label for c in corruptions],
    })
    for config in sequence:
        n_learn, n_eval = config.size
        learn, held = config.split(dataset)
        for method in methods:
            def record(corruption, values, relative=None):
                for m in metrics:
                    rel = None if relative is None else relative.get(m)
                    report.rows.append(ReportRow(method, n_learn, n_eval, corruption.label, m,
                                                 float(values[m]), rel))

            def fail(corruption, exc):
                logger.warning("cell %s %s %s failed: %s", method, config.size,
                               corruption.label, exc)
                report.errors.append({"method": method, "config_learn": n_learn,
                                      "config_eval": n_eval, "corruption": corruption.label,
                                      "error": f"{type(exc).__name__}: {exc}"})

            clean = CorruptionSpec()
            try:
                model = fit_for(method, learn, frames=frames)
                baseline = score_templates(model, held, metrics)
            except GaitlabError as exc:
                fail(clean, exc)
                continue
            record(clean, baseline)
            for corruption in corruptions:
                cell = f"{n_learn},{n_eval}|{','.join(config.evaluation)}|{corruption.label}"
                try:
                    if corruption.kind == "exclude":
                        cmodel = fit_for(method, learn, corruption.mask, frames)
                        values = score_templates(cmodel, held, metrics)
                    else:
                        rng = cell_rng(seed, cell)
                        noisy_held = apply_noise(held, corruption, rng)
                        cmodel = model
                        if corrupt_learn:
                            cmodel = fit_for(method, apply_noise(learn, corruption, rng),
                                             frames=frames)
                        values = score_templates(cmodel, noisy_held, metrics)
                    rel = (relative_scores(baseline, values)
                           if set(SEPARATION_METRICS) <= set(metrics) else None)
                except GaitlabError as exc:
                    fail(corruption, exc)
                    continue
                record(corruption, values, rel)
    return report


def joint_exclusion_suite(dataset: Dataset, configuration: SplitConfiguration,
                          method: str = "mmc",
                          exclusions: Sequence[CorruptionSpec] | None = None,
                          seed: int = 0, frames: int = DEFAULT_FRAMES) -> EvaluationReport:
    """Baseline plus one refit per excluded joint or joint group."""
    exclusions = default_exclusions() if exclusions is None else list(exclusions)
    return run_sweep([method], dataset, [configuration], exclusions, seed, frames)


def run_robustness(methods: Sequence[str], dataset: Dataset, configuration: SplitConfiguration,
                   levels: Sequence[float] = (25, 50, 75, 100), kinds=("mult", "subst"),
                   seed: int = 0, frames: int = DEFAULT_FRAMES,
                   corrupt_learn: bool = False) -> EvaluationReport:
    """Noise sweep of every method on one split."""
    corruptions = [CorruptionSpec(kind, x) for kind in kinds for x in levels]
    return run_sweep(methods, dataset, [configuration], corruptions, seed, frames, corrupt_learn)


def run_clusterability(methods: Sequence[str], dataset: Dataset,
                       configuration: SplitConfiguration, K: int | None = None,
                       seed: int = 0, frames: int = DEFAULT_FRAMES,
                       restarts: int = 1, max_iter: int = 300) -> EvaluationReport:
    """K-Means (K defaults to the evaluation class count) scored against identities."""
    learn, held = configuration.split(dataset)
    n_learn, n_eval = configuration.size
    K = n_eval if K is None else K
    report = EvaluationReport(metadata={
        "seed": seed, "frames": frames, "dataset": dataset.fingerprint(),
        "methods": list(methods), "K": K, "restarts": restarts,
    })
    for method in methods:
        try:
            model = fit_for(method, learn, frames=frames)
            X = whiten(model.transform(held.samples), model)
            result = kmeans(X, K, int(cell_rng(seed, f"kmeans|{method}").integers(2**31)),
                            max_iter, restarts)
            scores = clustering_scores(result, held.labels)
        except GaitlabError as exc:
            report.errors.append({"method": method, "error": f"{type(exc).__name__}: {exc}"})
            continue
        for name, value in zip(CLUSTER_METRICS, scores[:5]):
            report.rows.append(ReportRow(method, n_learn, n_eval, "none", name, float(value)))
    return report


def compare_table1(scores: dict, tolerance: float = 0.08) -> dict:
    """Absolute gaps between clustering scores and the published MMC row."""
    gaps = {k: abs(scores[k] - v) for k, v in TABLE1_MMC.items()}
    return {"gaps": gaps, "within": all(g <= tolerance for g in gaps.values())}
