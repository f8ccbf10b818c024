"""Supervised linear feature learning and the template metric.

Two learners are provided. ``fit_mmc`` maximizes the margin criterion
``tr(W^T (S_b - S_w) W)`` over orthonormal ``W``, which needs no inverse of the
within-class scatter. ``fit_pcalda`` reduces with PCA first and then solves the
Fisher problem in the reduced space. Both attach a Mahalanobis metric whose
precision is the inverse of the pooled within-class covariance of the
projected learning data.

Both fits work in the span of the centered learning vectors. ``S_b`` and
``S_w`` vanish on its orthogonal complement, so every nonzero eigenpair lives
in the span and the reduction is exact, while keeping the eigenproblem at
``N x N`` instead of ``D x D``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateModelError,
    InsufficientClassesError,
    ParameterError,
    ShapeError,
)
from .geometric import GeometricFeatureSpec, extract_geometric, parse_spec
from .mocap import DEFAULT_FRAMES, GaitSample, vectorize, vectorize_all
from .skeleton import JointMask

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gaitlab-model"
MODEL_VERSION = 1
REGULARIZATION = 1e-6
# eigenvalues at or below this fraction of the total scatter count as zero
EIGEN_TOL = 1e-10


@dataclass(frozen=True)
class ScatterSummary:
    classes: list
    priors: np.ndarray
    mean: np.ndarray
    class_means: np.ndarray
    between: np.ndarray
    within: np.ndarray


@dataclass(frozen=True)
class GaitTemplate:
    features: np.ndarray
    label: str | None = None


@dataclass(frozen=True, eq=False)
class FeatureModel:
    """A fitted transform from gait samples to templates plus its metric.

    ``projection`` is ``None`` for the raw and geometric models (identity on
    the raw vector, and descriptor extraction, respectively). ``precision``
    is ``None`` for the Euclidean metric.
    """

    method: str
    mask: JointMask = field(default_factory=JointMask.full)
    frames: int = DEFAULT_FRAMES
    projection: np.ndarray | None = None
    precision: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    n_classes: int = 0
    n_samples: int = 0
    spec: GeometricFeatureSpec | None = None
    frame_rate: float | None = None

    @property
    def metric(self) -> str:
        return "euclidean" if self.precision is None else "mahalanobis"

    @property
    def d_in(self) -> int | None:
        if self.method == "geometric":
            return None
        if self.projection is not None:
            return self.projection.shape[1]
        return 3 * len(self.mask) * self.frames

    @property
    def d_out(self) -> int:
        if self.projection is not None:
            return self.projection.shape[0]
        if self.method == "geometric":
            return len(self.spec)
        return self.d_in

    def transform(self, samples: Sequence[GaitSample]) -> np.ndarray:
        """Templates of ``samples`` as an ``(N, d_out)`` array."""
        if self.method == "geometric":
            return np.stack([extract_geometric(s, self.spec, self.frame_rate) for s in samples])
        X = vectorize_all(samples, self.mask, self.frames)
        return X if self.projection is None else X @ self.projection.T

    def whiten(self, templates: np.ndarray) -> np.ndarray:
        """Map templates so that Euclidean distance equals the model distance."""
        templates = np.asarray(templates, dtype=np.float64)
        if self.precision is None:
            return templates
        return templates @ _cholesky(self.precision)


def _cholesky(precision: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(precision)


# ---------------------------------------------------------------------------
# scatter matrices
# ---------------------------------------------------------------------------

def _class_structure(labels) -> tuple[list, np.ndarray]:
    """Classes in first-appearance order and each sample's class index."""
    index = {}
    codes = np.empty(len(labels), dtype=np.int64)
    for n, lab in enumerate(labels):
        codes[n] = index.setdefault(lab, len(index))
    return list(index), codes


def _scatter(X: np.ndarray, codes: np.ndarray, n_classes: int):
    N = X.shape[0]
    counts = np.bincount(codes, minlength=n_classes).astype(np.float64)
    priors = counts / N
    sums = np.zeros((n_classes, X.shape[1]))
    np.add.at(sums, codes, X)
    means = sums / counts[:, None]
    mu = priors @ means
    diff = means - mu
    between = (diff * priors[:, None]).T @ diff
    resid = X - means[codes]
    # p_c / N_c == 1 / N for every class
    within = resid.T @ resid / N
    return priors, mu, means, (between + between.T) / 2, (within + within.T) / 2


def compute_scatter(vectors, labels) -> ScatterSummary:
    """Between- and within-class scatter with class priors ``N_c / N``."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(labels) != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} vectors but {len(labels)} labels")
    classes, codes = _class_structure(labels)
    if len(classes) < 2:
        raise InsufficientClassesError(f"need at least 2 classes, got {len(classes)}")
    priors, mu, means, between, within = _scatter(X, codes, len(classes))
    return ScatterSummary(classes, priors, mu, means, between, within)


def _span_basis(Xc: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the row space of centered data."""
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((Xc.shape[1], 0))
    rank = int(np.sum(s > s[0] * max(Xc.shape) * np.finfo(float).eps))
    return vt[:rank].T


def canonical_signs(W: np.ndarray) -> np.ndarray:
    """Flip rows so the first clearly nonzero entry of each is positive."""
    W = W.copy()
    for row in W:
        big = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if big.size and row[big[0]] < 0:
            row *= -1
    return W


def _within_precision(Z: np.ndarray, codes: np.ndarray, n_classes: int) -> np.ndarray:
    _, _, _, _, within = _scatter(Z, codes, n_classes)
    eps = REGULARIZATION * np.mean(np.diag(within))
    if eps <= 0:
        logger.warning("projected within-class covariance is zero; using Euclidean metric")
        return np.eye(Z.shape[1])
    precision = np.linalg.inv(within + eps * np.eye(Z.shape[1]))
    return (precision + precision.T) / 2


def _prepare(vectors, labels):
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(labels) != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} vectors but {len(labels)} labels")
    classes, codes = _class_structure(labels)
    if len(classes) < 2:
        raise InsufficientClassesError(f"need at least 2 classes, got {len(classes)}")
    return X, classes, codes


def fit_mmc(vectors, labels, mask: JointMask | None = None,
            frames: int = DEFAULT_FRAMES) -> FeatureModel:
    """Maximum margin criterion projection.

    Keeps every eigenvector of ``S_b - S_w`` with a positive eigenvalue,
    ordered by decreasing eigenvalue. Rows of the projection are orthonormal.
    """
    X, classes, codes = _prepare(vectors, labels)
    C = len(classes)
    mu = X.mean(axis=0)
    Q = _span_basis(X - mu)
    if Q.shape[1] == 0:
        raise DegenerateModelError("all learning vectors are identical")
    Y = (X - mu) @ Q
    _, _, _, Sb, Sw = _scatter(Y, codes, C)
    evals, evecs = np.linalg.eigh(Sb - Sw)
    tol = EIGEN_TOL * np.trace(Sb + Sw)
    keep = np.flatnonzero(evals > tol)[::-1]
    if keep.size == 0:
        raise DegenerateModelError(
            "S_b - S_w has no positive eigenvalue; classes are inseparable under the criterion")
    W = canonical_signs((Q @ evecs[:, keep]).T)
    precision = _within_precision(X @ W.T, codes, C)
    return FeatureModel("mmc", mask or JointMask.full(), frames, W, precision,
                        evals[keep].copy(), C, X.shape[0])


def fit_pcalda(vectors, labels, variance_keep: float = 0.99, mask: JointMask | None = None,
               frames: int = DEFAULT_FRAMES) -> FeatureModel:
    """PCA to ``variance_keep`` of the variance (at most ``N - C`` axes), then LDA."""
    if not 0 < variance_keep <= 1:
        raise ParameterError(f"variance_keep must lie in (0, 1], got {variance_keep}")
    X, classes, codes = _prepare(vectors, labels)
    N, C = X.shape[0], len(classes)
    mu = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mu, full_matrices=False)
    var = s ** 2 / N
    total = var.sum()
    if total <= 0:
        raise DegenerateModelError("learning vectors have zero variance")
    rank = int(np.sum(s > s[0] * max(X.shape) * np.finfo(float).eps))
    reached = np.cumsum(var) >= variance_keep * total * (1 - 1e-12)
    k = min(int(np.argmax(reached)) + 1, N - C, rank)
    if k < 1:
        raise DegenerateModelError(
            f"no within-class degrees of freedom (N={N}, C={C}) for PCA+LDA")
    P = vt[:k].T
    Y = (X - mu) @ P
    _, _, _, Sb, Sw = _scatter(Y, codes, C)
    eps = REGULARIZATION * np.mean(np.diag(Sw))
    if eps <= 0:
        eps = REGULARIZATION * np.mean(np.diag(Sb + Sw))
    evals, evecs = scipy.linalg.eigh(Sb, Sw + eps * np.eye(k))
    keep = np.flatnonzero(evals > EIGEN_TOL)[::-1][: C - 1]
    if keep.size == 0:
        raise DegenerateModelError("LDA found no positive discriminant eigenvalue")
    W = canonical_signs((P @ evecs[:, keep]).T)
    precision = _within_precision(X @ W.T, codes, C)
    return FeatureModel("pcalda", mask or JointMask.full(), frames, W, precision,
                        evals[keep].copy(), C, N)


def raw_model(mask: JointMask | None = None, frames: int = DEFAULT_FRAMES) -> FeatureModel:
    """Identity on raw vectors with the Euclidean metric."""
    return FeatureModel("raw", mask or JointMask.full(), frames)


def geometric_model(spec: GeometricFeatureSpec, frame_rate: float | None,
                    learn: Sequence[GaitSample] | None = None,
                    metric: str = "euclidean") -> FeatureModel:
    """Geometric descriptors; ``metric='mahalanobis'`` learns a precision from ``learn``."""
    precision = None
    n_classes = n_samples = 0
    if metric == "mahalanobis":
        if not learn:
            raise ParameterError("a Mahalanobis geometric model needs learning samples")
        F = np.stack([extract_geometric(s, spec, frame_rate) for s in learn])
        classes, codes = _class_structure([s.label for s in learn])
        precision = _within_precision(F, codes, len(classes))
        n_classes, n_samples = len(classes), len(learn)
    elif metric != "euclidean":
        raise ParameterError(f"unknown metric {metric!r}")
    return FeatureModel("geometric", JointMask.full(), DEFAULT_FRAMES, None, precision,
                        None, n_classes, n_samples, spec, frame_rate)


# ---------------------------------------------------------------------------
# templates and distances
# ---------------------------------------------------------------------------

def project(model: FeatureModel, v, label: str | None = None) -> GaitTemplate:
    """Template of one raw vector or one gait sample.

    For geometric models an array argument is taken to be an already
    extracted feature vector.
    """
    if isinstance(v, GaitSample):
        label = v.label if label is None else label
        if model.method == "geometric":
            feats = extract_geometric(v, model.spec, model.frame_rate)
            return GaitTemplate(feats, label)
        v = vectorize(v, model.mask, model.frames)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    expected = model.d_out if model.method == "geometric" else model.d_in
    if v.shape[0] != expected:
        raise ShapeError(f"expected a vector of length {expected}, got {v.shape[0]}")
    feats = v.copy() if model.projection is None else model.projection @ v
    return GaitTemplate(feats, label)


def _features(t, d: int) -> np.ndarray:
    f = np.asarray(t.features if isinstance(t, GaitTemplate) else t, dtype=np.float64)
    if f.shape != (d,):
        raise ShapeError(f"template has shape {f.shape}, model expects ({d},)")
    return f


def template_distance(model: FeatureModel, t1, t2) -> float:
    """``sqrt((t1 - t2)^T P (t1 - t2))``; ``P`` is the identity for Euclidean models."""
    diff = _features(t1, model.d_out) - _features(t2, model.d_out)
    if model.precision is None:
        return float(np.sqrt(diff @ diff))
    return float(np.sqrt(max(diff @ model.precision @ diff, 0.0)))


# ---------------------------------------------------------------------------
# fitting by name and model files
# ---------------------------------------------------------------------------

def fit_model(method: str, learn: Sequence[GaitSample], mask: JointMask | None = None,
              frames: int = DEFAULT_FRAMES, frame_rate: float | None = None,
              variance_keep: float = 0.99, spec: GeometricFeatureSpec | None = None,
              metric: str | None = None) -> FeatureModel:
    """Fit ``method`` (mmc, pcalda, raw or geometric) on learning samples."""
    mask = mask or JointMask.full()
    if method == "raw":
        return raw_model(mask, frames)
    if method == "geometric":
        if spec is None:
            raise ParameterError("geometric method needs a feature spec")
        if mask.included != JointMask.full().included:
            missing = spec.joints_used - set(mask.included)
            if missing:
                raise ParameterError("geometric features need excluded joints")
        return geometric_model(spec, frame_rate, learn, metric or "euclidean")
    labels = [s.label for s in learn]
    X = vectorize_all(learn, mask, frames)
    if method == "mmc":
        return fit_mmc(X, labels, mask, frames)
    if method == "pcalda":
        return fit_pcalda(X, labels, variance_keep, mask, frames)
    raise ParameterError(f"unknown method {method!r}")


def _matrix(a):
    return None if a is None else np.asarray(a, dtype=np.float64).tolist()


def model_to_dict(model: FeatureModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "method": model.method,
        "metric": model.metric,
        "mask": list(model.mask.included),
        "frames": model.frames,
        "frame_rate": model.frame_rate,
        "projection": _matrix(model.projection),
        "precision": _matrix(model.precision),
        "eigenvalues": _matrix(model.eigenvalues),
        "learning": {"classes": model.n_classes, "samples": model.n_samples},
        "spec": None if model.spec is None else model.spec.to_text(),
    }


def model_from_dict(doc: dict) -> FeatureModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ParameterError("not a gaitlab model document")
    if doc.get("version") != MODEL_VERSION:
        raise ParameterError(f"unsupported model version {doc.get('version')}")
    arr = lambda k: None if doc.get(k) is None else np.array(doc[k], dtype=np.float64)  # noqa: E731
    spec = None if doc.get("spec") is None else parse_spec(doc["spec"])
    return FeatureModel(doc["method"], JointMask(tuple(doc["mask"])), int(doc["frames"]),
                        arr("projection"), arr("precision"), arr("eigenvalues"),
                        doc["learning"]["classes"], doc["learning"]["samples"],
                        spec, doc.get("frame_rate"))


def save_model(model: FeatureModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> FeatureModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
