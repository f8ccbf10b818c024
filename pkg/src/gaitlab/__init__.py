"""Gait identification from MoCap cycles with learned and geometric features."""

from .errors import GaitlabError
from .gallery import Gallery, LocationTrace, calibrate_threshold, trace_quality
from .geometric import GeometricFeatureSpec, extract_geometric, parse_spec
from .learned import (
    FeatureModel,
    GaitTemplate,
    compute_scatter,
    fit_mmc,
    fit_model,
    fit_pcalda,
    load_model,
    project,
    save_model,
    template_distance,
)
from .metrics import (
    clustering_scores,
    davies_bouldin,
    kmeans,
    pr_auc,
    roc_auc,
    silhouette,
)
from .mocap import (
    Dataset,
    GaitSample,
    normalize_sample,
    parse_dataset,
    resample_cycle,
    vectorize,
    write_dataset,
)
from .skeleton import JOINTS, JointMask
from .synth import SynthParams, synthesize_dataset

__version__ = "0.1.0"

__all__ = [
    "GaitlabError",
    "Gallery",
    "LocationTrace",
    "calibrate_threshold",
    "trace_quality",
    "GeometricFeatureSpec",
    "extract_geometric",
    "parse_spec",
    "FeatureModel",
    "GaitTemplate",
    "compute_scatter",
    "fit_mmc",
    "fit_model",
    "fit_pcalda",
    "load_model",
    "project",
    "save_model",
    "template_distance",
    "clustering_scores",
    "davies_bouldin",
    "kmeans",
    "pr_auc",
    "roc_auc",
    "silhouette",
    "Dataset",
    "GaitSample",
    "normalize_sample",
    "parse_dataset",
    "resample_cycle",
    "vectorize",
    "write_dataset",
    "JOINTS",
    "JointMask",
    "SynthParams",
    "synthesize_dataset",
]
