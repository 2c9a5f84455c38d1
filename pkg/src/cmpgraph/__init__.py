"""Contextual matrix profiles, star graphs and graph-based anomaly scoring
for in-home activity sensor streams."""

from ._backend import BACKEND
from .alerts import AlertSeries, ThresholdConfig, threshold
from .cmp import Cmp, CmpConfig, compute_cmp, contextual_min_pool, full_distance_matrix
from .detectors import (CmpBaselineConfig, DominantConfig, GcnaeConfig, MlpaeConfig,
                        OcgnnConfig, score_cmp_baseline, score_dominant, score_gcnae,
                        score_mlpae, score_ocgnn)
from .evaluate import EvalReport, Margins, report
from .gnn import GcnEmbedder, TrainConfig, embed, embedding_deltas, train_embedder
from .graphs import ContextGraph, GraphStream, build_graph, build_stream
from .ingest import EventRecord, FeatureMatrix, dedupe, extract_features, ws_distance
from .series import ScoreSeries
from .synth import CohortSpec, generate_cohort

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AlertSeries", "ThresholdConfig", "threshold", "Cmp", "CmpConfig",
    "compute_cmp", "contextual_min_pool", "full_distance_matrix", "CmpBaselineConfig",
    "DominantConfig", "GcnaeConfig", "MlpaeConfig", "OcgnnConfig", "score_cmp_baseline",
    "score_dominant", "score_gcnae", "score_mlpae", "score_ocgnn", "EvalReport", "Margins",
    "report", "GcnEmbedder", "TrainConfig", "embed", "embedding_deltas", "train_embedder",
    "ContextGraph", "GraphStream", "build_graph", "build_stream", "EventRecord",
    "FeatureMatrix", "dedupe", "extract_features", "ws_distance", "ScoreSeries",
    "CohortSpec", "generate_cohort",
]
