"""Zero-shot downstream heads: recognition scoring with video-level mAP and
natural-language-query grounding with recall@K at IoU thresholds.

Everything here is a pure function of frozen model outputs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import MomentPrediction
from .temporal import TemporalTable

log = logging.getLogger(__name__)


@dataclass
class NlqQuery:
    video_id: str
    concept_id: int
    gt_start: float
    gt_end: float


def recognition_scores(pred: MomentPrediction,
                       class_vectors: np.ndarray) -> np.ndarray:
    """Per-class score: mean cosine of all predicted visual embeddings."""
    visual = pred.visual.data if isinstance(pred, MomentPrediction) else np.asarray(pred)
    return (visual @ np.asarray(class_vectors).T).mean(axis=0)


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """AP of one class: mean precision at each positive's rank.

    Videos are ranked by descending score; ties keep original order.
    """
    order = np.argsort(-scores, kind="stable")
    hits = 0
    precisions = []
    for rank, idx in enumerate(order, start=1):
        if positives[idx]:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions))


def video_map(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean AP over classes with at least one positive video.

    scores: V x K score matrix; labels: V x K boolean multi-label matrix.
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=bool)
    aps = []
    for k in range(scores.shape[1]):
        if not labels[:, k].any():
            log.warning("class %d has no positive videos, excluded from mAP", k)
            continue
        aps.append(average_precision(scores[:, k], labels[:, k]))
    return float(np.mean(aps))


def rank_queries(pred: MomentPrediction, query_vec: np.ndarray):
    """Query slots sorted by cosine with the language query, descending."""
    sims = pred.visual.data @ np.asarray(query_vec).reshape(-1)
    order = np.argsort(-sims, kind="stable")
    return order, sims


def nlq_infer(pred: MomentPrediction, query_vec: np.ndarray,
              table: TemporalTable, duration: float,
              k: int) -> list[tuple[float, float]]:
    """Top-k decoded (start, end) intervals for one language query."""
    order, _ = rank_queries(pred, query_vec)
    out = []
    for i in order[:k]:
        s = table.decode_timestamp(pred.te_start.data[i], duration)
        e = table.decode_timestamp(pred.te_end.data[i], duration)
        if s > e:
            s, e = e, s
        out.append((s, e))
    return out


def temporal_iou(p: tuple[float, float], g: tuple[float, float]) -> float:
    inter = max(0.0, min(p[1], g[1]) - max(p[0], g[0]))
    union = max(p[1], g[1]) - min(p[0], g[0])
    if union <= 0.0:
        return 0.0
    return inter / union


def nlq_recall(gt_intervals: list[tuple[float, float]],
               predictions: list[list[tuple[float, float]]],
               k: int, iou_threshold: float) -> float:
    """Fraction of queries whose top-k predictions contain a hit."""
    hits = 0
    for gt, preds in zip(gt_intervals, predictions):
        if any(temporal_iou(p, gt) >= iou_threshold for p in preds[:k]):
            hits += 1
    return hits / len(gt_intervals)
