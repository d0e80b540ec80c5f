"""Moment-set prediction pre-training on synthetic untrimmed videos.

Aligns language, visual, and temporal embeddings of video moments via
learnable queries, bipartite matching, and a sigmoid contrastive loss;
supports zero-shot recognition scoring and temporal grounding.
"""

from .config import RunConfig
from .model import ModelConfig, MomentPrediction, MomentSetModel
from .temporal import TemporalTable
from .tensor import Tensor

__all__ = [
    "ModelConfig",
    "MomentPrediction",
    "MomentSetModel",
    "RunConfig",
    "TemporalTable",
    "Tensor",
]

__version__ = "0.1.0"
