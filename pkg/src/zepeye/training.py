"""Training recipe for the two illumination branches on synthetic faces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config, Illumination
from .dataset import LATERAL_RANGES, Corpus, VariationRanges, build_corpus
from .localizer import DEFAULT_CONFIG
from .mlp import Mlp, accuracy, mlp_new, train

# Negatives sampled outside the overlap band but within reach of the scan;
# without them the network is never shown most of what the ROI scan visits.
PIPELINE_FAR_NEGATIVES = 50
PIPELINE_TRAIN_FACES = {Illumination.FRONTAL: 120, Illumination.LATERAL: 80}


def branch_ranges(mode: Illumination) -> VariationRanges:
    return LATERAL_RANGES if mode is Illumination.LATERAL else VariationRanges()


@dataclass
class BranchModel:
    mode: Illumination
    model: Mlp
    corpus: Corpus
    trace: list[float]

    def validation_mse(self) -> float:
        v = self.corpus.val
        return float(np.mean((self.model.forward_batch(v.features) - v.targets) ** 2))

    def validation_accuracy(self) -> float:
        return accuracy(self.model, self.corpus.val)


def train_branch(mode: Illumination, n_faces: int | None = None, n_val_faces: int = 20,
                 seed: int = 0, config: Config = DEFAULT_CONFIG,
                 far_negatives: int = PIPELINE_FAR_NEGATIVES,
                 epochs: int | None = None) -> BranchModel:
    """Train the model for one branch on faces that the detector assigns to it."""
    params = config.mode(mode)
    n_faces = PIPELINE_TRAIN_FACES[mode] if n_faces is None else n_faces
    cfg = config.replace(far_negatives_per_eye=far_negatives)
    stream_seed = seed * 2 + (1 if mode is Illumination.LATERAL else 0)
    corpus = build_corpus(n_faces, branch_ranges(mode), seed=stream_seed,
                          head=params.training_scheme, n_val_faces=n_val_faces,
                          illumination=mode, config=cfg)
    hidden = config.hidden_units or None
    init = mlp_new(config.feature_length, hidden, head=params.training_scheme, seed=seed)
    model, trace = train(init, corpus.train, config.train_epochs if epochs is None else epochs,
                         config.learning_rate, seed)
    return BranchModel(mode, model, corpus, trace)


__all__ = ["BranchModel", "train_branch", "branch_ranges", "PIPELINE_FAR_NEGATIVES",
           "PIPELINE_TRAIN_FACES"]
