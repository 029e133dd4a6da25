"""Estimator-style wrapper around the training loop and OOD scorer.

``SpoofDetector`` follows the scikit-learn contract: constructor stores
hyperparameters verbatim, ``fit`` trains on a dataset (all state learned
by fitting lands in trailing-underscore attributes), and
``predict`` / ``decision_function`` / ``score_samples`` run protocol-aware
inference. The positive decision direction is spoof: decision_function
returns sc_ood minus the fitted threshold.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Dataset, read_dataset
from .errors import ConfigError
from .metrics import EvalReport
from .scoring import TestProtocol, score_dataset
from .trainer import Checkpoint, TrainConfig, evaluate, parse_scenario, train
from .validation import as_targets


class SpoofDetector(BaseEstimator):
    """Multi-modal anti-spoofing detector with prototype-based OOD scoring.

    Parameters mirror TrainConfig; ``protocol`` picks which modality set is
    assumed available at predict time (P1-P3 need scenario='missing').
    """

    def __init__(
        self,
        scenario: str = "fixed",
        protocol: str = "P4",
        epochs: int = 50,
        batch_size: int = 32,
        learning_rate: float = 5e-4,
        gamma: float = 0.1,
        lambda1: float = 0.005,
        lambda2: float = 0.5,
        lambda3: float = 0.5,
        feature_dim: int = 128,
        validation_fraction: float = 0.2,
        loss_reduction: str = "sum",
        seed: int = 0,
        deterministic: bool = True,
    ):
        self.scenario = scenario
        self.protocol = protocol
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.feature_dim = feature_dim
        self.validation_fraction = validation_fraction
        self.loss_reduction = loss_reduction
        self.seed = seed
        self.deterministic = deterministic

    # -- plumbing -------------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            scenario=parse_scenario(self.scenario),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            gamma=self.gamma,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            seed=self.seed,
            validation_fraction=self.validation_fraction,
            loss_reduction=self.loss_reduction,
            feature_dim=self.feature_dim,
            deterministic=self.deterministic,
        )

    @staticmethod
    def _as_dataset(X) -> Dataset:
        if isinstance(X, Dataset):
            return X
        if isinstance(X, (str, Path)):
            return read_dataset(X)
        raise ValueError(
            "X must be a Dataset or a dataset directory path, got "
            f"{type(X).__name__}"
        )

    def _require_fitted(self) -> None:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError(
                "this SpoofDetector is not fitted yet; call fit(X) first"
            )

    # -- sklearn API ------------------------------------------------------------

    def fit(self, X, y=None) -> "SpoofDetector":
        """Train on a dataset (directory path or Dataset). Labels live in
        the dataset itself; a ``y`` argument, if given, must agree."""
        dataset = self._as_dataset(X)
        if y is not None:
            given = as_targets(y)
            if not np.array_equal(given, dataset.labels()):
                raise ValueError("y disagrees with the labels stored in the dataset")
        config = self._train_config()
        protocol = TestProtocol.parse(self.protocol)
        checkpoint = train(config, dataset)
        if protocol not in checkpoint.supported_protocols():
            raise ConfigError(
                f"protocol {protocol} requires scenario='missing', got"
                f" scenario={self.scenario!r}"
            )
        self.checkpoint_: Checkpoint = checkpoint
        self.protocol_ = protocol
        self.threshold_ = checkpoint.thresholds[protocol]
        self.classes_ = np.array(["live", "spoof"], dtype=object)
        self.n_features_in_ = checkpoint.net.feature_dim
        return self

    def score_samples(self, X) -> np.ndarray:
        """Raw OOD scores (higher means more spoof-like)."""
        self._require_fitted()
        dataset = self._as_dataset(X)
        scores = score_dataset(
            self.checkpoint_.net,
            dataset,
            self.checkpoint_.store,
            self.protocol_,
            lambda3=self.lambda3,
            substitution=self.checkpoint_.substitution,
        )
        return scores.sc_ood

    def decision_function(self, X) -> np.ndarray:
        """Signed margin: positive means spoof (classes_[1])."""
        self._require_fitted()
        return self.score_samples(X) - self.threshold_

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]

    def evaluate(self, X, protocol=None, lambda3=None) -> EvalReport:
        """Full APCER/BPCER/ACER/AUC report on a labeled dataset."""
        self._require_fitted()
        dataset = self._as_dataset(X)
        target = self.protocol_ if protocol is None else protocol
        return evaluate(self.checkpoint_, dataset, target, lambda3=lambda3)
