"""EMA prototypes of live features, one vector per modality.

The store tracks a running estimate of the mean live feature for each
modality. Every training step computes the live-row mean of the current
batch and folds it in:

    proto = (1 - gamma) * proto_prev + gamma * batch_live_mean

The very first update copies the batch mean so the estimate never mixes
with an arbitrary initial value. Prototypes are gradient constants: means
are detached before entering the store. Reading an un-updated store
raises ``StateError``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional

import torch

from .errors import FormatError, StateError
from .modalities import LIVE_TARGET, MODALITIES, TRANSITION_PAIRS, Modality, TransitionPair
from .tensorio import read_named_tensors, write_named_tensors

DEFAULT_GAMMA = 0.1


def _meta_path(bin_path: Path) -> Path:
    return bin_path.with_suffix(".json")


def batch_live_mean(
    features: Mapping[Modality, torch.Tensor], labels: torch.Tensor
) -> Optional[dict[Modality, torch.Tensor]]:
    """Per-modality mean over the live rows of a batch.

    ``labels`` is a (n,) integer tensor using LIVE_TARGET / SPOOF_TARGET.
    Returns None when the batch has no live rows (callers skip the EMA
    update for that batch).
    """
    if labels.dim() != 1:
        raise ValueError(f"labels must be 1-D, got shape {tuple(labels.shape)}")
    live = labels == LIVE_TARGET
    if int(live.sum()) == 0:
        return None
    means = {}
    for m in MODALITIES:
        feats = features[m]
        if feats.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{m}: {feats.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        means[m] = feats[live].mean(dim=0)
    return means


class PrototypeStore:
    """Running live-feature prototypes for the three modalities."""

    def __init__(self, dim: int, gamma: float = DEFAULT_GAMMA, dtype=torch.float32):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {gamma}")
        self.dim = int(dim)
        self.gamma = float(gamma)
        self.dtype = dtype
        self.update_count = 0
        self._values = {m: torch.zeros(self.dim, dtype=dtype) for m in MODALITIES}

    @property
    def initialized(self) -> bool:
        return self.update_count > 0

    def _require_initialized(self) -> None:
        if not self.initialized:
            raise StateError("prototypes read before any update")

    def get(self, modality: Modality) -> torch.Tensor:
        self._require_initialized()
        return self._values[modality]

    def as_dict(self) -> dict[Modality, torch.Tensor]:
        self._require_initialized()
        return dict(self._values)

    def ema_update(self, current_means: Mapping[Modality, torch.Tensor]) -> None:
        """Fold one batch of live means into the running prototypes.

        The first update copies the means outright; later updates take the
        convex combination with weight ``gamma`` on the new means.
        """
        staged = {}
        for m in MODALITIES:
            cur = current_means[m].detach().to(self.dtype)
            if cur.shape != (self.dim,):
                raise ValueError(f"{m}: expected shape ({self.dim},), got {tuple(cur.shape)}")
            if not bool(torch.isfinite(cur).all()):
                raise ValueError(f"{m}: non-finite batch mean")
            if self.update_count == 0:
                staged[m] = cur.clone()
            else:
                staged[m] = (1.0 - self.gamma) * self._values[m] + self.gamma * cur
        self._values.update(staged)
        self.update_count += 1

    def update_from_batch(
        self, features: Mapping[Modality, torch.Tensor], labels: torch.Tensor
    ) -> Optional[dict[Modality, torch.Tensor]]:
        """batch_live_mean + ema_update; no-op returning None on live-free batches."""
        means = batch_live_mean(features, labels)
        if means is not None:
            self.ema_update(means)
        return means

    def reset(self) -> None:
        self.update_count = 0
        self._values = {m: torch.zeros(self.dim, dtype=self.dtype) for m in MODALITIES}

    # -- persistence --------------------------------------------------------

    def save(self, bin_path: Path | str) -> None:
        """Write vectors to ``<bin_path>`` and metadata to the sibling .json."""
        self._require_initialized()
        bin_path = Path(bin_path)
        items = [(m.value, self._values[m].detach().cpu().numpy()) for m in MODALITIES]
        write_named_tensors(bin_path, items)
        meta = {
            "gamma": self.gamma,
            "initialized": self.initialized,
            "update_count": self.update_count,
            "dim": self.dim,
        }
        _meta_path(bin_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, bin_path: Path | str) -> "PrototypeStore":
        bin_path = Path(bin_path)
        meta_path = _meta_path(bin_path)
        if not meta_path.is_file():
            raise FormatError(f"missing prototype metadata: {meta_path}")
        meta = json.loads(meta_path.read_text())
        records = read_named_tensors(bin_path, [m.value for m in MODALITIES])
        store = cls(dim=int(meta["dim"]), gamma=float(meta["gamma"]))
        for m in MODALITIES:
            arr = records[m.value]
            if arr.ndim != 1 or arr.shape[0] != store.dim:
                raise FormatError(f"{m}: prototype record has shape {arr.shape}")
            store._values[m] = torch.from_numpy(arr.copy())
        store.update_count = int(meta["update_count"])
        if bool(meta["initialized"]) != store.initialized:
            raise FormatError("prototype metadata disagrees with update count")
        return store


def prototype_transitions(store: PrototypeStore) -> dict[TransitionPair, torch.Tensor]:
    """Transition vectors between the live prototypes, one per pair."""
    values = store.as_dict()
    return {pair: values[pair.target] - values[pair.source] for pair in TRANSITION_PAIRS}
