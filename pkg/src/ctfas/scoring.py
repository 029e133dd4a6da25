"""Inference-time OOD scoring.

A sample's score combines two dissimilarities against the live prototypes:
the distance score (one minus cosine per modality) and the transition
score (one minus Pearson per canonical pair), mixed by lambda3. High
scores mean spoof; the decision rule is score >= threshold => SPOOF, with
the threshold picked by Youden's J on held-out scores.

Missing-modal protocols substitute features for absent modalities, either
from the auxiliary RGB-to-IR/depth encoders or by zero-padding the input
(the ablation baseline).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
import torch

from .encoders import FeatureVector, ModalityNet
from .errors import ConfigError
from .modalities import MODALITIES, TRANSITION_PAIRS, Label, Modality
from .prototypes import PrototypeStore
from .transitions import cosine_rows, pearson_rows
from .validation import as_targets

DEFAULT_LAMBDA3 = 0.5

SUBSTITUTION_AUXILIARY = "auxiliary"
SUBSTITUTION_ZERO = "zero"


class TestProtocol(Enum):
    P1_RGB = "P1"
    P2_RGB_D = "P2"
    P3_RGB_IR = "P3"
    P4_RGB_D_IR = "P4"

    def __str__(self) -> str:
        return self.value

    @property
    def available(self) -> frozenset[Modality]:
        return _PROTOCOL_MODALITIES[self]

    @property
    def requires_substitution(self) -> bool:
        return len(self.available) < len(MODALITIES)

    @classmethod
    def parse(cls, text) -> "TestProtocol":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).upper())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown protocol {text!r}; valid protocols: {valid}") from None


_PROTOCOL_MODALITIES = {
    TestProtocol.P1_RGB: frozenset({Modality.RGB}),
    TestProtocol.P2_RGB_D: frozenset({Modality.RGB, Modality.DEPTH}),
    TestProtocol.P3_RGB_IR: frozenset({Modality.RGB, Modality.IR}),
    TestProtocol.P4_RGB_D_IR: frozenset(MODALITIES),
}

PROTOCOLS = tuple(TestProtocol)


# ---------------------------------------------------------------------------
# feature assembly


def _check_substitution(substitution: str) -> None:
    if substitution not in (SUBSTITUTION_AUXILIARY, SUBSTITUTION_ZERO):
        raise ValueError(
            f"substitution must be {SUBSTITUTION_AUXILIARY!r} or {SUBSTITUTION_ZERO!r},"
            f" got {substitution!r}"
        )


def assemble_feature_matrix(
    net: ModalityNet,
    tensors: Mapping[Modality, torch.Tensor],
    protocol: TestProtocol,
    substitution: str = SUBSTITUTION_AUXILIARY,
) -> dict[Modality, torch.Tensor]:
    """Batchwise feature assembly under a protocol: real encoders for
    available modalities, substitutes for the rest."""
    _check_substitution(substitution)
    available = protocol.available
    missing = [m for m in MODALITIES if m not in available]
    if missing and substitution == SUBSTITUTION_AUXILIARY and not net.has_auxiliary():
        raise ConfigError(
            f"protocol {protocol} needs auxiliary features but the model was"
            " trained fixed-modal"
        )
    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            out = {m: net.encoders[m.value](tensors[m]) for m in available}
            if missing:
                if substitution == SUBSTITUTION_AUXILIARY:
                    aux = net.forward_auxiliary(tensors[Modality.RGB])
                    for m in missing:
                        out[m] = aux[m]
                else:
                    n, _, h, w = tensors[Modality.RGB].shape
                    for m in missing:
                        zeros = torch.zeros((n, m.channels, h, w), dtype=torch.float32)
                        out[m] = net.encoders[m.value](zeros)
    finally:
        if was_training:
            net.train()
    return out


def assemble_test_features(
    net: ModalityNet,
    tensors: Mapping[Modality, torch.Tensor],
    protocol: TestProtocol,
    substitution: str = SUBSTITUTION_AUXILIARY,
) -> dict[Modality, FeatureVector]:
    """Single-sample feature assembly; substituted features are flagged."""
    batch = {
        m: torch.as_tensor(np.asarray(t, dtype=np.float32)).unsqueeze(0)
        for m, t in tensors.items()
    }
    matrix = assemble_feature_matrix(net, batch, protocol, substitution)
    out = {}
    for m in MODALITIES:
        from_aux = m not in protocol.available and substitution == SUBSTITUTION_AUXILIARY
        out[m] = FeatureVector(
            values=matrix[m][0], source_modality=m, is_auxiliary=from_aux
        )
    return out


# ---------------------------------------------------------------------------
# scores


def _values(f) -> torch.Tensor:
    v = f.values if isinstance(f, FeatureVector) else torch.as_tensor(np.asarray(f))
    return v.detach().to(torch.float64)


def batch_scores(
    features: Mapping[Modality, torch.Tensor], store: PrototypeStore
) -> tuple[np.ndarray, np.ndarray]:
    """Distance and transition scores for a feature matrix, in float64."""
    feats = {m: features[m].detach().to(torch.float64) for m in MODALITIES}
    protos = {m: store.get(m).to(torch.float64) for m in MODALITIES}
    n = feats[Modality.RGB].shape[0]
    sc_d = torch.zeros(n, dtype=torch.float64)
    for m in MODALITIES:
        sc_d += 1.0 - cosine_rows(protos[m].unsqueeze(0).expand(n, -1), feats[m])
    proto_t = {p: protos[p.target] - protos[p.source] for p in TRANSITION_PAIRS}
    sc_t = torch.zeros(n, dtype=torch.float64)
    for p in TRANSITION_PAIRS:
        trans = feats[p.target] - feats[p.source]
        sc_t += 1.0 - pearson_rows(trans, proto_t[p])
    return sc_d.numpy(), sc_t.numpy()


def score_distance(features: Mapping[Modality, object], store: PrototypeStore) -> float:
    """Sum over modalities of (1 - cos(prototype, feature))."""
    matrix = {m: _values(features[m]).unsqueeze(0) for m in MODALITIES}
    sc_d, _ = batch_scores(matrix, store)
    return float(sc_d[0])


def score_transition(features: Mapping[Modality, object], store: PrototypeStore) -> float:
    """Sum over canonical pairs of (1 - Pearson(prototype transition,
    sample transition))."""
    matrix = {m: _values(features[m]).unsqueeze(0) for m in MODALITIES}
    _, sc_t = batch_scores(matrix, store)
    return float(sc_t[0])


def score_ood(sc_d: float, sc_t: float, lambda3: float = DEFAULT_LAMBDA3) -> float:
    """Weighted combination (1 - lambda3) * sc_t + lambda3 * sc_d."""
    if not 0.0 <= lambda3 <= 1.0:
        raise ValueError(f"lambda3 must be in [0, 1], got {lambda3}")
    return (1.0 - lambda3) * sc_t + lambda3 * sc_d


def classify_ood(score: float, threshold: float) -> Label:
    """SPOOF iff score >= threshold (boundary counts as spoof)."""
    return Label.SPOOF if score >= threshold else Label.LIVE


def diagnostic_votes(
    features: Mapping[Modality, object],
    store: PrototypeStore,
    alpha: float,
    beta: float,
) -> tuple[bool, bool]:
    """Two threshold votes: summed prototype cosine >= alpha and summed
    prototype-transition Pearson >= beta. Diagnostics only; never used for
    reported metrics."""
    sc_d = score_distance(features, store)
    sc_t = score_transition(features, store)
    return (3.0 - sc_d) >= alpha, (3.0 - sc_t) >= beta


# ---------------------------------------------------------------------------
# dataset scoring


@dataclass
class ScoreSet:
    ids: list[str]
    labels: np.ndarray
    sc_d: np.ndarray
    sc_t: np.ndarray
    lambda3: float

    @property
    def sc_ood(self) -> np.ndarray:
        return (1.0 - self.lambda3) * self.sc_t + self.lambda3 * self.sc_d

    def with_lambda3(self, lambda3: float) -> "ScoreSet":
        if not 0.0 <= lambda3 <= 1.0:
            raise ValueError(f"lambda3 must be in [0, 1], got {lambda3}")
        return ScoreSet(self.ids, self.labels, self.sc_d, self.sc_t, lambda3)


def score_dataset(
    net: ModalityNet,
    dataset,
    store: PrototypeStore,
    protocol: TestProtocol,
    lambda3: float = DEFAULT_LAMBDA3,
    substitution: str = SUBSTITUTION_AUXILIARY,
    batch_size: int = 256,
) -> ScoreSet:
    """Score every sample in a dataset under a protocol."""
    from .data import Batch

    if not 0.0 <= lambda3 <= 1.0:
        raise ValueError(f"lambda3 must be in [0, 1], got {lambda3}")
    ids: list[str] = []
    sc_d_parts = []
    sc_t_parts = []
    samples = dataset.samples
    for start in range(0, len(samples), batch_size):
        part = samples[start : start + batch_size]
        batch = Batch.from_samples(part)
        feats = assemble_feature_matrix(net, batch.tensors, protocol, substitution)
        sc_d, sc_t = batch_scores(feats, store)
        ids.extend(batch.ids)
        sc_d_parts.append(sc_d)
        sc_t_parts.append(sc_t)
    return ScoreSet(
        ids=ids,
        labels=dataset.labels(),
        sc_d=np.concatenate(sc_d_parts) if sc_d_parts else np.empty(0),
        sc_t=np.concatenate(sc_t_parts) if sc_t_parts else np.empty(0),
        lambda3=float(lambda3),
    )


# ---------------------------------------------------------------------------
# thresholding


def youden_candidates(scores: np.ndarray) -> np.ndarray:
    """Candidate thresholds: midpoints between consecutive distinct scores,
    plus sentinels below the minimum and above the maximum."""
    unique = np.unique(scores)
    mids = 0.5 * (unique[:-1] + unique[1:])
    return np.concatenate(([unique[0] - 1.0], mids, [unique[-1] + 1.0]))


def youden_threshold(scores: Sequence[float], labels) -> float:
    """Threshold maximizing J = sensitivity + specificity - 1, where spoof
    is the detection-positive class and the rule is score >= threshold =>
    SPOOF. Ties pick the smallest candidate."""
    s = np.asarray(scores, dtype=np.float64)
    y = as_targets(labels)
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores but {y.shape[0]} labels")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    spoof = np.sort(s[y == 1])
    live = np.sort(s[y == 0])
    if spoof.size == 0 or live.size == 0:
        raise ValueError("both classes are required to fit a threshold")
    cands = youden_candidates(s)
    sens = (spoof.size - np.searchsorted(spoof, cands, side="left")) / spoof.size
    spec = np.searchsorted(live, cands, side="left") / live.size
    j = sens + spec - 1.0
    return float(cands[int(np.argmax(j))])
