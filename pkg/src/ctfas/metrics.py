"""Biometric error metrics.

Two positive-class conventions coexist, both fixed here: the confusion
counts treat LIVE as positive (so FP is a spoof accepted as live and
APCER = FP / (FP + TN)), while AUC treats spoof as positive with the OOD
score as the ranking statistic. Ties in AUC count one half.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MetricError
from .validation import as_score_array, as_targets

EVAL_CSV_HEADER = "protocol,apcer,bpcer,acer,auc,threshold,n_live,n_spoof"


@dataclass(frozen=True)
class Confusion:
    """Counts with LIVE as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(labels, decisions) -> Confusion:
    """Count tp/tn/fp/fn from true labels and hard decisions."""
    y = as_targets(labels)
    d = as_targets(decisions)
    if y.shape != d.shape:
        raise ValueError(f"{y.shape[0]} labels but {d.shape[0]} decisions")
    if y.size == 0:
        raise ValueError("cannot build a confusion from zero samples")
    live_true = y == 0
    live_pred = d == 0
    return Confusion(
        tp=int(np.sum(live_true & live_pred)),
        tn=int(np.sum(~live_true & ~live_pred)),
        fp=int(np.sum(~live_true & live_pred)),
        fn=int(np.sum(live_true & ~live_pred)),
    )


def apcer_bpcer_acer(c: Confusion) -> tuple[float, float, float]:
    """APCER = FP/(FP+TN), BPCER = FN/(FN+TP), ACER = their mean."""
    if c.fp + c.tn == 0:
        raise MetricError("APCER undefined: no spoof samples evaluated")
    if c.fn + c.tp == 0:
        raise MetricError("BPCER undefined: no live samples evaluated")
    apcer = c.fp / (c.fp + c.tn)
    bpcer = c.fn / (c.fn + c.tp)
    return apcer, bpcer, (apcer + bpcer) / 2.0


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with spoof as the positive class: the fraction of
    (spoof, live) pairs where the spoof scores higher, ties counting 0.5."""
    s = as_score_array(scores)
    y = as_targets(labels)
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores but {y.shape[0]} labels")
    spoof = s[y == 1]
    live = np.sort(s[y == 0])
    if spoof.size == 0 or live.size == 0:
        raise MetricError("AUC undefined: both classes are required")
    wins = np.searchsorted(live, spoof, side="left").sum()
    ties = (np.searchsorted(live, spoof, side="right") - np.searchsorted(live, spoof, side="left")).sum()
    return float((int(wins) + 0.5 * int(ties)) / (spoof.size * live.size))


@dataclass
class EvalReport:
    apcer: float
    bpcer: float
    acer: float
    auc: float
    threshold: float
    protocol: str
    n_live: int
    n_spoof: int
    live_scores: np.ndarray
    spoof_scores: np.ndarray

    def to_dict(self, include_scores: bool = True) -> dict:
        out = {
            "protocol": self.protocol,
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "auc": self.auc,
            "threshold": self.threshold,
            "n_live": self.n_live,
            "n_spoof": self.n_spoof,
        }
        if include_scores:
            out["live_scores"] = [float(v) for v in self.live_scores]
            out["spoof_scores"] = [float(v) for v in self.spoof_scores]
        return out

    def write_json(self, path: Path | str, include_scores: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(include_scores), indent=2) + "\n")

    def csv_row(self) -> str:
        return (
            f"{self.protocol},{self.apcer!r},{self.bpcer!r},{self.acer!r},"
            f"{self.auc!r},{self.threshold!r},{self.n_live},{self.n_spoof}"
        )

    def summary(self) -> str:
        return (
            f"{self.protocol}: APCER {self.apcer:.4f}  BPCER {self.bpcer:.4f}  "
            f"ACER {self.acer:.4f}  AUC {self.auc:.4f}  threshold {self.threshold:.6f}"
        )


def evaluate_scores(sc_ood, labels, threshold: float, protocol: str) -> EvalReport:
    """Hard-decision metrics plus AUC for one protocol's scores."""
    s = as_score_array(sc_ood, "sc_ood")
    y = as_targets(labels)
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores but {y.shape[0]} labels")
    decisions = (s >= threshold).astype(np.int64)
    apcer, bpcer, acer = apcer_bpcer_acer(confusion(y, decisions))
    return EvalReport(
        apcer=apcer,
        bpcer=bpcer,
        acer=acer,
        auc=auc(s, y),
        threshold=float(threshold),
        protocol=str(protocol),
        n_live=int(np.sum(y == 0)),
        n_spoof=int(np.sum(y == 1)),
        live_scores=s[y == 0],
        spoof_scores=s[y == 1],
    )
