"""Training objectives.

All feature arguments are per-modality batches: a mapping from Modality to
an (n, d) tensor. ``B_l`` holds live rows only, ``B_s`` spoof rows only,
``B_ls`` all rows. Every term is a plain sum over its index set, so an
empty index set contributes exactly 0 and an empty class never breaks a
step. ``reduction="mean"`` divides by the number of summed terms instead,
for batch-size-robust weight calibration; the default is the sum form.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import torch
import torch.nn.functional as F

from .errors import StateError
from .modalities import MODALITIES, TRANSITION_PAIRS, Modality
from .prototypes import PrototypeStore, prototype_transitions
from .transitions import cosine_matrix, cosine_rows, pearson_rows

AUX_MODALITIES = (Modality.IR, Modality.DEPTH)


class Scenario(Enum):
    FIXED_MODAL = "fixed_modal"
    MISSING_MODAL = "missing_modal"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.005
    lambda2: float = 0.5

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossBreakdown:
    l_ms: float
    l_ct: float
    l_md: float
    l_it: float
    l_cf: Optional[float]
    l_ce_rgb: float
    l_ce_ir: float
    l_ce_d: float
    total: float

    def as_row(self) -> dict[str, float]:
        row = {
            "l_ms": self.l_ms,
            "l_ct": self.l_ct,
            "l_md": self.l_md,
            "l_it": self.l_it,
            "l_cf": 0.0 if self.l_cf is None else self.l_cf,
            "l_ce_rgb": self.l_ce_rgb,
            "l_ce_ir": self.l_ce_ir,
            "l_ce_d": self.l_ce_d,
            "total": self.total,
        }
        return row


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=torch.float64)


def _reduce(total: torch.Tensor, n_terms: int, reduction: str) -> torch.Tensor:
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / n_terms if n_terms > 0 else total
    raise ValueError(f"unknown reduction: {reduction!r}")


def _batch_size(features: Mapping[Modality, torch.Tensor]) -> int:
    sizes = {int(features[m].shape[0]) for m in MODALITIES}
    if len(sizes) != 1:
        raise ValueError(f"modalities disagree on batch size: {sorted(sizes)}")
    return sizes.pop()


def loss_ms(B_l: Mapping[Modality, torch.Tensor], reduction: str = "sum") -> torch.Tensor:
    """Modality-specific contrastive loss over live features.

    For each anchor f_i of modality m1 the positives are every other live
    sample's m1 feature; the denominator holds only negatives: every live
    feature of the other two modalities, the anchor sample's own included.
    Each (i, j) term is -cos(pos) + logsumexp(negatives).
    """
    n = _batch_size(B_l)
    if n < 2:
        return _zero()
    total = None
    for m1 in MODALITIES:
        anchors = B_l[m1]
        negatives = torch.cat([B_l[m2] for m2 in MODALITIES if m2 is not m1], dim=0)
        pos = cosine_matrix(anchors, anchors)
        pos_sum = pos.sum(dim=1) - pos.diagonal()
        lse = torch.logsumexp(cosine_matrix(anchors, negatives), dim=1)
        contribution = ((n - 1) * lse - pos_sum).sum()
        total = contribution if total is None else total + contribution
    return _reduce(total, 3 * n * (n - 1), reduction)


def _sample_transitions(
    features: Mapping[Modality, torch.Tensor]
) -> dict[object, torch.Tensor]:
    return {p: features[p.target] - features[p.source] for p in TRANSITION_PAIRS}


def loss_ct(
    B_l: Mapping[Modality, torch.Tensor], store: PrototypeStore, reduction: str = "sum"
) -> torch.Tensor:
    """Consistent-transition loss: live transitions should correlate with
    the prototype transitions. Sum of (1 - Pearson) per sample per pair."""
    n = _batch_size(B_l)
    if n == 0:
        return _zero()
    proto = prototype_transitions(store)
    trans = _sample_transitions(B_l)
    total = None
    for pair in TRANSITION_PAIRS:
        term = (1.0 - pearson_rows(trans[pair], proto[pair].to(trans[pair].dtype))).sum()
        total = term if total is None else total + term
    return _reduce(total, 3 * n, reduction)


def loss_md(
    B_s: Mapping[Modality, torch.Tensor], store: PrototypeStore, reduction: str = "sum"
) -> torch.Tensor:
    """Modality-discriminative loss: cosine of spoof features against the
    live prototypes, summed; minimizing pushes spoofs off the prototypes."""
    n = _batch_size(B_s)
    if n == 0:
        return _zero()
    total = None
    for m in MODALITIES:
        proto = store.get(m).to(B_s[m].dtype).unsqueeze(0).expand_as(B_s[m])
        term = cosine_rows(proto, B_s[m]).sum()
        total = term if total is None else total + term
    return _reduce(total, 3 * n, reduction)


def loss_it(
    B_s: Mapping[Modality, torch.Tensor], store: PrototypeStore, reduction: str = "sum"
) -> torch.Tensor:
    """Inconsistent-transition loss: Pearson of spoof transitions against
    the prototype transitions, summed (minimized toward -1)."""
    n = _batch_size(B_s)
    if n == 0:
        return _zero()
    proto = prototype_transitions(store)
    trans = _sample_transitions(B_s)
    total = None
    for pair in TRANSITION_PAIRS:
        term = pearson_rows(trans[pair], proto[pair].to(trans[pair].dtype)).sum()
        total = term if total is None else total + term
    return _reduce(total, 3 * n, reduction)


def loss_cf(
    B_ls_targets: Mapping[Modality, torch.Tensor],
    B_ls_aux: Mapping[Modality, torch.Tensor],
    stop_target: bool = False,
    reduction: str = "sum",
) -> torch.Tensor:
    """Complementary-feature loss: align RGB-derived auxiliary features with
    the real IR and depth features, (1 - cos) summed over all batch rows.

    Gradients flow into both sides by default; ``stop_target`` detaches the
    real features so only the auxiliary encoders move.
    """
    total = None
    n = None
    for m in AUX_MODALITIES:
        target = B_ls_targets[m]
        aux = B_ls_aux[m]
        if target.shape != aux.shape:
            raise ValueError(
                f"{m}: target shape {tuple(target.shape)} vs aux {tuple(aux.shape)}"
            )
        if n is None:
            n = int(target.shape[0])
        if stop_target:
            target = target.detach()
        term = (1.0 - cosine_rows(target, aux)).sum()
        total = term if total is None else total + term
    if n == 0:
        return _zero()
    return _reduce(total, 2 * n, reduction)


def loss_ce(
    logits_per_modality: Mapping[Modality, torch.Tensor], labels: torch.Tensor
) -> dict[Modality, torch.Tensor]:
    """Per-modality mean two-class cross-entropy. Logit columns are ordered
    (live, spoof) to match the integer targets."""
    if labels.dim() != 1:
        raise ValueError(f"labels must be 1-D, got shape {tuple(labels.shape)}")
    bad = (labels < 0) | (labels > 1)
    if bool(bad.any()):
        raise ValueError("labels must be 0 (live) or 1 (spoof)")
    out = {}
    for m in MODALITIES:
        logits = logits_per_modality[m]
        if logits.dim() != 2 or logits.shape[1] != 2 or logits.shape[0] != labels.shape[0]:
            raise ValueError(f"{m}: expected ({labels.shape[0]}, 2) logits, got {tuple(logits.shape)}")
        out[m] = F.cross_entropy(logits, labels)
    return out


def total_loss(
    l_ms: torch.Tensor,
    l_ct: torch.Tensor,
    l_md: torch.Tensor,
    l_it: torch.Tensor,
    l_ce: Mapping[Modality, torch.Tensor],
    scenario: Scenario,
    weights: LossWeights = LossWeights(),
    l_cf: Optional[torch.Tensor] = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted total objective with the scenario switch.

    total = L_MS + L_CT + lambda1*(L_MD + L_IT) + [L_CF] + lambda2*sum(CE);
    the complementary term participates only in the missing-modal scenario,
    where it is required. Returns the differentiable scalar plus a float
    breakdown for logging.
    """
    if scenario is Scenario.FIXED_MODAL and l_cf is not None:
        raise StateError("complementary-feature loss supplied in fixed-modal scenario")
    if scenario is Scenario.MISSING_MODAL and l_cf is None:
        raise StateError("missing-modal scenario requires the complementary-feature loss")
    ce_sum = l_ce[Modality.RGB] + l_ce[Modality.IR] + l_ce[Modality.DEPTH]
    total = l_ms + l_ct + weights.lambda1 * (l_md + l_it) + weights.lambda2 * ce_sum
    if l_cf is not None:
        total = total + l_cf
    def item(x: torch.Tensor) -> float:
        return float(x.detach())

    breakdown = LossBreakdown(
        l_ms=item(l_ms),
        l_ct=item(l_ct),
        l_md=item(l_md),
        l_it=item(l_it),
        l_cf=None if l_cf is None else item(l_cf),
        l_ce_rgb=item(l_ce[Modality.RGB]),
        l_ce_ir=item(l_ce[Modality.IR]),
        l_ce_d=item(l_ce[Modality.DEPTH]),
        total=item(total),
    )
    return total, breakdown
