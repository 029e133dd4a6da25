"""Modality, label, and transition-pair vocabulary.

Everything downstream iterates modalities in the fixed canonical order
RGB, IR, DEPTH so that results are reproducible regardless of input order.
"""

from __future__ import annotations

import enum
from typing import NamedTuple


class Modality(enum.Enum):
    RGB = "rgb"
    IR = "ir"
    DEPTH = "depth"

    @property
    def channels(self) -> int:
        return 3 if self is Modality.RGB else 1

    def __str__(self) -> str:
        return self.value


#: Canonical iteration order for everything modality-indexed.
MODALITIES: tuple[Modality, ...] = (Modality.RGB, Modality.IR, Modality.DEPTH)


class Label(enum.Enum):
    LIVE = "live"
    SPOOF = "spoof"

    def __str__(self) -> str:
        return self.value


class AttackType(enum.Enum):
    PRINT = "print"
    REPLAY = "replay"
    MASK = "mask"

    def __str__(self) -> str:
        return self.value


ATTACK_TYPES: tuple[AttackType, ...] = (
    AttackType.PRINT,
    AttackType.REPLAY,
    AttackType.MASK,
)


class TransitionPair(NamedTuple):
    """A directed cross-modal transition, read as source -> target."""

    source: Modality
    target: Modality

    def __str__(self) -> str:
        return f"{self.source.value}->{self.target.value}"


#: The three directed pairs every transition statistic ranges over,
#: in fixed enumeration order.
TRANSITION_PAIRS: tuple[TransitionPair, ...] = (
    TransitionPair(Modality.RGB, Modality.IR),
    TransitionPair(Modality.RGB, Modality.DEPTH),
    TransitionPair(Modality.IR, Modality.DEPTH),
)

#: Integer class targets shared by label tensors and classifier logits.
LIVE_TARGET = 0
SPOOF_TARGET = 1


def label_target(label: Label) -> int:
    return LIVE_TARGET if label is Label.LIVE else SPOOF_TARGET
