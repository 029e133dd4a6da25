"""Cosine / Pearson kernels, cross-modal feature transitions, and the
correlation analyses built on them.

Two layers live here:

* differentiable torch kernels (``cosine_rows``, ``pearson_rows``, ...)
  shared by the training losses and the OOD scores;
* plain-float wrappers (``cosine_similarity``, ``pearson``, ``transition``)
  plus the dataset-level correlation report used for analysis output.

Degenerate-input rule: a vector with L2 norm below ``EPS`` has cosine 0
against anything, and a vector whose component variance is below ``EPS``
has Pearson correlation 0 against anything. Hard zero, never NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
import torch

from .modalities import MODALITIES, TRANSITION_PAIRS, Label, Modality, TransitionPair

if TYPE_CHECKING:  # pragma: no cover
    from .data import Dataset
    from .encoders import ModalityNet
    from .prototypes import PrototypeStore

#: Norm / variance floor below which correlations are defined as 0.
EPS = 1e-8

HISTOGRAM_BINS = 50


# ---------------------------------------------------------------------------
# differentiable kernels


def _unit_rows(x: torch.Tensor) -> torch.Tensor:
    """L2-normalize rows; rows with norm < EPS become zero rows."""
    norms = torch.linalg.vector_norm(x, dim=-1, keepdim=True)
    valid = norms >= EPS
    safe = torch.where(valid, norms, torch.ones_like(norms))
    return torch.where(valid, x / safe, torch.zeros_like(x))


def cosine_rows(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise cosine similarity of two (n, d) tensors (broadcastable)."""
    out = (_unit_rows(a) * _unit_rows(b)).sum(dim=-1)
    return out.clamp(-1.0, 1.0)


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """All-pairs cosine similarity, (n, d) x (m, d) -> (n, m)."""
    out = _unit_rows(a) @ _unit_rows(b).transpose(-1, -2)
    return out.clamp(-1.0, 1.0)


def _center_rows(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    centered = x - x.mean(dim=-1, keepdim=True)
    variance = (centered * centered).mean(dim=-1)
    return centered, variance


def _pearson_unit_rows(x: torch.Tensor) -> torch.Tensor:
    """Center rows and scale so that row dot products are correlations."""
    centered, variance = _center_rows(x)
    d = x.shape[-1]
    valid = (variance >= EPS).unsqueeze(-1)
    scale = torch.where(
        valid, torch.sqrt(variance.unsqueeze(-1) * d), torch.ones_like(variance).unsqueeze(-1)
    )
    return torch.where(valid, centered / scale, torch.zeros_like(centered))


def pearson_rows(t: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Row-wise Pearson correlation between (n, d) rows and a (d,) reference.

    Components are the observations: covariance is taken over the d feature
    dimensions of each row.
    """
    ref = reference.reshape(1, -1) if reference.dim() == 1 else reference
    out = (_pearson_unit_rows(t) * _pearson_unit_rows(ref)).sum(dim=-1)
    return out.clamp(-1.0, 1.0)


def pearson_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """All-pairs Pearson correlation, (n, d) x (m, d) -> (n, m)."""
    out = _pearson_unit_rows(a) @ _pearson_unit_rows(b).transpose(-1, -2)
    return out.clamp(-1.0, 1.0)


# ---------------------------------------------------------------------------
# scalar wrappers


def _as_vector(x, name: str, min_len: int = 1) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        vec = x.detach().to(torch.float64)
    else:
        vec = torch.as_tensor(np.asarray(x, dtype=np.float64))
    if vec.dim() != 1:
        raise ValueError(f"{name} must be 1-D, got shape {tuple(vec.shape)}")
    if vec.shape[0] < min_len:
        raise ValueError(f"{name} needs at least {min_len} components, got {vec.shape[0]}")
    return vec


def cosine_similarity(a, b) -> float:
    """Cosine similarity of two equal-length vectors; 0 if either is ~zero."""
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise ValueError(f"length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(cosine_rows(va.unsqueeze(0), vb.unsqueeze(0))[0])


def pearson(a, b) -> float:
    """Pearson correlation over vector components; 0 if either is ~constant."""
    va = _as_vector(a, "a", min_len=2)
    vb = _as_vector(b, "b", min_len=2)
    if va.shape != vb.shape:
        raise ValueError(f"length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(pearson_rows(va.unsqueeze(0), vb)[0])


def transition(f_src, f_tgt) -> np.ndarray:
    """Directional feature transition: component-wise target minus source."""
    src = np.asarray(f_src, dtype=np.float64)
    tgt = np.asarray(f_tgt, dtype=np.float64)
    if src.shape != tgt.shape:
        raise ValueError(f"length mismatch: {src.shape} vs {tgt.shape}")
    return tgt - src


def average_transition_correlation(
    samples: Sequence[Mapping[Modality, object]], pair: TransitionPair
) -> float:
    """Mean Pearson correlation of one pair's transition vectors over all
    ordered sample pairs i != j (each sample against every other)."""
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    rows = [
        transition(feats[pair.source], feats[pair.target]) for feats in samples
    ]
    t = torch.as_tensor(np.stack(rows))
    corr = pearson_matrix(t, t)
    off_diagonal = corr.sum() - corr.diagonal().sum()
    return float(off_diagonal / (n * (n - 1)))


# ---------------------------------------------------------------------------
# correlation report (analysis output)


@dataclass
class CorrelationReport:
    """Histogram bundle for within-modality cosine similarities and
    sample-vs-prototype transition correlations, split by class."""

    bin_edges: np.ndarray
    histograms: dict[str, np.ndarray]
    means: dict[str, float | None]
    n_live: int
    n_spoof: int
    empty_classes: tuple[str, ...]

    def write_csv(self, path: Path | str) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["histogram_name", "bin_left", "bin_right", "count"])
            for name in self.histograms:
                counts = self.histograms[name]
                for i, count in enumerate(counts):
                    writer.writerow(
                        [
                            name,
                            repr(float(self.bin_edges[i])),
                            repr(float(self.bin_edges[i + 1])),
                            int(count),
                        ]
                    )

    def write_summary(self, path: Path | str) -> None:
        payload = {
            "n_live": self.n_live,
            "n_spoof": self.n_spoof,
            "empty_classes": list(self.empty_classes),
            "means": self.means,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def render(self, out_dir: Path | str) -> list[Path]:
        """Optional: one bar-chart image per histogram (needs matplotlib)."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        width = float(self.bin_edges[1] - self.bin_edges[0])
        for name, counts in self.histograms.items():
            fig, ax = plt.subplots(figsize=(4, 3))
            ax.bar(centers, counts, width=width * 0.95)
            mean = self.means.get(name)
            title = name if mean is None else f"{name} (mean {mean:.3f})"
            ax.set_title(title, fontsize=9)
            ax.set_xlim(-1.05, 1.05)
            fig.tight_layout()
            path = out_dir / f"{name}.png"
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
        return written


def _histogram(values: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
    return counts.astype(np.int64)


def correlation_report(
    dataset: "Dataset",
    net: "ModalityNet",
    store: "PrototypeStore",
    batch_size: int = 256,
) -> CorrelationReport:
    """Encode every sample and histogram (a) within-class pairwise cosine
    similarity per modality and (b) per-pair Pearson correlation between
    sample transitions and the live-prototype transitions, per class.

    An absent class yields empty histograms and ``None`` means, and is
    listed in ``empty_classes``.
    """
    from .encoders import encode_dataset_features
    from .prototypes import prototype_transitions

    if len(dataset.samples) == 0:
        raise ValueError("dataset is empty")

    features = encode_dataset_features(net, dataset, batch_size=batch_size)
    labels = np.array(
        [0 if s.label is Label.LIVE else 1 for s in dataset.samples], dtype=np.int64
    )
    class_index = {"live": np.nonzero(labels == 0)[0], "spoof": np.nonzero(labels == 1)[0]}

    proto = {
        pair: proto_t.detach().to(torch.float64)
        for pair, proto_t in prototype_transitions(store).items()
    }

    bin_edges = np.linspace(-1.0, 1.0, HISTOGRAM_BINS + 1)
    histograms: dict[str, np.ndarray] = {}
    means: dict[str, float | None] = {}

    def record(name: str, values: np.ndarray) -> None:
        histograms[name] = _histogram(values)
        means[name] = float(values.mean()) if values.size else None

    for m in MODALITIES:
        feats = torch.as_tensor(features[m], dtype=torch.float64)
        for cls, idx in class_index.items():
            if idx.size >= 2:
                sub = feats[idx]
                sims = cosine_matrix(sub, sub).numpy()
                vals = sims[np.triu_indices(idx.size, k=1)]
            else:
                vals = np.empty(0)
            record(f"cosine_{m.value}_{cls}", vals)

    for pair in TRANSITION_PAIRS:
        trans = torch.as_tensor(
            features[pair.target] - features[pair.source], dtype=torch.float64
        )
        name_base = f"transition_{pair.source.value}_{pair.target.value}"
        for cls, idx in class_index.items():
            if idx.size:
                vals = pearson_rows(trans[idx], proto[pair]).numpy()
            else:
                vals = np.empty(0)
            record(f"{name_base}_{cls}", vals)

    empty = tuple(cls for cls, idx in class_index.items() if idx.size == 0)
    return CorrelationReport(
        bin_edges=bin_edges,
        histograms=histograms,
        means=means,
        n_live=int(class_index["live"].size),
        n_spoof=int(class_index["spoof"].size),
        empty_classes=empty,
    )
