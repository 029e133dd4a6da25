"""Synthetic multi-modal anti-spoofing data: generation, disk format,
and stratified batching.

Live samples share a cross-modally consistent structure: every modality
tensor is a fixed affine map of the same identity latent (plus a fixed
per-modality base pattern and monotone nonlinearity), so live samples of
one modality look alike and live cross-modal transitions are consistent.
Spoof samples reuse the construction and then break it per attack type:

* PRINT / REPLAY: depth collapses toward a per-sample constant plane and
  every modality gets an independent perturbation from a per-attack basis
  (fresh coefficients per sample and per modality, so modalities stop
  agreeing);
* REPLAY additionally overlays a high-frequency periodic pattern on RGB;
* MASK halves the IR response and shifts it, and warps depth with a
  smooth low-frequency field; RGB stays clean.

The structural maps are seeded from a module constant, independent of the
dataset seed, so train and test splits share the same cross-modal
structure. Each sample is a pure function of (seed, split, index).
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from .errors import ConfigError, FormatError, IntegrityError
from .modalities import (
    ATTACK_TYPES,
    MODALITIES,
    AttackType,
    Label,
    Modality,
    label_target,
)
from .tensorio import read_tensor, write_tensor

#: Seeds the cross-modal structure (latent maps, base patterns, attack bases).
#: Deliberately NOT derived from GeneratorConfig.seed: all datasets share the
#: same structure, only the samples differ.
STRUCTURE_SEED = 913253

BASE_GAIN = 1.1
LATENT_GAIN = 0.45
PERT_SCALE = 0.35
PERT_RANK = 8
FLATTEN_WEIGHT = 0.85
REPLAY_AMP = 0.25
MASK_IR_GAIN = 0.5
MASK_DEPTH_AMP = 0.3

DEFAULT_ATTACK_MIX = {AttackType.PRINT: 0.4, AttackType.REPLAY: 0.4, AttackType.MASK: 0.2}

MANIFEST_NAME = "manifest.json"
_MANIFEST_KEYS = {"version", "config_hash", "seed", "split", "samples"}
_SAMPLE_KEYS = {"id", "label", "attack", "domain", "modalities"}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 16
    image_side: int = 32
    n_live: int = 1000
    n_spoof: int = 1000
    attack_mix: Mapping[AttackType, float] = field(
        default_factory=lambda: dict(DEFAULT_ATTACK_MIX)
    )
    domains: tuple[str, ...] = ("main",)
    domain_shift_scale: float = 0.0
    noise_std: float = 0.05
    rgb_attack_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.image_side < 8:
            raise ConfigError(f"image_side must be >= 8, got {self.image_side}")
        if self.n_live < 0 or self.n_spoof < 0:
            raise ConfigError("sample counts must be nonnegative")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.rgb_attack_scale < 0:
            raise ConfigError(f"rgb_attack_scale must be >= 0, got {self.rgb_attack_scale}")
        if self.domain_shift_scale < 0:
            raise ConfigError("domain_shift_scale must be >= 0")
        if not self.domains:
            raise ConfigError("at least one domain tag is required")
        unknown = set(self.attack_mix) - set(ATTACK_TYPES)
        if unknown:
            raise ConfigError(f"unknown attack types in mix: {sorted(str(a) for a in unknown)}")
        if any(v < 0 for v in self.attack_mix.values()):
            raise ConfigError("attack_mix probabilities must be nonnegative")
        total = sum(self.attack_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"attack_mix must sum to 1, got {total}")

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "image_side": self.image_side,
            "n_live": self.n_live,
            "n_spoof": self.n_spoof,
            "attack_mix": {a.value: float(self.attack_mix.get(a, 0.0)) for a in ATTACK_TYPES},
            "domains": list(self.domains),
            "domain_shift_scale": self.domain_shift_scale,
            "noise_std": self.noise_std,
            "rgb_attack_scale": self.rgb_attack_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GeneratorConfig":
        unknown = set(data) - {
            "latent_dim",
            "image_side",
            "n_live",
            "n_spoof",
            "attack_mix",
            "domains",
            "domain_shift_scale",
            "noise_std",
            "rgb_attack_scale",
            "seed",
        }
        if unknown:
            raise ConfigError(f"unknown generator config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "attack_mix" in kwargs:
            mix = {}
            for key, value in kwargs["attack_mix"].items():
                try:
                    mix[AttackType(key)] = float(value)
                except ValueError:
                    raise ConfigError(f"unknown attack type in mix: {key!r}") from None
            kwargs["attack_mix"] = mix
        if "domains" in kwargs:
            kwargs["domains"] = tuple(kwargs["domains"])
        return cls(**kwargs)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# sample / dataset containers


@dataclass
class MultiModalSample:
    id: str
    label: Label
    attack_type: Optional[AttackType]
    domain: str
    tensors: dict[Modality, np.ndarray]

    def __post_init__(self) -> None:
        if (self.attack_type is not None) != (self.label is Label.SPOOF):
            raise IntegrityError(
                f"sample {self.id}: attack_type present iff label is spoof"
            )


@dataclass
class Dataset:
    samples: list[MultiModalSample]
    config_hash: str
    seed: int
    split: str

    def __post_init__(self) -> None:
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise IntegrityError("duplicate sample ids in dataset")

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([label_target(s.label) for s in self.samples], dtype=np.int64)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Bit-exact dataset equality (metadata and every tensor)."""
    if (a.config_hash, a.seed, a.split, len(a)) != (b.config_hash, b.seed, b.split, len(b)):
        return False
    for sa, sb in zip(a.samples, b.samples):
        if (sa.id, sa.label, sa.attack_type, sa.domain) != (
            sb.id,
            sb.label,
            sb.attack_type,
            sb.domain,
        ):
            return False
        for m in MODALITIES:
            ta, tb = sa.tensors[m], sb.tensors[m]
            if ta.dtype != tb.dtype or ta.shape != tb.shape or not np.array_equal(ta, tb):
                return False
    return True


# ---------------------------------------------------------------------------
# structural maps (shared across all datasets)


def _structure_rng(*words: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([STRUCTURE_SEED, *words])))


def _crc(text: str) -> int:
    return zlib.crc32(text.encode())


def _smooth_field(coeffs: np.ndarray, side: int) -> np.ndarray:
    """Low-frequency cosine-mode field on a side x side grid, ~unit scale.

    coeffs has shape (n_modes, n_modes); mode (p, q) is cos(pi p X)cos(pi q Y).
    """
    grid = (np.arange(side) + 0.5) / side
    n_modes = coeffs.shape[0]
    basis = np.stack([np.cos(np.pi * p * grid) for p in range(n_modes)])
    field = np.einsum("pq,px,qy->xy", coeffs, basis, basis)
    return field / np.sqrt(coeffs.size)


class _Structure:
    """Fixed maps shared by every dataset with the same latent/image sizes."""

    def __init__(self, latent_dim: int, side: int):
        self.latent_dim = latent_dim
        self.side = side
        self.latent_maps: dict[Modality, np.ndarray] = {}
        self.bases: dict[Modality, np.ndarray] = {}
        self.attack_bases: dict[tuple[AttackType, Modality], np.ndarray] = {}
        for m in MODALITIES:
            shape = (m.channels, side, side)
            rng = _structure_rng(0, _crc(m.value))
            self.latent_maps[m] = rng.standard_normal(
                (latent_dim, int(np.prod(shape)))
            ) / np.sqrt(latent_dim)
            coeffs = rng.standard_normal((m.channels, 4, 4))
            self.bases[m] = np.stack(
                [_smooth_field(coeffs[c], side) for c in range(m.channels)]
            )
            for attack in ATTACK_TYPES:
                arng = _structure_rng(1, _crc(attack.value), _crc(m.value))
                self.attack_bases[(attack, m)] = arng.standard_normal(
                    (PERT_RANK, int(np.prod(shape)))
                )

    def clean_tensor(self, m: Modality, z: np.ndarray) -> np.ndarray:
        shape = (m.channels, self.side, self.side)
        pre = BASE_GAIN * self.bases[m] + LATENT_GAIN * (z @ self.latent_maps[m]).reshape(shape)
        if m is Modality.IR:
            return np.tanh(pre)
        return 1.0 / (1.0 + np.exp(-pre))

    def perturbation(self, attack: AttackType, m: Modality, w: np.ndarray) -> np.ndarray:
        shape = (m.channels, self.side, self.side)
        return (PERT_SCALE / np.sqrt(PERT_RANK)) * (w @ self.attack_bases[(attack, m)]).reshape(
            shape
        )


_STRUCTURE_CACHE: dict[tuple[int, int], _Structure] = {}


def _structure(latent_dim: int, side: int) -> _Structure:
    key = (latent_dim, side)
    if key not in _STRUCTURE_CACHE:
        _STRUCTURE_CACHE[key] = _Structure(latent_dim, side)
    return _STRUCTURE_CACHE[key]


def _domain_affine(domain: str, m: Modality, scale: float) -> tuple[float, float]:
    if scale == 0.0:
        return 1.0, 0.0
    rng = _structure_rng(2, _crc(domain), _crc(m.value))
    gain_draw, offset_draw = rng.standard_normal(2)
    return 1.0 + scale * gain_draw, scale * offset_draw


# ---------------------------------------------------------------------------
# generation


def _choose_attack(u: float, mix: Mapping[AttackType, float]) -> AttackType:
    acc = 0.0
    for attack in ATTACK_TYPES:
        acc += mix.get(attack, 0.0)
        if u < acc:
            return attack
    return ATTACK_TYPES[-1]


def _generate_sample(
    config: GeneratorConfig, split: str, index: int, structure: _Structure
) -> MultiModalSample:
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([config.seed, _crc(split), index]))
    )
    is_live = index < config.n_live
    label = Label.LIVE if is_live else Label.SPOOF
    z = rng.standard_normal(config.latent_dim)
    tensors = {m: structure.clean_tensor(m, z) for m in MODALITIES}
    attack: Optional[AttackType] = None

    if not is_live:
        attack = _choose_attack(float(rng.random()), config.attack_mix)
        side = config.image_side
        if attack in (AttackType.PRINT, AttackType.REPLAY):
            plane = float(np.clip(0.55 + 0.15 * rng.standard_normal(), 0.05, 0.95))
            tensors[Modality.DEPTH] = (
                (1.0 - FLATTEN_WEIGHT) * tensors[Modality.DEPTH] + FLATTEN_WEIGHT * plane
            )
            if attack is AttackType.REPLAY:
                freq = int(rng.integers(6, 11))
                theta = float(rng.uniform(0.0, np.pi))
                phase = float(rng.uniform(0.0, 2.0 * np.pi))
                grid = (np.arange(side) + 0.5) / side
                xs, ys = np.meshgrid(grid, grid, indexing="ij")
                pattern = REPLAY_AMP * np.sin(
                    2.0 * np.pi * freq * (np.cos(theta) * xs + np.sin(theta) * ys) + phase
                )
                tensors[Modality.RGB] = (
                    tensors[Modality.RGB] + config.rgb_attack_scale * pattern[None, :, :]
                )
            for m in MODALITIES:
                w = rng.standard_normal(PERT_RANK)
                pert = structure.perturbation(attack, m, w)
                if m is Modality.RGB:
                    pert = config.rgb_attack_scale * pert
                tensors[m] = tensors[m] + pert
        else:  # MASK
            offset = 0.35 + 0.1 * float(rng.standard_normal())
            tensors[Modality.IR] = MASK_IR_GAIN * tensors[Modality.IR] + offset
            coeffs = rng.standard_normal((3, 3))
            warp = MASK_DEPTH_AMP * _smooth_field(coeffs, side)
            tensors[Modality.DEPTH] = tensors[Modality.DEPTH] + warp[None, :, :]

    for m in MODALITIES:
        if config.noise_std > 0:
            tensors[m] = tensors[m] + config.noise_std * rng.standard_normal(tensors[m].shape)
        gain, offset = _domain_affine(
            config.domains[index % len(config.domains)], m, config.domain_shift_scale
        )
        tensors[m] = (gain * tensors[m] + offset).astype(np.float32)

    return MultiModalSample(
        id=f"{split}-{index:06d}",
        label=label,
        attack_type=attack,
        domain=config.domains[index % len(config.domains)],
        tensors=tensors,
    )


def generate_synthetic_dataset(config: GeneratorConfig, split: str) -> Dataset:
    """Deterministically generate n_live + n_spoof samples for one split."""
    structure = _structure(config.latent_dim, config.image_side)
    total = config.n_live + config.n_spoof
    samples = [_generate_sample(config, split, i, structure) for i in range(total)]
    return Dataset(
        samples=samples, config_hash=config.config_hash(), seed=config.seed, split=split
    )


# ---------------------------------------------------------------------------
# disk format


def write_dataset(dataset: Dataset, directory: Path | str) -> None:
    """Write manifest.json plus one tensor file per sample per modality."""
    directory = Path(directory)
    (directory / "tensors").mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in dataset.samples:
        modality_paths = {}
        for m in MODALITIES:
            rel = f"tensors/{sample.id}.{m.value}.mmt"
            write_tensor(directory / rel, sample.tensors[m])
            modality_paths[m.value] = rel
        entries.append(
            {
                "id": sample.id,
                "label": sample.label.value,
                "attack": None if sample.attack_type is None else sample.attack_type.value,
                "domain": sample.domain,
                "modalities": modality_paths,
            }
        )
    manifest = {
        "version": 1,
        "config_hash": dataset.config_hash,
        "seed": dataset.seed,
        "split": dataset.split,
        "samples": entries,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")


def read_dataset(directory: Path | str) -> Dataset:
    """Load a dataset directory; format errors name the offending file."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"no manifest found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {manifest_path}: {exc}") from None
    if not isinstance(manifest, dict) or set(manifest) != _MANIFEST_KEYS:
        raise FormatError(
            f"{manifest_path}: manifest keys must be exactly {sorted(_MANIFEST_KEYS)}"
        )
    if manifest["version"] != 1:
        raise FormatError(f"{manifest_path}: unsupported version {manifest['version']!r}")

    samples = []
    shape_hw: Optional[tuple[int, int]] = None
    for entry in manifest["samples"]:
        if set(entry) != _SAMPLE_KEYS:
            raise FormatError(
                f"{manifest_path}: sample entry keys must be exactly {sorted(_SAMPLE_KEYS)}"
            )
        try:
            label = Label(entry["label"])
        except ValueError:
            raise IntegrityError(f"sample {entry['id']}: bad label {entry['label']!r}") from None
        attack = None
        if entry["attack"] is not None:
            try:
                attack = AttackType(entry["attack"])
            except ValueError:
                raise IntegrityError(
                    f"sample {entry['id']}: bad attack {entry['attack']!r}"
                ) from None
        if set(entry["modalities"]) != {m.value for m in MODALITIES}:
            raise IntegrityError(f"sample {entry['id']}: needs all three modality files")
        tensors = {}
        for m in MODALITIES:
            arr = read_tensor(directory / entry["modalities"][m.value])
            if arr.ndim != 3 or arr.shape[0] != m.channels:
                raise IntegrityError(
                    f"sample {entry['id']} {m}: expected ({m.channels}, H, W), got {arr.shape}"
                )
            if shape_hw is None:
                shape_hw = (arr.shape[1], arr.shape[2])
            elif (arr.shape[1], arr.shape[2]) != shape_hw:
                raise IntegrityError(
                    f"sample {entry['id']} {m}: image size {arr.shape[1:]} != {shape_hw}"
                )
            if not np.isfinite(arr).all():
                raise IntegrityError(f"sample {entry['id']} {m}: non-finite values")
            tensors[m] = arr
        samples.append(
            MultiModalSample(
                id=entry["id"],
                label=label,
                attack_type=attack,
                domain=entry["domain"],
                tensors=tensors,
            )
        )
    return Dataset(
        samples=samples,
        config_hash=manifest["config_hash"],
        seed=int(manifest["seed"]),
        split=manifest["split"],
    )


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    ids: list[str]
    labels: torch.Tensor
    tensors: dict[Modality, torch.Tensor]

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_samples(cls, samples: Sequence[MultiModalSample]) -> "Batch":
        tensors = {
            m: torch.from_numpy(
                np.stack([np.asarray(s.tensors[m], dtype=np.float32) for s in samples])
            )
            for m in MODALITIES
        }
        labels = torch.tensor([label_target(s.label) for s in samples], dtype=torch.int64)
        return cls(ids=[s.id for s in samples], labels=labels, tensors=tensors)


def _class_indices(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    labels = dataset.labels()
    return np.nonzero(labels == 0)[0], np.nonzero(labels == 1)[0]


def _stratified_index_batches(
    dataset: Dataset, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Partition (most of) an epoch into stratified batches.

    Each batch gets >= 2 live and >= 1 spoof whenever the dataset has that
    many to give; leftovers that do not fill a batch are dropped.
    """
    n = len(dataset)
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
    n_batches = n // batch_size
    use = n_batches * batch_size
    live_idx, spoof_idx = _class_indices(dataset)
    rng.shuffle(live_idx)
    rng.shuffle(spoof_idx)

    if live_idx.size == 0 or spoof_idx.size == 0:
        order = rng.permutation(n)[:use]
        return [order[b * batch_size : (b + 1) * batch_size] for b in range(n_batches)]

    min_live = min(2 * n_batches, live_idx.size)
    min_spoof = min(n_batches, spoof_idx.size, use - min_live)
    live_use = int(round(use * live_idx.size / n))
    live_use = max(live_use, min_live, use - spoof_idx.size)
    live_use = min(live_use, live_idx.size, use - min_spoof)
    spoof_use = use - live_use

    batches: list[list[int]] = [[] for _ in range(n_batches)]
    for pool, count in ((live_idx, live_use), (spoof_idx, spoof_use)):
        base, extra = divmod(count, n_batches)
        pos = 0
        for b in range(n_batches):
            take = base + (1 if b < extra else 0)
            batches[b].extend(pool[pos : pos + take].tolist())
            pos += take
    out = []
    for batch in batches:
        arr = np.array(batch, dtype=np.int64)
        rng.shuffle(arr)
        out.append(arr)
    return out


def epoch_batches(
    dataset: Dataset, batch_size: int, rng: np.random.Generator
) -> list[Batch]:
    """One epoch of stratified batches, deterministic given the generator."""
    return [
        Batch.from_samples([dataset.samples[i] for i in idx])
        for idx in _stratified_index_batches(dataset, batch_size, rng)
    ]


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Draw one stratified batch without replacement."""
    idx = _stratified_index_batches(dataset, batch_size, rng)[0]
    return Batch.from_samples([dataset.samples[i] for i in idx])
