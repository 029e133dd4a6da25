"""Per-modality feature extractors, RGB-to-IR/depth auxiliary extractors,
and the binary classifier heads.

Each encoder is a small strided convnet: three stride-2 conv stages with
ReLU, global average pooling, and a linear projection to the feature
dimension followed by tanh (so the feature map ends with a bias plus a
nonlinearity). Auxiliary encoders consume RGB input but target another
modality's feature space; they exist only in the missing-modal scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, FormatError
from .losses import AUX_MODALITIES, Scenario
from .modalities import MODALITIES, Modality
from .tensorio import read_named_tensors, write_named_tensors


@dataclass(frozen=True)
class EncoderConfig:
    feature_dim: int = 128
    channels: tuple[int, ...] = (16, 32, 64)

    def __post_init__(self) -> None:
        if self.feature_dim < 2:
            raise ValueError(f"feature_dim must be >= 2, got {self.feature_dim}")
        if len(self.channels) < 1 or any(c < 1 for c in self.channels):
            raise ValueError(f"invalid channel widths: {self.channels}")


@dataclass
class FeatureVector:
    values: torch.Tensor
    source_modality: Modality
    is_auxiliary: bool = False

    def __post_init__(self) -> None:
        if self.values.dim() != 1:
            raise ValueError(f"feature must be 1-D, got shape {tuple(self.values.shape)}")

    def __len__(self) -> int:
        return int(self.values.shape[0])


class ConvEncoder(nn.Module):
    def __init__(self, in_channels: int, config: EncoderConfig):
        super().__init__()
        layers = []
        prev = in_channels
        for width in config.channels:
            layers.append(nn.Conv2d(prev, width, kernel_size=3, stride=2, padding=1))
            layers.append(nn.ReLU())
            prev = width
        self.stages = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.project = nn.Linear(prev, config.feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.pool(self.stages(x)).flatten(1)
        return torch.tanh(self.project(h))


class ModalityNet(nn.Module):
    """The full parameter set: three encoders, optional two auxiliaries,
    three classifier heads."""

    def __init__(self, config: EncoderConfig = EncoderConfig(),
                 scenario: Scenario = Scenario.FIXED_MODAL):
        super().__init__()
        self.config = config
        self.scenario = scenario
        self.encoders = nn.ModuleDict(
            {m.value: ConvEncoder(m.channels, config) for m in MODALITIES}
        )
        self.heads = nn.ModuleDict(
            {m.value: nn.Linear(config.feature_dim, 2) for m in MODALITIES}
        )
        if scenario is Scenario.MISSING_MODAL:
            self.aux = nn.ModuleDict(
                {m.value: ConvEncoder(Modality.RGB.channels, config) for m in AUX_MODALITIES}
            )
        else:
            self.aux = nn.ModuleDict()

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def has_auxiliary(self) -> bool:
        return len(self.aux) > 0

    # -- batch forward -------------------------------------------------------

    def forward_features(
        self, tensors: Mapping[Modality, torch.Tensor]
    ) -> dict[Modality, torch.Tensor]:
        """Encode a batch of each modality: (n, C, H, W) -> (n, d) per modality."""
        out = {}
        for m in MODALITIES:
            x = tensors[m]
            self._check_batch_shape(x, m)
            out[m] = self.encoders[m.value](x)
        return out

    def forward_auxiliary(self, x_rgb: torch.Tensor) -> dict[Modality, torch.Tensor]:
        """IR-like and depth-like features from a batch of RGB tensors."""
        if not self.has_auxiliary():
            raise ConfigError("auxiliary encoders absent (fixed-modal model)")
        self._check_batch_shape(x_rgb, Modality.RGB)
        return {m: self.aux[m.value](x_rgb) for m in AUX_MODALITIES}

    def forward_logits(
        self, features: Mapping[Modality, torch.Tensor]
    ) -> dict[Modality, torch.Tensor]:
        return {m: self.heads[m.value](features[m]) for m in MODALITIES}

    # -- single-sample API ----------------------------------------------------

    def encode(self, x: torch.Tensor, m: Modality) -> FeatureVector:
        batch = self._as_batch(x, m)
        with torch.no_grad():
            values = self.encoders[m.value](batch)[0]
        return FeatureVector(values=values, source_modality=m, is_auxiliary=False)

    def encode_auxiliary(self, x_rgb: torch.Tensor, target: Modality) -> FeatureVector:
        if target not in AUX_MODALITIES:
            raise ValueError(f"auxiliary target must be ir or depth, got {target}")
        if not self.has_auxiliary():
            raise ConfigError("auxiliary encoders absent (fixed-modal model)")
        batch = self._as_batch(x_rgb, Modality.RGB)
        with torch.no_grad():
            values = self.aux[target.value](batch)[0]
        return FeatureVector(values=values, source_modality=target, is_auxiliary=True)

    def classify(self, f, m: Modality) -> torch.Tensor:
        values = f.values if isinstance(f, FeatureVector) else torch.as_tensor(f)
        if values.dim() != 1 or values.shape[0] != self.feature_dim:
            raise ValueError(
                f"expected a length-{self.feature_dim} feature, got shape {tuple(values.shape)}"
            )
        return self.heads[m.value](values.unsqueeze(0))[0]

    # -- helpers ---------------------------------------------------------------

    def _check_batch_shape(self, x: torch.Tensor, m: Modality) -> None:
        if x.dim() != 4 or x.shape[1] != m.channels:
            raise ValueError(
                f"{m}: expected (n, {m.channels}, H, W) tensor, got shape {tuple(x.shape)}"
            )

    def _as_batch(self, x: torch.Tensor, m: Modality) -> torch.Tensor:
        x = torch.as_tensor(x)
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.dim() != 4 or x.shape[0] != 1 or x.shape[1] != m.channels:
            raise ValueError(
                f"{m}: expected one ({m.channels}, H, W) tensor, got shape {tuple(x.shape)}"
            )
        return x.to(torch.float32)


def init_params(net: ModalityNet, seed: int) -> None:
    """Seed-derived variance-scaled initialization.

    Weights draw from N(0, s^2) with s^2 = 2/fan_in for conv layers and
    1/fan_in for linear layers; biases start at zero. Parameters are
    visited in sorted-name order with one generator, so the whole
    assignment is a pure function of (architecture, seed).
    """
    g = torch.Generator().manual_seed(int(seed))
    for name, param in sorted(net.named_parameters()):
        with torch.no_grad():
            if name.endswith("bias"):
                param.zero_()
                continue
            if param.dim() == 4:
                fan_in = param.shape[1] * param.shape[2] * param.shape[3]
                std = (2.0 / fan_in) ** 0.5
            elif param.dim() == 2:
                fan_in = param.shape[1]
                std = (1.0 / fan_in) ** 0.5
            else:
                raise ValueError(f"unexpected parameter shape for {name}: {tuple(param.shape)}")
            param.copy_(torch.randn(param.shape, generator=g) * std)


# -- persistence ---------------------------------------------------------------

PARAMS_BIN = "params.bin"
PARAMS_INDEX = "params.json"


def save_params(net: ModalityNet, directory: Path | str) -> None:
    """Write all parameters to ``params.bin`` with a ``params.json`` index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    state = net.state_dict()
    names = sorted(state)
    items = [(name, state[name].detach().cpu().numpy()) for name in names]
    write_named_tensors(directory / PARAMS_BIN, items)
    index = {
        "names": names,
        "shapes": {name: list(state[name].shape) for name in names},
        "feature_dim": net.feature_dim,
        "channels": list(net.config.channels),
        "scenario": net.scenario.value,
    }
    (directory / PARAMS_INDEX).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def load_net(directory: Path | str) -> ModalityNet:
    """Rebuild a ModalityNet from a checkpoint directory, bit-exactly."""
    directory = Path(directory)
    index_path = directory / PARAMS_INDEX
    if not index_path.is_file():
        raise FormatError(f"missing parameter index: {index_path}")
    index = json.loads(index_path.read_text())
    config = EncoderConfig(
        feature_dim=int(index["feature_dim"]), channels=tuple(index["channels"])
    )
    net = ModalityNet(config=config, scenario=Scenario(index["scenario"]))
    records = read_named_tensors(directory / PARAMS_BIN, list(index["names"]))
    state = net.state_dict()
    if sorted(state) != sorted(index["names"]):
        raise FormatError("parameter index does not match the architecture")
    with torch.no_grad():
        for name in index["names"]:
            arr = records[name]
            expected = tuple(index["shapes"][name])
            if tuple(arr.shape) != expected or tuple(state[name].shape) != expected:
                raise FormatError(f"{name}: parameter shape mismatch")
            state[name].copy_(torch.from_numpy(arr.copy()))
    net.load_state_dict(state)
    net.eval()
    return net


def encode_dataset_features(
    net: ModalityNet, dataset, batch_size: int = 256
) -> dict[Modality, np.ndarray]:
    """Eval-mode features for every sample: Modality -> (N, d) float32."""
    was_training = net.training
    net.eval()
    chunks: dict[Modality, list[np.ndarray]] = {m: [] for m in MODALITIES}
    samples = dataset.samples
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            part = samples[start : start + batch_size]
            for m in MODALITIES:
                x = torch.from_numpy(
                    np.stack([np.asarray(s.tensors[m], dtype=np.float32) for s in part])
                )
                chunks[m].append(net.encoders[m.value](x).numpy())
    if was_training:
        net.train()
    return {m: np.concatenate(chunks[m], axis=0) for m in MODALITIES}
