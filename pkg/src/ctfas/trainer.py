"""Training loop, checkpoint IO, evaluation driver, and the ablation table.

One training step: draw a stratified batch, encode all modalities, fold
the batch's live means into the EMA prototypes, compute the enabled loss
terms for the scenario, take one AdamW step, and log the breakdown. After
the last epoch the Youden threshold is fitted on a held-out validation
split (carved from the training data by seeded shuffle) for every
protocol the scenario supports, and the validation score sets are kept so
thresholds can be refitted for other lambda3 values.
"""

from __future__ import annotations

import csv
import json
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from .data import Dataset, epoch_batches
from .encoders import (
    EncoderConfig,
    ModalityNet,
    init_params,
    load_net,
    save_params,
)
from .errors import ConfigError, FormatError, NumericsError
from .losses import (
    LossWeights,
    Scenario,
    loss_ce,
    loss_cf,
    loss_ct,
    loss_it,
    loss_md,
    loss_ms,
    total_loss,
)
from .metrics import EvalReport, evaluate_scores
from .modalities import MODALITIES, Modality
from .prototypes import DEFAULT_GAMMA, PrototypeStore, batch_live_mean
from .scoring import (
    DEFAULT_LAMBDA3,
    SUBSTITUTION_AUXILIARY,
    SUBSTITUTION_ZERO,
    ScoreSet,
    TestProtocol,
    score_dataset,
    youden_threshold,
)
from .tensorio import read_named_tensors, write_named_tensors

ABLATION_TERMS = ("ms", "ct", "md", "it", "cf")

CONFIG_JSON = "config.json"
PROTOTYPES_BIN = "prototypes.bin"
VAL_SCORES_BIN = "val_scores.bin"
TRAIN_LOG_CSV = "train_log.csv"

LOG_FIELDS = (
    "step",
    "epoch",
    "l_ms",
    "l_ct",
    "l_md",
    "l_it",
    "l_cf",
    "l_ce_rgb",
    "l_ce_ir",
    "l_ce_d",
    "total",
    "learning_rate",
)


def parse_scenario(value) -> Scenario:
    if isinstance(value, Scenario):
        return value
    text = str(value).lower()
    aliases = {
        "fixed": Scenario.FIXED_MODAL,
        "fixed_modal": Scenario.FIXED_MODAL,
        "missing": Scenario.MISSING_MODAL,
        "missing_modal": Scenario.MISSING_MODAL,
    }
    if text not in aliases:
        raise ConfigError(f"unknown scenario {value!r}; use 'fixed' or 'missing'")
    return aliases[text]


@dataclass(frozen=True)
class TrainConfig:
    scenario: Scenario = Scenario.FIXED_MODAL
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 5e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    gamma: float = DEFAULT_GAMMA
    lambda1: float = 0.005
    lambda2: float = 0.5
    lambda3: float = DEFAULT_LAMBDA3
    seed: int = 0
    validation_fraction: float = 0.2
    loss_reduction: str = "sum"
    feature_dim: int = 128
    channels: tuple[int, ...] = (16, 32, 64)
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if not 0.0 <= self.lambda3 <= 1.0:
            raise ConfigError(f"lambda3 must be in [0, 1], got {self.lambda3}")
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigError(f"loss_reduction must be 'sum' or 'mean', got {self.loss_reduction}")
        LossWeights(self.lambda1, self.lambda2)
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(feature_dim=self.feature_dim, channels=self.channels)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_betas": list(self.adam_betas),
            "weight_decay": self.weight_decay,
            "gamma": self.gamma,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "seed": self.seed,
            "validation_fraction": self.validation_fraction,
            "loss_reduction": self.loss_reduction,
            "feature_dim": self.feature_dim,
            "channels": list(self.channels),
            "deterministic": self.deterministic,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "scenario" in kwargs:
            kwargs["scenario"] = parse_scenario(kwargs["scenario"])
        if "adam_betas" in kwargs:
            kwargs["adam_betas"] = tuple(float(v) for v in kwargs["adam_betas"])
        if "channels" in kwargs:
            kwargs["channels"] = tuple(int(v) for v in kwargs["channels"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad training config: {exc}") from None


@dataclass
class Checkpoint:
    net: ModalityNet
    store: PrototypeStore
    config: TrainConfig
    substitution: str
    thresholds: dict[TestProtocol, float]
    val_scores: dict[TestProtocol, ScoreSet]
    log: list[dict] = field(default_factory=list)

    def supported_protocols(self) -> tuple[TestProtocol, ...]:
        if self.config.scenario is Scenario.MISSING_MODAL:
            return tuple(TestProtocol)
        return (TestProtocol.P4_RGB_D_IR,)

    def threshold_for(self, protocol: TestProtocol, lambda3: Optional[float] = None) -> float:
        """Stored threshold, refitted on the validation scores when a
        different lambda3 is requested."""
        if protocol not in self.thresholds:
            raise ConfigError(
                f"no fitted threshold for protocol {protocol}; trained scenario is"
                f" {self.config.scenario}"
            )
        if lambda3 is None or lambda3 == self.config.lambda3:
            return self.thresholds[protocol]
        scores = self.val_scores[protocol].with_lambda3(lambda3)
        return youden_threshold(scores.sc_ood, scores.labels)

    # -- persistence ---------------------------------------------------------

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_params(self.net, directory)
        self.store.save(directory / PROTOTYPES_BIN)
        items = []
        for protocol, scores in self.val_scores.items():
            items.append((f"{protocol.value}.sc_d", scores.sc_d.astype(np.float32)))
            items.append((f"{protocol.value}.sc_t", scores.sc_t.astype(np.float32)))
            items.append(
                (f"{protocol.value}.labels", scores.labels.astype(np.float32))
            )
        write_named_tensors(directory / VAL_SCORES_BIN, items)
        payload = {
            "train_config": self.config.to_dict(),
            "substitution": self.substitution,
            "thresholds": {p.value: self.thresholds[p] for p in self.thresholds},
        }
        (directory / CONFIG_JSON).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: Path | str) -> "Checkpoint":
        directory = Path(directory)
        config_path = directory / CONFIG_JSON
        if not config_path.is_file():
            raise FormatError(f"missing checkpoint config: {config_path}")
        payload = json.loads(config_path.read_text())
        config = TrainConfig.from_dict(payload["train_config"])
        net = load_net(directory)
        if net.scenario is not config.scenario:
            raise FormatError("checkpoint scenario disagrees between params and config")
        store = PrototypeStore.load(directory / PROTOTYPES_BIN)
        thresholds = {
            TestProtocol.parse(key): float(value)
            for key, value in payload["thresholds"].items()
        }
        names = []
        for protocol in thresholds:
            names += [
                f"{protocol.value}.sc_d",
                f"{protocol.value}.sc_t",
                f"{protocol.value}.labels",
            ]
        records = read_named_tensors(directory / VAL_SCORES_BIN, names)
        val_scores = {}
        for protocol in thresholds:
            val_scores[protocol] = ScoreSet(
                ids=[],
                labels=records[f"{protocol.value}.labels"].astype(np.int64),
                sc_d=records[f"{protocol.value}.sc_d"].astype(np.float64),
                sc_t=records[f"{protocol.value}.sc_t"].astype(np.float64),
                lambda3=config.lambda3,
            )
        return cls(
            net=net,
            store=store,
            config=config,
            substitution=str(payload["substitution"]),
            thresholds=thresholds,
            val_scores=val_scores,
        )


def _crc(text: str) -> int:
    return zlib.crc32(text.encode())


def _split_validation(
    dataset: Dataset, fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _crc("val-split")])))
    perm = rng.permutation(len(dataset))
    n_val = max(1, int(round(len(dataset) * fraction)))
    if n_val >= len(dataset):
        raise ConfigError("validation fraction leaves no training samples")
    val_idx = sorted(perm[:n_val].tolist())
    fit_idx = sorted(perm[n_val:].tolist())
    fit = Dataset(
        samples=[dataset.samples[i] for i in fit_idx],
        config_hash=dataset.config_hash,
        seed=dataset.seed,
        split=dataset.split,
    )
    val = Dataset(
        samples=[dataset.samples[i] for i in val_idx],
        config_hash=dataset.config_hash,
        seed=dataset.seed,
        split=dataset.split,
    )
    return fit, val


def _check_finite(name: str, value: torch.Tensor, step: int) -> None:
    if not bool(torch.isfinite(value).all()):
        raise NumericsError(f"non-finite loss term {name} at step {step}")


def train(
    config: TrainConfig,
    train_data: Dataset,
    enabled_terms: Optional[frozenset[str]] = None,
    substitution: str = SUBSTITUTION_AUXILIARY,
    log_path: Optional[Path | str] = None,
    progress: bool = False,
) -> Checkpoint:
    """Run the full training loop and return an in-memory checkpoint.

    ``enabled_terms`` restricts the non-cross-entropy loss terms (used by
    the ablation driver); None enables all terms the scenario supports.
    ``substitution`` controls how missing modalities are filled when
    fitting thresholds for protocols P1-P3.
    """
    if enabled_terms is None:
        enabled = set(ABLATION_TERMS)
    else:
        unknown = set(enabled_terms) - set(ABLATION_TERMS)
        if unknown:
            raise ConfigError(f"unknown loss terms: {sorted(unknown)}")
        enabled = set(enabled_terms)
    if config.scenario is Scenario.FIXED_MODAL:
        enabled.discard("cf")

    labels = train_data.labels()
    if (labels == 0).sum() == 0 or (labels == 1).sum() == 0:
        raise ConfigError("training data must contain both live and spoof samples")

    if config.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)

    fit_ds, val_ds = _split_validation(train_data, config.validation_fraction, config.seed)
    fit_labels = fit_ds.labels()
    if (fit_labels == 0).sum() == 0 or (fit_labels == 1).sum() == 0:
        raise ConfigError("training split lost a class to the validation carve-out")

    net = ModalityNet(config.encoder_config, scenario=config.scenario)
    init_params(net, config.seed)
    net.train()
    store = PrototypeStore(dim=config.feature_dim, gamma=config.gamma)
    optimizer = torch.optim.AdamW(
        net.parameters(),
        lr=config.learning_rate,
        betas=config.adam_betas,
        weight_decay=config.weight_decay,
    )
    batch_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([config.seed, _crc("batches")]))
    )

    reduction = config.loss_reduction
    log_rows: list[dict] = []
    log_file = None
    log_writer = None
    if log_path is not None:
        log_file = Path(log_path).open("w", newline="")
        log_writer = csv.DictWriter(log_file, fieldnames=LOG_FIELDS)
        log_writer.writeheader()

    def zero() -> torch.Tensor:
        return torch.zeros((), dtype=torch.float32)

    step = 0
    started = time.monotonic()
    try:
        for epoch in range(config.epochs):
            for batch in epoch_batches(fit_ds, config.batch_size, batch_rng):
                step += 1
                feats = net.forward_features(batch.tensors)
                store.update_from_batch(feats, batch.labels)

                live_mask = batch.labels == 0
                B_l = {m: feats[m][live_mask] for m in MODALITIES}
                B_s = {m: feats[m][~live_mask] for m in MODALITIES}

                ready = store.initialized
                l_ms_t = loss_ms(B_l, reduction) if "ms" in enabled else zero()
                l_ct_t = loss_ct(B_l, store, reduction) if "ct" in enabled and ready else zero()
                l_md_t = loss_md(B_s, store, reduction) if "md" in enabled and ready else zero()
                l_it_t = loss_it(B_s, store, reduction) if "it" in enabled and ready else zero()
                l_cf_t = None
                if config.scenario is Scenario.MISSING_MODAL:
                    if "cf" in enabled:
                        aux = net.forward_auxiliary(batch.tensors[Modality.RGB])
                        l_cf_t = loss_cf(feats, aux, reduction=reduction)
                    else:
                        l_cf_t = zero()
                ce = loss_ce(net.forward_logits(feats), batch.labels)

                for name, value in (
                    ("l_ms", l_ms_t),
                    ("l_ct", l_ct_t),
                    ("l_md", l_md_t),
                    ("l_it", l_it_t),
                    ("l_cf", l_cf_t if l_cf_t is not None else zero()),
                    ("l_ce_rgb", ce[Modality.RGB]),
                    ("l_ce_ir", ce[Modality.IR]),
                    ("l_ce_d", ce[Modality.DEPTH]),
                ):
                    _check_finite(name, value, step)

                total, breakdown = total_loss(
                    l_ms_t,
                    l_ct_t,
                    l_md_t,
                    l_it_t,
                    ce,
                    config.scenario,
                    weights=config.weights,
                    l_cf=l_cf_t,
                )
                _check_finite("total", total, step)

                optimizer.zero_grad()
                total.backward()
                optimizer.step()

                row = {"step": step, "epoch": epoch, **breakdown.as_row()}
                row["learning_rate"] = config.learning_rate
                log_rows.append(row)
                if log_writer is not None:
                    log_writer.writerow(row)
            if progress:
                elapsed = time.monotonic() - started
                print(
                    f"epoch {epoch + 1}/{config.epochs}  total {log_rows[-1]['total']:.3f}"
                    f"  ({elapsed:.1f}s)",
                    flush=True,
                )
    finally:
        if log_file is not None:
            log_file.close()

    net.eval()
    ckpt = Checkpoint(
        net=net,
        store=store,
        config=config,
        substitution=substitution,
        thresholds={},
        val_scores={},
        log=log_rows,
    )
    for protocol in ckpt.supported_protocols():
        scores = score_dataset(
            net, val_ds, store, protocol, lambda3=config.lambda3, substitution=substitution
        )
        ckpt.val_scores[protocol] = scores
        ckpt.thresholds[protocol] = youden_threshold(scores.sc_ood, scores.labels)
    return ckpt


def evaluate(
    ckpt: Checkpoint,
    test_data: Dataset,
    protocol,
    lambda3: Optional[float] = None,
    fit_threshold_on_test: bool = False,
) -> EvalReport:
    """Score a test set under a protocol and report APCER/BPCER/ACER/AUC.

    The decision threshold comes from the checkpoint's validation fit
    (refitted when lambda3 differs); ``fit_threshold_on_test`` instead fits
    on the test scores themselves, which is optimistic and only for
    comparisons with evaluation practices that do the same.
    """
    protocol = TestProtocol.parse(protocol)
    if protocol not in ckpt.supported_protocols():
        raise ConfigError(
            f"protocol {protocol} requires missing-modal training; this checkpoint"
            f" was trained {ckpt.config.scenario}"
        )
    lam = ckpt.config.lambda3 if lambda3 is None else float(lambda3)
    scores = score_dataset(
        ckpt.net, test_data, ckpt.store, protocol, lambda3=lam, substitution=ckpt.substitution
    )
    if fit_threshold_on_test:
        threshold = youden_threshold(scores.sc_ood, scores.labels)
    else:
        threshold = ckpt.threshold_for(protocol, lam)
    return evaluate_scores(scores.sc_ood, scores.labels, threshold, protocol.value)


def lambda3_sweep(
    ckpt: Checkpoint,
    test_data: Dataset,
    protocol,
    lambdas: Sequence[float] = tuple(np.round(np.linspace(0.0, 1.0, 11), 2)),
) -> list[EvalReport]:
    """Evaluate one protocol across a grid of lambda3 mixing weights."""
    return [evaluate(ckpt, test_data, protocol, lambda3=float(lam)) for lam in lambdas]


# ---------------------------------------------------------------------------
# ablation driver


@dataclass
class AblationRow:
    name: str
    enabled: frozenset[str]
    report: EvalReport


#: Cumulative loss combinations in the standard comparison order; cross
#: entropy is always on.
TABLE_ROWS: tuple[tuple[str, frozenset[str]], ...] = (
    ("CE", frozenset()),
    ("CE+CF", frozenset({"cf"})),
    ("CE+CF+MS", frozenset({"cf", "ms"})),
    ("CE+CF+MS+CT", frozenset({"cf", "ms", "ct"})),
    ("CE+CF+MS+CT+MD", frozenset({"cf", "ms", "ct", "md"})),
    ("CE+CF+MS+CT+MD+IT", frozenset({"cf", "ms", "ct", "md", "it"})),
)


def ablate(
    config: TrainConfig,
    train_data: Dataset,
    test_data: Dataset,
    term_masks: Sequence[tuple[str, frozenset[str]]] = TABLE_ROWS,
    protocol=TestProtocol.P1_RGB,
    progress: bool = False,
) -> list[AblationRow]:
    """Train one model per loss combination (same seed, fresh optimizer)
    and evaluate each under one protocol.

    Rows that exclude the complementary-feature term leave the auxiliary
    encoders untrained, so their missing modalities are zero-padded at the
    input instead (the baseline treatment).
    """
    protocol = TestProtocol.parse(protocol)
    missing_config = replace(config, scenario=Scenario.MISSING_MODAL)
    rows = []
    for name, enabled in term_masks:
        enabled = frozenset(enabled)
        substitution = SUBSTITUTION_AUXILIARY if "cf" in enabled else SUBSTITUTION_ZERO
        if progress:
            print(f"ablation row {name}: training", flush=True)
        ckpt = train(
            missing_config,
            train_data,
            enabled_terms=enabled,
            substitution=substitution,
        )
        report = evaluate(ckpt, test_data, protocol)
        rows.append(AblationRow(name=name, enabled=enabled, report=report))
        if progress:
            print(f"ablation row {name}: {report.summary()}", flush=True)
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: Path | str) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "terms", "protocol", "apcer", "bpcer", "acer", "auc", "threshold"])
        for row in rows:
            terms = "+".join(t for t in ABLATION_TERMS if t in row.enabled) or "none"
            writer.writerow(
                [
                    row.name,
                    terms,
                    row.report.protocol,
                    repr(row.report.apcer),
                    repr(row.report.bpcer),
                    repr(row.report.acer),
                    repr(row.report.auc),
                    repr(row.report.threshold),
                ]
            )
