"""Multimodal dataset types, the padding/filtering/fusion pipeline, a
binary on-disk format, and a synthetic generator with controllable
per-modality signal-to-noise.

The generator builds sequences where each class (or, for regression, a
latent scalar) points along a fixed random unit direction per modality,
scaled by that modality's SNR and injected into the trailing half of the
frames on top of unit Gaussian noise. Making one auxiliary modality far
easier than the primary one is the trap that produces negative
co-learning when the auxiliary modality is absent at test time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .binio import (
    CorruptHeaderError,
    TruncatedPayloadError,
    VersionMismatchError,
    check_no_trailing,
    read_f64_array,
    read_struct,
    read_u32_array,
    write_f64_array,
    write_struct,
    write_u32_array,
)

MODALITIES = ("language", "audio", "visual")

CLASSIFICATION = "classification"
REGRESSION = "regression"

_MAGIC = b"MMSEQDAT"
_VERSION = 1


@dataclass(frozen=True)
class Task:
    kind: str
    num_classes: int | None = None

    def __post_init__(self):
        if self.kind not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == CLASSIFICATION and (self.num_classes is None or self.num_classes < 2):
            raise ValueError("classification needs num_classes >= 2")


@dataclass
class MultimodalSample:
    """Aligned per-timestep features for one utterance plus its target."""

    language: np.ndarray  # [T, d_language]
    audio: np.ndarray     # [T, d_audio]
    visual: np.ndarray    # [T, d_visual]
    target: float
    original_length: int

    def __post_init__(self):
        t = self.language.shape[0]
        if self.audio.shape[0] != t or self.visual.shape[0] != t:
            raise ValueError("modalities disagree on sequence length")
        if not 0 <= self.original_length <= t:
            raise ValueError(f"original_length {self.original_length} outside [0, {t}]")


@dataclass
class MultimodalBatch:
    language: np.ndarray          # [B, T, d_language]
    audio: np.ndarray             # [B, T, d_audio]
    visual: np.ndarray            # [B, T, d_visual]
    targets: np.ndarray           # [B]
    original_lengths: np.ndarray  # [B]

    @property
    def batch_size(self) -> int:
        return self.language.shape[0]

    @property
    def timesteps(self) -> int:
        return self.language.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.language.shape[2], self.audio.shape[2], self.visual.shape[2])


def stack_batch(samples: Sequence[MultimodalSample]) -> MultimodalBatch:
    if not samples:
        raise ValueError("cannot stack an empty batch")
    return MultimodalBatch(
        language=np.stack([s.language for s in samples]),
        audio=np.stack([s.audio for s in samples]),
        visual=np.stack([s.visual for s in samples]),
        targets=np.array([s.target for s in samples], dtype=np.float64),
        original_lengths=np.array([s.original_length for s in samples], dtype=np.int64),
    )


@dataclass
class DatasetSplit:
    train: list[MultimodalSample]
    validation: list[MultimodalSample]
    test: list[MultimodalSample]
    task: Task

    def all_samples(self) -> Iterable[MultimodalSample]:
        yield from self.train
        yield from self.validation
        yield from self.test

    @property
    def dims(self) -> tuple[int, int, int]:
        s = self.train[0] if self.train else next(iter(self.all_samples()))
        return (s.language.shape[1], s.audio.shape[1], s.visual.shape[1])

    @property
    def timesteps(self) -> int:
        s = self.train[0] if self.train else next(iter(self.all_samples()))
        return s.language.shape[0]


# ---------------------------------------------------------------------------
# pipeline operations


def filter_by_length(samples: Sequence[MultimodalSample], mean: float, std: float, k: float = 2.0) -> list[MultimodalSample]:
    """Keep samples whose original length is strictly below ``mean + k*std``."""
    cutoff = mean + k * std
    return [s for s in samples if s.original_length < cutoff]


def pad_front(seq: np.ndarray, total_length: int) -> np.ndarray:
    """Zero-pad a [L, d] sequence at the front up to ``total_length`` rows."""
    if seq.ndim != 2:
        raise ValueError(f"pad_front expects a 2-D sequence, got shape {seq.shape}")
    length = seq.shape[0]
    if length > total_length:
        raise ValueError(f"sequence of length {length} does not fit in {total_length} frames")
    out = np.zeros((total_length, seq.shape[1]), dtype=np.float64)
    if length:
        out[total_length - length :] = seq
    return out


def fused_slices(d_language: int, d_audio: int, d_visual: int) -> dict[str, slice]:
    """Feature-axis slices of each modality inside a fused vector."""
    return {
        "language": slice(0, d_language),
        "audio": slice(d_language, d_language + d_audio),
        "visual": slice(d_language + d_audio, d_language + d_audio + d_visual),
    }


def fuse_modalities(sample: MultimodalSample) -> np.ndarray:
    """Per-timestep concatenation in the fixed order language, audio, visual."""
    return np.concatenate([sample.language, sample.audio, sample.visual], axis=1)


def fuse_batch(batch: MultimodalBatch) -> np.ndarray:
    return np.concatenate([batch.language, batch.audio, batch.visual], axis=2)


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int = 3000
    timesteps: int = 12
    dim_language: int = 16
    dim_audio: int = 16
    dim_visual: int = 16
    num_classes: int = 4
    snr_language: float = 1.5
    snr_audio: float = 6.0
    snr_visual: float = 0.0
    seed: int = 0
    task: str = CLASSIFICATION
    # Class priors; None means uniform. Real emotion corpora are skewed, and
    # a majority class is what a feature-starved model falls back to.
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if min(self.n_samples, self.timesteps, self.dim_language, self.dim_audio, self.dim_visual) <= 0:
            raise ValueError("sample count, timesteps, and dims must be positive")
        if min(self.snr_language, self.snr_audio, self.snr_visual) < 0:
            raise ValueError("signal-to-noise amplitudes must be >= 0")
        if self.task == CLASSIFICATION and self.num_classes < 2:
            raise ValueError("classification needs num_classes >= 2")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.class_weights is not None:
            if len(self.class_weights) != self.num_classes:
                raise ValueError("class_weights must have one entry per class")
            if min(self.class_weights) <= 0 or abs(sum(self.class_weights) - 1.0) > 1e-9:
                raise ValueError("class_weights must be positive and sum to 1")


def ncl_preset(seed: int = 0) -> SyntheticConfig:
    """The negative-co-learning trap: audio carries a much stronger class
    signal than language, visual is pure noise, and one class dominates
    the priors. A jointly trained model leans on audio, and with audio
    absent at test time it falls back to predicting the majority class."""
    return SyntheticConfig(
        n_samples=3000,
        timesteps=12,
        dim_language=16,
        dim_audio=16,
        dim_visual=16,
        num_classes=4,
        snr_language=0.4,
        snr_audio=12.0,
        snr_visual=0.0,
        seed=seed,
        class_weights=(0.4, 0.2, 0.2, 0.2),
    )


def _unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    m = rng.normal(size=(rows, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def generate_synthetic(config: SyntheticConfig) -> DatasetSplit:
    """Deterministic-in-seed synthetic dataset, split 70/15/15.

    Each sequence mimics a front-padded utterance: the leading floor(T/2)
    frames are zero padding and the trailing ceil(T/2) frames carry the
    per-modality signal on top of unit Gaussian noise, so original_length
    reflects the unpadded content.
    """
    rng = np.random.default_rng(config.seed)
    n, t = config.n_samples, config.timesteps
    dims = (config.dim_language, config.dim_audio, config.dim_visual)
    snrs = (config.snr_language, config.snr_audio, config.snr_visual)
    content = (t + 1) // 2  # trailing ceil(T/2) frames carry content
    window_start = t - content

    if config.task == CLASSIFICATION:
        templates = [_unit_rows(rng, config.num_classes, d) for d in dims]
        if config.class_weights is None:
            labels = rng.integers(0, config.num_classes, size=n)
        else:
            labels = rng.choice(config.num_classes, size=n, p=np.asarray(config.class_weights))
        targets = labels.astype(np.float64)
        amplitudes = [snr * templ[labels] for snr, templ in zip(snrs, templates)]
    else:
        directions = [_unit_rows(rng, 1, d)[0] for d in dims]
        latent = rng.uniform(-2.0, 2.0, size=n)
        targets = latent
        amplitudes = [snr * latent[:, None] * d[None, :] for snr, d in zip(snrs, directions)]

    blocks = []
    for dim, amp in zip(dims, amplitudes):
        feats = np.zeros((n, t, dim))
        feats[:, window_start:, :] = rng.normal(size=(n, content, dim)) + amp[:, None, :]
        blocks.append(feats)

    samples = [
        MultimodalSample(
            language=blocks[0][i],
            audio=blocks[1][i],
            visual=blocks[2][i],
            target=float(targets[i]),
            original_length=content,
        )
        for i in range(n)
    ]

    n_train = (n * 70) // 100
    n_val = (n * 15) // 100
    task = Task(CLASSIFICATION, config.num_classes) if config.task == CLASSIFICATION else Task(REGRESSION)
    return DatasetSplit(
        train=samples[:n_train],
        validation=samples[n_train : n_train + n_val],
        test=samples[n_train + n_val :],
        task=task,
    )


# ---------------------------------------------------------------------------
# on-disk format
#
# magic(8) version(u32) task(u8) num_classes(u32) T(u32) d_l(u32) d_a(u32)
# d_v(u32) n_train(u32) n_val(u32) n_test(u32), then per split: language,
# audio, visual blocks as row-major float64, targets as float64, original
# lengths as u32.


def save_dataset(split: DatasetSplit, path) -> None:
    parts = [split.train, split.validation, split.test]
    t = split.timesteps
    d_l, d_a, d_v = split.dims
    with open(path, "wb") as f:
        f.write(_MAGIC)
        task_code = 0 if split.task.kind == CLASSIFICATION else 1
        write_struct(
            f,
            "<IBIIIIIIII",
            _VERSION,
            task_code,
            split.task.num_classes or 0,
            t,
            d_l,
            d_a,
            d_v,
            len(split.train),
            len(split.validation),
            len(split.test),
        )
        for part in parts:
            for name in MODALITIES:
                for s in part:
                    write_f64_array(f, getattr(s, name))
            write_f64_array(f, np.array([s.target for s in part], dtype=np.float64))
            write_u32_array(f, np.array([s.original_length for s in part], dtype=np.int64))


def load_dataset(path) -> DatasetSplit:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CorruptHeaderError(f"bad magic bytes {magic!r}; not a dataset file")
        try:
            version, task_code, num_classes, t, d_l, d_a, d_v, n_train, n_val, n_test = read_struct(
                f, "<IBIIIIIIII", "dataset header"
            )
        except TruncatedPayloadError as exc:
            raise CorruptHeaderError(str(exc)) from exc
        if version != _VERSION:
            raise VersionMismatchError(f"dataset version {version} unsupported (expected {_VERSION})")
        if task_code not in (0, 1):
            raise CorruptHeaderError(f"unknown task code {task_code}")
        task = Task(CLASSIFICATION, num_classes) if task_code == 0 else Task(REGRESSION)

        dims = (d_l, d_a, d_v)
        parts = []
        for count, part_name in zip((n_train, n_val, n_test), ("train", "validation", "test")):
            blocks = [
                read_f64_array(f, (count, t, dim), f"{part_name} {name} payload")
                for name, dim in zip(MODALITIES, dims)
            ]
            targets = read_f64_array(f, (count,), f"{part_name} targets")
            lengths = read_u32_array(f, count, f"{part_name} lengths")
            parts.append(
                [
                    MultimodalSample(
                        language=blocks[0][i],
                        audio=blocks[1][i],
                        visual=blocks[2][i],
                        target=float(targets[i]),
                        original_length=int(lengths[i]),
                    )
                    for i in range(count)
                ]
            )
        check_no_trailing(f)
    return DatasetSplit(train=parts[0], validation=parts[1], test=parts[2], task=task)
