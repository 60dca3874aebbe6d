"""Stochastic whole-modality masking for training and deterministic
masking for unimodal evaluation.

Masks are reified so a run can log exactly which modalities were zeroed,
and all draws come from an explicitly passed random stream: a dedicated,
seeded stream per run keeps mask sequences reproducible and independent
of shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import DimensionError
from .data import MODALITIES, MultimodalBatch

PER_SEQUENCE = "per_sequence"
PER_TIMESTEP = "per_timestep"
GRANULARITIES = (PER_SEQUENCE, PER_TIMESTEP)


@dataclass(frozen=True)
class DropoutPolicy:
    """Per-modality masking probabilities.

    ``per_sequence`` zeroes a drawn modality for the whole sample;
    ``per_timestep`` draws independently per frame. When
    ``guard_all_dropped`` is set, positions where all three modalities
    came up masked are redrawn, so the conditional distribution excludes
    the all-masked outcome.
    """

    p_audio: float = 0.0
    p_language: float = 0.0
    p_visual: float = 0.0
    granularity: str = PER_SEQUENCE
    guard_all_dropped: bool = False

    def __post_init__(self):
        for name in ("p_audio", "p_language", "p_visual"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}, got {self.granularity!r}")
        if self.guard_all_dropped and self.p_audio == self.p_language == self.p_visual == 1.0:
            raise ValueError("guard_all_dropped cannot be satisfied when all probabilities are 1")

    def probability(self, modality: str) -> float:
        return {"language": self.p_language, "audio": self.p_audio, "visual": self.p_visual}[modality]


@dataclass
class ModalityMask:
    """Boolean masks, True where a modality is zeroed.

    Arrays are [batch] for per-sequence masks and [batch, timesteps] for
    per-timestep masks.
    """

    language: np.ndarray
    audio: np.ndarray
    visual: np.ndarray
    granularity: str = PER_SEQUENCE

    def for_modality(self, modality: str) -> np.ndarray:
        return getattr(self, modality)


def draw_mask(
    batch_size: int,
    policy: DropoutPolicy,
    rng: np.random.Generator,
    timesteps: int | None = None,
) -> ModalityMask:
    """Draw one mask per modality with the policy's probabilities."""
    if policy.granularity == PER_TIMESTEP:
        if timesteps is None:
            raise ValueError("per-timestep masks need the batch's timestep count")
        shape: tuple[int, ...] = (batch_size, timesteps)
    else:
        shape = (batch_size,)

    masks = {name: rng.random(shape) < policy.probability(name) for name in MODALITIES}
    if policy.guard_all_dropped:
        while True:
            bad = masks["language"] & masks["audio"] & masks["visual"]
            if not bad.any():
                break
            count = int(bad.sum())
            for name in MODALITIES:
                redraw = rng.random(count) < policy.probability(name)
                masks[name] = masks[name].copy()
                masks[name][bad] = redraw
    return ModalityMask(
        language=masks["language"],
        audio=masks["audio"],
        visual=masks["visual"],
        granularity=policy.granularity,
    )


def apply_mask(batch: MultimodalBatch, mask: ModalityMask) -> MultimodalBatch:
    """Zero the masked modality blocks; targets and ordering are untouched."""
    out = {}
    for name in MODALITIES:
        block = getattr(batch, name)
        m = mask.for_modality(name)
        if m.shape != (batch.batch_size,) and m.shape != (batch.batch_size, batch.timesteps):
            raise DimensionError(f"mask shape {m.shape} does not fit batch [{batch.batch_size}, {batch.timesteps}]")
        block = block.copy()
        block[m] = 0.0
        out[name] = block
    return MultimodalBatch(
        language=out["language"],
        audio=out["audio"],
        visual=out["visual"],
        targets=batch.targets,
        original_lengths=batch.original_lengths,
    )


def unimodal_mask(batch_size: int, kept: str) -> ModalityMask:
    """Deterministic per-sequence mask zeroing every modality except ``kept``."""
    if kept not in MODALITIES:
        raise ValueError(f"unknown modality {kept!r}; expected one of {MODALITIES}")
    masks = {name: np.full(batch_size, name != kept) for name in MODALITIES}
    return ModalityMask(language=masks["language"], audio=masks["audio"], visual=masks["visual"])


def mask_for_unimodal_eval(batch: MultimodalBatch, kept: str) -> MultimodalBatch:
    """Test-time view of a batch with only ``kept`` left nonzero."""
    return apply_mask(batch, unimodal_mask(batch.batch_size, kept))
