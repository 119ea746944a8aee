"""Caption management, generation budgets, and the batch sampler.

Batches group m samples of each of n captions in caption-major order; the
contrastive objective treats same-caption samples as positives. Augmentation
is feature-space noise plus random scaling, standing in for pixel transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .generator import PromptSpec, prompt_from_text
from .manifest import DatasetManifest
from .seeding import SALT_AUGMENT, SALT_BATCH, rng_from

__all__ = [
    "CaptionRecord",
    "GenerationBudget",
    "BatchSpec",
    "Batch",
    "normalize_text",
    "load_captions",
    "synth_captions",
    "dedup_captions",
    "split_budget",
    "augment",
    "augment_batch",
    "sample_batch",
    "epoch_plan",
]


@dataclass(frozen=True)
class CaptionRecord:
    caption_id: int
    text: str
    prompt: PromptSpec


def normalize_text(text: str) -> str:
    """Lowercase and collapse runs of whitespace; used for duplicate detection."""
    return " ".join(text.lower().split())


def load_captions(path: str, num_classes: int) -> list[CaptionRecord]:
    """Read one caption per line; the line number is the caption_id.

    Blank lines are skipped but still consume an id, so ids are stable under
    edits elsewhere in the file. No de-duplication is applied here.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            records.append(
                CaptionRecord(
                    caption_id=i,
                    text=text,
                    prompt=prompt_from_text(i, text, num_classes),
                )
            )
    return records


_ADJECTIVES = [
    "red", "blue", "golden", "tiny", "giant", "striped", "spotted",
    "glossy", "ancient", "crooked", "quiet", "bright",
]
_NOUNS = [
    "fox", "lantern", "bridge", "teapot", "bicycle", "lighthouse",
    "cactus", "violin", "kite", "windmill", "turtle", "clock",
]
_CONTEXTS = [
    "in the rain", "at dawn", "on a hill", "under water", "in the desert",
    "beside a river", "in deep snow", "at the market",
]


def synth_captions(num_captions: int, num_classes: int, seed: int) -> list[CaptionRecord]:
    """Deterministically synthesize distinct caption texts.

    Word choices come from a seeded generator; collisions get a variant
    suffix so the returned list is already duplicate-free.
    """
    if num_captions < 1:
        raise ValueError("num_captions must be >= 1")
    rng = rng_from(seed)
    seen: set[str] = set()
    records = []
    for i in range(num_captions):
        text = "a %s %s %s" % (
            _ADJECTIVES[rng.integers(len(_ADJECTIVES))],
            _NOUNS[rng.integers(len(_NOUNS))],
            _CONTEXTS[rng.integers(len(_CONTEXTS))],
        )
        k = 2
        candidate = text
        while normalize_text(candidate) in seen:
            candidate = f"{text}, variant {k}"
            k += 1
        seen.add(normalize_text(candidate))
        records.append(
            CaptionRecord(
                caption_id=i,
                text=candidate,
                prompt=prompt_from_text(i, candidate, num_classes),
            )
        )
    return records


def dedup_captions(records: list[CaptionRecord]) -> list[CaptionRecord]:
    """Keep the first occurrence of each normalized text; preserve order."""
    seen: set[str] = set()
    kept = []
    for rec in records:
        key = normalize_text(rec.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(rec)
    return kept


@dataclass(frozen=True)
class GenerationBudget:
    """A fixed image budget T split as T/l captions times l images each."""

    total_images: int
    images_per_caption: int
    num_captions: int


def split_budget(total_images: int, images_per_caption: int) -> GenerationBudget:
    if total_images < 1 or images_per_caption < 1:
        raise ValueError("budget quantities must be positive")
    if total_images % images_per_caption != 0:
        raise ValueError(
            f"images_per_caption={images_per_caption} does not divide "
            f"total_images={total_images}"
        )
    return GenerationBudget(
        total_images=total_images,
        images_per_caption=images_per_caption,
        num_captions=total_images // images_per_caption,
    )


@dataclass(frozen=True)
class BatchSpec:
    """n captions times m samples per caption; batch size C = n * m."""

    num_captions: int
    samples_per_caption: int

    def __post_init__(self) -> None:
        if self.num_captions < 2:
            raise ValueError("num_captions must be >= 2")
        if self.samples_per_caption < 1:
            raise ValueError("samples_per_caption must be >= 1")

    @property
    def total(self) -> int:
        return self.num_captions * self.samples_per_caption


@dataclass
class Batch:
    """C feature rows in caption-major order with parallel caption ids."""

    features: np.ndarray  # (C, d)
    caption_ids: np.ndarray  # (C,)

    def __post_init__(self) -> None:
        c = self.features.shape[0]
        if self.caption_ids.shape != (c,):
            raise ValueError("caption_ids must parallel features")
        # caption-major: equal-length contiguous runs of each distinct id
        ids = self.caption_ids
        boundaries = np.flatnonzero(np.diff(ids) != 0)
        runs = np.diff(np.concatenate(([0], boundaries + 1, [c])))
        run_ids = ids[np.concatenate(([0], boundaries + 1))]
        if len(set(run_ids.tolist())) != run_ids.size:
            raise ValueError("caption runs are not contiguous (not caption-major)")
        if np.min(runs) != np.max(runs):
            raise ValueError("unequal samples per caption in batch")

    @property
    def num_captions(self) -> int:
        return int(np.unique(self.caption_ids).size)

    @property
    def samples_per_caption(self) -> int:
        return int(self.features.shape[0] // self.num_captions)


def augment(feature: np.ndarray, strength: float, seed: int) -> np.ndarray:
    """Additive Gaussian noise then uniform rescaling, both seeded.

    out = u * (x + strength * g) with g ~ N(0, I) and u ~ U[1 - strength,
    1 + strength]. strength=0 returns the input unchanged.
    """
    if not np.isfinite(strength) or strength < 0:
        raise ValueError("strength must be finite and >= 0")
    x = np.asarray(feature, dtype=float)
    if strength == 0.0:
        return x.copy()
    rng = rng_from(SALT_AUGMENT, seed)
    g = rng.standard_normal(x.shape)
    u = rng.uniform(1.0 - strength, 1.0 + strength)
    return u * (x + strength * g)


def augment_batch(features: np.ndarray, strength: float, seed: int) -> np.ndarray:
    """Row-wise augment with one noise matrix and one scale per row."""
    if not np.isfinite(strength) or strength < 0:
        raise ValueError("strength must be finite and >= 0")
    x = np.asarray(features, dtype=float)
    if strength == 0.0:
        return x.copy()
    rng = rng_from(SALT_AUGMENT, seed)
    g = rng.standard_normal(x.shape)
    u = rng.uniform(1.0 - strength, 1.0 + strength, size=x.shape[0])
    return u[:, None] * (x + strength * g)


def sample_batch(
    manifest: DatasetManifest,
    spec: BatchSpec,
    seed: int,
    caption_ids: np.ndarray | None = None,
) -> Batch:
    """Draw n captions, then m of each caption's samples, without replacement.

    When `caption_ids` is given those captions are used in the given order and
    only the within-caption subset is random; this is how epoch passes walk a
    caption permutation. Feature rows are copied verbatim from the manifest.
    """
    rng = rng_from(SALT_BATCH, seed)
    n, m = spec.num_captions, spec.samples_per_caption
    if caption_ids is None:
        pool = manifest.unique_caption_ids
        if pool.size < n:
            raise ValueError(f"need {n} captions, manifest has {pool.size}")
        caption_ids = pool[rng.choice(pool.size, size=n, replace=False)]
    else:
        caption_ids = np.asarray(caption_ids)
        if caption_ids.size != n:
            raise ValueError("explicit caption list must match spec.num_captions")

    rows = np.empty(n * m, dtype=np.int64)
    for j, cid in enumerate(caption_ids):
        avail = manifest.rows_for_caption(int(cid))
        if avail.size < m:
            raise ValueError(
                f"caption {int(cid)} has {avail.size} samples, need {m}"
            )
        pick = rng.choice(avail.size, size=m, replace=False)
        rows[j * m : (j + 1) * m] = avail[pick]

    return Batch(
        features=manifest.features[rows].copy(),
        caption_ids=manifest.caption_ids[rows].copy(),
    )


def epoch_plan(num_captions: int, spec: BatchSpec) -> tuple[int, Fraction]:
    """Batches in one pass over the captions, and the compute factor vs. a
    two-view single-positive run (m / 2)."""
    if num_captions < 1:
        raise ValueError("num_captions must be >= 1")
    batches = math.ceil(num_captions / spec.num_captions)
    return batches, Fraction(spec.samples_per_caption, 2)
