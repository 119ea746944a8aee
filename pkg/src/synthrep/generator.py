"""Toy text-to-image generator with closed-form noise predictions.

The "image" space is a low-dimensional feature space. Each caption maps to a
Gaussian component N(mu, sigma_c^2 I) whose mean is a class center plus a
caption-specific offset, both drawn deterministically from seeds. Because the
data distribution is Gaussian (conditionally) and a finite Gaussian mixture
(marginally), the variance-preserving diffusion process has exact noise
predictions at every level, so classifier-free guidance and DDIM sampling can
be run literally, without a learned denoiser:

    guided eps = w * eps_cond + (1 - w) * eps_uncond

All operations are pure functions of their arguments plus explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import (
    SALT_CAPTION_OFFSET,
    SALT_CLASS_CENTER,
    SALT_GUIDANCE,
    SALT_LATENT,
    caption_fingerprint,
    derive_u64,
    rng_from,
)

__all__ = [
    "PromptSpec",
    "DiffusionSchedule",
    "GeneratorConfig",
    "SyntheticSample",
    "prompt_from_text",
    "class_center",
    "caption_offset",
    "caption_to_component",
    "epsilon_cond",
    "epsilon_uncond",
    "cfg_epsilon",
    "conditional_sample",
    "ddim_sample",
    "generate_dataset",
]


@dataclass(frozen=True)
class PromptSpec:
    """Identity of one caption: id, class assignment, and its derived seed."""

    caption_id: int
    class_id: int
    prompt_seed: int


def prompt_from_text(caption_id: int, text: str, num_classes: int) -> PromptSpec:
    """Derive a PromptSpec from caption text.

    The seed and class assignment depend only on the exact text, so the same
    caption always maps to the same component.
    """
    prompt_seed, selector = caption_fingerprint(text)
    return PromptSpec(
        caption_id=caption_id,
        class_id=int(selector % num_classes),
        prompt_seed=prompt_seed,
    )


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-preserving noise levels along the reverse trajectory.

    alphas[i]^2 + sigmas[i]^2 == 1 at every index; alphas increase from near 0
    (pure noise) to near 1 (clean). Endpoints are clamped away from 0 so the
    eps parameterization never divides by zero.
    """

    alphas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        a, s = self.alphas, self.sigmas
        if a.ndim != 1 or a.shape != s.shape or a.size < 1:
            raise ValueError("schedule arrays must be 1-D and equally sized")
        if np.min(s) <= 0 or np.min(a) <= 0:
            raise ValueError("schedule requires alpha > 0 and sigma > 0 at every step")
        if np.any(np.diff(a) <= 0):
            raise ValueError("alpha must strictly increase along the reverse trajectory")
        if np.max(np.abs(a**2 + s**2 - 1.0)) > 1e-12:
            raise ValueError("schedule is not variance-preserving")

    def __len__(self) -> int:
        return int(self.alphas.size)

    @staticmethod
    def cosine(steps: int, floor: float = 1e-4) -> "DiffusionSchedule":
        """Cosine schedule on `steps` uniform points, clamped so sigma >= floor
        at the clean end and alpha >= floor at the noisy end."""
        if steps < 1:
            raise ValueError("steps must be >= 1")
        theta_noisy = np.arccos(floor)
        theta_clean = np.arcsin(floor)
        if steps == 1:
            theta = np.array([theta_noisy])
        else:
            theta = np.linspace(theta_noisy, theta_clean, steps)
        return DiffusionSchedule(alphas=np.cos(theta), sigmas=np.sin(theta))


@dataclass
class GeneratorConfig:
    """Knobs of the toy generator. All scales are in feature-space units."""

    feature_dim: int = 32
    num_classes: int = 10
    class_center_scale: float = 0.35
    caption_offset_scale: float = 1.0
    conditional_std: float = 0.5
    guidance_scale: float = 1.0
    ddim_steps: int = 50
    schedule: DiffusionSchedule = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.schedule is None:
            self.schedule = DiffusionSchedule.cosine(self.ddim_steps)
        self.validate()

    def validate(self) -> None:
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        # a single class is allowed: the unconditional mixture degenerates to
        # one component, which is a documented reduction of epsilon_uncond
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        for name in ("class_center_scale", "caption_offset_scale"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if not np.isfinite(self.conditional_std) or self.conditional_std <= 0:
            raise ValueError("conditional_std must be finite and > 0")
        if not np.isfinite(self.guidance_scale) or self.guidance_scale < 0:
            raise ValueError("guidance_scale must be finite and >= 0")
        if self.ddim_steps < 1:
            raise ValueError("ddim_steps must be >= 1")
        if len(self.schedule) != self.ddim_steps:
            raise ValueError("schedule length must equal ddim_steps")

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "num_classes": self.num_classes,
            "class_center_scale": self.class_center_scale,
            "caption_offset_scale": self.caption_offset_scale,
            "conditional_std": self.conditional_std,
            "guidance_scale": self.guidance_scale,
            "ddim_steps": self.ddim_steps,
        }

    @staticmethod
    def from_dict(d: dict) -> "GeneratorConfig":
        return GeneratorConfig(**d)


@dataclass(frozen=True)
class SyntheticSample:
    """One generated feature vector and the identifiers that reproduce it."""

    caption_id: int
    feature: np.ndarray
    latent_seed: int
    guidance_scale: float


def class_center(class_id: int, cfg: GeneratorConfig) -> np.ndarray:
    """Center of a class component; a pure function of (class_id, cfg)."""
    rng = rng_from(SALT_CLASS_CENTER, class_id)
    return cfg.class_center_scale * rng.standard_normal(cfg.feature_dim)


def caption_offset(prompt: PromptSpec, cfg: GeneratorConfig) -> np.ndarray:
    rng = rng_from(SALT_CAPTION_OFFSET, prompt.prompt_seed)
    return cfg.caption_offset_scale * rng.standard_normal(cfg.feature_dim)


def caption_to_component(
    prompt: PromptSpec, cfg: GeneratorConfig
) -> tuple[np.ndarray, int]:
    """Mean of the conditional distribution for this caption, and its class."""
    mean = class_center(prompt.class_id, cfg) + caption_offset(prompt, cfg)
    return mean, prompt.class_id


def _level(cfg: GeneratorConfig, index: int) -> tuple[float, float]:
    if not 0 <= index < len(cfg.schedule):
        raise IndexError(f"schedule index {index} out of range [0, {len(cfg.schedule)})")
    return float(cfg.schedule.alphas[index]), float(cfg.schedule.sigmas[index])


def epsilon_cond(
    z: np.ndarray, level_index: int, prompt: PromptSpec, cfg: GeneratorConfig
) -> np.ndarray:
    """Exact conditional noise prediction for p(x | caption) = N(mu, sigma_c^2 I).

    Under the variance-preserving forward process the posterior mean of x
    given a noisy z at level (alpha, sigma) is

        m = mu + (alpha * sigma_c^2 / (alpha^2 sigma_c^2 + sigma^2)) * (z - alpha * mu)

    and the noise prediction is (z - alpha * m) / sigma. Accepts z with any
    leading batch shape over the last (feature) axis.
    """
    alpha, sigma = _level(cfg, level_index)
    if sigma == 0.0:
        raise ZeroDivisionError("sigma = 0 at the clean endpoint")
    mu, _ = caption_to_component(prompt, cfg)
    var = cfg.conditional_std**2
    total = alpha**2 * var + sigma**2
    m = mu + (alpha * var / total) * (z - alpha * mu)
    return (z - alpha * m) / sigma


def epsilon_uncond(
    z: np.ndarray, level_index: int, cfg: GeneratorConfig
) -> np.ndarray:
    """Exact unconditional noise prediction for the class-level mixture.

    Marginalizing captions within a class inflates the component variance to
    sigma_c^2 + caption_offset_scale^2; the marginal of z is an equal-weight
    mixture over class centers. The prediction is the responsibility-weighted
    posterior mean pushed through the same eps conversion as epsilon_cond.
    """
    alpha, sigma = _level(cfg, level_index)
    if sigma == 0.0:
        raise ZeroDivisionError("sigma = 0 at the clean endpoint")
    centers = np.stack(
        [class_center(k, cfg) for k in range(cfg.num_classes)]
    )  # (K, d)
    var = cfg.conditional_std**2 + cfg.caption_offset_scale**2
    total = alpha**2 * var + sigma**2

    z = np.asarray(z, dtype=float)
    diff = z[..., None, :] - alpha * centers  # (..., K, d)
    logits = -0.5 * np.sum(diff**2, axis=-1) / total  # (..., K)
    logits -= np.max(logits, axis=-1, keepdims=True)
    resp = np.exp(logits)
    resp /= np.sum(resp, axis=-1, keepdims=True)

    post_means = centers + (alpha * var / total) * diff  # (..., K, d)
    m = np.sum(resp[..., :, None] * post_means, axis=-2)  # (..., d)
    return (z - alpha * m) / sigma


def cfg_epsilon(
    z: np.ndarray,
    level_index: int,
    prompt: PromptSpec,
    cfg: GeneratorConfig,
    guidance_scale: float | None = None,
) -> np.ndarray:
    """Classifier-free-guided prediction: w * eps_cond + (1 - w) * eps_uncond."""
    w = cfg.guidance_scale if guidance_scale is None else guidance_scale
    eps_c = epsilon_cond(z, level_index, prompt, cfg)
    if w == 1.0:
        return eps_c
    eps_u = epsilon_uncond(z, level_index, cfg)
    return w * eps_c + (1.0 - w) * eps_u


class SamplerNumericsError(RuntimeError):
    """Raised when a DDIM intermediate contains NaN or Inf."""


def _ddim_trajectory(
    z0: np.ndarray, prompt: PromptSpec, cfg: GeneratorConfig, guidance_scale: float
) -> np.ndarray:
    """Run the deterministic reverse updates on a batch of initial latents.

    At each level: x_hat = (z - sigma * eps) / alpha, then
    z <- alpha' * x_hat + sigma' * eps. Returns the final x_hat. All updates
    are elementwise, so batched and single-sample runs are bit-identical.
    """
    alphas, sigmas = cfg.schedule.alphas, cfg.schedule.sigmas
    steps = len(cfg.schedule)
    z = np.asarray(z0, dtype=float)
    # overflow here is not a warning condition: it surfaces as a non-finite
    # intermediate and raises with the offending step index
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            eps = cfg_epsilon(z, i, prompt, cfg, guidance_scale)
            x_hat = (z - sigmas[i] * eps) / alphas[i]
            if not np.all(np.isfinite(x_hat)):
                raise SamplerNumericsError(f"non-finite intermediate at step {i}")
            if i + 1 < steps:
                z = alphas[i + 1] * x_hat + sigmas[i + 1] * eps
    return x_hat


def conditional_sample(
    prompt: PromptSpec, count: int, cfg: GeneratorConfig, seed: int
) -> np.ndarray:
    """Exact draws from the caption's component N(mu, sigma_c^2 I).

    This is the ground-truth data distribution, free of sampler bias; it
    stands in for "real" data when evaluating representations.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mu, _ = caption_to_component(prompt, cfg)
    rng = rng_from(seed)
    return mu + cfg.conditional_std * rng.standard_normal((count, cfg.feature_dim))


def ddim_sample(
    prompt: PromptSpec,
    latent_seed: int,
    cfg: GeneratorConfig,
    guidance_scale: float | None = None,
) -> SyntheticSample:
    """Generate one sample; bit-identical for identical (prompt, seed, cfg)."""
    w = cfg.guidance_scale if guidance_scale is None else guidance_scale
    z0 = rng_from(latent_seed).standard_normal(cfg.feature_dim)
    x = _ddim_trajectory(z0[None, :], prompt, cfg, w)[0]
    return SyntheticSample(
        caption_id=prompt.caption_id,
        feature=x,
        latent_seed=int(latent_seed),
        guidance_scale=float(w),
    )


def generate_dataset(
    captions: list[PromptSpec],
    images_per_caption: int,
    cfg: GeneratorConfig,
    seed: int,
    guidance_scales: list[float] | None = None,
    sampler: str = "ddim",
):
    """Generate `images_per_caption` samples for every caption.

    Per-sample latent seeds are derived from (seed, caption_id, index) by
    counter-based splitting, so the result does not depend on iteration or
    thread order. When `guidance_scales` is given, each sample's w is a
    seeded uniform choice from that set (recorded per sample); otherwise
    cfg.guidance_scale applies to all samples. sampler="direct" draws from
    the exact conditional distribution instead of running the sampler,
    which is useful as held-out evaluation data.

    Returns a DatasetManifest.
    """
    from .manifest import DatasetManifest

    cfg.validate()
    if sampler not in ("ddim", "direct"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if images_per_caption < 1:
        raise ValueError("images_per_caption must be >= 1")
    if not captions:
        raise ValueError("captions must be non-empty")
    ids = [p.caption_id for p in captions]
    if len(set(ids)) != len(ids):
        raise ValueError("caption_ids must be unique")
    if guidance_scales is not None and len(guidance_scales) == 0:
        raise ValueError("guidance_scales must be non-empty when given")

    l = images_per_caption
    n_total = len(captions) * l
    features = np.empty((n_total, cfg.feature_dim))
    caption_ids = np.empty(n_total, dtype=np.int64)
    class_ids = np.empty(n_total, dtype=np.int64)
    prompt_seeds = np.empty(n_total, dtype=np.uint64)
    latent_seeds = np.empty(n_total, dtype=np.uint64)
    sample_w = np.empty(n_total)

    row = 0
    for prompt in captions:
        seeds = [derive_u64(seed, SALT_LATENT, prompt.caption_id, j) for j in range(l)]
        if len(set(seeds)) != l:
            raise RuntimeError("latent seed collision within a caption")
        if guidance_scales is None:
            ws = np.full(l, float(cfg.guidance_scale))
        else:
            ws = np.array(
                [
                    guidance_scales[
                        int(
                            rng_from(seed, SALT_GUIDANCE, prompt.caption_id, j).integers(
                                len(guidance_scales)
                            )
                        )
                    ]
                    for j in range(l)
                ]
            )
        z0 = np.stack([rng_from(s).standard_normal(cfg.feature_dim) for s in seeds])
        if sampler == "direct":
            mu, _ = caption_to_component(prompt, cfg)
            x = mu + cfg.conditional_std * z0
        else:
            # batch the trajectory per distinct guidance value
            x = np.empty_like(z0)
            for w in sorted(set(ws.tolist())):
                sel = ws == w
                x[sel] = _ddim_trajectory(z0[sel], prompt, cfg, w)
        stop = row + l
        features[row:stop] = x
        caption_ids[row:stop] = prompt.caption_id
        class_ids[row:stop] = prompt.class_id
        prompt_seeds[row:stop] = prompt.prompt_seed
        latent_seeds[row:stop] = np.array(seeds, dtype=np.uint64)
        sample_w[row:stop] = ws
        row = stop

    return DatasetManifest(
        config=cfg,
        master_seed=int(seed),
        caption_ids=caption_ids,
        class_ids=class_ids,
        prompt_seeds=prompt_seeds,
        latent_seeds=latent_seeds,
        guidance_scales=sample_w,
        features=features,
        sampler=sampler,
    )
