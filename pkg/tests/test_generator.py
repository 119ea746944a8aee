import numpy as np
import pytest
from scipy.special import logsumexp

from synthrep.generator import (
    DiffusionSchedule,
    GeneratorConfig,
    PromptSpec,
    SamplerNumericsError,
    caption_offset,
    caption_to_component,
    cfg_epsilon,
    class_center,
    conditional_sample,
    ddim_sample,
    epsilon_cond,
    epsilon_uncond,
    generate_dataset,
    prompt_from_text,
)


def small_cfg(**kw):
    base = dict(feature_dim=6, num_classes=3, ddim_steps=20)
    base.update(kw)
    return GeneratorConfig(**base)


def random_prompt(rng, num_classes=3):
    return PromptSpec(
        caption_id=int(rng.integers(0, 1000)),
        class_id=int(rng.integers(0, num_classes)),
        prompt_seed=int(rng.integers(0, 2**63)),
    )


# -- independent log-density oracles. These recompute the noisy marginals from
# first principles: z_t = alpha*x0 + sigma*eps with x0 ~ N(mean, var*I), so
# z_t ~ N(alpha*mean, (alpha^2*var + sigma^2)*I). The score is differenced
# numerically, never taken from the implementation under test.


def cond_logpdf(z, mean, var, alpha, sigma):
    total = alpha**2 * var + sigma**2
    diff = z - alpha * mean
    d = z.shape[-1]
    return -0.5 * (diff @ diff) / total - 0.5 * d * np.log(2.0 * np.pi * total)


def uncond_logpdf(z, centers, var, alpha, sigma):
    comps = [cond_logpdf(z, c, var, alpha, sigma) for c in centers]
    return logsumexp(comps) - np.log(len(centers))


def fd_score(logpdf, z, h=1e-6):
    g = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (logpdf(zp) - logpdf(zm)) / (2.0 * h)
    return g


def test_schedule_invariants():
    sched = DiffusionSchedule.cosine(50)
    assert sched.alphas.shape == (50,)
    assert np.all(np.diff(sched.alphas) > 0)
    np.testing.assert_allclose(sched.alphas**2 + sched.sigmas**2, 1.0, atol=1e-12)
    assert sched.alphas[0] < 1e-3 and sched.alphas[-1] > 0.999


def test_schedule_rejects_bad_steps():
    with pytest.raises(ValueError):
        DiffusionSchedule.cosine(0)


def test_class_center_deterministic_and_scaled():
    cfg = small_cfg()
    c1 = class_center(0, cfg)
    c2 = class_center(0, cfg)
    np.testing.assert_array_equal(c1, c2)
    assert c1.shape == (6,)
    cfg2 = small_cfg(class_center_scale=2.0 * cfg.class_center_scale)
    np.testing.assert_allclose(class_center(0, cfg2), 2.0 * c1, rtol=1e-15)


def test_zero_scales_give_zero_mean():
    cfg = small_cfg(class_center_scale=0.0, caption_offset_scale=0.0)
    prompt = PromptSpec(caption_id=0, class_id=1, prompt_seed=123)
    mean, cls = caption_to_component(prompt, cfg)
    np.testing.assert_array_equal(mean, np.zeros(6))
    assert cls == 1


def test_caption_offsets_average_to_class_center():
    # Monte-Carlo over the deterministic offset generator: the mean of many
    # caption means should approach the class center at the 1/sqrt(n) rate.
    cfg = small_cfg(caption_offset_scale=1.0)
    rng = np.random.default_rng(0)
    means = []
    for _ in range(1000):
        prompt = PromptSpec(0, 2, int(rng.integers(0, 2**63)))
        mean, _ = caption_to_component(prompt, cfg)
        means.append(mean)
    avg = np.mean(means, axis=0)
    center = class_center(2, cfg)
    se = cfg.caption_offset_scale / np.sqrt(1000.0)
    assert np.all(np.abs(avg - center) < 3.5 * se)


def test_prompt_from_text_stable():
    p1 = prompt_from_text(0, "a dog", 3)
    p2 = prompt_from_text(5, "a dog", 3)
    assert p1.prompt_seed == p2.prompt_seed
    assert p1.class_id == p2.class_id
    assert 0 <= p1.class_id < 3


def test_epsilon_cond_matches_fd_score():
    # eps(z, t) must equal -sigma * grad_z log q_t(z | caption) for the exact
    # conditional Gaussian. 200 random (z, t) instances.
    cfg = small_cfg()
    rng = np.random.default_rng(1)
    sched = cfg.schedule
    worst = 0.0
    var = cfg.conditional_std**2
    for _ in range(200):
        prompt = random_prompt(rng)
        mean, _ = caption_to_component(prompt, cfg)
        k = int(rng.integers(0, sched.alphas.size))
        alpha, sigma = sched.alphas[k], sched.sigmas[k]
        z = rng.standard_normal(6) * 2.0
        eps = epsilon_cond(z, k, prompt, cfg)
        score = fd_score(lambda q: cond_logpdf(q, mean, var, alpha, sigma), z)
        rel = np.max(np.abs(eps - (-sigma * score))) / max(np.max(np.abs(eps)), 1e-12)
        worst = max(worst, rel)
    assert worst < 1e-5


def test_epsilon_uncond_matches_fd_score():
    cfg = small_cfg()
    rng = np.random.default_rng(2)
    sched = cfg.schedule
    centers = [class_center(c, cfg) for c in range(cfg.num_classes)]
    var = cfg.conditional_std**2 + cfg.caption_offset_scale**2
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(0, sched.alphas.size))
        alpha, sigma = sched.alphas[k], sched.sigmas[k]
        z = rng.standard_normal(6) * 2.0
        eps = epsilon_uncond(z, k, cfg)
        score = fd_score(lambda q: uncond_logpdf(q, centers, var, alpha, sigma), z)
        rel = np.max(np.abs(eps - (-sigma * score))) / max(np.max(np.abs(eps)), 1e-12)
        worst = max(worst, rel)
    assert worst < 1e-5


def test_epsilon_uncond_single_class_reduces_to_cond():
    # one component: the marginal is a single Gaussian at the class center with
    # the offset-inflated variance
    cfg = small_cfg(num_classes=1, caption_offset_scale=0.0)
    prompt = PromptSpec(0, 0, 77)
    sched = cfg.schedule
    rng = np.random.default_rng(3)
    for _ in range(20):
        k = int(rng.integers(0, sched.alphas.size))
        z = rng.standard_normal(6)
        e_u = epsilon_uncond(z, k, cfg)
        e_c = epsilon_cond(z, k, prompt, cfg)
        np.testing.assert_allclose(e_u, e_c, atol=1e-12)

    cfg2 = small_cfg(num_classes=1, caption_offset_scale=0.7)
    center = class_center(0, cfg2)
    var = cfg2.conditional_std**2 + 0.7**2
    for k in (0, 10, 19):
        alpha, sigma = cfg2.schedule.alphas[k], cfg2.schedule.sigmas[k]
        z = rng.standard_normal(6)
        total = alpha**2 * var + sigma**2
        m = center + (alpha * var / total) * (z - alpha * center)
        np.testing.assert_allclose(
            epsilon_uncond(z, k, cfg2), (z - alpha * m) / sigma, atol=1e-12
        )


def test_epsilon_uncond_equidistant_cancels_center_pull():
    # A point equidistant from both scaled centers gets equal responsibilities,
    # so the mixture eps reduces to a shrinkage of z plus the shared-mean pull;
    # for symmetric centers that pull vanishes and eps is aligned with z.
    cfg = small_cfg(num_classes=2)
    c0, c1 = class_center(0, cfg), class_center(1, cfg)
    k = len(cfg.schedule) - 5
    alpha, sigma = cfg.schedule.alphas[k], cfg.schedule.sigmas[k]
    rng = np.random.default_rng(4)
    axis = alpha * (c0 - c1)
    z = rng.standard_normal(6)
    z -= ((z - 0.5 * alpha * (c0 + c1)) @ axis) / (axis @ axis) * axis
    d0 = np.linalg.norm(z - alpha * c0)
    d1 = np.linalg.norm(z - alpha * c1)
    assert d0 == pytest.approx(d1, rel=1e-12)

    var = cfg.conditional_std**2 + cfg.caption_offset_scale**2
    shrink = alpha * var / (alpha**2 * var + sigma**2)
    expected = (z - alpha * (shrink * z + (1.0 - alpha * shrink) * 0.5 * (c0 + c1))) / sigma
    eps = epsilon_uncond(z, k, cfg)
    np.testing.assert_allclose(eps, expected, atol=1e-10)
    # the z-dependence alone is a pure rescaling: aligned with z
    residual = eps - (-(alpha / sigma) * (1.0 - alpha * shrink) * 0.5 * (c0 + c1))
    cosine = residual @ z / (np.linalg.norm(residual) * np.linalg.norm(z))
    assert cosine == pytest.approx(1.0, abs=1e-10)


def test_cfg_epsilon_arithmetic():
    cfg = small_cfg(guidance_scale=3.0)
    prompt = PromptSpec(0, 1, 99)
    rng = np.random.default_rng(5)
    z = rng.standard_normal(6)
    e_c = epsilon_cond(z, 10, prompt, cfg)
    e_u = epsilon_uncond(z, 10, cfg)
    e_g = cfg_epsilon(z, 10, prompt, cfg)
    np.testing.assert_allclose(e_g, 3.0 * e_c - 2.0 * e_u, atol=1e-12)


def test_cfg_epsilon_w1_is_conditional():
    cfg = small_cfg(guidance_scale=1.0)
    prompt = PromptSpec(0, 0, 7)
    z = np.linspace(-1, 1, 6)
    np.testing.assert_array_equal(
        cfg_epsilon(z, 5, prompt, cfg),
        epsilon_cond(z, 5, prompt, cfg),
    )


def test_ddim_sample_deterministic():
    cfg = small_cfg()
    prompt = PromptSpec(3, 2, 1234)
    s1 = ddim_sample(prompt, latent_seed=42, cfg=cfg)
    s2 = ddim_sample(prompt, latent_seed=42, cfg=cfg)
    np.testing.assert_array_equal(s1.feature, s2.feature)
    s3 = ddim_sample(prompt, latent_seed=43, cfg=cfg)
    assert not np.allclose(s1.feature, s3.feature)


def test_ddim_point_mass_limit():
    # conditional_std -> 0 at w=1 collapses the sampler onto the caption mean
    cfg = small_cfg(conditional_std=1e-8, guidance_scale=1.0, ddim_steps=200)
    prompt = PromptSpec(0, 1, 2024)
    mean, _ = caption_to_component(prompt, cfg)
    out = ddim_sample(prompt, latent_seed=5, cfg=cfg)
    assert np.linalg.norm(out.feature - mean) < 1e-3


def test_generate_dataset_batched_matches_single():
    # the batched trajectory must be bit-identical to one-at-a-time sampling
    cfg = small_cfg(guidance_scale=2.0)
    prompts = [prompt_from_text(i, f"caption number {i}", 3) for i in range(4)]
    man = generate_dataset(prompts, 3, cfg, seed=11)
    assert man.features.shape == (12, 6)
    for row in range(12):
        prompt = next(p for p in prompts if p.caption_id == man.caption_ids[row])
        single = ddim_sample(prompt, int(man.latent_seeds[row]), cfg)
        np.testing.assert_array_equal(man.features[row], single.feature)


def test_generate_dataset_guidance_set_frequencies():
    cfg = small_cfg()
    prompts = [prompt_from_text(i, f"c{i}", 3) for i in range(30)]
    man = generate_dataset(prompts, 20, cfg, seed=9, guidance_scales=[2.0, 8.0])
    vals, counts = np.unique(man.guidance_scales, return_counts=True)
    np.testing.assert_array_equal(vals, [2.0, 8.0])
    # uniform choice over two values: 600 draws, both sides within 5 sigma
    assert abs(counts[0] - 300) < 5 * np.sqrt(600 * 0.25)


def test_generate_dataset_direct_sampler_matches_conditional():
    cfg = small_cfg()
    prompts = [prompt_from_text(i, f"c{i}", 3) for i in range(3)]
    man = generate_dataset(prompts, 50, cfg, seed=13, sampler="direct")
    var = cfg.conditional_std**2
    for p in prompts:
        rows = man.rows_for_caption(p.caption_id)
        mean, _ = caption_to_component(p, cfg)
        x = man.features[rows]
        assert np.all(np.abs(x.mean(axis=0) - mean) < 5 * np.sqrt(var / len(rows)))


def test_conditional_sample_moments():
    cfg = small_cfg()
    prompt = PromptSpec(0, 2, 555)
    mean, _ = caption_to_component(prompt, cfg)
    var = cfg.conditional_std**2
    x = conditional_sample(prompt, 20000, cfg, seed=3)
    assert x.shape == (20000, 6)
    np.testing.assert_allclose(x.mean(axis=0), mean, atol=5 * np.sqrt(var / 20000))
    np.testing.assert_allclose(
        x.std(axis=0, ddof=1), np.sqrt(var), rtol=5.0 / np.sqrt(2 * 20000)
    )


def test_sampler_numerics_error_carries_step():
    cfg = small_cfg(guidance_scale=1e160)
    prompt = PromptSpec(0, 0, 1)
    with pytest.raises(SamplerNumericsError) as exc:
        ddim_sample(prompt, latent_seed=1, cfg=cfg)
    assert "step" in str(exc.value)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(feature_dim=1)
    with pytest.raises(ValueError):
        GeneratorConfig(num_classes=0)
    with pytest.raises(ValueError):
        GeneratorConfig(conditional_std=0.0)
    with pytest.raises(ValueError):
        GeneratorConfig(guidance_scale=-0.5)


def test_config_roundtrip():
    cfg = small_cfg(guidance_scale=4.0)
    again = GeneratorConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
