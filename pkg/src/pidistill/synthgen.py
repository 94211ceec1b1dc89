"""Linear-Gaussian structural causal model for benchmark datasets.

A latent patient state S ~ N(0, I_k) generates image tokens and text tokens
through fixed per-token random projections plus view-specific Gaussian noise
(sigma_x for images, sigma_z for text). Two labeling regimes:

- ``diagnostic``: Y = argmax of C fixed linear functionals of the *realized*
  pooled text, so the report determines the label exactly (label noise is
  forced to 0). A text-view oracle is perfect by construction.
- ``prognostic``: Y = argmax of C fixed linear functionals of S, then
  flipped to another class with exogenous probability eta. Both views are
  noisy windows onto S.

Ground truth (projection maps, labeling weights, per-sample latents) is
returned separately and never written into the training files; oracles score
samples with the true generating functional restricted to one view, using
the Gaussian posterior mean E[S | view] for cross-view prediction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import config_fingerprint
from .data import EmbeddingDataset, Record
from .errors import ConfigError, DataError
from .metrics import auc_binary
from .rng import stream

REGIMES = ("diagnostic", "prognostic")
ORACLE_VIEWS = ("image", "text", "latent")


@dataclass(frozen=True)
class SCMConfig:
    regime: str
    n_samples: int
    seed: int
    latent_dim: int = 8
    d_image: int = 16
    d_text: int = 16
    image_tokens: int = 8
    text_tokens: int = 8
    image_noise: float = 1.0
    text_noise: float = 0.5
    label_noise: float = 0.0
    n_classes: int = 2

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}")
        for name in ("n_samples", "latent_dim", "d_image", "d_text",
                     "image_tokens", "text_tokens"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if self.image_noise < 0 or self.text_noise < 0:
            raise ConfigError("noise scales must be >= 0")
        if not 0.0 <= self.label_noise <= 0.5:
            raise ConfigError(
                f"label_noise must be in [0, 0.5], got {self.label_noise}")
        if self.regime == "diagnostic" and self.label_noise != 0.0:
            # the report determines the label exactly in this regime
            object.__setattr__(self, "label_noise", 0.0)

    def fingerprint(self) -> str:
        return config_fingerprint(asdict(self))


@dataclass
class SCMGroundTruth:
    """Generating mechanism + realized latents, for oracle scoring only."""

    config: SCMConfig
    image_maps: np.ndarray  # (image_tokens, k, d_image)
    text_maps: np.ndarray   # (text_tokens, k, d_text)
    label_weights: np.ndarray  # prognostic: (C, k); diagnostic: (C, d_text)
    latents: np.ndarray     # (n, k)
    fingerprint: str


def _draw_mechanism(config: SCMConfig):
    """Projection maps and labeling weights, keyed by config.seed only."""
    k = config.latent_dim
    rng = stream(config.seed, "scm/maps")
    image_maps = rng.standard_normal(
        (config.image_tokens, k, config.d_image)) / np.sqrt(k)
    text_maps = rng.standard_normal(
        (config.text_tokens, k, config.d_text)) / np.sqrt(k)
    if config.regime == "prognostic":
        label_weights = rng.standard_normal((config.n_classes, k))
    else:
        label_weights = rng.standard_normal((config.n_classes, config.d_text))
    return image_maps, text_maps, label_weights


def _draw_samples(config: SCMConfig, mechanism, n: int, sample_seed: int):
    """Latents, tokens, labels for n samples under the given mechanism."""
    image_maps, text_maps, label_weights = mechanism
    latents = stream(sample_seed, "scm/latents").standard_normal(
        (n, config.latent_dim))
    image_tokens = np.einsum("nk,tkd->ntd", latents, image_maps)
    if config.image_noise > 0:
        image_tokens = image_tokens + config.image_noise * stream(
            sample_seed, "scm/noise:image").standard_normal(image_tokens.shape)
    text_tokens = np.einsum("nk,tkd->ntd", latents, text_maps)
    if config.text_noise > 0:
        text_tokens = text_tokens + config.text_noise * stream(
            sample_seed, "scm/noise:text").standard_normal(text_tokens.shape)
    if config.regime == "diagnostic":
        pooled_text = text_tokens.mean(axis=1)  # realized, noise included
        labels = np.argmax(pooled_text @ label_weights.T, axis=1)
    else:
        labels = np.argmax(latents @ label_weights.T, axis=1)
        if config.label_noise > 0:
            flip_rng = stream(sample_seed, "scm/flips")
            flip = flip_rng.random(n) < config.label_noise
            offsets = flip_rng.integers(1, config.n_classes, size=n)
            labels = np.where(flip, (labels + offsets) % config.n_classes,
                              labels)
    return latents, image_tokens, text_tokens, labels.astype(np.int64)


def generate(config: SCMConfig) -> tuple[EmbeddingDataset, SCMGroundTruth]:
    mechanism = _draw_mechanism(config)
    latents, image_tokens, text_tokens, labels = _draw_samples(
        config, mechanism, config.n_samples, config.seed)
    fingerprint = config.fingerprint()
    records = [
        Record(image=image_tokens[i], text=text_tokens[i],
               label=int(labels[i]), group_id=f"synth{i:06d}")
        for i in range(config.n_samples)
    ]
    dataset = EmbeddingDataset(
        records, n_classes=config.n_classes,
        has_cls={"image": False, "text": False},
        provenance={
            "generator": "scm",
            "regime": config.regime,
            "seed": str(config.seed),
            "scm_fingerprint": fingerprint,
        })
    image_maps, text_maps, label_weights = mechanism
    ground_truth = SCMGroundTruth(
        config=config, image_maps=image_maps, text_maps=text_maps,
        label_weights=label_weights, latents=latents, fingerprint=fingerprint)
    return dataset, ground_truth


# ---------------------------------------------------------------------------
# oracles


def _posterior_mean(tokens_flat: np.ndarray, maps: np.ndarray,
                    noise: float) -> np.ndarray:
    """E[S | view] where view = S @ Phi^T + noise, vectorized over samples.

    maps (T, k, d) stack to Phi (T*d, k) in the same order tokens flatten.
    """
    t, k, d = maps.shape
    phi = maps.transpose(0, 2, 1).reshape(t * d, k)
    if noise > 0:
        gram = phi.T @ phi + (noise ** 2) * np.eye(k)
        return np.linalg.solve(gram, phi.T @ tokens_flat.T).T
    solution, *_ = np.linalg.lstsq(phi, tokens_flat.T, rcond=None)
    return solution.T


def _decision_direction(gt: SCMGroundTruth) -> np.ndarray:
    """The generating functional's direction in latent space (binary)."""
    if gt.config.regime == "prognostic":
        return gt.label_weights[1] - gt.label_weights[0]
    mean_map = gt.text_maps.mean(axis=0)  # (k, d_text)
    return mean_map @ (gt.label_weights[1] - gt.label_weights[0])


def _oracle_scores(gt: SCMGroundTruth, image_tokens, text_tokens, latents,
                   using: str) -> np.ndarray:
    config = gt.config
    if using == "latent":
        return latents @ _decision_direction(gt)
    if using == "text":
        if config.regime == "diagnostic":
            pooled = text_tokens.mean(axis=1)
            return pooled @ (gt.label_weights[1] - gt.label_weights[0])
        flat = text_tokens.reshape(text_tokens.shape[0], -1)
        s_hat = _posterior_mean(flat, gt.text_maps, config.text_noise)
        return s_hat @ _decision_direction(gt)
    if using == "image":
        flat = image_tokens.reshape(image_tokens.shape[0], -1)
        s_hat = _posterior_mean(flat, gt.image_maps, config.image_noise)
        return s_hat @ _decision_direction(gt)
    raise ConfigError(f"unknown oracle view {using!r}, "
                      f"expected one of {ORACLE_VIEWS}")


def oracle_auc(ground_truth: SCMGroundTruth, dataset: EmbeddingDataset,
               using: str) -> float:
    """AUC of the true generating functional restricted to one view."""
    config = ground_truth.config
    if config.n_classes != 2:
        raise ConfigError("oracle scoring is defined for binary labels")
    if dataset.provenance.get("scm_fingerprint") != ground_truth.fingerprint:
        raise DataError("dataset provenance does not match this ground truth")
    if len(dataset) != config.n_samples:
        raise DataError("dataset size does not match ground truth")
    image_tokens = np.stack([r.image for r in dataset.records])
    text_tokens = np.stack([r.text for r in dataset.records])
    scores = _oracle_scores(ground_truth, image_tokens, text_tokens,
                            ground_truth.latents, using)
    return auc_binary(scores, dataset.labels == 1)


def monte_carlo_view_aucs(config: SCMConfig, n: int = 100_000,
                          mc_seed: int = 104729) -> dict[str, float]:
    """Reference view AUCs on a fresh n-sample draw of the same mechanism."""
    if config.n_classes != 2:
        raise ConfigError("oracle scoring is defined for binary labels")
    mechanism = _draw_mechanism(config)
    latents, image_tokens, text_tokens, labels = _draw_samples(
        config, mechanism, n, mc_seed)
    image_maps, text_maps, label_weights = mechanism
    gt = SCMGroundTruth(config=config, image_maps=image_maps,
                        text_maps=text_maps, label_weights=label_weights,
                        latents=latents, fingerprint=config.fingerprint())
    return {view: auc_binary(
        _oracle_scores(gt, image_tokens, text_tokens, latents, view),
        labels == 1) for view in ORACLE_VIEWS}


# ---------------------------------------------------------------------------
# oracle file


def save_ground_truth(gt: SCMGroundTruth, path) -> None:
    np.savez_compressed(
        path,
        image_maps=gt.image_maps, text_maps=gt.text_maps,
        label_weights=gt.label_weights, latents=gt.latents,
        config_json=np.array(json.dumps(asdict(gt.config), sort_keys=True)),
        fingerprint=np.array(gt.fingerprint))


def load_ground_truth(path) -> SCMGroundTruth:
    with np.load(path, allow_pickle=False) as archive:
        config = SCMConfig(**json.loads(str(archive["config_json"])))
        return SCMGroundTruth(
            config=config,
            image_maps=archive["image_maps"].copy(),
            text_maps=archive["text_maps"].copy(),
            label_weights=archive["label_weights"].copy(),
            latents=archive["latents"].copy(),
            fingerprint=str(archive["fingerprint"]))
