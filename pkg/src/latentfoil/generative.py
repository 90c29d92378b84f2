"""Variational autoencoder over Cp distributions.

The encoder maps a normalized Cp row to the mean and log-variance of a
diagonal Gaussian in a small latent space; the decoder maps latent points
back to normalized Cp. Training minimizes, per sample, the reconstruction
error summed over stations plus ``beta`` times the KL divergence from the
standard-normal prior.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .neural import (MODEL_FORMAT, AdamState, Network, Normalizer, TrainConfig, TrainingError,
                     adam_step, minibatches)

LATENT_DIM = 2
ENCODER_HIDDEN = (120, 60, 30)
DECODER_HIDDEN = (30, 60, 120)
# log-variance is clipped to this range before exponentiation
LOGVAR_MIN, LOGVAR_MAX = -30.0, 20.0
BOUNDS_MARGIN = 0.10


@dataclass
class VaeTrainConfig(TrainConfig):
    gamma: float = 0.5
    step_epochs: int = 5000
    beta: float = 1.0
    recon: str = "mse"  # or "bce"

    def __post_init__(self):
        super().__post_init__()
        if self.recon not in ("mse", "bce"):
            raise ValueError(f"unknown reconstruction loss {self.recon!r}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


VAE_FIRST = VaeTrainConfig(epochs=30000)
VAE_TRANSFER = VaeTrainConfig(epochs=10000, init_mode="transfer")


@dataclass(frozen=True)
class LatentDistParams:
    """Diagonal Gaussian; arrays may carry a leading batch axis."""

    mu: np.ndarray
    logvar: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * np.clip(self.logvar, LOGVAR_MIN, LOGVAR_MAX))

    @classmethod
    def from_sigma(cls, mu, sigma) -> "LatentDistParams":
        return cls(np.asarray(mu, dtype=float), 2.0 * np.log(np.asarray(sigma, dtype=float)))


def reparameterize(params: LatentDistParams, eps) -> np.ndarray:
    """z = mu + sigma * eps, elementwise."""
    return params.mu + params.sigma * np.asarray(eps, dtype=float)


def kl_term(params: LatentDistParams):
    """KL(q || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1) over the last axis."""
    lv = np.clip(params.logvar, LOGVAR_MIN, LOGVAR_MAX)
    kl = 0.5 * np.sum(params.mu ** 2 + np.expm1(lv) - lv, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


@dataclass
class VaeModel:
    encoder: Network
    decoder: Network
    normalizer: Normalizer
    recon: str = "mse"
    beta: float = 1.0
    meta: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        j = self.decoder.dims[0]
        if self.encoder.dims[-1] != 2 * j:
            raise ValueError(f"encoder output {self.encoder.dims[-1]} != 2 x latent dim {j}")
        if self.encoder.dims[0] != self.decoder.dims[-1]:
            raise ValueError("encoder input and decoder output dims differ")

    @property
    def latent_dim(self) -> int:
        return self.decoder.dims[0]

    @property
    def n_features(self) -> int:
        return self.encoder.dims[0]

    @classmethod
    def he(cls, n_features: int, rng: np.random.Generator, latent_dim: int = LATENT_DIM,
           normalizer: Normalizer | None = None, recon: str = "mse", beta: float = 1.0):
        enc = Network.he([n_features, *ENCODER_HIDDEN, 2 * latent_dim], rng, output="linear")
        out_act = "sigmoid" if recon == "bce" else "leaky_relu"
        dec = Network.he([latent_dim, *DECODER_HIDDEN, n_features], rng, output=out_act)
        if normalizer is None:
            normalizer = Normalizer(np.zeros(n_features), np.ones(n_features))
        return cls(enc, dec, normalizer, recon, beta)

    def copy(self) -> "VaeModel":
        return VaeModel(self.encoder.copy(), self.decoder.copy(),
                        Normalizer(self.normalizer.lo.copy(), self.normalizer.hi.copy()),
                        self.recon, self.beta, dict(self.meta))

    # raw-Cp conveniences
    def encode_cp(self, cp) -> LatentDistParams:
        return encode(self, self.normalizer.normalize(cp))

    def decode_cp(self, z) -> np.ndarray:
        return self.normalizer.denormalize(decode(self, z))

    def latent_bounds(self, cp, margin: float = BOUNDS_MARGIN) -> np.ndarray:
        """(J, 2) box: min/max of encoded means of ``cp`` rows, widened by ``margin`` of the range."""
        mu = np.atleast_2d(self.encode_cp(cp).mu)
        lo, hi = mu.min(axis=0), mu.max(axis=0)
        pad = margin * np.maximum(hi - lo, 1e-9)
        return np.column_stack([lo - pad, hi + pad])

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "kind": "vae", "latent_dim": self.latent_dim,
                "recon": self.recon, "beta": self.beta,
                "encoder": self.encoder.to_dict(), "decoder": self.decoder.to_dict(),
                "normalizer": self.normalizer.to_dict(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d) -> "VaeModel":
        if d.get("format") != MODEL_FORMAT or d.get("kind") != "vae":
            raise ValueError("not a latentfoil VAE model document")
        model = cls(Network.from_dict(d["encoder"]), Network.from_dict(d["decoder"]),
                    Normalizer.from_dict(d["normalizer"]), d.get("recon", "mse"),
                    d.get("beta", 1.0), d.get("meta", {}))
        if model.latent_dim != d["latent_dim"]:
            raise ValueError("latent_dim does not match the decoder input")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "VaeModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def encode(vae: VaeModel, cp_normalized) -> LatentDistParams:
    x = np.asarray(cp_normalized, dtype=float)
    if x.shape[-1] != vae.n_features:
        raise ValueError(f"input dim {x.shape[-1]} != {vae.n_features}")
    out = vae.encoder.forward(x)
    j = vae.latent_dim
    return LatentDistParams(out[..., :j], out[..., j:])


def decode(vae: VaeModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != vae.latent_dim:
        raise ValueError(f"latent dim {z.shape[-1]} != {vae.latent_dim}")
    return vae.decoder.forward(z)


def vae_loss(vae: VaeModel, x, eps, beta: float | None = None, grads: bool = True):
    """Batch-mean loss (recon + beta * KL) with eps held fixed.

    Returns (total, recon, kl); with ``grads`` the parameter gradients are
    left in ``vae.encoder.grad_flat`` and ``vae.decoder.grad_flat``.
    """
    beta = vae.beta if beta is None else beta
    x = np.asarray(x, dtype=float)
    n = len(x)
    j = vae.latent_dim
    enc_out, enc_cache = vae.encoder.forward(x, keep=True)
    mu, lv_raw = enc_out[:, :j], enc_out[:, j:]
    lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
    sigma = np.exp(0.5 * lv)
    z = mu + sigma * eps
    xhat, dec_cache = vae.decoder.forward(z, keep=True)

    if vae.recon == "bce":
        # fused with the sigmoid output: -[x log p + (1-x) log(1-p)] = softplus(a) - x a
        logits = dec_cache[-1][1]
        recon_rows = np.sum(np.logaddexp(0.0, logits) - x * logits, axis=1)
    else:
        diff = xhat - x
        recon_rows = np.sum(diff * diff, axis=1)
    kl_rows = 0.5 * np.sum(mu ** 2 + np.expm1(lv) - lv, axis=1)
    recon = float(np.mean(recon_rows))
    kl = float(np.mean(kl_rows))
    total = recon + beta * kl
    if not math.isfinite(total):
        raise TrainingError("non-finite VAE loss")
    if not grads:
        return total, recon, kl

    if vae.recon == "bce":
        _, g_z = vae.decoder.backward((xhat - x) / n, dec_cache, preactivation=True)
    else:
        _, g_z = vae.decoder.backward(2.0 * diff / n, dec_cache)
    g_mu = g_z + beta * mu / n
    g_lv = g_z * eps * 0.5 * sigma + beta * 0.5 * np.expm1(lv) / n
    g_lv *= (lv_raw > LOGVAR_MIN) & (lv_raw < LOGVAR_MAX)
    vae.encoder.backward(np.hstack([g_mu, g_lv]), enc_cache, input_grad=False)
    return total, recon, kl


def train_vae(train_x, config: VaeTrainConfig = VAE_FIRST, prior: VaeModel | None = None,
              test_x=None, logger=None, latent_dim: int = LATENT_DIM) -> VaeModel:
    """Fit the VAE on raw Cp rows; transfer mode starts from all of ``prior``'s weights."""
    train_x = np.asarray(train_x, dtype=float)
    if train_x.ndim != 2 or len(train_x) == 0:
        raise TrainingError("empty training split")
    rng = np.random.default_rng(config.seed)
    norm = Normalizer.fit(train_x)
    if config.init_mode == "transfer":
        if prior is None:
            raise TrainingError("transfer mode needs a prior model")
        if prior.n_features != train_x.shape[1] or prior.recon != config.recon:
            raise TrainingError("prior VAE does not match the data or loss")
        vae = prior.copy()
        vae.normalizer = norm
        vae.beta = config.beta
    else:
        vae = VaeModel.he(train_x.shape[1], rng, latent_dim, norm, config.recon, config.beta)

    xn = norm.normalize(train_x)
    params = [vae.encoder.flat, vae.decoder.flat]
    grads = [vae.encoder.grad_flat, vae.decoder.grad_flat]
    state = AdamState.zeros_like(params)
    n = len(xn)
    hist_total = np.empty(config.epochs)
    hist_recon = np.empty(config.epochs)
    hist_kl = np.empty(config.epochs)
    log_every = max(config.epochs // 10, 1)
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        sums = np.zeros(3)
        for idx in minibatches(n, config.batch_size, rng):
            eps = rng.standard_normal((len(idx), vae.latent_dim))
            try:
                parts = vae_loss(vae, xn[idx], eps, config.beta)
            except TrainingError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}") from None
            adam_step(state, params, grads, lr)
            sums += np.array(parts) * len(idx)
        hist_total[epoch], hist_recon[epoch], hist_kl[epoch] = sums / n
        if logger is not None and (epoch + 1) % log_every == 0:
            logger.info("vae epoch %d loss %.4e (recon %.4e, kl %.4e) lr %.2e", epoch + 1,
                        *(sums / n), lr)

    vae.history = {"loss": hist_total, "recon": hist_recon, "kl": hist_kl}
    zero = np.zeros((n, vae.latent_dim))
    _, recon_mean, kl_mean = vae_loss(vae, xn, zero, grads=False)
    vae.meta = {"seed": config.seed, "epochs": config.epochs, "init_mode": config.init_mode,
                "beta": config.beta, "recon": config.recon,
                "train_recon": recon_mean, "train_kl": kl_mean,
                "train_recon_mse": reconstruction_mse(vae, xn),
                "final_epoch_loss": float(hist_total[-1]) if config.epochs else None}
    if test_x is not None and len(test_x):
        vae.meta["test_recon_mse"] = reconstruction_mse(vae, norm.normalize(test_x))
    return vae


def reconstruction_mse(vae: VaeModel, x_normalized) -> float:
    """Per-element MSE of decode(mu(x)) against x, in normalized units."""
    x = np.asarray(x_normalized, dtype=float)
    return float(np.mean((decode(vae, encode(vae, x).mu) - x) ** 2))
