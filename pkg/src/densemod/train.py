"""Training loop: pair synthesis, loss assembly, Adam steps, checkpoints.

Determinism contract: given one (config, seed) the loop produces
bit-identical weights and loss logs on one platform. Sampling uses a fresh
generator keyed on (seed, iteration, sample index) per sample, so resuming
from a checkpoint replays exactly the same data stream.
"""

from __future__ import annotations

import math
import os
import time

import numpy as np

from . import losses as L
from . import nn
from . import tensor as dt
from .config import config_text
from .degrade import make_pair
from .optim import Adam, lr_at
from .pngio import IMAGE_EXTENSIONS, load_image
from .tensor import Tape, Tensor
from .weights import load_weights, save_weights

META_KEY = "meta.model"
_MODE_CODES = {"super_resolution": 0, "detail_enhance": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; a diagnostic checkpoint was written."""


def encode_model_meta(spec):
    # slope stored at 1e-6 fixed point so the spec round-trips exactly
    vals = [_MODE_CODES[spec.mode], spec.num_blocks, spec.channels, spec.scale,
            round(spec.leaky_slope * 1e6), int(spec.use_spade), spec.seed,
            int(spec.global_skip)]
    return np.asarray(vals, dtype=np.float32).reshape(1, 1, 1, 8)


def decode_model_meta(arr):
    vals = np.asarray(arr, dtype=np.float64).reshape(-1)
    if vals.size != 8:
        raise ValueError(f"model meta entry must hold 8 values, got {vals.size}")
    return nn.ModelSpec(
        mode=_MODE_NAMES[int(vals[0])],
        num_blocks=int(vals[1]),
        channels=int(vals[2]),
        scale=int(vals[3]),
        leaky_slope=round(vals[4]) / 1e6,
        use_spade=bool(vals[5]),
        seed=int(vals[6]),
        global_skip=bool(vals[7]),
    )


def save_model(path, spec, params):
    arrays = {META_KEY: encode_model_meta(spec)}
    arrays.update({name: p.data for name, p in params.items()})
    save_weights(path, arrays)


def load_model(path):
    """(spec, params) from a weight file, validating names and shapes."""
    arrays = load_weights(path)
    if META_KEY not in arrays:
        raise ValueError(f"{path}: missing {META_KEY!r} entry")
    spec = decode_model_meta(arrays.pop(META_KEY))
    expected = [(f"{name}.{kind}",
                 (cout, cin, k, k) if kind == "weight" else (1, cout, 1, 1))
                for name, cin, cout, k, _ in nn._conv_layout(spec)
                for kind in ("weight", "bias")]
    for name, shape in expected:
        if name not in arrays:
            raise ValueError(f"{path}: missing parameter {name!r}")
        if arrays[name].shape != shape:
            raise ValueError(
                f"{path}: parameter {name!r} has shape {arrays[name].shape}, "
                f"expected {shape}")
    extra = [n for n, _ in arrays.items() if n not in dict(expected)]
    if extra:
        raise ValueError(f"{path}: unexpected parameter {extra[0]!r}")
    params = nn.ParamStore()
    for name, _ in expected:
        params.add(name, Tensor(arrays[name], requires_grad=True))
    return spec, params


def list_images(data_dir):
    names = sorted(os.listdir(data_dir))
    return [os.path.join(data_dir, n) for n in names
            if n.lower().endswith(IMAGE_EXTENSIONS)]


def load_dataset(data_dir, patch_size, warn=print):
    """Load every usable image; skip unreadable or undersized files."""
    images = []
    for path in list_images(data_dir):
        try:
            arr = load_image(path)
        except Exception as exc:  # noqa: BLE001 - any decoder failure skips
            warn(f"warning: skipping unreadable image {path}: {exc}")
            continue
        if arr.shape[2] < patch_size or arr.shape[3] < patch_size:
            warn(f"warning: skipping {path}: smaller than patch size {patch_size}")
            continue
        images.append(arr)
    if not images:
        raise ValueError(
            f"no usable images of size >= {patch_size} in {data_dir!r}")
    return images


def sample_batch(images, cfg, iteration):
    """Degraded/clean pair batch; pure function of (config, iteration)."""
    inputs, targets = [], []
    for k in range(cfg.batch_size):
        rng = np.random.default_rng((cfg.seed, iteration, k))
        img = images[int(rng.integers(len(images)))]
        _, _, h, w = img.shape
        y0 = int(rng.integers(h - cfg.patch_size + 1))
        x0 = int(rng.integers(w - cfg.patch_size + 1))
        patch = Tensor(img[:, :, y0:y0 + cfg.patch_size, x0:x0 + cfg.patch_size])
        inp, tgt = make_pair(patch, cfg.degradation, rng)
        inputs.append(inp.data)
        targets.append(tgt.data)
    return (Tensor(np.concatenate(inputs, axis=0)),
            Tensor(np.concatenate(targets, axis=0)))


def _weighted_terms(pred, target, cfg, extractor):
    """Active (name, weight, loss tensor) triples for the generator."""
    w = cfg.losses
    terms = []
    if w.fidelity > 0:
        terms.append(("fidelity", w.fidelity,
                      L.fidelity_loss(pred, target, squared=cfg.fidelity_squared)))
    if w.ssim > 0:
        terms.append(("ssim", w.ssim, L.ssim_loss(pred, target)))
    if w.perceptual > 0:
        terms.append(("perceptual", w.perceptual,
                      L.perceptual_loss(pred, target, extractor,
                                        cfg.perceptual_layers)))
    return terms


class Trainer:
    """Owns the parameter stores, optimizer state, and the output files."""

    def __init__(self, cfg, warn=print):
        self.cfg = cfg
        dt.set_conv_backend(cfg.conv_backend)
        self.images = load_dataset(cfg.data_dir, cfg.patch_size, warn=warn)
        self.params = nn.build_generator_params(cfg.model)
        self.opt_g = Adam(self.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.adversarial = (cfg.model.mode == "detail_enhance"
                            and cfg.losses.adversarial > 0)
        self.critic = nn.build_critic_params(seed=cfg.model.seed + 1)
        self.opt_d = Adam(self.critic, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.extractor = (L.FeatureExtractor(seed=cfg.perceptual_seed)
                          if cfg.losses.perceptual > 0 else None)
        self.start_iteration = 1
        os.makedirs(cfg.out_dir, exist_ok=True)
        self.log_path = os.path.join(cfg.out_dir, "metrics.log")
        # the run's full configuration, so any checkpoint reproduces it
        with open(os.path.join(cfg.out_dir, "config.cfg"), "w",
                  encoding="utf-8") as fh:
            fh.write(config_text(cfg))

    # -- checkpointing ------------------------------------------------------

    def checkpoint_path(self, iteration):
        return os.path.join(self.cfg.out_dir, f"ckpt_{iteration:06d}.dmw")

    def save_checkpoint(self, path, iteration):
        save_model(path, self.cfg.model, self.params)
        state = {"iter": np.asarray(float(iteration), np.float32).reshape(1, 1, 1, 1)}
        for key, arr in self.opt_g.state_arrays().items():
            state[f"g.{key}"] = arr
        if self.adversarial:
            for name, p in self.critic.items():
                state[f"d.param.{name}"] = p.data
            for key, arr in self.opt_d.state_arrays().items():
                state[f"d.{key}"] = arr
        save_weights(path + ".state", state)

    def resume(self, path):
        spec, params = load_model(path)
        if spec != self.cfg.model:
            raise ValueError(
                f"checkpoint model spec {spec} does not match config "
                f"{self.cfg.model}")
        self.params = params
        self.opt_g = Adam(self.params, self.cfg.adam_beta1, self.cfg.adam_beta2,
                          self.cfg.adam_eps)
        state = load_weights(path + ".state")
        self.opt_g.load_state_arrays(
            {k[2:]: v for k, v in state.items() if k.startswith("g.")})
        if self.adversarial:
            for name in self.critic.names():
                self.critic[name].data[...] = state[f"d.param.{name}"]
            self.opt_d.load_state_arrays(
                {k[2:]: v for k, v in state.items() if k.startswith("d.")})
        self.start_iteration = int(round(float(state["iter"][0, 0, 0, 0]))) + 1

    # -- steps --------------------------------------------------------------

    def _check_finite(self, values, iteration):
        if all(math.isfinite(v) for v in values.values()):
            return
        path = os.path.join(self.cfg.out_dir, "diagnostic.dmw")
        self.save_checkpoint(path, iteration)
        raise TrainingDiverged(
            f"non-finite loss at iteration {iteration}: {values}; "
            f"diagnostic checkpoint written to {path}")

    def _critic_step(self, inputs, targets, lr):
        fake = nn.generator_forward(inputs, self.params, self.cfg.model,
                                    train=True)
        self.params.zero_grad()
        with Tape() as tape:
            c_real = nn.critic_forward(targets, self.critic)
            c_fake = nn.critic_forward(fake, self.critic)
            _, d_loss = L.rgan_losses(c_real, c_fake)
        tape.backward(d_loss)
        self.opt_d.step(self.critic, lr)
        self.critic.zero_grad()
        return d_loss.item()

    def _generator_step(self, inputs, targets, lr):
        values = {}
        with Tape() as tape:
            pred = nn.generator_forward(inputs, self.params, self.cfg.model,
                                        train=True)
            terms = _weighted_terms(pred, targets, self.cfg, self.extractor)
            total = None
            for name, weight, term in terms:
                values[name] = term.item()
                weighted = dt.scalar_affine(term, weight, 0.0)
                total = weighted if total is None else dt.add(total, weighted)
            if self.adversarial:
                self.critic.set_requires_grad(False)
                c_real = nn.critic_forward(targets, self.critic)
                c_fake = nn.critic_forward(pred, self.critic)
                g_adv, _ = L.rgan_losses(c_real, c_fake)
                values["adversarial"] = g_adv.item()
                total = dt.add(total, dt.scalar_affine(
                    g_adv, self.cfg.losses.adversarial, 0.0))
            values["total"] = total.item()
        tape.backward(total)
        self.opt_g.step(self.params, lr)
        self.params.zero_grad()
        if self.adversarial:
            self.critic.set_requires_grad(True)
        return values

    def run(self, log=None):
        cfg = self.cfg
        start_wall = time.monotonic()
        history = []
        with open(self.log_path, "a", encoding="utf-8") as log_fh:
            for iteration in range(self.start_iteration, cfg.iterations + 1):
                lr = lr_at(cfg.schedule, iteration - 1)
                inputs, targets = sample_batch(self.images, cfg, iteration)
                values = {}
                if self.adversarial:
                    values["d_loss"] = self._critic_step(inputs, targets, lr)
                values.update(self._generator_step(inputs, targets, lr))
                self._check_finite(values, iteration)
                history.append(values["total"])
                if iteration % cfg.checkpoint_every == 0 or iteration == cfg.iterations:
                    loss_txt = " ".join(
                        f"{k}={values[k]:.6f}" for k in sorted(values))
                    wall = time.monotonic() - start_wall
                    line = f"iter={iteration} lr={lr:.8g} {loss_txt}"
                    log_fh.write(f"{line} wall={wall:.3f}\n")
                    log_fh.flush()
                    if log:
                        log(f"{line} wall={wall:.3f}")
                    self.save_checkpoint(self.checkpoint_path(iteration), iteration)
        final_path = os.path.join(cfg.out_dir, "weights.dmw")
        save_model(final_path, cfg.model, self.params)
        return {"history": history, "weights": final_path}


def run_training(cfg, resume_from=None, log=None, warn=print):
    trainer = Trainer(cfg, warn=warn)
    if resume_from:
        trainer.resume(resume_from)
    result = trainer.run(log=log)
    return result
