"""Classifier pretraining, the alternating GAN loop, and batch restoration.

The restoration loop performs `g_steps_per_d_step` generator updates per
discriminator update (default 3:1) and checkpoints both networks with their
optimizer state at every epoch boundary, where the step-count ratio is exact.
All shuffling and initialization derives from (seed, epoch), so a run resumed
from an epoch checkpoint continues bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, params_sha256, save_checkpoint
from .config import RunConfig
from .losses import (
    GeneratorLossParts, LossWeights, PerceptualExtractor, adversarial_losses,
    classifier_pretrain_loss, pixel_loss, total_generator_loss,
)
from .metrics import au_metrics, psnr, ssim
from .models import (
    AuClassifier, BaselineGenerator, Discriminator, Generator, GeneratorConfig,
)
from .optim import Adam
from .synthdata import FaceDataset, load_png, save_png
from .tensor import Tensor, mse


class TrainingAborted(RuntimeError):
    """Raised on a non-finite loss; checkpoints from finished epochs remain."""


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def classifier_hash(classifier: AuClassifier) -> str:
    return params_sha256(classifier.param_arrays())


def _zero_scalar() -> Tensor:
    return Tensor(np.zeros((), dtype=np.float32))


# ---------------------------------------------------------------------------
# classifier pretraining


@dataclass
class PretrainResult:
    checkpoint_path: str
    best_val_f1: float
    best_epoch: int
    history: list


def pretrain_classifier(cfg: RunConfig, dataset: FaceDataset,
                        out_path=None) -> PretrainResult:
    """Train the attribute classifier on ground-truth images; keep the
    checkpoint of the epoch with the best validation macro F1."""
    gt, _, labels = dataset.split_arrays("train")
    if len(gt) < 2:
        raise ValueError("training split is too small to pretrain on")
    out_path = Path(out_path) if out_path else Path(cfg.out_dir) / "classifier.ckpt"
    out_path.parent.mkdir(parents=True, exist_ok=True)

    side = gt.shape[-1]
    clf = AuClassifier(side, cfg.n_au, base_channels=cfg.base_channels,
                       kernel_size=cfg.kernel_size, rng=_rng(cfg.seed, 101),
                       sim_threshold=cfg.sim_threshold,
                       mean_image=dataset.mean_train_image())
    opt = Adam(clf.parameters(), lr=cfg.lr)

    n_val = max(1, len(gt) // 10)
    perm = _rng(cfg.seed, 102).permutation(len(gt))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    history = []
    best = (-1.0, -1, None)  # (val f1, epoch, arrays)
    for epoch in range(cfg.epochs):
        order = _rng(cfg.seed, 103, epoch).permutation(train_idx)
        losses = []
        for s in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            opt.zero_grad()
            loss = classifier_pretrain_loss(clf(Tensor(gt[idx])), Tensor(labels[idx]))
            if not np.isfinite(loss.item()):
                raise TrainingAborted(f"non-finite pretraining loss in epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val = au_metrics(clf, gt[val_idx], labels[val_idx])
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_f1": val["f1"]})
        if val["f1"] > best[0]:
            best = (val["f1"], epoch, {k: v.copy() for k, v in clf.param_arrays().items()})
    if best[2] is not None:
        clf.load_param_arrays(best[2])
    clf.save(out_path, extra_meta={"best_val_f1": best[0], "best_epoch": best[1]})
    return PretrainResult(str(out_path), best[0], best[1], history)


# ---------------------------------------------------------------------------
# GAN training


@dataclass
class TrainResult:
    generator_path: str
    discriminator_path: str
    metrics_path: str
    g_steps: int
    d_steps: int
    epochs_run: int
    step_losses: list
    classifier_hash: str
    classifier_hash_unchanged: bool


def _save_discriminator(path, disc: Discriminator, opt: Adam, meta: dict):
    arrays = disc.param_arrays()
    arrays.update(opt.state_arrays("opt"))
    save_checkpoint(path, arrays, {"kind": "Discriminator", "in_side": disc.in_side,
                                   **meta})


def _load_discriminator(path, base_channels: int, kernel_size: int):
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "Discriminator":
        raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, "
                         f"expected Discriminator")
    disc = Discriminator(meta["in_side"], base_channels=base_channels,
                         kernel_size=kernel_size)
    disc.load_param_arrays(arrays)
    return disc, arrays, meta


def _upsample_stages(in_side: int, out_side: int) -> int:
    stages = int(round(math.log2(out_side / in_side)))
    if in_side * 2 ** stages != out_side:
        raise ValueError(f"output side {out_side} is not a power-of-two multiple "
                         f"of input side {in_side}")
    return stages


def generator_config_for(cfg: RunConfig, in_side: int, out_side: int) -> GeneratorConfig:
    return GeneratorConfig(base_channels=cfg.base_channels, n_rrmb=cfg.n_rrmb,
                           upsample_stages=_upsample_stages(in_side, out_side),
                           kernel_size=cfg.kernel_size,
                           sim_threshold=cfg.sim_threshold)


def train_gan(cfg: RunConfig, dataset: FaceDataset, classifier_path,
              out_dir=None, resume: bool = False, eval_every: int = 200,
              baseline: bool = False) -> TrainResult:
    """Alternating restoration training against a frozen, pretrained classifier.

    With baseline=True the generator stands in its residual-block variant
    (same wiring, no multi-scale graph blocks).
    """
    out_dir = Path(out_dir) if out_dir else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clf, _ = AuClassifier.load(classifier_path)
    clf.freeze()
    extractor = PerceptualExtractor(clf)
    clf_hash_start = classifier_hash(clf)

    gt_train, deg_train, _ = dataset.split_arrays("train")
    gt_test, deg_test, _ = dataset.split_arrays("test")
    in_side, out_side = deg_train.shape[-1], gt_train.shape[-1]
    gen_cls = BaselineGenerator if baseline else Generator
    gen_name = "baseline_generator.ckpt" if baseline else "generator.ckpt"
    gen_path = out_dir / gen_name
    disc_path = out_dir / ("baseline_discriminator.ckpt" if baseline else "discriminator.ckpt")
    metrics_path = out_dir / ("baseline_metrics.jsonl" if baseline else "metrics.jsonl")

    gcfg = generator_config_for(cfg, in_side, out_side)
    gen = gen_cls(gcfg, in_side, rng=_rng(cfg.seed, 201),
                  mean_image=dataset.mean_train_image())
    disc = Discriminator(out_side, base_channels=cfg.base_channels,
                         kernel_size=cfg.kernel_size, rng=_rng(cfg.seed, 202))
    opt_g = Adam(gen.parameters(), lr=cfg.lr)
    opt_d = Adam(disc.parameters(), lr=cfg.lr)
    weights = LossWeights(cfg.lambda1, cfg.lambda2, cfg.lambda3)

    start_epoch = 0
    g_steps = 0
    d_steps = 0
    if resume:
        gen, gmeta = gen_cls.load(gen_path)
        arrays, _ = load_checkpoint(gen_path)
        opt_g = Adam(gen.parameters(), lr=cfg.lr)
        opt_g.load_state_arrays(arrays, "opt")
        disc, darrays, dmeta = _load_discriminator(disc_path, cfg.base_channels,
                                                   cfg.kernel_size)
        opt_d = Adam(disc.parameters(), lr=cfg.lr)
        opt_d.load_state_arrays(darrays, "opt")
        start_epoch = gmeta["epoch"] + 1
        g_steps = gmeta["g_steps"]
        d_steps = gmeta["d_steps"]

    r = cfg.g_steps_per_d_step
    bs = cfg.batch_size
    n_train = len(gt_train)
    if n_train < bs:
        raise ValueError(f"training split ({n_train}) smaller than batch size {bs}")
    eval_n = min(len(gt_test), 16)
    step_losses = []

    def eval_record(epoch: int, losses: dict) -> dict:
        restored = batch_restore(gen, deg_test[:eval_n], batch_size=bs)
        ps = float(np.mean([psnr(restored[i], gt_test[i]) for i in range(eval_n)]))
        ss = float(np.mean([ssim(restored[i], gt_test[i]) for i in range(eval_n)]))
        return {"event": "eval", "epoch": epoch, "g_steps": g_steps,
                "d_steps": d_steps, "psnr": ps, "ssim": ss, "losses": losses}

    mode = "a" if resume else "w"
    with open(metrics_path, mode) as log:
        for epoch in range(start_epoch, cfg.epochs):
            order = _rng(cfg.seed, 203, epoch).permutation(n_train)
            n_batches = n_train // bs
            usable = n_batches - (n_batches % r)
            for bi in range(usable):
                idx = order[bi * bs:(bi + 1) * bs]
                gt_b = Tensor(gt_train[idx])
                deg_b = Tensor(deg_train[idx])
                opt_g.zero_grad()
                i_out = gen(deg_b)
                pix = pixel_loss(i_out, gt_b)
                adv_g, d_loss = adversarial_losses(disc, i_out, gt_b)
                # perceptual and attribute terms share one trunk pass per image
                if weights.lambda2 > 0 or weights.lambda3 > 0:
                    sh_out, dp_out = clf.features(i_out)
                    sh_gt, dp_gt = clf.features(gt_b.detach())
                    cls_l = (mse(clf.head_logits(dp_out), clf.head_logits(dp_gt))
                             if weights.lambda2 > 0 else _zero_scalar())
                    per = (mse(sh_out, sh_gt) + mse(dp_out, dp_gt)
                           if weights.lambda3 > 0 else _zero_scalar())
                else:
                    cls_l = _zero_scalar()
                    per = _zero_scalar()
                total = total_generator_loss(
                    GeneratorLossParts(pix, adv_g, cls_l, per), weights)
                if not np.isfinite(total.item()):
                    raise TrainingAborted(
                        f"non-finite generator loss at step {g_steps + 1}")
                total.backward()
                opt_g.step()
                g_steps += 1
                step_losses.append(total.item())
                if g_steps % r == 0:
                    if not np.isfinite(d_loss.item()):
                        raise TrainingAborted(
                            f"non-finite discriminator loss at step {g_steps}")
                    opt_d.zero_grad()
                    d_loss.backward()
                    opt_d.step()
                    d_steps += 1
                if eval_every and g_steps % eval_every == 0:
                    rec = eval_record(epoch, {
                        "total": total.item(), "pixel": pix.item(),
                        "adversarial": adv_g.item(), "attribute": cls_l.item(),
                        "perceptual": per.item(), "discriminator": d_loss.item()})
                    log.write(json.dumps(rec, sort_keys=True) + "\n")
                    log.flush()
            meta = {"epoch": epoch, "g_steps": g_steps, "d_steps": d_steps}
            gen.save(gen_path, extra_arrays=opt_g.state_arrays("opt"), extra_meta=meta)
            _save_discriminator(disc_path, disc, opt_d, meta)
        clf_hash_end = classifier_hash(clf)
        log.write(json.dumps({"event": "train_end", "g_steps": g_steps,
                              "d_steps": d_steps,
                              "classifier_hash": clf_hash_end,
                              "classifier_hash_unchanged":
                                  clf_hash_end == clf_hash_start},
                             sort_keys=True) + "\n")
    return TrainResult(str(gen_path), str(disc_path), str(metrics_path),
                       g_steps, d_steps, cfg.epochs, step_losses,
                       clf_hash_end, clf_hash_end == clf_hash_start)


# ---------------------------------------------------------------------------
# inference


def batch_restore(generator, degraded: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Run the generator over an array of degraded images without taping."""
    outs = []
    for i in range(0, len(degraded), batch_size):
        batch = Tensor(np.asarray(degraded[i:i + batch_size], dtype=np.float32))
        outs.append(generator(batch).data)
    return np.concatenate(outs, axis=0)


def load_any_generator(path):
    """Load a generator checkpoint of either variant."""
    _, meta = load_checkpoint(path)
    kind = meta.get("kind")
    if kind == "Generator":
        return Generator.load(path)
    if kind == "BaselineGenerator":
        return BaselineGenerator.load(path)
    raise ValueError(f"{path} holds a {kind!r} checkpoint, expected a generator")


def restore_images(generator_path, inputs, out_dir, batch_size: int = 16) -> list[str]:
    """Restore degraded PNGs (or an [N,3,s,s] array) and write PNG outputs."""
    gen, _ = load_any_generator(generator_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(inputs, np.ndarray):
        arr = inputs
        names = [f"restored_{i:05d}.png" for i in range(len(arr))]
    else:
        paths = [Path(p) for p in inputs]
        for p in paths:
            if not p.exists():
                raise FileNotFoundError(f"input image not found: {p}")
        arr = np.stack([load_png(p) for p in paths])
        names = [f"{p.stem}_restored.png" for p in paths]
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ValueError(f"expected N,3,s,s inputs, got {arr.shape}")
    if arr.shape[2] != gen.in_side or arr.shape[3] != gen.in_side:
        raise ValueError(f"generator expects {gen.in_side}x{gen.in_side} inputs, "
                         f"got {arr.shape[2]}x{arr.shape[3]}")
    restored = batch_restore(gen, arr, batch_size=batch_size)
    out_paths = []
    for img, name in zip(restored, names):
        out = out_dir / name
        save_png(out, img)
        out_paths.append(str(out))
    return out_paths
