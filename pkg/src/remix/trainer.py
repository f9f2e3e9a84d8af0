"""Training orchestration: epoch-start centroid and pseudo-label refresh,
the iteration loop (augment, forward, loss, backprop, optimizer step, EMA
update), metrics logging, and checkpointing.

The momentum encoder is the inference-facing artifact; the gradient path
never touches it.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoder as enc
from . import evalkit
from .config import RunConfig
from .datamodel import (
    MULTI,
    SINGLE,
    MiniBatch,
    MultiCamDataset,
    SingleCamCorpus,
    augment,
    compose_batch,
)
from .losses import BatchView, CentroidBank, build_centroids, total_loss
from .numcore import substream
from .pseudolabel import PseudoLabeledPool, default_budget, pseudo_label_epoch

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    params: enc.EncoderParams
    momentum: enc.EncoderParams
    opt: enc.OptimizerState
    epoch: int = 0
    bank: CentroidBank | None = None
    pool: PseudoLabeledPool | None = None
    metrics: list[dict] = field(default_factory=list)


def init_state(cfg: RunConfig, feature_dim: int) -> TrainState:
    t = cfg.train
    params = enc.init_params(feature_dim, list(cfg.model.hidden),
                             cfg.model.embed_dim, substream(cfg.seed, "init"))
    momentum = params.copy()
    opt = enc.OptimizerState.for_params(
        params, lr=t.lr, weight_decay=t.weight_decay, beta1=t.adam_beta1,
        beta2=t.adam_beta2, eps=t.adam_eps, warmup_epochs=t.warmup_epochs)
    return TrainState(params, momentum, opt)


def _batch_view(state: TrainState, batch: MiniBatch, t, aug_rng) -> BatchView:
    samples = [s for s, _, _ in batch.multi] + [s for s, _ in batch.single]
    keys = [(MULTI, y) for _, y, _ in batch.multi] + \
           [(SINGLE, pl) for _, pl in batch.single]
    cameras = np.array([c for _, _, c in batch.multi] +
                       [-1] * len(batch.single), dtype=np.int64)
    raw = np.stack([s.features for s in samples])
    augmented = np.stack([augment(x, aug_rng, t.sigma_aug, t.p_drop) for x in raw])
    f, cache = enc.forward_batch(state.params, augmented)
    m, _ = enc.forward_batch(state.momentum, raw)
    return BatchView(f, m, keys, cameras), cache


def run_epoch(
    state: TrainState,
    multi: MultiCamDataset,
    corpus: SingleCamCorpus | None,
    cfg: RunConfig,
    sampler_rng: np.random.Generator,
    aug_rng: np.random.Generator,
    video_rng: np.random.Generator,
) -> TrainState:
    """One epoch of the joint-training loop; mutates and returns state."""
    t = cfg.train
    use_single = t.use_single_cam and t.n_p_single > 0 and corpus is not None

    # epoch-start: momentum-embed all multi data, rebuild centroid bank
    m_embs, _ = enc.forward_batch(
        state.momentum, np.stack([s.features for s in multi.samples]))
    keys = [(MULTI, s.identity) for s in multi.samples]
    cams = np.array([s.camera for s in multi.samples])
    bank = build_centroids(m_embs, keys, cams, epoch=state.epoch)
    labels_with_two_cams = {y for (y, _) in bank.camera_centroids
                            if sum(1 for (yy, _) in bank.camera_centroids
                                   if yy == y) >= 2}
    if not labels_with_two_cams:
        log.warning("epoch %d: no identity spans two cameras, camera "
                    "centroid loss is inert", state.epoch)

    pool = None
    if use_single:
        budget = t.pseudo_label_budget or default_budget(
            t.n_p_single * t.n_k_single, t.iters_per_epoch)
        pool = pseudo_label_epoch(corpus, state.momentum, t.dbscan_eps,
                                  t.dbscan_min_pts, budget, video_rng)
        for pl, c in pool.centroids.items():
            bank.label_centroids[(SINGLE, pl)] = c
    state.bank = bank
    state.pool = pool

    sizes = (t.n_p_multi, t.n_k_multi,
             t.n_p_single if use_single else 0, t.n_k_single)
    pool_samples = pool.samples_by_label() if pool is not None else {}
    sums = {"total": 0.0, "ins": 0.0, "aug": 0.0, "cen": 0.0, "cc": 0.0}
    for _ in range(t.iters_per_epoch):
        batch = compose_batch(multi, pool_samples, sizes, sampler_rng)
        view, cache = _batch_view(state, batch, t, aug_rng)
        loss, d_f, parts = total_loss(
            view, bank, t.tau_ins_multi, t.tau_ins_single, t.tau_aug,
            t.tau_cen_multi, t.tau_cen_single, t.tau_camera, t.gamma,
            t.cross_source_negatives)
        grads = enc.backward_batch(state.params, cache, d_f)
        state.params, state.opt = enc.adam_step(state.opt, state.params,
                                                grads, state.epoch)
        state.momentum = enc.ema_update(state.momentum, state.params,
                                        t.ema_momentum)
        sums["total"] += loss
        for k in parts:
            sums[k] += parts[k]

    n = t.iters_per_epoch
    purity = evalkit.cluster_purity(pool) if pool is not None else None
    state.metrics.append({
        "epoch": state.epoch,
        "loss_total": sums["total"] / n,
        "loss_ins": sums["ins"] / n,
        "loss_aug": sums["aug"] / n,
        "loss_cen": sums["cen"] / n,
        "loss_cc": sums["cc"] / n,
        "pseudo_clusters": len(pool.entries) if pool is not None else 0,
        "pseudo_noise": pool.noise_count if pool is not None else 0,
        "purity": purity,
        "lr": enc.effective_lr(state.opt, state.epoch),
    })
    state.epoch += 1
    return state


def _checkpoint_path(base: Path, epoch: int) -> Path:
    return base.with_name(f"{base.stem}.epoch{epoch}{base.suffix}")


def train(
    multi: MultiCamDataset,
    corpus: SingleCamCorpus | None,
    cfg: RunConfig,
    checkpoint_path: str | Path | None = None,
    metrics_path: str | Path | None = None,
) -> TrainState:
    """Run cfg.train.epochs epochs; write metrics lines and checkpoints."""
    t = cfg.train
    state = init_state(cfg, multi.samples[0].features.shape[0])
    sampler_rng = substream(cfg.seed, "sampler")
    aug_rng = substream(cfg.seed, "augment")
    video_rng = substream(cfg.seed, "videos")
    cfg_echo = cfg.to_dict()
    ckpt = Path(checkpoint_path) if checkpoint_path is not None else None

    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for _ in range(t.epochs):
            run_epoch(state, multi, corpus, cfg, sampler_rng, aug_rng, video_rng)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(state.metrics[-1]) + "\n")
                metrics_fh.flush()
            if ckpt is not None and t.checkpoint_every > 0 \
                    and state.epoch % t.checkpoint_every == 0 \
                    and state.epoch < t.epochs:
                enc.save_checkpoint(_checkpoint_path(ckpt, state.epoch),
                                    cfg_echo, state.epoch, state.params,
                                    state.momentum, state.opt)
    except Exception:
        if ckpt is not None:
            enc.save_checkpoint(ckpt.with_suffix(ckpt.suffix + ".partial"),
                                cfg_echo, state.epoch, state.params,
                                state.momentum, state.opt)
        raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    if ckpt is not None:
        enc.save_checkpoint(ckpt, cfg_echo, state.epoch, state.params,
                            state.momentum, state.opt)
    return state
