import hashlib
import json

import numpy as np
import pytest

from remix import trainer
from remix.config import RunConfig
from remix.datamodel import GeneratorConfig, synth_generate
from remix.errors import BudgetUnreachableError


def tiny_cfg(**train_kw):
    cfg = RunConfig()
    cfg.generator = GeneratorConfig(
        dim=8, n_identities=10, n_cameras=3, samples_per_id_per_cam=2,
        n_single_identities=12, n_videos=4, frames_per_identity=4,
        n_target_identities=6, n_target_cameras=3,
        target_samples_per_id_per_cam=2, multi_subspace_dim=4)
    cfg.model.embed_dim = 8
    cfg.model.hidden = [16]
    cfg.train.n_p_multi = 4
    cfg.train.n_k_multi = 2
    cfg.train.n_p_single = 4
    cfg.train.n_k_single = 2
    cfg.train.iters_per_epoch = 10
    cfg.train.epochs = 3
    for k, v in train_kw.items():
        setattr(cfg.train, k, v)
    return cfg.validate()


def data_for(cfg, seed=0):
    return synth_generate(cfg.generator, seed)


def params_digest(params):
    h = hashlib.sha256()
    for a in params.arrays():
        h.update(a.tobytes())
    return h.hexdigest()


def test_metrics_one_record_per_epoch():
    cfg = tiny_cfg()
    multi, corpus, _ = data_for(cfg)
    state = trainer.train(multi, corpus, cfg)
    assert state.epoch == 3 and len(state.metrics) == 3
    rec = state.metrics[0]
    assert set(rec) == {"epoch", "loss_total", "loss_ins", "loss_aug",
                        "loss_cen", "loss_cc", "pseudo_clusters",
                        "pseudo_noise", "purity", "lr"}
    assert rec["pseudo_clusters"] > 0
    assert 0.0 <= rec["purity"] <= 1.0


def test_no_corpus_disables_pseudo_labels():
    cfg = tiny_cfg(use_single_cam=False)
    multi, _, _ = data_for(cfg)
    state = trainer.train(multi, None, cfg)
    assert all(m["purity"] is None for m in state.metrics)
    assert all(m["pseudo_clusters"] == 0 for m in state.metrics)


def test_momentum_not_touched_by_backprop():
    # with lambda = 1 the momentum encoder must stay frozen at init even
    # though the gradient encoder moves
    cfg = tiny_cfg(ema_momentum=1.0, epochs=2)
    multi, corpus, _ = data_for(cfg)
    init = trainer.init_state(cfg, 8)
    before = params_digest(init.momentum)
    state = trainer.train(multi, corpus, cfg)
    assert params_digest(state.momentum) == before
    assert params_digest(state.params) != before


def test_lambda_zero_tracks_encoder_exactly():
    cfg = tiny_cfg(ema_momentum=0.0, epochs=2)
    multi, corpus, _ = data_for(cfg)
    state = trainer.train(multi, corpus, cfg)
    assert params_digest(state.momentum) == params_digest(state.params)


def test_training_is_deterministic():
    cfg = tiny_cfg()
    multi, corpus, _ = data_for(cfg)
    a = trainer.train(multi, corpus, cfg)
    b = trainer.train(multi, corpus, cfg)
    assert params_digest(a.params) == params_digest(b.params)
    assert params_digest(a.momentum) == params_digest(b.momentum)
    assert a.metrics == b.metrics


def test_metrics_file_and_checkpoints(tmp_path):
    cfg = tiny_cfg(epochs=4, checkpoint_every=2)
    multi, corpus, _ = data_for(cfg)
    ckpt = tmp_path / "ckpt.json"
    metrics = tmp_path / "metrics.jsonl"
    trainer.train(multi, corpus, cfg, checkpoint_path=ckpt,
                  metrics_path=metrics)
    lines = metrics.read_text().splitlines()
    assert len(lines) == 4
    assert json.loads(lines[2])["epoch"] == 2
    assert ckpt.exists()
    assert (tmp_path / "ckpt.epoch2.json").exists()
    assert not (tmp_path / "ckpt.epoch4.json").exists()  # final covers it


def test_partial_checkpoint_on_failure(tmp_path):
    # an unreachable pseudo-label budget aborts the epoch; the partial
    # checkpoint must still land on disk
    cfg = tiny_cfg(dbscan_min_pts=50)
    multi, corpus, _ = data_for(cfg)
    ckpt = tmp_path / "ckpt.json"
    with pytest.raises(BudgetUnreachableError):
        trainer.train(multi, corpus, cfg, checkpoint_path=ckpt)
    assert (tmp_path / "ckpt.json.partial").exists()
    assert not ckpt.exists()


def test_single_camera_centroids_enter_bank():
    cfg = tiny_cfg(epochs=1)
    multi, corpus, _ = data_for(cfg)
    state = trainer.train(multi, corpus, cfg)
    singles = [k for k in state.bank.label_centroids if k[0] == "single"]
    multis = [k for k in state.bank.label_centroids if k[0] == "multi"]
    assert len(singles) == len(state.pool.entries)
    assert len(multis) == 10


def test_warns_when_camera_loss_is_inert(caplog):
    # one camera only: no identity can span two cameras
    cfg = tiny_cfg(epochs=1, use_single_cam=False)
    cfg.generator.n_cameras = 1
    cfg.generator.samples_per_id_per_cam = 4
    multi, _, _ = data_for(cfg)
    with caplog.at_level("WARNING", logger="remix.trainer"):
        state = trainer.train(multi, None, cfg)
    assert any("camera" in r.message for r in caplog.records)
    assert state.metrics[0]["loss_cc"] == 0.0


def test_loss_decreases_by_epoch_five():
    cfg = RunConfig()
    cfg.train.epochs = 5
    cfg.validate()
    multi, corpus, _ = synth_generate(cfg.generator, cfg.seed)
    state = trainer.train(multi, corpus, cfg)
    assert state.metrics[4]["loss_total"] < state.metrics[0]["loss_total"]
