"""The four loss terms and the combined objective.

Each loss returns (scalar, dL/df) where f holds the encoder embeddings of
the augmented batch inputs. Momentum embeddings and centroids are treated
as gradient constants; no gradient ever flows through them.

Labels are keyed (source, label) so multi-camera identities and
single-camera pseudo labels live in disjoint namespaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import MULTI, SINGLE
from .errors import (
    DimensionMismatchError,
    EmptyLabelError,
    UnresolvedLabelError,
)
from .numcore import normalize

LabelKey = tuple[str, int]


@dataclass
class BatchView:
    f: np.ndarray  # (B, E) encoder embeddings of augmented inputs
    m: np.ndarray  # (B, E) momentum embeddings of the originals
    keys: list[LabelKey]  # (source, label) per sample; multi first
    cameras: np.ndarray  # (B,) camera id, -1 for single-camera samples

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        self.cameras = np.asarray(self.cameras, dtype=np.int64)
        if self.f.shape != self.m.shape or len(self.keys) != self.f.shape[0]:
            raise DimensionMismatchError("f, m, and keys must agree in batch size")
        sources = [src for src, _ in self.keys]
        if sources != sorted(sources, key=lambda s: s != MULTI):
            raise DimensionMismatchError("multi samples must precede single samples")

    @property
    def size(self) -> int:
        return self.f.shape[0]

    @property
    def n_multi(self) -> int:
        return sum(1 for src, _ in self.keys if src == MULTI)


@dataclass
class CentroidBank:
    label_centroids: dict[LabelKey, np.ndarray]
    camera_centroids: dict[tuple[int, int], np.ndarray]  # (multi label, camera)
    epoch: int = 0


def build_centroids(
    embeddings: np.ndarray,
    keys: list[LabelKey],
    cameras: np.ndarray | None = None,
    epoch: int = 0,
) -> CentroidBank:
    """Normalized per-label means; per-(label, camera) means for multi data."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if len(keys) == 0:
        raise EmptyLabelError("cannot build centroids from an empty batch")
    by_label: dict[LabelKey, list[int]] = {}
    for i, key in enumerate(keys):
        by_label.setdefault(key, []).append(i)
    label_centroids = {
        key: normalize(embeddings[idx].mean(axis=0)) for key, idx in by_label.items()
    }
    camera_centroids: dict[tuple[int, int], np.ndarray] = {}
    if cameras is not None:
        cameras = np.asarray(cameras)
        by_cam: dict[tuple[int, int], list[int]] = {}
        for i, (src, y) in enumerate(keys):
            if src == MULTI:
                by_cam.setdefault((y, int(cameras[i])), []).append(i)
        camera_centroids = {
            k: normalize(embeddings[idx].mean(axis=0)) for k, idx in by_cam.items()
        }
    return CentroidBank(label_centroids, camera_centroids, epoch)


def _term_and_coeffs(z_target: float, z_rest: np.ndarray):
    """log-softmax term plus d(term)/dz for target and rest entries."""
    pool = np.concatenate(([z_target], z_rest))
    mx = pool.max()
    e = np.exp(pool - mx)
    s = e.sum()
    term = float(z_target - (mx + np.log(s)))
    p = e / s
    return term, 1.0 - p[0], -p[1:]


def instance_loss(
    view: BatchView,
    tau_m: float,
    tau_s: float,
    cross_source_negatives: bool = False,
) -> tuple[float, np.ndarray]:
    """Anchor-to-positive-instances loss, averaged over positives and anchors.

    Positives of anchor i are all j with the same (source, label), the
    self-pair included. Negatives default to same-source batch members
    with a different label.
    """
    b = view.size
    sims = view.f @ view.m.T
    grads = np.zeros_like(view.f)
    total = 0.0
    for i in range(b):
        src, _ = view.keys[i]
        tau = tau_m if src == MULTI else tau_s
        pos = [j for j in range(b) if view.keys[j] == view.keys[i]]
        neg = [
            j for j in range(b)
            if view.keys[j] != view.keys[i]
            and (cross_source_negatives or view.keys[j][0] == src)
        ]
        z_neg = sims[i, neg] / tau
        anchor_loss = 0.0
        inv = 1.0 / len(pos)
        for j in pos:
            term, c_t, c_n = _term_and_coeffs(sims[i, j] / tau, z_neg)
            anchor_loss -= term * inv
            scale = -inv / tau
            grads[i] += scale * c_t * view.m[j]
            if neg:
                grads[i] += scale * (c_n @ view.m[neg])
        total += anchor_loss
    return total / b, grads / b


def augmentation_loss(view: BatchView, tau_aug: float) -> tuple[float, np.ndarray]:
    """Pulls each augmented embedding to its own momentum original; negatives
    are all different-label batch members from either source."""
    b = view.size
    sims = view.f @ view.m.T
    grads = np.zeros_like(view.f)
    total = 0.0
    for i in range(b):
        neg = [j for j in range(b) if view.keys[j] != view.keys[i]]
        term, c_t, c_n = _term_and_coeffs(sims[i, i] / tau_aug, sims[i, neg] / tau_aug)
        total -= term
        scale = -1.0 / tau_aug
        grads[i] += scale * c_t * view.m[i]
        if neg:
            grads[i] += scale * (c_n @ view.m[neg])
    return total / b, grads / b


def centroids_loss(
    view: BatchView, bank: CentroidBank, tau_m: float, tau_s: float
) -> tuple[float, np.ndarray]:
    """Pulls each anchor to its label centroid against the centroids of all
    distinct labels present in the batch."""
    batch_labels = list(dict.fromkeys(view.keys))  # first-appearance order
    missing = [k for k in batch_labels if k not in bank.label_centroids]
    if missing:
        raise UnresolvedLabelError(f"no centroid for {missing[0]}")
    cents = np.stack([bank.label_centroids[k] for k in batch_labels])
    pos_index = {k: idx for idx, k in enumerate(batch_labels)}
    sims = view.f @ cents.T
    grads = np.zeros_like(view.f)
    total = 0.0
    for i in range(view.size):
        src, _ = view.keys[i]
        tau = tau_m if src == MULTI else tau_s
        t = pos_index[view.keys[i]]
        rest = [j for j in range(len(batch_labels)) if j != t]
        term, c_t, c_n = _term_and_coeffs(sims[i, t] / tau, sims[i, rest] / tau)
        total -= term
        scale = -1.0 / tau
        grads[i] += scale * c_t * cents[t]
        if rest:
            grads[i] += scale * (c_n @ cents[rest])
    return total / view.size, grads / view.size


def camera_centroids_loss(
    view: BatchView, bank: CentroidBank, tau_cc: float
) -> tuple[float, np.ndarray]:
    """Pulls multi-camera anchors toward same-label centroids from *other*
    cameras; negatives are camera centroids of the other multi labels in the
    batch. Anchors with no cross-camera proxy contribute zero."""
    multi_labels = list(dict.fromkeys(
        y for (src, y) in view.keys if src == MULTI))
    grads = np.zeros_like(view.f)
    total = 0.0
    contributing = 0
    for i in range(view.size):
        src, y = view.keys[i]
        if src != MULTI:
            continue
        cam = int(view.cameras[i])
        pos_keys = [k for k in bank.camera_centroids
                    if k[0] == y and k[1] != cam]
        if not pos_keys:
            continue
        neg_keys = [k for k in bank.camera_centroids
                    if k[0] != y and k[0] in multi_labels]
        proxies = np.stack([bank.camera_centroids[k]
                            for k in pos_keys + neg_keys])
        z = (view.f[i] @ proxies.T) / tau_cc
        n_pos = len(pos_keys)
        inv = 1.0 / n_pos
        for t in range(n_pos):
            rest = [j for j in range(len(z)) if j != t]
            term, c_t, c_n = _term_and_coeffs(z[t], z[rest])
            total -= term * inv
            scale = -inv / tau_cc
            grads[i] += scale * c_t * proxies[t]
            if rest:
                grads[i] += scale * (c_n @ proxies[rest])
        contributing += 1
    if contributing == 0:
        return 0.0, grads
    return total / contributing, grads / contributing


def total_loss(
    view: BatchView,
    bank: CentroidBank,
    tau_ins_m: float,
    tau_ins_s: float,
    tau_aug: float,
    tau_cen_m: float,
    tau_cen_s: float,
    tau_cc: float,
    gamma: float,
    cross_source_negatives: bool = False,
) -> tuple[float, np.ndarray, dict[str, float]]:
    """L = L_ins + L_aug + L_cen + gamma * L_cc, with the matching gradient."""
    l_ins, g_ins = instance_loss(view, tau_ins_m, tau_ins_s, cross_source_negatives)
    l_aug, g_aug = augmentation_loss(view, tau_aug)
    l_cen, g_cen = centroids_loss(view, bank, tau_cen_m, tau_cen_s)
    if gamma != 0.0:
        l_cc, g_cc = camera_centroids_loss(view, bank, tau_cc)
    else:
        l_cc, g_cc = 0.0, np.zeros_like(view.f)
    loss = l_ins + l_aug + l_cen + gamma * l_cc
    grads = g_ins + g_aug + g_cen + gamma * g_cc
    parts = {"ins": l_ins, "aug": l_aug, "cen": l_cen, "cc": l_cc}
    return loss, grads, parts
