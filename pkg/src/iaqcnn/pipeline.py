"""End-to-end experiment steps shared by the CLI and the scripts."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import preprocess as pp
from .circuit import build_model_circuit
from .data import MPMRI, DatasetManifest, FeatureTable, split_patients
from .errors import ConfigError
from .metrics import MetricsReport, PatientPrediction, aggregate, full_report
from .model import ModelParams, forward_batch
from .noise import add_image_noise, keyed_rng
from .train import TrainConfig, TrainHistory, train

log = logging.getLogger(__name__)


@dataclass
class PreprocessConfig:
    modality: str = "t1gd"  # t1gd | fused | synth
    k_slices: int = pp.DEFAULT_K
    score_size: int = pp.DEFAULT_SCORE_SIZE
    input_size: int = pp.DEFAULT_INPUT_SIZE
    pca_var: float = pp.DEFAULT_VAR
    d_max: int = pp.DEFAULT_D_MAX
    clip: float = pp.DEFAULT_CLIP
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)


def _normalized_volume(manifest: DatasetManifest, pid: str, modality: str, image_sigma: float, noise_seed: int):
    vol = manifest.load_volume(pid, modality)
    out = []
    for k, img in enumerate(vol.slices):
        norm = pp.minmax_normalize(img)
        if image_sigma > 0:
            norm = add_image_noise(norm, image_sigma, keyed_rng(noise_seed, "image", pid, modality, k))
        out.append(norm)
    return out


def build_features(manifest: DatasetManifest, cfg: PreprocessConfig, seed: int,
                   image_sigma: float = 0.0, noise_seed: int = 0) -> tuple[FeatureTable, pp.PcaModel]:
    """normalize (+ image noise) -> energy top-K -> [fuse] -> resize -> z-score -> PCA(train) -> angles."""
    if cfg.modality not in ("t1gd", "fused", "synth"):
        raise ConfigError(f"modality must be t1gd, fused or synth, got {cfg.modality!r}")
    if not manifest.split:
        split_patients(manifest, cfg.split_fractions, seed)
    score_mod = "synth" if cfg.modality == "synth" else "t1gd"
    pids, sidx, splits, labels, vecs = [], [], [], [], []
    for p in manifest.patients:
        ref = _normalized_volume(manifest, p.patient_id, score_mod, image_sigma, noise_seed)
        chosen = pp.select_top_k(ref, cfg.k_slices, (cfg.score_size, cfg.score_size), normalized=True).selected
        if cfg.modality == "fused":
            others = [_normalized_volume(manifest, p.patient_id, m, image_sigma, noise_seed) for m in MPMRI if m != "t1gd"]
            images = [pp.fuse_modalities([ref[k]] + [o[k] for o in others]) for k in chosen]
        else:
            images = [ref[k] for k in chosen]
        for k, img in zip(chosen, images):
            pids.append(p.patient_id)
            sidx.append(k)
            splits.append(manifest.split[p.patient_id])
            labels.append(p.label)
            vecs.append(pp.slice_vector(img, cfg.input_size))
    vecs = np.array(vecs)
    train_mask = np.array([s == "train" for s in splits])
    pca = pp.pca_fit(vecs[train_mask], cfg.pca_var, cfg.d_max)
    x = pp.features_from_vectors(pca, vecs, cfg.clip)
    return FeatureTable(pids, np.array(sidx), splits, np.array(labels), x), pca


def train_on_table(table: FeatureTable, levels: int, config: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    plan = build_model_circuit(table.d, levels)
    tr, va = table.subset("train"), table.subset("val")
    return train(tr.x, tr.labels, va.x, va.labels, plan, config)


def predict_table(table: FeatureTable, params: ModelParams, levels: int, gate_sigma: float = 0.0,
                  noise_seed: int = 0, stream: str = "gate-eval") -> np.ndarray:
    """Class-1 probability per slice row."""
    plan = build_model_circuit(table.d, levels)
    rng = keyed_rng(noise_seed, stream) if gate_sigma > 0 else None
    _, _, probs = forward_batch(plan, table.x, params, gate_sigma, rng)
    return probs[:, 1]


def patient_report(table: FeatureTable, probs1: np.ndarray) -> tuple[list[PatientPrediction], MetricsReport]:
    preds = aggregate(table.patient_ids, probs1, table.labels)
    return preds, full_report(preds)
