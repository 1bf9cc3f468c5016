"""Classical front end: normalization, area resize, energy slice selection, fusion, z-score, PCA, angles."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataError

DEFAULT_SCORE_SIZE = 64
DEFAULT_INPUT_SIZE = 16
DEFAULT_K = 10
DEFAULT_CLIP = 3.0
DEFAULT_VAR = 0.95
DEFAULT_D_MAX = 18


def minmax_normalize(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise DataError("image contains non-finite values")
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix of fractional overlaps between output cells and input pixels."""
    scale = n_in / n_out
    edges = np.arange(n_out + 1) * scale
    lo, hi = edges[:-1, None], edges[1:, None]
    pix = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, pix + 1) - np.maximum(lo, pix), 0.0, None)
    return overlap / scale


def resize_area(image, out_h: int, out_w: int) -> np.ndarray:
    """Area-averaging resize (OpenCV INTER_AREA semantics for downsampling)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise DataError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be positive, got {out_h}x{out_w}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    return _area_weights(h, out_h) @ img @ _area_weights(w, out_w).T


def energy_score(image) -> float:
    img = np.asarray(image, dtype=np.float64)
    return float(img.mean() * img.std())


@dataclass
class EnergyRanking:
    scores: list[tuple[int, float]]
    selected: list[int]


def select_top_k(slices, k: int = DEFAULT_K, work_size: tuple[int, int] = (DEFAULT_SCORE_SIZE, DEFAULT_SCORE_SIZE),
                 normalized: bool = False) -> EnergyRanking:
    """Rank slices by mean x std after normalize + resize; keep the ``k`` best (ties -> lower index).

    Pass ``normalized=True`` when the slices have already been min-max scaled
    (e.g. after image noise) so they are not normalized twice.
    """
    slices = list(slices)
    if not slices:
        raise DataError("cannot select slices from an empty volume")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    scores = []
    for i, s in enumerate(slices):
        img = s if normalized else minmax_normalize(s)
        scores.append((i, energy_score(resize_area(img, *work_size))))
    ranked = sorted(scores, key=lambda t: (-t[1], t[0]))
    return EnergyRanking(scores, [i for i, _ in ranked[:k]])


def fuse_modalities(images) -> np.ndarray:
    """Pixel-wise mean of co-registered modality images."""
    arrs = [np.asarray(a, dtype=np.float64) for a in images]
    if not arrs:
        raise DataError("nothing to fuse")
    if any(a.shape != arrs[0].shape for a in arrs):
        raise DataError(f"modality shapes differ: {[a.shape for a in arrs]}")
    return np.sum(arrs, axis=0) / len(arrs)


def zscore(vector) -> np.ndarray:
    x = np.asarray(vector, dtype=np.float64)
    sd = x.std()
    if sd == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def slice_vector(image, input_size: int = DEFAULT_INPUT_SIZE) -> np.ndarray:
    """Resize a normalized slice to input_size^2, flatten, z-score."""
    return zscore(resize_area(image, input_size, input_size).ravel())


@dataclass
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (d, D), orthonormal rows
    explained_variance_ratio: np.ndarray  # (d,)
    coord_std: np.ndarray  # (d,) population std of training coordinates
    d_pca: int  # components needed for the variance threshold, before capping

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def to_json(self) -> str:
        doc = {
            "d": self.d,
            "d_pca": self.d_pca,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "coord_std": self.coord_std.tolist(),
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        doc = json.loads(text)
        return cls(np.array(doc["mean"]), np.array(doc["components"]).reshape(doc["d"], -1),
                   np.array(doc["explained_variance_ratio"]), np.array(doc["coord_std"]), int(doc["d_pca"]))


def pca_fit(training_matrix, var_threshold: float = DEFAULT_VAR, d_max: int = DEFAULT_D_MAX) -> PcaModel:
    """Thin-SVD PCA; keeps min(d_for_threshold, d_max, n-1, D) components."""
    X = np.asarray(training_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"PCA needs at least 2 rows, got shape {X.shape}")
    if not 0 < var_threshold <= 1:
        raise ConfigError(f"var_threshold must lie in (0, 1], got {var_threshold}")
    if d_max < 1:
        raise ConfigError(f"d_max must be >= 1, got {d_max}")
    n, D = X.shape
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    var = s ** 2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    cum = np.cumsum(ratio)
    d_pca = int(np.searchsorted(cum, var_threshold - 1e-12) + 1)
    d = max(1, min(d_pca, d_max, n - 1, D))
    comps = vt[:d].copy()
    flip = np.sign(comps[np.arange(d), np.argmax(np.abs(comps), axis=1)])
    comps *= flip[:, None]
    coord_std = s[:d] / np.sqrt(n)
    return PcaModel(mean, comps, ratio[:d], coord_std, d_pca)


def pca_transform(model: PcaModel, vector) -> np.ndarray:
    x = np.asarray(vector, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ContractError(f"vector length {x.shape[-1]} != PCA input dimension {model.mean.shape[0]}")
    return (x - model.mean) @ model.components.T


def standardize_coords(model: PcaModel, coords) -> np.ndarray:
    """Divide PCA coordinates by their training standard deviation (zero-variance axes stay 0)."""
    sd = np.where(model.coord_std > 0, model.coord_std, 1.0)
    return np.asarray(coords, dtype=np.float64) / sd


def angle_scale(vector, clip: float = DEFAULT_CLIP) -> np.ndarray:
    if not clip > 0:
        raise ConfigError(f"clip must be > 0, got {clip}")
    x = np.asarray(vector, dtype=np.float64)
    return np.clip(x / clip, -1.0, 1.0) * np.pi


def features_from_vectors(model: PcaModel, vectors, clip: float = DEFAULT_CLIP) -> np.ndarray:
    """PCA project, standardize per component, clip and map to [-pi, pi]."""
    return angle_scale(standardize_coords(model, pca_transform(model, vectors)), clip)
