"""On-disk dataset layout, synthetic volumes, patient splits and slice-level label expansion.

Layout::

    root/labels.csv                         patient_id,label
    root/<patient_id>/<modality>/slice_###.pgm   (or .f32)

PGM slices are binary P5 with maxval 65535 (big-endian uint16).  ``.f32``
slices carry a one-line ASCII header ``H W`` followed by H*W little-endian
float32 values in row-major order.
"""
from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, StorageError
from .noise import keyed_rng

MODALITIES = ("t1gd", "t1w", "t2", "flair", "synth")
MPMRI = ("t1gd", "t1w", "t2", "flair")
SPLITS = ("train", "val", "test")
_SLICE_RE = re.compile(r"^slice_(\d+)\.(pgm|f32)$")


# -- slice file formats ----------------------------------------------------

def encode_pgm(image: np.ndarray) -> bytes:
    """16-bit P5 PGM of an intensity image in [0, 1] (values outside are clipped)."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    q = np.round(np.clip(img, 0.0, 1.0) * 65535).astype(">u2")
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + q.tobytes()


def decode_pgm(data: bytes, name: str = "<pgm>") -> np.ndarray:
    """Raw sample values (0..maxval) as float64; intensities are arbitrary units until normalized."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{name}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise DataError(f"{name}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - pos < n:
        raise DataError(f"{name}: raster shorter than {w}x{h}")
    return np.frombuffer(data[pos:pos + n], dtype=dtype).reshape(h, w).astype(np.float64)


def encode_f32(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype="<f4")
    h, w = img.shape
    return f"{h} {w}\n".encode("ascii") + img.tobytes()


def decode_f32(data: bytes, name: str = "<f32>") -> np.ndarray:
    nl = data.find(b"\n")
    try:
        h, w = (int(t) for t in data[:nl].split())
    except ValueError:
        raise DataError(f"{name}: bad f32 header") from None
    body = data[nl + 1:]
    if len(body) != 4 * h * w:
        raise DataError(f"{name}: expected {h * w} float32 values, got {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def read_slice(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if str(path).endswith(".f32"):
        return decode_f32(data, str(path))
    return decode_pgm(data, str(path))


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# -- manifest --------------------------------------------------------------

@dataclass
class PatientEntry:
    patient_id: str
    label: int
    modalities: tuple[str, ...]


@dataclass
class SliceVolume:
    patient_id: str
    modality: str
    slices: list[np.ndarray]

    def __post_init__(self):
        if not self.slices:
            raise DataError(f"patient {self.patient_id}/{self.modality}: no slices")
        shape = self.slices[0].shape
        for i, s in enumerate(self.slices):
            if s.shape != shape:
                raise DataError(
                    f"patient {self.patient_id}/{self.modality}: slice {i} is {s.shape}, expected {shape}"
                )


@dataclass
class DatasetManifest:
    root: Path
    patients: list[PatientEntry]
    slice_files: dict[tuple[str, str], list[Path]] = field(default_factory=dict)
    split: dict[str, str] = field(default_factory=dict)

    def patient(self, patient_id: str) -> PatientEntry:
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise DataError(f"unknown patient {patient_id}")

    def load_volume(self, patient_id: str, modality: str) -> SliceVolume:
        key = (patient_id, modality)
        if key not in self.slice_files:
            raise DataError(f"patient {patient_id} has no modality {modality!r}")
        return SliceVolume(patient_id, modality, [read_slice(p) for p in self.slice_files[key]])


def _read_labels(path: Path) -> list[tuple[str, int]]:
    if not path.is_file():
        raise DataError(f"missing {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["patient_id", "label"]:
            raise DataError(f"{path}: header must be 'patient_id,label'")
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: row {lineno} has {len(row)} fields")
            pid, lab = row[0].strip(), row[1].strip()
            if lab not in ("0", "1"):
                raise DataError(f"{path}: row {lineno}: label {lab!r} is not 0 or 1")
            if pid in seen:
                raise DataError(f"{path}: row {lineno}: duplicate patient {pid}")
            seen.add(pid)
            rows.append((pid, int(lab)))
    if not rows:
        raise DataError(f"{path}: no patients listed")
    return rows


def load_dataset(root) -> DatasetManifest:
    """Validate the directory layout and index slice files; pixel data loads lazily."""
    root = Path(root)
    entries, files = [], {}
    for pid, label in _read_labels(root / "labels.csv"):
        pdir = root / pid
        if not pdir.is_dir():
            raise DataError(f"patient {pid}: directory {pdir} missing")
        mods = []
        for mod in MODALITIES:
            mdir = pdir / mod
            if not mdir.is_dir():
                continue
            found = []
            for name in os.listdir(mdir):
                m = _SLICE_RE.match(name)
                if m:
                    found.append((int(m.group(1)), name))
            if not found:
                raise DataError(f"patient {pid}: modality {mod} has zero slices")
            nums = [n for n, _ in found]
            if len(set(nums)) != len(nums):
                raise DataError(f"patient {pid}/{mod}: duplicate slice numbers")
            files[(pid, mod)] = [mdir / name for _, name in sorted(found)]
            mods.append(mod)
        if not mods:
            raise DataError(f"patient {pid}: zero slices (no modality directories)")
        entries.append(PatientEntry(pid, label, tuple(mods)))
    return DatasetManifest(root, entries, files)


# -- splitting -------------------------------------------------------------

def _largest_remainder(n: int, fractions) -> list[int]:
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    rest = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def split_patients(manifest: DatasetManifest, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> DatasetManifest:
    """Stratified patient-level split written into ``manifest.split``.

    Each class is shuffled, the classes are interleaved by within-class rank
    so every contiguous run keeps the global class ratio, and the sequence is
    cut into train/val/test by largest-remainder counts.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    rng = keyed_rng(seed, "split")
    keyed = []
    for c in (0, 1):
        ids = [p.patient_id for p in manifest.patients if p.label == c]
        ids = [ids[i] for i in rng.permutation(len(ids))]
        keyed += [((i + 0.5) / len(ids), c, pid) for i, pid in enumerate(ids)]
    keyed.sort()
    counts = _largest_remainder(len(keyed), fr)
    split, pos = {}, 0
    for name, cnt in zip(SPLITS, counts):
        for _, _, pid in keyed[pos:pos + cnt]:
            split[pid] = name
        pos += cnt
    for name in SPLITS:
        labels = {manifest.patient(pid).label for pid, s in split.items() if s == name}
        if labels != {0, 1}:
            raise DataError(f"split {name!r} lacks a class (has labels {sorted(labels)}); need more patients")
    manifest.split = split
    return manifest


@dataclass
class SliceSample:
    patient_id: str
    slice_index: int
    label: int
    features: np.ndarray | None = None


def expand_labels(patient_id: str, label: int, slice_indices, features=None) -> list[SliceSample]:
    """One sample per selected slice, each carrying the patient's label."""
    idx = list(slice_indices)
    if not idx:
        raise DataError(f"patient {patient_id}: no selected slices")
    feats = [None] * len(idx) if features is None else list(features)
    return [SliceSample(patient_id, int(i), int(label), f) for i, f in zip(idx, feats)]


# -- features table --------------------------------------------------------

@dataclass
class FeatureTable:
    patient_ids: list[str]
    slice_index: np.ndarray
    split: list[str]
    labels: np.ndarray
    x: np.ndarray

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, split_name: str) -> "FeatureTable":
        m = np.array([s == split_name for s in self.split], dtype=bool)
        return FeatureTable([p for p, k in zip(self.patient_ids, m) if k], self.slice_index[m],
                            [split_name] * int(m.sum()), self.labels[m], self.x[m])

    def to_csv(self) -> str:
        out = io.StringIO()
        cols = ",".join(f"x_{i}" for i in range(self.d))
        out.write(f"patient_id,slice_index,split,label,{cols}\n")
        for i, pid in enumerate(self.patient_ids):
            vals = ",".join(repr(float(v)) for v in self.x[i])
            out.write(f"{pid},{int(self.slice_index[i])},{self.split[i]},{int(self.labels[i])},{vals}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, name: str = "features.csv") -> "FeatureTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[:4] != ["patient_id", "slice_index", "split", "label"]:
            raise DataError(f"{name}: unexpected header {header}")
        pids, sidx, splits, labels, xs = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{name}: row {lineno} has {len(row)} fields, expected {len(header)}")
            pids.append(row[0])
            sidx.append(int(row[1]))
            if row[2] not in SPLITS:
                raise DataError(f"{name}: row {lineno}: unknown split {row[2]!r}")
            splits.append(row[2])
            if row[3] not in ("0", "1"):
                raise DataError(f"{name}: row {lineno}: label {row[3]!r} is not 0 or 1")
            labels.append(int(row[3]))
            xs.append([float(v) for v in row[4:]])
        return cls(pids, np.array(sidx, dtype=int), splits, np.array(labels, dtype=int),
                   np.array(xs, dtype=np.float64).reshape(len(pids), len(header) - 4))


# -- synthetic data ----------------------------------------------------------

@dataclass
class SynthConfig:
    n_patients: int = 28
    slices_per_patient: int = 24
    lesion_slices: int = 11  # contiguous slices carrying the lesion (a minority)
    image_size: int = 64
    contrast: float = 1.0  # 0 makes both classes identically distributed
    lesion_intensity: tuple[float, float] = (0.25, 0.95)  # (class 0, class 1)
    lesion_texture: tuple[float, float] = (0.02, 0.12)
    lesion_radius: tuple[float, float] = (0.06, 0.16)  # fraction of image size
    background_noise: float = 0.08
    jitter: float = 0.08  # lesion-centre offset range, fraction of image size
    modalities: tuple[str, ...] = MPMRI
    seed: int = 7

    def validate(self) -> None:
        if self.n_patients < 4:
            raise ConfigError(f"need at least 4 patients (two per class), got {self.n_patients}")
        if not 1 <= self.lesion_slices <= self.slices_per_patient:
            raise ConfigError("lesion_slices must lie in [1, slices_per_patient]")
        if self.image_size < 8:
            raise ConfigError("image_size must be >= 8")
        if not 0 <= self.contrast <= 1:
            raise ConfigError(f"contrast must lie in [0, 1], got {self.contrast}")
        bad = [m for m in self.modalities if m not in MODALITIES]
        if bad or not self.modalities:
            raise ConfigError(f"unknown modalities {bad}")


# per-modality lesion gain relative to T1Gd and a brain-tissue level
_MODALITY_LOOK = {
    "t1gd": (1.0, 0.35),
    "synth": (1.0, 0.35),
    "t1w": (-0.4, 0.45),
    "t2": (0.5, 0.30),
    "flair": (0.6, 0.40),
}


def _class_params(cfg: SynthConfig, label: int):
    if label == 0:
        return cfg.lesion_intensity[0], cfg.lesion_texture[0], cfg.lesion_radius[0]
    c = cfg.contrast
    pick = lambda pair: pair[0] + c * (pair[1] - pair[0])  # noqa: E731
    return pick(cfg.lesion_intensity), pick(cfg.lesion_texture), pick(cfg.lesion_radius)


def synth_volume(cfg: SynthConfig, patient_index: int, label: int, modality: str) -> list[np.ndarray]:
    """Slices of one synthetic patient/modality, intensities in [0, 1]."""
    n, s = cfg.image_size, cfg.slices_per_patient
    prng = keyed_rng(cfg.seed, "patient", patient_index)
    cy, cx = 0.5 + prng.uniform(-cfg.jitter, cfg.jitter, size=2)
    first = int(prng.integers(max(1, (s - cfg.lesion_slices) // 2 - 2), (s - cfg.lesion_slices) // 2 + 3))
    first = min(max(first, 0), s - cfg.lesion_slices)
    intensity, texture, radius = _class_params(cfg, label)
    gain, tissue = _MODALITY_LOOK[modality]

    yy, xx = np.mgrid[0:n, 0:n] / n
    out = []
    for k in range(s):
        rng = keyed_rng(cfg.seed, "pixels", patient_index, modality, k)
        z = (k + 0.5) / s - 0.5
        extent = np.sqrt(max(0.0, 1.0 - (2 * z) ** 2))  # head cross-section shrinks towards the ends
        ry, rx = 0.42 * extent + 0.02, 0.34 * extent + 0.02
        brain = (((yy - 0.5) / ry) ** 2 + ((xx - 0.5) / rx) ** 2) <= 1.0
        img = np.where(brain, tissue, 0.0)
        if first <= k < first + cfg.lesion_slices:
            rr = radius * (0.7 + 0.3 * np.sin(np.pi * (k - first + 0.5) / cfg.lesion_slices))
            blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rr ** 2)))
            tex = rng.normal(0.0, texture, size=(n, n))
            img = img + gain * blob * (intensity + tex)
        img = img + rng.normal(0.0, cfg.background_noise, size=(n, n)) * brain
        out.append(np.clip(img, 0.0, 1.0))
    return out


def generate_synthetic(cfg: SynthConfig, root) -> DatasetManifest:
    """Write a deterministic synthetic dataset under ``root`` and return its manifest."""
    cfg.validate()
    root = Path(root)
    labels = np.array([i % 2 for i in range(cfg.n_patients)])
    labels = labels[keyed_rng(cfg.seed, "labels").permutation(cfg.n_patients)]
    try:
        root.mkdir(parents=True, exist_ok=True)
        rows = ["patient_id,label"]
        for i, lab in enumerate(labels):
            pid = f"{i:05d}"
            rows.append(f"{pid},{int(lab)}")
            for mod in cfg.modalities:
                for k, img in enumerate(synth_volume(cfg, i, int(lab), mod)):
                    atomic_write(root / pid / mod / f"slice_{k:03d}.pgm", encode_pgm(img))
        atomic_write(root / "labels.csv", "\n".join(rows) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write dataset to {root}: {exc}") from exc
    return load_dataset(root)
