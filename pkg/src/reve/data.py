"""Desk-scale datasets: synthetic nuisance blobs and IDX image files, plus
train-split normalization and pad/crop/flip augmentation."""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray  # N x features  or  N x C x H x W
    labels: np.ndarray  # N, int
    n_classes: int
    split: str = "train"
    mean: np.ndarray | None = None  # per channel / feature, from the train split
    std: np.ndarray | None = None

    def __len__(self):
        return self.labels.shape[0]

    @property
    def is_image(self) -> bool:
        return self.inputs.ndim == 4

    @property
    def feature_shape(self) -> tuple:
        return tuple(self.inputs.shape[1:])


def simplex_centers(n_classes: int, dim: int) -> np.ndarray:
    """Vertices of a regular simplex centered at the origin, unit distance from it."""
    if n_classes == 1:
        return np.zeros((1, dim))
    if n_classes - 1 > dim:
        raise ValueError(f"{n_classes} simplex vertices need at least {n_classes - 1} dimensions")
    E = np.eye(n_classes) - 1.0 / n_classes
    # orthonormal basis of the (n_classes - 1)-dim span of the centered vertices
    Q, _ = np.linalg.qr(E.T)
    coords = E @ Q[:, :n_classes - 1]
    coords /= np.linalg.norm(coords[0])
    out = np.zeros((n_classes, dim))
    out[:, :n_classes - 1] = coords
    return out


def synth_nuisance_blobs(n_classes: int, n_informative_dims: int, n_nuisance_dims: int,
                         noise: float, n_samples: int, seed: int, split: str = "train",
                         separation: float = 1.0, nuisance_scale: float = 1.0) -> LabeledDataset:
    """Gaussian class blobs on a simplex in the informative coordinates, followed by
    class-independent standard-normal nuisance coordinates."""
    if min(n_classes, n_informative_dims, n_samples) < 1 or n_nuisance_dims < 0:
        raise ValueError("dimensions and counts must be positive")
    rng = np.random.default_rng(seed)
    centers = separation * simplex_centers(n_classes, n_informative_dims)
    labels = np.arange(n_samples) % n_classes
    rng.shuffle(labels)
    informative = centers[labels] + noise * rng.standard_normal((n_samples, n_informative_dims))
    nuisance = nuisance_scale * rng.standard_normal((n_samples, n_nuisance_dims))
    x = np.concatenate([informative, nuisance], axis=1)
    return LabeledDataset(x, labels.astype(np.int64), n_classes, split)


def _read_idx(path) -> tuple[int, tuple, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: file too short")
    (magic,) = struct.unpack(">I", raw[:4])
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = raw[4 + 4 * ndim:]
    if len(body) < int(np.prod(dims)):
        raise IdxFormatError(f"{path}: payload shorter than header declares")
    return magic, dims, body


def load_idx(images_path, labels_path, limit: int | None = None, split: str = "train",
             n_classes: int | None = None) -> LabeledDataset:
    """Read an IDX image/label pair; pixels scaled to [0, 1], shape N x 1 x H x W."""
    magic, dims, body = _read_idx(images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}")
    lmagic, ldims, lbody = _read_idx(labels_path)
    if lmagic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{lmagic:08x}")
    n, rows, cols = dims
    if ldims[0] != n:
        raise IdxFormatError(f"count mismatch: {n} images vs {ldims[0]} labels")
    images = np.frombuffer(body, dtype=np.uint8, count=n * rows * cols).reshape(n, 1, rows, cols)
    labels = np.frombuffer(lbody, dtype=np.uint8, count=n).astype(np.int64)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    k = n_classes if n_classes is not None else int(labels.max()) + 1 if labels.size else 0
    return LabeledDataset(images.astype(np.float64) / 255.0, labels, k, split)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray):
    """Inverse of load_idx for uint8 data (used for fixtures)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels))
                                  + np.asarray(labels, dtype=np.uint8).tobytes())


def _stat_axes(x: np.ndarray):
    return (0, 2, 3) if x.ndim == 4 else (0,)


def _bcast(stat: np.ndarray, x: np.ndarray):
    return stat.reshape(1, -1, 1, 1) if x.ndim == 4 else stat.reshape(1, -1)


def normalize(train: LabeledDataset, *others: LabeledDataset):
    """Standardize every split with the train split's per-channel mean and std."""
    axes = _stat_axes(train.inputs)
    mean = train.inputs.mean(axis=axes)
    std = train.inputs.std(axis=axes)
    std = np.where(std > 0, std, 1.0)
    out = [apply_normalization(ds, mean, std) for ds in (train, *others)]
    return out[0] if not others else tuple(out)


def apply_normalization(ds: LabeledDataset, mean: np.ndarray, std: np.ndarray) -> LabeledDataset:
    x = (ds.inputs - _bcast(mean, ds.inputs)) / _bcast(std, ds.inputs)
    return replace(ds, inputs=x, mean=np.asarray(mean), std=np.asarray(std))


def augment(batch: np.ndarray, pad: int, crop: int | None, hflip_prob: float,
            rng: np.random.Generator) -> np.ndarray:
    """Zero-pad each image by ``pad``, take a random ``crop`` x ``crop`` window, flip horizontally
    with probability ``hflip_prob``.  ``crop=None`` keeps the original extent."""
    n, c, h, w = batch.shape
    ch, cw = (h, w) if crop is None else (crop, crop)
    H, W = h + 2 * pad, w + 2 * pad
    if ch > H or cw > W:
        raise ValueError(f"crop {ch}x{cw} larger than padded image {H}x{W}")
    padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else batch
    out = np.empty((n, c, ch, cw), dtype=batch.dtype)
    tops = rng.integers(0, H - ch + 1, size=n)
    lefts = rng.integers(0, W - cw + 1, size=n)
    flips = rng.random(n) < hflip_prob
    for i in range(n):
        img = padded[i, :, tops[i]:tops[i] + ch, lefts[i]:lefts[i] + cw]
        out[i] = img[..., ::-1] if flips[i] else img
    return out


def batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
