"""Training loop, evaluation, checkpoints and the per-coordinate density export."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import tensor as T
from .config import DataSpec, RunConfig
from .core import GmmParams, total_objective
from .data import LabeledDataset, apply_normalization, augment, batches, load_idx, normalize, synth_nuisance_blobs
from .nn import DecoderHead, EncoderNetwork, SgdMomentum

log = logging.getLogger(__name__)

DENSITY_GRID_POINTS = 512
DENSITY_GRID_HALO = 4.0  # grid spans [min - HALO*b, max + HALO*b]


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class MetricsRow:
    epoch: int
    step: int
    cross_entropy: float
    omega: float
    total: float
    train_error: float
    test_error: float
    neg_log_q: float
    neg_log_r: float
    wall_seconds: float


# wall-clock time goes to a separate file so metrics.csv is reproducible byte for byte
METRICS_COLUMNS = [f.name for f in fields(MetricsRow) if f.name != "wall_seconds"]


@dataclass
class TrainResult:
    config: RunConfig
    net: EncoderNetwork
    head: DecoderHead
    train: LabeledDataset
    test: LabeledDataset
    metrics: list
    last_gmm: GmmParams | None
    checkpoint_path: Path | None

    @property
    def final_test_error(self) -> float:
        return self.metrics[-1].test_error


def load_datasets(spec: DataSpec, run_seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Normalized (train, test) pair; test uses train statistics."""
    return normalize(*load_raw_datasets(spec, run_seed))


def load_raw_datasets(spec: DataSpec, run_seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    if spec.kind == "blobs":
        seed = run_seed if spec.seed is None else spec.seed
        common = dict(n_classes=spec.n_classes, n_informative_dims=spec.informative,
                      n_nuisance_dims=spec.nuisance, noise=spec.noise, separation=spec.separation)
        train = synth_nuisance_blobs(n_samples=spec.n_train, seed=2 * seed, split="train", **common)
        test = synth_nuisance_blobs(n_samples=spec.n_test, seed=2 * seed + 1, split="test", **common)
    elif spec.kind == "idx":
        if not (spec.images and spec.labels):
            raise ValueError("idx data needs images= and labels=")
        train = load_idx(spec.images, spec.labels, spec.limit, "train")
        if spec.test_images and spec.test_labels:
            test = load_idx(spec.test_images, spec.test_labels, spec.limit, "test", train.n_classes)
        else:
            # hold out the last fifth
            cut = int(0.8 * len(train))
            test = replace(train, inputs=train.inputs[cut:], labels=train.labels[cut:], split="test")
            train = replace(train, inputs=train.inputs[:cut], labels=train.labels[:cut])
    else:
        raise ValueError(f"unknown data kind {spec.kind!r}")
    return train, test


def build_model(config: RunConfig, feature_shape: tuple, n_classes: int, rng) -> tuple[EncoderNetwork, DecoderHead]:
    net = EncoderNetwork.from_spec(feature_shape, list(config.arch.layers), rng)
    if net.dim_y != config.arch.dim_y:
        raise ValueError(f"encoder output {net.dim_y} != declared dim_y {config.arch.dim_y}")
    return net, DecoderHead(net.dim_y, n_classes, rng)


def deterministic_encoding(net: EncoderNetwork, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    with T.no_tape():
        return np.concatenate([net(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)], axis=0)


def error_rate(net: EncoderNetwork, head: DecoderHead, ds: LabeledDataset) -> float:
    """Percent misclassified using the noise-free encoding."""
    h = deterministic_encoding(net, ds.inputs)
    logits = h @ head.W.data.T + head.b.data
    return float(100.0 * np.mean(np.argmax(logits, axis=1) != ds.labels))


def train(config: RunConfig, write: bool = True) -> TrainResult:
    init_ss, shuffle_ss, noise_ss, aug_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(5)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    noise_rng = np.random.default_rng(noise_ss)
    aug_rng = np.random.default_rng(aug_ss)
    drop_rng = np.random.default_rng(drop_ss)

    train_ds, test_ds = load_datasets(config.data, config.seed)
    net, head = build_model(config, train_ds.feature_shape, train_ds.n_classes, init_rng)
    opt = SgdMomentum(config.optim.lr, config.optim.decay, config.optim.momentum, config.optim.weight_decay)
    params = {**net.params(), **head.params()}
    reve = config.reve
    do_aug = config.data.augment and train_ds.is_image

    rows, gmm, step = [], None, 0
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        sums = np.zeros(5)
        wrong, seen, nb = 0, 0, 0
        for idx in batches(len(train_ds), config.batch_size, shuffle_rng):
            if idx.size < 2:
                continue
            x, y = train_ds.inputs[idx], train_ds.labels[idx]
            if do_aug:
                x = augment(x, config.data.pad, None, config.data.hflip_prob, aug_rng)
            head.ensure_fresh(reve.svd_refresh_period, reve.rank_tolerance)
            with T.Tape() as tape:
                obj = total_objective(x, y, net, head, reve, noise_rng, prev_gmm=gmm,
                                      training=True, dropout_rng=drop_rng)
                total = obj.total.item()
                if not np.isfinite(total) or not np.isfinite(obj.terms.omega.item()):
                    raise NonFiniteLossError(step, total)
                tape.backward(obj.total)
            opt.step(params, epoch)
            head.tick()
            gmm = obj.terms.params
            sums += [obj.ce.item(), obj.terms.omega.item(), total, obj.terms.neg_log_q, obj.terms.neg_log_r]
            wrong += int(np.sum(np.argmax(obj.logits.data, axis=1) != y))
            seen += idx.size
            nb += 1
            step += 1
        means = sums / max(nb, 1)
        test_err = error_rate(net, head, test_ds)
        rows.append(MetricsRow(epoch, step, *means[:3], 100.0 * wrong / max(seen, 1), test_err,
                               means[3], means[4], time.perf_counter() - t0))
        log.info("epoch %d step %d ce %.4f omega %.3f test_err %.2f", epoch, step, means[0], means[1], test_err)

    path = None
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(out / "metrics.csv", rows)
        write_timing(out / "timing.csv", rows)
        (out / "config.yaml").write_text(cfgmod.dumps(config))
        path = out / "checkpoint.bin"
        save_checkpoint(path, config, net, head, train_ds)
    return TrainResult(config, net, head, train_ds, test_ds, rows, gmm, path)


def format_metrics(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in rows:
        vals = astuple(r)[:len(METRICS_COLUMNS)]
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in vals])
    return buf.getvalue()


def write_metrics(path, rows):
    Path(path).write_text(format_metrics(rows))


def write_timing(path, rows):
    lines = ["epoch,step,wall_seconds"] + [f"{r.epoch},{r.step},{r.wall_seconds:.3f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def save_checkpoint(path, config: RunConfig, net: EncoderNetwork, head: DecoderHead, train_ds: LabeledDataset):
    arrays = {name: p.data for name, p in {**net.params(), **head.params()}.items()}
    if train_ds.mean is not None:
        arrays["normalization.mean"] = train_ds.mean
        arrays["normalization.std"] = train_ds.std
    meta = {"config": config.to_dict(), "in_shape": list(net.in_shape),
            "dim_y": net.dim_y, "n_classes": head.n_classes}
    ckpt.save(path, arrays, meta)


@dataclass
class LoadedModel:
    config: RunConfig
    net: EncoderNetwork
    head: DecoderHead
    mean: np.ndarray | None
    std: np.ndarray | None


def load_checkpoint(path) -> LoadedModel:
    arrays, meta = ckpt.load(path)
    config = cfgmod.from_dict(meta["config"])
    net, head = build_model(config, tuple(meta["in_shape"]), int(meta["n_classes"]), np.random.default_rng(0))
    for name, p in {**net.params(), **head.params()}.items():
        if name not in arrays:
            raise ckpt.CheckpointError(f"checkpoint lacks parameter {name!r}")
        if arrays[name].shape != p.shape:
            raise ckpt.CheckpointError(f"{name}: checkpoint shape {arrays[name].shape} != model {p.shape}")
        p.data = arrays[name].copy()
    return LoadedModel(config, net, head, arrays.get("normalization.mean"), arrays.get("normalization.std"))


def _prepare(model: LoadedModel, dataset, split: str) -> LabeledDataset:
    """Raw dataset -> normalized with the checkpoint's training statistics."""
    if dataset is None:
        train, test = load_datasets(model.config.data, model.config.seed)
        return test if split == "test" else train
    if isinstance(dataset, DataSpec):
        raw_train, raw_test = load_raw_datasets(dataset, model.config.seed)
        dataset = raw_test if split == "test" else raw_train
    if model.mean is not None:
        dataset = apply_normalization(dataset, model.mean, model.std)
    return dataset


def evaluate(checkpoint_path, dataset=None) -> float:
    """Test error (%) of a checkpoint.  ``dataset`` may be a raw LabeledDataset, a DataSpec,
    or None for the test split the run was trained against."""
    model = load_checkpoint(checkpoint_path)
    ds = _prepare(model, dataset, "test")
    if tuple(ds.feature_shape) != model.net.in_shape:
        raise ckpt.CheckpointError(f"data shape {ds.feature_shape} does not match network input {model.net.in_shape}")
    return error_rate(model.net, model.head, ds)


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    rng_ = float(x.max() - x.min())
    b = 1.06 * float(x.std()) * x.size ** (-0.2)
    floor = 1e-3 * rng_ if rng_ > 0 else 1e-3 * max(1.0, float(abs(x.mean())))
    return max(b, floor)


def gaussian_kde(samples: np.ndarray, grid: np.ndarray, bandwidth: float, chunk: int = 4096) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    dens = np.zeros_like(grid)
    norm = 1.0 / (samples.size * bandwidth * np.sqrt(2 * np.pi))
    for i in range(0, samples.size, chunk):
        u = (grid[:, None] - samples[None, i:i + chunk]) / bandwidth
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    return dens * norm


def kde_column(samples: np.ndarray, n_points: int = DENSITY_GRID_POINTS):
    b = silverman_bandwidth(samples)
    grid = np.linspace(samples.min() - DENSITY_GRID_HALO * b, samples.max() + DENSITY_GRID_HALO * b, n_points)
    return grid, gaussian_kde(samples, grid, b), b


def density_table(h: np.ndarray, P: np.ndarray, coords) -> dict[str, np.ndarray]:
    if h.shape[0] == 0:
        raise ValueError("cannot estimate densities of an empty dataset")
    z = h @ P
    cols = {}
    for i in coords:
        if not 0 <= i < h.shape[1]:
            raise ValueError(f"coordinate {i} outside [0, {h.shape[1]})")
        for tag, data in (("Y", h[:, i]), ("Z", z[:, i])):
            grid, dens, _ = kde_column(data)
            cols[f"grid_{tag}{i}"] = grid
            cols[f"density_{tag}{i}"] = dens
    return cols


def export_density(checkpoint_path, out_path, coords=(0, 1, 2, 3, 4), dataset=None, split: str = "train") -> dict:
    """KDE of chosen coordinates of the encoding Y = h and of Z = P h, as whitespace columns."""
    model = load_checkpoint(checkpoint_path)
    ds = _prepare(model, dataset, split)
    h = deterministic_encoding(model.net, ds.inputs)
    model.head.refresh(model.config.reve.rank_tolerance)
    cols = density_table(h, model.head.projection.P, coords)
    names = list(cols)
    np.savetxt(out_path, np.column_stack([cols[n] for n in names]), header=" ".join(names),
               comments="", fmt="%.10e")
    return cols
