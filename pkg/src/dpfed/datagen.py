"""Dataset generation, partitioning, preprocessing and file ingestion.

Synthetic data follows a hierarchical logistic design whose two variances
control model and data heterogeneity across users.  Real pools are split
across users by a similarity knob: a gamma% i.i.d. slice dealt round-robin,
the rest label-sorted into contiguous blocks.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_BIN_MAGIC = b"DPFDSET1"


@dataclass
class FederatedDataset:
    """Per-user train/test shards of (feature row, class label) pairs."""

    train_features: list[np.ndarray]
    train_labels: list[np.ndarray]
    test_features: list[np.ndarray]
    test_labels: list[np.ndarray]
    n_classes: int
    seed: int = 0
    ground_truth: list[tuple[np.ndarray, np.ndarray]] | None = None
    _train_pool: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_users(self) -> int:
        return len(self.train_labels)

    @property
    def n_features(self) -> int:
        return self.train_features[0].shape[1]

    @property
    def records_per_user(self) -> int:
        """Records per user before the train/test split (uniform shards)."""
        sizes = {len(a) + len(b) for a, b in zip(self.train_labels, self.test_labels)}
        if len(sizes) != 1:
            raise ValueError("shard sizes are not uniform across users")
        return sizes.pop()

    @property
    def train_records_per_user(self) -> int:
        sizes = {len(a) for a in self.train_labels}
        if len(sizes) != 1:
            raise ValueError("train shard sizes are not uniform across users")
        return sizes.pop()

    def default_delta(self) -> float:
        """1 / (number of training records), the convention used to reproduce
        the reference privacy budgets."""
        return 1.0 / sum(len(a) for a in self.train_labels)

    def user_train(self, i: int):
        return self.train_features[i], self.train_labels[i]

    def user_test(self, i: int):
        return self.test_features[i], self.test_labels[i]

    def train_pool(self):
        if self._train_pool is None:
            self._train_pool = (
                np.concatenate(self.train_features),
                np.concatenate(self.train_labels),
            )
        return self._train_pool


@dataclass
class SynthConfig:
    users: int
    records: int
    n_features: int = 40
    n_classes: int = 10
    alpha: float = 0.0  # model-heterogeneity variance
    beta: float = 0.0  # data-heterogeneity variance
    flip_prob: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("heterogeneity variances must be nonnegative")
        if not 0.0 <= self.flip_prob < 1.0:
            raise ValueError("flip probability must lie in [0, 1)")


def feature_covariance_diagonal(n_features: int) -> np.ndarray:
    """Decaying diagonal j^-1.2 (1-based) of the feature covariance."""
    return np.arange(1, n_features + 1, dtype=float) ** -1.2


def synth_generate(cfg: SynthConfig) -> FederatedDataset:
    """Hierarchical synthetic generator in the heterogeneous-logistic style.

    Per user i a scalar weight-mean u_i ~ N(0, alpha) shifts every entry of
    the ground-truth model, W_i ~ N(u_i, I) entrywise (same scheme for the
    bias), and a scalar B_i ~ N(0, beta) shifts the feature-cluster center,
    v_i ~ N(B_i, I), with rows x ~ N(v_i, Sigma), Sigma_jj = j^-1.2.  The
    scalar (rather than per-coordinate) hierarchy keeps user clusters
    overlapping in feature space, so raising beta makes the global problem
    genuinely harder instead of separating users.  Labels are the
    ground-truth argmax, then replaced by a uniformly random different class
    with the flip probability.  Even alpha = beta = 0 leaves users
    heterogeneous through their distinct W_i and v_i draws.
    """
    rng = np.random.default_rng(cfg.seed)
    d, L = cfg.n_features, cfg.n_classes
    sigma_sqrt = np.sqrt(feature_covariance_diagonal(d))
    n_train = int(0.8 * cfg.records)

    train_X, train_y, test_X, test_y, truths = [], [], [], [], []
    for _ in range(cfg.users):
        u_w = math.sqrt(cfg.alpha) * rng.standard_normal()
        W = u_w + rng.standard_normal((d, L))
        u_b = math.sqrt(cfg.alpha) * rng.standard_normal()
        b = u_b + rng.standard_normal(L)
        B = math.sqrt(cfg.beta) * rng.standard_normal()
        v = B + rng.standard_normal(d)
        X = v + sigma_sqrt * rng.standard_normal((cfg.records, d))
        labels = np.argmax(X @ W + b, axis=1)
        flips = rng.random(cfg.records) < cfg.flip_prob
        offsets = rng.integers(1, L, size=cfg.records)
        labels = np.where(flips, (labels + offsets) % L, labels)
        train_X.append(X[:n_train])
        train_y.append(labels[:n_train])
        test_X.append(X[n_train:])
        test_y.append(labels[n_train:])
        truths.append((W, b))

    dataset = FederatedDataset(train_X, train_y, test_X, test_y, L, cfg.seed, truths)
    return preprocess(dataset)


def partition_by_similarity(
    features: np.ndarray, labels: np.ndarray, n_users: int, gamma_pct: float, seed: int = 0
) -> FederatedDataset:
    """Split a labeled pool across users with gamma% similarity.

    A uniformly shuffled gamma% slice is dealt round-robin; the remaining
    records are sorted by label and dealt in contiguous equal blocks.  Any
    remainder from sizes not divisible by n_users is dropped.  Each user's
    shard is then shuffled and split 80/20 into train/test.  No
    standardization is applied here; see preprocess.
    """
    if not 0.0 <= gamma_pct <= 100.0:
        raise ValueError("gamma_pct must lie in [0, 100]")
    n_classes = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    per_user = len(labels) // n_users
    if per_user < 1:
        raise ValueError("pool smaller than the number of users")
    perm = rng.permutation(len(labels))

    iid_per_user = int(gamma_pct / 100.0 * per_user)
    iid_total = iid_per_user * n_users
    used_total = per_user * n_users
    iid_part = perm[:iid_total]
    rest = perm[iid_total:used_total]
    rest_sorted = rest[np.argsort(labels[rest], kind="stable")]
    block = per_user - iid_per_user

    train_X, train_y, test_X, test_y = [], [], [], []
    n_train = int(0.8 * per_user)
    for i in range(n_users):
        idx = np.concatenate([iid_part[i::n_users], rest_sorted[i * block : (i + 1) * block]])
        idx = idx[rng.permutation(per_user)]
        train_X.append(features[idx[:n_train]].astype(float))
        train_y.append(labels[idx[:n_train]].astype(np.int64))
        test_X.append(features[idx[n_train:]].astype(float))
        test_y.append(labels[idx[n_train:]].astype(np.int64))
    return FederatedDataset(train_X, train_y, test_X, test_y, n_classes, seed)


def preprocess(dataset: FederatedDataset) -> FederatedDataset:
    """Standardize every feature, then normalize each row to unit l2 norm.

    Per-feature mean/std come from the pooled training split only and are
    applied to both splits; zero-variance features are centered without
    scaling.  Zero rows (possible only for degenerate inputs) are left as
    zeros.
    """
    pool = np.concatenate(dataset.train_features)
    mean = pool.mean(axis=0)
    std = pool.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)

    def fix(shards):
        out = []
        for X in shards:
            Z = (X - mean) / scale
            norms = np.linalg.norm(Z, axis=1, keepdims=True)
            out.append(Z / np.where(norms > 0.0, norms, 1.0))
        return out

    return FederatedDataset(
        fix(dataset.train_features),
        [y.astype(np.int64) for y in dataset.train_labels],
        fix(dataset.test_features),
        [y.astype(np.int64) for y in dataset.test_labels],
        dataset.n_classes,
        dataset.seed,
        dataset.ground_truth,
    )


def _read_exact(f, n: int, path: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated IDX file: {path}")
    return buf


def load_idx(images_path: str, labels_path: str):
    """Read big-endian IDX image/label files into ([0,1] features, labels)."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"bad IDX image magic 0x{magic:08x} in {images_path}")
        raw = _read_exact(f, count * rows * cols, images_path)
        if f.read(1):
            raise ValueError(f"trailing bytes in {images_path}")
    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"bad IDX label magic 0x{magic:08x} in {labels_path}")
        labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)
    if count != label_count:
        raise ValueError(f"image/label count mismatch: {count} images vs {label_count} labels")
    features = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    return features, labels.astype(np.int64)


def write_idx(images_path: str, labels_path: str, images: np.ndarray, labels: np.ndarray):
    """Write uint8 images (N x rows x cols) and labels as IDX files."""
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


def dataset_save(dataset: FederatedDataset, path: str):
    """Versioned little-endian binary with uniform per-user blocks."""
    m = dataset.n_users
    n_train = dataset.train_records_per_user
    n_test = dataset.records_per_user - n_train
    d = dataset.n_features
    with open(path, "wb") as f:
        f.write(_BIN_MAGIC)
        f.write(struct.pack("<IIIIIq", m, n_train, n_test, d, dataset.n_classes, dataset.seed))
        for i in range(m):
            f.write(np.ascontiguousarray(dataset.train_features[i], dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(dataset.train_labels[i], dtype="<i8").tobytes())
            f.write(np.ascontiguousarray(dataset.test_features[i], dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(dataset.test_labels[i], dtype="<i8").tobytes())


def dataset_load(path: str) -> FederatedDataset:
    with open(path, "rb") as f:
        if f.read(8) != _BIN_MAGIC:
            raise ValueError(f"not a dpfed dataset file: {path}")
        m, n_train, n_test, d, n_classes, seed = struct.unpack("<IIIIIq", f.read(28))
        train_X, train_y, test_X, test_y = [], [], [], []
        for _ in range(m):
            train_X.append(np.frombuffer(f.read(8 * n_train * d), dtype="<f8").reshape(n_train, d).copy())
            train_y.append(np.frombuffer(f.read(8 * n_train), dtype="<i8").copy())
            test_X.append(np.frombuffer(f.read(8 * n_test * d), dtype="<f8").reshape(n_test, d).copy())
            test_y.append(np.frombuffer(f.read(8 * n_test), dtype="<i8").copy())
    return FederatedDataset(train_X, train_y, test_X, test_y, n_classes, seed)


def export_csv(dataset: FederatedDataset, path: str):
    """Rows: user,split,label,f0..f{d-1} (shortest round-trip floats)."""
    d = dataset.n_features
    header = "user,split,label," + ",".join(f"f{j}" for j in range(d))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header + "\r\n")
        for i in range(dataset.n_users):
            for split, X, y in (
                ("train", dataset.train_features[i], dataset.train_labels[i]),
                ("test", dataset.test_features[i], dataset.test_labels[i]),
            ):
                for row, label in zip(X, y):
                    vals = ",".join(repr(float(v)) for v in row)
                    f.write(f"{i},{split},{label},{vals}\r\n")


def load_csv(path: str) -> FederatedDataset:
    """Read back the export_csv format."""
    shards: dict[tuple[int, str], list] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("user,split,label,"):
            raise ValueError(f"unrecognized dataset CSV header in {path}")
        for line in f:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            key = (int(parts[0]), parts[1])
            shards.setdefault(key, []).append((int(parts[2]), [float(v) for v in parts[3:]]))
    users = sorted({u for u, _ in shards})
    train_X, train_y, test_X, test_y = [], [], [], []
    for u in users:
        for split, X_list, y_list in (("train", train_X, train_y), ("test", test_X, test_y)):
            rows = shards.get((u, split), [])
            y_list.append(np.array([r[0] for r in rows], dtype=np.int64))
            X_list.append(np.array([r[1] for r in rows], dtype=float))
    n_classes = int(max(y.max() for y in train_y + test_y if len(y))) + 1
    return FederatedDataset(train_X, train_y, test_X, test_y, n_classes)
