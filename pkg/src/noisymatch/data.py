"""Synthetic bimodal datasets with controllable correspondence noise.

Pairs are built from a shared latent factor so that the two modalities are
genuinely matchable, then a chosen fraction of pairs is mismatched by
deranging their assigned texts. The ground-truth mismatch flags are kept so
that correction quality can be measured later.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

_MAGIC = b"NMPAIRDS"
_VERSION = 1
_HEADER = struct.Struct("<8sIQQQdq")  # magic, version, n, d_v, d_t, noise_rate, seed


class DatasetFormatError(ValueError):
    """Malformed dataset file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _round_half_up(x: float) -> int:
    """Round to nearest integer, ties toward +infinity."""
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class GenConfig:
    """Parameters for synthetic pair generation.

    The two modalities are linear views of a shared latent vector plus
    isotropic observation noise.
    """

    n: int
    latent_dim: int = 8
    d_v: int = 16
    d_t: int = 12
    noise_std: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.d_v < 1 or self.d_t < 1:
            raise ValueError(f"output dims must be >= 1, got d_v={self.d_v}, d_t={self.d_t}")
        if self.latent_dim > min(self.d_v, self.d_t):
            raise ValueError(
                f"latent_dim {self.latent_dim} exceeds min(d_v, d_t) = {min(self.d_v, self.d_t)}"
            )
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "latent_dim": self.latent_dim,
            "d_v": self.d_v,
            "d_t": self.d_t,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }


@dataclass
class PairedDataset:
    """N image/text vector pairs with an explicit pairing permutation.

    Pair ``i`` consists of ``images[i]`` and ``texts[pairing[i]]``. A clean
    dataset has the identity pairing; after noise injection ``pairing`` sends
    mismatched pairs to other texts and ``noise_flags`` marks them.
    """

    images: np.ndarray  # (n, d_v) float64
    texts: np.ndarray  # (n, d_t) float64
    pairing: np.ndarray  # (n,) int64 permutation
    noise_flags: np.ndarray  # (n,) bool, true iff pairing[i] != i
    noise_rate: float
    seed: int

    @property
    def n(self) -> int:
        return self.images.shape[0]

    def paired_texts(self) -> np.ndarray:
        """Texts in pair order, i.e. row i is the text assigned to image i."""
        return self.texts[self.pairing]

    def validate(self) -> None:
        n = self.n
        if self.texts.shape[0] != n or self.pairing.shape != (n,) or self.noise_flags.shape != (n,):
            raise ValueError("inconsistent array lengths")
        if not np.array_equal(np.sort(self.pairing), np.arange(n)):
            raise ValueError("pairing is not a permutation of 0..n-1")
        if not np.array_equal(self.noise_flags, self.pairing != np.arange(n)):
            raise ValueError("noise_flags inconsistent with pairing")
        if int(self.noise_flags.sum()) != _round_half_up(self.noise_rate * n):
            raise ValueError(
                f"flag count {int(self.noise_flags.sum())} does not match "
                f"round(noise_rate * n) = {_round_half_up(self.noise_rate * n)}"
            )

    def subset(self, indices: np.ndarray) -> "PairedDataset":
        """Restrict to the given pair indices; requires the selected pairs
        to be self-contained (their assigned texts stay inside the subset)."""
        indices = np.asarray(indices, dtype=np.int64)
        pos = -np.ones(self.n, dtype=np.int64)
        pos[indices] = np.arange(indices.size)
        new_pairing = pos[self.pairing[indices]]
        if np.any(new_pairing < 0):
            raise ValueError("subset is not closed under the pairing permutation")
        flags = new_pairing != np.arange(indices.size)
        rate = float(flags.sum()) / indices.size if indices.size else 0.0
        return PairedDataset(
            images=self.images[indices].copy(),
            texts=self.texts[indices].copy(),
            pairing=new_pairing,
            noise_flags=flags,
            noise_rate=rate,
            seed=self.seed,
        )


def generate_bimodal(
    cfg: GenConfig,
    map_override: tuple[np.ndarray, np.ndarray] | None = None,
) -> PairedDataset:
    """Generate a clean paired dataset from a shared latent factor.

    Each pair shares a latent z ~ N(0, I); images are A @ z and texts B @ z
    plus isotropic noise of scale ``noise_std``, with A, B fixed random
    full-rank maps drawn once from the config seed. ``map_override`` replaces
    (A, B) for tests that need known geometry.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD47A)))
    z = rng.standard_normal((cfg.n, cfg.latent_dim))
    if map_override is not None:
        a, b = map_override
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != (cfg.d_v, cfg.latent_dim) or b.shape != (cfg.d_t, cfg.latent_dim):
            raise ValueError("map_override shapes must be (d_v, latent_dim), (d_t, latent_dim)")
    else:
        # Gaussian matrices are full rank almost surely; scale keeps outputs O(1).
        a = rng.standard_normal((cfg.d_v, cfg.latent_dim)) / np.sqrt(cfg.latent_dim)
        b = rng.standard_normal((cfg.d_t, cfg.latent_dim)) / np.sqrt(cfg.latent_dim)
    images = z @ a.T + cfg.noise_std * rng.standard_normal((cfg.n, cfg.d_v))
    texts = z @ b.T + cfg.noise_std * rng.standard_normal((cfg.n, cfg.d_t))
    return PairedDataset(
        images=images,
        texts=texts,
        pairing=np.arange(cfg.n, dtype=np.int64),
        noise_flags=np.zeros(cfg.n, dtype=bool),
        noise_rate=0.0,
        seed=cfg.seed,
    )


def _random_derangement(m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation of 0..m-1 with no fixed point (m >= 2)."""
    idx = np.arange(m)
    while True:
        perm = rng.permutation(m)
        if not np.any(perm == idx):
            return perm


def inject_noise(ds: PairedDataset, eta: float, seed: int) -> PairedDataset:
    """Mismatch round(eta * n) pairs by deranging their texts among themselves.

    Only clean (identity-paired) datasets can be injected; the derangement
    guarantees every selected pair is truly mismatched, so the realized noise
    rate is exactly round(eta * n) / n. When the selection would contain a
    single pair (no derangement exists) two pairs are mismatched instead and
    a warning is emitted.
    """
    n = ds.n
    if not (0.0 <= eta <= (n - 1) / n):
        raise ValueError(f"eta must be in [0, (n-1)/n] = [0, {(n - 1) / n:.6g}], got {eta}")
    if np.any(ds.pairing != np.arange(n)):
        raise ValueError("inject_noise requires a clean dataset (identity pairing)")

    m = _round_half_up(eta * n)
    if m == 1:
        warnings.warn("cannot mismatch exactly 1 pair (no derangement); mismatching 2 instead")
        m = 2
    pairing = np.arange(n, dtype=np.int64)
    if m > 0:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5EED)))
        selected = rng.choice(n, size=m, replace=False)
        pairing[selected] = selected[_random_derangement(m, rng)]
    flags = pairing != np.arange(n)
    out = PairedDataset(
        images=ds.images.copy(),
        texts=ds.texts.copy(),
        pairing=pairing,
        noise_flags=flags,
        noise_rate=m / n,
        seed=ds.seed,
    )
    out.validate()
    return out


def save_dataset(ds: PairedDataset, path) -> None:
    """Write the dataset in a self-describing little-endian binary format."""
    ds.validate()
    n, d_v = ds.images.shape
    d_t = ds.texts.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, d_v, d_t, ds.noise_rate, ds.seed))
        fh.write(np.ascontiguousarray(ds.images, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.texts, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.pairing, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(ds.noise_flags, dtype=np.uint8).tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise DatasetFormatError(f"truncated file while reading {what}", fh.tell())
    return buf


def load_dataset(path) -> PairedDataset:
    """Read a dataset written by :func:`save_dataset`; round-trips bit-exactly."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, "header")
        magic, version, n, d_v, d_t, noise_rate, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}", 0)
        if version != _VERSION:
            raise DatasetFormatError(f"unsupported version {version}", 8)
        images = np.frombuffer(_read_exact(fh, 8 * n * d_v, "images"), dtype="<f8").reshape(n, d_v)
        texts = np.frombuffer(_read_exact(fh, 8 * n * d_t, "texts"), dtype="<f8").reshape(n, d_t)
        pairing = np.frombuffer(_read_exact(fh, 8 * n, "pairing"), dtype="<i8")
        flags = np.frombuffer(_read_exact(fh, n, "noise_flags"), dtype=np.uint8)
        trailing = fh.read(1)
        if trailing:
            raise DatasetFormatError("trailing bytes after dataset payload", fh.tell() - 1)
    ds = PairedDataset(
        images=images.astype(np.float64),
        texts=texts.astype(np.float64),
        pairing=pairing.astype(np.int64),
        noise_flags=flags.astype(bool),
        noise_rate=noise_rate,
        seed=seed,
    )
    ds.validate()
    return ds
