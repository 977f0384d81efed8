"""Generative-model interface and a synthetic entangled motif generator.

The synthetic decoder maps a latent code to per-motif counts through a
rotation ``Q``: ``count_j = clip(floor(a_j * (Q z)_j + b_j), 0, T_max + 2)``.
Factor axes are therefore rotated mixtures of latent axes unless ``Q`` is the
identity (the axis-aligned control).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class UnknownProperty(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width bit set; bit ``j * t_max + t - 1`` means motif j occurs at least t times."""

    bits: int
    width: int

    def __post_init__(self) -> None:
        if self.bits < 0 or self.bits >> self.width:
            raise ValueError("bits exceed fingerprint width")

    @property
    def n_words(self) -> int:
        return max(1, -(-self.width // 64))

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def on_bits(self) -> list[int]:
        return [k for k in range(self.width) if self.bits >> k & 1]

    def words(self) -> np.ndarray:
        mask = (1 << 64) - 1
        return np.array(
            [(self.bits >> (64 * w)) & mask for w in range(self.n_words)], dtype=np.uint64
        )

    def to_hex(self) -> str:
        return format(self.bits, f"0{max(1, -(-self.width // 4))}x")

    @classmethod
    def from_hex(cls, text: str, width: int) -> "Fingerprint":
        return cls(int(text, 16), width)

    @classmethod
    def from_bits(cls, on: Sequence[int], width: int) -> "Fingerprint":
        bits = 0
        for k in on:
            if not 0 <= k < width:
                raise ValueError(f"bit {k} outside width {width}")
            bits |= 1 << k
        return cls(bits, width)

    @classmethod
    def from_counts(cls, counts: Sequence[int], t_max: int) -> "Fingerprint":
        bits = 0
        for j, c in enumerate(counts):
            run = min(int(c), t_max)
            if run > 0:
                bits |= ((1 << run) - 1) << (j * t_max)
        return cls(bits, len(counts) * t_max)


@dataclass(frozen=True)
class GraphObject:
    motif_counts: tuple[int, ...]
    fingerprint: Fingerprint


class GenerativeModel(Protocol):
    latent_dim: int

    def sample_prior(self, n: int, seed: int) -> np.ndarray: ...

    def decode(self, z) -> GraphObject: ...


def random_rotation(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random orthogonal matrix: QR of a Gaussian matrix with sign-fixed R diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs[None, :]


class SyntheticDgm:
    """Latent-to-motif-count decoder with a known factor structure.

    Parameters
    ----------
    latent_dim, n_factors:
        K and F, with F <= K.
    rotate:
        If False the factor axes are the first F latent axes.
    """

    def __init__(
        self,
        latent_dim: int = 8,
        n_factors: int = 8,
        t_max: int = 4,
        scale: float | Sequence[float] = 1.5,
        offset: float | Sequence[float] = 2.0,
        seed: int = 0,
        rotate: bool = True,
        mixing: np.ndarray | None = None,
    ) -> None:
        if not 1 <= n_factors <= latent_dim:
            raise ValueError("need 1 <= n_factors <= latent_dim")
        if t_max < 1:
            raise ValueError("t_max must be >= 1")
        self.latent_dim = latent_dim
        self.n_factors = n_factors
        self.t_max = t_max
        self.seed = seed
        self.rotate = rotate
        self.scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (n_factors,)).copy()
        self.offset = np.broadcast_to(np.asarray(offset, dtype=np.float64), (n_factors,)).copy()
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")
        if mixing is not None:
            q = np.array(mixing, dtype=np.float64)
            if q.shape != (n_factors, latent_dim):
                raise DimensionMismatch(f"mixing must be {(n_factors, latent_dim)}")
        elif rotate:
            from .rng import stream

            q = random_rotation(latent_dim, stream(seed, "dgm"))[:n_factors]
        else:
            q = np.eye(latent_dim)[:n_factors]
        gram = q @ q.T
        if np.max(np.abs(gram - np.eye(n_factors))) > 1e-9:
            raise ValueError("mixing rows are not orthonormal")
        q.setflags(write=False)
        self.mixing = q
        for arr in (self.scale, self.offset):
            arr.setflags(write=False)

    @property
    def fingerprint_width(self) -> int:
        return self.n_factors * self.t_max

    def sample_prior(self, n: int, seed: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        return np.random.default_rng(seed).standard_normal((n, self.latent_dim))

    def counts(self, z: np.ndarray) -> np.ndarray:
        """Vectorized motif counts for a (N, K) batch or a single K-vector."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.latent_dim:
            raise DimensionMismatch(f"expected latent dim {self.latent_dim}, got {z.shape[-1]}")
        raw = np.floor(self.scale * (z @ self.mixing.T) + self.offset)
        return np.clip(raw, 0, self.t_max + 2).astype(np.int64)

    def decode(self, z) -> GraphObject:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise DimensionMismatch(f"expected shape ({self.latent_dim},), got {z.shape}")
        c = tuple(int(v) for v in self.counts(z))
        return GraphObject(c, Fingerprint.from_counts(c, self.t_max))

    def decode_batch(self, z: np.ndarray) -> list[GraphObject]:
        return [
            GraphObject(tuple(row), Fingerprint.from_counts(row, self.t_max))
            for row in self.counts(z).tolist()
        ]

    def fingerprint_words(self, counts: np.ndarray) -> np.ndarray:
        """Packed uint64 fingerprints for a (N, F) count matrix."""
        counts = np.asarray(counts)
        n = counts.shape[0]
        n_words = max(1, -(-self.fingerprint_width // 64))
        levels = np.arange(1, self.t_max + 1)
        on = (counts[:, :, None] >= levels[None, None, :]).reshape(n, -1)
        padded = np.zeros((n, n_words * 64), dtype=np.uint64)
        padded[:, : on.shape[1]] = on
        weights = np.left_shift(np.uint64(1), np.arange(64, dtype=np.uint64))
        return (padded.reshape(n, n_words, 64) * weights).sum(axis=2, dtype=np.uint64)

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "n_factors": self.n_factors,
            "t_max": self.t_max,
            "scale": self.scale.tolist(),
            "offset": self.offset.tolist(),
            "seed": self.seed,
            "rotate": self.rotate,
            "mixing": self.mixing.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDgm":
        return cls(
            d["latent_dim"], d["n_factors"], d["t_max"], d["scale"], d["offset"],
            seed=d["seed"], rotate=d["rotate"], mixing=np.array(d["mixing"]),
        )


def factor_labels(objects: Sequence[GraphObject] | np.ndarray) -> np.ndarray:
    """Binary labels: 1 where a motif count is strictly above its dataset median."""
    if isinstance(objects, np.ndarray):
        counts = objects
    else:
        counts = np.array([o.motif_counts for o in objects])
    if counts.ndim != 2 or counts.shape[0] < 2:
        raise EmptyDataset("need at least two objects to binarize factors")
    med = np.median(counts, axis=0)
    return (counts > med[None, :]).astype(np.int64)


def property_value(obj: GraphObject, kind: str, weights: Sequence[float] | None = None) -> float:
    counts = np.asarray(obj.motif_counts, dtype=np.float64)
    if kind == "total_count":
        return float(counts.sum())
    if kind == "weighted_count":
        if weights is None or len(weights) != len(counts):
            raise UnknownProperty("weighted_count needs one weight per motif")
        return float(np.dot(np.asarray(weights, dtype=np.float64), counts))
    raise UnknownProperty(f"unknown property {kind!r}")


def write_dataset(path: str | Path, z: np.ndarray, objects: Sequence[GraphObject]) -> None:
    """JSON lines: ``{"z": [...], "counts": [...], "fingerprint": "<hex>"}``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, obj in zip(np.asarray(z).tolist(), objects):
            rec = {"z": row, "counts": list(obj.motif_counts), "fingerprint": obj.fingerprint.to_hex()}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_dataset(path: str | Path, t_max: int) -> tuple[np.ndarray, list[GraphObject]]:
    zs, objs = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            counts = tuple(int(c) for c in rec["counts"])
            fp = Fingerprint.from_hex(rec["fingerprint"], len(counts) * t_max)
            zs.append(rec["z"])
            objs.append(GraphObject(counts, fp))
    z = np.array(zs, dtype=np.float64).reshape(len(zs), -1) if zs else np.zeros((0, 0))
    return z, objs
