"""Unsupervised baseline direction finders: Random, Variance, SeFa (latent PCA)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class InsufficientData(ValueError):
    pass


class EigenFailure(ArithmeticError):
    pass


@dataclass
class BaselineDirections:
    vectors: np.ndarray
    tag: str
    seed: int | None = None
    eigenvalues: np.ndarray | None = None

    variant = "baseline"
    linear = True

    @property
    def n_directions(self) -> int:
        return self.vectors.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.vectors.shape[1]

    def directions(self) -> np.ndarray:
        return self.vectors

    def direction(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n_directions:
            raise IndexError(f"direction index {i} out of range")
        return self.vectors[i]

    def edit_batch(self, z, i: int, alphas) -> np.ndarray:
        d = self.direction(i)
        return np.asarray(z, dtype=np.float64)[None, :] + np.asarray(alphas, dtype=np.float64)[:, None] * d[None, :]

    def edit(self, z, i: int, alpha: float) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) + alpha * self.direction(i)

    def to_dict(self) -> dict:
        out = {
            "variant": "baseline",
            "method": self.tag,
            "K": self.latent_dim,
            "D": self.n_directions,
            "seed": self.seed,
            "basis": [],
            "weights": {"directions": self.vectors.tolist()},
        }
        if self.eigenvalues is not None:
            out["eigenvalues"] = self.eigenvalues.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineDirections":
        vecs = np.array(d["weights"]["directions"], dtype=np.float64).reshape(d["D"], d["K"])
        ev = d.get("eigenvalues")
        return cls(vecs, d["method"], d.get("seed"), None if ev is None else np.array(ev))


def random_directions(k: int, d: int, seed: int) -> BaselineDirections:
    if k < 1 or d < 1:
        raise ValueError("need K >= 1 and D >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((d, k))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norms == 0):  # measure-zero, but keep the unit-norm contract
        v = rng.standard_normal((d, k))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return BaselineDirections(v / norms, "random", seed)


def _check(latents, d: int) -> np.ndarray:
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InsufficientData("need at least two latent codes")
    if not 1 <= d <= z.shape[1]:
        raise InsufficientData(f"D={d} must be in 1..K={z.shape[1]}")
    return z


def variance_directions(latents, d: int) -> BaselineDirections:
    """One-hot vectors on the D highest-variance latent dimensions (ties -> lower index)."""
    z = _check(latents, d)
    var = z.var(axis=0)
    order = np.argsort(-var, kind="stable")[:d]
    return BaselineDirections(np.eye(z.shape[1])[order], "variance")


def sefa_directions(latents, d: int) -> BaselineDirections:
    """Top-D principal axes of the latent codes."""
    z = _check(latents, d)
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / (len(z) - 1)
    try:
        w, v = kernels.jacobi_eigh(cov)
    except ArithmeticError as exc:
        raise EigenFailure(str(exc)) from None
    order = np.argsort(-w, kind="stable")[:d]
    vecs = v[:, order].T.copy()
    for r in range(d):
        vecs[r] /= np.linalg.norm(vecs[r])
        if vecs[r, np.argmax(np.abs(vecs[r]))] < 0:
            vecs[r] = -vecs[r]
    return BaselineDirections(vecs, "sefa", eigenvalues=w[order])
