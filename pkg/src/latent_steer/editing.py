"""Direction parameterizations and latent editing functions.

Three variants share a frozen Gaussian basis ``e_i`` and differ in the map to
``d_i`` and in the edit:

``linear01``   d = l2norm(Linear(e));               z' = z + a*d
``linear02``   d = sqrt(l1norm(relu(Linear(e))));   z' = z + a*d
``nonlinear``  d = l2norm(Linear(relu(Linear(e)))); z' = z + a*d + l2norm(MLP(z ++ d ++ [a]))
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, Node
from .rng import stream

VARIANTS = ("linear01", "linear02", "nonlinear")

# -3.0, -2.7, ..., 3.0 built from integers so every entry is the nearest double
STEP_GRID = np.array([k * 3 / 10 for k in range(-10, 11)], dtype=np.float64)
STEP_GRID.setflags(write=False)
ANCHOR_INDEX = 10


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class DirectionModel:
    variant: str
    latent_dim: int
    n_directions: int
    seed: int
    basis: np.ndarray
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, variant: str, latent_dim: int, n_directions: int, seed: int = 0) -> "DirectionModel":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        rng = stream(seed, "init")
        k = latent_dim
        basis = rng.standard_normal((n_directions, k))
        basis.setflags(write=False)
        if variant == "nonlinear":
            params = {
                "dir_w1": _uniform(rng, (k, k), k),
                "dir_b1": _uniform(rng, (k,), k),
                "dir_w2": _uniform(rng, (k, k), k),
                "dir_b2": _uniform(rng, (k,), k),
                "edit_w1": _uniform(rng, (k, 2 * k + 1), 2 * k + 1),
                "edit_b1": _uniform(rng, (k,), 2 * k + 1),
                "edit_w2": _uniform(rng, (k, k), k),
                "edit_b2": _uniform(rng, (k,), k),
            }
        else:
            while True:
                params = {"dir_w": _uniform(rng, (k, k), k), "dir_b": _uniform(rng, (k,), k)}
                if variant == "linear01":
                    break
                # redraw until no direction starts with a dead relu layer
                pre = basis @ params["dir_w"].T + params["dir_b"]
                if np.all(pre.max(axis=1) > 0):
                    break
        return cls(variant, latent_dim, n_directions, seed, basis, params)

    @property
    def linear(self) -> bool:
        return self.variant != "nonlinear"

    def basis_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.basis).tobytes()).hexdigest()

    # -- graph builders -----------------------------------------------------
    def bind(self, g: Graph) -> dict[str, Node]:
        return {name: g.param(name, value) for name, value in self.params.items()}

    def direction_nodes(self, g: Graph, p: dict[str, Node]) -> Node:
        """(D, K) matrix of directions on graph ``g``."""
        e = g.const(self.basis)
        if self.variant == "linear01":
            return g.l2_normalize(g.linear(e, p["dir_w"], p["dir_b"]))
        if self.variant == "linear02":
            return g.sqrt(g.l1_normalize(g.relu(g.linear(e, p["dir_w"], p["dir_b"]))))
        h = g.relu(g.linear(e, p["dir_w1"], p["dir_b1"]))
        return g.l2_normalize(g.linear(h, p["dir_w2"], p["dir_b2"]))

    def edit_nodes(self, g: Graph, p: dict[str, Node], z: Node, d: Node, alpha: np.ndarray) -> Node:
        """Row-batched edit of codes ``z`` (B, K) along rows of ``d`` (B, K) by ``alpha`` (B,)."""
        alpha = np.asarray(alpha, dtype=np.float64)
        out = g.add(z, g.scale_rows(d, alpha))
        if self.linear:
            return out
        x = g.concat([z, d, g.const(alpha[:, None])], axis=1)
        h = g.relu(g.linear(x, p["edit_w1"], p["edit_b1"]))
        return g.add(out, g.l2_normalize(g.linear(h, p["edit_w2"], p["edit_b2"])))

    # -- numpy-level API ----------------------------------------------------
    def directions(self) -> np.ndarray:
        g = Graph()
        return np.array(self.direction_nodes(g, self.bind(g)).value)

    def direction(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n_directions:
            raise IndexError(f"direction index {i} out of range")
        return self.directions()[i]

    def edit_batch(self, z: np.ndarray, i: int, alphas: np.ndarray) -> np.ndarray:
        """Edit one code along direction ``i`` for every step in ``alphas``."""
        if not 0 <= i < self.n_directions:
            raise IndexError(f"direction index {i} out of range")
        z = np.asarray(z, dtype=np.float64)
        alphas = np.asarray(alphas, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise ValueError(f"expected latent shape ({self.latent_dim},)")
        g = Graph()
        p = self.bind(g)
        dirs = self.direction_nodes(g, p)
        n = len(alphas)
        zz = g.const(np.broadcast_to(z, (n, self.latent_dim)))
        d = g.gather(dirs, np.full(n, i))
        return np.array(self.edit_nodes(g, p, zz, d, alphas).value)

    def edit(self, z, i: int, alpha: float) -> np.ndarray:
        if not np.isfinite(alpha):
            raise ValueError("step size must be finite")
        return self.edit_batch(z, i, np.array([alpha]))[0]

    # -- persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "K": self.latent_dim,
            "D": self.n_directions,
            "seed": self.seed,
            "basis": self.basis.tolist(),
            "weights": {k: np.asarray(v).tolist() for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DirectionModel":
        basis = np.array(d["basis"], dtype=np.float64).reshape(d["D"], d["K"])
        basis.setflags(write=False)
        params = {k: np.array(v, dtype=np.float64) for k, v in d["weights"].items()}
        return cls(d["variant"], d["K"], d["D"], d["seed"], basis, params)


def dump_json(obj: dict, path) -> None:
    """Deterministic JSON; floats use Python's shortest round-trip repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
