"""Contrastive direction learning: view construction, EBM-NCE loss, training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, asdict, field

import numpy as np

from .autodiff import Graph, Node, OptimizerState, step
from .editing import STEP_GRID, VARIANTS, DirectionModel
from .rng import stream

log = logging.getLogger(__name__)


class InvalidConfig(ValueError):
    pass


class NoNegatives(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainConfig:
    n_directions: int = 8
    variant: str = "nonlinear"
    view_strategy: str = "perturbation"
    sigma: float = 0.1
    n_latents: int = 500
    epochs: int = 100
    batch_size: int | None = None
    lr: float = 1e-3
    optimizer: str = "adam"
    c1: float = 2.0
    c2: float = 1.0
    c3: float = 1.0
    negatives: int = 1
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.n_directions < 2:
            raise InvalidConfig("need at least 2 directions so that negatives with j != i exist")
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"unknown variant {self.variant!r}")
        if self.view_strategy not in ("perturbation", "random_pair"):
            raise InvalidConfig(f"unknown view strategy {self.view_strategy!r}")
        if self.view_strategy == "perturbation" and not self.sigma > 0:
            raise InvalidConfig("sigma must be positive for perturbation views")
        if self.negatives < 1:
            raise InvalidConfig("need at least one negative per positive")
        if self.epochs < 1 or self.n_latents < 1:
            raise InvalidConfig("epochs and n_latents must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidConfig("batch_size must be positive")
        if min(self.c1, self.c2, self.c3) < 0:
            raise InvalidConfig("loss coefficients must be non-negative")
        if self.optimizer not in ("sgd", "adam") or not self.lr > 0:
            raise InvalidConfig("optimizer must be sgd|adam with positive lr")
        return self

    def effective_batch(self, n_pairs: int) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return n_pairs if n_pairs <= 512 else 256


@dataclass
class ViewPair:
    zu: np.ndarray
    zv: np.ndarray


@dataclass
class Batch:
    """Explicit sample for one loss evaluation.

    ``neg_dir`` / ``neg_step`` are (B, nu) so each positive has nu negatives.
    """

    zu: np.ndarray
    zv: np.ndarray
    pos_dir: np.ndarray
    pos_step: np.ndarray
    neg_dir: np.ndarray
    neg_step: np.ndarray

    def __len__(self) -> int:
        return len(self.pos_dir)


def make_views(latents: np.ndarray, strategy: str, rng: np.random.Generator, sigma: float = 0.1) -> list[ViewPair]:
    zu, zv = make_view_arrays(latents, strategy, rng, sigma)
    return [ViewPair(u, v) for u, v in zip(zu, zv)]


def make_view_arrays(latents, strategy: str, rng: np.random.Generator, sigma: float = 0.1):
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2 or len(z) == 0:
        raise EmptyDataset("no latents to build views from")
    if strategy == "perturbation":
        if sigma < 0:
            raise InvalidConfig("sigma must be non-negative")
        eu = rng.standard_normal(z.shape)
        ev = rng.standard_normal(z.shape)
        return z + sigma * eu, z + sigma * ev
    if strategy == "random_pair":
        n = len(z)
        if n < 2:
            raise EmptyDataset("random_pair views need at least two latents")
        u = rng.integers(0, n, size=n)
        # offset in 1..n-1 guarantees v != u
        v = (u + rng.integers(1, n, size=n)) % n
        return z[u], z[v]
    raise InvalidConfig(f"unknown view strategy {strategy!r}")


def sample_batch(zu: np.ndarray, zv: np.ndarray, n_directions: int, nu: int, rng: np.random.Generator) -> Batch:
    """Draw (i, alpha) per pair and nu negatives (j, beta) with j != i and beta != alpha."""
    b = len(zu)
    n_steps = len(STEP_GRID)
    i = rng.integers(0, n_directions, size=b)
    a = rng.integers(0, n_steps, size=b)
    j = (i[:, None] + rng.integers(1, n_directions, size=(b, nu))) % n_directions
    beta = (a[:, None] + rng.integers(1, n_steps, size=(b, nu))) % n_steps
    return Batch(zu, zv, i, STEP_GRID[a], j, STEP_GRID[beta])


def energy(za, zb) -> float:
    za, zb = np.asarray(za, dtype=np.float64), np.asarray(zb, dtype=np.float64)
    if za.shape != zb.shape:
        from .dgm import DimensionMismatch

        raise DimensionMismatch(f"{za.shape} vs {zb.shape}")
    return float(np.dot(za, zb))


def nce_terms(g: Graph, f_pos_uv: Node, f_pos_vu: Node, f_neg_u: list[Node], f_neg_v: list[Node]) -> Node:
    """Per-pair EBM-NCE loss (B,) from positive and negative energies."""
    if not f_neg_u:
        raise NoNegatives("at least one negative is required")
    pos = g.add(g.log_sigmoid(f_pos_uv), g.log_sigmoid(f_pos_vu))
    neg = None
    for fu, fv in zip(f_neg_u, f_neg_v):
        # log(1 - sigmoid(f)) == log_sigmoid(-f)
        term = g.add(g.log_sigmoid(-fu), g.log_sigmoid(-fv))
        neg = term if neg is None else g.add(neg, term)
    neg = g.scale(neg, 1.0 / len(f_neg_u))
    return g.scale(g.add(pos, neg), -1.0)


def nce_from_energies(f_pos_uv, f_pos_vu, f_neg_u, f_neg_v) -> np.ndarray:
    """Numpy entry point: energies arrays (B,), negatives (B, nu)."""
    g = Graph()
    f_neg_u = np.atleast_2d(np.asarray(f_neg_u, dtype=np.float64))
    f_neg_v = np.atleast_2d(np.asarray(f_neg_v, dtype=np.float64))
    if f_neg_u.size == 0:
        raise NoNegatives("at least one negative is required")
    out = nce_terms(
        g, g.const(np.atleast_1d(f_pos_uv)), g.const(np.atleast_1d(f_pos_vu)),
        [g.const(c) for c in f_neg_u.T], [g.const(c) for c in f_neg_v.T],
    )
    return np.array(out.value)


def batch_nce(g: Graph, model: DirectionModel, p: dict[str, Node], dirs: Node, batch: Batch) -> Node:
    zu, zv = g.const(batch.zu), g.const(batch.zv)
    d_pos = g.gather(dirs, batch.pos_dir)
    zu_pos = model.edit_nodes(g, p, zu, d_pos, batch.pos_step)
    zv_pos = model.edit_nodes(g, p, zv, d_pos, batch.pos_step)
    f_uv = g.dot(zu_pos, zv_pos)
    f_vu = g.dot(zv_pos, zu_pos)
    f_neg_u, f_neg_v = [], []
    n_neg = batch.neg_dir.shape[1] if batch.neg_dir.ndim == 2 else 0
    if n_neg == 0:
        raise NoNegatives("at least one negative is required")
    if np.any(batch.neg_dir == batch.pos_dir[:, None]) or np.any(batch.neg_step == batch.pos_step[:, None]):
        raise ValueError("negatives must differ from the positive in both direction and step")
    for r in range(n_neg):
        d_neg = g.gather(dirs, batch.neg_dir[:, r])
        zu_neg = model.edit_nodes(g, p, zu, d_neg, batch.neg_step[:, r])
        zv_neg = model.edit_nodes(g, p, zv, d_neg, batch.neg_step[:, r])
        f_neg_u.append(g.dot(zu_neg, zv_pos))
        f_neg_v.append(g.dot(zv_neg, zu_pos))
    return g.mean(nce_terms(g, f_uv, f_vu, f_neg_u, f_neg_v))


def sim_node(g: Graph, dirs: Node) -> Node:
    """Mean pairwise dot product over i < j."""
    n = dirs.shape[0]
    if n < 2:
        raise InvalidConfig("similarity needs at least two directions")
    total = g.sum(dirs, axis=0)
    all_pairs = g.dot(total, total)
    diag = g.sum(g.mul(dirs, dirs))
    return g.scale(g.sub(all_pairs, diag), 1.0 / (n * (n - 1)))


def sparsity_node(g: Graph, dirs: Node) -> Node:
    """Mean L1 norm of the directions."""
    return g.scale(g.sum(g.abs(dirs)), 1.0 / dirs.shape[0])


def sim_loss(model_or_dirs) -> float:
    dirs = _dirs(model_or_dirs)
    g = Graph()
    return float(sim_node(g, g.const(dirs)).value)


def sparsity_loss(model_or_dirs) -> float:
    dirs = _dirs(model_or_dirs)
    g = Graph()
    return float(sparsity_node(g, g.const(dirs)).value)


def _dirs(x) -> np.ndarray:
    return x.directions() if isinstance(x, DirectionModel) else np.atleast_2d(np.asarray(x, dtype=np.float64))


@dataclass
class LossParts:
    total: Node
    nce: Node | None
    sim: Node | None
    sparsity: Node | None


def total_loss_graph(g: Graph, batch: Batch, model: DirectionModel, config: TrainConfig) -> tuple[LossParts, dict[str, Node]]:
    p = model.bind(g)
    terms = []
    nce = sim = sparsity = None
    if config.c1 or config.c2 or config.c3:
        dirs = model.direction_nodes(g, p)
        if config.c1:
            nce = batch_nce(g, model, p, dirs, batch)
            terms.append(g.scale(nce, config.c1))
        if config.c2:
            sim = sim_node(g, dirs)
            terms.append(g.scale(sim, config.c2))
        if config.c3:
            sparsity = sparsity_node(g, dirs)
            terms.append(g.scale(sparsity, config.c3))
    total = terms[0] if terms else g.const(0.0)
    for t in terms[1:]:
        total = g.add(total, t)
    return LossParts(total, nce, sim, sparsity), p


def total_loss(batch: Batch, model: DirectionModel, config: TrainConfig) -> float:
    g = Graph()
    parts, _ = total_loss_graph(g, batch, model, config)
    return float(parts.total.value)


def loss_and_grad(batch: Batch, model: DirectionModel, config: TrainConfig):
    g = Graph()
    parts, _ = total_loss_graph(g, batch, model, config)
    if parts.total.op == "const":
        return parts, {k: np.zeros_like(v) for k, v in model.params.items()}
    return parts, g.backward(parts.total)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    sim_loss: float
    sparsity_loss: float


@dataclass
class TrainResult:
    model: DirectionModel
    trace: list[EpochRecord] = field(default_factory=list)


def train(config: TrainConfig, latents: np.ndarray) -> TrainResult:
    """Learn directions on ``latents``; fully deterministic given ``config.seed``."""
    config.validate()
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or len(latents) == 0:
        raise EmptyDataset("no latents to train on")
    if config.view_strategy == "random_pair" and len(latents) < 2:
        raise EmptyDataset("random_pair views need at least two latents")
    k = latents.shape[1]
    model = DirectionModel.init(config.variant, k, config.n_directions, config.seed)
    basis_digest = model.basis_digest()
    opt = OptimizerState(kind=config.optimizer, lr=config.lr)
    view_rng = stream(config.seed, "views")
    neg_rng = stream(config.seed, "negatives")
    result = TrainResult(model)
    for epoch in range(config.epochs):
        zu, zv = make_view_arrays(latents, config.view_strategy, view_rng, config.sigma)
        order = view_rng.permutation(len(zu))
        bs = config.effective_batch(len(zu))
        losses, sims, sparsities, weights = [], [], [], []
        for start in range(0, len(order), bs):
            idx = order[start : start + bs]
            batch = sample_batch(zu[idx], zv[idx], config.n_directions, config.negatives, neg_rng)
            parts, grads = loss_and_grad(batch, model, config)
            model.params, opt = step(opt, model.params, grads)
            losses.append(float(parts.total.value))
            weights.append(len(idx))
        dirs = model.directions()
        rec = EpochRecord(
            epoch,
            float(np.average(losses, weights=weights)),
            sim_loss(dirs),
            sparsity_loss(dirs),
        )
        result.trace.append(rec)
        log.debug("epoch %d loss %.6f", epoch, rec.mean_loss)
    if model.basis_digest() != basis_digest:
        raise RuntimeError("basis vectors changed during training")
    return result


def write_trace(trace: list[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "sim_loss", "sparsity_loss"])
        for r in trace:
            w.writerow([r.epoch, repr(r.mean_loss), repr(r.sim_loss), repr(r.sparsity_loss)])


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
