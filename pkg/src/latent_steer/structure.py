"""Editing sequences and sequence-monotonicity scoring on calibrated Tanimoto similarity."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from itertools import product
from typing import Protocol, Sequence

import numpy as np

from . import kernels
from .dgm import Fingerprint, GraphObject, SyntheticDgm, UnknownProperty, property_value
from .editing import ANCHOR_INDEX, STEP_GRID

DEFAULT_GAMMAS = (2, 3, 4)
DEFAULT_TAUS = (0.0, 0.2)
DEFAULT_TOP_KS = (1, 2, 3)
MONOTONE_TOL = 1e-12
DISTINCT_DECIMALS = 6


class WidthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class KOutOfRange(ValueError):
    pass


class Editor(Protocol):
    n_directions: int
    linear: bool

    def edit_batch(self, z, i: int, alphas) -> np.ndarray: ...


@dataclass
class EditSequence:
    direction: int
    steps: np.ndarray
    anchor: GraphObject
    objects: list[GraphObject]
    latents: np.ndarray
    cts: np.ndarray | None = None


def generate_sequence(dgm: SyntheticDgm, editor: Editor, i: int, z) -> EditSequence:
    """Decode the 21-step edit of ``z`` along direction ``i``."""
    edited = editor.edit_batch(z, i, STEP_GRID)
    objects = dgm.decode_batch(edited)
    anchor = objects[ANCHOR_INDEX]
    seq = EditSequence(i, STEP_GRID.copy(), anchor, objects, edited)
    seq.cts = cts(seq)
    return seq


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise WidthMismatch(f"{a.width} vs {b.width}")
    union = bin(a.bits | b.bits).count("1")
    if union == 0:
        return 1.0
    return bin(a.bits & b.bits).count("1") / union


def calibrate(sims: np.ndarray, steps: np.ndarray = STEP_GRID) -> np.ndarray:
    """Raw similarity for steps <= 0, ``2 - s`` for positive steps."""
    sims = np.asarray(sims, dtype=np.float64)
    return np.where(np.asarray(steps) > 0, 2.0 - sims, sims)


def cts(seq: EditSequence) -> np.ndarray:
    words = np.stack([o.fingerprint.words() for o in seq.objects])
    sims = kernels.tanimoto_rows(words, seq.anchor.fingerprint.words())
    return calibrate(sims, seq.steps)


def monotonic_tau(values: Sequence[float], tau: float) -> bool:
    v = np.asarray(values, dtype=np.float64)
    if len(v) <= 1:
        return True
    bad = int(np.sum(v[1:] < v[:-1] - MONOTONE_TOL))
    return bad / (len(v) - 1) <= tau


def smr_sequence(values: Sequence[float], gamma: int, tau: float) -> int:
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    v = np.round(np.asarray(values, dtype=np.float64), DISTINCT_DECIMALS)
    return int(kernels.smr_rows(np.ascontiguousarray(v[None, :]), gamma, tau)[0])


def smr_many(values: np.ndarray, gamma: int, tau: float) -> np.ndarray:
    """Vectorized :func:`smr_sequence` over the rows of an (M, L) array."""
    v = np.round(np.asarray(values, dtype=np.float64), DISTINCT_DECIMALS)
    return kernels.smr_rows(np.ascontiguousarray(v), gamma, tau)


def smr_direction(sequences: Sequence, gamma: int, tau: float) -> float:
    if len(sequences) == 0:
        raise EmptyInput("no sequences for this direction")
    rows = np.stack([s.cts if isinstance(s, EditSequence) else np.asarray(s, dtype=np.float64) for s in sequences])
    return float(np.mean(smr_many(rows, gamma, tau)))


def top_k(ratios: Sequence[float], k: int) -> float:
    r = np.asarray(ratios, dtype=np.float64)
    if not 1 <= k <= len(r):
        raise KOutOfRange(f"K={k} must be in 1..{len(r)}")
    return float(np.mean(np.sort(r)[::-1][:k]))


def calibrate_property(values: Sequence[float], anchor_value: float, steps=STEP_GRID) -> np.ndarray:
    """Property analogue of CTS.

    Closeness to the anchor, ``p_a - |p - p_a|``, plays the role of similarity;
    positive-step entries are then reflected about ``p_a``. Monotone property
    curves map to monotone calibrated curves in either orientation.
    """
    p = np.asarray(values, dtype=np.float64)
    closeness = anchor_value - np.abs(p - anchor_value)
    return np.where(np.asarray(steps) > 0, 2.0 * anchor_value - closeness, closeness)


def property_smr(
    sequences_by_direction: Sequence[Sequence[EditSequence]],
    kind: str,
    gamma: int,
    tau: float,
    weights=None,
) -> list[float]:
    out = []
    for seqs in sequences_by_direction:
        if len(seqs) == 0:
            raise EmptyInput("no sequences for this direction")
        rows = []
        for s in seqs:
            vals = [property_value(o, kind, weights) for o in s.objects]
            rows.append(calibrate_property(vals, property_value(s.anchor, kind, weights), s.steps))
        out.append(float(np.mean(smr_many(np.stack(rows), gamma, tau))))
    return out


@dataclass
class SmrReport:
    method: str
    n_directions: int
    m: int
    gammas: tuple[int, ...]
    taus: tuple[float, ...]
    top_ks: tuple[int, ...]
    ratios: dict[tuple[int, float], list[float]] = field(default_factory=dict)
    config_hash: str = ""
    seed: int | None = None

    def top(self, gamma: int, tau: float, k: int) -> float:
        return top_k(self.ratios[(gamma, tau)], k)

    def to_dict(self) -> dict:
        per_dir = [
            {"gamma": g, "tau": t, "direction": i, "smr": r}
            for (g, t), rs in self.ratios.items()
            for i, r in enumerate(rs)
        ]
        tops = [
            {"gamma": g, "tau": t, "K": k, "value": self.top(g, t, k)}
            for (g, t) in self.ratios
            for k in self.top_ks
            if k <= self.n_directions
        ]
        return {
            "method": self.method,
            "D": self.n_directions,
            "M": self.m,
            "grid": {"gamma": list(self.gammas), "tau": list(self.taus), "K": list(self.top_ks)},
            "per_direction": per_dir,
            "top_k": tops,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmrReport":
        grid = d["grid"]
        rep = cls(
            d["method"], d["D"], d["M"], tuple(grid["gamma"]), tuple(float(t) for t in grid["tau"]),
            tuple(grid["K"]), config_hash=d.get("config_hash", ""), seed=d.get("seed"),
        )
        for e in d["per_direction"]:
            rep.ratios.setdefault((e["gamma"], float(e["tau"])), [0.0] * rep.n_directions)[e["direction"]] = e["smr"]
        return rep


def sequences_for(dgm: SyntheticDgm, editor: Editor, anchors: np.ndarray, i: int) -> list[EditSequence]:
    return [generate_sequence(dgm, editor, i, z) for z in anchors]


def evaluate_smr(
    dgm: SyntheticDgm,
    editor: Editor,
    anchors: np.ndarray,
    method: str = "",
    gammas=DEFAULT_GAMMAS,
    taus=DEFAULT_TAUS,
    top_ks=DEFAULT_TOP_KS,
    executor=None,
) -> tuple[SmrReport, list[list[EditSequence]]]:
    """Score every direction of ``editor`` on sequences started from ``anchors``.

    ``executor`` (optional, ``concurrent.futures``-style) parallelizes over
    directions; results are collected in direction order.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    if len(anchors) == 0:
        raise EmptyInput("need at least one anchor")
    dirs = range(editor.n_directions)
    if executor is None:
        all_seqs = [sequences_for(dgm, editor, anchors, i) for i in dirs]
    else:
        all_seqs = list(executor.map(lambda i: sequences_for(dgm, editor, anchors, i), dirs))
    rep = SmrReport(method, editor.n_directions, len(anchors), tuple(gammas), tuple(float(t) for t in taus), tuple(top_ks))
    for g, t in product(gammas, taus):
        rep.ratios[(g, float(t))] = [smr_direction(seqs, g, t) for seqs in all_seqs]
    return rep, all_seqs


def write_sequences_csv(path, all_seqs: list[list[EditSequence]], properties: Sequence[str] = ("total_count",)) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["direction", "seq_id", "step", "cts", *properties])
        for seqs in all_seqs:
            for m, s in enumerate(seqs):
                for step, c, obj in zip(s.steps, s.cts, s.objects):
                    w.writerow([s.direction, m, repr(float(step)), repr(float(c)),
                                *(repr(property_value(obj, p)) for p in properties)])


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
