"""Disentanglement scores of a latent representation against binary factor labels.

MIG, DCI disentanglement, Modularity and SAP are computed from per-(dimension,
factor) statistic matrices; BetaVAE and FactorVAE scores use observational
subsampling of rows that share a factor value.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_BINS = 20


class DegenerateColumn(UserWarning):
    pass


class AllZeroImportance(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


def discretize(x: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-width bin indices over [min(x), max(x)]."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(len(x), dtype=np.int64)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def mi_from_joint(joint: np.ndarray) -> float:
    """Plug-in mutual information (nats) of a joint count table."""
    joint = np.asarray(joint, dtype=np.float64)
    n = joint.sum()
    if n == 0:
        return 0.0
    pxy = joint / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(max(0.0, np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz]))))


def discretized_mi(x, y, bins: int = DEFAULT_BINS) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(x) != len(y):
        raise ValueError("x and y must have equal length")
    if x.min() == x.max() or len(np.unique(y)) < 2:
        warnings.warn("constant column; mutual information set to 0", DegenerateColumn, stacklevel=2)
        return 0.0
    _, yb = np.unique(y, return_inverse=True)
    joint = kernels.joint_histogram(
        np.ascontiguousarray(discretize(x, bins)), np.ascontiguousarray(yb.astype(np.int64)), bins, int(yb.max()) + 1
    )
    return mi_from_joint(joint)


def _validate(rep, factors, warn: list[str] | None = None):
    rep = np.asarray(rep, dtype=np.float64)
    factors = np.asarray(factors)
    if rep.ndim != 2 or factors.ndim != 2 or len(rep) != len(factors):
        raise ValueError("rep (N, K) and factors (N, F) must share N")
    if np.isnan(rep).any():
        raise ValueError("representation contains NaN")
    if len(rep) < 100:
        _warn(warn, f"only {len(rep)} samples; metrics unreliable below 100")
    keep = [f for f in range(factors.shape[1]) if len(np.unique(factors[:, f])) == 2]
    for f in range(factors.shape[1]):
        if f not in keep:
            _warn(warn, f"factor {f} has a single class; skipped")
    return rep, factors[:, keep]


def _warn(sink: list[str] | None, msg: str) -> None:
    if sink is not None:
        sink.append(msg)
    warnings.warn(msg, DegenerateColumn, stacklevel=3)


def mi_matrix(rep, factors, bins: int = DEFAULT_BINS) -> np.ndarray:
    """(K, F) matrix of MI between each latent dimension and each factor."""
    rep = np.asarray(rep, dtype=np.float64)
    factors = np.asarray(factors)
    k, f = rep.shape[1], factors.shape[1]
    out = np.zeros((k, f))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateColumn)
        for a in range(k):
            for b in range(f):
                out[a, b] = discretized_mi(rep[:, a], factors[:, b], bins)
    return out


def mig(rep, factors, bins: int = DEFAULT_BINS, warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    if rep.shape[1] < 2:
        raise ValueError("MIG needs at least two latent dimensions")
    m = mi_matrix(rep, factors, bins)
    h = np.array([entropy(factors[:, f]) for f in range(factors.shape[1])])
    srt = np.sort(m, axis=0)[::-1]
    return float(np.mean((srt[0] - srt[1]) / h))


def dci_from_importance(importance: np.ndarray) -> float:
    r = np.asarray(importance, dtype=np.float64)
    total = r.sum()
    if total <= 0:
        raise AllZeroImportance("importance matrix is all zero")
    n_factors = r.shape[1]
    row_sum = r.sum(axis=1)
    scores = np.zeros(r.shape[0])
    for k in range(r.shape[0]):
        if row_sum[k] == 0:
            continue
        if n_factors == 1:
            scores[k] = 1.0
            continue
        p = r[k] / row_sum[k]
        nz = p > 0
        scores[k] = 1.0 - float(-np.sum(p[nz] * np.log(p[nz]))) / np.log(n_factors)
    return float(np.sum(scores * row_sum / total))


def dci_disentanglement(rep, factors, bins: int = DEFAULT_BINS, warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    return dci_from_importance(mi_matrix(rep, factors, bins))


def modularity_from_mi(m: np.ndarray) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    n_factors = m.shape[1]
    if n_factors < 2:
        raise ValueError("modularity needs at least two factors")
    scores = np.zeros(m.shape[0])
    for k, row in enumerate(m):
        top = int(np.argmax(row))
        theta = row[top]
        if theta <= 0:
            continue
        rest = np.delete(row, top)
        scores[k] = 1.0 - np.sum(rest**2) / (theta**2 * (n_factors - 1))
    return float(np.mean(scores))


def modularity(rep, factors, bins: int = DEFAULT_BINS, warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    return modularity_from_mi(mi_matrix(rep, factors, bins))


def r2_matrix(rep, factors) -> np.ndarray:
    """R^2 of univariate least squares of each factor on each dimension."""
    rep = np.asarray(rep, dtype=np.float64)
    y = np.asarray(factors, dtype=np.float64)
    xc = rep - rep.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = np.sum(xc**2, axis=0)
    syy = np.sum(yc**2, axis=0)
    sxy = xc.T @ yc
    denom = np.outer(sxx, syy)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, sxy**2 / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(s, 0.0, 1.0)


def sap(rep, factors, warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    if rep.shape[1] < 2:
        raise ValueError("SAP needs at least two latent dimensions")
    for k in np.flatnonzero(rep.std(axis=0) == 0):
        _warn(warn, f"dimension {k} is constant; its SAP scores are 0")
    s = np.sort(r2_matrix(rep, factors), axis=0)[::-1]
    return float(np.mean(s[0] - s[1]))


# -- classifier-based scores ---------------------------------------------------

def _split(n: int, rng: np.random.Generator, frac: float = 0.8):
    order = rng.permutation(n)
    cut = int(round(frac * n))
    return order[:cut], order[cut:]


def _groups(factors: np.ndarray) -> list[list[np.ndarray]]:
    out = []
    for f in range(factors.shape[1]):
        out.append([np.flatnonzero(factors[:, f] == v) for v in (0, 1)])
    return out


def _check_groups(groups, min_size: int) -> None:
    for f, gs in enumerate(groups):
        for v, members in enumerate(gs):
            if len(members) < min_size:
                raise InsufficientSamples(f"factor {f} value {v} has {len(members)} samples")


def fit_softmax(x: np.ndarray, y: np.ndarray, n_classes: int, iters: int = 200, lr: float = 0.1):
    """Full-batch gradient descent on multinomial logistic loss."""
    n, k = x.shape
    w = np.zeros((k, n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(iters):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * (x.T @ g)
        b -= lr * g.sum(axis=0)
    return w, b


def betavae_metric(rep, factors, trials: int = 2000, seed: int = 0, batch: int = 64,
                   warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    n_factors = factors.shape[1]
    groups = _groups(factors)
    _check_groups(groups, 2)
    rng = np.random.default_rng(seed)
    feats = np.zeros((trials, rep.shape[1]))
    labels = rng.integers(0, n_factors, size=trials)
    for t, f in enumerate(labels):
        g0, g1 = groups[f]
        pool = np.concatenate([g0, g1])
        values = rng.integers(0, 2, size=batch)
        sizes = np.where(values == 0, len(g0), len(g1))
        start = np.where(values == 0, 0, len(g0))
        a = rng.integers(0, sizes)
        # offset in 1..size-1 keeps the two rows distinct
        b = (a + rng.integers(1, sizes)) % sizes
        feats[t] = np.abs(rep[pool[start + a]] - rep[pool[start + b]]).mean(axis=0)
    tr, te = _split(trials, rng)
    mu = feats[tr].mean(axis=0)
    sd = feats[tr].std(axis=0)
    sd[sd == 0] = 1.0
    x = (feats - mu) / sd
    w, b = fit_softmax(x[tr], labels[tr], n_factors)
    pred = np.argmax(x[te] @ w + b, axis=1)
    return float(np.mean(pred == labels[te]))


def factorvae_metric(rep, factors, trials: int = 2000, seed: int = 0, batch: int = 64,
                     warn: list[str] | None = None) -> float:
    rep, factors = _validate(rep, factors, warn)
    sd = rep.std(axis=0)
    active = np.flatnonzero(sd > 0)
    if len(active) < rep.shape[1]:
        _warn(warn, f"{rep.shape[1] - len(active)} zero-variance dimensions excluded")
    if len(active) == 0:
        raise InsufficientSamples("all dimensions have zero variance")
    z = rep[:, active] / sd[active]
    n_factors = factors.shape[1]
    groups = _groups(factors)
    _check_groups(groups, 2)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_factors, size=trials)
    argmins = np.zeros(trials, dtype=np.int64)
    for t, f in enumerate(labels):
        members = groups[f][rng.integers(0, 2)]
        idx = rng.choice(members, size=min(batch, len(members)), replace=False)
        argmins[t] = int(np.argmin(z[idx].var(axis=0, ddof=1)))
    tr, te = _split(trials, rng)
    votes = np.zeros((len(active), n_factors), dtype=np.int64)
    np.add.at(votes, (argmins[tr], labels[tr]), 1)
    classifier = np.argmax(votes, axis=1)
    return float(np.mean(classifier[argmins[te]] == labels[te]))


METRICS = ("betavae", "factorvae", "mig", "dci", "modularity", "sap")


@dataclass
class DisentReport:
    scores: dict[str, float]
    config: dict
    seed: int
    warnings: list[str] = field(default_factory=list)
    mi: np.ndarray | None = None
    importance: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {**{m: self.scores[m] for m in METRICS if m in self.scores},
                "config": self.config, "seed": self.seed, "warnings": self.warnings}


def evaluate_disentanglement(rep, factors, seed: int = 0, bins: int = DEFAULT_BINS,
                             trials: int = 2000) -> DisentReport:
    sink: list[str] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateColumn)
        rep_v, fac_v = _validate(rep, factors, sink)
        m = mi_matrix(rep_v, fac_v, bins)
        h = np.array([entropy(fac_v[:, f]) for f in range(fac_v.shape[1])])
        srt = np.sort(m, axis=0)[::-1]
        scores = {
            "betavae": betavae_metric(rep_v, fac_v, trials, seed),
            "factorvae": factorvae_metric(rep_v, fac_v, trials, seed, warn=sink),
            "mig": float(np.mean((srt[0] - srt[1]) / h)),
            "dci": dci_from_importance(m),
            "modularity": modularity_from_mi(m),
            "sap": sap(rep_v, fac_v, warn=sink),
        }
    importance = m / np.where(m.sum(axis=1, keepdims=True) > 0, m.sum(axis=1, keepdims=True), 1.0)
    cfg = {"bins": bins, "trials": trials}
    return DisentReport(scores, cfg, seed, sink, m, importance)


def write_matrix_csv(path, mat: np.ndarray, row_prefix: str = "dim", col_prefix: str = "factor") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + [f"{col_prefix}{j}" for j in range(mat.shape[1])])
        for i, row in enumerate(mat):
            w.writerow([f"{row_prefix}{i}"] + [repr(float(v)) for v in row])
