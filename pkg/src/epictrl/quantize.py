"""Finite approximations of a standard Gaussian vector.

A :class:`Quantizer` is a set of nodes with probability weights. Nodes are
built either by Lloyd's fixed-point iteration on a large Gaussian sample or
as a tensor product of one-dimensional quantizers. Samples come from a
scrambled Sobol sequence pushed through the normal quantile function by
default; plain pseudo-random draws are available with ``sampler="mc"``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri
from scipy.stats import qmc


class QuantizerFileError(ValueError):
    """Base class for problems reading a quantizer file."""


class QuantizerFormatError(QuantizerFileError):
    pass


class QuantizerDimensionError(QuantizerFileError):
    pass


class QuantizerWeightError(QuantizerFileError):
    pass


@dataclass(frozen=True)
class Quantizer:
    """Nodes ``(N_l, dim)`` and weights ``(N_l,)`` of a discrete Gaussian approximation.

    ``info`` carries construction diagnostics and does not take part in equality.
    """

    nodes: np.ndarray
    weights: np.ndarray
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("one weight per node required")
        if not np.all(np.isfinite(nodes)) or not np.all(np.isfinite(weights)):
            raise ValueError("nodes and weights must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be a probability vector (sum={weights.sum()!r})")
        if len(np.unique(nodes, axis=0)) != len(nodes):
            raise ValueError("quantizer nodes must be pairwise distinct")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Quantizer):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes) and np.array_equal(self.weights, other.weights)

    __hash__ = None


def gaussian_samples(dim: int, count: int, seed, sampler: str = "sobol") -> np.ndarray:
    """``count`` standard normal draws in ``dim`` dimensions.

    With ``sampler="sobol"`` the first ``count`` points of a scrambled Sobol
    sequence are mapped through the normal quantile function.
    """
    if sampler == "mc":
        return np.random.default_rng(seed).standard_normal((count, dim))
    if sampler != "sobol":
        raise ValueError(f"unknown sampler {sampler!r}")
    eng = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    m = int(np.ceil(np.log2(max(count, 2))))
    u = eng.random_base2(m)[:count]
    # scrambling never yields exact 0 or 1, but guard the quantile anyway
    u = np.clip(u, 1e-16, 1.0 - 1e-16)
    return ndtri(u)


def _assign(nodes, samples):
    dist, idx = cKDTree(nodes).query(samples)
    return dist, idx


def _cell_means(samples, idx, n):
    counts = np.bincount(idx, minlength=n).astype(float)
    sums = np.stack([np.bincount(idx, weights=samples[:, k], minlength=n)
                     for k in range(samples.shape[1])], axis=1)
    return counts, sums


def _lloyd_iterate(nodes, samples, iters, tol, rng):
    prev = np.inf
    improvement = np.inf
    it = 0
    for it in range(1, iters + 1):
        dist, idx = _assign(nodes, samples)
        counts, sums = _cell_means(samples, idx, len(nodes))
        empty = counts == 0
        nodes[~empty] = sums[~empty] / counts[~empty, None]
        if empty.any():
            nodes[empty] = samples[rng.integers(0, len(samples), size=int(empty.sum()))]
        current = float(np.mean(dist ** 2))
        improvement = (prev - current) / current if np.isfinite(prev) else np.inf
        prev = current
        if not empty.any() and 0 <= improvement < tol:
            break
    return nodes, it, improvement


def lloyd(dim: int, N_l: int, sample_count: int = 1_000_000, iters: int = 300, seed=0,
          sampler: str = "sobol", tol: float = 1e-6) -> Quantizer:
    """Lloyd's algorithm against a fixed Gaussian sample.

    Parameters
    ----------
    dim, N_l : int
        Dimension and number of nodes.
    sample_count : int
        Sample size used for every assignment and centroid step.
    iters : int
        Iteration cap for each of the coarse and full-sample stages.
    seed
        Seed for the sample and for re-seeding empty cells.
    tol : float
        Stop once the relative distortion improvement drops below this.

    Returns
    -------
    Quantizer
        ``info`` holds the iteration count, the final relative improvement
        and the final quadratic distortion on the training sample.
    """
    if N_l < 1:
        raise ValueError("N_l must be positive")
    rng = np.random.default_rng(seed)
    samples = gaussian_samples(dim, sample_count, rng, sampler)
    nodes = samples[rng.choice(sample_count, size=N_l, replace=False)].copy()
    # most iterations run on a 1/16 prefix; a Sobol prefix is itself balanced
    coarse = sample_count // 16
    total_iters = 0
    improvement = np.inf
    if coarse >= 50 * N_l:
        nodes, used, _ = _lloyd_iterate(nodes, samples[:coarse], iters, 10 * tol, rng)
        total_iters += used
    nodes, used, improvement = _lloyd_iterate(nodes, samples, iters, tol, rng)
    total_iters += used
    it = total_iters
    # weights from the final cells
    dist, idx = _assign(nodes, samples)
    counts = np.bincount(idx, minlength=N_l).astype(float)
    keep = counts > 0
    weights = counts[keep] / counts[keep].sum()
    info = dict(iterations=it, relative_improvement=float(improvement),
                distortion=float(np.sqrt(np.mean(dist ** 2))), sample_count=sample_count, sampler=sampler)
    return Quantizer(nodes[keep], weights, info)


def optimal_1d(N_l: int, sample_count: int = 1_000_000, iters: int = 500, seed=0) -> Quantizer:
    """One-dimensional Lloyd quantizer, used as a product factor."""
    return lloyd(1, N_l, sample_count, iters, seed, tol=1e-10)


def product_quantizer(per_dim) -> Quantizer:
    """Cartesian product of quantizers; weights multiply."""
    per_dim = list(per_dim)
    nodes = [np.array(row).reshape(-1) for row in
             itertools.product(*[[q.nodes[i] for i in range(q.size)] for q in per_dim])]
    weights = [float(np.prod(ws)) for ws in itertools.product(*[q.weights for q in per_dim])]
    weights = np.array(weights)
    return Quantizer(np.array(nodes), weights / weights.sum())


def distortion(q: Quantizer, p_order: float = 2.0, sample_count: int = 1_000_000, seed=12345,
               sampler: str = "sobol") -> float:
    """Estimate ``E[min_l |eps - xi_l|^p]^(1/p)`` for ``eps ~ N(0, I)``."""
    if p_order < 1:
        raise ValueError("p_order must be at least 1")
    samples = gaussian_samples(q.dim, sample_count, seed, sampler)
    dist, _ = _assign(q.nodes, samples)
    return float(np.mean(dist ** p_order) ** (1.0 / p_order))


def stationarity_residual(q: Quantizer, sample_count: int = 1_000_000, seed=12345,
                          sampler: str = "sobol") -> float:
    """Largest distance between a node and the sample mean of its Voronoi cell."""
    samples = gaussian_samples(q.dim, sample_count, seed, sampler)
    _, idx = _assign(q.nodes, samples)
    counts, sums = _cell_means(samples, idx, q.size)
    hit = counts > 0
    gap = sums[hit] / counts[hit, None] - q.nodes[hit]
    return float(np.max(np.linalg.norm(gap, axis=1)))


def cubature(q: Quantizer, fn) -> float:
    """``sum_l w_l fn(xi_l)``."""
    return float(sum(w * fn(x) for w, x in zip(q.weights, q.nodes)))


def save(q: Quantizer, path) -> None:
    """Write ``dim,N_l`` then one ``xi_1,...,xi_dim,weight`` row per node."""
    path = Path(path)
    rows = np.column_stack([q.nodes, q.weights])
    with path.open("w", newline="\n") as fh:
        fh.write(f"{q.dim},{q.size}\n")
        np.savetxt(fh, rows, fmt="%.17g", delimiter=",")


def load(path, dim: int | None = None, weight_tol: float = 1e-9) -> Quantizer:
    """Read a quantizer file written by :func:`save` or an external tool.

    Raises
    ------
    QuantizerFormatError
        Unparseable header or rows, or a row count different from ``N_l``.
    QuantizerDimensionError
        Row width or the ``dim`` argument disagrees with the header.
    QuantizerWeightError
        Negative weights or a weight sum off by more than ``weight_tol``.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise QuantizerFormatError(f"{path}: empty file")
    try:
        d, n = (int(tok) for tok in lines[0].split(","))
    except ValueError as exc:
        raise QuantizerFormatError(f"{path}: header must be 'dim,N_l', got {lines[0]!r}") from exc
    if dim is not None and d != dim:
        raise QuantizerDimensionError(f"{path}: file has dim={d}, expected {dim}")
    if len(lines) - 1 != n:
        raise QuantizerFormatError(f"{path}: header announces {n} rows, found {len(lines) - 1}")
    try:
        rows = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise QuantizerFormatError(f"{path}: non-numeric entry") from exc
    widths = {len(r) for r in rows}
    if widths != {d + 1}:
        raise QuantizerDimensionError(f"{path}: rows must have {d + 1} columns, found {sorted(widths)}")
    data = np.array(rows)
    weights = data[:, -1]
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise QuantizerWeightError(f"{path}: weights must be finite and nonnegative")
    total = weights.sum()
    if abs(total - 1.0) > weight_tol:
        raise QuantizerWeightError(f"{path}: weights sum to {total!r}, not 1")
    try:
        # leave already-normalized weights untouched so round trips are exact
        if abs(total - 1.0) > 1e-12:
            weights = weights / total
        return Quantizer(data[:, :-1], weights)
    except ValueError as exc:
        raise QuantizerFormatError(f"{path}: {exc}") from exc
