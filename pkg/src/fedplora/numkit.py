"""Dense float64 kernels, seeded random streams and truncated SVD.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_norm(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def truncated_svd(m: np.ndarray, rank: int):
    """Best rank-``rank`` factorisation ``m ~ u @ diag(s) @ vt``.

    Returns ``u`` (rows x rank), ``s`` (rank,) non-increasing, ``vt`` (rank x cols).
    """
    m = as_matrix(m)
    if rank < 1 or rank > min(m.shape):
        raise ShapeError(f"rank {rank} outside [1, {min(m.shape)}] for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u[:, :rank].copy(), s[:rank].copy(), vt[:rank, :].copy()


def cosine_similarity(x, y) -> float:
    x = np.ravel(np.asarray(x, dtype=np.float64))
    y = np.ravel(np.asarray(y, dtype=np.float64))
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


class RngStream:
    """Random stream keyed by ``(seed, stream_id)``.

    The stream id is a tuple of non-negative ints, conventionally
    ``(round, client, module_index)``. Identical keys replay identical draws;
    distinct keys are independent children of the same root seed.
    """

    def __init__(self, seed: int, stream_id: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = tuple(int(i) for i in stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(key))


def random_normal(rows: int, cols: int, std: float, rng: RngStream) -> np.ndarray:
    if not std > 0:
        raise ConfigError(f"std must be positive, got {std}")
    return rng.generator.normal(0.0, std, size=(rows, cols))
