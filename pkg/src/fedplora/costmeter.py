"""Per-round communication, computation and temporary-memory cost model.

Only the terms that differ between strategies are modelled; local training
cost is identical across them and left out.
"""
from __future__ import annotations

from dataclasses import dataclass

from .numkit import ConfigError

METHODS = ("fedit", "hetlora", "flora", "flexlora", "fedplora")
SVD_COST_CONSTANT = 14
MB = 10**6
MIB = 2**20


@dataclass(frozen=True)
class CostProfile:
    d: int
    k: int
    L: int
    R: int
    r_i: int
    bytes_per_param: int = 2

    def __post_init__(self):
        if min(self.d, self.k, self.L, self.R, self.r_i, self.bytes_per_param) < 1:
            raise ConfigError(f"all cost-profile fields must be positive: {self}")
        if self.r_i > self.R:
            raise ConfigError(f"r_i={self.r_i} exceeds R={self.R}")


def _check(method):
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")


def uplink_bytes(method: str, p: CostProfile) -> int:
    _check(method)
    return p.L * (p.d + p.k) * p.r_i * p.bytes_per_param


def downlink_bytes(method: str, p: CostProfile) -> int:
    _check(method)
    if method == "fedplora":
        return p.L * (p.d + p.k) * p.R * p.bytes_per_param
    if method == "flora":
        return p.L * p.d * p.k * p.bytes_per_param
    return p.L * (p.d + p.k) * p.r_i * p.bytes_per_param


def fold_flops(p: CostProfile) -> int:
    """One multiply and one add per entry of each folded rank-one product."""
    return p.L * 2 * p.d * p.k * (p.R - p.r_i)


def svd_cost(d: int, k: int) -> int:
    return SVD_COST_CONSTANT * min(d, k) ** 2 * max(d, k)


def agg_flops(method: str, p: CostProfile, participants: int, mean_rank: float | None = None) -> float:
    """Server aggregation cost for ``participants`` uploads of mean rank ``mean_rank``
    (defaults to ``p.r_i``)."""
    _check(method)
    if participants < 1:
        raise ConfigError("need at least one participant")
    r = p.r_i if mean_rank is None else mean_rank
    avg = participants * p.L * (p.d + p.k) * p.R
    if method in ("fedplora", "fedit"):
        return avg
    if method == "hetlora":
        return avg + participants * p.L * (p.d + p.k) * (p.R - r)
    products = participants * p.L * 2 * p.d * p.k * r
    if method == "flora":
        return products
    return products + p.L * svd_cost(p.d, p.k)


def temp_memory_bytes(method: str, p: CostProfile) -> int:
    """Memory to hold the received global parameters during initialisation."""
    return downlink_bytes(method, p)


def cost_table(p: CostProfile, participants: int = 1) -> list[dict]:
    rows = []
    for m in METHODS:
        rows.append({
            "method": m,
            "uplink_bytes": uplink_bytes(m, p),
            "downlink_bytes": downlink_bytes(m, p),
            "fold_flops": fold_flops(p) if m == "fedplora" else 0,
            "agg_flops": agg_flops(m, p, participants),
            "temp_memory_bytes": temp_memory_bytes(m, p),
        })
    return rows


def modeled_round_bytes(method: str, shapes, R: int, ranks, bytes_per_param: int = 2) -> tuple[int, int]:
    """Total (uplink, downlink) bytes for one round.

    ``shapes`` lists each target module's (d, k); ``ranks`` the participating
    clients' ranks.
    """
    up = down = 0
    for r in ranks:
        for d, k in shapes:
            p = CostProfile(d, k, 1, R, r, bytes_per_param)
            up += uplink_bytes(method, p)
            down += downlink_bytes(method, p)
    return up, down
