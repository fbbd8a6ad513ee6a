"""Semi-structured (dv, dc, L, N) SC-LDPC ensemble and BEC erasure sampling.

A VN at spatial position ``i`` has one edge into each of the CN positions
``i, i+1, ..., i+dv-1``; the edges entering a CN position are matched to
random distinct sockets of its CNs (``dc`` sockets each).  Terminated chains
carry ``dv-1`` extra check-only positions; truncated chains drop the edges
that would land beyond position ``L-1``.

All positions and indices are zero-based.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._kernels import socket_graph_kernel
from ._seeding import SeedLike, make_rng


class Kind(enum.Enum):
    TERMINATED = "terminated"
    TRUNCATED = "truncated"

    @classmethod
    def parse(cls, value: "str | Kind") -> "Kind":
        if isinstance(value, Kind):
            return value
        return cls(value.strip().lower())


@dataclass(frozen=True)
class EnsembleParams:
    dv: int
    dc: int
    L: int
    N: int
    kind: Kind = Kind.TERMINATED

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.dv < 2:
            raise ValueError(f"dv must be >= 2, got {self.dv}")
        if self.dc <= self.dv:
            raise ValueError(f"dc must exceed dv, got dv={self.dv}, dc={self.dc}")
        if self.L < 1 or self.N < 1:
            raise ValueError("L and N must be positive")
        if (self.dv * self.N) % self.dc:
            raise ValueError(
                f"M = dv*N/dc must be an integer (dv={self.dv}, dc={self.dc}, N={self.N})"
            )

    @property
    def M(self) -> int:
        """CNs per CN position."""
        return self.dv * self.N // self.dc

    @property
    def n_cn_positions(self) -> int:
        if self.kind is Kind.TERMINATED:
            return self.L + self.dv - 1
        return self.L

    @property
    def n_vns(self) -> int:
        return self.L * self.N

    @property
    def n_cns(self) -> int:
        return self.n_cn_positions * self.M

    def with_(self, **changes) -> "EnsembleParams":
        fields = dict(dv=self.dv, dc=self.dc, L=self.L, N=self.N, kind=self.kind)
        fields.update(changes)
        return EnsembleParams(**fields)


@dataclass(eq=False)
class TannerGraph:
    """Sampled Tanner graph.

    ``vn_cns[v, k]`` is the CN reached by the k-th edge of VN ``v`` (the edge
    into CN position ``position(v) + k``), or ``-1`` when truncation clipped it.
    """

    params: EnsembleParams
    vn_cns: np.ndarray = field(repr=False)

    @property
    def n_vns(self) -> int:
        return self.vn_cns.shape[0]

    @property
    def n_cns(self) -> int:
        return self.params.n_cns

    @cached_property
    def vn_position(self) -> np.ndarray:
        return np.arange(self.n_vns, dtype=np.int32) // self.params.N

    @cached_property
    def cn_position(self) -> np.ndarray:
        return np.arange(self.n_cns, dtype=np.int32) // self.params.M

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) array of (vn, cn) pairs in VN-major order."""
        vn = np.repeat(np.arange(self.n_vns, dtype=np.int64), self.params.dv)
        cn = self.vn_cns.reshape(-1).astype(np.int64)
        keep = cn >= 0
        return np.column_stack([vn[keep], cn[keep]])

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(self.vn_cns >= 0))

    def vn_degree(self) -> np.ndarray:
        return np.count_nonzero(self.vn_cns >= 0, axis=1)

    def cn_degree(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.n_cns)

    def per_position_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """VN count per VN position and CN count per CN position."""
        p = self.params
        return np.full(p.L, p.N), np.full(p.n_cn_positions, p.M)

    def cn_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR view (indptr, vn indices) of the CN side."""
        e = self.edges
        order = np.argsort(e[:, 1], kind="stable")
        indptr = np.zeros(self.n_cns + 1, dtype=np.int64)
        np.cumsum(np.bincount(e[:, 1], minlength=self.n_cns), out=indptr[1:])
        return indptr, e[order, 0]

    def same_as(self, other: "TannerGraph") -> bool:
        return self.params == other.params and np.array_equal(self.vn_cns, other.vn_cns)


@dataclass(eq=False)
class ErasurePattern:
    erased: np.ndarray
    epsilon: float

    @property
    def n_erased(self) -> int:
        return int(np.count_nonzero(self.erased))


def sample_graph(
    params: EnsembleParams, seed: SeedLike = None, construction: str = "sockets"
) -> TannerGraph:
    """Draw one graph from the ensemble, deterministic for a fixed seed.

    ``"sockets"`` gives every CN ``dc`` sockets and matches the edges entering
    a CN position to a uniformly random subset of that position's sockets, so
    interior CNs have degree exactly ``dc`` and boundary CNs fewer.
    ``"independent"`` draws each edge's CN independently (Poisson-like CN
    degrees); it is kept for comparison only.
    """
    rng = make_rng(seed)
    L, N, M, dv, dc = params.L, params.N, params.M, params.dv, params.dc
    dtype = np.int32 if params.n_cns < 2**31 else np.int64
    if construction == "sockets":
        n_slots = params.n_vns * dv
        vn_cns = socket_graph_kernel(L, N, M, dv, dc, params.n_cn_positions, rng.random(n_slots))
        return TannerGraph(params, vn_cns.astype(dtype))
    if construction != "independent":
        raise ValueError(f"unknown construction {construction!r}")
    pos = np.repeat(np.arange(L, dtype=np.int64), N)
    cn_pos = pos[:, None] + np.arange(dv, dtype=np.int64)[None, :]
    vn_cns = (cn_pos * M + rng.integers(0, M, size=(L * N, dv))).astype(dtype)
    vn_cns[cn_pos >= params.n_cn_positions] = -1
    return TannerGraph(params, vn_cns)


def sample_erasures(n_vns: int, epsilon: float, seed: SeedLike = None) -> ErasurePattern:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    rng = make_rng(seed)
    return ErasurePattern(rng.random(n_vns) < epsilon, float(epsilon))


def write_graph(graph: TannerGraph, path: str | Path) -> None:
    """Plain-text edge list: header ``dv dc L N kind`` then ``vn cn`` per line."""
    p = graph.params
    with open(path, "w") as fh:
        fh.write(f"{p.dv} {p.dc} {p.L} {p.N} {p.kind.value}\n")
        np.savetxt(fh, graph.edges, fmt="%d")


def read_graph(path: str | Path) -> TannerGraph:
    with open(path) as fh:
        dv, dc, L, N, kind = fh.readline().split()
        params = EnsembleParams(int(dv), int(dc), int(L), int(N), Kind.parse(kind))
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2).reshape(-1, 2)
    vn_cns = np.full((params.n_vns, params.dv), -1, dtype=np.int64)
    # Slot k is fixed by the CN position offset from the VN position.
    k = edges[:, 1] // params.M - edges[:, 0] // params.N
    if np.any((k < 0) | (k >= params.dv)):
        raise ValueError("edge list violates the coupling pattern")
    vn_cns[edges[:, 0], k] = edges[:, 1]
    dtype = np.int32 if params.n_cns < 2**31 else np.int64
    return TannerGraph(params, vn_cns.astype(dtype))
