"""Full-graph peeling decoder with degree-one process instrumentation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._kernels import peel_kernel
from ._seeding import SeedLike, make_rng
from .ensemble import ErasurePattern, TannerGraph


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    EXPURGATED_FAILURE = "expurgated_failure"


class ResidualClass(enum.Enum):
    EMPTY = "empty"
    ONLY_SIZE2_STOPPING_SETS = "only_size2"
    LARGE_RESIDUAL = "large"


@dataclass
class ResidualState:
    """Peeling state: active VNs and the degree bookkeeping derived from them."""

    active_vn: np.ndarray
    cn_degree: np.ndarray
    iteration: int

    @classmethod
    def from_active(cls, graph: TannerGraph, active_vn: np.ndarray, iteration: int = 0):
        cns = graph.vn_cns[active_vn].reshape(-1)
        cns = cns[cns >= 0]
        return cls(active_vn, np.bincount(cns, minlength=graph.n_cns), iteration)

    def degree_one_set(self, graph: TannerGraph) -> list[np.ndarray]:
        """Degree-one CNs grouped by CN position."""
        ones = np.flatnonzero(self.cn_degree == 1)
        pos = ones // graph.params.M
        return [ones[pos == u] for u in range(graph.params.n_cn_positions)]


@dataclass
class DecodeTrace:
    N: int
    r1: np.ndarray  # r1[j] = (#degree-one CNs)/N after j*stride iterations
    iterations: int
    residual: np.ndarray = field(repr=False)  # boolean mask of unresolved VNs
    residual_blocks: frozenset
    outcome: Outcome
    stride: int = 1
    vn_counts: np.ndarray | None = field(default=None, repr=False)
    r1_per_position: np.ndarray | None = field(default=None, repr=False)

    @property
    def tau(self) -> np.ndarray:
        t = np.arange(len(self.r1), dtype=float) * self.stride
        t[-1] = self.iterations  # last sample is the halt
        return t / self.N

    @property
    def tau0(self) -> float | None:
        if self.outcome is Outcome.SUCCESS:
            return None
        return self.iterations / self.N

    @property
    def residual_vn_count(self) -> int:
        return int(np.count_nonzero(self.residual))

    @property
    def is_failure(self) -> bool:
        return self.outcome is not Outcome.SUCCESS


def _run_peeling(graph, erasures, seed, stride, record_positions, record_vn_counts=False):
    if erasures.erased.shape[0] != graph.n_vns:
        raise ValueError("erasure pattern does not cover the graph")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    p = graph.params
    uniforms = make_rng(seed).random(max(erasures.n_erased, 1))
    return peel_kernel(
        graph.vn_cns,
        erasures.erased,
        graph.n_cns,
        p.M,
        p.N,
        p.n_cn_positions,
        uniforms,
        stride,
        record_positions,
        record_vn_counts,
    )


def peel(
    graph: TannerGraph,
    erasures: ErasurePattern,
    seed: SeedLike = None,
    record_positions: bool = False,
    stride: int = 1,
    record_vn_counts: bool = False,
) -> DecodeTrace:
    """Peel ``graph`` from the erasure set ``erasures``.

    Each iteration removes one uniformly drawn degree-one CN together with its
    attached VN.  ``stride`` decimates the recorded series; the halting state
    is always the last sample.
    """
    r1, n_iter, active, r1u, vcount = _run_peeling(
        graph, erasures, seed, stride, record_positions, record_vn_counts
    )
    p = graph.params
    blocks = frozenset(np.unique(graph.vn_position[active]).tolist())
    outcome = outcome_of(graph, active, n_iter == erasures.n_erased)
    return DecodeTrace(
        N=p.N,
        r1=r1 / p.N,
        iterations=int(n_iter),
        residual=active,
        residual_blocks=blocks,
        outcome=outcome,
        stride=stride,
        vn_counts=vcount if record_vn_counts else None,
        r1_per_position=r1u if record_positions else None,
    )


def _classify(graph: TannerGraph, active: np.ndarray) -> ResidualClass:
    vns = np.flatnonzero(active)
    if vns.size == 0:
        return ResidualClass.EMPTY
    sub = graph.vn_cns[vns]
    flat = sub[sub >= 0]
    if vns.size % 2 or np.bincount(flat).max() > 2:
        # A CN of residual degree >= 3 puts >= 3 VNs in one component.
        return ResidualClass.LARGE_RESIDUAL
    return _components(sub, vns.size)


def _components(sub: np.ndarray, n_vns: int) -> ResidualClass:
    dv = sub.shape[1]
    rows = np.repeat(np.arange(n_vns), dv)
    cols = sub.reshape(-1)
    keep = cols >= 0
    rows, cols = rows[keep], cols[keep]
    cn_ids, cn_local = np.unique(cols, return_inverse=True)
    n = n_vns + cn_ids.size
    adj = coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, n_vns + cn_local)), shape=(n, n)
    )
    _, labels = connected_components(adj, directed=False)
    vn_per_comp = np.bincount(labels[:n_vns])
    if np.all(vn_per_comp == 2):
        return ResidualClass.ONLY_SIZE2_STOPPING_SETS
    return ResidualClass.LARGE_RESIDUAL


def outcome_of(graph: TannerGraph, active: np.ndarray, decoded: bool | None = None) -> Outcome:
    if decoded is None:
        decoded = not active.any()
    if decoded:
        return Outcome.SUCCESS
    if _classify(graph, active) is ResidualClass.ONLY_SIZE2_STOPPING_SETS:
        return Outcome.EXPURGATED_FAILURE
    return Outcome.FAILURE


def classify_residual(graph: TannerGraph, state: ResidualState | np.ndarray) -> ResidualClass:
    """Classify a halted residual graph.

    ``ONLY_SIZE2_STOPPING_SETS`` means every connected component holds exactly
    two VNs.  In a halted residual no CN has degree one, so each CN of such a
    component touches both VNs and the pair is a size-2 stopping set.
    """
    active = state.active_vn if isinstance(state, ResidualState) else state
    return _classify(graph, np.asarray(active, dtype=bool))


def write_trace_csv(trace: DecodeTrace, path: str | Path) -> None:
    """Columns: iteration, r1, degree_one_total[, R1_u per position]."""
    it = np.rint(trace.tau * trace.N).astype(np.int64)
    total = np.rint(trace.r1 * trace.N).astype(np.int64)
    cols = [it, trace.r1, total]
    header = ["iteration", "r1", "degree_one_total"]
    if trace.r1_per_position is not None:
        per = trace.r1_per_position
        cols.extend(per[:, u] for u in range(per.shape[1]))
        header.extend(f"R1_{u}" for u in range(per.shape[1]))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(
                ",".join(repr(float(x)) if isinstance(x, np.floating) else str(int(x)) for x in row)
                + "\n"
            )
