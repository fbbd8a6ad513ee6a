"""Sliding-window peeling decoder and single-frame trials."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._kernels import window_kernel
from ._seeding import SeedLike, make_rng, split_seed
from .ensemble import EnsembleParams, ErasurePattern, Kind, TannerGraph, sample_erasures, sample_graph
from .peeling import Outcome, outcome_of, peel


class Accounting(enum.Enum):
    # A VN is in error iff it is still unresolved when the whole decode ends.
    END = "end"
    # A VN is in error iff it was unresolved when its position was decided.
    FINALIZATION = "finalization"


@dataclass(frozen=True)
class WindowConfig:
    W: int
    # Decide position w - delay after window w; dv-1 reproduces the delayed
    # decision rule of the classic window decoder.
    delay: int = 0
    accounting: Accounting = Accounting.END

    def validate(self, params: EnsembleParams) -> None:
        if not 1 <= self.W <= params.n_cn_positions:
            raise ValueError(f"window size W={self.W} outside [1, {params.n_cn_positions}]")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")


class FullBP:
    """Marker for full-graph peeling in :func:`run_frame`."""

    def __repr__(self):
        return "FullBP()"


FULL_BP = FullBP()


@dataclass
class WindowOutcome:
    frame_error: bool
    bit_errors: int
    block_errors: int
    per_position_unresolved: np.ndarray
    expurgated: bool = False  # failure made only of size-2 stopping sets

    @classmethod
    def from_errors(cls, graph: TannerGraph, errors: np.ndarray, expurgated: bool = False):
        per_pos = np.bincount(graph.vn_position[errors], minlength=graph.params.L)
        bits = int(per_pos.sum())
        return cls(bits > 0, bits, int(np.count_nonzero(per_pos)), per_pos, expurgated)


def window_decode(
    graph: TannerGraph,
    erasures: ErasurePattern,
    cfg: WindowConfig,
    seed: SeedLike = None,
) -> WindowOutcome:
    """Decode a terminated graph with a window of ``cfg.W`` CN positions.

    Window ``w`` covers CN positions ``[w, w+W-1]`` and peels until none of
    its CNs has degree one; VN position ``w - delay`` is then decided.
    Unresolved VNs stay attached to later windows as unknowns.
    """
    p = graph.params
    if p.kind is not Kind.TERMINATED:
        raise ValueError("window decoding expects a terminated graph")
    cfg.validate(p)
    uniforms = make_rng(seed).random(max(erasures.n_erased, 1))
    active, at_final = window_kernel(
        graph.vn_cns, erasures.erased, graph.n_cns, p.M, p.N, p.n_cn_positions,
        cfg.W, cfg.delay, uniforms,
    )
    errors = active if cfg.accounting is Accounting.END else at_final
    expurgated = False
    if errors.any() and np.array_equal(errors, active):
        expurgated = outcome_of(graph, active, False) is Outcome.EXPURGATED_FAILURE
    return WindowOutcome.from_errors(graph, errors, expurgated)


def run_frame(
    params: EnsembleParams,
    epsilon: float,
    cfg: WindowConfig | FullBP = FULL_BP,
    seed: int | None = None,
) -> WindowOutcome:
    """One trial: fresh graph, fresh erasures, then decode."""
    if not isinstance(cfg, FullBP):
        cfg.validate(params)
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    g_seed, e_seed, d_seed = split_seed(seed, 3)
    graph = sample_graph(params, g_seed)
    erasures = sample_erasures(graph.n_vns, epsilon, e_seed)
    if isinstance(cfg, FullBP):
        trace = peel(graph, erasures, d_seed)
        return WindowOutcome.from_errors(
            graph, trace.residual, trace.outcome is Outcome.EXPURGATED_FAILURE
        )
    return window_decode(graph, erasures, cfg, d_seed)
