"""
Paged KV cache models for the sparse decode simulator
"""
import math
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from models.entropic import SolverKind
from models.errors import ParameterError


class FallbackPolicy(Enum):
    """What to do when the gap diagnostic falls below the threshold"""
    FALLBACK_TO_DENSE = "fallback-to-dense"
    CAP_COMPUTE = "cap-compute"


class SparseObjective(Enum):
    """Program solved on the routed candidates"""
    QUADRATIC = "quadratic"
    LINEAR = "linear"


class PagePooling(Enum):
    """How page summaries are pooled from page keys"""
    MEAN = "mean"
    MAX = "max"


class DecodeMode(Enum):
    DENSE = "dense"
    SPARSE = "sparse"


class PagedKvCache:
    """
    Keys and values stored in fixed-size physical pages addressed through a block table
    """

    def __init__(self, key_pages, value_pages, occupancy, block_table, block_size,
                 pooling=PagePooling.MEAN):
        """
        Args:
            key_pages (numpy.ndarray): n_pages x block_size x d physical key storage (zero padded)
            value_pages (numpy.ndarray): n_pages x block_size x d_v physical value storage
            occupancy (numpy.ndarray): Tokens held by each logical page
            block_table (dict): Logical page index -> physical slot
            block_size (int): Tokens per page B_sz
            pooling (PagePooling): Summary pooling rule
        """
        self.key_pages = key_pages
        self.value_pages = value_pages
        self.occupancy = np.asarray(occupancy, dtype=int)
        self.block_table = dict(block_table)
        self.block_size = int(block_size)
        self.pooling = PagePooling(pooling)
        self.page_summaries = self._summaries()
        for arr in (self.key_pages, self.value_pages, self.page_summaries):
            arr.setflags(write=False)

    def _summaries(self):
        rows = []
        for page in range(self.page_count):
            keys = self.page_keys(page)
            if self.pooling is PagePooling.MAX:
                rows.append(keys.max(axis=0))
            else:
                rows.append(keys.mean(axis=0))
        return np.vstack(rows)

    @property
    def page_count(self):
        return len(self.occupancy)

    @property
    def token_count(self):
        """Context length T"""
        return int(self.occupancy.sum())

    @property
    def key_dim(self):
        return self.key_pages.shape[2]

    @property
    def value_dim(self):
        return self.value_pages.shape[2]

    def page_keys(self, page):
        """Keys of a logical page (occupied rows only)"""
        slot = self.block_table[page]
        return self.key_pages[slot, :self.occupancy[page]]

    def page_values(self, page):
        slot = self.block_table[page]
        return self.value_pages[slot, :self.occupancy[page]]

    def page_token_indices(self, page):
        """Logical token indices stored in a page"""
        start = page * self.block_size
        return np.arange(start, start + self.occupancy[page])

    def locate(self, tokens):
        """Physical (slot, offset) pairs of logical token indices"""
        tokens = np.asarray(tokens, dtype=int)
        pages = tokens // self.block_size
        slots = np.array([self.block_table[int(p)] for p in pages], dtype=int)
        return slots, tokens % self.block_size

    def gather_keys(self, tokens):
        slots, offsets = self.locate(tokens)
        return self.key_pages[slots, offsets]

    def gather_values(self, tokens):
        slots, offsets = self.locate(tokens)
        return self.value_pages[slots, offsets]

    @property
    def keys(self):
        """T x d keys in logical order"""
        return np.concatenate([self.page_keys(p) for p in range(self.page_count)])

    @property
    def values(self):
        """T x d_v values in logical order"""
        return np.concatenate([self.page_values(p) for p in range(self.page_count)])

    def __repr__(self):
        return (f"PagedKvCache(T={self.token_count}, pages={self.page_count}, "
                f"block_size={self.block_size}, d={self.key_dim}, d_v={self.value_dim})")


@dataclass
class RoutingConfig:
    """
    Sparse decode settings: routing budget, solver and fallback policy

    fallback_tau None means 0.05 * standard deviation of the candidate scores.
    """
    pages_p: int = 64
    candidates_kc: int = 128
    solver: SolverKind = SolverKind.EXPONENTIATED_GRADIENT
    epsilon: float = 0.1
    solver_iters: int = 2000
    fallback_tau: float = None
    policy: FallbackPolicy = FallbackPolicy.FALLBACK_TO_DENSE
    objective: SparseObjective = SparseObjective.QUADRATIC
    gap_tol: float = 1e-9
    adaptive_epsilon: bool = False
    target_leakage: float = 1e-6

    def __post_init__(self):
        self.solver = SolverKind.parse(self.solver)
        self.policy = FallbackPolicy(self.policy)
        self.objective = SparseObjective(self.objective)
        self.validate()

    def validate(self):
        if int(self.pages_p) < 1:
            raise ParameterError("pages_p", "must be at least 1")
        if int(self.candidates_kc) < 1:
            raise ParameterError("candidates_kc", "must be at least 1")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError("epsilon", "must be a positive finite number")
        if int(self.solver_iters) < 1:
            raise ParameterError("solver_iters", "must be at least 1")
        if self.fallback_tau is not None and self.fallback_tau < 0:
            raise ParameterError("fallback_tau", "must be nonnegative")
        if not 0 < self.target_leakage < 1:
            raise ParameterError("target_leakage", "must lie in (0, 1)")

    def to_dict(self):
        data = asdict(self)
        data['solver'] = self.solver.short_name
        data['policy'] = self.policy.value
        data['objective'] = self.objective.value
        return data


@dataclass
class DecodeStats:
    """Per-decode IO counters and diagnostics"""
    summary_reads: int = 0
    token_key_reads: int = 0
    value_reads: int = 0
    solver_iterations: int = 0
    gap_diag: float = math.nan
    used_fallback: bool = False
    mode: DecodeMode = DecodeMode.SPARSE
    solver_converged: bool = True
    solver_gap: float = 0.0
    epsilon: float = math.nan

    def merge(self, other):
        """Sum the IO counters of two decodes"""
        return DecodeStats(
            summary_reads=self.summary_reads + other.summary_reads,
            token_key_reads=self.token_key_reads + other.token_key_reads,
            value_reads=self.value_reads + other.value_reads,
            solver_iterations=self.solver_iterations + other.solver_iterations,
            gap_diag=self.gap_diag,
            used_fallback=self.used_fallback or other.used_fallback,
            mode=other.mode,
            solver_converged=self.solver_converged and other.solver_converged,
            solver_gap=max(self.solver_gap, other.solver_gap),
            epsilon=other.epsilon,
        )

    def to_dict(self):
        data = asdict(self)
        data['mode'] = self.mode.value
        return data


class DecodeOutput:
    """
    Result of one decode step: readout, sparse token weights and IO counters
    """

    def __init__(self, readout, token_indices, weights, stats):
        self.readout = readout
        self.token_indices = np.asarray(token_indices, dtype=int)
        self.weights = np.asarray(weights, dtype=float)
        self.stats = stats

    @property
    def weight_map(self):
        """Token index -> weight for tokens with a stored weight"""
        return {int(t): float(w) for t, w in zip(self.token_indices, self.weights)}

    def recompute_readout(self, cache):
        """Sum of weight * value row, gathered again from the cache"""
        return self.weights @ cache.gather_values(self.token_indices)

    def to_dict(self):
        return {
            'readout': self.readout.tolist(),
            'weights': {str(k): v for k, v in self.weight_map.items()},
            'stats': self.stats.to_dict(),
        }
