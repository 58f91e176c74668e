"""
Paged sparse decode simulator: page routing, token routing, candidate solve and value gather
with IO-count accounting, plus the dense softmax baseline and the gap-driven fallback
"""
import logging
import math

import numpy as np
from scipy.special import logsumexp

from controllers.entropic import epsilon_for_leakage, solve_entropic
from models.dictionary import Dictionary, UndefinedGap, as_finite_vector, is_defined
from models.entropic import EntropicConfig
from models.errors import NonFiniteInputError, ParameterError
from models.paged_cache import (
    DecodeMode,
    DecodeOutput,
    DecodeStats,
    FallbackPolicy,
    PagedKvCache,
    PagePooling,
    SparseObjective,
)
from utils.helpers import read_fstb, write_fstb

logger = logging.getLogger(__name__)

# Default fallback threshold as a fraction of the candidate score standard deviation
DEFAULT_TAU_FRACTION = 0.05


def build_cache(keys, values, block_size, pooling=PagePooling.MEAN, physical_order=None):
    """
    Lay keys and values out in fixed-size pages and compute page summaries

    Args:
        keys (array-like): T x d key rows in logical order
        values (array-like): T x d_v value rows
        block_size (int): Tokens per page
        pooling (PagePooling): Summary pooling (mean by default)
        physical_order (array-like, optional): Physical slot of each logical page (a permutation)

    Returns:
        PagedKvCache: The immutable cache
    """
    keys = np.asarray(keys, dtype=float)
    values = np.asarray(values, dtype=float)
    if keys.ndim != 2 or values.ndim != 2:
        raise ParameterError("keys", "keys and values must be 2-D arrays")
    if keys.shape[0] < 1:
        raise ParameterError("keys", "need at least one token")
    if keys.shape[0] != values.shape[0]:
        raise ParameterError("values", f"{values.shape[0]} value rows for {keys.shape[0]} key rows")
    if int(block_size) < 1:
        raise ParameterError("block_size", "must be at least 1")
    if not (np.all(np.isfinite(keys)) and np.all(np.isfinite(values))):
        raise NonFiniteInputError("keys or values contain non-finite entries")

    block_size = int(block_size)
    tokens = keys.shape[0]
    n_pages = -(-tokens // block_size)
    if physical_order is None:
        physical_order = np.arange(n_pages)
    physical_order = np.asarray(physical_order, dtype=int)
    if sorted(physical_order.tolist()) != list(range(n_pages)):
        raise ParameterError("physical_order", f"must be a permutation of 0..{n_pages - 1}")

    key_pages = np.zeros((n_pages, block_size, keys.shape[1]))
    value_pages = np.zeros((n_pages, block_size, values.shape[1]))
    occupancy = np.zeros(n_pages, dtype=int)
    for page in range(n_pages):
        start, stop = page * block_size, min((page + 1) * block_size, tokens)
        slot = physical_order[page]
        key_pages[slot, :stop - start] = keys[start:stop]
        value_pages[slot, :stop - start] = values[start:stop]
        occupancy[page] = stop - start
    block_table = {page: int(physical_order[page]) for page in range(n_pages)}
    return PagedKvCache(key_pages, value_pages, occupancy, block_table, block_size, pooling)


def write_cache(path, cache):
    """Export a cache as FSTB keys followed by the value section"""
    return write_fstb(path, cache.keys, cache.values, cache.block_size)


def read_cache(path, block_size=None):
    """Import a cache from an FSTB file with a value section"""
    keys, values, stored_block = read_fstb(path)
    if values is None:
        raise ParameterError("input", f"{path} has no value section")
    return build_cache(keys, values, block_size or stored_block or 16)


def route_pages(cache, q, pages_p, stats=None):
    """
    Top-P pages by <q, page summary>, ranked, ties to the lower page index

    Every page summary is read once.
    """
    if int(pages_p) < 1:
        raise ParameterError("pages_p", "must be at least 1")
    q = as_finite_vector(q, "q", cache.key_dim)
    if pages_p > cache.page_count:
        logger.warning("P=%d exceeds the %d pages in the cache; clamping", pages_p, cache.page_count)
        pages_p = cache.page_count
    scores = cache.page_summaries @ q
    if stats is not None:
        stats.summary_reads += cache.page_count
    return [int(p) for p in np.argsort(-scores, kind='stable')[:pages_p]]


def route_tokens(cache, page_list, q, candidates_kc, stats=None):
    """
    Top-K_c tokens by <q, k_i> among the routed pages, ties to the lower token index

    Every key in the routed pages is read. Returns the selected token indices in ascending order.
    """
    if int(candidates_kc) < 1:
        raise ParameterError("candidates_kc", "must be at least 1")
    q = as_finite_vector(q, "q", cache.key_dim)
    tokens = np.concatenate([cache.page_token_indices(p) for p in sorted(page_list)])
    keys = np.concatenate([cache.page_keys(p) for p in sorted(page_list)])
    if stats is not None:
        stats.token_key_reads += tokens.shape[0]
    if tokens.shape[0] <= candidates_kc:
        if tokens.shape[0] < candidates_kc:
            logger.debug("only %d tokens routed for K_c=%d; returning all", tokens.shape[0], candidates_kc)
        return tokens
    order = np.argsort(-(keys @ q), kind='stable')[:candidates_kc]
    return np.sort(tokens[order])


def gap_diagnostic(scores):
    """s_(1) - s_(2) of the scores, UndefinedGap with fewer than two scores"""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.shape[0] < 2:
        return UndefinedGap("too-few-scores")
    top_two = np.partition(scores, scores.shape[0] - 2)[-2:]
    return float(top_two[1] - top_two[0])


def _softmax(scores, epsilon):
    logits = scores / epsilon
    return np.exp(logits - logsumexp(logits))


def dense_decode(cache, q, epsilon):
    """Softmax attention exp(<q, k_i> / eps) / Z over every token"""
    if not epsilon > 0:
        raise ParameterError("epsilon", "must be positive")
    q = as_finite_vector(q, "q", cache.key_dim)
    scores = cache.keys @ q
    weights = _softmax(scores, epsilon)
    gap = gap_diagnostic(scores)
    stats = DecodeStats(
        token_key_reads=cache.token_count,
        value_reads=cache.token_count,
        gap_diag=float(gap) if is_defined(gap) else math.nan,
        mode=DecodeMode.DENSE,
        epsilon=epsilon,
    )
    return DecodeOutput(weights @ cache.values, np.arange(cache.token_count), weights, stats)


def _route(cache, q, config, stats):
    pages = route_pages(cache, q, config.pages_p, stats)
    tokens = route_tokens(cache, pages, q, config.candidates_kc, stats)
    return tokens, cache.gather_keys(tokens) @ q


def _solve_candidates(cache, q, config, tokens, scores, stats):
    """Weights on the routed candidates and the gathered readout"""
    epsilon = config.epsilon
    gap = gap_diagnostic(scores)
    stats.gap_diag = float(gap) if is_defined(gap) else math.nan
    if config.adaptive_epsilon and is_defined(gap) and gap > 0:
        adapted = epsilon_for_leakage(gap, tokens.shape[0] - 1, config.target_leakage)
        epsilon = min(epsilon, max(adapted, epsilon / 4.0))
    stats.epsilon = epsilon

    if config.objective is SparseObjective.LINEAR:
        weights = _softmax(scores, epsilon)
    else:
        keys = cache.gather_keys(tokens)
        solver_config = EntropicConfig(epsilon=epsilon, solver=config.solver,
                                       max_iters=config.solver_iters, gap_tol=config.gap_tol)
        solution = solve_entropic(Dictionary(keys.T), q, solver_config)
        weights = solution.alpha.weights
        stats.solver_iterations += solution.iters
        stats.solver_converged = solution.converged
        stats.solver_gap = solution.dual_gap
        if not solution.converged:
            logger.warning("candidate solve did not reach gap %.1e (gap %.3e); using best iterate",
                           config.gap_tol, solution.dual_gap)
    values = cache.gather_values(tokens)
    stats.value_reads += tokens.shape[0]
    return DecodeOutput(weights @ values, tokens, weights, stats)


def sparse_decode(cache, q, config):
    """
    Route pages, route tokens, solve on the candidates and gather their values

    Args:
        cache (PagedKvCache): The KV cache
        q (array-like): Decode query
        config (RoutingConfig): Routing budget, solver and objective

    Returns:
        DecodeOutput: Readout, candidate weights and IO counters
    """
    config.validate()
    q = as_finite_vector(q, "q", cache.key_dim)
    stats = DecodeStats(mode=DecodeMode.SPARSE)
    tokens, scores = _route(cache, q, config, stats)
    return _solve_candidates(cache, q, config, tokens, scores, stats)


def default_tau(scores):
    """0.05 times the standard deviation of the candidate scores"""
    scores = np.asarray(scores, dtype=float)
    return DEFAULT_TAU_FRACTION * float(scores.std()) if scores.size else 0.0


def decode_with_fallback(cache, q, config):
    """
    Sparse decode guarded by the gap diagnostic on the routed candidates

    With policy fallback-to-dense and gap < tau the dense readout is returned
    (routing reads are still counted); cap-compute always keeps the sparse output.
    """
    config.validate()
    q = as_finite_vector(q, "q", cache.key_dim)
    stats = DecodeStats(mode=DecodeMode.SPARSE)
    tokens, scores = _route(cache, q, config, stats)
    gap = gap_diagnostic(scores)
    tau = config.fallback_tau if config.fallback_tau is not None else default_tau(scores)
    if is_defined(gap) and gap < tau:
        if config.policy is FallbackPolicy.FALLBACK_TO_DENSE:
            logger.info("gap diagnostic %.3e < tau %.3e: falling back to dense", gap, tau)
            dense = dense_decode(cache, q, config.epsilon)
            merged = stats.merge(dense.stats)
            merged.gap_diag = gap
            merged.used_fallback = True
            merged.mode = DecodeMode.DENSE
            return DecodeOutput(dense.readout, dense.token_indices, dense.weights, merged)
        logger.info("gap diagnostic %.3e < tau %.3e: cap-compute keeps the sparse output", gap, tau)
    return _solve_candidates(cache, q, config, tokens, scores, stats)


def off_candidate_mass(cache, q, candidates, epsilon):
    """Dense softmax mass on tokens outside the candidate set"""
    scores = cache.keys @ as_finite_vector(q, "q", cache.key_dim)
    mask = np.ones(cache.token_count, dtype=bool)
    mask[np.asarray(candidates, dtype=int)] = False
    if not mask.any():
        return 0.0
    logits = scores / epsilon
    return float(np.exp(logsumexp(logits[mask]) - logsumexp(logits)))


def leakage_bound(cache, q, candidates, epsilon):
    """
    Truncation bound 2 * m_off * max ||v|| on ||y_sparse - y_dense|| for the linear objective

    m_off is the dense softmax mass off the candidate set.
    """
    max_value_norm = float(np.linalg.norm(cache.values, axis=1).max())
    return 2.0 * off_candidate_mass(cache, q, candidates, epsilon) * max_value_norm
