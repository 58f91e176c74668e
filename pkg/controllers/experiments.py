"""
Decode sweeps over context length and routing budget, reported as IO read counts
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from controllers.instances import build_planted_cache
from controllers.paged_attention import dense_decode, sparse_decode
from models.errors import SizeLimitError
from models.paged_cache import RoutingConfig

logger = logging.getLogger(__name__)

SCALING_COLUMNS = ['context', 'dense_token_reads', 'sparse_token_reads', 'sparse_value_reads',
                   'summary_reads', 'readout_dev', 'gap_diag', 'read_ratio', 'solver_iters', 'iters_cap']
ABLATION_COLUMNS = ['P', 'Kc', 'solver', 'token_reads', 'value_reads', 'solver_iters', 'readout_dev',
                    'summary_reads', 'gap_diag', 'iters_cap']


def check_memory(context, d, d_v, memory_budget):
    """Reject caches whose T * (d + d_v) doubles exceed the budget"""
    needed = int(context) * (int(d) + int(d_v))
    if needed > memory_budget:
        raise SizeLimitError(
            f"context {context} needs {needed} doubles for keys and values, above the budget {memory_budget}")
    return needed


def map_ordered(func, items, threads, desc, quiet):
    """Run func over items, in a thread pool when threads > 1, keeping input order"""
    items = list(items)
    with tqdm(total=len(items), desc=desc, disable=quiet, leave=False) as bar:
        if threads <= 1:
            results = []
            for item in items:
                results.append(func(item))
                bar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = []
            for result in pool.map(func, items):
                results.append(result)
                bar.update(1)
            return results


def _deviation(sparse, dense):
    return float(np.linalg.norm(sparse.readout - dense.readout))


def scaling_experiment(contexts, config, seed=0, d=64, d_v=64, block_size=16, gap=0.5,
                       memory_budget=2 ** 27, threads=1, quiet=True):
    """
    Dense against sparse decode read counts for each context length

    Each context gets its own planted cache on the stream (seed, index of the context).

    Args:
        contexts (list): Context lengths T
        config (RoutingConfig): Fixed routing budget and solver
        seed (int): Run seed
        memory_budget (int): Largest T * (d + d_v) allowed

    Returns:
        list: One row dict per context (SCALING_COLUMNS)
    """
    contexts = [int(t) for t in contexts]
    if not contexts:
        raise SizeLimitError("the context grid is empty")
    for context in contexts:
        check_memory(context, d, d_v, memory_budget)

    def run_cell(cell):
        index, context = cell
        cache, query, _ = build_planted_cache(context, d, d_v, block_size, gap, seed=seed, index=index)
        sparse = sparse_decode(cache, query, config)
        stats = sparse.stats
        dense = dense_decode(cache, query, stats.epsilon)
        logger.debug("T=%d sparse reads %d keys, %d values", context, stats.token_key_reads, stats.value_reads)
        return {
            'context': context,
            'dense_token_reads': dense.stats.token_key_reads,
            'sparse_token_reads': stats.token_key_reads,
            'sparse_value_reads': stats.value_reads,
            'summary_reads': stats.summary_reads,
            'readout_dev': _deviation(sparse, dense),
            'gap_diag': stats.gap_diag,
            'read_ratio': stats.token_key_reads / dense.stats.token_key_reads,
            'solver_iters': stats.solver_iterations,
            'iters_cap': int(not stats.solver_converged),
        }

    rows = map_ordered(run_cell, enumerate(contexts), threads, "contexts", quiet)
    reads = {row['sparse_token_reads'] for row in rows}
    if len(reads) > 1:
        logger.warning("sparse token reads vary across contexts: %s (partial pages routed?)", sorted(reads))
    return rows


def ablation_experiment(pages_grid, candidates_grid, solvers, context, config, seed=0, d=64, d_v=64,
                        block_size=16, gap=0.5, solver_iters=None, memory_budget=2 ** 27, threads=1, quiet=True):
    """
    Read counts and solver effort over a (P, K_c, solver, iteration cap) grid on one cache

    Returns:
        list: One row dict per cell in grid order (ABLATION_COLUMNS)
    """
    if not (pages_grid and candidates_grid and solvers):
        raise SizeLimitError("ablation grids must be non-empty")
    check_memory(context, d, d_v, memory_budget)
    caps = list(solver_iters or [config.solver_iters])
    cache, query, _ = build_planted_cache(int(context), d, d_v, block_size, gap, seed=seed, index=0)
    dense = dense_decode(cache, query, config.epsilon)
    cells = [(p, kc, solver, cap) for p in pages_grid for kc in candidates_grid for solver in solvers for cap in caps]

    def run_cell(cell):
        pages_p, candidates_kc, solver, cap = cell
        cell_config = RoutingConfig(
            pages_p=int(pages_p), candidates_kc=int(candidates_kc), solver=solver, epsilon=config.epsilon,
            solver_iters=int(cap), objective=config.objective, gap_tol=config.gap_tol,
            adaptive_epsilon=config.adaptive_epsilon, target_leakage=config.target_leakage,
        )
        sparse = sparse_decode(cache, query, cell_config)
        stats = sparse.stats
        reference = dense if stats.epsilon == config.epsilon else dense_decode(cache, query, stats.epsilon)
        return {
            'P': int(pages_p),
            'Kc': int(candidates_kc),
            'solver': cell_config.solver.short_name,
            'token_reads': stats.token_key_reads,
            'value_reads': stats.value_reads,
            'solver_iters': stats.solver_iterations,
            'readout_dev': _deviation(sparse, reference),
            'summary_reads': stats.summary_reads,
            'gap_diag': stats.gap_diag,
            'iters_cap': int(cap),
        }

    return map_ordered(run_cell, cells, threads, "ablation", quiet)
