"""
Synthetic instance generators: Gaussian dictionaries, planted faces, the two-atom tie,
and KV-cache workloads for the decode simulator
"""
import logging

import numpy as np

from controllers.paged_attention import build_cache
from models.dictionary import Dictionary, Instance
from models.errors import ParameterError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

INSTANCE_KINDS = ("gaussian", "planted-face", "tie", "adversarial-paging")

INSTANCE_DEFAULTS = {
    'gaussian': {'m': 64, 'd': 8, 'scale': 2.0},
    'planted-face': {'m': 24, 'd': 6, 'k': 3, 'gap': 0.5, 'spread': 1.0, 'offset': 1.0,
                     'height': 1.0, 'center': 0.5, 'max_norm': 50.0, 'symmetric': False},
    'tie': {'delta': 0.0},
    'adversarial-paging': {'context': 256, 'd': 16, 'd_v': 16, 'block_size': 16, 'gap': 0.5},
}


def _resolve(kind, params):
    if kind not in INSTANCE_DEFAULTS:
        raise ParameterError("kind", f"unknown instance kind '{kind}' (valid: {', '.join(INSTANCE_KINDS)})")
    resolved = dict(INSTANCE_DEFAULTS[kind])
    for name, value in (params or {}).items():
        if name not in resolved:
            valid = ", ".join(sorted(resolved))
            raise ParameterError(name, f"not a parameter of '{kind}' instances (valid: {valid})")
        resolved[name] = value
    return resolved


def _unit(rng, dim):
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def _orthogonal(vectors, normal):
    """Remove the component along a unit normal from each row"""
    return vectors - np.outer(vectors @ normal, normal)


def generate_instance(kind, params=None, seed=0, index=0):
    """
    Generate a dictionary and query of the given kind

    Args:
        kind (str): gaussian, planted-face, tie or adversarial-paging
        params (dict, optional): Overrides of INSTANCE_DEFAULTS[kind]
        seed (int): Run seed
        index (int): Instance index (the generator stream is (seed, index))

    Returns:
        Instance: Planted kinds carry the ground-truth face, gap and weights
    """
    p = _resolve(kind, params)
    rng = make_rng(seed, index)
    if kind == "gaussian":
        atoms = rng.standard_normal((int(p['d']), int(p['m'])))
        query = float(p['scale']) * rng.standard_normal(int(p['d']))
        return Instance(kind, Dictionary(atoms), query, seed, index)
    if kind == "tie":
        return Instance(kind, Dictionary([[0.0, 1.0]]), np.array([0.5 + float(p['delta'])]), seed, index,
                        face=[0, 1], weights=np.array([0.5, 0.5]))
    if kind == "planted-face":
        return _planted_face(p, rng, seed, index)
    cache_info = build_adversarial_cache(int(p['context']), int(p['d']), int(p['d_v']),
                                         int(p['block_size']), float(p['gap']), seed=seed, index=index)
    cache, query, info = cache_info
    return Instance(kind, Dictionary(cache.keys.T), query, seed, index, face=info['face_tokens'],
                    gap=float(p['gap']), values=cache.values)


def _planted_face(p, rng, seed, index):
    """
    Face atoms share the score <n, u> = height along a unit normal n; off-face atoms are
    shifted along n so that the best of them scores exactly height - gap / offset.
    The query sits at offset along n above a planted interior point of the face.
    """
    m_count, dim, k = int(p['m']), int(p['d']), int(p['k'])
    gap, offset, height = float(p['gap']), float(p['offset']), float(p['height'])
    if not 1 <= k <= min(dim, m_count - 1):
        raise ParameterError("k", f"face size must lie in [1, min(d, m - 1)] = [1, {min(dim, m_count - 1)}]")
    if not gap > 0:
        raise ParameterError("gap", "must be positive")

    normal = _unit(rng, dim)
    center = float(p['center']) * _orthogonal(rng.standard_normal((1, dim)), normal)[0]
    spread = _orthogonal(rng.standard_normal((k, dim)), normal) * float(p['spread'])
    face_atoms = center + height * normal + spread
    if p['symmetric']:
        weights = np.full(k, 1.0 / k)
    else:
        weights = 0.5 * rng.dirichlet(np.ones(k)) + 0.5 / k
    readout = weights @ face_atoms
    query = readout + offset * normal

    off_atoms = rng.standard_normal((m_count - k, dim))
    shift = (height - gap / offset) - float((off_atoms @ normal).max())
    off_atoms = off_atoms + shift * normal
    largest = float(np.linalg.norm(np.vstack([face_atoms, off_atoms]), axis=1).max())
    if largest > float(p['max_norm']):
        raise ParameterError("gap", f"gap {gap} needs atoms of norm {largest:.3g}, above the budget {p['max_norm']}")

    order = rng.permutation(m_count)
    rows = np.empty((m_count, dim))
    rows[order[:k]] = face_atoms
    rows[order[k:]] = off_atoms
    face = sorted(int(i) for i in order[:k])
    planted = np.zeros(m_count)
    planted[order[:k]] = weights
    return Instance("planted-face", Dictionary.from_rows(rows), query, seed, index,
                    face=face, gap=gap, weights=planted)


def _score_keys(rng, scores, normal, dim, q_norm):
    """Keys whose projection on the query direction gives exactly the requested scores"""
    keys = _orthogonal(rng.standard_normal((scores.shape[0], dim)), normal)
    return keys + np.outer(scores / q_norm, normal)


def build_planted_cache(context, d, d_v, block_size, gap, face_size=1, seed=0, index=0,
                        page=None, q_norm=1.0):
    """
    Cache whose planted page holds the top-scoring face tokens

    Face tokens score gap above every other token; the remaining tokens of the
    planted page score exactly the runner-up value, so the planted page has the
    largest summary and the top-two gap on any candidate set containing it is
    gap (for face_size = 1).

    Returns:
        tuple: (PagedKvCache, query, info dict with face_tokens, page, gap)
    """
    if context < block_size:
        raise ParameterError("context", "must hold at least one full page")
    if not 1 <= face_size <= block_size:
        raise ParameterError("face_size", f"must lie in [1, {block_size}]")
    rng = make_rng(seed, index)
    normal = _unit(rng, d)
    query = q_norm * normal
    full_pages = context // block_size
    page = full_pages // 2 if page is None else int(page)
    if not 0 <= page < full_pages:
        raise ParameterError("page", f"must be a full page index in [0, {full_pages})")

    scores = rng.standard_normal(context)
    runner_up = float(scores.max())
    start = page * block_size
    scores[start:start + block_size] = runner_up
    face_tokens = list(range(start, start + face_size))
    scores[face_tokens] = runner_up + gap
    keys = _score_keys(rng, scores, normal, d, q_norm)
    values = rng.standard_normal((context, d_v))
    cache = build_cache(keys, values, block_size)
    return cache, query, {'face_tokens': face_tokens, 'page': page, 'gap': gap}


def build_tie_cache(context, d, d_v, block_size, gap=0.5, seed=0, index=0):
    """Planted cache with two identical top-scoring keys, so the gap diagnostic is exactly 0"""
    rng = make_rng(seed, index)
    cache, query, info = build_planted_cache(context, d, d_v, block_size, gap, face_size=2,
                                             seed=seed, index=index)
    keys = cache.keys.copy()
    first, second = info['face_tokens']
    keys[second] = keys[first]
    values = cache.values.copy()
    values[second] = rng.standard_normal(d_v)
    return build_cache(keys, values, block_size), query, info


def build_adversarial_cache(context, d, d_v, block_size, gap=0.5, seed=0, index=0):
    """
    The best token hides in a page of very low-scoring tokens

    Its page summary ranks last, so small page budgets miss it; its value row
    is large so the miss shows in the readout.
    """
    if context < 2 * block_size:
        raise ParameterError("context", "needs at least two full pages")
    rng = make_rng(seed, index)
    normal = _unit(rng, d)
    query = normal.copy()
    full_pages = context // block_size
    page = full_pages - 1

    scores = rng.standard_normal(context)
    top = float(scores.max())
    start = page * block_size
    scores[start:start + block_size] = -4.0 * (abs(top) + gap + 1.0)
    scores[start] = top + gap
    keys = _score_keys(rng, scores, normal, d, 1.0)
    values = rng.standard_normal((context, d_v))
    values[start] = 10.0 * _unit(rng, d_v)
    cache = build_cache(keys, values, block_size)
    return cache, query, {'face_tokens': [start], 'page': page, 'gap': gap}
