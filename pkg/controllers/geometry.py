"""
Exact Euclidean projection onto conv(U), exposed faces, KKT multipliers and face conditioning
"""
import logging
import math
from itertools import combinations

import numpy as np
from scipy.linalg import null_space

from models.dictionary import (
    ACTIVE_THRESHOLD,
    Dictionary,
    FaceGeometry,
    ProjectionSolution,
    SimplexWeights,
    UndefinedGap,
    as_finite_vector,
)
from models.errors import ParameterError, ProjectionError, SizeLimitError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

# Relative tolerance for argmax ties in support-function evaluations
TIE_TOLERANCE = 1e-8
# Subset enumeration is 2^M
ORACLE_MAX_ATOMS = 16
_BASIS_STOP = 1e-10
_FEASIBLE_SLACK = 1e-12


def objective_gradient(dictionary, q, alpha):
    """Gradient U^T (U alpha - q) of 0.5 * ||U alpha - q||^2"""
    return dictionary.atoms.T @ (dictionary.combine(alpha) - q)


def frank_wolfe_gap_from_gradient(gradient, alpha):
    """<grad, alpha> - min_j grad_j, clipped at zero"""
    return max(float(gradient @ alpha - gradient.min()), 0.0)


def _constrained_least_squares(dictionary, q, support):
    """
    Minimize ||U_S a - q|| subject to sum(a) = 1 by eliminating the anchor coordinate

    Returns the minimum-norm solution on the support as an array aligned with support.
    """
    cols = dictionary.atoms[:, support]
    anchor = cols[:, 0]
    if len(support) == 1:
        return np.ones(1)
    shifted = cols[:, 1:] - anchor[:, None]
    coeffs = np.linalg.lstsq(shifted, q - anchor, rcond=None)[0]
    return np.concatenate([[1.0 - coeffs.sum()], coeffs])


def _scatter(m_count, support, values):
    full = np.zeros(m_count)
    full[support] = values
    return full


def _build_solution(dictionary, q, alpha_raw, iterations=0):
    """Assemble readout, residual, multipliers and gap around optimal weights"""
    alpha = SimplexWeights.normalized(alpha_raw)
    weights = alpha.weights
    readout = dictionary.combine(weights)
    residual = q - readout
    active_set = alpha.support(ACTIVE_THRESHOLD)
    scores = dictionary.atoms.T @ residual
    nu = float(np.mean(scores[active_set]))
    mu = np.maximum(nu - scores, 0.0)
    mu[active_set] = 0.0
    inactive = [j for j in range(dictionary.m_count) if j not in set(active_set)]
    gap = float(mu[inactive].min()) if inactive else math.inf
    gradient = -scores
    return ProjectionSolution(
        alpha=alpha,
        readout=readout,
        residual=residual,
        active_set=active_set,
        nu=nu,
        mu=mu,
        gap=gap,
        objective=0.5 * float(residual @ residual),
        iterations=iterations,
        fw_gap=frank_wolfe_gap_from_gradient(gradient, weights),
    )


def project_onto_hull(dictionary, q, tol=1e-12, max_iters=None):
    """
    Project q onto conv(U) with a primal active-set method on the simplex

    The support starts at the nearest single vertex. Each pass solves the
    equality-constrained least squares on the support, steps back to the
    feasible segment and drops coordinates that hit zero, then adds the index
    with the most negative multiplier.

    Args:
        dictionary (Dictionary): Atoms U
        q (array-like): Query in R^d
        tol (float): Target Frank-Wolfe gap (objective suboptimality)
        max_iters (int, optional): Pass cap, defaults to 10 * M + 50

    Returns:
        ProjectionSolution: Optimal weights with KKT multipliers and face gap
    """
    if not tol > 0:
        raise ParameterError("tol", "must be positive")
    q = as_finite_vector(q, "q", dictionary.dim)
    m_count = dictionary.m_count
    if max_iters is None:
        max_iters = 10 * m_count + 50

    atoms = dictionary.atoms
    scale = float(np.abs(atoms).max()) ** 2 + float(np.abs(atoms).max()) * float(np.abs(q).max())
    effective_tol = max(tol, 64 * np.finfo(float).eps * max(scale, 1.0))

    distances = np.linalg.norm(atoms - q[:, None], axis=0)
    support = [int(np.argmin(distances))]
    alpha = _scatter(m_count, support, [1.0])
    best_objective = math.inf

    for iteration in range(1, max_iters + 1):
        # inner loop keeps alpha feasible while the support solution has nonpositive entries
        while True:
            candidate = _constrained_least_squares(dictionary, q, support)
            if candidate.min() > 0:
                alpha = _scatter(m_count, support, candidate)
                break
            target = _scatter(m_count, support, candidate)
            blocking = [i for i in support if target[i] <= 0]
            step = min(alpha[i] / (alpha[i] - target[i]) if alpha[i] > 0 else 0.0 for i in blocking)
            alpha = alpha + step * (target - alpha)
            support = [i for i in support if alpha[i] > _FEASIBLE_SLACK]
            alpha[[i for i in range(m_count) if i not in support]] = 0.0
            alpha /= alpha.sum()

        gradient = objective_gradient(dictionary, q, alpha)
        fw_gap = frank_wolfe_gap_from_gradient(gradient, alpha)
        residual = atoms @ alpha - q
        objective = 0.5 * float(residual @ residual)
        logger.debug("active-set pass %d: |S|=%d objective=%.6e fw_gap=%.3e",
                     iteration, len(support), objective, fw_gap)
        if fw_gap <= effective_tol:
            return _build_solution(dictionary, q, alpha, iteration)
        if math.isfinite(best_objective) and objective >= best_objective - 1e-15 * (1.0 + best_objective):
            # no progress: the violation is at round-off level
            logger.warning("active-set stalled after %d passes at fw_gap=%.3e (tol %.1e); "
                           "returning the last iterate", iteration, fw_gap, effective_tol)
            return _build_solution(dictionary, q, alpha, iteration)
        best_objective = objective

        multipliers = gradient - gradient[support].mean()
        multipliers[support] = math.inf
        entering = int(np.argmin(multipliers))
        support = sorted(support + [entering])

    gradient = objective_gradient(dictionary, q, alpha)
    raise ProjectionError(f"active-set solver did not converge in {max_iters} passes",
                          best_alpha=alpha, fw_gap=frank_wolfe_gap_from_gradient(gradient, alpha))


def brute_force_projection(dictionary, q):
    """
    Exact projection by enumerating every vertex subset (test oracle, M <= 16)

    Each subset gets the equality-constrained least squares with the unit-sum
    constraint; the feasible solution with the smallest objective wins.
    """
    m_count = dictionary.m_count
    if m_count > ORACLE_MAX_ATOMS:
        raise SizeLimitError(f"brute-force oracle enumerates 2^M subsets; M={m_count} exceeds {ORACLE_MAX_ATOMS}")
    q = as_finite_vector(q, "q", dictionary.dim)
    best_alpha = None
    best_objective = math.inf
    for size in range(1, m_count + 1):
        for subset in combinations(range(m_count), size):
            support = list(subset)
            candidate = _constrained_least_squares(dictionary, q, support)
            if candidate.min() < -_FEASIBLE_SLACK:
                continue
            residual = dictionary.atoms[:, support] @ candidate - q
            objective = 0.5 * float(residual @ residual)
            # the first feasible subset always wins; later ones must beat it beyond round-off
            if best_alpha is None or objective < best_objective - 1e-15 * (1.0 + best_objective):
                best_objective = objective
                best_alpha = _scatter(m_count, support, np.clip(candidate, 0.0, None))
    return _build_solution(dictionary, q, best_alpha, iterations=2 ** m_count - 1)


def support_function(dictionary, r, tie_tolerance=TIE_TOLERANCE):
    """
    Evaluate h_K(r) = max_i <r, u_i> and the atoms attaining it

    Returns:
        tuple: (value, sorted argmax indices within the relative tie tolerance)
    """
    r = as_finite_vector(r, "r", dictionary.dim)
    scores = dictionary.atoms.T @ r
    value = float(scores.max())
    slack = tie_tolerance * float(np.abs(scores).max())
    ties = [int(i) for i in np.flatnonzero(scores >= value - slack)]
    return value, ties


def face_gap(dictionary, solution):
    """
    Face gap h_K(r*) - max_{j not in I} <r*, u_j> of a projection

    Returns UndefinedGap when q lies in the hull (r* ~ 0) or every atom is active.
    """
    residual = solution.residual
    scale = 1.0 + float(np.abs(solution.readout).max()) + float(np.abs(residual).max())
    if float(np.linalg.norm(residual)) <= 1e-12 * scale:
        return UndefinedGap("interior-query")
    inactive = solution.inactive_set
    if not inactive:
        return UndefinedGap("all-active")
    scores = dictionary.atoms.T @ residual
    return float(scores.max() - scores[inactive].max())


def kkt_residual(dictionary, q, solution):
    """Infinity norm of U^T (U alpha - q) + nu * 1 - mu"""
    gradient = objective_gradient(dictionary, np.asarray(q, dtype=float), solution.alpha.weights)
    return float(np.abs(gradient + solution.nu - solution.mu).max())


def _greedy_vertices(dictionary, face):
    """Pick i_0 = min(face) and add vertices farthest from the current span"""
    anchor = face[0]
    remaining = list(face[1:])
    directions = {i: dictionary.column(i) - dictionary.column(anchor) for i in remaining}
    chosen = []
    ortho = np.zeros((dictionary.dim, 0))
    scale = max((float(np.linalg.norm(v)) for v in directions.values()), default=0.0)
    while remaining and ortho.shape[1] < dictionary.dim:
        best, best_norm, best_resid = None, -1.0, None
        for i in remaining:
            resid = directions[i] - ortho @ (ortho.T @ directions[i])
            norm = float(np.linalg.norm(resid))
            if norm > best_norm:
                best, best_norm, best_resid = i, norm, resid
        if chosen:
            basis_norm = float(np.linalg.norm(np.column_stack([directions[i] for i in chosen]), 2))
            scale = max(basis_norm, 1e-300)
        if best_norm < _BASIS_STOP * max(scale, 1e-300):
            break
        chosen.append(best)
        remaining.remove(best)
        ortho = np.column_stack([ortho, best_resid / best_norm])
    return [anchor] + chosen, [directions[i] for i in chosen]


def tangent_basis(dictionary, face, alpha=None, samples=256, seed=0):
    """
    Tangent basis of a face and its conditioning constants

    Args:
        dictionary (Dictionary): Atoms U
        face (list): Active index set I
        alpha (SimplexWeights or array-like, optional): Projection weights; enables rho and G_F(rho)
        samples (int): Core points sampled for the empirical gradient supremum
        seed (int): Seed for the core sampling

    Returns:
        FaceGeometry: Basis, sigma_min, kappa_F, ||B||, rho, c(rho), G_F(rho)
    """
    face = sorted(int(i) for i in face)
    if not face:
        raise ParameterError("face", "must be non-empty")
    vertices, columns = _greedy_vertices(dictionary, face)
    if columns:
        basis = np.column_stack(columns)
        singular = np.linalg.svd(basis, compute_uv=False)
        sigma_min = float(singular[-1])
        basis_norm = float(singular[0])
    else:
        basis = np.zeros((dictionary.dim, 0))
        sigma_min = 1.0
        basis_norm = 0.0
    if len(vertices) < len(face) and len(face) - 1 <= dictionary.dim:
        logger.info("face %s is affinely dependent: dimension reduced to %d", face, basis.shape[1])

    core_radius, floor, grad_bound, grad_empirical = 0.0, 0.0, math.inf, None
    if alpha is not None:
        weights = alpha.weights if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=float)
        face_weights = weights[face] if weights.shape[0] == dictionary.m_count else weights
        face_weights = face_weights / face_weights.sum()
        core_radius = 0.5 * float(face_weights.min())
        floor = core_radius
        grad_bound = math.sqrt(len(face)) * (abs(math.log(floor)) + 1.0)
        grad_empirical = _sample_core_gradient(face_weights, floor, samples, seed)

    return FaceGeometry(
        face_indices=face,
        vertex_indices=vertices,
        basis=basis,
        sigma_min=sigma_min,
        kappa=1.0 / sigma_min,
        basis_norm=basis_norm,
        core_radius=core_radius,
        coordinate_floor=floor,
        entropic_grad_bound=grad_bound,
        entropic_grad_empirical=grad_empirical,
    )


def _sample_core_gradient(face_weights, floor, samples, seed):
    """Largest ||log a + 1|| over random face points whose coordinates stay >= floor"""
    best = float(np.linalg.norm(np.log(face_weights) + 1.0))
    k = face_weights.shape[0]
    if k == 1 or samples <= 0:
        return best
    rng = make_rng(seed)
    for _ in range(samples):
        direction = rng.standard_normal(k)
        direction -= direction.mean()
        negative = direction < 0
        if not negative.any():
            continue
        t_max = float(np.min((face_weights[negative] - floor) / -direction[negative]))
        point = face_weights + rng.uniform(0.0, max(t_max, 0.0)) * direction
        best = max(best, float(np.linalg.norm(np.log(point) + 1.0)))
    return best


def face_tangent_curvature(dictionary, face):
    """
    Smallest eigenvalue mu_F of U_I^T U_I restricted to {v : sum(v) = 0}

    A single-vertex face has no tangent directions and returns +inf.
    """
    face = sorted(int(i) for i in face)
    if len(face) == 1:
        return math.inf
    cols = dictionary.atoms[:, face]
    tangent = null_space(np.ones((1, len(face))))
    restricted = tangent.T @ (cols.T @ cols) @ tangent
    return float(np.linalg.eigvalsh(restricted).min())


def tangent_projector(size):
    """P_T = I - 11^T / k onto the sum-zero subspace"""
    return np.eye(size) - np.full((size, size), 1.0 / size)
