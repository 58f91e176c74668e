"""
Entropic-regularized projection, pseudo-multipliers, Frank-Wolfe certificates and the epsilon prescription
"""
import logging
import math

import numpy as np
from scipy.special import logsumexp

from controllers.geometry import (
    face_tangent_curvature,
    frank_wolfe_gap_from_gradient,
    objective_gradient,
    tangent_basis,
)
from models.dictionary import SimplexWeights, as_finite_vector
from models.entropic import (
    WEIGHT_FLOOR,
    EntropicConfig,
    EntropicSolution,
    FrankWolfeResult,
    FwCertificate,
    ScreeningResult,
    SolverKind,
    StepRule,
    weights_from_log,
)
from models.errors import ParameterError

logger = logging.getLogger(__name__)

# Exponentiated-gradient passes between Newton polish attempts
POLISH_INTERVAL = 200
_NEWTON_MAX_STEPS = 60
_NEWTON_MAX_HALVINGS = 40
# Dense (M+1)^2 Jacobians above this size are skipped
NEWTON_MAX_ATOMS = 1024


def _regularized_gradient(hessian, linear, z, epsilon):
    """(quadratic gradient, full gradient) at alpha = exp(z)"""
    alpha = np.exp(z)
    smooth = hessian @ alpha - linear
    return smooth, smooth + epsilon * (z + 1.0)


def _regularized_objective(dictionary, q, z, epsilon):
    alpha = np.exp(z)
    residual = dictionary.combine(alpha) - q
    return 0.5 * float(residual @ residual) + epsilon * float(alpha @ z)


def _stationarity(full_gradient):
    """Infinity-norm residual of grad + nu * 1 = 0 with the best constant nu"""
    return 0.5 * float(full_gradient.max() - full_gradient.min())


def _normalize_log(z):
    return z - logsumexp(z)


def _newton_polish(hessian, linear, z, epsilon):
    """
    Damped Newton on F(z, nu) = [H e^z - b + nu + eps (1 + z); sum(e^z) - 1] = 0

    Returns (z, steps) on success and (None, steps) when the line search stalls.
    """
    m_count = z.shape[0]
    if m_count > NEWTON_MAX_ATOMS:
        return None, 0

    def residual(z_val, nu_val):
        alpha = np.exp(z_val)
        top = hessian @ alpha - linear + nu_val + epsilon * (1.0 + z_val)
        return np.concatenate([top, [alpha.sum() - 1.0]])

    _, full = _regularized_gradient(hessian, linear, z, epsilon)
    nu = -float(np.exp(z) @ full)
    current = residual(z, nu)
    norm = float(np.abs(current).max())
    merit = float(np.linalg.norm(current))
    scale = 1.0 + float(np.abs(linear).max()) + epsilon
    for step in range(1, _NEWTON_MAX_STEPS + 1):
        if norm <= 1e-14 * scale:
            return z, step - 1
        alpha = np.exp(z)
        jacobian = np.zeros((m_count + 1, m_count + 1))
        jacobian[:m_count, :m_count] = hessian * alpha[None, :]
        jacobian[np.arange(m_count), np.arange(m_count)] += epsilon
        jacobian[:m_count, m_count] = 1.0
        jacobian[m_count, :m_count] = alpha
        try:
            direction = np.linalg.solve(jacobian, -current)
        except np.linalg.LinAlgError:
            return None, step
        t = 1.0
        for _ in range(_NEWTON_MAX_HALVINGS):
            z_new = z + t * direction[:m_count]
            nu_new = nu + t * direction[m_count]
            trial = residual(z_new, nu_new)
            trial_merit = float(np.linalg.norm(trial))
            if np.isfinite(trial_merit) and trial_merit < (1.0 - 1e-4 * t) * merit:
                break
            t *= 0.5
        else:
            if norm <= 1e-11 * scale:
                return z, step
            return None, step
        z, nu, current, merit = z_new, nu_new, trial, trial_merit
        norm = float(np.abs(current).max())
    return (z, _NEWTON_MAX_STEPS) if norm <= 1e-11 * scale else (None, _NEWTON_MAX_STEPS)


def _finish(dictionary, q, z, config, iters, underflow):
    z = _normalize_log(z)
    hessian_free_grad = objective_gradient(dictionary, q, np.exp(z))
    full = hessian_free_grad + config.epsilon * (z + 1.0)
    alpha = weights_from_log(z)
    dual_gap = frank_wolfe_gap_from_gradient(full, np.exp(z))
    readout = dictionary.combine(alpha.weights)
    return EntropicSolution(
        alpha=alpha,
        log_alpha=z,
        readout=readout,
        residual=q - readout,
        epsilon=config.epsilon,
        dual_gap=dual_gap,
        iters=iters,
        converged=dual_gap <= config.gap_tol,
        objective=_regularized_objective(dictionary, q, z, config.epsilon),
        stationarity_residual=_stationarity(full),
        underflow_regime=underflow,
    )


def _exponentiated_gradient(dictionary, q, config, z, hessian, linear, iters_used=0):
    """Proximal entropic mirror descent in log-weights with periodic Newton polish"""
    epsilon = config.epsilon
    step = 1.0 / max(dictionary.op_norm ** 2, 1e-300)
    iters = iters_used
    objective = None
    for iteration in range(1, config.max_iters + 1):
        smooth, full = _regularized_gradient(hessian, linear, z, epsilon)
        gap = frank_wolfe_gap_from_gradient(full, np.exp(z))
        if gap <= config.gap_tol:
            # tiny weights can pass the gap test long before their logs settle
            if config.polish:
                polished, newton_steps = _newton_polish(hessian, linear, z, epsilon)
                iters += newton_steps
                if polished is not None:
                    z = polished
            return z, iters, True
        if config.polish and (iteration == 1 or iteration % POLISH_INTERVAL == 0):
            polished, newton_steps = _newton_polish(hessian, linear, z, epsilon)
            iters += newton_steps
            if polished is not None:
                z = _normalize_log(polished)
                objective = None
                smooth, full = _regularized_gradient(hessian, linear, z, epsilon)
                if frank_wolfe_gap_from_gradient(full, np.exp(z)) <= config.gap_tol:
                    return z, iters, True
        iters += 1
        if config.step_rule is StepRule.LINE_SEARCH:
            if objective is None:
                objective = _regularized_objective(dictionary, q, z, epsilon)
            trial_step = 2.0 * step
            for _ in range(30):
                z_new = _normalize_log((z - trial_step * smooth) / (1.0 + trial_step * epsilon))
                new_objective = _regularized_objective(dictionary, q, z_new, epsilon)
                if new_objective <= objective + 1e-15 * abs(objective):
                    break
                trial_step *= 0.5
            step, objective = trial_step, new_objective
            z = z_new
        else:
            z = _normalize_log((z - step * smooth) / (1.0 + step * epsilon))
        if iteration % 1000 == 0:
            logger.debug("eg iteration %d: regularized gap %.3e", iteration, gap)
    if config.polish:
        polished, newton_steps = _newton_polish(hessian, linear, z, epsilon)
        iters += newton_steps
        if polished is not None:
            z = polished
    return _normalize_log(z), iters, False


def solve_entropic(dictionary, q, config=None, warm_start=None):
    """
    Minimize 0.5 * ||U alpha - q||^2 + eps * sum(alpha log alpha) over the simplex

    Args:
        dictionary (Dictionary): Atoms U
        q (array-like): Query
        config (EntropicConfig, optional): Solver settings, defaults to EntropicConfig()
        warm_start (array-like, optional): Starting weights

    Returns:
        EntropicSolution: Interior weights with log-weights, certificate and flags
    """
    config = config or EntropicConfig()
    config.validate()
    q = as_finite_vector(q, "q", dictionary.dim)
    underflow = config.epsilon < config.epsilon_floor
    if underflow:
        logger.warning("epsilon %.3e is below the underflow floor %.3e; weights will be clamped at %.0e",
                       config.epsilon, config.epsilon_floor, WEIGHT_FLOOR)

    hessian = dictionary.atoms.T @ dictionary.atoms
    linear = dictionary.atoms.T @ q
    m_count = dictionary.m_count

    if config.solver is SolverKind.FRANK_WOLFE:
        z, iters = _frank_wolfe_then_tilt(dictionary, q, config, hessian, linear)
        if z is not None:
            return _finish(dictionary, q, z, config, iters, underflow)
        logger.debug("tilted Newton polish failed; continuing with exponentiated gradient")
        start = iters
    else:
        start = 0

    if warm_start is not None:
        weights = np.maximum(as_finite_vector(warm_start, "warm_start", m_count), WEIGHT_FLOOR)
        z = _normalize_log(np.log(weights))
    else:
        z = np.full(m_count, -math.log(m_count))
    z, iters, _ = _exponentiated_gradient(dictionary, q, config, z, hessian, linear, start)
    solution = _finish(dictionary, q, z, config, iters, underflow)
    if not solution.converged:
        logger.warning("entropic solve stopped at gap %.3e > %.3e after %d iterations",
                       solution.dual_gap, config.gap_tol, iters)
    return solution


def _frank_wolfe_then_tilt(dictionary, q, config, hessian, linear):
    """
    Screening role of Frank-Wolfe: solve the unregularized program, tilt off-support
    weights by exp(-mu_j / eps), then Newton-polish the entropic system
    """
    fw = frank_wolfe(dictionary, q, max_iters=config.max_iters, gap_tol=min(config.gap_tol, 1e-12))
    alpha = fw.alpha.weights
    support = fw.alpha.support()
    gradient = hessian @ alpha - linear
    mu = np.maximum(gradient - gradient[support].mean(), 0.0)
    z = np.full(dictionary.m_count, 0.0)
    z[support] = np.log(alpha[support])
    off = np.setdiff1d(np.arange(dictionary.m_count), support)
    z[off] = -mu[off] / config.epsilon + math.log(max(alpha[support].min(), WEIGHT_FLOOR))
    z = _normalize_log(z)
    polished, steps = _newton_polish(hessian, linear, z, config.epsilon)
    iters = fw.iters + steps
    if polished is None:
        return None, iters
    return _normalize_log(polished), iters


def pseudo_multipliers(solution):
    """mu_eps = -eps * log(alpha_eps), exact for saturated entries as well"""
    saturated = int(np.count_nonzero(solution.saturated))
    if saturated:
        logger.info("%d weights are below the %.0e floor; their pseudo-multipliers come from log-weights",
                    saturated, WEIGHT_FLOOR)
    return solution.pseudo_mu


def fw_gap(dictionary, q, alpha):
    """
    Frank-Wolfe gap <grad f(alpha), alpha> - min_j grad f(alpha)_j of 0.5 * ||U alpha - q||^2

    Returns:
        float: Nonnegative gap, an upper bound on f(alpha) - f(alpha*)
    """
    weights = alpha.weights if isinstance(alpha, SimplexWeights) else SimplexWeights(alpha).weights
    q = as_finite_vector(q, "q", dictionary.dim)
    return frank_wolfe_gap_from_gradient(objective_gradient(dictionary, q, weights), weights)


def frank_wolfe(dictionary, q, max_iters=1000, gap_tol=1e-10, away_steps=True, support=None,
                callback=None, alpha0=None):
    """
    Frank-Wolfe with exact line search on 0.5 * ||U alpha - q||^2

    Args:
        dictionary (Dictionary): Atoms U
        q (array-like): Query
        max_iters (int): Iteration cap
        gap_tol (float): Stop when the gap on the working simplex is at most this
        away_steps (bool): Allow away steps (linear convergence on faces)
        support (list, optional): Restrict iterates to these atoms
        callback (callable, optional): Called as callback(iteration, SimplexWeights, gap) on every iterate
        alpha0 (array-like, optional): Starting weights supported on the working set

    Returns:
        FrankWolfeResult: Final iterate, gap on the working simplex and step counts
    """
    q = as_finite_vector(q, "q", dictionary.dim)
    m_count = dictionary.m_count
    index = np.arange(m_count) if support is None else np.array(sorted(set(int(i) for i in support)))
    atoms = dictionary.atoms[:, index]

    if alpha0 is not None:
        beta = np.asarray(alpha0, dtype=float)[index].copy()
        beta /= beta.sum()
    else:
        beta = np.zeros(index.shape[0])
        beta[int(np.argmin(np.linalg.norm(atoms - q[:, None], axis=0)))] = 1.0
    readout = atoms @ beta
    away_count = drop_count = 0
    gap = math.inf

    def full_weights():
        full = np.zeros(m_count)
        full[index] = beta
        return SimplexWeights.normalized(full)

    for iteration in range(1, max_iters + 1):
        gradient = atoms.T @ (readout - q)
        fw_vertex = int(np.argmin(gradient))
        gap = max(float(gradient @ beta - gradient[fw_vertex]), 0.0)
        if callback is not None:
            callback(iteration - 1, full_weights(), gap)
        if gap <= gap_tol:
            return FrankWolfeResult(full_weights(), gap, iteration - 1, True, away_count, drop_count)

        use_away = False
        if away_steps:
            active = np.flatnonzero(beta > 0)
            away_vertex = int(active[np.argmax(gradient[active])])
            away_gain = float(gradient[away_vertex] - gradient @ beta)
            use_away = away_gain > gap and beta[away_vertex] < 1.0
        if use_away:
            delta = readout - atoms[:, away_vertex]
            gamma_max = beta[away_vertex] / (1.0 - beta[away_vertex])
            slope = away_gain
        else:
            delta = atoms[:, fw_vertex] - readout
            gamma_max = 1.0
            slope = gap
        curvature = float(delta @ delta)
        gamma = gamma_max if curvature <= 0 else min(slope / curvature, gamma_max)

        if use_away:
            away_count += 1
            beta *= (1.0 + gamma)
            beta[away_vertex] -= gamma
            if gamma >= gamma_max:
                beta[away_vertex] = 0.0
                drop_count += 1
        else:
            beta *= (1.0 - gamma)
            beta[fw_vertex] += gamma
        beta = np.clip(beta, 0.0, None)
        beta /= beta.sum()
        readout = atoms @ beta if iteration % 100 == 0 else readout + gamma * delta

    gradient = atoms.T @ (readout - q)
    gap = max(float(gradient @ beta - gradient.min()), 0.0)
    if callback is not None:
        callback(max_iters, full_weights(), gap)
    return FrankWolfeResult(full_weights(), gap, max_iters, gap <= gap_tol, away_count, drop_count)


def fw_certificate(dictionary, q, alpha, face):
    """
    Distance certificate sqrt(2 g / mu_F) for weights supported on a stable face

    Args:
        dictionary (Dictionary): Atoms U
        q (array-like): Query
        alpha (SimplexWeights): Iterate supported on the face
        face (FaceGeometry or list): The face (active index set I)

    Returns:
        FwCertificate: Invalid when the weights leave the face or mu_F <= 0
    """
    indices = face.face_indices if hasattr(face, 'face_indices') else sorted(int(i) for i in face)
    weights = alpha.weights if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=float)
    q = as_finite_vector(q, "q", dictionary.dim)
    mu_face = face_tangent_curvature(dictionary, indices)
    off_face = float(np.delete(weights, indices).sum())
    gradient = objective_gradient(dictionary, q, weights)
    on_face = gradient[indices]
    gap = max(float(on_face @ weights[indices] - on_face.min()), 0.0)
    valid = off_face <= 1e-12 and mu_face > 1e-14
    if not valid:
        logger.debug("certificate invalid: off-face mass %.3e, mu_F %.3e", off_face, mu_face)
    return FwCertificate(gap=gap, mu_face=mu_face, op_norm=dictionary.op_norm, valid=valid)


def prescribe_epsilon(c_lin, c_exp, gap, eta):
    """
    eps = min{eta / (2 C_lin), gap / (2 log(2 C_exp / eta))}

    When 2 C_exp / eta <= e the exponential requirement is vacuous and only the
    linear branch is returned.
    """
    for name, value in (("c_lin", c_lin), ("c_exp", c_exp), ("gap", gap), ("eta", eta)):
        if not (value > 0 and math.isfinite(value)):
            raise ParameterError(name, "must be a positive finite number")
    linear = eta / (2.0 * c_lin)
    ratio = 2.0 * c_exp / eta
    if ratio <= math.e:
        logger.info("2 C_exp / eta = %.3g <= e: exponential branch vacuous, using the linear branch", ratio)
        return linear
    return min(linear, gap / (2.0 * math.log(ratio)))


def leakage_mass(solution, face):
    """Total entropic weight outside the face, summed in log space"""
    log_alpha = solution.log_alpha
    off = np.setdiff1d(np.arange(log_alpha.shape[0]), np.asarray(list(face), dtype=int))
    if off.size == 0:
        return 0.0
    return float(np.exp(logsumexp(log_alpha[off])))


def epsilon_for_leakage(gap, off_face_count, target_leakage, c=2.0):
    """
    Largest eps with (M - |I|) * exp(-gap / (c eps)) <= target_leakage

    Returns +inf when the target is met for every eps.
    """
    if not gap > 0:
        raise ParameterError("gap", "must be positive")
    if not 0 < target_leakage < 1:
        raise ParameterError("target_leakage", "must lie in (0, 1)")
    if off_face_count <= 0 or off_face_count <= target_leakage:
        return math.inf
    return gap / (c * math.log(off_face_count / target_leakage))


def screen_and_certify(dictionary, q, scores=None, initial_size=8, growth=2.0, max_iters=5000,
                       gap_tol=1e-10):
    """
    Screen the top atoms by score, solve on the screened simplex and certify with the full gap

    The screened set grows geometrically until the full-simplex Frank-Wolfe gap
    of the screened solution is within gap_tol or the set covers the dictionary.
    """
    if initial_size < 1:
        raise ParameterError("initial_size", "must be at least 1")
    if not growth > 1:
        raise ParameterError("growth", "must exceed 1")
    q = as_finite_vector(q, "q", dictionary.dim)
    m_count = dictionary.m_count
    if scores is None:
        scores = dictionary.atoms.T @ q
    order = np.argsort(-np.asarray(scores, dtype=float), kind='stable')
    size = min(int(initial_size), m_count)
    enlargements = 0
    while True:
        support = sorted(int(i) for i in order[:size])
        result = frank_wolfe(dictionary, q, max_iters=max_iters, gap_tol=gap_tol, support=support)
        full_gap = fw_gap(dictionary, q, result.alpha)
        certified = full_gap <= gap_tol
        logger.debug("screen |S|=%d: screened gap %.3e, full gap %.3e", size, result.gap, full_gap)
        if certified or size == m_count:
            break
        size = min(m_count, int(math.ceil(size * growth)))
        enlargements += 1
    face = result.alpha.support()
    certificate = fw_certificate(dictionary, q, result.alpha, tangent_basis(dictionary, face))
    return ScreeningResult(support=support, face=face, alpha=result.alpha, full_gap=full_gap,
                           enlargements=enlargements, certified=certified, certificate=certificate)


def solution_record(solution, leakage=None):
    """JSON-ready per-solve record for the experiment harness"""
    return {
        'epsilon': solution.epsilon,
        'iters': solution.iters,
        'dual_gap': solution.dual_gap,
        'leakage_mass': math.nan if leakage is None else leakage,
        'converged': bool(solution.converged),
        'stationarity_residual': solution.stationarity_residual,
        'underflow_regime': bool(solution.underflow_regime),
    }
