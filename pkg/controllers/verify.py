"""
Numerical checks of face stability: the main bound, face invariance, leakage rates,
second-order expansion, Frank-Wolfe certificates, the epsilon prescription,
multiplier Lipschitz behavior, the top-two gap statistic and the two-atom tie
"""
import logging
import math
from collections import OrderedDict

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logsumexp, ndtri
from scipy.stats import linregress

from controllers.entropic import (
    frank_wolfe,
    fw_certificate,
    leakage_mass,
    prescribe_epsilon,
    solve_entropic,
)
from controllers.geometry import (
    face_gap,
    face_tangent_curvature,
    project_onto_hull,
    tangent_basis,
    tangent_projector,
)
from models.dictionary import Dictionary, is_defined
from models.entropic import EntropicConfig
from models.errors import ParameterError
from models.reports import (
    BoundConstants,
    BoundReport,
    CheckReport,
    CheckStatus,
    ExpansionReport,
    GapStatReport,
)
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

# Gaps at or below this are treated as ties
DEGENERATE_GAP = 1e-9
# Fit windows drop weights below this
FIT_FLOOR = 1e-250
RATE_TOLERANCE = 0.05
MIN_R_SQUARED = 0.99
# Sampling budget (M * trials) above which the top-two order statistics are drawn directly
BRUTE_FORCE_BUDGET = 50_000_000
KS_POINTS = 512
_BLOCK_TRIALS = 1000


def _solver_config(config, epsilon, gap_hint=None):
    base = config or EntropicConfig(gap_tol=1e-12)
    solved = base.with_epsilon(epsilon)
    solved.gap_hint = gap_hint
    return solved


def _stable_projection(dictionary, q):
    """Exact projection and its face gap, or (solution, None) when the gap hypothesis fails"""
    solution = project_onto_hull(dictionary, q)
    gap = face_gap(dictionary, solution)
    if not is_defined(gap) or gap <= DEGENERATE_GAP:
        return solution, None
    return solution, gap


def bound_constants(dictionary, solution, gap, seed=0):
    """C_lin = kappa_F ||B|| G_F(rho) and C_exp = D (M - |I|) for a projection"""
    geometry = tangent_basis(dictionary, solution.active_set, alpha=solution.alpha, seed=seed)
    face_size = len(solution.active_set)
    return BoundConstants(
        c_lin=geometry.linear_constant,
        c_exp=dictionary.diameter * (dictionary.m_count - face_size),
        gap=gap,
        kappa=geometry.kappa,
        grad_bound=geometry.entropic_grad_bound,
        diameter=dictionary.diameter,
        m_count=dictionary.m_count,
        face_size=face_size,
    )


def dominant_face(log_alpha):
    """Indices above the largest drop in the sorted log-weights"""
    order = np.argsort(-log_alpha, kind='stable')
    if order.shape[0] == 1:
        return [int(order[0])]
    drops = -np.diff(log_alpha[order])
    cut = int(np.argmax(drops)) + 1
    return sorted(int(i) for i in order[:cut])


def detect_eps0(epsilons, solutions, face):
    """
    Largest grid epsilon at which the dominant face of alpha_eps, and that of every
    smaller grid epsilon, equals the exact face; 0 when none qualifies
    """
    eps0 = 0.0
    for epsilon, solution in sorted(zip(epsilons, solutions), key=lambda pair: pair[0]):
        if dominant_face(solution.log_alpha) != list(face):
            break
        eps0 = epsilon
    return eps0


def check_main_bound(dictionary, q, epsilon_grid, instance_id="instance", config=None, seed=0):
    """
    Compare ||y_eps - y*|| with C_lin * eps + C_exp * exp(-gap / (2 eps)) on an epsilon grid

    Returns:
        list: One BoundReport per epsilon, flagged when the gap hypothesis fails
    """
    epsilons = [float(e) for e in epsilon_grid]
    solution, gap = _stable_projection(dictionary, q)
    if gap is None:
        constants = BoundConstants(math.nan, math.nan, 0.0, math.nan, math.nan, dictionary.diameter,
                                   dictionary.m_count, len(solution.active_set))
        return [BoundReport(instance_id, e, math.nan, constants, hypothesis_violated=True) for e in epsilons]

    constants = bound_constants(dictionary, solution, gap, seed)
    solutions = [solve_entropic(dictionary, q, _solver_config(config, e, gap)) for e in epsilons]
    errors = [float(np.linalg.norm(s.readout - solution.readout)) for s in solutions]
    eps0 = detect_eps0(epsilons, solutions, solution.active_set)
    slope = linregress(epsilons, errors).slope if len(set(epsilons)) >= 2 else math.nan

    reports = []
    for epsilon, entropic, error in zip(epsilons, solutions, errors):
        reports.append(BoundReport(
            instance_id=instance_id,
            epsilon=epsilon,
            observed_error=error,
            constants=constants,
            leakage_mass=leakage_mass(entropic, solution.active_set),
            eps0=eps0,
            fitted_slope=float(slope),
        ))
        logger.debug("%s eps=%.3g error=%.3e bound=%.3e", instance_id, epsilon, error, reports[-1].bound)
    return reports


def check_face_invariance(dictionary, q, epsilon_grid, instance_id="instance", config=None):
    """
    On-face mass against 1 - leakage bound and on-face barycentric drift against rho

    The threshold is the largest grid epsilon below which both hold at every grid point.
    """
    solution, gap = _stable_projection(dictionary, q)
    if gap is None:
        return CheckReport("face-invariance", instance_id, CheckStatus.SKIPPED_DEGENERATE,
                           note="gap hypothesis violated (tie or interior query)")
    face = solution.active_set
    off_count = dictionary.m_count - len(face)
    rho = 0.5 * float(solution.alpha.weights[face].min())
    star = solution.alpha.weights[face]

    rows = []
    for epsilon in sorted(float(e) for e in epsilon_grid):
        entropic = solve_entropic(dictionary, q, _solver_config(config, epsilon, gap))
        leak = leakage_mass(entropic, face)
        on_face = np.exp(entropic.log_alpha[face] - logsumexp(entropic.log_alpha[face]))
        barycentric_drift = float(np.abs(on_face - star).max())
        readout = dictionary.combine(np.bincount(face, weights=on_face, minlength=dictionary.m_count))
        rows.append({
            'epsilon': epsilon,
            'mass_ok': 1.0 - leak >= 1.0 - off_count * math.exp(-gap / (2.0 * epsilon)),
            'drift_ok': barycentric_drift <= rho,
            'on_face_mass': 1.0 - leak,
            'readout_distance': float(np.linalg.norm(readout - solution.readout)),
        })

    threshold = 0.0
    for row in rows:
        if not (row['mass_ok'] and row['drift_ok']):
            break
        threshold = row['epsilon']
    distances = [row['readout_distance'] for row in rows]
    monotone = all(a <= b + 1e-12 for a, b in zip(distances, distances[1:]))
    in_regime = [row for row in rows if row['epsilon'] <= gap / 4.0]
    holds = all(row['mass_ok'] and row['drift_ok'] for row in in_regime)
    status = CheckStatus.PASS if holds and monotone else CheckStatus.FAIL
    metrics = OrderedDict([
        ('gap', gap),
        ('threshold', threshold),
        ('min_on_face_mass', min(row['on_face_mass'] for row in rows)),
        ('max_readout_distance', max(distances)),
        ('monotone', monotone),
        ('rho', rho),
    ])
    return CheckReport("face-invariance", instance_id, status, metrics)


def first_order_direction(dictionary, face, face_weights):
    """
    -(P_T H_I P_T)^+ P_T (log alpha*_I + 1), the epsilon-derivative of the entropic weights on the face

    Returns:
        tuple: (direction on the face, mu_F)
    """
    cols = dictionary.atoms[:, face]
    projector = tangent_projector(len(face))
    restricted = projector @ (cols.T @ cols) @ projector
    direction = -np.linalg.pinv(restricted, hermitian=True) @ (projector @ (np.log(face_weights) + 1.0))
    return projector @ direction, face_tangent_curvature(dictionary, face)


def check_second_order(dictionary, q, epsilon_grid, instance_id="instance", config=None,
                       finite_difference_eps=1e-4):
    """
    Residual ||alpha_eps - alpha* - eps * alpha_dot|| over a halving epsilon grid

    Returns:
        ExpansionReport: invalid when the face Hessian is singular on the tangent space
    """
    epsilons = sorted((float(e) for e in epsilon_grid), reverse=True)
    solution = project_onto_hull(dictionary, q)
    face = solution.active_set
    star = solution.alpha.weights
    direction_face, mu_face = first_order_direction(dictionary, face, star[face])
    if len(face) > 1 and not mu_face > 1e-12:
        return ExpansionReport(instance_id, epsilons, direction_face, [math.nan] * len(epsilons), invalid=True)
    direction = np.zeros(dictionary.m_count)
    direction[face] = direction_face

    base = config or EntropicConfig(gap_tol=1e-12)

    def weights_at(epsilon):
        entropic = solve_entropic(dictionary, q, base.with_epsilon(epsilon))
        return np.exp(entropic.log_alpha)

    residuals = [float(np.linalg.norm(weights_at(e) - star - e * direction)) for e in epsilons]
    fd = (weights_at(finite_difference_eps) - star) / finite_difference_eps
    norm = float(np.linalg.norm(direction))
    fd_error = float(np.linalg.norm(fd - direction)) / (norm if norm > 0 else 1.0)
    return ExpansionReport(instance_id, epsilons, direction_face, residuals, fd_error)


def scalar_two_atom_derivative(dictionary, t_star):
    """d alpha_2 / d eps at 0 on a two-atom face from the scalar stationarity condition"""
    edge = dictionary.column(1) - dictionary.column(0)
    return -math.log(t_star / (1.0 - t_star)) / float(edge @ edge)


def _top_two_brute(m_count, trials, seed):
    gaps = np.empty(trials)
    for block, start in enumerate(range(0, trials, _BLOCK_TRIALS)):
        rows = min(_BLOCK_TRIALS, trials - start)
        rng = make_rng(seed, block)
        scores = rng.standard_normal((rows, m_count))
        top_two = np.partition(scores, m_count - 2, axis=1)[:, -2:]
        gaps[start:start + rows] = top_two[:, 1] - top_two[:, 0]
    return gaps


def _top_two_order_statistics(m_count, trials, seed):
    """
    Exact draw of the two largest of M standard normals via uniform order statistics

    The top uniform is W1^(1/M); given it, the runner-up is U1 * W2^(1/(M-1)).
    Normal quantiles are taken as -ndtri(1 - U) evaluated through expm1 of log U.
    """
    gaps = np.empty(trials)
    for block, start in enumerate(range(0, trials, _BLOCK_TRIALS)):
        rows = min(_BLOCK_TRIALS, trials - start)
        rng = make_rng(seed, block)
        log_top = np.log(rng.random(rows)) / m_count
        log_second = log_top + np.log(rng.random(rows)) / (m_count - 1)
        s_top = -ndtri(-np.expm1(log_top))
        s_second = -ndtri(-np.expm1(log_second))
        gaps[start:start + rows] = s_top - s_second
    return gaps


def ks_distance_exp1(samples, points=KS_POINTS):
    """Largest |F_n(x_k) - (1 - e^-x_k)| over the Exp(1) quantiles x_k = -log(1 - k / (points + 1))"""
    levels = np.arange(1, points + 1) / (points + 1)
    quantiles = -np.log1p(-levels)
    ordered = np.sort(np.asarray(samples, dtype=float))
    empirical = np.searchsorted(ordered, quantiles, side='right') / ordered.shape[0]
    return float(np.abs(empirical - levels).max())


def gap_statistic_mc(m_count, trials, seed=0):
    """
    Monte Carlo of the top-two gap of M iid standard normal scores

    Returns:
        GapStatReport: mean of sqrt(2 log M) * gap, KS distance to Exp(1) and E[gap]
    """
    if int(m_count) < 2:
        raise ParameterError("m_count", "must be at least 2")
    if int(trials) < 100:
        raise ParameterError("trials", "must be at least 100")
    m_count, trials = int(m_count), int(trials)
    if m_count * trials <= BRUTE_FORCE_BUDGET:
        gaps, method = _top_two_brute(m_count, trials, seed), "brute-force"
    else:
        gaps, method = _top_two_order_statistics(m_count, trials, seed), "order-statistics"
    gaps = np.maximum(gaps, 0.0)
    scaled = math.sqrt(2.0 * math.log(m_count)) * gaps
    return GapStatReport(
        m_count=m_count,
        trials=trials,
        seed=seed,
        mean_scaled_gap=float(scaled.mean()),
        ks_distance=ks_distance_exp1(scaled),
        mean_gap=float(gaps.mean()),
        min_gap=float(gaps.min()),
        method=method,
    )


def _scalar_tie_solution(q, epsilon):
    """alpha_2 on the segment {0, 1}: root of t - q + eps * log(t / (1 - t)) = 0"""
    def stationarity(t):
        return t - q + epsilon * (math.log(t) - math.log1p(-t))
    low, high = 1e-300, 1.0 - 1e-16
    if stationarity(low) >= 0:
        return low
    if stationarity(high) <= 0:
        return high
    return brentq(stationarity, low, high, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def degenerate_leakage_demo(epsilon_grid, deltas=(1e-3, 1e-2), config=None):
    """
    The two-atom tie and its perturbations

    Program view: the segment {0, 1} with q = 0.5 + delta lies inside the hull, so the
    entropic weights never concentrate; they are checked against the scalar solve.
    Score view: two scores differing by delta give Gibbs weights 1 / (1 + exp(-delta / eps)),
    which concentrate only once eps is well below delta.

    Returns:
        list: CheckReport rows (check = degenerate)
    """
    tie = Dictionary([[0.0, 1.0]])
    base = config or EntropicConfig(gap_tol=1e-12)
    reports = []
    for delta in [0.0] + [float(d) for d in deltas]:
        q = 0.5 + delta
        for epsilon in (float(e) for e in epsilon_grid):
            entropic = solve_entropic(tie, [q], base.with_epsilon(epsilon))
            alpha = np.exp(entropic.log_alpha)
            expected = _scalar_tie_solution(q, epsilon)
            error = abs(float(alpha[1]) - expected)
            tolerance = 1e-10 if delta == 0.0 else 1e-7
            reports.append(CheckReport(
                "degenerate", f"program-delta-{delta:g}",
                CheckStatus.PASS if error <= tolerance else CheckStatus.FAIL,
                OrderedDict([
                    ('view', 'program'), ('delta', delta), ('epsilon', epsilon),
                    ('alpha_1', float(alpha[0])), ('alpha_2', float(alpha[1])),
                    ('off_subset_mass', float(min(alpha))), ('reference_alpha_2', expected),
                    ('abs_error', error), ('concentrated', bool(alpha.max() > 0.99)),
                ]),
            ))
            if delta == 0.0:
                continue
            logits = np.array([0.0, delta]) / epsilon
            gibbs = np.exp(logits - logsumexp(logits))
            reference = float(expit(delta / epsilon))
            gibbs_error = abs(float(gibbs[1]) - reference)
            reports.append(CheckReport(
                "degenerate", f"scores-delta-{delta:g}",
                CheckStatus.PASS if gibbs_error <= 1e-12 else CheckStatus.FAIL,
                OrderedDict([
                    ('view', 'scores'), ('delta', delta), ('epsilon', epsilon),
                    ('alpha_1', float(gibbs[0])), ('alpha_2', float(gibbs[1])),
                    ('off_subset_mass', float(gibbs[0])), ('reference_alpha_2', reference),
                    ('abs_error', gibbs_error), ('concentrated', bool(gibbs.max() > 0.99)),
                ]),
            ))
    return reports


def check_leakage_rate(dictionary, q, epsilon_grid, instance_id="instance", config=None):
    """
    Fit eps * log alpha_eps,j -> -mu*_j for every off-face atom and check the
    per-atom bound alpha_eps,j <= exp(-gap / (2 eps)) for eps <= gap / 4
    """
    solution = project_onto_hull(dictionary, q)
    gap = face_gap(dictionary, solution)
    if not is_defined(gap):
        return CheckReport("leakage-rate", instance_id, CheckStatus.VACUOUS, note=f"no off-face atoms ({gap})")
    if gap <= DEGENERATE_GAP:
        return CheckReport("leakage-rate", instance_id, CheckStatus.SKIPPED_DEGENERATE, note="zero gap")

    epsilons = np.array(sorted(float(e) for e in epsilon_grid))
    face = solution.active_set
    off_face = solution.inactive_set
    log_alphas = np.array([solve_entropic(dictionary, q, _solver_config(config, e, gap)).log_alpha
                           for e in epsilons])

    rate_errors, r_squared, violations, fitted = [], [], 0, 0
    for j in off_face:
        column = log_alphas[:, j]
        for epsilon, log_alpha in zip(epsilons, column):
            if epsilon <= gap / 4.0 and log_alpha > -gap / (2.0 * epsilon) + 1e-12:
                violations += 1
        keep = column > math.log(FIT_FLOOR)
        if np.count_nonzero(keep) < 2:
            continue
        fitted += 1
        intercept = linregress(epsilons[keep], epsilons[keep] * column[keep]).intercept
        mu_star = float(solution.mu[j])
        rate_errors.append(abs(intercept + mu_star) / mu_star)
        r_squared.append(linregress(1.0 / epsilons[keep], column[keep]).rvalue ** 2)

    off_count = len(off_face)
    masses = [float(np.exp(logsumexp(row[off_face]))) for row in log_alphas]
    in_regime = [(e, m) for e, m in zip(epsilons, masses) if e <= gap / 4.0]
    holds_c1 = all(m <= off_count * math.exp(-gap / e) for e, m in in_regime)
    holds_c2 = all(m <= off_count * math.exp(-gap / (2.0 * e)) for e, m in in_regime)
    max_error = max(rate_errors, default=math.nan)
    min_r2 = min(r_squared, default=math.nan)
    passed = (fitted > 0 and max_error <= RATE_TOLERANCE and min_r2 >= MIN_R_SQUARED
              and violations == 0 and holds_c2)
    metrics = OrderedDict([
        ('gap', gap),
        ('off_face_atoms', off_count),
        ('fitted_atoms', fitted),
        ('max_rate_error', max_error),
        ('min_r_squared', min_r2),
        ('bound_violations', violations),
        ('leakage_bound_c1', holds_c1),
        ('leakage_bound_c2', holds_c2),
    ])
    return CheckReport("leakage-rate", instance_id, CheckStatus.PASS if passed else CheckStatus.FAIL, metrics)


def check_fw_certificate(dictionary, q, epsilon, instance_id="instance", gap_tol=1e-6, max_iters=20000,
                         config=None, seed=0):
    """
    Check ||alpha_t - alpha*|| <= sqrt(2 g_t / mu_F) on every Frank-Wolfe iterate on the exact face,
    then the chained stop g_t <= mu_F eps^2 / ||U||^2 against the three-term readout bound
    """
    solution, gap = _stable_projection(dictionary, q)
    if gap is None:
        return CheckReport("fw-certificate", instance_id, CheckStatus.SKIPPED_DEGENERATE,
                           note="gap hypothesis violated")
    face = solution.active_set
    geometry = tangent_basis(dictionary, face, alpha=solution.alpha, seed=seed)
    star = solution.alpha.weights
    checked = []

    def record(iteration, alpha, restricted_gap):
        certificate = fw_certificate(dictionary, q, alpha, geometry)
        distance = float(np.linalg.norm(alpha.weights - star))
        checked.append(distance <= certificate.distance_bound * (1.0 + 1e-9) + 1e-12)

    run = frank_wolfe(dictionary, q, max_iters=max_iters, gap_tol=gap_tol, support=face, callback=record)
    mu_face = face_tangent_curvature(dictionary, face)
    op_norm = dictionary.op_norm
    chained_tol = mu_face * epsilon ** 2 / op_norm ** 2 if math.isfinite(mu_face) else math.inf
    chained = frank_wolfe(dictionary, q, max_iters=max_iters, gap_tol=chained_tol, support=face)
    certificate = fw_certificate(dictionary, q, chained.alpha, geometry)
    entropic = solve_entropic(dictionary, q, _solver_config(config, epsilon, gap))
    constants = bound_constants(dictionary, solution, gap, seed)
    chained_bound = (certificate.readout_bound + constants.c_lin * epsilon
                     + constants.c_exp * math.exp(-gap / (2.0 * epsilon)))
    chained_error = float(np.linalg.norm(dictionary.combine(chained.alpha.weights) - entropic.readout))

    violations = checked.count(False)
    passed = violations == 0 and chained_error <= chained_bound
    metrics = OrderedDict([
        ('gap', gap),
        ('mu_face', mu_face),
        ('iterates_checked', len(checked)),
        ('violations', violations),
        ('final_fw_gap', run.gap),
        ('fw_iters', run.iters),
        ('epsilon', epsilon),
        ('chained_gap_tol', chained_tol),
        ('chained_error', chained_error),
        ('chained_bound', chained_bound),
    ])
    return CheckReport("fw-certificate", instance_id, CheckStatus.PASS if passed else CheckStatus.FAIL, metrics)


def check_prescription(dictionary, q, eta, instance_id="instance", config=None, seed=0):
    """Solve at the prescribed epsilon (capped at gap / 4) and check ||y_eps - y*|| <= eta"""
    solution, gap = _stable_projection(dictionary, q)
    if gap is None:
        return CheckReport("prescription", instance_id, CheckStatus.SKIPPED_DEGENERATE,
                           note="gap hypothesis violated")
    constants = bound_constants(dictionary, solution, gap, seed)
    if constants.c_lin > 0 and constants.c_exp > 0:
        prescribed = prescribe_epsilon(constants.c_lin, constants.c_exp, gap, eta)
    else:
        # vertex face: no linear term, only the off-face tail limits eps
        ratio = 2.0 * constants.c_exp / eta
        prescribed = gap / (2.0 * math.log(ratio)) if ratio > math.e else math.inf
    epsilon = min(prescribed, gap / 4.0)
    entropic = solve_entropic(dictionary, q, _solver_config(config, epsilon, gap))
    error = float(np.linalg.norm(entropic.readout - solution.readout))
    metrics = OrderedDict([
        ('gap', gap),
        ('eta', eta),
        ('prescribed_epsilon', prescribed),
        ('epsilon', epsilon),
        ('observed_error', error),
        ('c_lin', constants.c_lin),
        ('c_exp', constants.c_exp),
    ])
    return CheckReport("prescription", instance_id, CheckStatus.PASS if error <= eta else CheckStatus.FAIL, metrics)


def check_smr_lipschitz(dictionary, q, epsilon_grid, instance_id="instance", config=None, max_spread=10.0):
    """
    max_j |mu_eps,j - mu*_j| / eps over the grid; bounded when max / min ratio <= max_spread

    The fitted Lipschitz constant is the largest ratio observed.
    """
    solution, gap = _stable_projection(dictionary, q)
    if gap is None:
        return CheckReport("multiplier-lipschitz", instance_id, CheckStatus.SKIPPED_DEGENERATE,
                           note="gap hypothesis violated")
    ratios = []
    for epsilon in sorted(float(e) for e in epsilon_grid):
        entropic = solve_entropic(dictionary, q, _solver_config(config, epsilon, gap))
        ratios.append(float(np.abs(entropic.pseudo_mu - solution.mu).max()) / epsilon)
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    metrics = OrderedDict([
        ('gap', gap),
        ('lipschitz_estimate', max(ratios)),
        ('min_ratio', min(ratios)),
        ('ratio_spread', spread),
    ])
    status = CheckStatus.PASS if spread <= max_spread else CheckStatus.FAIL
    return CheckReport("multiplier-lipschitz", instance_id, status, metrics)


def summarize(reports, check=None):
    """
    Count outcomes over reports of one check

    Returns:
        dict: {check, instances, pass, fail, skipped_degenerate, vacuous, outside_regime}
    """
    reports = list(reports)
    counts = {status: 0 for status in CheckStatus}
    for report in reports:
        counts[report.status] += 1
    if check is None:
        check = getattr(reports[0], 'check', 'bounds') if reports else 'none'
    return {
        'check': check,
        'instances': len({report.instance_id for report in reports}),
        'pass': counts[CheckStatus.PASS],
        'fail': counts[CheckStatus.FAIL],
        'skipped_degenerate': counts[CheckStatus.SKIPPED_DEGENERATE],
        'vacuous': counts[CheckStatus.VACUOUS],
        'outside_regime': counts[CheckStatus.OUTSIDE_REGIME],
    }
