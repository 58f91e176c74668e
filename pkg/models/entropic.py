"""
Entropic solver models: configuration, solutions and Frank-Wolfe certificates
"""
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from models.dictionary import SimplexWeights
from models.errors import ParameterError

# Absolute clamp applied to weights before taking logarithms
WEIGHT_FLOOR = 1e-300
# exp(-x) stays above double-precision underflow for x < ~1400 * (gap / epsilon) scale
EPSILON_FLOOR_RATIO = 1400.0


class SolverKind(Enum):
    """Entropic solver paths"""
    EXPONENTIATED_GRADIENT = "exponentiated-gradient"
    FRANK_WOLFE = "frank-wolfe"

    @classmethod
    def parse(cls, value):
        """Accept enum members, full names and the short names eg / fw"""
        if isinstance(value, cls):
            return value
        aliases = {'eg': cls.EXPONENTIATED_GRADIENT, 'fw': cls.FRANK_WOLFE}
        text = str(value).lower()
        if text in aliases:
            return aliases[text]
        return cls(text)

    @property
    def short_name(self):
        return "eg" if self is SolverKind.EXPONENTIATED_GRADIENT else "fw"


class StepRule(Enum):
    """Step-size rules for exponentiated gradient"""
    FIXED_INVERSE_LIPSCHITZ = "fixed-inverse-lipschitz"
    LINE_SEARCH = "line-search"


@dataclass
class EntropicConfig:
    """
    Settings for the entropic-regularized projection

    gap_hint, when set, is an estimate of the face gap used for the epsilon floor check.
    """
    epsilon: float = 0.1
    solver: SolverKind = SolverKind.EXPONENTIATED_GRADIENT
    max_iters: int = 100000
    gap_tol: float = 1e-10
    step_rule: StepRule = StepRule.FIXED_INVERSE_LIPSCHITZ
    polish: bool = True
    gap_hint: float = None

    def __post_init__(self):
        self.solver = SolverKind.parse(self.solver)
        self.step_rule = StepRule(self.step_rule)
        self.validate()

    def validate(self):
        """Raise ParameterError on out-of-range fields"""
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError("epsilon", "must be a positive finite number")
        if not self.gap_tol > 0:
            raise ParameterError("gap_tol", "must be positive")
        if int(self.max_iters) < 1:
            raise ParameterError("max_iters", "must be at least 1")
        if self.gap_hint is not None and self.gap_hint < 0:
            raise ParameterError("gap_hint", "must be nonnegative")

    @property
    def epsilon_floor(self):
        """Smallest epsilon that keeps exp(-gap/epsilon) representable, 0 when no hint"""
        if not self.gap_hint:
            return 0.0
        return self.gap_hint / EPSILON_FLOOR_RATIO

    def with_epsilon(self, epsilon):
        """Copy of this config at another epsilon"""
        data = asdict(self)
        data['epsilon'] = epsilon
        return EntropicConfig(**data)

    def to_dict(self):
        data = asdict(self)
        data['solver'] = self.solver.value
        data['step_rule'] = self.step_rule.value
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class EntropicSolution:
    """
    Solution of the entropic-regularized projection at a fixed epsilon
    """

    def __init__(self, alpha, log_alpha, readout, residual, epsilon, dual_gap, iters,
                 converged, objective, stationarity_residual, underflow_regime=False):
        """
        Args:
            alpha (SimplexWeights): Weights clamped at WEIGHT_FLOOR
            log_alpha (numpy.ndarray): Unclamped log-weights from the solver
            readout (numpy.ndarray): y_eps = U alpha
            residual (numpy.ndarray): r_eps = q - y_eps
            epsilon (float): Regularization strength
            dual_gap (float): Frank-Wolfe gap of the regularized objective at exit
            iters (int): Total solver iterations
            converged (bool): dual_gap reached gap_tol
            objective (float): Regularized objective value
            stationarity_residual (float): Infinity-norm residual of the interior KKT system
            underflow_regime (bool): epsilon was below the floor implied by gap_hint
        """
        self.alpha = alpha
        self.log_alpha = log_alpha
        self.readout = readout
        self.residual = residual
        self.epsilon = epsilon
        self.dual_gap = dual_gap
        self.iters = iters
        self.converged = converged
        self.objective = objective
        self.stationarity_residual = stationarity_residual
        self.underflow_regime = underflow_regime

    @property
    def pseudo_mu(self):
        """mu_eps = -epsilon * log(alpha_eps) from the unclamped log-weights"""
        return -self.epsilon * self.log_alpha

    @property
    def saturated(self):
        """Mask of entries whose true weight is below WEIGHT_FLOOR"""
        return self.log_alpha < math.log(WEIGHT_FLOOR)

    def to_dict(self):
        return {
            'epsilon': self.epsilon,
            'alpha': self.alpha.weights.tolist(),
            'readout': self.readout.tolist(),
            'dual_gap': self.dual_gap,
            'iters': self.iters,
            'converged': self.converged,
            'objective': self.objective,
            'stationarity_residual': self.stationarity_residual,
            'underflow_regime': self.underflow_regime,
            'saturated': int(np.count_nonzero(self.saturated)),
        }


def weights_from_log(log_alpha):
    """Clamp exp(log_alpha) at WEIGHT_FLOOR and renormalize into SimplexWeights"""
    weights = np.maximum(np.exp(log_alpha), WEIGHT_FLOOR)
    return SimplexWeights(weights / weights.sum())


@dataclass
class FwCertificate:
    """
    Distance certificate derived from a Frank-Wolfe gap on a stable face
    """
    gap: float
    mu_face: float
    op_norm: float
    valid: bool = True
    distance_bound: float = field(init=False)
    readout_bound: float = field(init=False)

    def __post_init__(self):
        self.gap = max(float(self.gap), 0.0)
        if not self.valid or not self.mu_face > 0:
            self.valid = False
            self.distance_bound = math.inf
            self.readout_bound = math.inf
            return
        self.distance_bound = math.sqrt(2.0 * self.gap / self.mu_face)
        self.readout_bound = self.op_norm * self.distance_bound

    def to_dict(self):
        return asdict(self)


@dataclass
class FrankWolfeResult:
    """Final iterate of a Frank-Wolfe run on the (possibly screened) simplex"""
    alpha: SimplexWeights
    gap: float
    iters: int
    converged: bool
    away_steps: int = 0
    drop_steps: int = 0


@dataclass
class ScreeningResult:
    """
    Outcome of the screen-then-certify loop

    support is the last screened index set, face the support of the accepted iterate.
    """
    support: list
    face: list
    alpha: SimplexWeights
    full_gap: float
    enlargements: int
    certified: bool
    certificate: FwCertificate = None
