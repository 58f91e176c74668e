"""
Verification report models
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Second-order expansion acceptance
RATIO_SPREAD_LIMIT = 0.25
SHRINK_WINDOW = (2.5, 6.0)
RESIDUAL_NOISE_FLOOR = 1e-12


class CheckStatus(Enum):
    """Outcome of a single verification check"""
    PASS = "pass"
    FAIL = "fail"
    SKIPPED_DEGENERATE = "skipped-degenerate"
    VACUOUS = "vacuous"
    OUTSIDE_REGIME = "outside-small-eps"


@dataclass
class BoundConstants:
    """Constants entering the face-stability bound for one instance"""
    c_lin: float
    c_exp: float
    gap: float
    kappa: float
    grad_bound: float
    diameter: float
    m_count: int
    face_size: int


@dataclass
class BoundReport:
    """
    Observed ||y_eps - y*|| against C_lin * eps + C_exp * exp(-gap / (2 eps))

    The bound terms are recomputed from the constants on access.
    """
    instance_id: str
    epsilon: float
    observed_error: float
    constants: BoundConstants
    leakage_mass: float = math.nan
    eps0: float = math.nan
    fitted_slope: float = math.nan
    hypothesis_violated: bool = False

    @property
    def linear_term(self):
        return self.constants.c_lin * self.epsilon

    @property
    def exp_term(self):
        return self.constants.c_exp * math.exp(-self.constants.gap / (2.0 * self.epsilon))

    @property
    def bound(self):
        return self.linear_term + self.exp_term

    @property
    def satisfied(self):
        return self.observed_error <= self.bound

    @property
    def in_regime(self):
        """epsilon is at or below both the detected eps0 and gap / 4"""
        return self.epsilon <= min(self.eps0, self.constants.gap / 4.0)

    def leakage_bound(self, c=2.0):
        """(M - |I|) * exp(-gap / (c eps))"""
        off_face = self.constants.m_count - self.constants.face_size
        return off_face * math.exp(-self.constants.gap / (c * self.epsilon))

    @property
    def status(self):
        if self.hypothesis_violated:
            return CheckStatus.SKIPPED_DEGENERATE
        if self.satisfied:
            return CheckStatus.PASS
        if not self.in_regime:
            return CheckStatus.OUTSIDE_REGIME
        return CheckStatus.FAIL

    @property
    def label(self):
        if self.hypothesis_violated:
            return "gap hypothesis violated"
        if not self.in_regime:
            return "outside small-eps regime"
        return "small-eps regime"

    def to_row(self):
        c = self.constants
        return {
            'instance_id': self.instance_id,
            'epsilon': self.epsilon,
            'observed_error': self.observed_error,
            'linear_term': self.linear_term,
            'exp_term': self.exp_term,
            'bound': self.bound,
            'satisfied': int(self.satisfied),
            'status': self.status.value,
            'label': self.label,
            'eps0': self.eps0,
            'fitted_slope': self.fitted_slope,
            'leakage_mass': self.leakage_mass,
            'leakage_bound_c1': self.leakage_bound(1.0),
            'leakage_bound_c2': self.leakage_bound(2.0),
            'c_lin': c.c_lin,
            'c_exp': c.c_exp,
            'gap': c.gap,
            'kappa': c.kappa,
            'grad_bound': c.grad_bound,
            'diameter': c.diameter,
            'm_count': c.m_count,
            'face_size': c.face_size,
        }


@dataclass
class ExpansionReport:
    """
    First-order expansion of the entropic weights inside the active face
    """
    instance_id: str
    epsilons: list
    first_order_direction: np.ndarray
    residual_norms: list
    finite_difference_error: float = math.nan
    invalid: bool = False

    @property
    def quadratic_ratio(self):
        """residual / eps^2 for every grid point"""
        return [r / (e * e) for r, e in zip(self.residual_norms, self.epsilons)]

    @property
    def shrink_factors(self):
        """Ratios of successive residuals along the grid"""
        res = self.residual_norms
        return [res[i] / res[i + 1] if res[i + 1] > 0 else math.inf for i in range(len(res) - 1)]

    @property
    def ratio_spread(self):
        """(max - min) / max of the quadratic ratios"""
        ratios = self.quadratic_ratio
        top = max(ratios) if ratios else 0.0
        if top == 0.0:
            return 0.0
        return (top - min(ratios)) / top

    @property
    def status(self):
        """Pass when residual / eps^2 is stable and residuals shrink ~4x per halving"""
        if self.invalid:
            return CheckStatus.SKIPPED_DEGENERATE
        if max(self.residual_norms, default=0.0) <= RESIDUAL_NOISE_FLOOR:
            return CheckStatus.PASS
        low, high = SHRINK_WINDOW
        shrink_ok = all(low <= s <= high for s in self.shrink_factors)
        if self.ratio_spread <= RATIO_SPREAD_LIMIT and shrink_ok:
            return CheckStatus.PASS
        return CheckStatus.FAIL

    def to_row(self):
        return {
            'instance_id': self.instance_id,
            'status': self.status.value,
            'epsilons': ";".join(repr(float(e)) for e in self.epsilons),
            'direction_norm': float(np.linalg.norm(self.first_order_direction)),
            'residual_norms': ";".join(repr(float(r)) for r in self.residual_norms),
            'quadratic_ratio': ";".join(repr(float(r)) for r in self.quadratic_ratio),
            'ratio_spread': self.ratio_spread,
            'finite_difference_error': self.finite_difference_error,
            'invalid': int(self.invalid),
        }


@dataclass
class GapStatReport:
    """Monte Carlo summary of the top-two score gap of M Gaussian scores"""
    m_count: int
    trials: int
    seed: int
    mean_scaled_gap: float
    ks_distance: float
    mean_gap: float
    min_gap: float
    method: str

    def to_dict(self):
        return {
            'm_count': self.m_count,
            'trials': self.trials,
            'seed': self.seed,
            'mean_scaled_gap': self.mean_scaled_gap,
            'ks_distance': self.ks_distance,
            'mean_gap': self.mean_gap,
            'min_gap': self.min_gap,
            'method': self.method,
            'reference_scale': 1.0 / math.sqrt(2.0 * math.log(self.m_count)),
        }


@dataclass
class CheckReport:
    """
    Generic pass/fail record for checks without a dedicated report type

    metrics holds the check-specific numbers, written as CSV columns in insertion order.
    """
    check: str
    instance_id: str
    status: CheckStatus
    metrics: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self):
        return self.status is CheckStatus.PASS

    def to_row(self):
        row = {'check': self.check, 'instance_id': self.instance_id, 'status': self.status.value}
        row.update(self.metrics)
        row['note'] = self.note
        return row
