"""
Geometry models: the atom dictionary, simplex weights, projection results and face geometry
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from models.errors import NonFiniteInputError, ParameterError

# Relative threshold separating genuine zero weights from round-off
ACTIVE_THRESHOLD = 1e-9
# Feasibility tolerance on the simplex sum
SUM_TOLERANCE = 1e-10
_DIAMETER_BLOCK = 2048


def as_finite_vector(values, name="vector", length=None):
    """Convert input to a 1-D float array and reject NaN/Inf entries"""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains non-finite entries")
    if length is not None and arr.shape[0] != length:
        raise ParameterError(name, f"expected length {length}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class UndefinedGap:
    """
    Tagged "no gap" value, kept distinct from a numeric gap of 0

    reason is one of 'interior-query', 'all-active', 'too-few-scores'.
    """
    reason: str

    def __float__(self):
        return math.nan

    def __str__(self):
        return f"undefined({self.reason})"


def is_defined(gap):
    """True when gap is a number rather than an UndefinedGap sentinel"""
    return not isinstance(gap, UndefinedGap)


class Dictionary:
    """
    A finite set of atoms u_1..u_M in R^d stored as the columns of a d x M matrix
    """

    def __init__(self, atoms):
        """
        Initialize a dictionary from a d x M column matrix

        Args:
            atoms (array-like): Matrix whose columns are the atoms
        """
        matrix = np.array(atoms, dtype=float, ndmin=2, copy=True)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise ParameterError("atoms", f"need a non-empty d x M matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteInputError("dictionary atoms contain non-finite entries")
        matrix.setflags(write=False)
        self.atoms = matrix
        self._diameter = None
        self._op_norm = None

    @classmethod
    def from_rows(cls, rows):
        """Create a dictionary from an M x d array with one atom per row"""
        return cls(np.asarray(rows, dtype=float).T)

    @property
    def m_count(self):
        """Number of atoms M"""
        return self.atoms.shape[1]

    @property
    def dim(self):
        """Ambient dimension d"""
        return self.atoms.shape[0]

    @property
    def diameter(self):
        """Largest pairwise atom distance D (computed on first use)"""
        if self._diameter is None:
            rows = self.atoms.T
            best = 0.0
            for start in range(0, rows.shape[0], _DIAMETER_BLOCK):
                block = cdist(rows[start:start + _DIAMETER_BLOCK], rows)
                best = max(best, float(block.max()))
            self._diameter = best
        return self._diameter

    @property
    def op_norm(self):
        """Spectral norm of the atom matrix"""
        if self._op_norm is None:
            self._op_norm = float(np.linalg.norm(self.atoms, 2))
        return self._op_norm

    def column(self, index):
        """Return atom u_index (0-based)"""
        return self.atoms[:, index]

    def subset(self, indices):
        """Dictionary restricted to the given atom indices"""
        return Dictionary(self.atoms[:, list(indices)])

    def combine(self, weights):
        """Readout U @ weights"""
        return self.atoms @ np.asarray(weights, dtype=float)

    def to_dict(self):
        """Convert to a JSON-ready dictionary (rows are atoms)"""
        return {
            'm_count': self.m_count,
            'dim': self.dim,
            'atoms': self.atoms.T.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        """Create a dictionary from the output of to_dict"""
        return cls.from_rows(data['atoms'])

    def __repr__(self):
        return f"Dictionary(M={self.m_count}, d={self.dim})"


class SimplexWeights:
    """
    Barycentric weights on the probability simplex
    """

    def __init__(self, weights, tolerance=SUM_TOLERANCE):
        """
        Validate and store simplex weights

        Args:
            weights (array-like): M weights, entries >= -tolerance
            tolerance (float): Feasibility tolerance for negativity and the unit sum
        """
        arr = as_finite_vector(weights, "weights")
        if tolerance < 0:
            raise ParameterError("tolerance", "must be nonnegative")
        if arr.size == 0:
            raise ParameterError("weights", "must be non-empty")
        if arr.min() < -max(tolerance, SUM_TOLERANCE):
            raise ParameterError("weights", f"entry {arr.min():.3e} is negative")
        arr = np.clip(arr, 0.0, None)
        total = arr.sum()
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ParameterError("weights", f"sum {total:.15g} is not 1")
        arr.setflags(write=False)
        self.weights = arr
        self.tolerance = tolerance

    @classmethod
    def uniform(cls, m_count):
        """Barycenter of the simplex"""
        return cls(np.full(m_count, 1.0 / m_count))

    @classmethod
    def vertex(cls, m_count, index):
        """Indicator of a single vertex"""
        arr = np.zeros(m_count)
        arr[index] = 1.0
        return cls(arr)

    @classmethod
    def normalized(cls, values):
        """Clip to nonnegative and rescale to unit sum"""
        arr = np.clip(np.asarray(values, dtype=float), 0.0, None)
        return cls(arr / arr.sum())

    def __len__(self):
        return self.weights.shape[0]

    def support(self, threshold_rel=ACTIVE_THRESHOLD):
        """Sorted indices with weight above threshold_rel * max weight"""
        cutoff = threshold_rel * self.weights.max()
        return [int(i) for i in np.flatnonzero(self.weights > cutoff)]

    def restrict(self, indices):
        """Raw weights on the given indices (not renormalized)"""
        return self.weights[list(indices)].copy()

    def mass_outside(self, indices):
        """Total weight outside the given index set"""
        mask = np.ones(len(self), dtype=bool)
        mask[list(indices)] = False
        return float(self.weights[mask].sum())

    def to_dict(self):
        return {'weights': self.weights.tolist(), 'tolerance': self.tolerance}

    @classmethod
    def from_dict(cls, data):
        return cls(data['weights'], data.get('tolerance', SUM_TOLERANCE))


class ProjectionSolution:
    """
    Euclidean projection of a query onto conv(U) with its KKT certificate
    """

    def __init__(self, alpha, readout, residual, active_set, nu, mu, gap, objective,
                 iterations=0, fw_gap=0.0):
        """
        Args:
            alpha (SimplexWeights): Optimal weights alpha*
            readout (numpy.ndarray): y* = U alpha*
            residual (numpy.ndarray): r* = q - y*
            active_set (list): Sorted support indices I
            nu (float): Multiplier of the unit-sum constraint
            mu (numpy.ndarray): Nonnegative multipliers of alpha >= 0
            gap (float): Minimum off-face multiplier, +inf when every atom is active
            objective (float): 0.5 * ||U alpha - q||^2
            iterations (int): Active-set iterations used
            fw_gap (float): Frank-Wolfe gap of alpha
        """
        self.alpha = alpha
        self.readout = readout
        self.residual = residual
        self.active_set = list(active_set)
        self.nu = nu
        self.mu = mu
        self.gap = gap
        self.objective = objective
        self.iterations = iterations
        self.fw_gap = fw_gap

    @property
    def inactive_set(self):
        """Indices outside the active set"""
        active = set(self.active_set)
        return [j for j in range(len(self.alpha)) if j not in active]

    def to_dict(self):
        return {
            'alpha': self.alpha.weights.tolist(),
            'readout': self.readout.tolist(),
            'residual': self.residual.tolist(),
            'active_set': self.active_set,
            'nu': self.nu,
            'mu': self.mu.tolist(),
            'gap': self.gap,
            'objective': self.objective,
            'iterations': self.iterations,
            'fw_gap': self.fw_gap,
        }

    def __str__(self):
        return (f"ProjectionSolution(|I|={len(self.active_set)}, gap={self.gap:.6g}, "
                f"objective={self.objective:.6g})")


@dataclass
class Instance:
    """
    A generated problem: dictionary and query, plus ground truth for planted kinds

    face and gap are the planted active set and face gap; weights are the
    planted barycentric coordinates on the face.
    """
    kind: str
    dictionary: Dictionary
    query: np.ndarray
    seed: int = 0
    index: int = 0
    face: list = None
    gap: float = None
    weights: np.ndarray = None
    values: np.ndarray = None

    @property
    def instance_id(self):
        return f"{self.kind}-{self.seed}-{self.index}"


class FaceGeometry:
    """
    Tangent basis and conditioning constants of an exposed face
    """

    def __init__(self, face_indices, vertex_indices, basis, sigma_min, kappa, basis_norm,
                 core_radius, coordinate_floor, entropic_grad_bound,
                 entropic_grad_empirical=None):
        """
        Args:
            face_indices (list): Active index set I
            vertex_indices (list): Affinely independent vertices used, i_0 first
            basis (numpy.ndarray): d x m matrix of u_ik - u_i0 columns
            sigma_min (float): Smallest singular value of the basis
            kappa (float): 1 / sigma_min (1 for a single vertex)
            basis_norm (float): Spectral norm of the basis
            core_radius (float): rho, half the smallest face coordinate of alpha*
            coordinate_floor (float): c(rho), lower bound on core coordinates
            entropic_grad_bound (float): G_F(rho)
            entropic_grad_empirical (float, optional): Sup of ||grad Omega_I|| over sampled core points
        """
        self.face_indices = list(face_indices)
        self.vertex_indices = list(vertex_indices)
        self.basis = basis
        self.sigma_min = sigma_min
        self.kappa = kappa
        self.basis_norm = basis_norm
        self.core_radius = core_radius
        self.coordinate_floor = coordinate_floor
        self.entropic_grad_bound = entropic_grad_bound
        self.entropic_grad_empirical = entropic_grad_empirical

    @property
    def dim_face(self):
        """Affine dimension m of the face"""
        return self.basis.shape[1]

    @property
    def linear_constant(self):
        """C_lin = kappa_F * ||B||_op * G_F(rho)"""
        if self.dim_face == 0:
            return 0.0
        return self.kappa * self.basis_norm * self.entropic_grad_bound

    def to_dict(self):
        return {
            'face_indices': self.face_indices,
            'vertex_indices': self.vertex_indices,
            'dim_face': self.dim_face,
            'sigma_min': self.sigma_min,
            'kappa': self.kappa,
            'basis_norm': self.basis_norm,
            'core_radius': self.core_radius,
            'coordinate_floor': self.coordinate_floor,
            'entropic_grad_bound': self.entropic_grad_bound,
            'entropic_grad_empirical': self.entropic_grad_empirical,
        }
