"""
Models package for facestab
"""

from models.errors import (
    FacestabError,
    ParameterError,
    NonFiniteInputError,
    InputFormatError,
    SizeLimitError,
    ProjectionError
)
from models.dictionary import (
    Dictionary,
    SimplexWeights,
    ProjectionSolution,
    FaceGeometry,
    Instance,
    UndefinedGap,
    is_defined
)
from models.entropic import (
    EntropicConfig,
    EntropicSolution,
    FwCertificate,
    FrankWolfeResult,
    ScreeningResult,
    SolverKind,
    StepRule
)
from models.reports import (
    BoundConstants,
    BoundReport,
    ExpansionReport,
    GapStatReport,
    CheckReport,
    CheckStatus
)
from models.paged_cache import (
    PagedKvCache,
    RoutingConfig,
    DecodeOutput,
    DecodeStats,
    DecodeMode,
    FallbackPolicy,
    SparseObjective,
    PagePooling
)
from models.run_config import RunConfig, Command, Param, PARAMETER_SCHEMA, resolve_parameters

__all__ = [
    'FacestabError',
    'ParameterError',
    'NonFiniteInputError',
    'InputFormatError',
    'SizeLimitError',
    'ProjectionError',
    'Dictionary',
    'SimplexWeights',
    'ProjectionSolution',
    'FaceGeometry',
    'Instance',
    'UndefinedGap',
    'is_defined',
    'EntropicConfig',
    'EntropicSolution',
    'FwCertificate',
    'FrankWolfeResult',
    'ScreeningResult',
    'SolverKind',
    'StepRule',
    'BoundConstants',
    'BoundReport',
    'ExpansionReport',
    'GapStatReport',
    'CheckReport',
    'CheckStatus',
    'PagedKvCache',
    'RoutingConfig',
    'DecodeOutput',
    'DecodeStats',
    'DecodeMode',
    'FallbackPolicy',
    'SparseObjective',
    'PagePooling',
    'RunConfig',
    'Command',
    'Param',
    'PARAMETER_SCHEMA',
    'resolve_parameters'
]
