"""Oracle construction and scoring for binary decomposition under compilation variance."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    BinaryFunctionId,
    CallEdge,
    CompilationSetting,
    FunctionCallGraph,
    emit_fcg,
    ingest_fcg,
    normalize_name,
)
from .mapping import (  # noqa: F401
    Binary2SourceMap,
    MappingClass,
    SourceFunctionKey,
    build_b2b,
    build_b2s,
    classify_pair,
    mapping_distribution,
)
from .oracle import (  # noqa: F401
    BoundarySet,
    Mefr,
    MefrPartition,
    Mode,
    construct_mefrs,
    identify_boundaries,
    validate_mefr_pair,
)
