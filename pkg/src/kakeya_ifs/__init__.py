"""Analysis of planar affine iterated function systems of Kakeya type."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BudgetExceeded,
    HypothesisViolated,
    KakeyaError,
    NearHyperplane,
    NoEntry,
    ParseError,
    ResolutionError,
    SingularInput,
    ValidationError,
)
from .ifs import AffineMap, IfsSystem, Word, load_system  # noqa: F401
