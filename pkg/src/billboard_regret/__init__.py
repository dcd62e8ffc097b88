"""Minimum-regret allocation of billboard slots to advertisers."""

from .core import (
    TOLERANCE,
    Advertiser,
    Allocation,
    IncrementalInfluence,
    InfluenceModel,
    RegretReport,
    influence,
    marginal_regret_ratio,
    regret,
    total_regret,
)
from .errors import ConfigError, InputDomainError, OracleLimitError, ParseError

__version__ = "0.1.0"
