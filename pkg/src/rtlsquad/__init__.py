"""Multi-agent RTL generation with feedback-controlled PPA exploration."""

from rtlsquad.config import OrchestratorConfig, build_config, load_config
from rtlsquad.model import DesignInputs, Outcome, PpaMetrics, SessionState
from rtlsquad.orchestrator import provider_call_bound, run
from rtlsquad.points import PointsConfig, update_points
from rtlsquad.session import Session

__all__ = [
    "DesignInputs",
    "OrchestratorConfig",
    "Outcome",
    "PointsConfig",
    "PpaMetrics",
    "Session",
    "SessionState",
    "build_config",
    "load_config",
    "provider_call_bound",
    "run",
    "update_points",
]

__version__ = "0.1.0"
