"""Gateway server: secure ingest, real-time pipeline, storage, JSON API."""

from ecgmon.gateway.server import Gateway, GatewayConfig
from ecgmon.gateway.analysis import AnalysisRequest, AnalysisMode

__all__ = ["Gateway", "GatewayConfig", "AnalysisRequest", "AnalysisMode"]
