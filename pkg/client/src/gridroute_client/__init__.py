"""Gym-style remote client for the gridroute environment server."""

__version__ = "0.1.0"

from .agents import EpisodeSummary, run_greedy_agent, run_random_agent
from .env import (
    ENDPOINT_ENV_VAR,
    OrderingObservation,
    RegionSetExhaustedError,
    RemoteEnv,
    RoutingObservation,
    make_env,
)
from .framing import ClientProtocolError, ServerError, SessionClosedError

__all__ = [
    "ENDPOINT_ENV_VAR",
    "ClientProtocolError",
    "EpisodeSummary",
    "OrderingObservation",
    "RegionSetExhaustedError",
    "RemoteEnv",
    "RoutingObservation",
    "ServerError",
    "SessionClosedError",
    "make_env",
    "run_greedy_agent",
    "run_random_agent",
]
