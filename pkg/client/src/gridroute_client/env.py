"""Remote environment handles with a Gym-style reset/step/close surface.

All routing semantics live server-side; this module only moves messages
and reshapes observations into numpy arrays.
"""

from __future__ import annotations

import os
import random
import socket
from dataclasses import dataclass

import numpy as np

from .framing import (
    PROTOCOL_VERSION,
    ClientProtocolError,
    ServerError,
    SessionClosedError,
    pack,
    recv_message,
)

ENDPOINT_ENV_VAR = "GRIDROUTE_ENDPOINT"


class RegionSetExhaustedError(Exception):
    """The server has no further regions to serve (validator mode)."""


@dataclass
class OrderingObservation:
    dim: tuple[int, int, int]
    pitch: tuple[int, int]
    obstacles: np.ndarray
    nets: dict[int, np.ndarray]
    action_set: tuple[int, ...]
    done: bool


@dataclass
class RoutingObservation:
    dim: tuple[int, int, int]
    pitch: tuple[int, int]
    vector: np.ndarray
    done: bool


class OrderingActionSpace:
    """The remaining net ids; sample() draws one with the env's RNG."""

    def __init__(self, rng: random.Random):
        self._rng = rng
        self.legal: tuple[int, ...] = ()

    def sample(self) -> int:
        if not self.legal:
            raise ValueError("empty action set")
        return self._rng.choice(self.legal)


class RoutingActionSpace:
    """Direction moves 0..5 with unit step."""

    def __init__(self, rng: random.Random):
        self._rng = rng

    def sample(self) -> dict:
        return {"d": self._rng.randrange(6), "s": 1}


def _parse_endpoint(endpoint) -> tuple[str, int]:
    if endpoint is None:
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
    if endpoint is None:
        raise ValueError(f"no endpoint given and {ENDPOINT_ENV_VAR} is unset")
    if isinstance(endpoint, str):
        host, _, port = endpoint.rpartition(":")
        return host or "127.0.0.1", int(port)
    host, port = endpoint
    return host, int(port)


class RemoteEnv:
    """One server session driving ordering or routing episodes remotely."""

    def __init__(
        self,
        kind: str = "ordering",
        endpoint=None,
        env_name: str | None = None,
        test_case_name: str | None = None,
        clip_size: int | None = None,
        clip_location: tuple[int, int] | None = None,
        iteration_count: int | None = None,
        net_loop: int | None = None,
        net: int | None = None,
        seed: int | None = None,
        region_text: str | None = None,
        timeout: float = 30.0,
    ):
        if kind not in ("ordering", "routing"):
            raise ValueError(f"kind must be 'ordering' or 'routing', got {kind!r}")
        self.kind = kind
        self.env_name = env_name
        self._reset_params = {
            "test_case_name": test_case_name,
            "clip_size": clip_size,
            "clip_location": list(clip_location) if clip_location else None,
            "net_loop": net_loop,
            "net": net,
            "seed": seed,
            "region_text": region_text,
        }
        self.iteration_count = iteration_count
        self._rng = random.Random(seed)
        self.action_space = (
            OrderingActionSpace(self._rng) if kind == "ordering" else RoutingActionSpace(self._rng)
        )
        self._closed = False
        self.last_payload: dict | None = None
        self.total_reward = 0.0
        self.total_reward_half = 0

        host, port = _parse_endpoint(endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectionRefusedError(f"cannot reach server at {host}:{port}: {exc}") from None
        hello = self._request("HELLO", {"v": PROTOCOL_VERSION}, session=False)
        if hello["payload"].get("v") != PROTOCOL_VERSION:
            self._sock.close()
            raise ClientProtocolError(
                f"protocol version mismatch: server speaks {hello['payload'].get('v')!r}"
            )
        self._session = hello["session"]

    # -- plumbing ---------------------------------------------------------

    def _request(self, mtype: str, payload: dict, session: bool = True) -> dict:
        if self._closed:
            raise SessionClosedError("environment is closed")
        self._sock.sendall(pack(mtype, self._session if session else None, payload))
        reply = recv_message(self._sock)
        if reply["type"] == "ERROR":
            p = reply.get("payload", {})
            raise ServerError(p.get("code", "error"), p.get("message", ""))
        return reply

    def _observation(self, payload: dict):
        obs = payload["observation"]
        dim = tuple(obs["dim"])
        pitch = tuple(obs.get("pitch", (1, 1)))
        if self.kind == "ordering":
            return OrderingObservation(
                dim=dim,
                pitch=pitch,
                obstacles=np.asarray(obs["obstacles"], dtype=np.int8),
                nets={int(k): np.asarray(v, dtype=np.int8) for k, v in obs["nets"].items()},
                action_set=tuple(obs["action_set"]),
                done=bool(obs.get("done", payload.get("done", False))),
            )
        return RoutingObservation(
            dim=dim,
            pitch=pitch,
            vector=np.asarray(obs["vector"], dtype=np.int64),
            done=bool(obs.get("done", payload.get("done", False))),
        )

    def _sync_action_space(self, observation) -> None:
        if self.kind == "ordering":
            self.action_space.legal = observation.action_set

    # -- Gym-style surface --------------------------------------------------

    def reset(self):
        payload = {"task": self.kind}
        if self.env_name:
            payload["env_name"] = self.env_name
        for key, value in self._reset_params.items():
            if value is not None:
                payload[key] = value
        reply = self._request("RESET", payload)
        if reply["type"] == "CLOSE":
            raise RegionSetExhaustedError(reply.get("payload", {}).get("reason", "exhausted"))
        if reply["type"] != "OBSERVATION":
            raise ClientProtocolError(f"expected OBSERVATION, got {reply['type']}")
        self.last_payload = reply["payload"]
        self.total_reward = 0.0
        self.total_reward_half = 0
        observation = self._observation(reply["payload"])
        self._sync_action_space(observation)
        return observation

    def step(self, action):
        reply = self._request("STEP", {"action": action})
        if reply["type"] != "TRANSITION":
            raise ClientProtocolError(f"expected TRANSITION, got {reply['type']}")
        payload = reply["payload"]
        self.last_payload = payload
        reward = payload["reward"]
        done = payload["done"]
        self.total_reward += reward
        self.total_reward_half += payload["reward_half"]
        observation = self._observation(payload)
        self._sync_action_space(observation)
        return observation, reward, done

    def metrics(self, baseline: str | None = None, iterations: int | None = None) -> dict:
        payload: dict = {}
        if baseline:
            payload["baseline"] = baseline
        rounds = iterations if iterations is not None else self.iteration_count
        if rounds:
            payload["iterations"] = rounds
        return self._request("METRICS", payload)["payload"]

    def close(self) -> None:
        if self._closed:
            return
        try:
            self._request("CLOSE", {})
        except (ClientProtocolError, OSError):
            pass
        finally:
            self._closed = True
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_env(kind: str = "ordering", endpoint=None, **params) -> RemoteEnv:
    """Open a session; params mirror the server's episode parameters
    (env_name, test_case_name, clip_size, iteration_count, net_loop, seed, ...)."""
    return RemoteEnv(kind, endpoint, **params)
