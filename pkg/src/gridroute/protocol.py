"""Framed JSON session protocol for remote environment access.

Frame layout: 4-byte big-endian unsigned body length, then that many
bytes of UTF-8 JSON. Bodies are objects with a "type" field, an optional
"session" field and a "payload" object:

    HELLO       client opens; payload {"v": 1}; reply carries the session id
    RESET       payload {task, region|region_text, seed, net, clip_size, ...}
    OBSERVATION reply to RESET: {observation, done, action_set?}
    STEP        payload {"action": ...}
    TRANSITION  reply to STEP: {observation, reward, reward_half, done}
    METRICS     snapshot request; optional baseline {policy, iterations}
    ERROR       {code, message}
    CLOSE       session teardown (also the reply when a validator list ends)

Responses are serialised with sorted keys, so a byte-identical request
script against fixed seeds yields a byte-identical response stream.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import drc, metrics
from .envs import (
    EpisodeDoneError,
    IllegalActionError,
    OrderingEnv,
    RoutingEnv,
    rrr_iterate,
)
from .metrics import CostWeights, MetricsSnapshot
from .policies import FixedOrderPolicy, make_policy
from .regions import (
    RegionDescriptor,
    RegionError,
    crop_region,
    parse_region,
    partition_design,
)

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024

MESSAGE_TYPES = (
    "HELLO",
    "RESET",
    "OBSERVATION",
    "STEP",
    "TRANSITION",
    "METRICS",
    "ERROR",
    "CLOSE",
)


class ProtocolError(Exception):
    code = "protocol_error"


class FrameTruncatedError(ProtocolError):
    code = "truncated_frame"


class FrameOversizeError(ProtocolError):
    code = "oversize_frame"


class MessageDecodeError(ProtocolError):
    code = "bad_json"


class MessageSchemaError(ProtocolError):
    code = "bad_schema"


@dataclass(frozen=True)
class Message:
    type: str
    session: str | None = None
    payload: dict = field(default_factory=dict)


def encode(message: Message) -> bytes:
    """Frame a message; raises FrameOversizeError past the 16 MiB cap."""
    if message.type not in MESSAGE_TYPES:
        raise MessageSchemaError(f"unknown message type {message.type!r}")
    if not isinstance(message.payload, dict):
        raise MessageSchemaError("payload must be an object")
    body = {"type": message.type, "payload": message.payload}
    if message.session is not None:
        body["session"] = message.session
    raw = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(raw) > MAX_FRAME:
        raise FrameOversizeError(f"frame of {len(raw)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(raw)) + raw


def decode(frame: bytes) -> Message:
    """Parse one complete frame back into a Message."""
    if len(frame) < HEADER.size:
        raise FrameTruncatedError("frame shorter than its length header")
    (length,) = HEADER.unpack(frame[: HEADER.size])
    if length > MAX_FRAME:
        raise FrameOversizeError(f"declared length {length} exceeds {MAX_FRAME}")
    body = frame[HEADER.size :]
    if len(body) != length:
        raise FrameTruncatedError(f"declared {length} bytes, got {len(body)}")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MessageDecodeError(f"bad frame body: {exc}") from None
    if not isinstance(obj, dict):
        raise MessageSchemaError("frame body must be a JSON object")
    mtype = obj.get("type")
    if mtype not in MESSAGE_TYPES:
        raise MessageSchemaError(f"unknown message type {mtype!r}")
    session = obj.get("session")
    if session is not None and not isinstance(session, str):
        raise MessageSchemaError("session must be a string")
    payload = obj.get("payload", {})
    if not isinstance(payload, dict):
        raise MessageSchemaError("payload must be an object")
    return Message(mtype, session, payload)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read exactly one frame from a socket; None on clean EOF."""
    header = _read_exact(sock, HEADER.size)
    if header is None:
        return None
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameOversizeError(f"declared length {length} exceeds {MAX_FRAME}")
    body = _read_exact(sock, length)
    if body is None and length > 0:
        raise FrameTruncatedError("connection closed mid-frame")
    return header + (body or b"")


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    """n bytes from the socket; None on EOF before the first byte."""
    chunks: list[bytes] = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise FrameTruncatedError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


# -- server -------------------------------------------------------------------


class ReportSink:
    """Append-only episode log shared by all sessions of one server.

    Rows land in completion order, so this is a log rather than a
    deterministic report; the bench command produces those.
    """

    HEADER = "session,task,region,net,steps,wirelength,vias,drv,cost_half\n"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(self.HEADER, encoding="utf-8")

    def write(self, row: list) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(",".join("" if x is None else str(x) for x in row) + "\n")


@dataclass
class ServerConfig:
    """Everything a session needs to build environments."""

    regions: list[RegionDescriptor] = field(default_factory=list)
    mode: str = "trainer"
    seed: int = 0
    clip_size: int | None = None
    clip_location: tuple[int, int] | None = None
    clip_loop: int = 1
    region_set_loop: int = 0  # 0 = unlimited (trainer mode only)
    iteration_count: int = 0
    net_loop: int = 1
    weights: CostWeights = field(default_factory=CostWeights)
    drc_config: drc.DrcConfig = field(default_factory=drc.DrcConfig)
    report_sink: ReportSink | None = None

    def region_by_name(self, name: str) -> RegionDescriptor | None:
        for r in self.regions:
            if r.name == name:
                return r
        return None

    def clips_of(
        self,
        region: RegionDescriptor,
        clip_size: int | None = None,
        clip_location=None,
    ) -> list[RegionDescriptor]:
        size = clip_size if clip_size is not None else self.clip_size
        location = clip_location if clip_location is not None else self.clip_location
        if size is None:
            return [region]
        boxes = partition_design((region.dim[0], region.dim[1]), size)
        if location is not None:
            boxes = [b for b in boxes if (b[0], b[1]) == tuple(location)]
            if not boxes:
                raise RegionError(f"no clip at location {tuple(location)}")
        return [crop_region(region, b) for b in boxes]

    def episode_stream(self):
        """Region sequence a session walks when RESET names no region."""
        loops = 0
        while True:
            for region in self.regions:
                for clip in self.clips_of(region):
                    for _ in range(max(1, self.clip_loop)):
                        yield clip
            loops += 1
            if self.mode == "validator":
                return
            if self.region_set_loop and loops >= self.region_set_loop:
                return


class Session:
    """One connection's state: an id, an environment, an episode stream."""

    def __init__(self, session_id: str, config: ServerConfig):
        self.id = session_id
        self.config = config
        self.env: OrderingEnv | RoutingEnv | None = None
        self.task: str | None = None
        self.actions: list = []
        self._stream = config.episode_stream()
        self._episode_index = 0
        self._routing_region: RegionDescriptor | None = None
        self._routing_cycle: list[int] = []
        self._current_region: str | None = None
        self._current_net: int | None = None

    def _next_region(self) -> RegionDescriptor | None:
        try:
            return next(self._stream)
        except StopIteration:
            return None

    def handle(self, msg: Message) -> Message:
        if msg.type == "RESET":
            return self._handle_reset(msg)
        if msg.type == "STEP":
            return self._handle_step(msg)
        if msg.type == "METRICS":
            return self._handle_metrics(msg)
        raise MessageSchemaError(f"unexpected request type {msg.type}")

    def _explicit_region(self, payload: dict) -> RegionDescriptor | None:
        if "region_text" in payload:
            return parse_region(payload["region_text"])
        name = payload.get("region") or payload.get("test_case_name")
        if name:
            region = self.config.region_by_name(str(name))
            if region is None:
                raise RegionError(f"unknown region {name!r}")
            clips = self.config.clips_of(
                region, payload.get("clip_size"), payload.get("clip_location")
            )
            return clips[self._episode_index % len(clips)]
        return None

    def _handle_reset(self, msg: Message) -> Message:
        payload = msg.payload
        task = payload.get("task", "ordering")
        if task not in ("ordering", "routing"):
            raise MessageSchemaError(f"unknown task {task!r}")
        seed = int(payload.get("seed", self.config.seed))
        self.task = task
        self.actions = []

        region = self._explicit_region(payload)
        net_id = payload.get("net")
        if task == "routing" and region is None and net_id is None:
            # auto mode cycles every net of a region net_loop times
            if not self._routing_cycle:
                nxt = self._next_region()
                if nxt is None:
                    self.env = None
                    return Message("CLOSE", self.id, {"reason": "region list exhausted"})
                loop = max(1, int(payload.get("net_loop", self.config.net_loop)))
                self._routing_region = nxt
                self._routing_cycle = [
                    nid for nid in sorted(nxt.net_ids()) for _ in range(loop)
                ]
                if not self._routing_cycle:
                    raise RegionError(f"region {nxt.name} has no nets to route")
            region = self._routing_region
            net_id = self._routing_cycle.pop(0)
        elif region is None:
            region = self._next_region()
            if region is None:
                self.env = None
                return Message("CLOSE", self.id, {"reason": "region list exhausted"})

        self._episode_index += 1
        self._current_region = region.name
        self._current_net = None
        if task == "ordering":
            self.env = OrderingEnv(
                region,
                mode=self.config.mode,
                seed=seed,
                weights=self.config.weights,
                drc_config=self.config.drc_config,
            )
            obs = self.env.observe()
            return Message(
                "OBSERVATION",
                self.id,
                {
                    "observation": obs.to_payload(),
                    "done": self.env.done,
                    "action_set": list(obs.action_set),
                    "region": region.name,
                },
            )
        if net_id is None:
            ids = sorted(region.net_ids())
            if not ids:
                raise RegionError(f"region {region.name} has no nets to route")
            net_id = ids[(self._episode_index - 1) % len(ids)]
        self._current_net = int(net_id)
        self.env = RoutingEnv(region, int(net_id), seed=seed, weights=self.config.weights)
        obs = self.env.observe()
        return Message(
            "OBSERVATION",
            self.id,
            {
                "observation": obs.to_payload(),
                "done": self.env.done,
                "region": region.name,
                "net": int(net_id),
            },
        )

    def _handle_step(self, msg: Message) -> Message:
        if self.env is None:
            raise MessageSchemaError("no episode: send RESET first")
        if "action" not in msg.payload:
            raise MessageSchemaError("STEP requires an action")
        action = msg.payload["action"]
        try:
            obs, reward, done = self.env.step(action)
        except (IllegalActionError, EpisodeDoneError) as exc:
            raise MessageSchemaError(str(exc)) from None
        self.actions.append(action)
        if done and self.config.report_sink is not None:
            snap = self.env.snapshot if isinstance(self.env, OrderingEnv) else self.env.snapshot()
            self.config.report_sink.write(
                [
                    self.id,
                    self.task,
                    self._current_region,
                    self._current_net,
                    self.env.steps,
                    snap.wirelength,
                    snap.via_count,
                    snap.drv_count,
                    metrics.cost(snap, self.config.weights),
                ]
            )
        return Message(
            "TRANSITION",
            self.id,
            {
                "observation": obs.to_payload(),
                "reward": reward,
                "reward_half": round(reward * 2),
                "done": done,
            },
        )

    def _handle_metrics(self, msg: Message) -> Message:
        if self.env is None:
            raise MessageSchemaError("no episode: send RESET first")
        if isinstance(self.env, OrderingEnv):
            snap = self.env.snapshot
            kinds = drc.count_by_kind(self.env.violations)
            steps = self.env.steps
        else:
            snap = self.env.snapshot()
            kinds = {"open": snap.drv_count, "short": 0, "spacing": 0, "min_area": 0}
            steps = self.env.steps
        payload = {
            "wirelength": snap.wirelength,
            "vias": snap.via_count,
            "drv": snap.drv_count,
            "drv_by_kind": kinds,
            "cost_half": metrics.cost(snap, self.config.weights),
            "cost": metrics.cost(snap, self.config.weights) / 2,
            "steps": steps,
            "done": self.env.done,
        }
        baseline = msg.payload.get("baseline")
        iterations = int(msg.payload.get("iterations", self.config.iteration_count) or 0)
        wants_refined = isinstance(self.env, OrderingEnv) and (
            baseline or (iterations > 0 and self.env.done and self.actions)
        )
        if wants_refined:
            if baseline:
                policy = make_policy(str(baseline), self.config.seed)
            else:
                policy = FixedOrderPolicy(tuple(int(a) for a in self.actions))
            rounds = max(1, iterations)
            snaps = rrr_iterate(
                self.env.region,
                policy,
                rounds,
                weights=self.config.weights,
                drc_config=self.config.drc_config,
            )
            payload["refined"] = {
                "policy": getattr(policy, "name", "fixed"),
                "iterations": rounds,
                "trend": [_snapshot_payload(s, self.config.weights) for s in snaps],
            }
        return Message("METRICS", self.id, payload)


def _snapshot_payload(s: MetricsSnapshot, w: CostWeights) -> dict:
    return {
        "wirelength": s.wirelength,
        "vias": s.via_count,
        "drv": s.drv_count,
        "cost_half": metrics.cost(s, w),
    }


class EnvServer:
    """Threaded TCP server: one session per connection, in-order requests.

    At most thread_count sessions run concurrently; extra connections are
    accepted but wait for a slot.
    """

    def __init__(self, host: str, port: int, config: ServerConfig, thread_count: int = 4):
        self.config = config
        self.thread_count = max(1, thread_count)
        self._slots = threading.Semaphore(self.thread_count)
        self._session_counter = 0
        self._counter_lock = threading.Lock()
        server_self = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                server_self._serve_connection(self.request)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.host, self.port = self._server.server_address[:2]
        self._thread: threading.Thread | None = None

    def _next_session_id(self) -> str:
        with self._counter_lock:
            self._session_counter += 1
            return f"s{self._session_counter}"

    def _serve_connection(self, sock: socket.socket) -> None:
        with self._slots:
            session: Session | None = None
            while True:
                try:
                    frame = read_frame(sock)
                except ProtocolError as exc:
                    self._send_error(sock, session, exc)
                    return
                except OSError:
                    return
                if frame is None:
                    return
                try:
                    msg = decode(frame)
                except ProtocolError as exc:
                    self._send_error(sock, session, exc)
                    return
                try:
                    reply, session = self._dispatch(msg, session)
                except ProtocolError as exc:
                    self._send_error(sock, session, exc)
                    continue
                except (RegionError, ValueError) as exc:
                    self._send_frame(
                        sock,
                        Message(
                            "ERROR",
                            session.id if session else None,
                            {"code": "bad_request", "message": str(exc)},
                        ),
                    )
                    continue
                self._send_frame(sock, reply)
                if msg.type == "CLOSE":
                    return

    def _dispatch(
        self, msg: Message, session: Session | None
    ) -> tuple[Message, Session | None]:
        if msg.type == "HELLO":
            v = msg.payload.get("v")
            if v != PROTOCOL_VERSION:
                raise MessageSchemaError(f"unsupported protocol version {v!r}")
            sid = self._next_session_id()
            new_session = Session(sid, self.config)
            return Message("HELLO", sid, {"v": PROTOCOL_VERSION, "mode": self.config.mode}), new_session
        if session is None:
            raise MessageSchemaError("no episode: send HELLO first")
        if msg.session != session.id:
            raise MessageSchemaError("wrong or missing session id")
        if msg.type == "CLOSE":
            session.env = None
            return Message("CLOSE", session.id, {}), session
        return session.handle(msg), session

    def _send_error(self, sock: socket.socket, session: Session | None, exc: ProtocolError) -> None:
        self._send_frame(
            sock,
            Message(
                "ERROR",
                session.id if session else None,
                {"code": exc.code, "message": str(exc)},
            ),
        )

    @staticmethod
    def _send_frame(sock: socket.socket, msg: Message) -> None:
        try:
            sock.sendall(encode(msg))
        except OSError:
            pass

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


def serve(host: str, port: int, config: ServerConfig, thread_count: int = 4) -> EnvServer:
    """Bind and start a server in a background thread; returns the instance."""
    server = EnvServer(host, port, config, thread_count)
    server.start()
    return server
