"""Wire format for the environment server, implemented from its schema.

Frames are a 4-byte big-endian body length followed by UTF-8 JSON with
"type", optional "session" and a "payload" object. This module is
self-contained on purpose: the client speaks the published protocol and
shares no code with the server.
"""

from __future__ import annotations

import json
import socket
import struct

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


class ClientProtocolError(Exception):
    """Malformed traffic or an unexpected reply from the server."""


class ServerError(ClientProtocolError):
    """The server answered with an ERROR message."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class SessionClosedError(ClientProtocolError):
    """The session was closed; no further requests are possible."""


def pack(mtype: str, session: str | None, payload: dict) -> bytes:
    body: dict = {"type": mtype, "payload": payload}
    if session is not None:
        body["session"] = session
    raw = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(raw) > MAX_FRAME:
        raise ClientProtocolError(f"frame of {len(raw)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(raw)) + raw


def recv_message(sock: socket.socket) -> dict:
    header = _recv_exact(sock, HEADER.size)
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ClientProtocolError(f"declared frame length {length} exceeds {MAX_FRAME}")
    body = _recv_exact(sock, length)
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ClientProtocolError(f"undecodable frame: {exc}") from None
    if not isinstance(obj, dict) or "type" not in obj:
        raise ClientProtocolError("frame body is not a message object")
    return obj


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise SessionClosedError("server closed the connection")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
