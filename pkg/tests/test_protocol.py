"""Tests for the framed message codec and the session server."""

import random
import socket
import struct
import time

import pytest

from gridroute.protocol import (
    MAX_FRAME,
    FrameOversizeError,
    FrameTruncatedError,
    Message,
    MessageDecodeError,
    MessageSchemaError,
    ProtocolError,
    ServerConfig,
    decode,
    encode,
    read_frame,
    serve,
)
from gridroute.regions import GeneratorParams, fig1_fixture, generate_region


class Client:
    """Minimal scripted client for exercising the server."""

    def __init__(self, host, port, timeout=5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.session = None

    def rpc(self, mtype, payload=None, session="auto"):
        sid = self.session if session == "auto" else session
        self.sock.sendall(encode(Message(mtype, sid, payload or {})))
        reply = decode(read_frame(self.sock))
        if mtype == "HELLO" and reply.type == "HELLO":
            self.session = reply.session
        return reply

    def hello(self):
        return self.rpc("HELLO", {"v": 1}, session=None)

    def close(self):
        self.sock.close()


@pytest.fixture
def fig1_server():
    server = serve("127.0.0.1", 0, ServerConfig(regions=[fig1_fixture()]), thread_count=4)
    yield server
    server.close()


class TestCodec:
    def test_round_trip_identity(self):
        msg = Message("RESET", "s1", {"seed": 7})
        assert decode(encode(msg)) == msg

    def test_round_trip_without_session(self):
        msg = Message("HELLO", None, {"v": 1})
        assert decode(encode(msg)) == msg

    def test_oversize_declared_length(self):
        frame = struct.pack(">I", MAX_FRAME + 1) + b"{}"
        with pytest.raises(FrameOversizeError):
            decode(frame)

    def test_truncated_frame(self):
        good = encode(Message("CLOSE", "s1", {}))
        with pytest.raises(FrameTruncatedError):
            decode(good[:-3])

    def test_malformed_json(self):
        body = b"{nope"
        with pytest.raises(MessageDecodeError):
            decode(struct.pack(">I", len(body)) + body)

    def test_unknown_type(self):
        body = b'{"type":"TELEPORT","payload":{}}'
        with pytest.raises(MessageSchemaError):
            decode(struct.pack(">I", len(body)) + body)

    def test_non_object_body(self):
        body = b"[1,2,3]"
        with pytest.raises(MessageSchemaError):
            decode(struct.pack(">I", len(body)) + body)

    def test_encode_rejects_unknown_type(self):
        with pytest.raises(MessageSchemaError):
            encode(Message("TELEPORT", None, {}))

    def test_random_messages_round_trip(self):
        rng = random.Random(1)
        types = ["HELLO", "RESET", "OBSERVATION", "STEP", "TRANSITION", "METRICS", "ERROR", "CLOSE"]

        def value(depth=0):
            kind = rng.randrange(6 if depth < 2 else 4)
            if kind == 0:
                return rng.randint(-(2**31), 2**31)
            if kind == 1:
                return rng.random()
            if kind == 2:
                return rng.choice([True, False, None])
            if kind == 3:
                return "".join(rng.choice("abc xyz_0123") for _ in range(rng.randrange(8)))
            if kind == 4:
                return [value(depth + 1) for _ in range(rng.randrange(4))]
            return {f"k{i}": value(depth + 1) for i in range(rng.randrange(4))}

        for _ in range(300):
            msg = Message(
                rng.choice(types),
                rng.choice([None, f"s{rng.randrange(10)}"]),
                {f"f{i}": value() for i in range(rng.randrange(5))},
            )
            assert decode(encode(msg)) == msg

    def test_mutated_frames_fail_structurally(self):
        rng = random.Random(2)
        base = encode(Message("RESET", "s1", {"seed": 3, "task": "ordering"}))
        for _ in range(300):
            blob = bytearray(base)
            op = rng.randrange(3)
            if op == 0:
                blob = blob[: rng.randrange(len(blob))]
            elif op == 1:
                for _ in range(rng.randrange(1, 6)):
                    blob[rng.randrange(len(blob))] = rng.randrange(256)
            else:
                blob = bytearray(rng.randbytes(rng.randrange(64)))
            try:
                decode(bytes(blob))
            except ProtocolError:
                pass  # structured error is the contract


class TestServerSessions:
    def test_full_ordering_episode(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        hello = c.hello()
        assert hello.payload["v"] == 1 and hello.session == c.session
        obs = c.rpc("RESET", {"task": "ordering", "region": "fig1", "seed": 1})
        assert obs.type == "OBSERVATION"
        assert obs.payload["action_set"] == [1, 2, 3, 4]
        total_half = 0
        for action in (3, 4, 1, 2):
            tr = c.rpc("STEP", {"action": action})
            assert tr.type == "TRANSITION"
            total_half += tr.payload["reward_half"]
        assert tr.payload["done"] is True
        m = c.rpc("METRICS")
        assert m.payload["drv"] == 0
        assert total_half == -m.payload["cost_half"]
        assert c.rpc("CLOSE").type == "CLOSE"
        c.close()

    def test_step_before_reset_is_error(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        c.hello()
        reply = c.rpc("STEP", {"action": 1})
        assert reply.type == "ERROR"
        assert "no episode" in reply.payload["message"]
        c.close()

    def test_request_before_hello_is_error(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        reply = c.rpc("RESET", {"task": "ordering"}, session=None)
        assert reply.type == "ERROR"
        c.close()

    def test_version_mismatch(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        reply = c.rpc("HELLO", {"v": 99}, session=None)
        assert reply.type == "ERROR"
        assert "version" in reply.payload["message"]
        c.close()

    def test_wrong_session_id_rejected(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        c.hello()
        reply = c.rpc("RESET", {"task": "ordering"}, session="s999")
        assert reply.type == "ERROR"
        c.close()

    def test_illegal_action_is_error_and_state_survives(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        c.hello()
        c.rpc("RESET", {"task": "ordering", "region": "fig1"})
        err = c.rpc("STEP", {"action": 42})
        assert err.type == "ERROR"
        ok = c.rpc("STEP", {"action": 3})
        assert ok.type == "TRANSITION"
        c.close()

    def test_session_isolation(self, fig1_server):
        a = Client(fig1_server.host, fig1_server.port)
        b = Client(fig1_server.host, fig1_server.port)
        a.hello()
        b.hello()
        a.rpc("RESET", {"task": "ordering", "region": "fig1", "seed": 1})
        b.rpc("RESET", {"task": "ordering", "region": "fig1", "seed": 1})
        ra1 = a.rpc("STEP", {"action": 3}).payload["reward"]
        rb1 = b.rpc("STEP", {"action": 1}).payload["reward"]
        ra2 = a.rpc("STEP", {"action": 4}).payload["reward"]
        # replay session a's prefix on a third session: identical rewards
        c = Client(fig1_server.host, fig1_server.port)
        c.hello()
        c.rpc("RESET", {"task": "ordering", "region": "fig1", "seed": 1})
        assert c.rpc("STEP", {"action": 3}).payload["reward"] == ra1
        assert c.rpc("STEP", {"action": 4}).payload["reward"] == ra2
        for cl in (a, b, c):
            cl.close()

    def test_oversize_frame_closes_connection(self, fig1_server):
        sock = socket.create_connection((fig1_server.host, fig1_server.port), timeout=5)
        sock.sendall(struct.pack(">I", MAX_FRAME + 5))
        reply = decode(read_frame(sock))
        assert reply.type == "ERROR"
        assert reply.payload["code"] == "oversize_frame"
        assert read_frame(sock) is None  # server hung up
        sock.close()

    def test_routing_task_over_the_wire(self, fig1_server):
        c = Client(fig1_server.host, fig1_server.port)
        c.hello()
        obs = c.rpc("RESET", {"task": "routing", "region": "fig1", "net": 3, "seed": 0})
        assert obs.type == "OBSERVATION"
        assert len(obs.payload["observation"]["vector"]) == 12
        tr = c.rpc("STEP", {"action": {"d": 4, "s": 1}})
        assert tr.type == "TRANSITION"
        c.close()


class TestServerStreams:
    def test_validator_iterates_list_then_closes(self):
        regions = [
            generate_region(s, GeneratorParams(dim=(4, 4, 1), net_count=2, pins_per_net=(2, 2)))
            for s in (1, 2)
        ]
        server = serve("127.0.0.1", 0, ServerConfig(regions=regions, mode="validator"), 2)
        try:
            c = Client(server.host, server.port)
            c.hello()
            names = []
            for _ in range(2):
                obs = c.rpc("RESET", {"task": "ordering"})
                assert obs.type == "OBSERVATION"
                names.append(obs.payload["region"])
            assert names == ["gen1", "gen2"]
            assert c.rpc("RESET", {"task": "ordering"}).type == "CLOSE"
            c.close()
        finally:
            server.close()

    def test_trainer_clip_partitioning(self):
        region = generate_region(
            3, GeneratorParams(dim=(6, 6, 1), net_count=2, pins_per_net=(1, 1))
        )
        server = serve(
            "127.0.0.1", 0, ServerConfig(regions=[region], mode="validator", clip_size=3), 2
        )
        try:
            c = Client(server.host, server.port)
            c.hello()
            dims = []
            while True:
                obs = c.rpc("RESET", {"task": "ordering"})
                if obs.type == "CLOSE":
                    break
                dims.append(tuple(obs.payload["observation"]["dim"]))
            assert dims == [(3, 3, 1)] * 4
            c.close()
        finally:
            server.close()

    def test_deterministic_response_stream_across_restarts(self):
        script = [
            Message("HELLO", None, {"v": 1}),
            Message("RESET", "s1", {"task": "ordering", "region": "fig1", "seed": 4}),
            Message("STEP", "s1", {"action": 2}),
            Message("STEP", "s1", {"action": 3}),
            Message("METRICS", "s1", {}),
            Message("CLOSE", "s1", {}),
        ]

        def run_script():
            server = serve("127.0.0.1", 0, ServerConfig(regions=[fig1_fixture()]), 2)
            try:
                sock = socket.create_connection((server.host, server.port), timeout=5)
                stream = b""
                for msg in script:
                    sock.sendall(encode(msg))
                    stream += read_frame(sock)
                sock.close()
                return stream
            finally:
                server.close()

        assert run_script() == run_script()

    def test_validator_report_sink_logs_episodes(self, tmp_path):
        from gridroute.protocol import ReportSink

        sink = ReportSink(tmp_path / "episodes.csv")
        server = serve(
            "127.0.0.1",
            0,
            ServerConfig(regions=[fig1_fixture()], mode="validator", report_sink=sink),
            2,
        )
        try:
            c = Client(server.host, server.port)
            c.hello()
            c.rpc("RESET", {"task": "ordering"})
            for action in (3, 4, 1, 2):
                c.rpc("STEP", {"action": action})
            c.rpc("CLOSE")
            c.close()
        finally:
            server.close()
        lines = (tmp_path / "episodes.csv").read_text().strip().splitlines()
        assert lines[0].startswith("session,task,region")
        assert len(lines) == 2
        assert "fig1" in lines[1] and lines[1].endswith(",32")

    def test_thread_count_gates_concurrency(self):
        server = serve("127.0.0.1", 0, ServerConfig(regions=[fig1_fixture()]), thread_count=2)
        try:
            a = Client(server.host, server.port)
            b = Client(server.host, server.port)
            a.hello()
            b.hello()
            # both slots busy: a third connection is accepted but not served
            c = Client(server.host, server.port, timeout=0.5)
            c.sock.sendall(encode(Message("HELLO", None, {"v": 1})))
            with pytest.raises(TimeoutError):
                read_frame(c.sock)
            # freeing a slot lets the queued connection proceed
            a.rpc("CLOSE")
            a.close()
            c.sock.settimeout(5.0)
            reply = decode(read_frame(c.sock))
            assert reply.type == "HELLO"
            b.close()
            c.close()
        finally:
            server.close()
