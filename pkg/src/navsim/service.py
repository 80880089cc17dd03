"""Session server: drive episodes over a wire protocol, record human baselines.

Framing
-------
Every message is a JSON envelope (UTF-8, no embedded newlines) optionally
followed by ``\\n`` and a binary blob whose length the envelope announces
as ``blob_len``. Over raw TCP each message travels in a frame prefixed by
a 4-byte big-endian payload length; over WebSocket each message is one
binary frame (the socket's own framing replaces the length prefix). The
protocol above the framing is identical, so a browser client and a raw
socket client see the same conversation.

Client -> server: hello, reset(episode), action(name), observe,
save_baseline. Server -> client: welcome, state, depth_frame, map_tile,
baseline_saved, error(code, text). Every action yields exactly one state
message (followed by one depth_frame and one map_tile push); per-session
handling is strictly FIFO.

Recorded baselines land in a JSON store next to the scenario file; a new
save for the same path overwrites the active record and archives the old
one.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import socketserver
import struct
import threading
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .config import ResolvedConfig, episode_rng
from .episode import EpisodeSession
from .sensors import DepthImage
from .world import Action, HumanBaseline, NoiseConfig, Scenario

MAX_SESSIONS = 8
ACTION_RATE_LIMIT = 20.0  # actions per second per session
DEPTH_STREAM_MAX = (48, 64)  # rows, cols
MAP_TILE_SIDE = 200  # cells; 10 m viewport at 5 cm

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


# ---------------------------------------------------------------------------
# message codec (transport-agnostic payload)

def encode_message(envelope: dict[str, Any], blob: bytes = b"") -> bytes:
    if blob:
        envelope = dict(envelope)
        envelope["blob_len"] = len(blob)
    head = json.dumps(envelope, separators=(",", ":")).encode("utf-8")
    return head + (b"\n" + blob if blob else b"")


def decode_message(payload: bytes) -> tuple[dict[str, Any], bytes]:
    idx = payload.find(b"\n")
    if idx < 0:
        return json.loads(payload.decode("utf-8")), b""
    envelope = json.loads(payload[:idx].decode("utf-8"))
    blob = payload[idx + 1 :]
    if len(blob) != envelope.get("blob_len", len(blob)):
        raise ValueError("blob length does not match envelope")
    return envelope, blob


def frame_send(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def frame_recv(sock: socket.socket) -> Optional[bytes]:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    return _recv_exact(sock, length)


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        part = sock.recv(n - len(chunks))
        if not part:
            return None
        chunks += part
    return chunks


# ---------------------------------------------------------------------------
# baseline store

class BaselineStore:
    """JSON file of per-path human baselines, adjacent to the scenario."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    @staticmethod
    def for_scenario(scenario_path: str | Path) -> "BaselineStore":
        p = Path(scenario_path)
        return BaselineStore(p.with_name(p.stem + ".baselines.json"))

    def _read(self) -> dict[str, Any]:
        if not self.path.exists():
            return {"baselines": {}, "archive": []}
        with open(self.path) as fh:
            return json.load(fh)

    def save(self, path_id: str, record: dict[str, Any]) -> None:
        with self._lock:
            data = self._read()
            old = data["baselines"].get(path_id)
            if old is not None:
                data["archive"].append({"path": path_id, **old})
            data["baselines"][path_id] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w") as fh:
                json.dump(data, fh, indent=2)
                fh.write("\n")

    def load_all(self) -> dict[str, HumanBaseline]:
        data = self._read()
        out = {}
        for path_id, rec in data["baselines"].items():
            out[path_id] = HumanBaseline(
                length_m=float(rec["length_m"]),
                time_s=float(rec["time_s"]),
                steps=int(rec["steps"]),
            )
        return out


# ---------------------------------------------------------------------------
# session logic (transport-independent)

class ServiceCore:
    """Shared scenario plus the session registry and command handling."""

    def __init__(
        self,
        scenario: Scenario,
        config: ResolvedConfig,
        noise: Optional[NoiseConfig] = None,
        baseline_store: Optional[BaselineStore] = None,
        max_sessions: int = MAX_SESSIONS,
    ):
        self.scenario = scenario
        self.config = config
        self.noise = noise
        self.store = baseline_store
        self.max_sessions = max_sessions
        self._lock = threading.Lock()
        self._sessions: dict[str, "TeleopSession"] = {}
        self._counter = 0

    def open_session(self, mode: str) -> "TeleopSession":
        with self._lock:
            if len(self._sessions) >= self.max_sessions:
                raise ServiceError("too_many_sessions", "session cap reached")
            self._counter += 1
            token = hashlib.sha1(
                f"{id(self)}:{self._counter}:{time.time_ns()}".encode()
            ).hexdigest()[:12]
            session = TeleopSession(token, mode, self)
            self._sessions[token] = session
            return session

    def close_session(self, token: str) -> None:
        with self._lock:
            self._sessions.pop(token, None)


class ServiceError(Exception):
    def __init__(self, code: str, text: str):
        super().__init__(text)
        self.code = code
        self.text = text


class TeleopSession:
    """One driver's episode: applies actions and serializes observations."""

    def __init__(self, token: str, mode: str, core: ServiceCore):
        self.token = token
        self.mode = mode
        self.core = core
        self.episode: Optional[EpisodeSession] = None
        self.episode_id: Optional[str] = None
        self.trial = 0
        self.started_at: Optional[float] = None
        self.finished_at: Optional[float] = None
        self._last_action_time = 0.0

    # -- commands ------------------------------------------------------
    def reset(self, episode_id: str, trial: int = 0, seed: Optional[int] = None) -> None:
        spec = self.core.scenario.episode(episode_id)
        cfg = self.core.config
        use_seed = cfg.seed if seed is None else seed
        rng = episode_rng(use_seed, episode_id, trial)
        self.episode = EpisodeSession(
            self.core.scenario, spec, cfg, rng, noise=self.core.noise
        )
        self.episode_id = episode_id
        self.trial = trial
        self.started_at = time.monotonic()
        self.finished_at = None

    def throttle(self) -> None:
        now = time.monotonic()
        min_gap = 1.0 / ACTION_RATE_LIMIT
        wait = self._last_action_time + min_gap - now
        if wait > 0:
            time.sleep(wait)
        self._last_action_time = time.monotonic()

    def apply_action(self, name: str) -> dict[str, Any]:
        if self.episode is None:
            raise ServiceError("no_episode", "reset an episode first")
        if self.episode.done:
            raise ServiceError("episode_over", "the episode has already finished")
        try:
            action = Action(name)
        except ValueError:
            raise ServiceError("bad_action", f"unknown action {name!r}") from None
        self.throttle()
        self.episode.apply(action)
        if self.episode.done:
            self.finished_at = time.monotonic()
        return self.state_message()

    def state_message(self) -> dict[str, Any]:
        ep = self.episode
        if ep is None:
            raise ServiceError("no_episode", "reset an episode first")
        rec = ep.records[-1] if ep.records else None
        return {
            "type": "state",
            "session": self.token,
            "episode": self.episode_id,
            "pose_belief": [ep.pose_belief.x, ep.pose_belief.y, ep.pose_belief.theta],
            "goal_rel_remaining": list(ep.goal_rel_remaining()),
            "goal_distance": ep.belief_goal_distance(),
            "step_count": ep.steps,
            "bump": bool(rec.bump) if rec else False,
            "done": ep.done,
            "success": ep.success,
        }

    def elapsed_s(self) -> float:
        if self.started_at is None:
            return 0.0
        end = self.finished_at if self.finished_at is not None else time.monotonic()
        return end - self.started_at

    def save_baseline(self) -> dict[str, Any]:
        ep = self.episode
        if ep is None or not ep.done:
            raise ServiceError("baseline_requires_success", "finish the episode first")
        if not ep.success:
            raise ServiceError(
                "baseline_requires_success", "only successful runs may become baselines"
            )
        record = {
            "steps": ep.steps,
            "time_s": round(ep.steps * self.core.config.step_duration_s, 6),
            "length_m": round(ep.path_length_true, 6),
            "teleop_elapsed_s": round(self.elapsed_s(), 3),
        }
        if self.core.store is None:
            raise ServiceError("no_store", "server has no baseline store")
        self.core.store.save(self.episode_id or "?", record)
        return {"type": "baseline_saved", "path": self.episode_id, "record": record}

    # -- observation stream ---------------------------------------------
    def observation_messages(self) -> list[tuple[dict[str, Any], bytes]]:
        ep = self.episode
        if ep is None:
            raise ServiceError("no_episode", "reset an episode first")
        out: list[tuple[dict[str, Any], bytes]] = []

        img = ep.last_depth
        if img is not None:
            h, w = img.shape
            factor = max(1, -(-h // DEPTH_STREAM_MAX[0]), -(-w // DEPTH_STREAM_MAX[1]))
            small = DepthImage(img.values[::factor, ::factor].copy(), img.valid[::factor, ::factor].copy())
            sh, sw = small.shape
            out.append(
                (
                    {
                        "type": "depth_frame",
                        "rows": sh,
                        "cols": sw,
                        "depth_max": ep.camera.depth_max,
                    },
                    small.to_bytes(),
                )
            )

        gm = ep.global_map
        half = MAP_TILE_SIDE // 2
        ar, ac = gm.cell_of(ep.pose_belief.x, ep.pose_belief.y)
        r0, c0 = ar - half, ac - half
        occ = np.zeros((MAP_TILE_SIDE, MAP_TILE_SIDE), dtype=np.float32)
        exp = np.zeros((MAP_TILE_SIDE, MAP_TILE_SIDE), dtype=np.float32)
        vis = np.zeros((MAP_TILE_SIDE, MAP_TILE_SIDE), dtype=np.uint8)
        sr0, sc0 = max(r0, 0), max(c0, 0)
        sr1, sc1 = min(r0 + MAP_TILE_SIDE, gm.side), min(c0 + MAP_TILE_SIDE, gm.side)
        if sr1 > sr0 and sc1 > sc0:
            dr0, dc0 = sr0 - r0, sc0 - c0
            occ[dr0 : dr0 + sr1 - sr0, dc0 : dc0 + sc1 - sc0] = gm.cells[0, sr0:sr1, sc0:sc1]
            exp[dr0 : dr0 + sr1 - sr0, dc0 : dc0 + sc1 - sc0] = gm.cells[1, sr0:sr1, sc0:sc1]
            vis[dr0 : dr0 + sr1 - sr0, dc0 : dc0 + sc1 - sc0] = gm.visited[
                sr0:sr1, sc0:sc1
            ].astype(np.uint8)
        goal = gm.cell_of(*ep.goal_episode)
        blob = occ.tobytes() + exp.tobytes() + vis.tobytes()
        out.append(
            (
                {
                    "type": "map_tile",
                    "rows": MAP_TILE_SIDE,
                    "cols": MAP_TILE_SIDE,
                    "resolution": gm.resolution,
                    "agent": [ar - r0, ac - c0],
                    "agent_theta": ep.pose_belief.theta,
                    "goal": [goal[0] - r0, goal[1] - c0],
                },
                blob,
            )
        )
        return out


# ---------------------------------------------------------------------------
# request dispatch

def handle_envelope(
    core: ServiceCore, session_box: dict[str, Optional[TeleopSession]], envelope: dict[str, Any]
) -> list[tuple[dict[str, Any], bytes]]:
    """Process one client message; returns the ordered reply messages."""
    kind = envelope.get("type")
    session = session_box.get("session")
    try:
        if kind == "hello":
            if session is None:
                session = core.open_session(str(envelope.get("mode", "teleop")))
                session_box["session"] = session
            return [
                (
                    {
                        "type": "welcome",
                        "session": session.token,
                        "scenario": core.scenario.name,
                        "episodes": [e.id for e in core.scenario.episodes],
                        "goal_threshold": core.config.planner.goal_threshold,
                    },
                    b"",
                )
            ]
        if session is None:
            raise ServiceError("no_session", "say hello first")
        if kind == "reset":
            session.reset(
                str(envelope["episode"]),
                trial=int(envelope.get("trial", 0)),
                seed=envelope.get("seed"),
            )
            return [(session.state_message(), b"")] + session.observation_messages()
        if kind == "action":
            state = session.apply_action(str(envelope.get("name")))
            return [(state, b"")] + session.observation_messages()
        if kind == "observe":
            return session.observation_messages()
        if kind == "save_baseline":
            return [(session.save_baseline(), b"")]
        raise ServiceError("bad_request", f"unknown message type {kind!r}")
    except ServiceError as exc:
        return [({"type": "error", "code": exc.code, "text": exc.text}, b"")]


# ---------------------------------------------------------------------------
# transports

class _Handler(socketserver.BaseRequestHandler):
    """Per-connection handler: sniffs raw-frame vs HTTP/WebSocket clients."""

    server: "NavServer"

    def handle(self) -> None:
        sock: socket.socket = self.request
        core = self.server.core
        session_box: dict[str, Optional[TeleopSession]] = {"session": None}
        try:
            first = sock.recv(4, socket.MSG_PEEK)
            if not first:
                return
            if first.startswith(b"GET ") or first.startswith(b"POST"):
                self._handle_http(sock, core, session_box)
            else:
                self._handle_raw(sock, core, session_box)
        except (ConnectionError, OSError):
            pass
        finally:
            session = session_box.get("session")
            if session is not None:
                core.close_session(session.token)

    # raw TCP: length-prefixed frames
    def _handle_raw(self, sock, core, session_box) -> None:
        while True:
            payload = frame_recv(sock)
            if payload is None:
                return
            envelope, _ = decode_message(payload)
            for env, blob in handle_envelope(core, session_box, envelope):
                frame_send(sock, encode_message(env, blob))

    # HTTP: static files for the console, or an upgrade to WebSocket
    def _handle_http(self, sock, core, session_box) -> None:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                return
            data += chunk
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head.split("\r\n")
        method, target = lines[0].split(" ")[0], lines[0].split(" ")[1]
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()

        if headers.get("upgrade", "").lower() == "websocket":
            self._websocket_loop(sock, headers, core, session_box)
            return
        if method != "GET":
            sock.sendall(b"HTTP/1.1 405 Method Not Allowed\r\nContent-Length: 0\r\n\r\n")
            return
        self._serve_static(sock, target)

    def _serve_static(self, sock, target: str) -> None:
        ui_dir = self.server.ui_dir
        body, ctype, status = b"not found", "text/plain", "404 Not Found"
        if ui_dir is not None:
            rel = target.split("?")[0].lstrip("/") or "index.html"
            path = (ui_dir / rel).resolve()
            if str(path).startswith(str(ui_dir.resolve())) and path.is_file():
                body = path.read_bytes()
                status = "200 OK"
                ctype = {
                    ".html": "text/html; charset=utf-8",
                    ".js": "text/javascript; charset=utf-8",
                    ".css": "text/css; charset=utf-8",
                    ".map": "application/json",
                    ".png": "image/png",
                }.get(path.suffix, "application/octet-stream")
        resp = (
            f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n"
        ).encode("latin-1") + body
        sock.sendall(resp)

    # minimal RFC 6455 server side: no extensions, binary frames
    def _websocket_loop(self, sock, headers, core, session_box) -> None:
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
        ).decode("ascii")
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode("latin-1")
        )
        while True:
            msg = _ws_recv(sock)
            if msg is None:
                return
            opcode, payload = msg
            if opcode == 8:  # close
                _ws_send(sock, 8, b"")
                return
            if opcode == 9:  # ping
                _ws_send(sock, 10, payload)
                continue
            if opcode not in (1, 2):
                continue
            envelope, _ = decode_message(payload)
            for env, blob in handle_envelope(core, session_box, envelope):
                _ws_send(sock, 2, encode_message(env, blob))


def _ws_recv(sock) -> Optional[tuple[int, bytes]]:
    head = _recv_exact(sock, 2)
    if head is None:
        return None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        ext = _recv_exact(sock, 2)
        if ext is None:
            return None
        (length,) = struct.unpack(">H", ext)
    elif length == 127:
        ext = _recv_exact(sock, 8)
        if ext is None:
            return None
        (length,) = struct.unpack(">Q", ext)
    mask = b"\x00" * 4
    if masked:
        mask = _recv_exact(sock, 4)
        if mask is None:
            return None
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def _ws_send(sock, opcode: int, payload: bytes) -> None:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    sock.sendall(head + payload)


class NavServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        core: ServiceCore,
        ui_dir: str | Path | None = None,
    ):
        super().__init__(address, _Handler)
        self.core = core
        self.ui_dir = Path(ui_dir) if ui_dir else None


def serve(
    scenario: Scenario,
    config: ResolvedConfig,
    port: int,
    noise: Optional[NoiseConfig] = None,
    baseline_store: Optional[BaselineStore] = None,
    ui_dir: str | Path | None = None,
    host: str = "127.0.0.1",
) -> NavServer:
    """Create (but do not run) the server; call serve_forever() to block."""
    core = ServiceCore(scenario, config, noise=noise, baseline_store=baseline_store)
    return NavServer((host, port), core, ui_dir=ui_dir)
