"""Network-facing broker service: envelope routing over HTTP, callback
push, and durable single-file snapshots of registrations and
subscriptions.

Snapshots are written atomically (temp file, then rename) after every
mutating request, so a restart reproduces the same registries, selection
states and id counters. The topic value cache is deliberately not
persisted; it refills from fresh publications.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.parse
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable

from . import errors, wire
from .broker import ContextBroker, RetryPolicy, Transport
from .model import ContextSample, IndicatorCatalog, RequirementProfile, ServiceOffer

log = logging.getLogger(__name__)


class SnapshotError(RuntimeError):
    """The persistence file exists but cannot be loaded."""


@dataclass(frozen=True)
class ServiceConfig:
    catalog: IndicatorCatalog
    listen: str = "127.0.0.1:0"
    persist_path: str | Path | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    log_level: str = "info"

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"listen address must be host:port, got {self.listen!r}")
        return host, int(port)


def save_snapshot(path: str | Path, state: dict[str, Any]) -> None:
    """Write the state file atomically: temp in the same directory, then rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    temp = target.with_name(target.name + ".tmp")
    temp.write_text(json.dumps(state, sort_keys=True, indent=2), encoding="utf-8")
    temp.replace(target)


def load_snapshot(path: str | Path) -> dict[str, Any] | None:
    """Read a state file; None when absent, SnapshotError when unreadable."""
    target = Path(path)
    if not target.exists():
        return None
    try:
        state = json.loads(target.read_text(encoding="utf-8"))
        for key in ("next_sub", "next_reg", "seq", "registrations", "subscriptions"):
            if key not in state:
                raise KeyError(key)
        return state
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError, TypeError) as exc:
        raise SnapshotError(f"corrupt snapshot file {target}: {exc}") from exc


class BrokerService:
    """Envelope-level request handling plus persistence, independent of HTTP.

    The HTTP frontend adapts paths and verbs onto these methods; tests
    and the crash-restart checks can drive them directly.
    """

    def __init__(
        self,
        config: ServiceConfig,
        transport: Transport | None = None,
        clock: Callable[[], int] | None = None,
    ) -> None:
        self.config = config
        if transport is None:
            transport = wire.HttpTransport(retry=config.retry)
        self.broker = ContextBroker(config.catalog, transport=transport, clock=clock)
        # Serializes snapshot capture+write: concurrent mutations must not
        # interleave through the shared temp file.
        self._persist_lock = threading.Lock()
        if config.persist_path is not None:
            state = load_snapshot(config.persist_path)
            if state is not None:
                self.broker.restore_state(state)

    # -- envelope routing -------------------------------------------------

    def handle_request(self, envelope: Any) -> dict[str, Any]:
        """Route one request envelope; always returns one ack or error
        envelope bearing the request's id."""
        request_id = ""
        if isinstance(envelope, dict):
            request_id = str(envelope.get("request_id") or uuid.uuid4().hex)
        try:
            if not isinstance(envelope, dict):
                raise errors.BadRequest("request envelope must be a JSON object")
            kind = envelope.get("kind")
            body = envelope.get("body")
            if not isinstance(body, dict):
                raise errors.BadRequest("envelope body must be a JSON object")
            if kind == "subscribe":
                return wire.ack(request_id, self._subscribe(body))
            if kind == "register":
                return wire.ack(request_id, self._register(body))
            if kind == "notify":
                return wire.ack(request_id, self._notify(body))
            if kind == "pull-current":
                return wire.ack(request_id, self._pull(body, current=True))
            if kind == "pull-last":
                return wire.ack(request_id, self._pull(body, current=False))
            raise errors.BadRequest(f"unsupported envelope kind {kind!r}")
        except errors.BrokerError as exc:
            return wire.error_envelope(request_id, exc)

    def _subscribe(self, body: dict[str, Any]) -> dict[str, Any]:
        try:
            profile = RequirementProfile.from_dict(body["profile"])
            consumer_id = body["consumer_id"]
            callback_address = body["callback_address"]
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.BadRequest(f"malformed subscribe body: {exc}") from exc
        subscription_id = self.broker.subscribe(consumer_id, profile, callback_address)
        self._persist()
        return {"subscription_id": subscription_id}

    def _register(self, body: dict[str, Any]) -> dict[str, Any]:
        try:
            offer = ServiceOffer.from_dict(body["offer"])
            service_address = body["service_address"]
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.BadRequest(f"malformed register body: {exc}") from exc
        registration_id = self.broker.register_context_service(offer, service_address)
        self._persist()
        return {"registration_id": registration_id}

    def _notify(self, body: dict[str, Any]) -> dict[str, Any]:
        try:
            service_id = body["service_id"]
            sample = ContextSample.from_dict(body["sample"])
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.BadRequest(f"malformed notify body: {exc}") from exc
        self.broker.notify_context_change(service_id, sample)
        return {}

    def _pull(self, body: dict[str, Any], current: bool) -> dict[str, Any]:
        try:
            subscription_id = body["subscription_id"]
            topic = body["topic"]
        except KeyError as exc:
            raise errors.BadRequest(f"malformed pull body: missing {exc}") from exc
        if current:
            sample = self.broker.get_current_topic_value(subscription_id, topic)
        else:
            sample = self.broker.get_last_topic_value(subscription_id, topic)
        return {"sample": sample.to_dict()}

    # -- non-envelope operations (DELETE / GET endpoints) ------------------

    def unsubscribe(self, subscription_id: str, request_id: str | None = None) -> dict[str, Any]:
        rid = request_id or uuid.uuid4().hex
        try:
            self.broker.unsubscribe(subscription_id)
            self._persist()
            return wire.ack(rid)
        except errors.BrokerError as exc:
            return wire.error_envelope(rid, exc)

    def deregister(self, registration_id: str, request_id: str | None = None) -> dict[str, Any]:
        rid = request_id or uuid.uuid4().hex
        try:
            self.broker.deregister_context_service(registration_id)
            self._persist()
            return wire.ack(rid)
        except errors.BrokerError as exc:
            return wire.error_envelope(rid, exc)

    def find_services(self, topic: str, request_id: str | None = None) -> dict[str, Any]:
        rid = request_id or uuid.uuid4().hex
        return wire.ack(rid, {"service_ids": self.broker.find_context_services(topic)})

    def find_consumers(self, topic: str, request_id: str | None = None) -> dict[str, Any]:
        rid = request_id or uuid.uuid4().hex
        return wire.ack(rid, {"subscription_ids": self.broker.find_context_consumers(topic)})

    def decision(self, subscription_id: str, request_id: str | None = None) -> dict[str, Any]:
        rid = request_id or uuid.uuid4().hex
        try:
            decision = self.broker.get_decision(subscription_id)
            return wire.ack(rid, {"decision": decision.to_dict()})
        except errors.BrokerError as exc:
            return wire.error_envelope(rid, exc)

    def drain(self, request_id: str | None = None) -> dict[str, Any]:
        self.broker.drain()
        return wire.ack(request_id or uuid.uuid4().hex)

    def close(self) -> None:
        self.broker.close()

    def _persist(self) -> None:
        if self.config.persist_path is not None:
            with self._persist_lock:
                save_snapshot(self.config.persist_path, self.broker.snapshot_state())


_ROUTES: list[tuple[str, re.Pattern[str], str]] = [
    ("POST", re.compile(r"^/subscriptions$"), "subscribe"),
    ("POST", re.compile(r"^/registrations$"), "register"),
    ("POST", re.compile(r"^/notify$"), "notify"),
    ("POST", re.compile(r"^/debug/drain$"), "drain"),
    ("DELETE", re.compile(r"^/subscriptions/(?P<sub>[^/]+)$"), "unsubscribe"),
    ("DELETE", re.compile(r"^/registrations/(?P<reg>[^/]+)$"), "deregister"),
    ("GET", re.compile(r"^/subscriptions/(?P<sub>[^/]+)/topics/(?P<topic>[^/]+)/current$"), "pull-current"),
    ("GET", re.compile(r"^/subscriptions/(?P<sub>[^/]+)/topics/(?P<topic>[^/]+)/last$"), "pull-last"),
    ("GET", re.compile(r"^/subscriptions/(?P<sub>[^/]+)/decision$"), "decision"),
    ("GET", re.compile(r"^/topics/(?P<topic>[^/]+)/services$"), "find-services"),
    ("GET", re.compile(r"^/topics/(?P<topic>[^/]+)/consumers$"), "find-consumers"),
]

_ENVELOPE_KIND_FOR_PATH = {"subscribe": "subscribe", "register": "register", "notify": "notify"}


class _Handler(BaseHTTPRequestHandler):
    service: BrokerService  # injected by serve()

    protocol_version = "HTTP/1.1"

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_DELETE(self) -> None:
        self._dispatch("DELETE")

    def _dispatch(self, method: str) -> None:
        parsed = urllib.parse.urlparse(self.path)
        route = None
        groups: dict[str, str] = {}
        for verb, pattern, name in _ROUTES:
            match = pattern.match(parsed.path)
            if match and verb == method:
                route, groups = name, {
                    k: urllib.parse.unquote(v) for k, v in match.groupdict().items()
                }
                break
        if route is None:
            self._send(404, wire.error_envelope(
                self._request_id(parsed), errors.NotFound(f"no route for {method} {parsed.path}")))
            return
        try:
            response = self._invoke(route, groups, parsed)
        except errors.BrokerError as exc:
            response = wire.error_envelope(self._request_id(parsed), exc)
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("unhandled error on %s %s", method, parsed.path)
            response = wire.error_envelope(
                self._request_id(parsed), errors.BadRequest(f"internal error: {exc}"))
        status = 200
        if response.get("kind") == "error":
            status = wire.http_status_for(response["body"].get("code", ""))
        self._send(status, response)

    def _invoke(self, route: str, groups: dict[str, str], parsed) -> dict[str, Any]:
        service = self.service
        if route in ("subscribe", "register", "notify"):
            envelope = self._read_envelope()
            expected = _ENVELOPE_KIND_FOR_PATH[route]
            if isinstance(envelope, dict) and envelope.get("kind") != expected:
                return wire.error_envelope(
                    str(envelope.get("request_id") or ""),
                    errors.BadRequest(
                        f"endpoint expects kind {expected!r}, got {envelope.get('kind')!r}"
                    ),
                )
            return service.handle_request(envelope)
        request_id = self._request_id(parsed)
        if route == "drain":
            return service.drain(request_id)
        if route == "unsubscribe":
            return service.unsubscribe(groups["sub"], request_id)
        if route == "deregister":
            return service.deregister(groups["reg"], request_id)
        if route == "pull-current":
            return service.handle_request(wire.make_envelope(
                "pull-current", {"subscription_id": groups["sub"], "topic": groups["topic"]},
                request_id))
        if route == "pull-last":
            return service.handle_request(wire.make_envelope(
                "pull-last", {"subscription_id": groups["sub"], "topic": groups["topic"]},
                request_id))
        if route == "decision":
            return service.decision(groups["sub"], request_id)
        if route == "find-services":
            return service.find_services(groups["topic"], request_id)
        if route == "find-consumers":
            return service.find_consumers(groups["topic"], request_id)
        raise errors.NotFound(f"no handler for route {route!r}")

    def _read_envelope(self) -> Any:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None
        try:
            return json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None

    def _request_id(self, parsed) -> str:
        header = self.headers.get("X-Request-Id")
        if header:
            return header
        query = urllib.parse.parse_qs(parsed.query).get("request_id")
        if query:
            return query[0]
        return uuid.uuid4().hex

    def _send(self, status: int, payload: dict[str, Any]) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args: Any) -> None:
        log.debug("%s - %s", self.address_string(), format % args)


@dataclass
class ServiceHandle:
    """A running broker service; stop() shuts down the listener and broker."""

    service: BrokerService
    server: ThreadingHTTPServer
    thread: threading.Thread
    host: str
    port: int

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5.0)
        self.service.close()

    def __enter__(self) -> "ServiceHandle":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.stop()


def serve(
    config: ServiceConfig,
    transport: Transport | None = None,
    clock: Callable[[], int] | None = None,
) -> ServiceHandle:
    """Start the broker service on the configured address.

    State is restored from the persistence file when one exists; a
    corrupt file refuses startup with a SnapshotError naming it. A busy
    port raises OSError.
    """
    logging.getLogger("ctxbroker").setLevel(
        getattr(logging, config.log_level.upper(), logging.INFO)
    )
    service = BrokerService(config, transport=transport, clock=clock)
    host, port = config.host_port()
    handler = type("BoundHandler", (_Handler,), {"service": service})
    try:
        server = ThreadingHTTPServer((host, port), handler)
    except OSError:
        service.close()
        raise
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name="ctxbroker-http", daemon=True)
    thread.start()
    bound_host, bound_port = server.server_address[:2]
    return ServiceHandle(
        service=service, server=server, thread=thread,
        host=str(bound_host), port=int(bound_port),
    )
