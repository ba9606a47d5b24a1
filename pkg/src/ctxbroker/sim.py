"""Deterministic scenario runner standing in for real sensors and apps.

A scenario scripts simulated context services (with declared quality
offers), consumers (with requirement profiles) and a timeline of
register/subscribe/publish/pull events against a virtual clock. The same
scenario can run against an in-process broker or against a spawned
broker service over loopback HTTP; both produce the same run report.

Simulated services embed their aggregator: a publish event sets the
service's current topic value and immediately notifies the broker.
Quality levels come from the declared offers only, never from payloads.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from . import errors, wire
from .broker import ContextBroker, DeliveryStatus, RetryPolicy
from .model import ContextSample, IndicatorCatalog, RequirementProfile, ServiceOffer
from .service import ServiceConfig, serve

log = logging.getLogger(__name__)

ACTIONS = ("register", "deregister", "subscribe", "unsubscribe", "publish", "pull")


class ScenarioError(ValueError):
    """A scenario file or structure violates the scenario invariants."""


@dataclass(frozen=True)
class ScenarioEvent:
    at: int
    action: str
    service_id: str | None = None
    consumer_id: str | None = None
    topic: str | None = None
    payload: Any = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"at": self.at, "action": self.action}
        if self.service_id is not None:
            data["service_id"] = self.service_id
        if self.consumer_id is not None:
            data["consumer_id"] = self.consumer_id
        if self.topic is not None:
            data["topic"] = self.topic
        if self.payload is not None:
            data["payload"] = self.payload
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioEvent":
        return cls(
            at=int(data["at"]),
            action=data["action"],
            service_id=data.get("service_id"),
            consumer_id=data.get("consumer_id"),
            topic=data.get("topic"),
            payload=data.get("payload"),
        )


@dataclass(frozen=True)
class Scenario:
    seed: int
    catalog: IndicatorCatalog
    clouds: tuple[tuple[str, tuple[ServiceOffer, ...]], ...]
    consumers: tuple[tuple[str, RequirementProfile], ...]
    timeline: tuple[ScenarioEvent, ...]

    def offers_by_service(self) -> dict[str, ServiceOffer]:
        return {o.service_id: o for _, cloud_offers in self.clouds for o in cloud_offers}

    def profiles_by_consumer(self) -> dict[str, RequirementProfile]:
        return dict(self.consumers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "catalog": self.catalog.to_dict(),
            "clouds": [
                {"cloud_id": cid, "services": [o.to_dict() for o in cloud_offers]}
                for cid, cloud_offers in self.clouds
            ],
            "consumers": [
                {"consumer_id": cid, "profile": profile.to_dict()}
                for cid, profile in self.consumers
            ],
            "timeline": [event.to_dict() for event in self.timeline],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        return cls(
            seed=int(data.get("seed", 0)),
            catalog=IndicatorCatalog.from_dict(data["catalog"]),
            clouds=tuple(
                (cloud["cloud_id"], tuple(ServiceOffer.from_dict(o) for o in cloud["services"]))
                for cloud in data["clouds"]
            ),
            consumers=tuple(
                (entry["consumer_id"], RequirementProfile.from_dict(entry["profile"]))
                for entry in data["consumers"]
            ),
            timeline=tuple(ScenarioEvent.from_dict(e) for e in data["timeline"]),
        )


def validate_scenario(scenario: Scenario) -> None:
    """Raise ScenarioError naming the first violated scenario invariant."""
    from .model import validate_offer, validate_profile

    offers = {}
    for cloud_id, cloud_offers in scenario.clouds:
        for offer in cloud_offers:
            if offer.service_id in offers:
                raise ScenarioError(f"duplicate service {offer.service_id!r} across clouds")
            if offer.cloud_id != cloud_id:
                raise ScenarioError(
                    f"offer {offer.service_id!r} declares cloud {offer.cloud_id!r} "
                    f"inside cloud {cloud_id!r}"
                )
            result = validate_offer(offer, scenario.catalog)
            if not result:
                raise ScenarioError(f"offer {offer.service_id!r}: {result.reason}")
            offers[offer.service_id] = offer
    profiles = {}
    for consumer_id, profile in scenario.consumers:
        if consumer_id in profiles:
            raise ScenarioError(f"duplicate consumer {consumer_id!r}")
        result = validate_profile(profile, scenario.catalog)
        if not result:
            raise ScenarioError(f"profile of {consumer_id!r}: {result.reason}")
        profiles[consumer_id] = profile

    registered: set[str] = set()
    subscribed: set[str] = set()
    last_at = None
    for index, event in enumerate(scenario.timeline):
        where = f"timeline[{index}]"
        if last_at is not None and event.at < last_at:
            raise ScenarioError(f"{where}: at {event.at} is earlier than previous {last_at}")
        last_at = event.at
        if event.action not in ACTIONS:
            raise ScenarioError(f"{where}: unknown action {event.action!r}")
        if event.action in ("register", "deregister", "publish"):
            offer = offers.get(event.service_id or "")
            if offer is None:
                raise ScenarioError(f"{where}: unknown service {event.service_id!r}")
            if event.action == "register":
                if event.service_id in registered:
                    raise ScenarioError(f"{where}: service {event.service_id!r} already registered")
                registered.add(event.service_id)  # type: ignore[arg-type]
            elif event.action == "deregister":
                if event.service_id not in registered:
                    raise ScenarioError(f"{where}: service {event.service_id!r} not registered")
                registered.discard(event.service_id)  # type: ignore[arg-type]
            else:
                if event.service_id not in registered:
                    raise ScenarioError(f"{where}: publish from unregistered {event.service_id!r}")
                if event.topic not in offer.qoc_offer:
                    raise ScenarioError(
                        f"{where}: service {event.service_id!r} does not offer {event.topic!r}"
                    )
        else:
            profile = profiles.get(event.consumer_id or "")
            if profile is None:
                raise ScenarioError(f"{where}: unknown consumer {event.consumer_id!r}")
            if event.action == "subscribe":
                if event.consumer_id in subscribed:
                    raise ScenarioError(f"{where}: consumer {event.consumer_id!r} already subscribed")
                subscribed.add(event.consumer_id)  # type: ignore[arg-type]
            elif event.action == "unsubscribe":
                if event.consumer_id not in subscribed:
                    raise ScenarioError(f"{where}: consumer {event.consumer_id!r} not subscribed")
                subscribed.discard(event.consumer_id)  # type: ignore[arg-type]
            else:
                if event.consumer_id not in subscribed:
                    raise ScenarioError(f"{where}: pull from unsubscribed {event.consumer_id!r}")
                if event.topic not in profile.topics:
                    raise ScenarioError(
                        f"{where}: consumer {event.consumer_id!r} did not subscribe to {event.topic!r}"
                    )


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        scenario = Scenario.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: malformed scenario: {exc!r}") from exc
    validate_scenario(scenario)
    return scenario


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario.to_dict(), sort_keys=True, indent=2), encoding="utf-8"
    )


# -- run report ------------------------------------------------------------


@dataclass
class RunReport:
    """Exact, reproducible counts from one scenario run.

    ``meta`` carries mode and wall-clock details and is excluded from
    equality, so reports from different modes compare on substance only.
    """

    consumers: dict[str, Any]
    services: dict[str, Any]
    totals: dict[str, Any]
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "consumers": self.consumers,
            "services": self.services,
            "totals": self.totals,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunReport":
        return cls(
            consumers=data["consumers"],
            services=data["services"],
            totals=data["totals"],
            meta=data.get("meta", {}),
        )


def emit_report(report: RunReport, format: str = "table") -> str:
    """Render a report as an aligned table or as JSON that round-trips."""
    if format in ("machine-readable", "json"):
        return json.dumps(report.to_dict(), sort_keys=True, indent=2)
    if format != "table":
        raise ValueError(f"unknown report format {format!r}")
    lines = []
    consumer_rows = [("consumer", "topic", "selected", "switches", "notifications", "advisories")]
    for consumer_id in sorted(report.consumers):
        entry = report.consumers[consumer_id]
        for topic in sorted(entry["topics"]):
            t = entry["topics"][topic]
            history = t["selected_history"]
            consumer_rows.append(
                (
                    consumer_id,
                    topic,
                    str(history[-1]) if history else "-",
                    str(max(0, len(history) - 1)),
                    str(t["notifications"]),
                    str(t["advisories"]),
                )
            )
    lines.extend(_tabulate(consumer_rows))
    lines.append("")
    service_rows = [("service", "publications", "pulls")]
    for service_id in sorted(report.services):
        s = report.services[service_id]
        service_rows.append((service_id, str(s["publications"]), str(s["pulls"])))
    lines.extend(_tabulate(service_rows))
    lines.append("")
    totals = report.totals
    lines.append(
        "totals: selection_switches=%d notifications=%d advisories=%d pulls_ok=%d"
        % (
            totals["selection_switches"],
            totals["notifications"],
            totals["advisories"],
            totals["pulls_ok"],
        )
    )
    if totals["pull_errors"]:
        errors_part = " ".join(
            f"{code}={count}" for code, count in sorted(totals["pull_errors"].items())
        )
        lines.append("pull errors: " + errors_part)
    return "\n".join(lines)


def parse_report(text: str) -> RunReport:
    """Inverse of the machine-readable emit format."""
    return RunReport.from_dict(json.loads(text))


def _tabulate(rows: list[tuple[str, ...]]) -> list[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    out = []
    for index, row in enumerate(rows):
        out.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if index == 0:
            out.append("  ".join("-" * width for width in widths))
    return out


# -- simulated endpoints -----------------------------------------------------


class _SimConsumer:
    """Records pushed envelopes in arrival order."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._messages: list[dict[str, Any]] = []

    def receive(self, message: dict[str, Any]) -> None:
        with self._lock:
            self._messages.append(message)

    def messages(self) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._messages)


class _SimService:
    """Holds the service's current per-topic value; counts pulls served."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._values: dict[str, dict[str, Any]] = {}
        self.pulls = 0

    def set_value(self, sample: dict[str, Any]) -> None:
        with self._lock:
            self._values[sample["topic"]] = sample

    def pull(self, topic: str) -> dict[str, Any] | None:
        with self._lock:
            sample = self._values.get(topic)
            if sample is not None:
                self.pulls += 1
            return sample


class LocalTransport:
    """In-process transport: direct calls on simulated endpoints."""

    def __init__(self) -> None:
        self.consumers: dict[str, _SimConsumer] = {}
        self.services: dict[str, _SimService] = {}

    def push(self, callback_address: str, message: dict[str, Any]) -> DeliveryStatus:
        consumer = self.consumers.get(callback_address)
        if consumer is None:
            return DeliveryStatus(delivered=False, attempts=1)
        consumer.receive(message)
        return DeliveryStatus(delivered=True, attempts=1)

    def pull(self, service_address: str, topic: str) -> dict[str, Any]:
        service = self.services.get(service_address)
        sample = service.pull(topic) if service is not None else None
        if sample is None:
            raise errors.UpstreamUnavailable(
                f"service at {service_address!r} has no value for {topic!r}"
            )
        return sample


class _SimEndpointsHandler(BaseHTTPRequestHandler):
    hub: "_SimEndpoints"

    protocol_version = "HTTP/1.1"

    def do_POST(self) -> None:
        path = urllib.parse.unquote(self.path)
        parts = [p for p in path.split("/") if p]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        if len(parts) == 2 and parts[0] == "consumers":
            consumer = self.hub.consumers.get(parts[1])
            if consumer is not None:
                consumer.receive(json.loads(raw.decode("utf-8")))
                self._send(200, {"ok": True})
                return
        self._send(404, {"ok": False})

    def do_GET(self) -> None:
        path = urllib.parse.unquote(self.path)
        parts = [p for p in path.split("/") if p]
        if len(parts) == 4 and parts[0] == "services" and parts[2] == "topics":
            service = self.hub.services.get(parts[1])
            sample = service.pull(parts[3]) if service is not None else None
            if sample is not None:
                self._send(200, sample)
                return
        self._send(404, {})

    def _send(self, status: int, payload: dict[str, Any]) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args: Any) -> None:
        log.debug("sim endpoint: " + format, *args)


class _SimEndpoints:
    """One loopback HTTP server hosting all simulated consumers and services."""

    def __init__(self) -> None:
        self.consumers: dict[str, _SimConsumer] = {}
        self.services: dict[str, _SimService] = {}
        handler = type("BoundSimHandler", (_SimEndpointsHandler,), {"hub": self})
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        host, port = self.server.server_address[:2]
        self.base_url = f"http://{host}:{port}"

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5.0)


# -- runner -----------------------------------------------------------------


class _InProcessPort:
    """Drives a broker object directly, with simulated local endpoints."""

    def __init__(self, scenario: Scenario) -> None:
        self.now = 0
        self.transport = LocalTransport()
        self.broker = ContextBroker(
            scenario.catalog, transport=self.transport, clock=lambda: self.now
        )
        for consumer_id, _ in scenario.consumers:
            self.transport.consumers[self._callback(consumer_id)] = _SimConsumer()
        for service_id in scenario.offers_by_service():
            self.transport.services[self._address(service_id)] = _SimService()

    @staticmethod
    def _callback(consumer_id: str) -> str:
        return f"local:consumer:{consumer_id}"

    @staticmethod
    def _address(service_id: str) -> str:
        return f"local:service:{service_id}"

    def set_clock(self, at: int) -> None:
        self.now = at

    def subscribe(self, consumer_id: str, profile: RequirementProfile) -> str:
        return self.broker.subscribe(consumer_id, profile, self._callback(consumer_id))

    def unsubscribe(self, subscription_id: str) -> None:
        self.broker.unsubscribe(subscription_id)

    def register(self, offer: ServiceOffer) -> str:
        return self.broker.register_context_service(offer, self._address(offer.service_id))

    def deregister(self, registration_id: str) -> None:
        self.broker.deregister_context_service(registration_id)

    def set_service_value(self, service_id: str, sample: dict[str, Any]) -> None:
        self.transport.services[self._address(service_id)].set_value(sample)

    def notify(self, service_id: str, sample: dict[str, Any]) -> None:
        self.broker.notify_context_change(service_id, ContextSample.from_dict(sample))

    def pull_current(self, subscription_id: str, topic: str) -> str | None:
        try:
            self.broker.get_current_topic_value(subscription_id, topic)
            return None
        except errors.BrokerError as exc:
            return exc.code

    def pull_last(self, subscription_id: str, topic: str) -> dict[str, Any] | None:
        try:
            return self.broker.get_last_topic_value(subscription_id, topic).to_dict()
        except errors.BrokerError:
            return None

    def decision(self, subscription_id: str) -> dict[str, Any]:
        return self.broker.get_decision(subscription_id).to_dict()

    def drain(self) -> None:
        self.broker.drain()

    def consumer_messages(self, consumer_id: str) -> list[dict[str, Any]]:
        return self.transport.consumers[self._callback(consumer_id)].messages()

    def service_pulls(self, service_id: str) -> int:
        return self.transport.services[self._address(service_id)].pulls

    def stop(self) -> None:
        self.broker.close()


class _WirePort:
    """Drives a spawned broker service over loopback HTTP."""

    def __init__(self, scenario: Scenario) -> None:
        self.endpoints = _SimEndpoints()
        for consumer_id, _ in scenario.consumers:
            self.endpoints.consumers[consumer_id] = _SimConsumer()
        for service_id in scenario.offers_by_service():
            self.endpoints.services[service_id] = _SimService()
        config = ServiceConfig(
            catalog=scenario.catalog,
            listen="127.0.0.1:0",
            retry=RetryPolicy(attempts=3, backoff_initial=0.05),
        )
        self.handle = serve(config)
        self.client = wire.WireClient(self.handle.base_url)

    def _callback(self, consumer_id: str) -> str:
        return f"{self.endpoints.base_url}/consumers/{consumer_id}"

    def _address(self, service_id: str) -> str:
        return f"{self.endpoints.base_url}/services/{service_id}"

    def set_clock(self, at: int) -> None:
        pass  # the remote broker keeps wall time; reports never compare clocks

    def subscribe(self, consumer_id: str, profile: RequirementProfile) -> str:
        return self.client.subscribe(consumer_id, profile.to_dict(), self._callback(consumer_id))

    def unsubscribe(self, subscription_id: str) -> None:
        self.client.unsubscribe(subscription_id)

    def register(self, offer: ServiceOffer) -> str:
        return self.client.register(offer.to_dict(), self._address(offer.service_id))

    def deregister(self, registration_id: str) -> None:
        self.client.deregister(registration_id)

    def set_service_value(self, service_id: str, sample: dict[str, Any]) -> None:
        self.endpoints.services[service_id].set_value(sample)

    def notify(self, service_id: str, sample: dict[str, Any]) -> None:
        self.client.notify(service_id, sample)

    def pull_current(self, subscription_id: str, topic: str) -> str | None:
        try:
            self.client.pull_current(subscription_id, topic)
            return None
        except wire.WireError as exc:
            return exc.code

    def pull_last(self, subscription_id: str, topic: str) -> dict[str, Any] | None:
        try:
            return self.client.pull_last(subscription_id, topic)
        except wire.WireError:
            return None

    def decision(self, subscription_id: str) -> dict[str, Any]:
        return self.client.decision(subscription_id)

    def drain(self) -> None:
        self.client.drain()

    def consumer_messages(self, consumer_id: str) -> list[dict[str, Any]]:
        return self.endpoints.consumers[consumer_id].messages()

    def service_pulls(self, service_id: str) -> int:
        return self.endpoints.services[service_id].pulls

    def stop(self) -> None:
        self.handle.stop()
        self.endpoints.stop()


def run(scenario: Scenario, mode: str = "in-process") -> RunReport:
    """Execute a scenario and report exact selection/delivery counts.

    ``mode`` is "in-process" or "over-wire"; both yield the same report
    for the same scenario (meta excluded).
    """
    validate_scenario(scenario)
    if mode == "in-process":
        port: Any = _InProcessPort(scenario)
    elif mode == "over-wire":
        port = _WirePort(scenario)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    started = time.monotonic()
    try:
        report = _execute(scenario, port)
    finally:
        port.stop()
    report.meta = {
        "mode": mode,
        "seed": scenario.seed,
        "wall_ms": int((time.monotonic() - started) * 1000),
    }
    return report


def _execute(scenario: Scenario, port: Any) -> RunReport:
    offers = scenario.offers_by_service()
    profiles = scenario.profiles_by_consumer()
    registrations: dict[str, str] = {}
    subscriptions: dict[str, str] = {}
    histories: dict[tuple[str, str], list[str | None]] = {}
    publications = {service_id: 0 for service_id in offers}
    pulls_ok = 0
    pull_errors: dict[str, int] = {}

    def sample_decisions() -> None:
        for consumer_id, subscription_id in subscriptions.items():
            decision = port.decision(subscription_id)
            for topic, selected in zip(decision["topics"], decision["selected"]):
                history = histories.setdefault((consumer_id, topic), [])
                if not history or history[-1] != selected:
                    history.append(selected)

    for event in scenario.timeline:
        port.set_clock(event.at)
        if event.action == "register":
            registrations[event.service_id] = port.register(offers[event.service_id])
            sample_decisions()
        elif event.action == "deregister":
            port.deregister(registrations.pop(event.service_id))
            sample_decisions()
        elif event.action == "subscribe":
            subscriptions[event.consumer_id] = port.subscribe(
                event.consumer_id, profiles[event.consumer_id]
            )
            sample_decisions()
        elif event.action == "unsubscribe":
            port.unsubscribe(subscriptions.pop(event.consumer_id))
        elif event.action == "publish":
            sample = {
                "topic": event.topic,
                "payload": event.payload,
                "produced_at": event.at,
                "service_id": event.service_id,
            }
            port.set_service_value(event.service_id, sample)
            port.notify(event.service_id, sample)
            publications[event.service_id] += 1
        elif event.action == "pull":
            code = port.pull_current(subscriptions[event.consumer_id], event.topic)
            if code is None:
                pulls_ok += 1
            else:
                pull_errors[code] = pull_errors.get(code, 0) + 1
        port.drain()

    last_values: dict[tuple[str, str], Any] = {}
    for consumer_id, subscription_id in subscriptions.items():
        for topic in profiles[consumer_id].topics:
            sample = port.pull_last(subscription_id, topic)
            last_values[(consumer_id, topic)] = (
                [sample["service_id"], sample["payload"]] if sample else None
            )

    consumers_report: dict[str, Any] = {}
    total_notifications = 0
    total_advisories = 0
    for consumer_id, profile in scenario.consumers:
        received: dict[str, list[list[Any]]] = {t: [] for t in profile.topics}
        advisories: list[list[str]] = []
        for message in port.consumer_messages(consumer_id):
            body = message.get("body", {})
            if message.get("kind") == "notify":
                sample = body["sample"]
                received[sample["topic"]].append([sample["service_id"], sample["payload"]])
            elif message.get("kind") == "advisory":
                advisories.append(list(body["topics"]))
        topics_report = {}
        for topic in profile.topics:
            history = histories.get((consumer_id, topic), [])
            topics_report[topic] = {
                "selected_history": list(history),
                "received": received[topic],
                "notifications": len(received[topic]),
                "advisories": sum(1 for topics in advisories if topic in topics),
                "last": last_values.get((consumer_id, topic)),
            }
        total_notifications += sum(t["notifications"] for t in topics_report.values())
        total_advisories += len(advisories)
        consumers_report[consumer_id] = {"advisories": advisories, "topics": topics_report}

    services_report = {
        service_id: {"publications": publications[service_id], "pulls": port.service_pulls(service_id)}
        for service_id in offers
    }
    totals = {
        "selection_switches": sum(max(0, len(h) - 1) for h in histories.values()),
        "notifications": total_notifications,
        "advisories": total_advisories,
        "pulls_ok": pulls_ok,
        "pull_errors": pull_errors,
    }
    return RunReport(consumers=consumers_report, services=services_report, totals=totals)


# -- random scenario generation ----------------------------------------------


def generate_random_scenario(
    seed: int,
    services: int = 3,
    topics: int = 2,
    qoc: int = 2,
    qos: int = 1,
    events: int = 20,
    clouds: int = 1,
    consumers: int = 2,
) -> Scenario:
    """Reproducible random scenario; the same seed yields the same scenario.

    Offers and profiles are drawn so that feasibility is common but not
    guaranteed, which exercises zero scores, renegotiation advisories and
    selection switches.
    """
    if min(topics, qoc, qos, clouds, consumers) < 1 or services < 0 or events < 0:
        raise ValueError("sizes must be positive (services and events may be 0)")
    rng = random.Random(seed)
    topic_names = [f"topic-{j + 1}" for j in range(topics)]
    catalog = IndicatorCatalog(
        qoc_indicators=tuple(f"qoc-{i + 1}" for i in range(qoc)),
        qos_indicators=tuple(f"qos-{k + 1}" for k in range(qos)),
    )

    cloud_ids = [f"cloud-{i + 1}" for i in range(clouds)]
    grouped: dict[str, list[ServiceOffer]] = {cid: [] for cid in cloud_ids}
    for k in range(services):
        cloud_id = rng.choice(cloud_ids)
        offered = tuple(sorted(rng.sample(topic_names, rng.randint(1, topics))))
        offer = ServiceOffer(
            service_id=f"svc-{k + 1:02d}",
            cloud_id=cloud_id,
            offered_topics=offered,
            qoc_offer={
                t: tuple(round(rng.uniform(0.3, 1.0), 3) for _ in range(qoc))
                for t in offered
            },
            qos_offer=tuple(round(rng.uniform(0.5, 1.0), 3) for _ in range(qos)),
        )
        grouped[cloud_id].append(offer)

    consumer_list = []
    for i in range(consumers):
        chosen = tuple(sorted(rng.sample(topic_names, rng.randint(1, topics))))
        profile = RequirementProfile(
            topics=chosen,
            qoc_min=tuple(
                tuple(
                    0.0 if rng.random() < 0.35 else round(rng.uniform(0.0, 0.85), 3)
                    for _ in range(qoc)
                )
                for _ in chosen
            ),
            qos_min=tuple(
                0.0 if rng.random() < 0.5 else round(rng.uniform(0.0, 0.8), 3)
                for _ in range(qos)
            ),
            weights=tuple(
                tuple(round(rng.uniform(0.0, 2.0), 3) for _ in range(qoc)) for _ in chosen
            ),
        )
        consumer_list.append((f"app-{i + 1}", profile))

    timeline: list[ScenarioEvent] = []
    at = 0
    registered: list[str] = []
    inactive = [o.service_id for cid in cloud_ids for o in grouped[cid]]
    subscribed: list[str] = []
    offers_by_id = {o.service_id: o for cid in cloud_ids for o in grouped[cid]}
    profiles_by_id = dict(consumer_list)

    def advance() -> int:
        nonlocal at
        at += rng.randint(1, 5)
        return at

    for service_id in list(inactive):
        timeline.append(ScenarioEvent(at=advance(), action="register", service_id=service_id))
        inactive.remove(service_id)
        registered.append(service_id)
    for consumer_id, _ in consumer_list:
        timeline.append(ScenarioEvent(at=advance(), action="subscribe", consumer_id=consumer_id))
        subscribed.append(consumer_id)

    payload_seq = 0
    for _ in range(events):
        roll = rng.random()
        if roll < 0.55 and registered:
            service_id = rng.choice(registered)
            topic = rng.choice(offers_by_id[service_id].offered_topics)
            payload_seq += 1
            timeline.append(
                ScenarioEvent(
                    at=advance(), action="publish", service_id=service_id,
                    topic=topic, payload=f"v{payload_seq}",
                )
            )
        elif roll < 0.80 and subscribed:
            consumer_id = rng.choice(subscribed)
            profile = profiles_by_id[consumer_id]
            timeline.append(
                ScenarioEvent(
                    at=advance(), action="pull", consumer_id=consumer_id,
                    topic=rng.choice(profile.topics),
                )
            )
        elif roll < 0.90 and registered:
            service_id = rng.choice(registered)
            timeline.append(
                ScenarioEvent(at=advance(), action="deregister", service_id=service_id)
            )
            registered.remove(service_id)
            inactive.append(service_id)
        elif inactive:
            service_id = rng.choice(inactive)
            timeline.append(
                ScenarioEvent(at=advance(), action="register", service_id=service_id)
            )
            inactive.remove(service_id)
            registered.append(service_id)
        elif subscribed:
            consumer_id = rng.choice(subscribed)
            profile = profiles_by_id[consumer_id]
            timeline.append(
                ScenarioEvent(
                    at=advance(), action="pull", consumer_id=consumer_id,
                    topic=rng.choice(profile.topics),
                )
            )

    return Scenario(
        seed=seed,
        catalog=catalog,
        clouds=tuple((cid, tuple(grouped[cid])) for cid in cloud_ids),
        consumers=tuple(consumer_list),
        timeline=tuple(timeline),
    )
