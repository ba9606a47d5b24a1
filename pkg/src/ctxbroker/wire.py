"""Wire message format and HTTP plumbing.

Every request travels as an envelope ``{"kind", "request_id", "body"}``
and receives exactly one ``ack`` or ``error`` envelope carrying the same
``request_id``. Bodies use the canonical serialized forms from
:mod:`ctxbroker.model`. Notifications and advisories are pushed to
consumer-supplied callback URLs as the same envelope shape.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.parse
import urllib.request
import uuid
from typing import Any

from . import errors
from .broker import DeliveryStatus, RetryPolicy

log = logging.getLogger(__name__)

REQUEST_KINDS = ("subscribe", "register", "notify", "pull-current", "pull-last")
PUSH_KINDS = ("notify", "advisory")
RESPONSE_KINDS = ("ack", "error")


def make_envelope(kind: str, body: dict[str, Any], request_id: str | None = None) -> dict[str, Any]:
    return {
        "kind": kind,
        "request_id": request_id if request_id is not None else uuid.uuid4().hex,
        "body": body,
    }


def ack(request_id: str, body: dict[str, Any] | None = None) -> dict[str, Any]:
    return {"kind": "ack", "request_id": request_id, "body": body or {}}


def error_envelope(request_id: str, exc: errors.BrokerError) -> dict[str, Any]:
    return {"kind": "error", "request_id": request_id, "body": exc.to_body()}


def http_status_for(code: str) -> int:
    return {
        "BAD_REQUEST": 400,
        "NOT_FOUND": 404,
        "CONFLICT": 409,
        "UNREGISTERED": 403,
        "NOT_SUBSCRIBED": 403,
        "NO_PROVIDER": 503,
        "NO_VALUE_YET": 404,
        "UPSTREAM_UNAVAILABLE": 502,
    }.get(code, 500)


def _request_json(
    method: str, url: str, payload: dict[str, Any] | None, timeout: float
) -> tuple[int, dict[str, Any]]:
    """One HTTP exchange with JSON in and out; 4xx/5xx bodies are returned,
    transport-level failures raise OSError."""
    data = None
    headers = {"Accept": "application/json"}
    if payload is not None:
        data = json.dumps(payload).encode("utf-8")
        headers["Content-Type"] = "application/json"
    request = urllib.request.Request(url, data=data, headers=headers, method=method)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, json.loads(response.read().decode("utf-8") or "{}")
    except urllib.error.HTTPError as exc:
        raw = exc.read().decode("utf-8", errors="replace")
        try:
            return exc.code, json.loads(raw)
        except json.JSONDecodeError:
            return exc.code, {"kind": "error", "request_id": "",
                              "body": {"code": "BAD_REQUEST", "message": raw[:200]}}


def push_notification(
    callback_address: str,
    envelope: dict[str, Any],
    retry: RetryPolicy | None = None,
    timeout: float = 5.0,
) -> DeliveryStatus:
    """POST a push envelope to a consumer callback URL, with bounded retry.

    Returns a status instead of raising: exhausted retries mean the
    message is dropped (and logged) rather than redelivered later.
    """
    policy = retry if retry is not None else RetryPolicy()
    for attempt in range(1, policy.attempts + 1):
        if attempt > 1:
            time.sleep(policy.delay(attempt - 1))
        try:
            status, _ = _request_json("POST", callback_address, envelope, timeout)
        except (OSError, urllib.error.URLError) as exc:
            log.debug("push attempt %d to %s failed: %s", attempt, callback_address, exc)
            continue
        if 200 <= status < 300:
            return DeliveryStatus(delivered=True, attempts=attempt)
    return DeliveryStatus(delivered=False, attempts=policy.attempts)


class HttpTransport:
    """Reaches consumers and services over plain HTTP.

    Callback addresses are full URLs accepting POSTed envelopes; service
    addresses are URL prefixes answering ``GET <prefix>/topics/<topic>``
    with a sample document.
    """

    def __init__(self, retry: RetryPolicy | None = None, timeout: float = 5.0) -> None:
        self.retry = retry if retry is not None else RetryPolicy()
        self.timeout = timeout

    def push(self, callback_address: str, message: dict[str, Any]) -> DeliveryStatus:
        return push_notification(callback_address, message, self.retry, self.timeout)

    def pull(self, service_address: str, topic: str) -> dict[str, Any]:
        url = service_address.rstrip("/") + "/topics/" + urllib.parse.quote(topic, safe="")
        try:
            status, payload = _request_json("GET", url, None, self.timeout)
        except (OSError, urllib.error.URLError) as exc:
            raise errors.UpstreamUnavailable(
                f"pull from {service_address!r} failed: {exc}"
            ) from exc
        if status != 200:
            raise errors.UpstreamUnavailable(
                f"pull from {service_address!r} answered HTTP {status}"
            )
        return payload


class WireError(Exception):
    """A structured error envelope received from the broker service."""

    def __init__(self, envelope: dict[str, Any]) -> None:
        body = envelope.get("body", {})
        super().__init__(body.get("message", "request failed"))
        self.envelope = envelope
        self.code = body.get("code", "BAD_REQUEST")
        self.body = body


class WireClient:
    """Thin synchronous client for the broker service endpoints."""

    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    # -- raw exchange ---------------------------------------------------

    def exchange(
        self, method: str, path: str, envelope: dict[str, Any] | None = None
    ) -> dict[str, Any]:
        """Send one request, return its response envelope (ack or raise)."""
        _, response = _request_json(method, self.base_url + path, envelope, self.timeout)
        if response.get("kind") == "error":
            raise WireError(response)
        return response

    # -- typed helpers --------------------------------------------------

    def subscribe(
        self, consumer_id: str, profile: dict[str, Any], callback_address: str
    ) -> str:
        envelope = make_envelope(
            "subscribe",
            {
                "consumer_id": consumer_id,
                "profile": profile,
                "callback_address": callback_address,
            },
        )
        response = self.exchange("POST", "/subscriptions", envelope)
        return response["body"]["subscription_id"]

    def unsubscribe(self, subscription_id: str) -> None:
        self.exchange("DELETE", f"/subscriptions/{subscription_id}")

    def register(self, offer: dict[str, Any], service_address: str) -> str:
        envelope = make_envelope(
            "register", {"offer": offer, "service_address": service_address}
        )
        response = self.exchange("POST", "/registrations", envelope)
        return response["body"]["registration_id"]

    def deregister(self, registration_id: str) -> None:
        self.exchange("DELETE", f"/registrations/{registration_id}")

    def notify(self, service_id: str, sample: dict[str, Any]) -> None:
        envelope = make_envelope("notify", {"service_id": service_id, "sample": sample})
        self.exchange("POST", "/notify", envelope)

    def pull_current(self, subscription_id: str, topic: str) -> dict[str, Any]:
        response = self.exchange(
            "GET", f"/subscriptions/{subscription_id}/topics/{_quote(topic)}/current"
        )
        return response["body"]["sample"]

    def pull_last(self, subscription_id: str, topic: str) -> dict[str, Any]:
        response = self.exchange(
            "GET", f"/subscriptions/{subscription_id}/topics/{_quote(topic)}/last"
        )
        return response["body"]["sample"]

    def find_services(self, topic: str) -> list[str]:
        response = self.exchange("GET", f"/topics/{_quote(topic)}/services")
        return response["body"]["service_ids"]

    def find_consumers(self, topic: str) -> list[str]:
        response = self.exchange("GET", f"/topics/{_quote(topic)}/consumers")
        return response["body"]["subscription_ids"]

    def decision(self, subscription_id: str) -> dict[str, Any]:
        response = self.exchange("GET", f"/subscriptions/{subscription_id}/decision")
        return response["body"]["decision"]

    def drain(self) -> None:
        self.exchange("POST", "/debug/drain", make_envelope("drain", {}))


def _quote(topic: str) -> str:
    return urllib.parse.quote(topic, safe="")
