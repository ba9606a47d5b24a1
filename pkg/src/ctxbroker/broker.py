"""Broker state machine: subscription and registration registries, topic
value cache, selection-driven fan-out, and pull-through queries.

Mutations are serialized under a single lock (single-writer discipline);
notification dispatch runs on a dedicated worker thread off the mutation
path, giving per-subscription FIFO, at-most-once delivery. Reselection
is immediate and synchronous on any registry change; publications never
trigger reselection, because offers rather than observed values drive
selection.

Only the currently selected service's publications reach a subscriber.
Publications from other services still land in the topic cache and the
event log, but are never fanned out, which is what gives the selection
algorithm operational force.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from dataclasses import dataclass
from queue import Queue
from typing import Any, Callable, Protocol

from . import errors
from .model import (
    ContextSample,
    IndicatorCatalog,
    RequirementProfile,
    ServiceOffer,
    TopicId,
    validate_offer,
    validate_profile,
)
from .selection import (
    DecisionMatrix,
    build_decision_matrix,
    qoc_feasible,
    qos_feasible,
    renegotiation_report,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded retry with exponential backoff for callback delivery."""

    attempts: int = 3
    backoff_initial: float = 0.1
    backoff_multiplier: float = 2.0

    def delay(self, attempt: int) -> float:
        """Sleep before retry number ``attempt`` (counted from 1)."""
        return self.backoff_initial * self.backoff_multiplier ** (attempt - 1)


@dataclass(frozen=True)
class DeliveryStatus:
    delivered: bool
    attempts: int


class Transport(Protocol):
    """How the broker reaches consumers (push) and services (pull)."""

    def push(self, callback_address: str, message: dict[str, Any]) -> DeliveryStatus:
        """Deliver one message, retrying per policy; never raises."""
        ...

    def pull(self, service_address: str, topic: TopicId) -> dict[str, Any]:
        """Fetch the current sample for ``topic``; raises UpstreamUnavailable."""
        ...


class NullTransport:
    """Drops every push and fails every pull; placeholder for registry-only use."""

    def push(self, callback_address: str, message: dict[str, Any]) -> DeliveryStatus:
        log.debug("null transport dropping message to %s", callback_address)
        return DeliveryStatus(delivered=False, attempts=0)

    def pull(self, service_address: str, topic: TopicId) -> dict[str, Any]:
        raise errors.UpstreamUnavailable(f"no transport to reach {service_address!r}")


@dataclass(frozen=True)
class Subscription:
    subscription_id: str
    consumer_id: str
    profile: RequirementProfile
    callback_address: str
    created_at: int


@dataclass(frozen=True)
class Registration:
    registration_id: str
    offer: ServiceOffer
    service_address: str
    created_at: int


@dataclass
class SelectionState:
    """A subscription's current decision matrix; revision bumps on change."""

    decision: DecisionMatrix
    revision: int

    def selected_for(self, topic: TopicId) -> str | None:
        return self.decision.selected_for(topic)


class _Dispatcher:
    """Single-worker delivery queue: global FIFO, hence per-subscription FIFO."""

    _STOP = object()

    def __init__(
        self,
        transport: Transport,
        on_done: Callable[[dict[str, Any], DeliveryStatus], None],
    ) -> None:
        self._transport = transport
        self._on_done = on_done
        self._queue: Queue = Queue()
        self._pending = 0
        self._cond = threading.Condition()
        self._thread = threading.Thread(target=self._run, name="ctxbroker-dispatch", daemon=True)
        self._thread.start()

    def enqueue(self, callback_address: str, message: dict[str, Any], meta: dict[str, Any]) -> None:
        with self._cond:
            self._pending += 1
        self._queue.put((callback_address, message, meta))

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is self._STOP:
                return
            address, message, meta = item
            try:
                status = self._transport.push(address, message)
            except Exception:
                log.exception("transport.push failed for %s", address)
                status = DeliveryStatus(delivered=False, attempts=0)
            if not status.delivered:
                log.warning(
                    "dropping %s for %s after %d attempt(s)",
                    message.get("kind"), address, status.attempts,
                )
            try:
                self._on_done(meta, status)
            finally:
                with self._cond:
                    self._pending -= 1
                    self._cond.notify_all()

    def drain(self, timeout: float = 10.0) -> bool:
        """Block until the queue is empty and no delivery is in flight."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._pending > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    def close(self) -> None:
        self._queue.put(self._STOP)
        self._thread.join(timeout=5.0)


def _now_ms() -> int:
    return int(time.time() * 1000)


class ContextBroker:
    """Mediates between context services (publishers) and consumers
    (subscribers) on a set of topics, selecting per topic and per
    subscription the provider with the best weighted quality score."""

    def __init__(
        self,
        catalog: IndicatorCatalog,
        transport: Transport | None = None,
        clock: Callable[[], int] | None = None,
    ) -> None:
        self.catalog = catalog
        self._transport = transport if transport is not None else NullTransport()
        self._clock = clock if clock is not None else _now_ms
        self._lock = threading.RLock()
        self._subscriptions: dict[str, Subscription] = {}
        self._registrations: dict[str, Registration] = {}
        self._service_registration: dict[str, str] = {}
        self._selection: dict[str, SelectionState] = {}
        self._cache: dict[tuple[TopicId, str], ContextSample] = {}
        self._events: list[dict[str, Any]] = []
        self._next_sub = 1
        self._next_reg = 1
        self._seq = 0
        self._dispatcher = _Dispatcher(self._transport, self._record_dispatch)

    # -- registries ---------------------------------------------------

    def subscribe(
        self, consumer_id: str, profile: RequirementProfile, callback_address: str
    ) -> str:
        """Admit a consumer; selection is computed immediately.

        Topics with no admissible provider trigger a renegotiation
        advisory right away. Returns the new subscription id.
        """
        result = validate_profile(profile, self.catalog)
        if not result:
            raise errors.BadRequest(f"invalid profile: {result.reason}")
        with self._lock:
            subscription_id = f"sub-{self._next_sub}"
            self._next_sub += 1
            sub = Subscription(
                subscription_id=subscription_id,
                consumer_id=consumer_id,
                profile=profile,
                callback_address=callback_address,
                created_at=self._clock(),
            )
            self._subscriptions[subscription_id] = sub
            decision = build_decision_matrix(self._live_offers(), profile)
            self._selection[subscription_id] = SelectionState(decision, revision=1)
            self._record(
                "subscribe",
                subscription_id=subscription_id,
                consumer_id=consumer_id,
                profile=profile.to_dict(),
                callback_address=callback_address,
            )
            missing = renegotiation_report(decision)
            if missing:
                self._enqueue_advisory(sub, missing)
            return subscription_id

    def unsubscribe(self, subscription_id: str) -> None:
        with self._lock:
            if subscription_id not in self._subscriptions:
                raise errors.NotFound(f"unknown subscription {subscription_id!r}")
            del self._subscriptions[subscription_id]
            del self._selection[subscription_id]
            self._record("unsubscribe", subscription_id=subscription_id)

    def register_context_service(self, offer: ServiceOffer, service_address: str) -> str:
        """Admit a service offer and reselect for every subscription."""
        result = validate_offer(offer, self.catalog)
        if not result:
            raise errors.BadRequest(f"invalid offer: {result.reason}")
        with self._lock:
            if offer.service_id in self._service_registration:
                raise errors.Conflict(
                    f"service {offer.service_id!r} already has an active registration"
                )
            registration_id = f"reg-{self._next_reg}"
            self._next_reg += 1
            reg = Registration(
                registration_id=registration_id,
                offer=offer,
                service_address=service_address,
                created_at=self._clock(),
            )
            self._registrations[registration_id] = reg
            self._service_registration[offer.service_id] = registration_id
            self._record(
                "register",
                registration_id=registration_id,
                offer=offer.to_dict(),
                service_address=service_address,
            )
            self._reselect_all()
            return registration_id

    def deregister_context_service(self, registration_id: str) -> None:
        with self._lock:
            reg = self._registrations.pop(registration_id, None)
            if reg is None:
                raise errors.NotFound(f"unknown registration {registration_id!r}")
            del self._service_registration[reg.offer.service_id]
            self._record("deregister", registration_id=registration_id,
                         service_id=reg.offer.service_id)
            self._reselect_all()

    # -- publications and queries --------------------------------------

    def notify_context_change(self, service_id: str, sample: ContextSample) -> None:
        """Accept one publication; fan out to subscriptions whose selected
        service for the topic is the publisher."""
        with self._lock:
            registration_id = self._service_registration.get(service_id)
            if registration_id is None:
                raise errors.Unregistered(f"service {service_id!r} is not registered")
            offer = self._registrations[registration_id].offer
            if sample.service_id != service_id:
                raise errors.BadRequest(
                    f"sample names service {sample.service_id!r}, publisher is {service_id!r}"
                )
            if not offer.offers_topic(sample.topic):
                raise errors.BadRequest(
                    f"service {service_id!r} does not offer topic {sample.topic!r}"
                )
            key = (sample.topic, service_id)
            cached = self._cache.get(key)
            if cached is not None and sample.produced_at < cached.produced_at:
                raise errors.BadRequest(
                    f"timestamp regression for {service_id!r}/{sample.topic!r}"
                )
            self._cache[key] = sample
            self._record("notify", service_id=service_id, sample=sample.to_dict())
            for sub in self._subscriptions.values():
                state = self._selection[sub.subscription_id]
                if sample.topic in sub.profile.topics and (
                    state.selected_for(sample.topic) == service_id
                ):
                    self._enqueue_notification(sub, sample)

    def get_current_topic_value(self, subscription_id: str, topic: TopicId) -> ContextSample:
        """Pull a fresh sample from the subscription's selected provider."""
        with self._lock:
            sub = self._get_subscription(subscription_id)
            self._require_subscribed(sub, topic)
            state = self._selection[subscription_id]
            selected = state.selected_for(topic)
            if selected is None:
                raise errors.NoProvider(
                    f"no admissible service for topic {topic!r}",
                    topics=renegotiation_report(state.decision),
                )
            reg = self._registrations[self._service_registration[selected]]
            address = reg.service_address
        # Network round trip happens outside the registry lock.
        data = self._transport.pull(address, topic)
        try:
            sample = ContextSample.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.UpstreamUnavailable(
                f"malformed sample from {selected!r}: {exc}"
            ) from exc
        if sample.topic != topic or sample.service_id != selected:
            raise errors.UpstreamUnavailable(
                f"service {selected!r} answered with a mismatched sample"
            )
        with self._lock:
            key = (topic, selected)
            cached = self._cache.get(key)
            if cached is None or sample.produced_at >= cached.produced_at:
                self._cache[key] = sample
            self._record("pull", subscription_id=subscription_id, topic=topic,
                         service_id=selected)
        return sample

    def get_last_topic_value(self, subscription_id: str, topic: TopicId) -> ContextSample:
        """Serve the cached sample without contacting any service.

        Prefers the subscription's own selected provider; a subscription
        that selected a provider which has not published yet falls back
        to the most recent sample from any service currently admissible
        for its profile.
        """
        with self._lock:
            sub = self._get_subscription(subscription_id)
            self._require_subscribed(sub, topic)
            selected = self._selection[subscription_id].selected_for(topic)
            if selected is not None:
                sample = self._cache.get((topic, selected))
                if sample is not None:
                    return sample
            candidates = []
            for reg in self._registrations.values():
                offer = reg.offer
                if not qos_feasible(offer, sub.profile):
                    continue
                if not qoc_feasible(offer, sub.profile, topic):
                    continue
                sample = self._cache.get((topic, offer.service_id))
                if sample is not None:
                    candidates.append(sample)
            if not candidates:
                raise errors.NoValueYet(f"no value published yet for topic {topic!r}")
            newest = max(s.produced_at for s in candidates)
            return min(
                (s for s in candidates if s.produced_at == newest),
                key=lambda s: s.service_id,
            )

    def find_context_consumers(self, topic: TopicId) -> list[str]:
        """Live subscriptions whose profile includes the topic, in admission order."""
        with self._lock:
            return [
                sub.subscription_id
                for sub in self._subscriptions.values()
                if topic in sub.profile.topics
            ]

    def find_context_services(self, topic: TopicId) -> list[str]:
        """Live registrations offering the topic, in admission order."""
        with self._lock:
            return [
                reg.offer.service_id
                for reg in self._registrations.values()
                if reg.offer.offers_topic(topic)
            ]

    def notify_renegotiation(self, subscription_id: str, topics: list[TopicId]) -> None:
        """Push an advisory listing unprovisionable topics to the subscriber."""
        with self._lock:
            sub = self._get_subscription(subscription_id)
            self._enqueue_advisory(sub, topics)

    # -- introspection --------------------------------------------------

    def get_decision(self, subscription_id: str) -> DecisionMatrix:
        with self._lock:
            self._get_subscription(subscription_id)
            return self._selection[subscription_id].decision

    def revision(self, subscription_id: str) -> int:
        with self._lock:
            self._get_subscription(subscription_id)
            return self._selection[subscription_id].revision

    def events(self) -> list[dict[str, Any]]:
        """Structured log: one record per mutation and per dispatch."""
        with self._lock:
            return list(self._events)

    def drain(self, timeout: float = 10.0) -> bool:
        """Wait until all enqueued notifications/advisories are delivered or dropped."""
        return self._dispatcher.drain(timeout)

    def close(self) -> None:
        self._dispatcher.close()

    # -- persistence hooks ----------------------------------------------

    def snapshot_state(self) -> dict[str, Any]:
        """Durable image of registries and counters (cache excluded)."""
        with self._lock:
            return {
                "next_sub": self._next_sub,
                "next_reg": self._next_reg,
                "seq": self._seq,
                "registrations": [
                    {
                        "registration_id": reg.registration_id,
                        "offer": reg.offer.to_dict(),
                        "service_address": reg.service_address,
                        "created_at": reg.created_at,
                    }
                    for reg in self._registrations.values()
                ],
                "subscriptions": [
                    {
                        "subscription_id": sub.subscription_id,
                        "consumer_id": sub.consumer_id,
                        "profile": sub.profile.to_dict(),
                        "callback_address": sub.callback_address,
                        "created_at": sub.created_at,
                        "revision": self._selection[sub.subscription_id].revision,
                    }
                    for sub in self._subscriptions.values()
                ],
            }

    def restore_state(self, state: dict[str, Any]) -> None:
        """Rebuild registries from a snapshot taken by :meth:`snapshot_state`.

        Must be called on a fresh broker. Decisions are recomputed from
        the restored offers; revisions are restored as persisted.
        """
        with self._lock:
            if self._subscriptions or self._registrations:
                raise RuntimeError("restore_state requires an empty broker")
            self._next_sub = int(state["next_sub"])
            self._next_reg = int(state["next_reg"])
            self._seq = int(state["seq"])
            for entry in state["registrations"]:
                offer = ServiceOffer.from_dict(entry["offer"])
                reg = Registration(
                    registration_id=entry["registration_id"],
                    offer=offer,
                    service_address=entry["service_address"],
                    created_at=int(entry["created_at"]),
                )
                self._registrations[reg.registration_id] = reg
                self._service_registration[offer.service_id] = reg.registration_id
            for entry in state["subscriptions"]:
                profile = RequirementProfile.from_dict(entry["profile"])
                sub = Subscription(
                    subscription_id=entry["subscription_id"],
                    consumer_id=entry["consumer_id"],
                    profile=profile,
                    callback_address=entry["callback_address"],
                    created_at=int(entry["created_at"]),
                )
                self._subscriptions[sub.subscription_id] = sub
                decision = build_decision_matrix(self._live_offers(), profile)
                self._selection[sub.subscription_id] = SelectionState(
                    decision, revision=int(entry["revision"])
                )

    # -- internals --------------------------------------------------------

    def _get_subscription(self, subscription_id: str) -> Subscription:
        sub = self._subscriptions.get(subscription_id)
        if sub is None:
            raise errors.NotFound(f"unknown subscription {subscription_id!r}")
        return sub

    @staticmethod
    def _require_subscribed(sub: Subscription, topic: TopicId) -> None:
        if topic not in sub.profile.topics:
            raise errors.NotSubscribed(
                f"subscription {sub.subscription_id!r} does not include topic {topic!r}"
            )

    def _live_offers(self) -> list[ServiceOffer]:
        return [reg.offer for reg in self._registrations.values()]

    def _reselect_all(self) -> None:
        """Recompute every subscription's decision after a registry change.

        Revision bumps only when the decision actually changed; topics
        whose provider disappeared get a renegotiation advisory.
        """
        offers = self._live_offers()
        for sub in self._subscriptions.values():
            state = self._selection[sub.subscription_id]
            decision = build_decision_matrix(offers, sub.profile)
            if decision == state.decision:
                continue
            lost = [
                topic
                for topic, before, after in zip(
                    decision.topics, state.decision.selected, decision.selected
                )
                if before is not None and after is None
            ]
            self._selection[sub.subscription_id] = SelectionState(
                decision, revision=state.revision + 1
            )
            if lost:
                self._enqueue_advisory(sub, lost)

    def _enqueue_notification(self, sub: Subscription, sample: ContextSample) -> None:
        message = {
            "kind": "notify",
            "request_id": uuid.uuid4().hex,
            "body": {
                "subscription_id": sub.subscription_id,
                "sample": sample.to_dict(),
            },
        }
        meta = {
            "message_kind": "notify",
            "subscription_id": sub.subscription_id,
            "topic": sample.topic,
            "service_id": sample.service_id,
        }
        self._dispatcher.enqueue(sub.callback_address, message, meta)

    def _enqueue_advisory(self, sub: Subscription, topics: list[TopicId]) -> None:
        message = {
            "kind": "advisory",
            "request_id": uuid.uuid4().hex,
            "body": {
                "subscription_id": sub.subscription_id,
                "topics": list(topics),
            },
        }
        meta = {
            "message_kind": "advisory",
            "subscription_id": sub.subscription_id,
            "topics": list(topics),
        }
        self._dispatcher.enqueue(sub.callback_address, message, meta)

    def _record(self, kind: str, **payload: Any) -> None:
        self._seq += 1
        self._events.append({"seq": self._seq, "kind": kind, "at": self._clock(), **payload})

    def _record_dispatch(self, meta: dict[str, Any], status: DeliveryStatus) -> None:
        with self._lock:
            self._seq += 1
            self._events.append(
                {
                    "seq": self._seq,
                    "kind": "dispatch",
                    "at": self._clock(),
                    "status": "delivered" if status.delivered else "dropped",
                    "attempts": status.attempts,
                    **meta,
                }
            )
