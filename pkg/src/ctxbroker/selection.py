"""Per-topic provider selection by weighted multi-attribute scoring.

Pure, deterministic functions. A service is admissible for a topic only
if every offered QoC level meets the consumer's per-topic minimum and
every offered QoS level meets the consumer's global minimum; admissible
services are then ranked per topic by the weighted sum of their QoC
levels, and the top scorer wins the topic.

Feasibility is always decided on the raw offer-vs-minimum comparison,
never on the sign of the weighted difference matrix: a zero weight must
not mask a threshold violation. The difference matrix is still exposed
for diagnostics.

Scores of tied services are considered equal within ``TIE_TOLERANCE``
and the tie is broken by lexicographically smallest service id, so that
selection is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .errors import Conflict, DimensionMismatch, NotSubscribed
from .model import Matrix, RequirementProfile, ServiceOffer, TopicId, Vector

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ScoreMatrix:
    """Entrywise weight x quality products, one row per topic.

    ``service_id`` is None for the minimum-score matrix derived from the
    consumer's own thresholds.
    """

    entries: Matrix
    service_id: str | None = None


@dataclass(frozen=True)
class TopicScoreVector:
    """One service's score per subscribed topic; 0 where infeasible."""

    service_id: str
    scores: Vector


@dataclass(frozen=True)
class DecisionMatrix:
    """Topic x service score table with per-topic winner.

    ``selected[j]`` is None exactly when no admissible service exists
    for topic ``j``; otherwise ``scores[j]`` at the winner's column
    equals ``max_score[j]``.
    """

    topics: tuple[TopicId, ...]
    services: tuple[str, ...]
    scores: Matrix
    max_score: Vector
    selected: tuple[str | None, ...]

    def selected_for(self, topic: TopicId) -> str | None:
        return self.selected[self.topics.index(topic)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "topics": list(self.topics),
            "services": list(self.services),
            "scores": [list(row) for row in self.scores],
            "max_score": list(self.max_score),
            "selected": list(self.selected),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DecisionMatrix":
        return cls(
            topics=tuple(data["topics"]),
            services=tuple(data["services"]),
            scores=tuple(tuple(float(v) for v in row) for row in data["scores"]),
            max_score=tuple(float(v) for v in data["max_score"]),
            selected=tuple(data["selected"]),
        )


def qos_feasible(offer: ServiceOffer, profile: RequirementProfile) -> bool:
    """True iff the offer meets every global QoS minimum.

    Services failing this are excluded from scoring entirely.
    """
    if len(offer.qos_offer) != len(profile.qos_min):
        raise DimensionMismatch(
            f"qos vector of {offer.service_id!r} has {len(offer.qos_offer)} entries, "
            f"profile expects {len(profile.qos_min)}"
        )
    return all(q >= mn for mn, q in zip(profile.qos_min, offer.qos_offer))


def qoc_feasible(
    offer: ServiceOffer, profile: RequirementProfile, topic: TopicId
) -> bool:
    """True iff the offer covers ``topic`` at or above every QoC minimum.

    A service that does not offer the topic at all is infeasible for it.
    Equality with a minimum counts as feasible.
    """
    if topic not in profile.topics:
        raise NotSubscribed(f"topic {topic!r} is not in the profile")
    if not offer.offers_topic(topic):
        return False
    j = profile.topic_index(topic)
    minimums = profile.qoc_min[j]
    levels = offer.qoc_offer[topic]
    if len(levels) != len(minimums):
        raise DimensionMismatch(
            f"qoc vector of {offer.service_id!r} for {topic!r} has {len(levels)} "
            f"entries, profile expects {len(minimums)}"
        )
    return all(q >= mn for mn, q in zip(minimums, levels))


def score_matrix(
    weights: Sequence[Sequence[float]],
    qoc: Sequence[Sequence[float]],
    service_id: str | None = None,
) -> ScoreMatrix:
    """Entrywise product of a weight matrix and a quality matrix.

    Applied to an offer's levels this yields the service's score matrix;
    applied to the profile's own minimums it yields the minimum score
    matrix.
    """
    if len(weights) != len(qoc) or any(
        len(wr) != len(qr) for wr, qr in zip(weights, qoc)
    ):
        raise DimensionMismatch("weight and quality matrices disagree in shape")
    entries = tuple(
        tuple(w * q for w, q in zip(wrow, qrow)) for wrow, qrow in zip(weights, qoc)
    )
    return ScoreMatrix(entries=entries, service_id=service_id)


def difference_matrix(s_r: ScoreMatrix, s_min: ScoreMatrix) -> Matrix:
    """Entrywise ``s_r - s_min``, for diagnostics.

    A negative entry in row ``j`` flags the service as unable to satisfy
    that topic; zero entries are still feasible because minimums are
    non-strict. With any zero weight this sign test is weaker than the
    raw check in :func:`qoc_feasible`, which is why feasibility decisions
    never rely on it.
    """
    a, b = s_r.entries, s_min.entries
    if len(a) != len(b) or any(len(ra) != len(rb) for ra, rb in zip(a, b)):
        raise DimensionMismatch("score matrices disagree in shape")
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def topic_scores(offer: ServiceOffer, profile: RequirementProfile) -> TopicScoreVector:
    """Weighted QoC sum per topic; 0 for topics the offer cannot satisfy.

    Assumes the caller already filtered on :func:`qos_feasible`.
    """
    scores = []
    for j, topic in enumerate(profile.topics):
        if qoc_feasible(offer, profile, topic):
            row = score_matrix((profile.weights[j],), (offer.qoc_offer[topic],))
            scores.append(sum(row.entries[0]))
        else:
            scores.append(0.0)
    return TopicScoreVector(service_id=offer.service_id, scores=tuple(scores))


def _check_unique_ids(offers: Iterable[ServiceOffer]) -> None:
    seen: set[str] = set()
    for offer in offers:
        if offer.service_id in seen:
            raise Conflict(f"duplicate service id {offer.service_id!r}")
        seen.add(offer.service_id)


def _rank(candidates: list[tuple[str, float]]) -> tuple[str | None, float]:
    """Winner among (service_id, score) pairs: max score, ties to the
    lexicographically smallest id."""
    if not candidates:
        return None, 0.0
    best = max(score for _, score in candidates)
    tied = [sid for sid, score in candidates if score >= best - TIE_TOLERANCE]
    winner = min(tied)
    score = next(score for sid, score in candidates if sid == winner)
    return winner, score


def build_decision_matrix(
    offers: Sequence[ServiceOffer], profile: RequirementProfile
) -> DecisionMatrix:
    """Score every QoS-admissible offer per topic and pick winners.

    QoS-infeasible offers contribute no column. Row ``j`` holds each
    remaining service's weighted QoC sum, 0 where the service cannot
    satisfy the topic; ``selected[j]`` is the best admissible service or
    None when the topic is unprovisionable.
    """
    _check_unique_ids(offers)
    eligible = [o for o in offers if qos_feasible(o, profile)]
    services = tuple(o.service_id for o in eligible)
    columns = {o.service_id: topic_scores(o, profile) for o in eligible}

    rows = []
    max_score = []
    selected: list[str | None] = []
    for j, topic in enumerate(profile.topics):
        row = tuple(columns[sid].scores[j] for sid in services)
        rows.append(row)
        feasible = [
            (o.service_id, columns[o.service_id].scores[j])
            for o in eligible
            if qoc_feasible(o, profile, topic)
        ]
        winner, score = _rank(feasible)
        selected.append(winner)
        max_score.append(score)
    return DecisionMatrix(
        topics=profile.topics,
        services=services,
        scores=tuple(rows),
        max_score=tuple(max_score),
        selected=tuple(selected),
    )


def select_multi_cloud(
    clouds: Sequence[tuple[str, Sequence[ServiceOffer]]],
    profile: RequirementProfile,
) -> DecisionMatrix:
    """Per-cloud selection followed by a global ranking of the winners.

    Scores do not depend on cloud membership, so the outcome equals
    :func:`build_decision_matrix` over the union of all offers; service
    ids must be unique across clouds.
    """
    _check_unique_ids(o for _, cloud_offers in clouds for o in cloud_offers)
    per_cloud = [build_decision_matrix(cloud_offers, profile) for _, cloud_offers in clouds]

    services: list[str] = []
    for dm in per_cloud:
        services.extend(dm.services)

    rows = []
    max_score = []
    selected: list[str | None] = []
    for j in range(len(profile.topics)):
        row: list[float] = []
        for dm in per_cloud:
            row.extend(dm.scores[j])
        rows.append(tuple(row))
        winners = [
            (dm.selected[j], dm.max_score[j]) for dm in per_cloud if dm.selected[j]
        ]
        winner, score = _rank(winners)
        selected.append(winner)
        max_score.append(score)
    return DecisionMatrix(
        topics=profile.topics,
        services=tuple(services),
        scores=tuple(rows),
        max_score=tuple(max_score),
        selected=tuple(selected),
    )


def renegotiation_report(decision: DecisionMatrix) -> list[TopicId]:
    """Topics left without a provider, in subscription order.

    These are the topics for which the consumer would have to lower its
    expectations before any registered service can serve it.
    """
    return [t for t, sel in zip(decision.topics, decision.selected) if sel is None]


def oracle_select(
    offers: Sequence[ServiceOffer], profile: RequirementProfile
) -> DecisionMatrix:
    """Brute-force reference selection for small instances (test support).

    Re-derives the whole decision by walking every (service, topic) pair
    with explicit loops and literal threshold checks on the raw values,
    sharing no code with the matrix pipeline above except the tie rule.
    Intended for instances up to roughly 12 services, 6 topics and 6
    indicators.
    """
    _check_unique_ids(offers)

    kept = []
    for offer in offers:
        ok = len(offer.qos_offer) == len(profile.qos_min)
        for k in range(len(profile.qos_min)):
            if not profile.qos_min[k] <= offer.qos_offer[k]:
                ok = False
        if ok:
            kept.append(offer)

    services = tuple(o.service_id for o in kept)
    rows = []
    max_score = []
    selected: list[str | None] = []
    for j, topic in enumerate(profile.topics):
        row = []
        feasible: list[tuple[str, float]] = []
        for offer in kept:
            suitable = topic in offer.qoc_offer
            if suitable:
                for i in range(len(profile.qoc_min[j])):
                    level = offer.qoc_offer[topic][i]
                    if not 0.0 <= profile.qoc_min[j][i] <= level <= 1.0:
                        suitable = False
            total = 0.0
            if suitable:
                for i in range(len(profile.qoc_min[j])):
                    total += profile.weights[j][i] * offer.qoc_offer[topic][i]
                feasible.append((offer.service_id, total))
            row.append(total)
        rows.append(tuple(row))
        if feasible:
            best = feasible[0][1]
            for _, score in feasible:
                if score > best:
                    best = score
            tied = [sid for sid, score in feasible if score >= best - TIE_TOLERANCE]
            winner = tied[0]
            for sid in tied:
                if sid < winner:
                    winner = sid
            winner_score = 0.0
            for sid, score in feasible:
                if sid == winner:
                    winner_score = score
            selected.append(winner)
            max_score.append(winner_score)
        else:
            selected.append(None)
            max_score.append(0.0)
    return DecisionMatrix(
        topics=profile.topics,
        services=services,
        scores=tuple(rows),
        max_score=tuple(max_score),
        selected=tuple(selected),
    )
