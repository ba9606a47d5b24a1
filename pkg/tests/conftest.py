"""Shared fixtures: the worked threshold setup used across suites.

One consumer requires freshness >= 0.80 and probability-of-correctness
>= 0.93 on a location topic, plus availability >= 0.98 globally; three
services are arranged so exactly one clears every bar.
"""

from __future__ import annotations

import pytest

from ctxbroker.model import IndicatorCatalog, RequirementProfile, ServiceOffer


@pytest.fixture
def threshold_catalog() -> IndicatorCatalog:
    return IndicatorCatalog(
        qoc_indicators=("freshness", "correctness"),
        qos_indicators=("availability",),
    )


@pytest.fixture
def threshold_profile() -> RequirementProfile:
    return RequirementProfile(
        topics=("location",),
        qoc_min=((0.80, 0.93),),
        qos_min=(0.98,),
        weights=((1.0, 1.0),),
    )


def make_offer(service_id, freshness, correctness, availability, cloud_id="cloud-a"):
    return ServiceOffer(
        service_id=service_id,
        cloud_id=cloud_id,
        offered_topics=("location",),
        qoc_offer={"location": (freshness, correctness)},
        qos_offer=(availability,),
    )


@pytest.fixture
def threshold_offers() -> list[ServiceOffer]:
    return [
        make_offer("cs-conforming", 0.85, 0.95, 0.99),
        make_offer("cs-stale", 0.75, 0.95, 0.99),       # fails freshness
        make_offer("cs-flaky", 0.90, 0.97, 0.97),       # fails availability
    ]
