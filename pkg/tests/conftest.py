"""Shared fixtures: demo campus and small geometry helpers."""

import json

import pytest

from parkcast.geodata import load_campus
from parkcast.spatial import segment_roads
from parkcast.synth import fixture_campus_geojson


@pytest.fixture(scope="session")
def campus_doc() -> dict:
    return fixture_campus_geojson()


@pytest.fixture(scope="session")
def campus(campus_doc):
    return load_campus(json.dumps(campus_doc))


@pytest.fixture(scope="session")
def segments(campus):
    return segment_roads(campus)
