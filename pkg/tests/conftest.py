import pytest

from zoomtower import (
    DoublingFamilyMap,
    build_base,
    build_induced_map,
    compute_source_zooming_data,
    find_periodic_points,
)
from zoomtower.tower import TowerMeasure, make_weights
from zoomtower.zooming import ZoomingContraction


@pytest.fixture(scope="session")
def doubling():
    return DoublingFamilyMap(2)


@pytest.fixture(scope="session")
def doubling_source(doubling):
    return next(o for o in find_periodic_points(doubling, 1) if o.classification == "source")


@pytest.fixture(scope="session")
def doubling_zooming(doubling, doubling_source):
    return compute_source_zooming_data(doubling, doubling_source)


@pytest.fixture(scope="session")
def doubling_induced(doubling, doubling_zooming):
    base = build_base(doubling, doubling_zooming, doubling_zooming.delta / 8)
    return build_induced_map(doubling, base, ZoomingContraction(1 / 8), 8)


@pytest.fixture(scope="session")
def doubling_weights(doubling_induced):
    return make_weights(doubling_induced, "geometric", 0.5)


@pytest.fixture(scope="session")
def doubling_tower(doubling_weights, doubling_induced):
    return TowerMeasure(doubling_weights, doubling_induced, 3)
