import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomtower.config import (
    DEFAULTS,
    STAGES,
    ConfigError,
    DependencyError,
    ExperimentConfig,
    check_stages,
    load_shipped,
)


def minimal(**extra):
    doc = {"map": {"family": "doubling", "multiplier": 2}}
    doc.update(extra)
    return doc


@pytest.mark.parametrize("name", ["doubling-pipeline.json", "perturbed-example.json"])
def test_shipped_configs_validate(name):
    cfg = load_shipped(name)
    assert cfg.stages == list(STAGES)


def test_defaults_fill_in():
    cfg = ExperimentConfig.from_dict(minimal())
    assert cfg["induced"] == DEFAULTS["induced"]
    assert cfg.seed == 0


def test_round_trip():
    cfg = load_shipped()
    again = ExperimentConfig.loads(cfg.dumps())
    assert again.to_dict() == cfg.to_dict()
    assert json.loads(cfg.dumps()) == cfg.to_dict()


@pytest.mark.parametrize(
    "doc",
    [
        minimal(density={"eps": 0}),
        minimal(density={"eps": -0.1}),
        minimal(induced={"max_R": 0}),
        minimal(induced={"r_fraction": 0.25}),
        minimal(measures={"theta": 1.0}),
        minimal(measures={"family": "zipf"}),
        minimal(stats={"gate_correlations": "yes"}),
        minimal(induced={"bogus": 1}),
        minimal(bogus={}),
        minimal(seed=-1),
        minimal(seed=2**64),
        minimal(seed=True),
        {"map": {"family": "henon"}},
        {"stages": ["map"]},
    ],
)
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_not_json():
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("{not json")


def test_dependency_error_names_missing_stage():
    with pytest.raises(DependencyError) as e:
        check_stages(["map", "periodic", "source-zooming", "measures"])
    assert e.value.missing == ["induced"]
    assert "induced" in str(e.value)


@settings(max_examples=60)
@given(st.permutations(STAGES), st.integers(1, len(STAGES)))
def test_stage_lists(perm, n):
    stages = list(perm[:n])
    ok = stages == list(STAGES[:n])
    if ok:
        assert check_stages(stages) == stages
    else:
        with pytest.raises(ConfigError):
            check_stages(stages)


@settings(max_examples=60)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_eps_accepts_exactly_positive_values(eps):
    doc = minimal(density={"eps": eps})
    if eps > 0:
        assert ExperimentConfig.from_dict(doc)["density"]["eps"] == eps
    else:
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)
