"""Shared fixtures for the ssmc-lab test suite."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from ssmc_lab.core import ChainSpec
from ssmc_lab.sserw import ModelKind, SserwModel


@pytest.fixture
def flat_small() -> SserwModel:
    return SserwModel(ModelKind.FLAT, 2)


@pytest.fixture
def single_well_small() -> SserwModel:
    return SserwModel(ModelKind.SINGLE_WELL, 3)


@pytest.fixture
def looping_spec() -> ChainSpec:
    """Origin 0 and state 1 swap forever; target 2 is never reached."""
    def family(theta: float) -> np.ndarray:
        return np.array([
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ])

    return ChainSpec(n_states=3, origin=0, targets=frozenset({2}), transition_family=family, name="loop")


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to YAML and return its path."""
    def _write(data: dict, name: str = "experiment.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return _write
