"""Shared fixtures: canonical flow/reaction objects and an output sandbox."""

import numpy as np
import pytest

from quenchlab import CellularFlow, IgnitionReaction


@pytest.fixture(scope="session")
def default_reaction():
    return IgnitionReaction(theta0=0.25, M=1.0)


@pytest.fixture(scope="session")
def unit_flow():
    return CellularFlow(1.0)


@pytest.fixture()
def out_dir(tmp_path, monkeypatch):
    """Route CLI artifacts into the test's temp dir via the env override."""
    monkeypatch.setenv("QUENCHLAB_OUT", str(tmp_path))
    return tmp_path


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
