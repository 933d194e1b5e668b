"""Pytest fixtures for trotterbridge tests."""

import json
from pathlib import Path

import numpy as np
import pytest

from trotterbridge.spinchain_exact import Boundary, QuantumChainSpec
from trotterbridge.trotter_map import ClassicalLatticeSpec, map_tfim


@pytest.fixture
def small_chain():
    """Four-site periodic chain at J = B = 1, beta = 2."""
    return QuantumChainSpec(sites=4, coupling=1.0, field=1.0, beta=2.0)


@pytest.fixture
def open_chain():
    """Three-site open chain, off the self-dual point."""
    return QuantumChainSpec(sites=3, coupling=0.8, field=1.3, boundary=Boundary.OPEN, beta=1.5)


@pytest.fixture
def small_lattice(small_chain):
    """The four-site chain mapped with n = 4 (16 spins)."""
    return map_tfim(small_chain, 4)


@pytest.fixture
def random_lattice():
    """Factory for small lattices with couplings uniform in [-2, 2]."""

    def make(seed: int, columns: int, rows: int, boundary: str = "periodic") -> ClassicalLatticeSpec:
        rng = np.random.default_rng(seed)
        spatial, temporal = rng.uniform(-2.0, 2.0, size=2)
        return ClassicalLatticeSpec(
            columns=columns,
            rows=rows,
            spatial_coupling=float(spatial),
            temporal_coupling=float(temporal),
            boundary_space=boundary,
        )

    return make


@pytest.fixture
def config_file(tmp_path):
    """Write an experiment config and return its path."""

    def write(**overrides) -> Path:
        document = {
            "quantum": {"sites": 4, "coupling": 1.0, "field": 1.0, "beta": 2.0},
            "trotter_n": [8, 16],
            "methods": ["exact-quantum", "transfer-matrix"],
        }
        document.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return write
