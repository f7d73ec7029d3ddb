import numpy as np
import pytest

from fraclift.graphs import FractalSpec, build_fractal
from fraclift.spectral import GeneratorOperator, eigendecompose

_CACHE = {}


def _bundle(family, level):
    key = (family, level)
    if key not in _CACHE:
        graph = build_fractal(FractalSpec(family, level))
        op = GeneratorOperator.from_graph(graph)
        _CACHE[key] = (graph, op, eigendecompose(op))
    return _CACHE[key]


@pytest.fixture(scope="session")
def bundle():
    """Factory fixture: bundle('gasket', 3) -> (graph, operator, decomposition)."""
    return _bundle


@pytest.fixture(scope="session")
def two_point_graph():
    """Two vertices, unit conductance, masses (1/2, 1/2), distance 1."""
    from fraclift.graphs import FractalGraph

    coords = np.array([[0.0, 0.0], [1.0, 0.0]])
    edges = np.array([[0, 1]])
    return FractalGraph(
        family="interval",
        level=0,
        coords=coords,
        edges=edges,
        conductance=np.array([1.0]),
        measure=np.array([0.5, 0.5]),
        dh=1.0,
        dw=2.0,
        time_scale=4.0,
        energy_renorm=2.0,
    )
