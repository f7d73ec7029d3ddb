"""Fractal graph construction, metric, measure, and scaling fits.

Claims covered:
    - vertex/edge counts match the closed-form cell enumeration per family
    - the self-similar measure is an exact probability measure
    - the embedded shortest-path table is a genuine metric
    - conductance Laplacians annihilate constants exactly
    - metric balls carry Ahlfors-regular volume (slope and deviation bounds)
    - the doubling fit recovers the expected exponent
    - spectral decimation ratios recover the family time-scale factor
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclift.errors import SizeLimitError, StructureError
from fraclift.graphs import (
    DEFAULT_MAX_LEVEL,
    FractalSpec,
    ahlfors_deviation,
    ball,
    build_fractal,
    decimation_ratios,
    export_csv,
    fit_doubling,
    fitted_walk_dimension,
    metric_table,
    sample_doubling_quadruples,
    volume,
)


@pytest.mark.parametrize(
    "family,level,n_vertices,n_edges",
    [
        ("gasket", 2, 15, 27),
        ("gasket", 1, 6, 9),
        ("interval", 3, 9, 8),
        ("vicsek", 0, 5, 4),
        ("vicsek", 1, 21, 20),
    ],
)
def test_counts(family, level, n_vertices, n_edges):
    g = build_fractal(FractalSpec(family, level))
    assert g.n_vertices == n_vertices
    assert g.n_edges == n_edges


def test_gasket_count_closed_form():
    for m in range(0, 5):
        g = build_fractal(FractalSpec("gasket", m))
        assert g.n_vertices == (3 ** (m + 1) + 3) // 2
        assert g.n_edges == 3 ** (m + 1)


def test_level_cap_rejected():
    for family, cap in DEFAULT_MAX_LEVEL.items():
        with pytest.raises(SizeLimitError):
            build_fractal(FractalSpec(family, cap + 1))
    # explicit override keeps working
    g = build_fractal(FractalSpec("interval", 13), max_level=13)
    assert g.n_vertices == 2**13 + 1


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        FractalSpec("pentagon", 2)
    with pytest.raises(ValueError):
        FractalSpec("gasket", -1)


@pytest.mark.parametrize("family,level", [("gasket", 3), ("vicsek", 2), ("interval", 5)])
def test_measure_is_probability(family, level):
    g = build_fractal(FractalSpec(family, level))
    assert abs(g.measure.sum() - 1.0) <= 1e-12
    assert (g.measure > 0).all()


@pytest.mark.parametrize("family,level", [("gasket", 2), ("vicsek", 1), ("interval", 4)])
def test_metric_axioms(family, level):
    g = build_fractal(FractalSpec(family, level))
    d = g.metric
    assert np.allclose(np.diag(d), 0.0)
    assert np.array_equal(d, d.T)
    n = g.n_vertices
    rng = np.random.default_rng(0)
    for _ in range(200):
        i, j, k = rng.integers(0, n, 3)
        assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


def test_metric_examples():
    gi = build_fractal(FractalSpec("interval", 3))
    assert gi.metric[0, 8] == pytest.approx(1.0, abs=1e-15)
    gg = build_fractal(FractalSpec("gasket", 1))
    c1 = gg.nearest_vertex((0.0, 0.0))
    c2 = gg.nearest_vertex((1.0, 0.0))
    assert gg.metric[c1, c2] == pytest.approx(1.0, abs=1e-12)


def test_metric_rejects_disconnected():
    g = build_fractal(FractalSpec("interval", 2))
    broken = g.__class__(
        family=g.family,
        level=g.level,
        coords=g.coords.copy(),
        edges=g.edges[:-1].copy(),
        conductance=g.conductance[:-1].copy(),
        measure=g.measure.copy(),
        dh=g.dh,
        dw=g.dw,
        time_scale=g.time_scale,
        energy_renorm=g.energy_renorm,
    )
    with pytest.raises(StructureError):
        metric_table(broken)


@pytest.mark.parametrize("family,level", [("gasket", 3), ("vicsek", 2), ("interval", 6)])
def test_laplacian_annihilates_constants(family, level):
    g = build_fractal(FractalSpec(family, level))
    # difference form: every edge contributes c * (1 - 1) = 0, exactly
    out = g.laplacian_apply(np.full(g.n_vertices, 7.0))
    assert np.abs(out).max() == 0.0
    # assembled matrix agrees up to accumulation roundoff
    mat = g.conductance_laplacian() @ np.ones(g.n_vertices)
    assert np.abs(mat).max() <= 1e-12 * g.conductance.max()


def test_ball_and_volume_examples():
    g = build_fractal(FractalSpec("interval", 3))
    center = g.nearest_vertex((0.5, 0.0))
    ids = ball(g, center, 0.2)
    assert sorted(g.coords[ids, 0].tolist()) == pytest.approx([0.375, 0.5, 0.625])
    assert volume(g, ids) == pytest.approx(0.375, abs=1e-15)
    # radius beyond diameter captures everything
    assert volume(g, ball(g, 0, 2.0)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ball(g, 0, 0.0)


def test_gasket_volume_scaling_slope():
    g = build_fractal(FractalSpec("gasket", 4))
    x0 = g.nearest_vertex((0.0, 0.0))
    rs = np.exp(np.linspace(math.log(2.0**-3), math.log(2.0**-1), 12))
    vols = [volume(g, ball(g, x0, r)) for r in rs]
    design = np.vstack([np.log(rs), np.ones(len(rs))]).T
    slope = np.linalg.lstsq(design, np.log(vols), rcond=None)[0][0]
    assert abs(slope - g.dh) <= 0.10 * g.dh


def test_fit_doubling_interval():
    g = build_fractal(FractalSpec("interval", 6))
    samples = sample_doubling_quadruples(g, 150, seed=3)
    fit = fit_doubling(g, samples)
    assert abs(fit.gamma - 1.0) <= 0.15
    assert fit.c_vd >= 1.0
    _assert_doubling_envelope(g, samples, fit)


def test_fit_doubling_gasket():
    g = build_fractal(FractalSpec("gasket", 5))
    samples = sample_doubling_quadruples(g, 150, seed=3)
    fit = fit_doubling(g, samples)
    assert abs(fit.gamma - g.dh) <= 0.15 * g.dh
    _assert_doubling_envelope(g, samples, fit)


def _assert_doubling_envelope(g, samples, fit):
    # the fitted pair must dominate every sample
    for x, y, r, big in samples:
        v_big = volume(g, ball(g, int(x), big))
        v_small = volume(g, ball(g, int(y), r))
        bound = fit.c_vd * v_small * ((g.metric[int(x), int(y)] + big) / r) ** fit.gamma
        assert v_big <= bound * (1 + 1e-9)


def test_fit_doubling_degenerate_sample():
    g = build_fractal(FractalSpec("interval", 4))
    fit = fit_doubling(g, np.array([[2, 2, 0.3, 0.3]]))
    assert fit.c_vd == pytest.approx(1.0)


def test_fit_doubling_rejects_bad_samples():
    g = build_fractal(FractalSpec("interval", 3))
    with pytest.raises(ValueError):
        fit_doubling(g, np.array([[0, 0, 0.5, 0.2]]))  # r > R


def test_ahlfors_deviation_level_stable():
    rng = np.random.default_rng(1)
    devs = {}
    for m in (3, 5):
        g = build_fractal(FractalSpec("gasket", m))
        centers = rng.integers(0, g.n_vertices, 20)
        radii = np.exp(np.linspace(math.log(2.0**-m * 2), math.log(0.5), 8))
        devs[m] = ahlfors_deviation(g, centers, radii)
    assert devs[3] <= 3.0 and devs[5] <= 3.0
    assert abs(devs[5] - devs[3]) <= 0.75


@pytest.mark.parametrize(
    "family,level,tau,tol",
    [
        ("gasket", 4, 5.0, 0.02),
        ("vicsek", 3, 15.0, 0.05),
        ("interval", 5, 4.0, 0.02),
    ],
)
def test_decimation_ratios(family, level, tau, tol):
    ratios = decimation_ratios(family, level)
    assert ratios.shape == (3,)
    assert np.abs(ratios - tau).max() <= tol * tau


@pytest.mark.parametrize("family,level", [("gasket", 4), ("vicsek", 3), ("interval", 5)])
def test_fitted_walk_dimension(family, level):
    g = build_fractal(FractalSpec(family, level))
    assert abs(fitted_walk_dimension(family, level) - g.dw) <= 0.02 * g.dw


def test_walk_dimension_range():
    for family in ("gasket", "vicsek"):
        g = build_fractal(FractalSpec(family, 1))
        assert g.dw > 2.0
    assert build_fractal(FractalSpec("interval", 1)).dw == 2.0


def test_vertex_order_deterministic():
    a = build_fractal(FractalSpec("gasket", 3))
    b = build_fractal(FractalSpec("gasket", 3))
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.edges, b.edges)
    order = np.lexsort((a.coords[:, 1], a.coords[:, 0]))
    assert np.array_equal(order, np.arange(a.n_vertices))


def test_csv_export_roundtrip(tmp_path):
    g = build_fractal(FractalSpec("gasket", 2))
    vp, ep = tmp_path / "vertices.csv", tmp_path / "edges.csv"
    export_csv(g, vp, ep)
    vtab = np.loadtxt(vp, delimiter=",", skiprows=1)
    etab = np.loadtxt(ep, delimiter=",", skiprows=1)
    assert vtab.shape == (15, 4)
    assert etab.shape == (27, 3)
    assert np.array_equal(vtab[:, 1:3], g.coords)
    assert np.array_equal(vtab[:, 3], g.measure)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=8), st.integers(min_value=0, max_value=8))
def test_interval_metric_is_exact_lattice_distance(i, j):
    g = build_fractal(FractalSpec("interval", 3))
    assert g.metric[i, j] == pytest.approx(abs(i - j) / 8.0, abs=1e-15)
