"""Eigendecomposition and spectral calculus.

Claims covered:
    - Neumann and Dirichlet path-graph spectra match their closed forms
    - modes are measure-orthonormal with tiny operator residuals
    - the heat semigroup is conservative, symmetric, and Chapman-Kolmogorov
    - fractional powers: spectral route, scalar singular-integral route, and
      jump-kernel route all agree within their contracts
    - killed decompositions are positive with domain-monotone ground energy
    - caloric evolutions satisfy the super-mean-value comparison
    - the binary decomposition cache round-trips bit-exactly and detects
      corruption
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclift.errors import CacheError, QuadratureError, SizeLimitError, StructureError
from fraclift.graphs import FractalSpec, build_fractal, ball
from fraclift.spectral import (
    GeneratorOperator,
    QuadratureSpec,
    SpectralDecomposition,
    balakrishnan_power,
    eigendecompose,
    fractional_apply,
    fractional_matrix,
    gamma_neg_abs,
    heat_matrix,
    jump_form_apply,
    jump_kernel,
    jump_kernel_matrix,
    killed_decomposition,
    load_decomposition,
    save_decomposition,
    semigroup_apply,
    super_mean_value_check,
)


def test_generator_shape_and_kernel(bundle):
    graph, op, _ = bundle("interval", 4)
    s_mat = op.matrix
    assert np.abs(s_mat - s_mat.T).max() <= 1e-12 * np.abs(s_mat).max()
    vals = np.linalg.eigvalsh(s_mat)
    assert vals.max() <= 1e-10  # negative semidefinite
    null = np.sqrt(graph.measure)
    assert np.abs(s_mat @ null).max() <= 1e-10


def test_neumann_closed_form(bundle):
    _, _, dec = bundle("interval", 3)
    h = 1.0 / 8.0
    k = np.arange(9)
    exact = 2.0 / h**2 * (1.0 - np.cos(k * math.pi / 8.0))
    assert np.abs(dec.eigenvalues - exact).max() <= 1e-10 * exact.max()


def test_constant_mode(bundle):
    for fam, lev in (("interval", 4), ("gasket", 2), ("vicsek", 1)):
        _, _, dec = bundle(fam, lev)
        assert dec.eigenvalues[0] <= 1e-10
        assert np.abs(dec.modes[:, 0] - 1.0).max() <= 1e-9


def test_orthonormality_and_residual(bundle):
    graph, op, dec = bundle("gasket", 3)
    gram = (dec.modes * graph.measure[:, None]).T @ dec.modes
    assert np.abs(gram - np.eye(dec.dim)).max() <= 1e-10
    for i in (0, 1, dec.dim // 2, dec.dim - 1):
        resid = -op.apply_generator(dec.modes[:, i]) - dec.eigenvalues[i] * dec.modes[:, i]
        assert np.abs(resid).max() <= 1e-9 * max(1.0, dec.eigenvalues[i])


def test_two_vertex_operator(two_point_graph):
    dec = eigendecompose(GeneratorOperator.from_graph(two_point_graph))
    assert dec.eigenvalues[0] == pytest.approx(0.0, abs=1e-12)
    assert dec.eigenvalues[1] == pytest.approx(4.0, rel=1e-12)


def test_sign_convention(bundle):
    _, _, dec = bundle("interval", 4)
    for i in range(dec.dim):
        col = dec.modes[:, i]
        lead = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
        assert lead > 0


def test_dimension_cap(bundle):
    _, op, _ = bundle("interval", 4)
    with pytest.raises(SizeLimitError):
        eigendecompose(op, max_dim=4)


def test_heat_conservative_and_symmetric(bundle):
    graph, _, dec = bundle("gasket", 2)
    for t in (1e-4, 1e-2, 1.0):
        p = heat_matrix(dec, t)
        assert np.array_equal(p, p.T)
        mass = p @ graph.measure
        assert np.abs(mass - 1.0).max() <= 1e-10


def test_heat_equilibrium(bundle):
    _, _, dec = bundle("interval", 4)
    t = 100.0 / dec.eigenvalues[1]
    p = heat_matrix(dec, t)
    assert np.abs(p - 1.0).max() <= 1e-8


def test_heat_chapman_kolmogorov(bundle):
    graph, _, dec = bundle("gasket", 2)
    t, s = 0.07, 0.028
    lhs = heat_matrix(dec, t + s)
    rhs = heat_matrix(dec, t) @ (graph.measure[:, None] * heat_matrix(dec, s))
    assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(lhs).max()


def test_heat_rejects_nonpositive_time(bundle):
    _, _, dec = bundle("interval", 3)
    with pytest.raises(ValueError):
        heat_matrix(dec, 0.0)
    with pytest.raises(ValueError):
        semigroup_apply(dec, -1.0, np.ones(dec.dim))


def test_fractional_basics(bundle):
    _, op, dec = bundle("interval", 4)
    const = np.full(dec.dim, 2.5)
    assert np.abs(fractional_apply(dec, 0.5, const)).max() <= 1e-10
    phi1 = dec.modes[:, 1]
    out = fractional_apply(dec, 0.3, phi1)
    assert np.abs(out - dec.eigenvalues[1] ** 0.3 * phi1).max() <= 1e-10 * dec.eigenvalues[1] ** 0.3
    rng = np.random.default_rng(0)
    f = rng.standard_normal(dec.dim)
    direct = -op.apply_generator(f)
    assert np.linalg.norm(fractional_apply(dec, 1.0, f) - direct) <= 1e-10 * np.linalg.norm(direct)
    with pytest.raises(ValueError):
        fractional_apply(dec, 1.2, f)
    with pytest.raises(ValueError):
        fractional_apply(dec, 0.0, f)


def test_fractional_matrix_semigroup_property(bundle):
    _, _, dec = bundle("gasket", 2)
    for s in (0.4, 0.9):
        half = fractional_matrix(dec, s / 2.0)
        whole = fractional_matrix(dec, s)
        assert np.abs(half @ half - whole).max() <= 1e-9 * np.abs(whole).max()


def test_balakrishnan_examples():
    assert balakrishnan_power(4.0, 0.5) == pytest.approx(2.0, abs=1e-8)
    for s in (0.2, 0.5, 0.8):
        assert balakrishnan_power(1.0, s) == pytest.approx(1.0, abs=1e-8)
    assert balakrishnan_power(3.0, 0.3) == pytest.approx(3.0**0.3, abs=1e-8)
    with pytest.raises(ValueError):
        balakrishnan_power(-1.0, 0.5)
    with pytest.raises(ValueError):
        balakrishnan_power(2.0, 1.0)


def test_balakrishnan_across_spectra(bundle):
    for fam, lev in (("interval", 4), ("gasket", 3)):
        _, _, dec = bundle(fam, lev)
        lams = dec.eigenvalues[dec.eigenvalues > 0]
        for s in (0.3, 0.5, 0.7):
            worst = max(abs(balakrishnan_power(l, s) - l**s) for l in lams)
            assert worst <= 1e-8


@settings(max_examples=40, deadline=None)
@given(
    st.floats(min_value=-3.0, max_value=4.0),
    st.floats(min_value=0.05, max_value=0.95),
)
def test_balakrishnan_matches_power(log10_lam, s):
    lam = 10.0**log10_lam
    assert abs(balakrishnan_power(lam, s) - lam**s) <= 1e-8 * max(1.0, lam**s)


def test_quadrature_tail_violation():
    # endpoints far too narrow for the integrand's tails
    bad = QuadratureSpec(u_min=-1.0, u_max=1.0, nodes=64, tail_tol=1e-12)
    with pytest.raises(QuadratureError):
        balakrishnan_power(2.0, 0.5, bad)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(1.0, 0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(0.0, 1.0, nodes=4)


def test_jump_kernel_symmetric_positive(bundle):
    _, _, dec = bundle("interval", 4)
    kern = jump_kernel_matrix(dec, 0.5)
    assert np.array_equal(kern, kern.T)
    off = kern + np.eye(dec.dim) * kern.max()
    assert off.min() > 0
    assert jump_kernel(dec, 0.5, 0, 3) == pytest.approx(kern[0, 3])
    with pytest.raises(ValueError):
        jump_kernel(dec, 0.5, 2, 2)


def test_jump_form_annihilates_constants(bundle):
    _, _, dec = bundle("interval", 4)
    out = jump_form_apply(dec, 0.4, np.full(dec.dim, 3.0))
    assert np.abs(out).max() <= 1e-9


@pytest.mark.parametrize("family,level", [("interval", 4), ("gasket", 3)])
@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_jump_matches_spectral(bundle, family, level, s):
    _, _, dec = bundle(family, level)
    rng = np.random.default_rng(7)
    for _ in range(10):
        f = rng.standard_normal(dec.dim)
        spec = fractional_apply(dec, s, f)
        jump = jump_form_apply(dec, s, f)
        assert np.linalg.norm(spec - jump) <= 1e-4 * np.linalg.norm(spec)


def test_gamma_neg_abs():
    # |Gamma(-1/2)| = 2 sqrt(pi)
    assert gamma_neg_abs(0.5) == pytest.approx(2.0 * math.sqrt(math.pi), rel=1e-14)


def test_killed_dirichlet_closed_form(bundle):
    _, op, _ = bundle("interval", 4)
    kd = killed_decomposition(op, range(1, 16))
    h = 1.0 / 16.0
    k = np.arange(1, 16)
    exact = 2.0 / h**2 * (1.0 - np.cos(k * math.pi / 16.0))
    assert np.abs(kd.eigenvalues - exact).max() <= 1e-10 * exact.max()


def test_killed_positive_and_monotone(bundle):
    graph, op, _ = bundle("gasket", 3)
    center = graph.nearest_vertex(graph.coords.mean(axis=0))
    small = ball(graph, center, 0.3)
    large = ball(graph, center, 0.6)
    lam_small = killed_decomposition(op, small).eigenvalues[0]
    lam_large = killed_decomposition(op, large).eigenvalues[0]
    assert lam_small > 0 and lam_large > 0
    assert lam_small >= lam_large


def test_killed_rejects_trivial_domains(bundle):
    _, op, _ = bundle("interval", 3)
    with pytest.raises(StructureError):
        killed_decomposition(op, [])
    with pytest.raises(StructureError):
        killed_decomposition(op, range(op.dim))


def test_super_mean_value(bundle):
    _, op, _ = bundle("interval", 4)
    kd = killed_decomposition(op, range(1, 16))
    times = [1e-3, 3e-3, 1e-2, 3e-2]
    # killed ground mode: semigroup composition is an identity
    psi1 = kd.modes[:, 0].copy()
    assert super_mean_value_check(kd, np.abs(psi1), times) >= -1e-10
    rng = np.random.default_rng(4)
    assert super_mean_value_check(kd, rng.random(kd.dim), times) >= -1e-10


def test_supercaloric_drift_has_slack(bundle):
    # v(t) = P_t u0 + eps*t lies strictly above its own evolved past
    _, op, _ = bundle("interval", 4)
    kd = killed_decomposition(op, range(1, 16))
    rng = np.random.default_rng(5)
    coeffs = kd.project(rng.random(kd.dim))
    eps = 1e-3
    s_t, t_t = 0.01, 0.03
    v_s = kd.synthesize(np.exp(-kd.eigenvalues * s_t) * coeffs) + eps * s_t
    v_t = kd.synthesize(np.exp(-kd.eigenvalues * t_t) * coeffs) + eps * t_t
    evolved = kd.synthesize(np.exp(-kd.eigenvalues * (t_t - s_t)) * kd.project(v_s))
    assert (v_t - evolved).min() >= eps * (t_t - s_t) * 0.999


def test_on_diagonal_decay_gasket(bundle):
    from fraclift.checks import fit_on_diagonal

    graph, _, dec = bundle("gasket", 5)
    rep = fit_on_diagonal(dec, graph)
    assert abs(rep.on_diagonal_slope - rep.target_slope) <= 0.05 * abs(rep.target_slope)


def test_cache_roundtrip(tmp_path, bundle):
    graph, _, dec = bundle("interval", 4)
    path = tmp_path / "dec.bin"
    save_decomposition(path, dec)
    loaded = load_decomposition(path, graph.measure)
    assert np.array_equal(loaded.eigenvalues, dec.eigenvalues)
    assert np.array_equal(loaded.modes, dec.modes)


def test_cache_detects_corruption(tmp_path, bundle):
    graph, _, dec = bundle("interval", 3)
    path = tmp_path / "dec.bin"
    save_decomposition(path, dec)
    blob = bytearray(path.read_bytes())
    blob[40] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(CacheError):
        load_decomposition(path, graph.measure)


def test_cache_rejects_wrong_magic(tmp_path, bundle):
    graph, _, _ = bundle("interval", 3)
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(CacheError):
        load_decomposition(path, graph.measure)


def test_cache_rejects_wrong_measure_length(tmp_path, bundle):
    graph, _, dec = bundle("interval", 3)
    path = tmp_path / "dec.bin"
    save_decomposition(path, dec)
    with pytest.raises(CacheError):
        load_decomposition(path, np.ones(4))
