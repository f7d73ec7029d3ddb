"""Generator eigendecomposition and spectral calculus.

Provides the measure-symmetrized generator of the graph Dirichlet form, its
dense eigendecomposition, the heat semigroup, fractional powers by three
independent routes (spectral, singular-integral scalar rule, jump kernel),
killed (absorbed) semigroups on subdomains, and a binary cache format for
decompositions.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CacheError, NumericalError, QuadratureError, SizeLimitError, StructureError
from .graphs import FractalGraph

DEFAULT_MAX_DIM = 4000
DEFAULT_QUAD_NODES = 2000
DEFAULT_TAIL_TOL = 1e-12


def gamma_neg_abs(s: float) -> float:
    """|Gamma(-s)| for s in (0,1), via the reflection Gamma(-s) = -Gamma(1-s)/s."""
    return math.gamma(1.0 - s) / s


@dataclass(frozen=True)
class QuadratureSpec:
    """Log-grid for improper t-integrals: t = e^u on a uniform u-grid.

    ``tail_tol`` bounds the estimated contribution of the neglected tails;
    routines check it against integrand decay at the endpoints.
    """

    u_min: float
    u_max: float
    nodes: int = DEFAULT_QUAD_NODES
    tail_tol: float = DEFAULT_TAIL_TOL

    def __post_init__(self):
        if not (self.u_max > self.u_min):
            raise ValueError("u_max must exceed u_min")
        if self.nodes < 16:
            raise ValueError("need at least 16 quadrature nodes")

    def grid(self):
        u = np.linspace(self.u_min, self.u_max, self.nodes)
        w = np.full(self.nodes, u[1] - u[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return u, w

    @staticmethod
    def for_power(lam: float, s: float, nodes: int = DEFAULT_QUAD_NODES,
                  tail_tol: float = DEFAULT_TAIL_TOL) -> "QuadratureSpec":
        """Endpoints for the (1 - e^{-lam t}) t^{-1-s} integrand."""
        u_lo = (math.log(tail_tol * (1.0 - s)) - math.log(lam)) / (1.0 - s)
        u_hi = -math.log(tail_tol * s) / s
        return QuadratureSpec(u_lo, u_hi, nodes, tail_tol)


@dataclass(frozen=True)
class GeneratorOperator:
    """Measure-symmetrized generator S = -D^{1/2} M^{-1} L_c D^{-1/2}.

    Here L_c is the conductance Laplacian, M = diag(measure) and
    D^{1/2} = diag(sqrt(measure)); S is symmetric negative semidefinite with
    kernel spanned by sqrt(measure).
    """

    matrix: np.ndarray
    measure: np.ndarray

    def __post_init__(self):
        scale = max(np.abs(self.matrix).max(), 1.0)
        if np.abs(self.matrix - self.matrix.T).max() > 1e-12 * scale:
            raise StructureError("symmetrized generator is not symmetric")
        self.matrix.setflags(write=False)
        self.measure.setflags(write=False)

    @staticmethod
    def from_graph(graph: FractalGraph) -> "GeneratorOperator":
        lap = graph.conductance_laplacian().toarray()
        inv_sqrt = 1.0 / np.sqrt(graph.measure)
        s_mat = -(inv_sqrt[:, None] * lap * inv_sqrt[None, :])
        s_mat = 0.5 * (s_mat + s_mat.T)
        return GeneratorOperator(matrix=s_mat, measure=graph.measure.copy())

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply_generator(self, f: np.ndarray) -> np.ndarray:
        """Action of the (unsymmetrized) generator: mu^{-1} sum c_xy (f(y)-f(x))."""
        sqrt_m = np.sqrt(self.measure)
        return (self.matrix @ (sqrt_m * f)) / sqrt_m


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of the positive operator -L, measure-orthonormal modes.

    ``eigenvalues`` ascend with eigenvalues[0] = 0 for the full (Neumann)
    generator; ``modes[:, i]`` is the i-th eigenfunction, orthonormal in the
    measure-weighted inner product <f, g> = sum f g mu.  ``domain`` records
    vertex ids for killed (Dirichlet) decompositions on a subdomain.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    measure: np.ndarray
    domain: np.ndarray | None = None

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.modes.setflags(write=False)
        self.measure.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def project(self, f: np.ndarray) -> np.ndarray:
        """Coefficients <f, phi_i> in the measure-weighted inner product."""
        return self.modes.T @ (self.measure * f)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.modes @ coeffs


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    """First component of each eigenvector exceeding the noise floor is made positive."""
    out = modes.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        floor = 1e-12 * np.abs(col).max()
        idx = np.flatnonzero(np.abs(col) > floor)
        if idx.size and col[idx[0]] < 0:
            out[:, i] = -col
    return out


def eigendecompose(op: GeneratorOperator, max_dim: int = DEFAULT_MAX_DIM) -> SpectralDecomposition:
    """Full dense decomposition of -S, mapped back to measure-orthonormal modes."""
    if op.dim > max_dim:
        raise SizeLimitError(f"operator dimension {op.dim} exceeds the cap {max_dim}")
    try:
        vals, vecs = np.linalg.eigh(-op.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed to converge: {exc}") from exc
    vals = np.where(np.abs(vals) < 1e-12 * max(vals.max(), 1.0), 0.0, vals)
    modes = vecs / np.sqrt(op.measure)[:, None]
    modes = _fix_signs(modes)
    return SpectralDecomposition(eigenvalues=vals, modes=modes, measure=op.measure.copy())


def _symmetric_kernel(dec: SpectralDecomposition, weights: np.ndarray) -> np.ndarray:
    """sum_i weights_i phi_i(x) phi_i(y), exactly symmetric as computed."""
    b = dec.modes * np.sqrt(weights)[None, :]
    k = b @ b.T
    return 0.5 * (k + k.T)


def heat_matrix(dec: SpectralDecomposition, t: float) -> np.ndarray:
    """Heat kernel table p_t(x, y) (density w.r.t. the measure)."""
    if t <= 0:
        raise ValueError("heat kernel time must be positive")
    return _symmetric_kernel(dec, np.exp(-dec.eigenvalues * t))


def semigroup_apply(dec: SpectralDecomposition, t: float, f: np.ndarray) -> np.ndarray:
    """P_t f by spectral synthesis."""
    if t <= 0:
        raise ValueError("semigroup time must be positive")
    return dec.synthesize(np.exp(-dec.eigenvalues * t) * dec.project(f))


def _check_power_exponent(s: float, allow_one: bool) -> None:
    hi_ok = s <= 1.0 if allow_one else s < 1.0
    if not (0.0 < s and hi_ok):
        rng = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"exponent s={s} outside {rng}")


def fractional_apply(dec: SpectralDecomposition, s: float, f: np.ndarray) -> np.ndarray:
    """(-L)^s f = sum_i lambda_i^s <f, phi_i> phi_i, for s in (0, 1]."""
    _check_power_exponent(s, allow_one=True)
    return dec.synthesize(dec.eigenvalues**s * dec.project(f))


def fractional_matrix(dec: SpectralDecomposition, s: float) -> np.ndarray:
    """Dense matrix of (-L)^s acting on function vectors."""
    _check_power_exponent(s, allow_one=True)
    return (dec.modes * dec.eigenvalues**s) @ (dec.modes.T * dec.measure[None, :])


def fractional_energy_matrix(dec: SpectralDecomposition, s: float) -> np.ndarray:
    """Symmetric bilinear-form table B with E^(s)(u, v) = u^T B v."""
    _check_power_exponent(s, allow_one=True)
    weighted = dec.modes * dec.measure[:, None]
    return (weighted * dec.eigenvalues**s) @ weighted.T


def balakrishnan_power(lam: float, s: float, quad: QuadratureSpec | None = None) -> float:
    """lambda^s via the singular integral (1/|Gamma(-s)|) int (1-e^{-lam t}) t^{-1-s} dt."""
    _check_power_exponent(s, allow_one=False)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if quad is None:
        quad = QuadratureSpec.for_power(lam, s)
    u, w = quad.grid()
    lam_t = np.exp(np.minimum(u + math.log(lam), 700.0))
    g = -np.expm1(-lam_t) * np.exp(-s * u)
    norm = gamma_neg_abs(s)
    result = float((g * w).sum() / norm)
    tail = (g[0] / (1.0 - s) + g[-1] / s) / norm
    if tail > quad.tail_tol * max(1.0, abs(result)):
        raise QuadratureError(
            f"quadrature tails ({tail:.3e}) exceed tolerance {quad.tail_tol:.3e}",
            defect=tail,
        )
    return result


def _generator_action_matrix(dec: SpectralDecomposition) -> np.ndarray:
    """Matrix of the generator A (so that A f synthesizes -lambda coefficients)."""
    return (dec.modes * (-dec.eigenvalues)) @ (dec.modes.T * dec.measure[None, :])


def jump_kernel_matrix(dec: SpectralDecomposition, s: float,
                       quad: QuadratureSpec | None = None) -> np.ndarray:
    """Table K(x,y) = int_0^inf p_t(x,y) t^{-1-s} dt for x != y (diagonal set to 0).

    The integral is split at t0 = 1/(2 lambda_max): below t0 the heat kernel
    is summed as a Taylor series of the generator (avoiding the catastrophic
    cancellation of the spectral sum at small t), above t0 each eigenvalue
    gets a log-grid quadrature of e^{-lam t} t^{-1-s}.  On a compact graph
    the integral converges at infinity since p_t -> 1 and s > 0.
    """
    _check_power_exponent(s, allow_one=False)
    lam_max = float(dec.eigenvalues[-1])
    if lam_max <= 0:
        raise StructureError("jump kernel needs a graph with at least one nonzero mode")
    t0 = 0.5 / lam_max
    if quad is None:
        u_hi = -math.log(0.25 * s * DEFAULT_TAIL_TOL) / s
        quad = QuadratureSpec(math.log(t0), u_hi, DEFAULT_QUAD_NODES, DEFAULT_TAIL_TOL)

    n = dec.dim
    gen = _generator_action_matrix(dec)
    power = gen.copy()
    k_small = np.zeros((n, n))
    factorial = 1.0
    for k in range(1, 26):
        factorial *= k
        term = power * (t0 ** (k - s) / (factorial * (k - s)))
        k_small += term
        if np.abs(term).max() < 1e-18 * max(np.abs(k_small).max(), 1e-300):
            break
        power = power @ gen
    k_small = k_small / dec.measure[None, :]
    k_small = 0.5 * (k_small + k_small.T)

    u, w = quad.grid()
    lam = dec.eigenvalues[:, None]
    g = np.exp(-lam * np.exp(u)[None, :] - s * u[None, :])
    mode_weights = (g * w[None, :]).sum(axis=1)
    tail = float(g[0, -1] / s)
    if tail > quad.tail_tol:
        raise QuadratureError(
            f"jump-kernel upper tail ({tail:.3e}) exceeds tolerance {quad.tail_tol:.3e}",
            defect=tail,
        )
    k_quad = _symmetric_kernel(dec, mode_weights)
    kernel = k_small + k_quad
    np.fill_diagonal(kernel, 0.0)
    return kernel


def jump_kernel(dec: SpectralDecomposition, s: float, x: int, y: int,
                quad: QuadratureSpec | None = None) -> float:
    """Single off-diagonal jump-kernel entry; x == y is rejected."""
    if x == y:
        raise ValueError("jump kernel is defined for x != y")
    return float(jump_kernel_matrix(dec, s, quad)[x, y])


def jump_form_apply(dec: SpectralDecomposition, s: float, f: np.ndarray,
                    quad: QuadratureSpec | None = None) -> np.ndarray:
    """(-L)^s f through the jump representation.

    Returns, per vertex x, -(1/|Gamma(-s)|) sum_{y != x} K(x,y) (f(y) - f(x)) mu(y).
    """
    kernel = jump_kernel_matrix(dec, s, quad)
    mu = dec.measure
    weighted = kernel * mu[None, :]
    out = weighted @ f - weighted.sum(axis=1) * f
    return -out / gamma_neg_abs(s)


def killed_decomposition(op: GeneratorOperator, domain: Sequence[int],
                         max_dim: int = DEFAULT_MAX_DIM) -> SpectralDecomposition:
    """Decomposition of the generator restricted to a subdomain (absorbing outside).

    The domain must be a proper nonempty subset; all eigenvalues are strictly
    positive for a connected graph.
    """
    idx = np.asarray(sorted(set(int(v) for v in domain)), dtype=int)
    if idx.size == 0:
        raise StructureError("killed decomposition needs a nonempty domain")
    if idx.size >= op.dim:
        raise StructureError("killed decomposition needs a nonempty complement")
    if idx.size > max_dim:
        raise SizeLimitError(f"domain size {idx.size} exceeds the cap {max_dim}")
    sub = -op.matrix[np.ix_(idx, idx)]
    try:
        vals, vecs = np.linalg.eigh(sub)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed to converge: {exc}") from exc
    mu = op.measure[idx]
    modes = _fix_signs(vecs / np.sqrt(mu)[:, None])
    return SpectralDecomposition(eigenvalues=vals, modes=modes, measure=mu, domain=idx)


def super_mean_value_check(dec: SpectralDecomposition, u0: np.ndarray,
                           times: Sequence[float]) -> float:
    """Most negative entry of u(t) - P_{t-s} u(s) over ordered time pairs.

    ``u0`` evolves spectrally under the (killed) semigroup, so exact caloric
    evolutions return a value at roundoff scale (>= -1e-10 by contract).
    """
    ts = sorted(float(t) for t in times)
    coeffs = dec.project(np.asarray(u0, dtype=float))
    states = {t: dec.synthesize(np.exp(-dec.eigenvalues * t) * coeffs) for t in ts}
    worst = 0.0
    for a in range(len(ts)):
        for b in range(a + 1, len(ts)):
            s_t, t_t = ts[a], ts[b]
            evolved = semigroup_apply(dec, t_t - s_t, states[s_t])
            worst = min(worst, float((states[t_t] - evolved).min()))
    return worst


# ---------------------------------------------------------------------------
# Decomposition cache: magic "FRSPEC01", little-endian u64 dimension, n
# eigenvalues, n*n mode entries column-major (all little-endian f64), then a
# trailing FNV-1a 64-bit hash of everything after the magic.
# ---------------------------------------------------------------------------

_CACHE_MAGIC = b"FRSPEC01"
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash (sequential by definition; desk-scale payloads only)."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _FNV_MASK
    return h


def save_decomposition(path, dec: SpectralDecomposition) -> None:
    n = dec.dim
    payload = struct.pack("<Q", n)
    payload += dec.eigenvalues.astype("<f8").tobytes()
    payload += np.asfortranarray(dec.modes.astype("<f8")).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<Q", fnv1a64(payload)))


def load_decomposition(path, measure: np.ndarray) -> SpectralDecomposition:
    """Read a cached decomposition; the caller supplies the vertex measure."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_CACHE_MAGIC) + 16 or blob[: len(_CACHE_MAGIC)] != _CACHE_MAGIC:
        raise CacheError("not a decomposition cache file")
    payload, tail = blob[len(_CACHE_MAGIC) : -8], blob[-8:]
    (stored_hash,) = struct.unpack("<Q", tail)
    if fnv1a64(payload) != stored_hash:
        raise CacheError("decomposition cache failed its integrity check")
    (n,) = struct.unpack("<Q", payload[:8])
    need = 8 + 8 * n + 8 * n * n
    if len(payload) != need:
        raise CacheError("decomposition cache has inconsistent length")
    vals = np.frombuffer(payload, dtype="<f8", count=n, offset=8).copy()
    # C-contiguous layout so BLAS paths (and hence bit-level results) match a
    # freshly computed decomposition.
    modes = np.ascontiguousarray(
        np.frombuffer(payload, dtype="<f8", count=n * n, offset=8 + 8 * n)
        .reshape((n, n), order="F")
    )
    if measure.shape[0] != n:
        raise CacheError("cached dimension does not match the supplied measure")
    return SpectralDecomposition(eigenvalues=vals, modes=modes, measure=measure.copy())
