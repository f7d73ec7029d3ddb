"""Level-m graph approximations of self-similar fractals.

Three families are supported:

* ``gasket``   -- Sierpinski-type triangle built from 3 contractions of
  ratio 1/2 on a unit equilateral triangle,
* ``vicsek``   -- cross-shaped set built from 5 contractions of ratio 1/3
  on the unit square (4 corners + center),
* ``interval`` -- the unit interval as a control case with classical
  (Gaussian) scaling.

Each graph carries a self-similar probability measure, renormalized edge
conductances, the embedded shortest-path metric, and the dimension /
scaling constants of its family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import SizeLimitError, StructureError

FAMILIES = ("gasket", "vicsek", "interval")

#: Default per-family level caps keeping vertex counts at desk scale.
DEFAULT_MAX_LEVEL = {"gasket": 7, "vicsek": 5, "interval": 12}

# Family constants: Hausdorff dimension, walk dimension, per-level
# eigenvalue time-scale factor tau, conductance renormalization rho.
_FAMILY_CONSTANTS = {
    "gasket": {
        "dh": math.log(3) / math.log(2),
        "dw": math.log(5) / math.log(2),
        "time_scale": 5.0,
        "energy_renorm": 5.0 / 3.0,
        "contraction": 0.5,
    },
    "vicsek": {
        "dh": math.log(5) / math.log(3),
        "dw": math.log(15) / math.log(3),
        "time_scale": 15.0,
        "energy_renorm": 3.0,
        "contraction": 1.0 / 3.0,
    },
    "interval": {
        "dh": 1.0,
        "dw": 2.0,
        "time_scale": 4.0,
        "energy_renorm": 2.0,
        "contraction": 0.5,
    },
}


@dataclass(frozen=True)
class FractalSpec:
    """Family name plus approximation level."""

    family: str
    level: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.level < 0:
            raise ValueError("level must be a non-negative integer")


@dataclass(frozen=True)
class DoublingFit:
    """Fitted volume-doubling envelope: V(x,R) <= c_vd * V(y,r) * ((d(x,y)+R)/r)^gamma."""

    c_vd: float
    gamma: float


@dataclass(frozen=True)
class FractalGraph:
    """Immutable level-m approximation graph.

    ``coords`` are planar embedding coordinates, ``edges`` an (E, 2) array of
    vertex-id pairs with positive ``conductance`` per edge, and ``measure``
    the per-vertex mass of the self-similar probability measure.  The
    all-pairs shortest-path ``metric`` is computed lazily and cached.
    """

    family: str
    level: int
    coords: np.ndarray
    edges: np.ndarray
    conductance: np.ndarray
    measure: np.ndarray
    dh: float
    dw: float
    time_scale: float
    energy_renorm: float

    def __post_init__(self):
        for arr in (self.coords, self.edges, self.conductance, self.measure):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def metric(self) -> np.ndarray:
        """Symmetric all-pairs table of the embedded shortest-path metric."""
        return metric_table(self)

    @cached_property
    def diameter(self) -> float:
        return float(self.metric.max())

    def edge_lengths(self) -> np.ndarray:
        delta = self.coords[self.edges[:, 0]] - self.coords[self.edges[:, 1]]
        return np.hypot(delta[:, 0], delta[:, 1])

    def conductance_laplacian(self) -> sp.csr_matrix:
        """Sparse conductance Laplacian: (Lf)(x) = sum_y c_xy (f(x) - f(y))."""
        n = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        c = self.conductance
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-c, -c, c, c])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def laplacian_apply(self, f: np.ndarray) -> np.ndarray:
        """Edge-difference form (Lf)(x) = sum_y c_xy (f(x) - f(y)).

        Differences are taken before scaling, so constants map to exact zero.
        """
        i, j = self.edges[:, 0], self.edges[:, 1]
        flux = self.conductance * (f[i] - f[j])
        out = np.zeros(self.n_vertices)
        np.add.at(out, i, flux)
        np.add.at(out, j, -flux)
        return out

    def nearest_vertex(self, point) -> int:
        """Id of the vertex closest (Euclidean) to an embedding point."""
        d2 = ((self.coords - np.asarray(point, dtype=float)) ** 2).sum(axis=1)
        return int(np.argmin(d2))


def build_fractal(spec: FractalSpec, max_level: int | None = None) -> FractalGraph:
    """Construct the level-m approximation graph for a fractal family.

    Raises :class:`SizeLimitError` when ``spec.level`` exceeds the configured
    maximum (never silently truncates).
    """
    cap = DEFAULT_MAX_LEVEL[spec.family] if max_level is None else max_level
    if spec.level > cap:
        raise SizeLimitError(
            f"{spec.family} level {spec.level} exceeds the maximum {cap}"
        )
    if spec.family == "gasket":
        coords, edges, cond, mass = _build_gasket(spec.level)
    elif spec.family == "vicsek":
        coords, edges, cond, mass = _build_vicsek(spec.level)
    else:
        coords, edges, cond, mass = _build_interval(spec.level)
    consts = _FAMILY_CONSTANTS[spec.family]
    return FractalGraph(
        family=spec.family,
        level=spec.level,
        coords=coords,
        edges=edges,
        conductance=cond,
        measure=mass,
        dh=consts["dh"],
        dw=consts["dw"],
        time_scale=consts["time_scale"],
        energy_renorm=consts["energy_renorm"],
    )


def _assemble(vertex_keys, cells, cell_mass, conductance, to_xy):
    """Shared cell-list assembly: dedup vertices, order them lexicographically
    by embedding coordinates, accumulate masses and emit per-cell edges.

    ``vertex_keys`` maps integer keys to provisional indices; ``cells`` is a
    list of tuples of integer keys; ``to_xy`` embeds a key into the plane.
    Integer keys make duplicate detection exact (no tolerance needed).
    """
    keys = list(vertex_keys)
    coords = np.array([to_xy(k) for k in keys], dtype=float)
    order = np.lexsort((coords[:, 1], coords[:, 0]))
    rank = np.empty(len(keys), dtype=int)
    rank[order] = np.arange(len(keys))
    remap = {k: rank[i] for i, k in enumerate(keys)}
    coords = coords[order]

    n = len(keys)
    mass = np.zeros(n)
    edges = []
    per_vertex = cell_mass / len(cells[0])
    for cell in cells:
        ids = [remap[k] for k in cell]
        for v in ids:
            mass[v] += per_vertex
        edges.extend(_cell_edges(ids))
    edges = np.array(edges, dtype=int)
    edges.sort(axis=1)
    cond = np.full(len(edges), conductance)
    return coords, edges, cond, mass


def _cell_edges(ids):
    # Gasket cells are triangles (all pairs); vicsek cells are 4 corners +
    # center listed last (star edges only).
    if len(ids) == 3:
        return [(ids[0], ids[1]), (ids[0], ids[2]), (ids[1], ids[2])]
    center = ids[4]
    return [(ids[k], center) for k in range(4)]


def _build_gasket(m):
    # Cells tracked in integer barycentric coordinates at scale 2^m:
    # a vertex is (a, b, c) with a + b + c = 2^m, embedding
    # (b + c/2, c*sqrt(3)/2) / 2^m.  Midpoint subdivision stays integral.
    cells = [((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    for _ in range(m):
        nxt = []
        for a, b, c in cells:
            a2 = tuple(2 * t for t in a)
            b2 = tuple(2 * t for t in b)
            c2 = tuple(2 * t for t in c)
            ab = tuple(a[i] + b[i] for i in range(3))
            ac = tuple(a[i] + c[i] for i in range(3))
            bc = tuple(b[i] + c[i] for i in range(3))
            nxt.append((a2, ab, ac))
            nxt.append((ab, b2, bc))
            nxt.append((ac, bc, c2))
        cells = nxt
    scale = float(2**m)
    s3 = math.sqrt(3.0) / 2.0

    def to_xy(key):
        _, b, c = key
        return ((b + 0.5 * c) / scale, (c * s3) / scale)

    verts = {k for cell in cells for k in cell}
    rho_m = _FAMILY_CONSTANTS["gasket"]["energy_renorm"] ** m
    return _assemble(verts, cells, 3.0 ** (-m), rho_m, to_xy)


def _build_vicsek(m):
    # Cell origins tracked as integer pairs at scale 3^m; vertex keys at the
    # doubled scale 2*3^m so cell centers are integral as well.
    offsets = ((0, 0), (2, 0), (2, 2), (0, 2), (1, 1))
    origins = [(0, 0)]
    for _ in range(m):
        origins = [(3 * ox + tx, 3 * oy + ty) for ox, oy in origins for tx, ty in offsets]
    cells = []
    for ox, oy in origins:
        corners = [(2 * ox, 2 * oy), (2 * ox + 2, 2 * oy), (2 * ox + 2, 2 * oy + 2), (2 * ox, 2 * oy + 2)]
        center = (2 * ox + 1, 2 * oy + 1)
        cells.append(tuple(corners) + (center,))
    scale = 2.0 * 3**m

    def to_xy(key):
        return (key[0] / scale, key[1] / scale)

    verts = {k for cell in cells for k in cell}
    rho_m = _FAMILY_CONSTANTS["vicsek"]["energy_renorm"] ** m
    return _assemble(verts, cells, 5.0 ** (-m), rho_m, to_xy)


def _build_interval(m):
    n = 2**m + 1
    xs = np.arange(n) / 2**m
    coords = np.column_stack([xs, np.zeros(n)])
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    cond = np.full(n - 1, float(2**m))
    mass = np.full(n, 2.0 ** (-m))
    mass[0] = mass[-1] = 2.0 ** (-m - 1)
    return coords, edges, cond, mass


def metric_table(graph: FractalGraph) -> np.ndarray:
    """All-pairs shortest-path distances with Euclidean edge lengths.

    Raises :class:`StructureError` for a disconnected graph.
    """
    n = graph.n_vertices
    lengths = graph.edge_lengths()
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    w = sp.csr_matrix(
        (np.concatenate([lengths, lengths]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(n, n),
    )
    dist = dijkstra(w, directed=False)
    if not np.all(np.isfinite(dist)):
        raise StructureError("graph is disconnected: infinite shortest-path distances")
    # per-source path sums can differ in the last ulp by summation order
    return np.minimum(dist, dist.T)


def ball(graph: FractalGraph, center: int, r: float) -> np.ndarray:
    """Vertex ids of the open metric ball {y : d(center, y) < r}; r must be > 0."""
    if r <= 0:
        raise ValueError("ball radius must be positive")
    return np.flatnonzero(graph.metric[center] < r)


def volume(graph: FractalGraph, vertex_ids) -> float:
    """Total measure of a vertex set."""
    ids = np.asarray(vertex_ids, dtype=int)
    return float(graph.measure[ids].sum())


def sample_doubling_quadruples(graph: FractalGraph, count: int, seed: int) -> np.ndarray:
    """Seeded (x, y, r, R) samples with 0 < r <= R for the doubling fit."""
    rng = np.random.default_rng(seed)
    n = graph.n_vertices
    diam = graph.diameter
    r_floor = diam * 2.0 ** (-graph.level) if graph.level > 0 else diam / 4
    x = rng.integers(0, n, size=count)
    y = rng.integers(0, n, size=count)
    lo, hi = math.log(r_floor), math.log(1.5 * diam)
    r = np.exp(rng.uniform(lo, hi, size=count))
    big = np.exp(rng.uniform(lo, hi, size=count))
    r, big = np.minimum(r, big), np.maximum(r, big)
    return np.column_stack([x, y, r, big])


def fit_doubling(graph: FractalGraph, samples: np.ndarray) -> DoublingFit:
    """Smallest (c_vd, gamma) envelope on log-grids covering every sample.

    For each gamma the minimal admissible constant is the max over samples of
    V(x,R) / (V(y,r) ((d(x,y)+R)/r)^gamma); that constant is non-increasing in
    gamma, so the fit takes the smallest gamma whose constant is within 2% of
    the floor, then snaps the constant up to a log-grid bucket (>= 1).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 4:
        raise ValueError("samples must be an (N, 4) array of (x, y, r, R)")
    xs = samples[:, 0].astype(int)
    ys = samples[:, 1].astype(int)
    rs = samples[:, 2]
    bigs = samples[:, 3]
    if np.any(rs <= 0) or np.any(rs > bigs):
        raise ValueError("samples must satisfy 0 < r <= R")

    vol_big = np.array([volume(graph, ball(graph, x, R)) for x, R in zip(xs, bigs)])
    vol_small = np.array([volume(graph, ball(graph, y, r)) for y, r in zip(ys, rs)])
    base = (graph.metric[xs, ys] + bigs) / rs
    log_ratio = np.log(vol_big) - np.log(vol_small)
    log_base = np.log(base)

    gammas = np.exp(np.linspace(math.log(0.05), math.log(20.0), 240))
    # required log-constant per gamma: max over samples of log_ratio - g*log_base
    req = np.max(log_ratio[None, :] - gammas[:, None] * log_base[None, :], axis=1)
    req = np.maximum(req, 0.0)
    floor = req.min()
    ok = req <= floor + math.log(1.02)
    gamma = float(gammas[np.argmax(ok)])
    c_needed = math.exp(req[np.argmax(ok)])
    # snap up to the next bucket of the multiplicative grid 10^(k/50)
    step = math.log(10.0) / 50.0
    c_vd = math.exp(step * math.ceil(math.log(max(c_needed, 1.0)) / step - 1e-12))
    return DoublingFit(c_vd=max(c_vd, 1.0), gamma=gamma)


def ahlfors_deviation(graph: FractalGraph, centers, radii) -> float:
    """max |log mu(B(x,r)) - d_H log r| over the sampled (x, r) pairs."""
    worst = 0.0
    for x in centers:
        for r in radii:
            v = volume(graph, ball(graph, int(x), float(r)))
            if v <= 0:
                continue
            worst = max(worst, abs(math.log(v) - graph.dh * math.log(r)))
    return worst


def decimation_ratios(family: str, level: int, modes: int = 3, max_dim: int = 4000) -> np.ndarray:
    """Per-mode spectral decimation ratios between consecutive levels.

    Returns lambda_k(level) / lambda_k(level+1) for the lowest nonzero modes
    of the unrenormalized random-walk generator (unit conductances, degree
    weights); the limit is the family time-scale factor tau.
    """
    from scipy.linalg import eigh

    lows = []
    for lev in (level, level + 1):
        g = build_fractal(FractalSpec(family, lev))
        if g.n_vertices > max_dim:
            raise SizeLimitError(
                f"{family} level {lev} has {g.n_vertices} vertices > cap {max_dim}"
            )
        n = g.n_vertices
        i, j = g.edges[:, 0], g.edges[:, 1]
        ones = np.ones(len(i))
        adj = sp.csr_matrix(
            (np.concatenate([ones, ones]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        deg = np.asarray(adj.sum(axis=1)).ravel()
        lap = np.diag(deg) - adj.toarray()
        vals = eigh(lap, np.diag(deg), subset_by_index=[0, modes], eigvals_only=True)
        lows.append(np.sort(vals)[1 : modes + 1])
    return lows[0] / lows[1]


def fitted_walk_dimension(family: str, level: int, modes: int = 3) -> float:
    """Walk dimension log(tau_fit)/log(1/contraction) from the decimation fit."""
    tau_fit = float(np.mean(decimation_ratios(family, level, modes)))
    ratio = _FAMILY_CONSTANTS[family]["contraction"]
    return math.log(tau_fit) / math.log(1.0 / ratio)


def export_csv(graph: FractalGraph, vertices_path, edges_path) -> None:
    """Write vertices.csv (id,x,y,mass) and edges.csv (i,j,conductance)."""
    with open(vertices_path, "w", encoding="utf-8") as fh:
        fh.write("id,x,y,mass\n")
        for k in range(graph.n_vertices):
            fh.write(
                f"{k},{graph.coords[k, 0]:.17g},{graph.coords[k, 1]:.17g},{graph.measure[k]:.17g}\n"
            )
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("i,j,conductance\n")
        for k in range(graph.n_edges):
            fh.write(
                f"{graph.edges[k, 0]},{graph.edges[k, 1]},{graph.conductance[k]:.17g}\n"
            )
