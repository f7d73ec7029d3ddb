"""Command-line driver for the toolkit.

Subcommands cover the pipeline stages (build, spectrum, heatkernel, fracpow,
extend, dirichlet, besov) and the verification suite (verify <check>,
verify-all, report).  Configuration comes from flags and/or a flat
``key = value`` file (flags win); eigendecompositions are cached on disk
keyed by a content hash of the graph.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 numerical failure.
Diagnostics go to stderr; machine-readable output goes to files and stdout.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks as C
from . import jsonout
from .dirichlet import (
    besov_norm,
    equivalence_ratio,
    export_solution_csv,
    fractional_energy,
    make_test_ensemble,
    parse_problem_file,
    solve_fractional_dirichlet,
    weak_solution_residual,
)
from .errors import FracliftError, NumericalError, QuadratureError, WindowError
from .extension import (
    build_ygrid,
    default_y_max,
    dtn,
    export_field_csv,
    poisson_extend,
    solve_extension_bvp,
)
from .graphs import FAMILIES, FractalSpec, build_fractal, decimation_ratios, export_csv, fitted_walk_dimension
from .spectral import (
    GeneratorOperator,
    balakrishnan_power,
    eigendecompose,
    fnv1a64,
    fractional_apply,
    heat_matrix,
    jump_form_apply,
    load_decomposition,
    save_decomposition,
)

CHECK_NAMES = (
    "decimation",
    "hke-diagonal",
    "triple",
    "dtn",
    "extension-bvp",
    "besov",
    "dirichlet",
    "lle",
    "oscillation",
    "phi",
    "harnack",
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_ENV_CACHE = "FRACLIFT_CACHE_DIR"


def _diag(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Configuration: flat "key = value" file, '#' comments, flags override.
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "family": str,
    "level": int,
    "s": str,
    "seed": int,
    "out": str,
    "cache_dir": str,
    "jobs": int,
    "checks": str,
    "ycells": int,
    "trials": int,
}


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _CONFIG_KEYS[key](val)
    return values


class RunConfig:
    """Resolved configuration for one invocation."""

    def __init__(self, args):
        file_vals = {}
        if getattr(args, "config", None):
            file_vals = parse_config_file(args.config)

        def pick(name, default):
            flag = getattr(args, name, None)
            if flag is not None:
                return flag
            return file_vals.get(name, default)

        self.family = pick("family", "interval")
        self.level = int(pick("level", 4))
        s_raw = pick("s", "0.5")
        self.s_values = [float(t) for t in str(s_raw).split(",") if t.strip()]
        self.seed = int(pick("seed", 0))
        self.out = Path(pick("out", "fraclift-out"))
        cache = pick("cache_dir", None)
        if cache is None:
            cache = os.environ.get(_ENV_CACHE, str(self.out / "cache"))
        self.cache_dir = Path(cache)
        self.jobs = int(pick("jobs", 1))
        self.ycells = int(pick("ycells", 24))
        self.trials = int(pick("trials", 50))
        checks_raw = pick("checks", ",".join(CHECK_NAMES))
        self.checks = [t.strip() for t in str(checks_raw).split(",") if t.strip()]

        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for s in self.s_values:
            if not (0.0 < s <= 1.0):
                raise ValueError(f"s value {s} outside (0, 1]")
        for name in self.checks:
            if name not in CHECK_NAMES:
                raise ValueError(
                    f"unknown check {name!r}; valid names: {', '.join(CHECK_NAMES)}"
                )


# ---------------------------------------------------------------------------
# Shared pipeline state with on-disk decomposition caching.
# ---------------------------------------------------------------------------


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._graphs = {}
        self._decs = {}

    def graph(self, family=None, level=None):
        family = family or self.cfg.family
        level = self.cfg.level if level is None else level
        key = (family, level)
        if key not in self._graphs:
            self._graphs[key] = build_fractal(FractalSpec(family, level))
        return self._graphs[key]

    def _cache_path(self, graph) -> Path:
        blob = (
            graph.coords.tobytes()
            + graph.edges.tobytes()
            + graph.conductance.tobytes()
            + graph.measure.tobytes()
        )
        tag = f"{fnv1a64(blob):016x}"
        return self.cfg.cache_dir / f"fraspec_{graph.family}{graph.level}_{tag}.bin"

    def decomposition(self, family=None, level=None):
        family = family or self.cfg.family
        level = self.cfg.level if level is None else level
        key = (family, level)
        if key in self._decs:
            return self._decs[key]
        graph = self.graph(family, level)
        op = GeneratorOperator.from_graph(graph)
        path = self._cache_path(graph)
        dec = None
        if path.exists():
            try:
                dec = load_decomposition(path, graph.measure)
            except FracliftError as exc:
                _diag(f"warning: cache {path.name} rejected ({exc}); rebuilding")
        if dec is None:
            dec = eigendecompose(op)
            self.cfg.cache_dir.mkdir(parents=True, exist_ok=True)
            save_decomposition(path, dec)
        self._decs[key] = dec
        return dec

    def operator(self, family=None, level=None):
        return GeneratorOperator.from_graph(self.graph(family, level))


def _input_function(pipe: Pipeline, args):
    """Resolve the input function for fracpow/extend/besov: eigenmode or CSV."""
    dec = pipe.decomposition()
    if getattr(args, "input", None):
        table = np.loadtxt(args.input, delimiter=",", skiprows=1)
        f = np.zeros(dec.dim)
        f[table[:, 0].astype(int)] = table[:, 1]
        return f
    mode = getattr(args, "mode", None)
    if mode is None:
        mode = 1
    return dec.modes[:, int(mode)].copy()


# ---------------------------------------------------------------------------
# Verification checks: each returns (parameters, statistics, passed).
# ---------------------------------------------------------------------------


def _check_decimation(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    ratios = decimation_ratios(cfg.family, cfg.level)
    dw_fit = fitted_walk_dimension(cfg.family, cfg.level)
    rel = abs(dw_fit - graph.dw) / graph.dw
    params = {"levels": [cfg.level, cfg.level + 1], "modes": 3}
    stats = {
        "ratios": list(ratios),
        "time_scale": graph.time_scale,
        "dw_fitted": dw_fit,
        "dw_stored": graph.dw,
        "dw_rel_dev": rel,
    }
    return params, stats, rel <= 0.02


def _check_hke_diagonal(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    dec = pipe.decomposition()
    rep = C.fit_on_diagonal(dec, graph, seed=cfg.seed)
    rel = abs(rep.on_diagonal_slope - rep.target_slope) / abs(rep.target_slope)
    stats = rep.to_dict()
    stats["slope_rel_dev"] = rel
    return {"window": list(rep.window)}, stats, rel <= 0.05


def _check_triple(pipe: Pipeline, s: float, cfg: RunConfig):
    dec = pipe.decomposition()
    lam = dec.eigenvalues[dec.eigenvalues > 0]
    bala_err = max(abs(balakrishnan_power(l, s) - l**s) for l in lam)
    rng = np.random.default_rng((cfg.seed, 17))
    worst = 0.0
    for _ in range(10):
        f = rng.standard_normal(dec.dim)
        spec = fractional_apply(dec, s, f)
        jump = jump_form_apply(dec, s, f)
        worst = max(worst, float(np.linalg.norm(spec - jump) / np.linalg.norm(spec)))
    stats = {"balakrishnan_max_err": bala_err, "jump_vs_spectral_rel": worst}
    return {"s": s, "functions": 10}, stats, bala_err <= 1e-8 and worst <= 1e-4


def _check_dtn(pipe: Pipeline, s: float, cfg: RunConfig):
    dec = pipe.decomposition()
    rng = np.random.default_rng((cfg.seed, 23))
    f = rng.standard_normal(dec.dim)
    target = fractional_apply(dec, s, f)
    scale = float(np.linalg.norm(target))
    rel_default = float(np.linalg.norm(dtn(dec, s, f, resolution=160) - target)) / scale
    err40 = float(np.linalg.norm(dtn(dec, s, f, resolution=40) - target)) / scale
    err80 = float(np.linalg.norm(dtn(dec, s, f, resolution=80) - target)) / scale
    ratio = err80 / max(err40, 1e-300)
    stats = {
        "rel_err_default": rel_default,
        "rel_err_40": err40,
        "rel_err_80": err80,
        "refinement_ratio": ratio,
    }
    return {"s": s, "resolution": 160}, stats, rel_default <= 1e-2 and ratio <= 0.6


def _check_extension_bvp(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    dec = pipe.decomposition()
    op = pipe.operator()
    rng = np.random.default_rng((cfg.seed, 31))
    f = dec.synthesize(rng.standard_normal(dec.dim) / (1.0 + dec.eigenvalues))
    gaps = {}
    from .extension import assemble_extended_operator

    for m_cells in (80, 160):
        ygrid = build_ygrid(s, default_y_max(dec), m_cells)
        ext_op = assemble_extended_operator(op, ygrid)
        field, _ = solve_extension_bvp(ext_op, dec, s, f)
        semi = poisson_extend(dec, s, f, ygrid)
        gaps[m_cells] = float(np.abs(field.values - semi.values).max())
    ratio = gaps[160] / max(gaps[80], 1e-300)
    stats = {"sup_gap_160": gaps[160], "sup_gap_80": gaps[80], "refinement_ratio": ratio}
    return {"s": s}, stats, gaps[160] <= 1e-2 and ratio <= 0.5


def _check_besov(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    dec = pipe.decomposition()
    ens = make_test_ensemble(dec, count=20, seed=cfg.seed)
    rep = equivalence_ratio(graph, dec, s, ens)
    stats = {
        "spread": rep.spread,
        "min_ratio": rep.min_ratio,
        "max_ratio": rep.max_ratio,
        "ensemble_size": len(ens),
    }
    return {"s": s, "alpha": graph.dh, "beta": s * graph.dw}, stats, rep.spread <= 50.0


def _check_dirichlet(pipe: Pipeline, s: float, cfg: RunConfig):
    from .dirichlet import DirichletProblem
    from .spectral import fractional_energy_matrix

    graph = pipe.graph()
    dec = pipe.decomposition()
    n = graph.n_vertices
    rng = np.random.default_rng((cfg.seed, 41))
    overshoot = 0.0
    worst_res = 0.0
    min_energy_slack = math.inf
    table = fractional_energy_matrix(dec, s)
    for _ in range(50):
        k = int(rng.integers(3, max(4, n - 3)))
        dom = rng.permutation(n)[:k]
        f = rng.random(n)
        problem = DirichletProblem(domain=dom, exterior=f, s=s)
        u = solve_fractional_dirichlet(graph, dec, problem)
        overshoot = max(overshoot, float(u.max()) - 1.0, float(-u.min()))
        worst_res = max(worst_res, weak_solution_residual(dec, s, u, dom))
        base = float(u @ (table @ u))
        for _ in range(1):
            v = np.zeros(n)
            v[dom] = rng.standard_normal(dom.size)
            pert = float((u + 1e-3 * v) @ (table @ (u + 1e-3 * v)))
            min_energy_slack = min(min_energy_slack, (pert - base) / max(base, 1e-300))
    stats = {
        "max_principle_overshoot": overshoot,
        "worst_residual": worst_res,
        "min_energy_slack": min_energy_slack,
    }
    ok = overshoot <= 1e-10 and min_energy_slack >= -1e-12
    return {"s": s, "problems": 50}, stats, ok


def _product_setup(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    dec = pipe.decomposition()
    op = pipe.operator()
    return graph, C.default_product_geometry(graph, op, dec, s, cells=cfg.ycells)


def _check_lle(pipe: Pipeline, s: float, cfg: RunConfig):
    graph, (ext_op, x0, y0, radius) = _product_setup(pipe, s, cfg)
    rep = C.lle_check(graph, ext_op, x0, y0, radius)
    ok = rep.passed and rep.eps_star is not None and rep.eps_star >= 0.05 and rep.c_star > 0
    return {"s": s, "radius": radius}, rep.to_dict(), ok


def _check_oscillation(pipe: Pipeline, s: float, cfg: RunConfig):
    graph, (ext_op, x0, y0, radius) = _product_setup(pipe, s, cfg)
    lle = C.lle_check(graph, ext_op, x0, y0, radius)
    if not lle.passed:
        return {"s": s}, lle.to_dict(), False
    delta = lle.eps_star**2 / math.sqrt(2.0)
    rep = C.oscillation_check(graph, ext_op, x0, y0, radius, delta,
                              trials=cfg.trials, seed=cfg.seed, jobs=cfg.jobs)
    return {"s": s, "delta": delta, "trials": cfg.trials}, rep.to_dict(), rep.passed


def _check_phi(pipe: Pipeline, s: float, cfg: RunConfig):
    graph, (ext_op, x0, y0, radius) = _product_setup(pipe, s, cfg)
    lle = C.lle_check(graph, ext_op, x0, y0, radius)
    if not lle.passed:
        return {"s": s}, lle.to_dict(), False
    rep = C.phi_check(graph, ext_op, x0, y0, radius, eps=lle.eps_star,
                      trials=max(30, cfg.trials // 2), seed=cfg.seed, jobs=cfg.jobs)
    return {"s": s, "eps": lle.eps_star, "eta": rep.eta}, rep.to_dict(), rep.passed


def _check_harnack(pipe: Pipeline, s: float, cfg: RunConfig):
    graph = pipe.graph()
    dec = pipe.decomposition()
    rep = C.harnack_holder_main(graph, dec, s, seed=cfg.seed)
    return {"s": s, "eta": 0.5}, rep.to_dict(), rep.passed


_CHECK_RUNNERS = {
    "decimation": _check_decimation,
    "hke-diagonal": _check_hke_diagonal,
    "triple": _check_triple,
    "dtn": _check_dtn,
    "extension-bvp": _check_extension_bvp,
    "besov": _check_besov,
    "dirichlet": _check_dirichlet,
    "lle": _check_lle,
    "oscillation": _check_oscillation,
    "phi": _check_phi,
    "harnack": _check_harnack,
}

_CHECK_CLAIMS = {
    "decimation": "per-level eigenvalue scaling matches the family time-scale factor",
    "hke-diagonal": "on-diagonal heat-kernel decay follows t^(-dh/dw) in the scaling window",
    "triple": "three fractional-power routes agree (spectral, singular-integral, jump)",
    "dtn": "normal-derivative trace reproduces the spectral fractional power",
    "extension-bvp": "variational extension agrees with the semi-analytic one and converges",
    "besov": "fractional energy is equivalent to the pairwise increment seminorm",
    "dirichlet": "exterior-value solver: maximum principle, residual, energy minimality",
    "lle": "killed product kernels admit a positive local lower bound",
    "oscillation": "oscillation contracts on shrinking anisotropic cylinders",
    "phi": "earlier-cylinder suprema are controlled by later-cylinder infima",
    "harnack": "nonnegative fractional-harmonic functions satisfy a Harnack bound with a Hoelder modulus",
}

_CHECKS_ONCE = {"decimation", "hke-diagonal"}  # independent of s


def run_check(pipe: Pipeline, name: str, cfg: RunConfig) -> list[dict]:
    """Execute one named check for every configured s; returns report dicts."""
    runner = _CHECK_RUNNERS[name]
    s_list = [cfg.s_values[0]] if name in _CHECKS_ONCE else cfg.s_values
    reports = []
    for s in s_list:
        t0 = time.perf_counter()
        try:
            params, stats, passed = runner(pipe, s, cfg)
        except WindowError as exc:
            params, stats, passed = {"s": s}, {"error": str(exc)}, False
        except QuadratureError as exc:
            params, stats, passed = {"s": s}, {"error": str(exc), "defect": exc.defect}, False
        reports.append(
            (
                {
                    "claim": _CHECK_CLAIMS[name],
                    "check": name,
                    "family": cfg.family,
                    "level": cfg.level,
                    "s": s,
                    "parameters": params,
                    "statistics": stats,
                    "seed": cfg.seed,
                    "pass": bool(passed),
                },
                time.perf_counter() - t0,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Subcommand implementations.
# ---------------------------------------------------------------------------


def _cmd_build(pipe: Pipeline, args, cfg: RunConfig) -> int:
    graph = pipe.graph()
    cfg.out.mkdir(parents=True, exist_ok=True)
    export_csv(graph, cfg.out / "vertices.csv", cfg.out / "edges.csv")
    _diag(f"built {cfg.family} level {cfg.level}: {graph.n_vertices} vertices, "
          f"{graph.n_edges} edges -> {cfg.out}")
    return EXIT_OK


def _cmd_spectrum(pipe: Pipeline, args, cfg: RunConfig) -> int:
    dec = pipe.decomposition()
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "eigenvalues.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,eigenvalue\n")
        for i, lam in enumerate(dec.eigenvalues):
            fh.write(f"{i},{lam:.17g}\n")
    _diag(f"wrote {path}")
    return EXIT_OK


def _cmd_heatkernel(pipe: Pipeline, args, cfg: RunConfig) -> int:
    dec = pipe.decomposition()
    t = args.t
    kernel = heat_matrix(dec, t)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / f"heatkernel_t{t:g}.csv"
    np.savetxt(path, kernel, delimiter=",", fmt="%.17g")
    _diag(f"wrote {path}")
    return EXIT_OK


def _cmd_fracpow(pipe: Pipeline, args, cfg: RunConfig) -> int:
    dec = pipe.decomposition()
    s = cfg.s_values[0]
    f = _input_function(pipe, args)
    out = fractional_apply(dec, s, f)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "fracpow.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("vertex_id,value\n")
        for i, v in enumerate(out):
            fh.write(f"{i},{v:.17g}\n")
    _diag(f"wrote {path}")
    return EXIT_OK


def _cmd_extend(pipe: Pipeline, args, cfg: RunConfig) -> int:
    dec = pipe.decomposition()
    s = cfg.s_values[0]
    if not (0.0 < s < 1.0):
        raise ValueError("extension needs s strictly inside (0, 1)")
    f = _input_function(pipe, args)
    ygrid = build_ygrid(s, default_y_max(dec), args.ycells or cfg.ycells)
    field = poisson_extend(dec, s, f, ygrid)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "extension.csv"
    export_field_csv(field, path)
    _diag(f"wrote {path}")
    return EXIT_OK


def _cmd_dirichlet(pipe: Pipeline, args, cfg: RunConfig) -> int:
    graph = pipe.graph()
    dec = pipe.decomposition()
    problem = parse_problem_file(args.problem, graph.n_vertices)
    u = solve_fractional_dirichlet(graph, dec, problem)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "solution.csv"
    export_solution_csv(path, u)
    _diag(f"wrote {path}")
    return EXIT_OK


def _cmd_besov(pipe: Pipeline, args, cfg: RunConfig) -> int:
    graph = pipe.graph()
    s = cfg.s_values[0]
    f = _input_function(pipe, args)
    rep = besov_norm(graph, f, graph.dh, s * graph.dw)
    dec = pipe.decomposition()
    energy = fractional_energy(dec, s, f)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "besov.csv", "w", encoding="utf-8") as fh:
        fh.write("r,D,normalized\n")
        for r, d in zip(rep.radii, rep.d_values):
            fh.write(f"{r:.17g},{d:.17g},{d / r ** (graph.dh + s * graph.dw):.17g}\n")
    jsonout.dump_file(
        cfg.out / "besov.json",
        {
            "seminorm": rep.seminorm,
            "max_radius": rep.max_radius,
            "fractional_energy": energy,
            "ratio": energy / rep.seminorm if rep.seminorm > 0 else None,
        },
    )
    _diag(f"wrote {cfg.out / 'besov.csv'} and besov.json")
    return EXIT_OK


def _run_checks(pipe: Pipeline, names, cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    index = []
    all_pass = True
    for name in names:
        _diag(f"running check {name} ...")
        for rep, elapsed in run_check(pipe, name, cfg):
            fname = f"{name}_s{rep['s']:g}.json" if name not in _CHECKS_ONCE else f"{name}.json"
            jsonout.dump_file(cfg.out / fname, rep)
            index.append({"check": name, "s": rep["s"], "file": fname, "pass": rep["pass"]})
            all_pass = all_pass and rep["pass"]
            _diag(f"  {name} (s={rep['s']:g}): {'pass' if rep['pass'] else 'FAIL'} "
                  f"[{elapsed:.1f}s]")
    jsonout.dump_file(
        cfg.out / "index.json",
        {
            "family": cfg.family,
            "level": cfg.level,
            "seed": cfg.seed,
            "runs": index,
            "all_pass": all_pass,
        },
    )
    _diag(f"index written to {cfg.out / 'index.json'}")
    return EXIT_OK if all_pass else EXIT_CHECK_FAILED


def _cmd_verify(pipe: Pipeline, args, cfg: RunConfig) -> int:
    return _run_checks(pipe, [args.check], cfg)


def _cmd_verify_all(pipe: Pipeline, args, cfg: RunConfig) -> int:
    return _run_checks(pipe, cfg.checks, cfg)


def _cmd_report(pipe: Pipeline, args, cfg: RunConfig) -> int:
    import json

    path = cfg.out / "index.json"
    if not path.exists():
        raise ValueError(f"no index at {path}; run verify-all first")
    with open(path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    print(f"family={index['family']} level={index['level']} seed={index['seed']}")
    for run in index["runs"]:
        print(f"{run['check']:>14} s={run['s']:<5g} {'pass' if run['pass'] else 'FAIL'}")
    print(f"overall: {'pass' if index['all_pass'] else 'FAIL'}")
    return EXIT_OK if index["all_pass"] else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--level", type=int)
    p.add_argument("--s", type=str, help="exponent(s), comma separated")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--cache-dir", dest="cache_dir", type=str)
    p.add_argument("--jobs", type=int)
    p.add_argument("--config", type=str, help="flat key = value configuration file")
    p.add_argument("--trials", type=int)
    p.add_argument("--ycells", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="fraclift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (
        ("build", _cmd_build),
        ("spectrum", _cmd_spectrum),
        ("heatkernel", _cmd_heatkernel),
        ("fracpow", _cmd_fracpow),
        ("extend", _cmd_extend),
        ("dirichlet", _cmd_dirichlet),
        ("besov", _cmd_besov),
        ("verify", _cmd_verify),
        ("verify-all", _cmd_verify_all),
        ("report", _cmd_report),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
        if name == "heatkernel":
            p.add_argument("--t", type=float, required=True)
        if name in ("fracpow", "extend", "besov"):
            p.add_argument("--mode", type=int, help="eigenmode index used as input")
            p.add_argument("--input", type=str, help="CSV (vertex_id,value) input function")
        if name == "dirichlet":
            p.add_argument("--problem", type=str, required=True)
        if name == "verify":
            p.add_argument("check", type=str)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or EXIT_USAGE)
    try:
        cfg = RunConfig(args)
        if args.command == "verify" and args.check not in CHECK_NAMES:
            _diag(f"unknown check {args.check!r}; valid names: {', '.join(CHECK_NAMES)}")
            return EXIT_USAGE
        pipe = Pipeline(cfg)
        return args.func(pipe, args, cfg)
    except (ValueError, FileNotFoundError) as exc:
        _diag(f"error: {exc}")
        return EXIT_USAGE
    except (NumericalError, QuadratureError) as exc:
        _diag(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except FracliftError as exc:
        _diag(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
