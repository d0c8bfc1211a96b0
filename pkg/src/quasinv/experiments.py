"""Registered experiments: parameter schemas, runners and CSV layouts.

Each runner takes the resolved parameter map and the seed and returns an
:class:`Outcome` with its tables, the list of failed checks and plot jobs.
Tables are written by the CLI; floats are rendered with ``repr`` so that a
rerun with the same configuration produces byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from . import geodesics as geo
from . import harnack_models as hm
from . import heisenberg as hz
from . import kernel_duality as kd
from . import measure_core as mc
from . import plotting
from .errors import DegenerateEstimateError, InputError
from .mc import derive_seed

# ----------------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------------


def _to_int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _split(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


PARSERS: dict[str, Callable[[str], object]] = {
    "int": _to_int,
    "float": float,
    "str": str.strip,
    "bool": _to_bool,
    "ints": lambda s: [_to_int(v) for v in _split(s)],
    "floats": lambda s: [float(v) for v in _split(s)],
}


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    default: str
    help: str
    choices: tuple = ()

    def parse(self, text: str):
        try:
            value = PARSERS[self.kind](str(text))
        except (ValueError, OverflowError) as exc:
            raise InputError(f"--{self.name.replace('_', '-')}: {exc}") from None
        if self.choices and value not in self.choices:
            raise InputError(f"--{self.name.replace('_', '-')} must be one of {', '.join(self.choices)}")
        if self.kind in ("ints", "floats") and not value:
            raise InputError(f"--{self.name.replace('_', '-')} needs at least one value")
        return value


def format_value(value) -> str:
    """Canonical text form, parsed back to the same value by :data:`PARSERS`."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ----------------------------------------------------------------------------
# Outcomes
# ----------------------------------------------------------------------------


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Outcome:
    tables: list[Table] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    plots: list[Callable[[Path], object]] = field(default_factory=list)
    extra_files: list[Callable[[Path], object]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    params: tuple
    schemas: dict
    run: Callable[[dict, int], Outcome]

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise InputError(f"{self.name}: unknown parameter --{name.replace('_', '-')}")

    def defaults(self) -> dict:
        return {p.name: p.parse(p.default) for p in self.params}


REGISTRY: dict[str, Experiment] = {}


def experiment(name, summary, params, schemas):
    def register(fn):
        REGISTRY[name] = Experiment(name, summary, tuple(params), schemas, fn)
        return fn

    return register


def _z(est, target) -> float:
    if est.std_error == 0.0:
        return 0.0 if est.value == target else math.inf
    return (est.value - target) / est.std_error


# ----------------------------------------------------------------------------
# Gaussian measures
# ----------------------------------------------------------------------------


@experiment(
    "cameron-martin",
    "L^p norms of Gaussian shift densities: closed form against Monte Carlo",
    [
        Param("h_norm", "floats", "0,0.5,1,1.5", "shift norms |h|"),
        Param("p", "floats", "1.5,2,3,4", "exponents p > 1"),
        Param("samples", "int", "1000000", "Monte Carlo samples per cell"),
        Param("dim", "int", "4", "Gaussian dimension"),
        Param("method", "str", "tilted", "Monte Carlo estimator", ("tilted", "plain")),
    ],
    {"cameron_martin.csv": "h_norm,p,exact,estimate,std_error,z_score,within_3sigma"},
)
def _cameron_martin(P, seed):
    table = Table("cameron_martin", ["h_norm", "p", "exact", "estimate", "std_error", "z_score", "within_3sigma"])
    out = Outcome([table])
    for i, h in enumerate(P["h_norm"]):
        shift = mc.CameronMartinShift.along(h, P["dim"])
        for j, p in enumerate(P["p"]):
            exact = mc.lp_norm_exact(shift, p)
            est = mc.lp_norm_mc(shift, p, P["samples"], derive_seed(seed, i, j), P["method"])
            ok = est.within(exact)
            table.rows.append([h, p, exact, est.value, est.std_error, _z(est, exact), ok])
            if not ok:
                out.failures.append(f"|h|={h}, p={p}: estimate {est.value} not within 3 sigma of {exact}")

    def plot(path):
        series, ref = {}, {}
        for h in P["h_norm"]:
            rows = [r for r in table.rows if r[0] == h]
            series[f"|h|={h:g}"] = ([r[1] for r in rows], [r[3] for r in rows], [3 * r[4] for r in rows])
            ref[f"exact |h|={h:g}"] = ([r[1] for r in rows], [r[2] for r in rows])
        plotting.errorbar_series(path / "cameron_martin.svg", series, "p", "L^p norm", logy=True, reference=ref)

    out.plots.append(plot)
    return out


@experiment(
    "rotation-invariance",
    "Mixed moments of R X against X for a seeded random rotation R",
    [
        Param("dim", "int", "4", "dimension"),
        Param("samples", "int", "200000", "Monte Carlo samples"),
        Param("moment_order", "int", "4", "highest moment order (1..4)"),
    ],
    {"rotation_invariance.csv": "moment,discrepancy,std_error,z_score"},
)
def _rotation(P, seed):
    rot = mc.RotationMap.random(P["dim"], derive_seed(seed, 1))
    rep = mc.rotation_invariance_check(rot, P["samples"], seed, P["moment_order"])
    table = Table("rotation_invariance", ["moment", "discrepancy", "std_error", "z_score"])
    labels = []
    for idx, d, se in zip(rep.multi_indices, rep.discrepancies, rep.std_errors):
        label = "*".join(f"x{i}" for i in idx)
        labels.append(label)
        table.rows.append([label, float(d), float(se), 0.0 if d == 0 else float(d / se)])
    out = Outcome([table])
    if not rep.passed:
        out.failures.append(f"max |z| = {rep.max_z:.2f} above {rep.n_sigma}")
    out.plots.append(
        lambda path: plotting.bars(
            path / "rotation_invariance.svg", labels, [r[3] for r in table.rows], "z score", hline=(-4, 4)
        )
    )
    return out


@experiment(
    "cylinder-limit",
    "E[f(P_n W)] along increasing truncations n",
    [
        Param("function", "str", "tanh", "test function", tuple(mc.CYLINDER_FUNCTIONS)),
        Param("dims", "ints", "1,2,4,8,16,32,64", "truncation ranks n (increasing)"),
        Param("samples", "int", "100000", "Monte Carlo samples per replica"),
        Param("replicas", "int", "5", "seed replicas for the median successive difference"),
    ],
    {"cylinder_limit.csv": "n,estimate,std_error,diff_prev,diff_std_error,median_abs_diff"},
)
def _cylinder(P, seed):
    f = mc.CYLINDER_FUNCTIONS[P["function"]]
    tab = mc.cylinder_limit_check(f, P["dims"], P["samples"], seed, P["replicas"])
    table = Table("cylinder_limit", ["n", "estimate", "std_error", "diff_prev", "diff_std_error", "median_abs_diff"])
    nan = float("nan")
    for i, (n, e) in enumerate(zip(tab.dims, tab.estimates)):
        d = tab.diffs[i - 1] if i else nan
        dse = tab.diff_std_errors[i - 1] if i else nan
        med = tab.replica_median_diffs[i - 1] if i and tab.replica_median_diffs else nan
        table.rows.append([n, e.value, e.std_error, d, dse, med])
    out = Outcome([table])
    m = f.depends_on
    if m is not None and m <= tab.dims[-1] and not tab.cylinder_agreement(m):
        out.failures.append(f"estimates for n >= {m} disagree although f depends on {m} coordinates")
    out.plots.append(
        lambda path: plotting.errorbar_series(
            path / "cylinder_limit.svg",
            {f.name: (tab.dims, [e.value for e in tab.estimates], [3 * e.std_error for e in tab.estimates])},
            "n",
            "E f(P_n W)",
            logx=True,
        )
    )
    return out


@experiment(
    "uniform-bound",
    "Closed-form L^p norms of the projected shifts against the full-space bound",
    [
        Param("h", "floats", "1,0.5,0.25,0.125", "shift vector h"),
        Param("p", "float", "2", "exponent p > 1"),
        Param("dims", "ints", "1,2,3,4", "projection ranks n"),
    ],
    {"uniform_bound.csv": "n,value,bound,within_bound"},
)
def _uniform(P, seed):
    tab = mc.uniform_bound_check(P["h"], P["p"], P["dims"])
    table = Table("uniform_bound", ["n", "value", "bound", "within_bound"])
    for n, v in zip(tab.dims, tab.values):
        table.rows.append([n, v, tab.bound, v <= tab.bound])
    out = Outcome([table])
    if not tab.bounded:
        out.failures.append("a projected norm exceeds the bound")
    if not tab.monotone:
        out.failures.append("projected norms are not nondecreasing in n")
    return out


# ----------------------------------------------------------------------------
# Finite kernels
# ----------------------------------------------------------------------------


@experiment(
    "kernel-duality",
    "Wang constants against integrated Harnack norms on random finite kernels",
    [
        Param("states", "int", "10", "number of states m"),
        Param("p", "floats", "2", "exponents p > 1"),
        Param("trials", "int", "100000", "random-search test functions per case (0 = skip)"),
        Param("kernels", "int", "1", "number of random kernels"),
        Param("x", "int", "0", "state x"),
        Param("y", "int", "1", "state y"),
        Param("spread", "float", "1.0", "log-scale spread of the raw kernel entries"),
        Param("kernel_file", "str", "", "read a kernel from this file instead of drawing one"),
        Param("constant", "float", "0", "also certify this Wang constant (0 = skip)"),
        Param("save_kernels", "bool", "false", "write every kernel as kernel_<i>.csv"),
    ],
    {
        "kernel_duality.csv": "kernel,states,x,y,p,norm,extremal,abs_diff,search,search_ratio",
        "certificates.csv": "kernel,p,constant,certified,norm,witness_ratio",
    },
)
def _kernel_duality(P, seed):
    if P["kernel_file"]:
        kernels = [kd.read_kernel_csv(P["kernel_file"])]
    else:
        kernels = [kd.random_kernel(P["states"], derive_seed(seed, i), spread=P["spread"]) for i in range(P["kernels"])]
    x, y = P["x"], P["y"]
    table = Table(
        "kernel_duality",
        ["kernel", "states", "x", "y", "p", "norm", "extremal", "abs_diff", "search", "search_ratio"],
    )
    out = Outcome([table])
    certs = Table("certificates", ["kernel", "p", "constant", "certified", "norm", "witness_ratio"])
    for i, K in enumerate(kernels):
        for j, p in enumerate(P["p"]):
            norm = kd.integrated_harnack_norm(K, x, y, kd.conjugate(p))
            ext = kd.wang_constant_extremal(K, x, y, p)
            diff = abs(ext - norm)
            if P["trials"]:
                search = kd.wang_random_search(K, x, y, p, P["trials"], derive_seed(seed, i, j, 1))
            else:
                search = float("nan")
            table.rows.append([i, K.states, x, y, p, norm, ext, diff, search, search / norm])
            if not diff < 1e-10:
                out.failures.append(f"kernel {i}, p={p}: |extremal - norm| = {diff:.3g}")
            if search > norm + 1e-10:
                out.failures.append(f"kernel {i}, p={p}: random search {search} exceeds the norm {norm}")
            if P["constant"] > 0:
                c = kd.certify_wang(K, x, y, p, P["constant"])
                certs.rows.append([i, p, c.constant, c.certified, c.norm, c.witness_ratio or float("nan")])
    if certs.rows:
        out.tables.append(certs)
    if P["save_kernels"]:
        for i, K in enumerate(kernels):
            out.extra_files.append(lambda path, i=i, K=K: kd.write_kernel_csv(K, path / f"kernel_{i}.csv"))
    if P["trials"]:
        out.plots.append(
            lambda path: plotting.bars(
                path / "kernel_duality.svg",
                [f"k{r[0]} p={r[4]:g}" for r in table.rows],
                [r[9] for r in table.rows],
                "search / norm",
                hline=1.0,
            )
        )
    return out


# ----------------------------------------------------------------------------
# Heat kernels
# ----------------------------------------------------------------------------

HARNACK_HEADER = ["check", "kernel", "method", "dim", "t", "p", "d", "k", "lhs", "rhs", "margin", "rel_error"]


def _report_failures(out, reports):
    for r in reports:
        if not r.ok:
            out.failures.append(f"{r.check} ({r.kernel}) {r.params}: margin {r.margin:.3g}")


@experiment(
    "harnack-euclidean",
    "Integrated Harnack inequality on R^d (equality case): closed form and quadrature",
    [
        Param("dims", "ints", "1,2,3,4", "dimensions d"),
        Param("t", "floats", "0.1,1,10", "times t"),
        Param("p", "floats", "1.5,2,3,5", "exponents p"),
        Param("dist", "floats", "0,1,2,4", "distances |y - z|"),
        Param("quadrature", "bool", "true", "add quadrature rows for d = 1"),
    ],
    {"harnack_euclidean.csv": ",".join(HARNACK_HEADER)},
)
def _harnack_euclid(P, seed):
    table = Table("harnack_euclidean", HARNACK_HEADER)
    out = Outcome([table])
    reports = []
    for dim in P["dims"]:
        K = hm.EuclideanHeatKernel(dim)
        methods = ["closed"] + (["quadrature"] if P["quadrature"] and dim == 1 else [])
        for t in P["t"]:
            for p in P["p"]:
                for dist in P["dist"]:
                    z = np.zeros(dim)
                    y = np.full(dim, dist / math.sqrt(dim))
                    rep = hm.check_integrated_harnack(K, y, z, t, p)
                    for method in methods:
                        lhs = hm.integrated_harnack_lhs(K, y, z, t, p, method=method)
                        r = hm.HarnackReport(rep.check, rep.kernel, rep.params, lhs, rep.rhs, form=rep.form)
                        reports.append(r)
                        rel = abs(lhs / rep.rhs - 1.0)
                        table.rows.append(
                            [r.check, r.kernel, method, dim, t, p, rep.params["d"], 0.0, lhs, r.rhs, r.margin, rel]
                        )
                        tol = 1e-4 if method == "quadrature" else 1e-9
                        if rel > tol:
                            out.failures.append(f"{method} d={dim} t={t} p={p} |y-z|={dist}: relative error {rel:.3g}")
    _report_failures(out, reports)
    return out


@experiment(
    "harnack-torus",
    "Integrated Harnack inequality on a flat torus by quadrature",
    [
        Param("dim", "int", "1", "torus dimension"),
        Param("circumference", "floats", repr(2 * math.pi), "circumferences (one value is broadcast)"),
        Param("y", "floats", "0", "point y"),
        Param("z", "floats", repr(math.pi), "point z"),
        Param("t", "floats", "0.1,0.5,1,2", "times t"),
        Param("p", "floats", "1.5,2,3,5", "exponents p"),
        Param("states", "int", "0", "also compare with the m-state discretised kernel (1-d, 0 = skip)"),
    ],
    {
        "harnack_torus.csv": ",".join(HARNACK_HEADER),
        "torus_duality.csv": "t,p,lhs,discrete_norm,rel_diff",
    },
)
def _harnack_torus(P, seed):
    dim = P["dim"]
    L = P["circumference"] * dim if len(P["circumference"]) == 1 else P["circumference"]
    K = hm.TorusHeatKernel(dim, L)
    y, z = _broadcast(P["y"], dim, "y"), _broadcast(P["z"], dim, "z")
    table = Table("harnack_torus", HARNACK_HEADER)
    out = Outcome([table])
    for t in P["t"]:
        for p in P["p"]:
            r = hm.check_integrated_harnack(K, y, z, t, p)
            table.rows.append([r.check, r.kernel, "quadrature", dim, t, p, r.params["d"], 0.0, r.lhs, r.rhs, r.margin, float("nan")])
            if not r.ok:
                out.failures.append(f"torus t={t} p={p}: margin {r.margin:.3g} below tolerance")
    if P["states"]:
        out.tables.append(_torus_duality(K, y, z, P))
    return out


def _broadcast(values, dim, name):
    if len(values) == 1:
        return np.full(dim, values[0])
    if len(values) != dim:
        raise InputError(f"{name} must have 1 or {dim} coordinates")
    return np.array(values)


def _torus_duality(K, y, z, P):
    if K.dim != 1:
        raise InputError("the discretised cross-check needs a 1-d torus")
    m = P["states"]
    table = Table("torus_duality", ["t", "p", "lhs", "discrete_norm", "rel_diff"])
    for t in P["t"]:
        fk, grid = hm.discretize_torus(K, t, m)
        iy = int(np.argmin(np.abs(K.wrap(grid - y[0], 0))))
        iz = int(np.argmin(np.abs(K.wrap(grid - z[0], 0))))
        if not (np.isclose(grid[iy], y[0] % K.circumferences[0]) and np.isclose(grid[iz], z[0] % K.circumferences[0])):
            raise InputError("y and z must be grid points of the discretisation")
        for p in P["p"]:
            lhs = hm.integrated_harnack_lhs(K, y, z, t, p)
            disc = kd.integrated_harnack_norm(fk, iy, iz, p)
            table.rows.append([t, p, lhs, disc, abs(disc / lhs - 1.0)])
    return table


TEST_FUNCTIONS = ("one", "bump", "cosine")


def _test_function(name, y, width, kernel):
    if name == "one":
        return lambda X: np.ones(X.shape[:-1])
    if name == "bump":
        return lambda X: np.exp(-np.sum((X - y) ** 2, axis=-1) / (2.0 * width**2))
    L = kernel.circumferences[0] if isinstance(kernel, hm.TorusHeatKernel) else 2.0 * math.pi
    return lambda X: 1.0 + 0.5 * np.cos(2.0 * math.pi * X[..., 0] / L)


@experiment(
    "wang-check",
    "Wang's Harnack inequality with k = 0 on R^d or a flat torus",
    [
        Param("kernel", "str", "euclidean", "heat kernel", ("euclidean", "torus")),
        Param("dim", "int", "1", "dimension"),
        Param("circumference", "float", repr(2 * math.pi), "torus circumference (all axes)"),
        Param("function", "str", "bump", "test function f", TEST_FUNCTIONS),
        Param("width", "float", "0.5", "bump width"),
        Param("y", "floats", "0", "point y"),
        Param("z", "floats", "1", "point z"),
        Param("t", "floats", "0.5,1,2", "times t"),
        Param("p", "floats", "1.5,2,4", "exponents p"),
    ],
    {"wang_check.csv": "check,kernel,function,t,p,d,k,lhs,rhs,margin"},
)
def _wang(P, seed):
    dim = P["dim"]
    if P["kernel"] == "torus":
        K = hm.TorusHeatKernel(dim, [P["circumference"]] * dim)
    else:
        K = hm.EuclideanHeatKernel(dim)
    y, z = _broadcast(P["y"], dim, "y"), _broadcast(P["z"], dim, "z")
    f = _test_function(P["function"], y, P["width"], K)
    table = Table("wang_check", ["check", "kernel", "function", "t", "p", "d", "k", "lhs", "rhs", "margin"])
    out = Outcome([table])
    reports = []
    for t in P["t"]:
        for p in P["p"]:
            r = hm.check_wang(K, f, y, z, t, p)
            reports.append(r)
            table.rows.append([r.check, r.kernel, P["function"], t, p, r.params["d"], 0.0, r.lhs, r.rhs, r.margin])
    _report_failures(out, reports)
    return out


@experiment(
    "li-yau",
    "Li-Yau parabolic Harnack inequality (K = 0, Delta/2 generator) on random draws",
    [
        Param("dims", "ints", "1,2,3", "dimensions d"),
        Param("draws", "int", "10000", "random (x, y, z, t, s, alpha) draws per dimension"),
        Param("export_draws", "bool", "false", "write every draw to li_yau_draws.csv"),
    ],
    {
        "li_yau.csv": "dim,draws,min_margin,min_log_ratio,violations",
        "li_yau_draws.csv": "dim,t,s,alpha,d,lhs,rhs,margin",
    },
)
def _li_yau(P, seed):
    summary = Table("li_yau", ["dim", "draws", "min_margin", "min_log_ratio", "violations"])
    draws = Table("li_yau_draws", ["dim", "t", "s", "alpha", "d", "lhs", "rhs", "margin"])
    out = Outcome([summary])
    logs = {}
    for i, dim in enumerate(P["dims"]):
        reps = hm.li_yau_battery(dim, P["draws"], derive_seed(seed, i))
        log_ratio = [math.log(r.rhs) - math.log(r.lhs) for r in reps]
        logs[dim] = log_ratio
        bad = [r for r in reps if not r.ok]
        summary.rows.append([dim, len(reps), min(r.margin for r in reps), min(log_ratio), len(bad)])
        _report_failures(out, bad)
        if P["export_draws"]:
            for r in reps:
                q = r.params
                draws.rows.append([dim, q["t"], q["s"], q["alpha"], q["d"], r.lhs, r.rhs, r.margin])
    if P["export_draws"]:
        out.tables.append(draws)

    def plot(path):
        dim = P["dims"][-1]
        plotting.histogram(path / "li_yau.svg", logs[dim], f"log(rhs/lhs), d={dim}")

    out.plots.append(plot)
    return out


# ----------------------------------------------------------------------------
# Heisenberg-like groups
# ----------------------------------------------------------------------------

GROUP_PARAMS = [
    Param("w_dim", "int", "2", "horizontal dimension"),
    Param("c_dim", "int", "1", "center dimension"),
    Param("group_seed", "int", "0", "seed for a random skew form (unused for the 3-d group)"),
]


def _group(P) -> hz.HeisenbergLikeGroup:
    if (P["w_dim"], P["c_dim"]) == (2, 1):
        return hz.HeisenbergLikeGroup.heisenberg3()
    return hz.HeisenbergLikeGroup.random(P["w_dim"], P["c_dim"], P["group_seed"])


def _levy_variance(group, t) -> np.ndarray:
    """``Var(omega-area)_k = t^2/8 sum_ij Omega_ijk^2`` (Ito isometry)."""
    return t * t / 8.0 * np.sum(group.omega_tensor**2, axis=(0, 1))


def _moment_row(out, table, t, horizontal, name, est, expected):
    z = _z(est, expected)
    ok = abs(z) <= 3.0
    table.rows.append([t, horizontal, name, est.value, est.std_error, expected, z, ok])
    if not ok:
        out.failures.append(f"t={t} {name}: {est.value} vs {expected} (z = {z:.2f})")


MOMENT_HEADER = ["t", "horizontal", "quantity", "estimate", "std_error", "expected", "z_score", "within_3sigma"]


@experiment(
    "heisenberg-bm",
    "Brownian motion on a step-2 group: coordinate variances and center skewness",
    GROUP_PARAMS
    + [
        Param("t", "floats", "0.5,1,2", "times t"),
        Param("samples", "int", "100000", "paths per time"),
        Param("steps", "int", "1000", "Euler steps per path"),
        Param("horizontal", "bool", "false", "drop the independent center Brownian motion"),
        Param("export_pool", "bool", "false", "write each sample pool as pool_<i>.csv"),
    ],
    {"heisenberg_bm.csv": ",".join(MOMENT_HEADER), "pool_<i>.csv": "sample,w_0,...,c_0,..."},
)
def _heisenberg_bm(P, seed):
    group = _group(P)
    table = Table("heisenberg_bm", MOMENT_HEADER)
    out = Outcome([table])
    hor = P["horizontal"]
    pools = []
    for i, t in enumerate(P["t"]):
        pool = hz.heat_kernel_mc(group, t, P["samples"], P["steps"], derive_seed(seed, i), hor)
        pools.append(pool)
        for j in range(group.w_dim):
            _moment_row(out, table, t, hor, f"var_w_{j}", pool.w_variance(j), t)
        levy = _levy_variance(group, t)
        for k in range(group.c_dim):
            _moment_row(out, table, t, hor, f"var_c_{k}", pool.c_variance(k), levy[k] + (0.0 if hor else t))
            _moment_row(out, table, t, hor, f"skew_c_{k}", pool.c_skewness(k), 0.0)
        if P["export_pool"]:
            out.extra_files.append(lambda path, i=i, pool=pool: pool.to_csv(path / f"pool_{i}.csv"))

    def plot(path):
        pool = pools[-1]
        plotting.histogram(path / "heisenberg_bm.svg", pool.points[:, group.w_dim], f"c_0 at t={P['t'][-1]:g}")

    out.plots.append(plot)
    return out


@experiment(
    "levy-area",
    "Horizontal Brownian motion: Levy-area variance t^2/4 and step refinement",
    GROUP_PARAMS
    + [
        Param("t", "floats", "0.5,1,2", "times t"),
        Param("samples", "int", "100000", "paths per time"),
        Param("steps", "int", "1000", "Euler steps per path"),
        Param("refine", "bool", "true", "rerun with twice the steps on an independent stream"),
    ],
    {
        "levy_area.csv": ",".join(MOMENT_HEADER),
        "step_refinement.csv": "t,steps,variance,steps_fine,variance_fine,diff,combined_se,within_2se",
    },
)
def _levy(P, seed):
    group = _group(P)
    table = Table("levy_area", MOMENT_HEADER)
    refine = Table(
        "step_refinement", ["t", "steps", "variance", "steps_fine", "variance_fine", "diff", "combined_se", "within_2se"]
    )
    out = Outcome([table])
    for i, t in enumerate(P["t"]):
        pool = hz.heat_kernel_mc(group, t, P["samples"], P["steps"], derive_seed(seed, i), True)
        levy = _levy_variance(group, t)
        for k in range(group.c_dim):
            _moment_row(out, table, t, True, f"var_c_{k}", pool.c_variance(k), levy[k])
        if P["refine"]:
            fine = hz.heat_kernel_mc(group, t, P["samples"], 2 * P["steps"], derive_seed(seed, i, 1), True)
            for k in range(group.c_dim):
                a, b = pool.c_variance(k), fine.c_variance(k)
                se = math.hypot(a.std_error, b.std_error)
                diff = b.value - a.value
                refine.rows.append([t, P["steps"], a.value, 2 * P["steps"], b.value, diff, se, abs(diff) <= 2 * se])
    if refine.rows:
        out.tables.append(refine)

    def plot(path):
        rows = [r for r in table.rows if r[2] == "var_c_0"]
        ts = [r[0] for r in rows]
        tt = np.linspace(0, max(ts), 100)
        plotting.errorbar_series(
            path / "levy_area.svg",
            {"simulated": (ts, [r[3] for r in rows], [3 * r[4] for r in rows])},
            "t",
            "Var(c_0)",
            reference={"expected": (tt, _levy_variance(group, 1.0)[0] * tt**2)},
        )

    out.plots.append(plot)
    return out


def _shift_elements(group, s_values, direction):
    direction = np.asarray(direction, dtype=float)
    if direction.size != group.w_dim + group.c_dim:
        raise InputError(f"direction needs {group.w_dim + group.c_dim} coordinates (w then c)")
    if not np.any(direction):
        raise InputError("direction must be nonzero")
    return [group.element(s * direction[: group.w_dim], s * direction[group.w_dim :]) for s in s_values]


@experiment(
    "rn-ratio",
    "KDE estimate of the L^p norm of the translation density of the heat kernel measure",
    GROUP_PARAMS
    + [
        Param("t", "float", "1", "time t"),
        Param("p", "float", "2", "exponent p > 1"),
        Param("s", "floats", "0.25,0.5,1", "shift sizes along the direction"),
        Param("direction", "floats", "1,0,0", "shift direction (w then c coordinates)"),
        Param("samples", "int", "20000", "pool size (half builds the KDE, half evaluates)"),
        Param("steps", "int", "200", "Euler steps per path"),
        Param("bandwidth", "float", "0", "KDE bandwidth in standardised units (0 = default)"),
        Param("horizontal", "bool", "false", "use the horizontal heat kernel measure"),
    ],
    {"rn_ratio.csv": "s,target_w_0,...,target_c_0,...,estimate,std_error,bandwidth,ess"},
)
def _rn_ratio(P, seed):
    group = _group(P)
    shifts = _shift_elements(group, P["s"], P["direction"])
    pool = hz.heat_kernel_mc(group, P["t"], P["samples"], P["steps"], seed, P["horizontal"])
    est = hz.RatioEstimator(group, pool, P["bandwidth"] or None)
    header = ["s"] + geo.distance_header(group)[: group.w_dim + group.c_dim] + ["estimate", "std_error", "bandwidth", "ess"]
    table = Table("rn_ratio", header)
    out = Outcome([table])
    for s, k in zip(P["s"], shifts):
        r = est.estimate(k, P["p"])
        e = r.lp_estimate
        table.rows.append([s] + [float(v) for v in k.as_vector()] + [e.value, e.std_error, r.bandwidth, r.ess])
    return out


@experiment(
    "bound-fit",
    "Regression of log L^p-norm estimates on squared distance over seeded replicas",
    GROUP_PARAMS
    + [
        Param("t", "float", "1", "time t"),
        Param("p", "float", "2", "exponent p > 1"),
        Param("s", "floats", "0.25,0.6,0.95,1.3,1.65,2", "shift sizes (at least 6)"),
        Param("direction", "floats", "1,0,0", "shift direction (w then c coordinates)"),
        Param("samples", "int", "20000", "pool size per replica"),
        Param("steps", "int", "200", "Euler steps per path"),
        Param("replicas", "int", "10", "independent seed replicas"),
        Param("bandwidth", "float", "0", "KDE bandwidth in standardised units (0 = default)"),
        Param("horizontal", "bool", "false", "horizontal measure and horizontal distance"),
        Param("nodes", "int", "32", "path nodes for the distance computation"),
    ],
    {
        "bound_fit.csv": "replica,t,p,n_shifts,slope,slope_stderr,intercept,intercept_stderr,r2,status",
        "bound_fit_points.csv": "replica,s,distance,distance_sq,estimate,std_error",
    },
)
def _bound_fit(P, seed):
    group = _group(P)
    shifts = _shift_elements(group, P["s"], P["direction"])
    fn = geo.cc_distance if P["horizontal"] else geo.riemannian_distance
    distances = [fn(group, k, nodes=P["nodes"], starts=5, seed=seed).distance for k in shifts]
    fits = Table(
        "bound_fit",
        ["replica", "t", "p", "n_shifts", "slope", "slope_stderr", "intercept", "intercept_stderr", "r2", "status"],
    )
    points = Table("bound_fit_points", ["replica", "s", "distance", "distance_sq", "estimate", "std_error"])
    out = Outcome([fits, points])
    nan = float("nan")
    accepted = 0
    reports = []
    for r, rs in enumerate(hz.replica_seeds(seed, P["replicas"])):
        try:
            rep = hz.bound_shape_fit(
                group, P["t"], P["p"], shifts,
                samples=P["samples"], seed=rs, steps=P["steps"], horizontal=P["horizontal"],
                bandwidth=P["bandwidth"] or None, distances=distances,
            )
        except DegenerateEstimateError:
            fits.rows.append([r, P["t"], P["p"], len(shifts), nan, nan, nan, nan, nan, "degenerate"])
            continue
        reports.append(rep)
        accepted += rep.accepted
        fits.rows.append(
            [r, rep.t, rep.p, rep.n_shifts, rep.slope, rep.slope_stderr, rep.intercept, rep.intercept_stderr, rep.r2,
             "accepted" if rep.accepted else "rejected"]
        )
        for s, d, e in zip(P["s"], rep.distances, rep.estimates):
            points.rows.append([r, s, d, d * d, e.value, e.std_error])
    if accepted < 0.8 * P["replicas"]:
        out.failures.append(f"only {accepted} of {P['replicas']} replicas meet R^2 >= 0.9 with intercept within 3 sigma")

    def plot(path):
        if not reports:
            return
        d2 = np.square(reports[0].distances)
        y = [math.log(e.value) for e in reports[0].estimates]
        err = [e.std_error / e.value for e in reports[0].estimates]
        plotting.scatter_fit(
            path / "bound_fit.svg", d2, y, err,
            [(rep.slope, rep.intercept, f"fit, replica {i}") for i, rep in enumerate(reports[:1])],
            "d(e,k)^2", "log ||J_k||_p estimate",
        )

    out.plots.append(plot)
    return out


def _distance_experiment(P, seed, horizontal):
    group = _group(P)
    target = np.asarray(P["target"], dtype=float)
    if target.size != group.w_dim + group.c_dim:
        raise InputError(f"target needs {group.w_dim + group.c_dim} coordinates (w then c)")
    g = group.element(target[: group.w_dim], target[group.w_dim :])
    metric = geo.MetricSpec(P["w_weight"], P.get("c_weight", 1.0))
    if horizontal:
        res = geo.cc_distance(group, g, metric, P["nodes"], P["starts"], seed)
    else:
        res = geo.riemannian_distance(group, g, metric, P["nodes"], P["starts"], seed)
    name = "cc_distance" if horizontal else "riemannian_distance"
    table = Table(name, geo.distance_header(group), [res.row()])
    out = Outcome([table])
    out.extra_files.append(lambda path: res.path.to_csv(path / "path.csv"))
    if not res.converged:
        out.warnings.append(f"optimiser stopped early on the best start ({res.best_start}); distance is the best found")
    out.plots.append(lambda path: plotting.planar_path(path / f"{name}_path.svg", res.path.w, f"length {res.distance:.6f}"))
    return out


_DISTANCE_SCHEMAS = {
    "<name>.csv": "target_w_0,...,target_c_0,...,distance,constraint_residual,starts,best_start",
    "path.csv": "node,t,w_0,...,c_0,...",
}


@experiment(
    "riemannian-distance",
    "Riemannian distance from the identity by multi-start energy minimisation",
    GROUP_PARAMS
    + [
        Param("target", "floats", "1,0,0", "target element (w then c coordinates)"),
        Param("nodes", "int", "64", "path segments N (>= 16)"),
        Param("starts", "int", "5", "seeded starts"),
        Param("w_weight", "float", "1", "metric weight on the horizontal part"),
        Param("c_weight", "float", "1", "metric weight on the center part"),
    ],
    {k.replace("<name>", "riemannian_distance"): v for k, v in _DISTANCE_SCHEMAS.items()},
)
def _riemannian(P, seed):
    return _distance_experiment(P, seed, False)


@experiment(
    "cc-distance",
    "Carnot-Caratheodory (horizontal) distance by augmented-Lagrangian path optimisation",
    GROUP_PARAMS
    + [
        Param("target", "floats", "0,0,1", "target element (w then c coordinates)"),
        Param("nodes", "int", "200", "path segments N (>= 16)"),
        Param("starts", "int", "8", "seeded starts"),
        Param("w_weight", "float", "1", "metric weight on the horizontal part"),
    ],
    {k.replace("<name>", "cc_distance"): v for k, v in _DISTANCE_SCHEMAS.items()},
)
def _cc(P, seed):
    return _distance_experiment(P, seed, True)
