"""Discrete path lengths and numerical distances on Heisenberg-like groups.

A path is a list of ``N + 1`` group elements on the uniform grid of ``[0, 1]``.
Its length sums the norms of the per-segment left-logarithmic increments

    (dw, dc - omega(w_mid, dw) / 2),

measured by ``w_weight * |A|^2 + c_weight * |a|^2``.  Since ``omega`` is skew,
``omega(w_mid, dw) = omega(w_k, w_{k+1})`` and the sum is exactly invariant
under left translation of the whole path.

Distances are found by minimising the discrete energy ``N * sum |increment|^2``
(whose minimisers have equal-length segments, so ``length^2 <= energy`` with
equality at the optimum) with L-BFGS from several seeded starts.  Horizontal
distances parametrise only the ``w`` nodes, rebuild ``c`` from the horizontal
rule and impose the endpoint ``c`` by an augmented Lagrangian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .errors import InfeasibleError, InputError
from .heisenberg import GroupElement, HeisenbergLikeGroup
from .mc import check_seed, chunk_rng, parallel_map

MIN_NODES = 16
MIN_STARTS = 5


@dataclass(frozen=True)
class MetricSpec:
    w_weight: float = 1.0
    c_weight: float = 1.0

    def __post_init__(self):
        if not (self.w_weight > 0 and self.c_weight > 0):
            raise InputError("metric weights must be positive")


@dataclass(frozen=True)
class DiscretePath:
    """Nodes ``(w[k], c[k])`` at times ``k / N``, ``k = 0..N``."""

    group: HeisenbergLikeGroup
    w: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float, copy=True)
        c = np.array(self.c, dtype=float, copy=True)
        g = self.group
        if w.ndim != 2 or w.shape[1] != g.w_dim or c.shape != (w.shape[0], g.c_dim):
            raise InputError("path arrays must have shapes (N+1, w_dim) and (N+1, c_dim)")
        if w.shape[0] < 2:
            raise InputError("a path needs at least two nodes")
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", c)

    @property
    def segments(self) -> int:
        return self.w.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.segments + 1)

    @property
    def nodes(self) -> list[GroupElement]:
        return [self.group.element(w, c) for w, c in zip(self.w, self.c)]

    @property
    def start(self) -> GroupElement:
        return self.group.element(self.w[0], self.c[0])

    @property
    def end(self) -> GroupElement:
        return self.group.element(self.w[-1], self.c[-1])

    @classmethod
    def from_nodes(cls, group, nodes: Sequence[GroupElement]) -> "DiscretePath":
        return cls(group, np.array([n.w for n in nodes]), np.array([n.c for n in nodes]))

    @classmethod
    def straight(cls, group, target: GroupElement, nodes: int) -> "DiscretePath":
        """Coordinate-wise straight segment from the identity to ``target``."""
        s = np.linspace(0.0, 1.0, nodes + 1)[:, None]
        return cls(group, s * target.w, s * target.c)

    def translate(self, k: GroupElement) -> "DiscretePath":
        """Left translate every node by ``k``."""
        w, c = self.group.multiply_arrays(k.w, k.c, self.w, self.c)
        return DiscretePath(self.group, w, c)

    def to_csv(self, path) -> None:
        g = self.group
        header = ["node", "t"] + [f"w_{i}" for i in range(g.w_dim)] + [f"c_{k}" for k in range(g.c_dim)]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for k, (t, w, c) in enumerate(zip(self.times, self.w, self.c)):
                out.writerow([k, repr(float(t))] + [repr(float(v)) for v in w] + [repr(float(v)) for v in c])


def _omega_pairs(omega: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``omega(a[k], b[k])``."""
    return np.einsum("ki,kj,ijm->km", a, b, omega)


def _increments(path: DiscretePath):
    """Per-segment ``dw`` and the center part ``dc - omega(w_mid, dw) / 2``."""
    dw = np.diff(path.w, axis=0)
    w_mid = 0.5 * (path.w[:-1] + path.w[1:])
    u = np.diff(path.c, axis=0) - 0.5 * _omega_pairs(path.group.omega_tensor, w_mid, dw)
    return dw, u


def path_length(path: DiscretePath, metric: MetricSpec = MetricSpec()) -> float:
    dw, u = _increments(path)
    seg = metric.w_weight * np.sum(dw * dw, axis=1) + metric.c_weight * np.sum(u * u, axis=1)
    return float(np.sum(np.sqrt(seg)))


class HorizontalCheck(NamedTuple):
    horizontal: bool
    max_violation: float


def is_horizontal(path: DiscretePath, tol: float = 1e-8) -> HorizontalCheck:
    """Every segment must satisfy ``|dc - omega(w_mid, dw)/2| <= tol * |dw|``.

    ``max_violation`` is the largest absolute center residual.
    """
    dw, u = _increments(path)
    viol = np.linalg.norm(u, axis=1)
    ok = bool(np.all(viol <= tol * np.linalg.norm(dw, axis=1)))
    return HorizontalCheck(ok, float(viol.max()))


def lifted_circle(nodes: int, radius: float = 1.0, group: HeisenbergLikeGroup | None = None) -> DiscretePath:
    """Circle of ``radius`` through the identity in the first two ``w`` axes,
    lifted with ``c`` equal to the exact running signed area.

    For ``omega = e1 ^ e2`` the continuous lift has ``c(theta) = r^2 (theta - sin theta) / 2``,
    ending at ``pi r^2``: length ``2 pi r`` reaches center ``pi r^2``.
    """
    group = group or HeisenbergLikeGroup.heisenberg3()
    if group.w_dim < 2:
        raise InputError("need at least two horizontal directions")
    theta = np.linspace(0.0, 2.0 * math.pi, nodes + 1)
    w = np.zeros((nodes + 1, group.w_dim))
    w[:, 0] = radius * (np.cos(theta) - 1.0)
    w[:, 1] = radius * np.sin(theta)
    area = 0.5 * radius**2 * (theta - np.sin(theta))
    c = area[:, None] * group.omega_tensor[0, 1][None, :]
    return DiscretePath(group, w, c)


@dataclass(frozen=True)
class OptimizerConfig:
    """L-BFGS settings plus the augmented-Lagrangian schedule for horizontal paths."""

    max_iter: int = 5000
    gtol: float = 1e-11
    rounds: int = 10
    penalty_growth: float = 10.0
    target_residual: float = 1e-8
    infeasible_residual: float = 1e-6
    perturbation: float = 0.5
    modes: int = 3


@dataclass(frozen=True)
class DistanceResult:
    target: GroupElement
    distance: float
    path: DiscretePath
    constraint_residual: float
    starts: int
    best_start: int
    converged: bool
    lengths: tuple = field(default=())

    def row(self) -> list:
        vals = [repr(float(v)) for v in self.target.as_vector()]
        return vals + [
            repr(self.distance),
            repr(self.constraint_residual),
            self.starts,
            self.best_start,
        ]


def distance_header(group: HeisenbergLikeGroup) -> list[str]:
    return (
        [f"target_w_{i}" for i in range(group.w_dim)]
        + [f"target_c_{k}" for k in range(group.c_dim)]
        + ["distance", "constraint_residual", "starts", "best_start"]
    )


def _check_problem(group, target, nodes, starts, seed):
    group._check(target)
    if int(nodes) != nodes or nodes < MIN_NODES:
        raise InputError(f"nodes must be an integer >= {MIN_NODES}")
    if int(starts) != starts or starts < MIN_STARTS:
        raise InputError(f"starts must be an integer >= {MIN_STARTS}")
    return int(nodes), int(starts), check_seed(seed)


def _scale(target: GroupElement) -> float:
    """Natural length scale: ``|w| + sqrt|c|`` (homogeneous under dilation)."""
    return float(np.linalg.norm(target.w) + math.sqrt(np.linalg.norm(target.c)))


def _smooth_bump(rng, nodes: int, dim: int, amplitude: float, modes: int) -> np.ndarray:
    """Seeded sum of sine modes vanishing at both ends, shape ``(nodes+1, dim)``."""
    s = np.linspace(0.0, 1.0, nodes + 1)
    coef = rng.standard_normal((modes, dim)) * amplitude / np.arange(1, modes + 1)[:, None]
    basis = np.sin(math.pi * np.outer(s, np.arange(1, modes + 1)))
    return basis @ coef


def _zero_path(group, nodes) -> DiscretePath:
    return DiscretePath(group, np.zeros((nodes + 1, group.w_dim)), np.zeros((nodes + 1, group.c_dim)))


def _best(results, target, starts) -> DistanceResult:
    lengths = tuple(r[0] for r in results)
    i = int(np.argmin(lengths))
    length, path, resid, ok = results[i]
    return DistanceResult(target, float(length), path, float(resid), starts, i, bool(ok), lengths)


# Riemannian distance: free interior (w, c) nodes, energy minimisation.


def _riemannian_energy(x, group, target, nodes, metric):
    wd, cd = group.w_dim, group.c_dim
    inner = x.reshape(nodes - 1, wd + cd)
    w = np.vstack([np.zeros(wd), inner[:, :wd], target.w])
    c = np.vstack([np.zeros(cd), inner[:, wd:], target.c])
    om = group.omega_tensor
    dw = np.diff(w, axis=0)
    u = np.diff(c, axis=0) - 0.5 * _omega_pairs(om, w[:-1], w[1:])
    a, b = metric.w_weight, metric.c_weight
    energy = nodes * (a * np.sum(dw * dw) + b * np.sum(u * u))
    gw = np.zeros_like(w)
    gc = np.zeros_like(c)
    gw[1:] += 2 * a * dw
    gw[:-1] -= 2 * a * dw
    gc[1:] += 2 * b * u
    gc[:-1] -= 2 * b * u
    # d/dw of -omega(w_k, w_{k+1})/2 contracted with 2 b u_k
    gw[1:] -= b * np.einsum("kl,lim,km->ki", w[:-1], om, u)
    gw[:-1] -= b * np.einsum("ilm,kl,km->ki", om, w[1:], u)
    grad = nodes * np.hstack([gw[1:-1], gc[1:-1]])
    return energy, grad.ravel()


def riemannian_distance(
    group: HeisenbergLikeGroup,
    target: GroupElement,
    metric: MetricSpec = MetricSpec(),
    nodes: int = 64,
    starts: int = MIN_STARTS,
    seed: int = 0,
    config: OptimizerConfig = OptimizerConfig(),
    candidates: Sequence[DiscretePath] = (),
) -> DistanceResult:
    """Shortest discrete path from the identity to ``target`` over all (w, c) paths.

    Start 0 is the straight segment; the others add seeded smooth
    perturbations to both components.  User ``candidates`` ending at
    ``target`` are also optimised, and their own lengths compete, so the
    result never exceeds the length of any candidate.
    """
    nodes, starts, seed = _check_problem(group, target, nodes, starts, seed)
    if _scale(target) == 0.0:
        return DistanceResult(target, 0.0, _zero_path(group, nodes), 0.0, 0, -1, True, ())
    scale = _scale(target)
    line = DiscretePath.straight(group, target, nodes)

    def initial(index):
        if index == 0:
            return line
        rng = chunk_rng(seed, index, stream=21)
        amp = config.perturbation * scale
        return DiscretePath(
            group,
            line.w + _smooth_bump(rng, nodes, group.w_dim, amp, config.modes),
            line.c + _smooth_bump(rng, nodes, group.c_dim, amp * scale, config.modes),
        )

    wd = group.w_dim

    # c grows like scale^2 and w like scale: optimise over c / scale for conditioning
    def energy(y):
        x = y.reshape(nodes - 1, -1).copy()
        x[:, wd:] *= scale
        e, grad = _riemannian_energy(x.ravel(), group, target, nodes, metric)
        grad = grad.reshape(nodes - 1, -1)
        grad[:, wd:] *= scale
        return e, grad.ravel()

    def run(path0: DiscretePath):
        y0 = np.hstack([path0.w[1:-1], path0.c[1:-1] / scale]).ravel()
        res = optimize.minimize(
            energy,
            y0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": config.max_iter, "gtol": config.gtol * scale, "ftol": 1e-15},
        )
        inner = res.x.reshape(nodes - 1, -1)
        inner[:, wd:] *= scale
        w = np.vstack([np.zeros(wd), inner[:, :wd], target.w])
        c = np.vstack([np.zeros(group.c_dim), inner[:, wd:], target.c])
        path = DiscretePath(group, w, c)
        return path_length(path, metric), path, 0.0, bool(res.success)

    results = parallel_map(lambda i: run(initial(i)), range(starts))
    for cand in candidates:
        if cand.segments != nodes or cand.group != group:
            raise InputError("candidate paths must live on the same group and node grid")
        if not (np.allclose(cand.start.as_vector(), 0.0) and np.allclose(cand.end.as_vector(), target.as_vector())):
            raise InputError("candidate paths must run from the identity to the target")
        results.append(run(cand))
        results.append((path_length(cand, metric), cand, 0.0, True))
    return _best(results, target, starts)


# Horizontal (Carnot-Caratheodory) distance: free interior w nodes only.


def _horizontal_c(group, w: np.ndarray) -> np.ndarray:
    steps = 0.5 * _omega_pairs(group.omega_tensor, w[:-1], w[1:])
    return np.vstack([np.zeros(group.c_dim), np.cumsum(steps, axis=0)])


def _al_objective(x, group, target, nodes, a, lam, mu):
    wd = group.w_dim
    w = np.vstack([np.zeros(wd), x.reshape(nodes - 1, wd), target.w])
    dw = np.diff(w, axis=0)
    g = 0.5 * np.einsum("ki,kj,ijm->m", w[:-1], w[1:], group.omega_tensor) - target.c
    v = lam + mu * g
    value = nodes * a * np.sum(dw * dw) + lam @ g + 0.5 * mu * (g @ g)
    grad = np.zeros_like(w)
    grad[1:] += 2 * nodes * a * dw
    grad[:-1] -= 2 * nodes * a * dw
    m = np.einsum("ilm,m->il", group.omega_tensor, v)
    # d(v . g)/dw_j = M (w_{j+1} - w_{j-1}) / 2 with M skew
    grad[1:-1] += 0.5 * (w[2:] - w[:-2]) @ m.T
    return value, grad[1:-1].ravel()


def cc_distance(
    group: HeisenbergLikeGroup,
    target: GroupElement,
    metric: MetricSpec = MetricSpec(),
    nodes: int = 64,
    starts: int = MIN_STARTS,
    seed: int = 0,
    config: OptimizerConfig = OptimizerConfig(),
) -> DistanceResult:
    """Shortest horizontal discrete path from the identity to ``target``.

    Only ``metric.w_weight`` matters.  Each start runs up to ``config.rounds``
    augmented-Lagrangian rounds (multiplier update, penalty growth
    ``config.penalty_growth``) until the endpoint residual falls below
    ``config.target_residual``.  Raises :class:`InfeasibleError` if the best
    residual over all starts stays above ``config.infeasible_residual``.
    """
    nodes, starts, seed = _check_problem(group, target, nodes, starts, seed)
    scale = _scale(target)
    if scale == 0.0:
        return DistanceResult(target, 0.0, _zero_path(group, nodes), 0.0, 0, -1, True, ())
    a = metric.w_weight
    s = np.linspace(0.0, 1.0, nodes + 1)[:, None]

    def initial(index):
        w = s * target.w
        if index > 0:
            rng = chunk_rng(seed, index, stream=22)
            w = w + _smooth_bump(rng, nodes, group.w_dim, config.perturbation * scale * 2.0, config.modes)
        return w

    def run(index):
        w = initial(index)
        x = w[1:-1].ravel()
        lam = np.zeros(group.c_dim)
        mu = 10.0 * a / scale**2
        ok = True
        resid = math.inf
        for _ in range(config.rounds):
            res = optimize.minimize(
                _al_objective,
                x,
                args=(group, target, nodes, a, lam, mu),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": config.max_iter, "gtol": config.gtol * scale, "ftol": 1e-15},
            )
            x = res.x
            ok = bool(res.success)
            wfull = np.vstack([np.zeros(group.w_dim), x.reshape(nodes - 1, -1), target.w])
            g = _horizontal_c(group, wfull)[-1] - target.c
            resid = float(np.linalg.norm(g))
            if resid < config.target_residual:
                break
            lam = lam + mu * g
            mu *= config.penalty_growth
        path = DiscretePath(group, wfull, _horizontal_c(group, wfull))
        return path_length(path, metric), path, resid, ok and resid < config.target_residual

    results = parallel_map(run, range(starts))
    feasible = [r for r in results if r[2] <= config.infeasible_residual]
    if not feasible:
        best = min(r[2] for r in results)
        raise InfeasibleError(f"endpoint constraint residual {best:.3g} above {config.infeasible_residual:g}")
    # infeasible starts never win
    masked = [r if r[2] <= config.infeasible_residual else (math.inf,) + r[1:] for r in results]
    return _best(masked, target, starts)


def write_distance_csv(results: Sequence[DistanceResult], group: HeisenbergLikeGroup, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(distance_header(group))
        for r in results:
            out.writerow(r.row())
