"""Finite-dimensional Gaussian measures, Cameron-Martin shifts and rotations.

The abstract Wiener space is modelled by an ambient coordinate space of
dimension ``N`` carrying the standard Gaussian measure; the finite-rank
projections ``P_n`` truncate to the span of an orthonormal family.  Shifts act
by translation, ``w -> w + h``, and the density of the translated measure is

    J_h(x) = exp(<h, x> - |h|^2 / 2),

the sign that makes ``E[f(W + h)] = E[f(W) J_h(W)]`` hold.  Its ``L^p`` norm is
``exp((p - 1) |h|^2 / 2)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CappedInputError, InputError
from .mc import (
    McEstimate,
    MomentAccumulator,
    check_samples,
    check_seed,
    chunk_rng,
    derive_seed,
    map_chunks,
)

EXP_CAP = 700.0
DEFAULT_AMBIENT_DIM = 64
_CHUNK = 1 << 15


def _vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    return arr


def _check_exponent(value: float, what: str) -> None:
    if value > EXP_CAP:
        raise CappedInputError(f"{what}: exponent {value:.4g} exceeds cap {EXP_CAP}")


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1.0 or not math.isfinite(p):
        raise InputError(f"p must be a finite real > 1, got {p}")
    return p


# ----------------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OrthonormalProjection:
    """Rank-``n`` orthogonal projection of ``R^N`` onto the span of ``basis`` rows."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float, copy=True)
        if basis.ndim != 2 or basis.shape[0] < 1 or basis.shape[0] > basis.shape[1]:
            raise InputError("basis must be an n x N array with 1 <= n <= N")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(basis.shape[0]))) > 1e-12:
            raise InputError("basis vectors are not orthonormal within 1e-12")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def truncation(cls, ambient_dim: int, rank: int) -> "OrthonormalProjection":
        """Coordinate truncation onto the first ``rank`` standard basis vectors."""
        if not 1 <= rank <= ambient_dim:
            raise InputError("need 1 <= rank <= ambient_dim")
        return cls(np.eye(ambient_dim)[:rank])

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    def coordinates(self, w) -> np.ndarray:
        """Coefficients ``<w, e_j>``; accepts a vector or a stack of row vectors."""
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.ambient_dim:
            raise InputError("dimension mismatch with projection")
        return w @ self.basis.T

    def __call__(self, w) -> np.ndarray:
        return self.coordinates(w) @ self.basis


@dataclass(frozen=True)
class StandardGaussian:
    """Centred Gaussian on ``R^dim`` with identity covariance."""

    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InputError("dim must be positive")

    def sample(self, samples: int, seed: int, chunk: int = _CHUNK) -> np.ndarray:
        seed = check_seed(seed)
        samples = check_samples(samples)
        parts = map_chunks(lambda rng, n, _: rng.standard_normal((n, self.dim)), seed, samples, chunk)
        return np.concatenate(parts)


@dataclass(frozen=True)
class CameronMartinShift:
    h: np.ndarray

    def __post_init__(self):
        h = _vector(self.h, "h").copy()
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.h.size

    @property
    def h_norm(self) -> float:
        return float(np.linalg.norm(self.h))

    @classmethod
    def along(cls, norm: float, dim: int = 1) -> "CameronMartinShift":
        """Shift of the given norm spread evenly over ``dim`` coordinates."""
        return cls(np.full(dim, norm / math.sqrt(dim)))


@dataclass(frozen=True)
class RotationMap:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError("rotation must be a square matrix")
        if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) > 1e-10:
            raise InputError("matrix is not orthogonal within 1e-10")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def planar(cls, angle: float) -> "RotationMap":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s], [s, c]]))

    @classmethod
    def random(cls, dim: int, seed: int) -> "RotationMap":
        """Haar-distributed orthogonal matrix from a seeded QR factorisation."""
        rng = chunk_rng(check_seed(seed), 0, stream=7)
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q = q * np.sign(np.diag(r))
        return cls(q)

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T


# ----------------------------------------------------------------------------
# Radon-Nikodym derivative and its L^p norm
# ----------------------------------------------------------------------------


def log_rn_derivative(shift: CameronMartinShift, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != shift.dim:
        raise InputError(f"x has dimension {x.shape[-1]}, shift has {shift.dim}")
    return x @ shift.h - 0.5 * shift.h_norm**2


def rn_derivative(shift: CameronMartinShift, x):
    """Density of the translated measure w.r.t. the standard Gaussian at ``x``.

    ``x`` may be a single point or a stack of points (last axis is the
    coordinate axis).
    """
    log_j = log_rn_derivative(shift, x)
    if np.max(log_j, initial=-np.inf) > EXP_CAP:
        raise CappedInputError("rn_derivative exponent exceeds cap")
    out = np.exp(log_j)
    return float(out) if np.ndim(out) == 0 else out


def lp_norm_exact(shift: CameronMartinShift, p: float) -> float:
    p = _check_p(p)
    exponent = (p - 1.0) * shift.h_norm**2 / 2.0
    _check_exponent(p * exponent, "lp_norm_exact")
    return math.exp(exponent)


def lp_norm_mc(
    shift: CameronMartinShift,
    p: float,
    samples: int,
    seed: int,
    method: str = "tilted",
) -> McEstimate:
    """Monte Carlo estimate of ``(E[J_h^p])^(1/p)`` under the standard Gaussian.

    ``method="plain"`` averages ``J_h^p`` over standard Gaussian draws.  This is
    a lognormal with log-variance ``p^2 |h|^2`` and is badly heavy tailed once
    ``p |h|`` exceeds about 3.  ``method="tilted"`` draws half of every chunk
    from ``N(0, I)`` and half from ``N(p h, I)`` and weights by the density of
    the balanced mixture; the weighted integrand is then bounded by
    ``2 E[J_h^p]``.  The two halves are combined as a stratified estimator
    with weight 1/2 each.  The standard error of the root is propagated from the
    moment's standard error by the delta method.
    """
    p = _check_p(p)
    samples = check_samples(samples, minimum=1000)
    seed = check_seed(seed)
    if method not in ("tilted", "plain"):
        raise InputError(f"unknown method {method!r}")
    h = shift.h
    hh = shift.h_norm**2
    log_moment = p * (p - 1.0) * hh / 2.0
    _check_exponent(log_moment, "lp_norm_mc")
    if hh == 0.0:
        return McEstimate(1.0, 0.0, samples, seed)

    def chunk(rng, n, _):
        x = rng.standard_normal((n, shift.dim))
        plain, tilted = MomentAccumulator(), MomentAccumulator()
        if method == "plain":
            log_v = p * (x @ h - hh / 2.0)
            if log_v.max() > EXP_CAP:
                raise CappedInputError("sampled exponent exceeds cap; use method='tilted'")
            plain.add(np.exp(log_v))
            return plain, tilted
        half = n // 2
        x[half:] += p * h
        proj = x @ h
        log_v = p * proj - p * hh / 2.0
        log_mix = np.logaddexp(0.0, p * proj - p * p * hh / 2.0) - math.log(2.0)
        v = np.exp(log_v - log_mix)
        plain.add(v[:half])
        tilted.add(v[half:])
        return plain, tilted

    plain, tilted = MomentAccumulator(), MomentAccumulator()
    for a, b in map_chunks(chunk, seed, samples, _CHUNK):
        plain.merge(a)
        tilted.merge(b)
    if method == "plain":
        moment, moment_se = float(plain.mean), float(plain.std_error)
    else:
        # stratified estimator: each mixture component carries weight 1/2
        moment = 0.5 * (float(plain.mean) + float(tilted.mean))
        moment_se = 0.5 * math.hypot(float(plain.std_error), float(tilted.std_error))
    value = moment ** (1.0 / p)
    se = value / (p * moment) * moment_se
    return McEstimate(value, se, samples, seed)


def change_of_variables_mc(
    shift: CameronMartinShift,
    f: Callable[[np.ndarray], np.ndarray],
    samples: int,
    seed: int,
) -> tuple[McEstimate, McEstimate]:
    """Two independent estimates of ``E[f(W + h)]`` and ``E[f(W) J_h(W)]``."""
    samples = check_samples(samples)
    seed = check_seed(seed)

    def side(shifted):
        def chunk(rng, n, _):
            x = rng.standard_normal((n, shift.dim))
            acc = MomentAccumulator()
            if shifted:
                acc.add(f(x + shift.h))
            else:
                acc.add(f(x) * rn_derivative(shift, x))
            return acc
        return chunk

    out = []
    for stream, shifted in ((0, True), (1, False)):
        total = MomentAccumulator()
        for part in map_chunks(side(shifted), seed, samples, _CHUNK, stream=stream):
            total.merge(part)
        out.append(total.estimate(seed))
    return out[0], out[1]


# ----------------------------------------------------------------------------
# Rotation invariance
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RotationReport:
    moment_order: int
    multi_indices: tuple
    discrepancies: np.ndarray
    std_errors: np.ndarray
    samples: int
    seed: int
    n_sigma: float = 4.0

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.discrepancies)))

    @property
    def max_z(self) -> float:
        d = np.abs(self.discrepancies)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(d == 0.0, 0.0, d / self.std_errors)
        return float(np.max(z))

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.discrepancies) <= self.n_sigma * self.std_errors))


def _multi_indices(dim: int, order: int):
    out = []
    for k in range(1, order + 1):
        out.extend(itertools.combinations_with_replacement(range(dim), k))
    return tuple(out)


def _monomials(x: np.ndarray, indices) -> np.ndarray:
    cols = [np.prod(x[:, list(idx)], axis=1) for idx in indices]
    return np.stack(cols, axis=1)


def rotation_invariance_check(
    rotation: RotationMap, samples: int, seed: int, moment_order: int = 4
) -> RotationReport:
    """Compare every mixed moment of ``R X`` and ``X`` up to ``moment_order``.

    The two sides share their draws, so the comparison is a paired one: the
    standard error of each discrepancy comes from the per-sample difference
    of monomials.
    """
    if not 1 <= moment_order <= 4:
        raise InputError("moment_order must be in 1..4")
    samples = check_samples(samples, minimum=2)
    seed = check_seed(seed)
    indices = _multi_indices(rotation.dim, moment_order)

    def chunk(rng, n, _):
        x = rng.standard_normal((n, rotation.dim))
        acc = MomentAccumulator()
        acc.add(_monomials(rotation.apply(x), indices) - _monomials(x, indices))
        return acc

    total = MomentAccumulator()
    for part in map_chunks(chunk, seed, samples, 1 << 13):
        total.merge(part)
    return RotationReport(
        moment_order, indices, np.asarray(total.mean), np.asarray(total.std_error), samples, seed
    )


def second_moment_matrix(rotation: RotationMap, samples: int, seed: int) -> np.ndarray:
    y = rotation.apply(StandardGaussian(rotation.dim).sample(samples, seed))
    return y.T @ y / y.shape[0]


# ----------------------------------------------------------------------------
# Finite-dimensional approximation
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class CylinderFunction:
    """A function of ``w`` given as a map on stacks of coordinate rows.

    ``depends_on`` is the number of leading coordinates the function reads, or
    ``None`` if it reads them all (a convergent weighted sum).
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    depends_on: int | None = None

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self.fn(w)


def coordinate(j: int = 1) -> CylinderFunction:
    return CylinderFunction(f"w{j}", lambda w: w[:, j - 1], j)


def coordinate_square(j: int = 1) -> CylinderFunction:
    return CylinderFunction(f"w{j}^2", lambda w: w[:, j - 1] ** 2, j)


def weighted_tanh() -> CylinderFunction:
    """``tanh(sum_j 2^-j w_j)``, which reads every coordinate."""

    def fn(w):
        weights = 0.5 ** np.arange(1, w.shape[1] + 1)
        return np.tanh(w @ weights)

    return CylinderFunction("tanh_weighted", fn, None)


CYLINDER_FUNCTIONS = {
    "w1": coordinate(1),
    "w1sq": coordinate_square(1),
    "tanh": weighted_tanh(),
}


@dataclass
class CylinderLimitTable:
    function: str
    dims: list[int]
    estimates: list[McEstimate]
    diffs: list[float]
    diff_std_errors: list[float]
    replica_median_diffs: list[float] = field(default_factory=list)

    def cylinder_agreement(self, m: int, n_sigma: float = 3.0) -> bool:
        """Estimates for all ``n >= m`` agree pairwise within ``n_sigma`` errors."""
        rows = [e for n, e in zip(self.dims, self.estimates) if n >= m]
        for a, b in itertools.combinations(rows, 2):
            if abs(a.value - b.value) > n_sigma * math.hypot(a.std_error, b.std_error):
                return False
        return True

    @property
    def median_diffs_decreasing(self) -> bool:
        d = self.replica_median_diffs
        return len(d) > 0 and all(b < a for a, b in zip(d, d[1:]))


def cylinder_limit_check(
    f: CylinderFunction,
    dims: Sequence[int],
    samples: int,
    seed: int,
    replicas: int = 1,
) -> CylinderLimitTable:
    """Estimate ``E[f(P_n W)]`` for each ``n`` in ``dims``.

    All ``n`` share a single ambient draw of dimension ``max(dims)`` (the
    pushforward of one Gaussian under every ``P_n``), so successive
    differences isolate the truncation effect.  With ``replicas > 1`` the
    experiment is repeated on derived seeds and the median absolute successive
    difference is recorded per step.
    """
    dims = [int(n) for n in dims]
    if not dims or any(n < 1 for n in dims) or any(b <= a for a, b in zip(dims, dims[1:])):
        raise InputError("dims must be a strictly increasing list of positive integers")
    samples = check_samples(samples, minimum=2)
    seed = check_seed(seed)
    if replicas < 1:
        raise InputError("replicas must be >= 1")
    big = dims[-1]

    def run(run_seed):
        def chunk(rng, n, _):
            w = rng.standard_normal((n, big))
            vals = np.stack([f(np.where(np.arange(big) < k, w, 0.0)) for k in dims], axis=1)
            acc, dacc = MomentAccumulator(), MomentAccumulator()
            acc.add(vals)
            if len(dims) > 1:
                dacc.add(np.diff(vals, axis=1))
            return acc, dacc

        acc, dacc = MomentAccumulator(), MomentAccumulator()
        for a, d in map_chunks(chunk, run_seed, samples, 1 << 14):
            acc.merge(a)
            dacc.merge(d)
        means, ses = np.atleast_1d(acc.mean), np.atleast_1d(acc.std_error)
        estimates = [McEstimate(float(m), float(s), samples, run_seed) for m, s in zip(means, ses)]
        if len(dims) > 1:
            diffs = [float(x) for x in np.atleast_1d(dacc.mean)]
            dses = [float(x) for x in np.atleast_1d(dacc.std_error)]
        else:
            diffs, dses = [], []
        return estimates, diffs, dses

    estimates, diffs, dses = run(seed)
    table = CylinderLimitTable(f.name, dims, estimates, diffs, dses)
    if replicas > 1 and len(dims) > 1:
        all_diffs = [np.abs(diffs)]
        for r in range(1, replicas):
            all_diffs.append(np.abs(run(derive_seed(seed, r))[1]))
        table.replica_median_diffs = [float(x) for x in np.median(np.array(all_diffs), axis=0)]
    return table


@dataclass(frozen=True)
class UniformBoundTable:
    dims: tuple
    values: tuple
    bound: float

    @property
    def monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.values, self.values[1:]))

    @property
    def bounded(self) -> bool:
        return all(v <= self.bound for v in self.values)


def uniform_bound_check(h, p: float, dims: Sequence[int]) -> UniformBoundTable:
    """Closed-form ``L^p`` norms of ``J_{P_n h}`` against the full-space bound.

    ``h`` lives in ``R^N``; ``P_n`` is coordinate truncation to the first
    ``n`` coordinates.
    """
    shift = CameronMartinShift(h)
    p = _check_p(p)
    dims = [int(n) for n in dims]
    if any(not 1 <= n <= shift.dim for n in dims):
        raise InputError("every n must satisfy 1 <= n <= dim(h)")
    lp_norm_exact(shift, p)  # validates the exponent cap
    # one running sum for every |P_n h|^2 so the table is monotone to the last bit
    partial = np.cumsum(np.square(shift.h))
    values = [math.exp((p - 1.0) * float(partial[n - 1]) / 2.0) for n in dims]
    bound = math.exp((p - 1.0) * float(partial[-1]) / 2.0)
    return UniformBoundTable(tuple(dims), tuple(values), bound)


def export_sample_pool(samples: np.ndarray, path) -> None:
    """Write samples as CSV with header ``sample_index,coord_0,...``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index"] + [f"coord_{j}" for j in range(samples.shape[1])])
        for i, row in enumerate(samples):
            writer.writerow([i] + [repr(float(v)) for v in row])
