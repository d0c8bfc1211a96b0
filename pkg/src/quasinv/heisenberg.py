"""Step-2 nilpotent (Heisenberg-like) groups and their Brownian motions.

A group is ``R^w x R^c`` with a skew bilinear map ``omega: R^w x R^w -> R^c``
stored as a tensor ``Omega[i, j, k]`` (``omega(a, b)_k = sum a_i b_j Omega_ijk``)
and multiplication

    (w1, c1) . (w2, c2) = (w1 + w2, c1 + c2 + omega(w1, w2) / 2).

Brownian motion is simulated by an Euler sum for the Levy-area term.  The
Ito-Stratonovich correction would involve ``omega(e_i, e_i)``, which vanishes
by skew-symmetry, so the left-point sum already targets the right process.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateEstimateError, InputError
from .mc import (
    McEstimate,
    check_samples,
    check_seed,
    chunk_rng,
    derive_seed,
    map_chunks,
)

_BM_CHUNK = 1024
MIN_STEPS = 100


@dataclass(frozen=True)
class GroupElement:
    w: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float, ndmin=1)
        c = np.array(self.c, dtype=float, ndmin=1)
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", c)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w, self.c])

    def __eq__(self, other):
        return (
            isinstance(other, GroupElement)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.c, other.c)
        )

    def __hash__(self):
        return hash((self.w.tobytes(), self.c.tobytes()))


class HeisenbergLikeGroup:
    def __init__(self, omega: np.ndarray):
        omega = np.array(omega, dtype=float, copy=True)
        if omega.ndim != 3 or omega.shape[0] != omega.shape[1]:
            raise InputError("omega must have shape (w_dim, w_dim, c_dim)")
        if not np.array_equal(omega, -omega.transpose(1, 0, 2)):
            raise InputError("omega is not skew-symmetric in its first two indices")
        flat = omega.reshape(-1, omega.shape[2])
        sv = np.linalg.svd(flat, compute_uv=False)
        if omega.shape[2] > flat.shape[0] or sv.min() <= 1e-10 * max(1.0, sv.max()):
            raise InputError("omega does not span the centre (Hoermander condition fails)")
        omega.setflags(write=False)
        self.omega_tensor = omega
        self._pairs = np.triu_indices(omega.shape[0], 1)
        self._upper = omega[self._pairs]

    def __eq__(self, other):
        return isinstance(other, HeisenbergLikeGroup) and np.array_equal(self.omega_tensor, other.omega_tensor)

    def __hash__(self):
        return hash((self.omega_tensor.shape, self.omega_tensor.tobytes()))

    @property
    def w_dim(self) -> int:
        return self.omega_tensor.shape[0]

    @property
    def c_dim(self) -> int:
        return self.omega_tensor.shape[2]

    def __repr__(self):
        return f"HeisenbergLikeGroup(w_dim={self.w_dim}, c_dim={self.c_dim})"

    @classmethod
    def heisenberg3(cls) -> "HeisenbergLikeGroup":
        """The 3-d Heisenberg group, ``omega(a, b) = a_1 b_2 - a_2 b_1``."""
        om = np.zeros((2, 2, 1))
        om[0, 1, 0], om[1, 0, 0] = 1.0, -1.0
        return cls(om)

    @classmethod
    def random(cls, w_dim: int, c_dim: int, seed: int, max_tries: int = 100) -> "HeisenbergLikeGroup":
        """Seeded random skew tensor, redrawn until the Hoermander check passes."""
        for attempt in range(max_tries):
            rng = chunk_rng(check_seed(seed), attempt, stream=13)
            a = rng.standard_normal((w_dim, w_dim, c_dim))
            try:
                return cls(a - a.transpose(1, 0, 2))
            except InputError:
                continue
        raise InputError("could not draw a bracket-generating omega")

    # -- algebra -------------------------------------------------------------

    def omega(self, a, b) -> np.ndarray:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if a.shape[-1] != self.w_dim or b.shape[-1] != self.w_dim:
            raise InputError("omega arguments must have length w_dim")
        # sum over i < j of (a_i b_j - a_j b_i) omega_ij: skew to the last bit
        i, j = self._pairs
        return (a[..., i] * b[..., j] - a[..., j] * b[..., i]) @ self._upper

    def element(self, w=None, c=None) -> GroupElement:
        w = np.zeros(self.w_dim) if w is None else w
        c = np.zeros(self.c_dim) if c is None else c
        g = GroupElement(w, c)
        self._check(g)
        return g

    def identity(self) -> GroupElement:
        return self.element()

    def _check(self, g: GroupElement) -> None:
        if g.w.shape != (self.w_dim,) or g.c.shape != (self.c_dim,):
            raise InputError(
                f"element has dims ({g.w.size}, {g.c.size}), group has ({self.w_dim}, {self.c_dim})"
            )

    def multiply(self, g1: GroupElement, g2: GroupElement) -> GroupElement:
        self._check(g1)
        self._check(g2)
        return GroupElement(g1.w + g2.w, g1.c + g2.c + 0.5 * self.omega(g1.w, g2.w))

    def multiply_arrays(self, w1, c1, w2, c2):
        """Vectorised product on stacks of coordinates."""
        return w1 + w2, c1 + c2 + 0.5 * self.omega(w1, w2)

    def inverse(self, g: GroupElement) -> GroupElement:
        self._check(g)
        return GroupElement(-g.w, -g.c)

    def bracket(self, x1: GroupElement, x2: GroupElement) -> GroupElement:
        """Lie bracket ``[(A, a), (C, c)] = (0, omega(A, C))`` on the algebra ``R^w x R^c``."""
        self._check(x1)
        self._check(x2)
        return GroupElement(np.zeros(self.w_dim), self.omega(x1.w, x2.w))

    def dilate(self, g: GroupElement, lam: float) -> GroupElement:
        """Carnot dilation ``(w, c) -> (lam w, lam^2 c)``."""
        return GroupElement(lam * g.w, lam * lam * g.c)


# ----------------------------------------------------------------------------
# Brownian motion
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BmSample:
    terminal: GroupElement
    t: float
    steps: int
    seed: int
    horizontal: bool


def _check_time(t, steps):
    t = float(t)
    if t < 0 or not math.isfinite(t):
        raise InputError("t must be a finite nonnegative real")
    if int(steps) < MIN_STEPS:
        raise InputError(f"steps must be >= {MIN_STEPS}, got {steps}")
    return t, int(steps)


def _simulate(group: HeisenbergLikeGroup, t, steps, seed, index, n, horizontal):
    """Terminal points of ``n`` paths for chunk ``index``."""
    rng = chunk_rng(seed, index, stream=0)
    dt = t / steps
    db = rng.standard_normal((n, steps, group.w_dim)) * math.sqrt(dt)
    b = np.cumsum(db, axis=1)
    left = b - db
    # m[n, i, j] = sum_s B_i(t_s) dB_j(s)
    m = np.matmul(left.transpose(0, 2, 1), db)
    area = 0.5 * np.einsum("nij,ijk->nk", m, group.omega_tensor)
    if not horizontal:
        area = area + chunk_rng(seed, index, stream=1).standard_normal((n, group.c_dim)) * math.sqrt(t)
    return b[:, -1, :], area


def sample_bm(group: HeisenbergLikeGroup, t: float, steps: int, seed: int, horizontal: bool = False) -> BmSample:
    """One Brownian path's terminal value, reproducible from ``(t, steps, seed)``."""
    t, steps = _check_time(t, steps)
    seed = check_seed(seed)
    if t == 0.0:
        return BmSample(group.identity(), t, steps, seed, horizontal)
    w, c = _simulate(group, t, steps, seed, 0, 1, horizontal)
    return BmSample(GroupElement(w[0], c[0]), t, steps, seed, horizontal)


@dataclass(frozen=True)
class HeatKernelPool:
    """Terminal values of independent Brownian paths: a sample of the heat kernel measure."""

    group: HeisenbergLikeGroup
    t: float
    steps: int
    seed: int
    horizontal: bool
    w: np.ndarray
    c: np.ndarray

    @property
    def size(self) -> int:
        return self.w.shape[0]

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.w, self.c], axis=1)

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def w_covariance(self) -> np.ndarray:
        return np.cov(self.w, rowvar=False).reshape(self.group.w_dim, self.group.w_dim)

    def c_variance(self, k: int = 0) -> McEstimate:
        return variance_estimate(self.c[:, k], self.seed)

    def w_variance(self, j: int = 0) -> McEstimate:
        return variance_estimate(self.w[:, j], self.seed)

    def c_skewness(self, k: int = 0) -> McEstimate:
        """Sample skewness of a centre coordinate with a delta-method standard error."""
        x = self.c[:, k] - self.c[:, k].mean()
        n = x.size
        m2, m3 = np.mean(x**2), np.mean(x**3)
        skew = m3 / m2**1.5
        # influence function of the skewness
        infl = x**3 / m2**1.5 - 3.0 * x / m2**0.5 - 1.5 * skew * (x**2 / m2 - 1.0)
        return McEstimate(float(skew), float(infl.std(ddof=1) / math.sqrt(n)), n, self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample"]
                + [f"w_{j}" for j in range(self.group.w_dim)]
                + [f"c_{k}" for k in range(self.group.c_dim)]
            )
            for i, row in enumerate(self.points):
                writer.writerow([i] + [repr(float(v)) for v in row])


def variance_estimate(x: np.ndarray, seed: int) -> McEstimate:
    """Sample variance with standard error ``sqrt((m4 - m2^2) / n)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    m4 = float(np.mean(d**4))
    var = m2 * n / (n - 1)
    return McEstimate(var, math.sqrt(max(m4 - m2 * m2, 0.0) / n), n, seed)


MIN_POOL = 10_000


def heat_kernel_mc(
    group: HeisenbergLikeGroup,
    t: float,
    samples: int,
    steps: int,
    seed: int,
    horizontal: bool = False,
) -> HeatKernelPool:
    """Sample pool of ``mu_t`` (or ``mu_t^h`` when ``horizontal``).

    Paths are simulated in chunks of 1024 with generators derived from
    ``(seed, chunk index)``.
    """
    t, steps = _check_time(t, steps)
    samples = check_samples(samples, minimum=MIN_POOL)
    seed = check_seed(seed)
    if t == 0.0:
        return HeatKernelPool(
            group, t, steps, seed, horizontal, np.zeros((samples, group.w_dim)), np.zeros((samples, group.c_dim))
        )
    parts = map_chunks(
        lambda rng, n, i: _simulate(group, t, steps, seed, i, n, horizontal), seed, samples, _BM_CHUNK
    )
    w = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    return HeatKernelPool(group, t, steps, seed, horizontal, w, c)


# ----------------------------------------------------------------------------
# Radon-Nikodym derivative of left translation, by kernel density estimation
# ----------------------------------------------------------------------------


class ProductGaussianKde:
    """Gaussian KDE with one bandwidth on coordinates standardised by the reference spread."""

    def __init__(self, reference: np.ndarray, bandwidth: float | None = None):
        reference = np.asarray(reference, dtype=float)
        n, d = reference.shape
        if bandwidth is None:
            bandwidth = default_bandwidth(n, d)
        if not bandwidth > 0:
            raise DegenerateEstimateError(f"bandwidth must be positive, got {bandwidth}")
        self.scale = reference.std(axis=0)
        self.scale[self.scale == 0] = 1.0
        self.bandwidth = float(bandwidth)
        self.ref = reference / (self.scale * self.bandwidth)
        self.ref_sq = np.sum(self.ref**2, axis=1)

    def log_density(self, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Log density up to an additive constant shared by all points."""
        x = np.asarray(points, dtype=float) / (self.scale * self.bandwidth)
        out = np.empty(x.shape[0])
        half_ref = 0.5 * self.ref_sq
        for start in range(0, x.shape[0], chunk):
            xs = x[start : start + chunk]
            # -|x - r|^2 / 2 = x.r - |r|^2 / 2 - |x|^2 / 2; the last term is per row
            a = xs @ self.ref.T
            a -= half_ref
            top = a.max(axis=1)
            a -= top[:, None]
            np.exp(a, out=a)
            out[start : start + chunk] = top + np.log(a.sum(axis=1)) - 0.5 * np.sum(xs * xs, axis=1)
        return out

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        """Normalised log density."""
        n, d = self.ref.shape
        const = math.log(n) + 0.5 * d * math.log(2 * math.pi) + float(np.sum(np.log(self.scale * self.bandwidth)))
        return self.log_density(points) - const


def silverman_bandwidth(n: int, d: int) -> float:
    return (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))


# Silverman's rule is tuned for the bulk; the ratio rho(k^-1 x) / rho(x) lives
# in the tails, where it makes the estimate explode.  Oversmoothing keeps the
# n^(-1/(d+4)) rate and shrinks log ||J|| by a roughly constant factor.
OVERSMOOTH = 2.0


def default_bandwidth(n: int, d: int) -> float:
    return OVERSMOOTH * silverman_bandwidth(n, d)


@dataclass(frozen=True)
class DensityRatioEstimate:
    shift: GroupElement
    p: float
    lp_estimate: McEstimate
    bandwidth: float
    ess: float

    def __post_init__(self):
        e = self.lp_estimate
        if e.value < 1.0 - 3.0 * e.std_error - 1e-12:
            raise DegenerateEstimateError(
                f"L^p estimate {e.value} below 1 - 3 sigma; the ratio weights are inconsistent"
            )


def _ratio_moments(r: np.ndarray, p: float, seed: int) -> McEstimate:
    """Self-normalised ``(mean r^p)^(1/p) / mean r`` with a delta-method error."""
    n = r.size
    m1 = r.mean()
    rp = r**p
    mp = rp.mean()
    value = mp ** (1.0 / p) / m1
    grad = np.array([value / (p * mp), -value / m1])
    cov = np.cov(np.vstack([rp, r])) / n
    se = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    return McEstimate(float(value), se, n, seed)


def rn_ratio_lp(
    group: HeisenbergLikeGroup,
    t: float,
    shift: GroupElement,
    p: float,
    samples: int = 20000,
    steps: int = 200,
    seed: int = 0,
    bandwidth: float | None = None,
    horizontal: bool = False,
    pool: HeatKernelPool | None = None,
    min_ess: float = 100.0,
) -> DensityRatioEstimate:
    """``L^p`` norm of the density of ``(L_k)_* mu_t`` against ``mu_t``, via KDE.

    The pool is split in two halves: the first builds the density estimate,
    the second supplies evaluation points ``x``.  The ratio at ``x`` is
    ``rho(k^-1 x) / rho(x)`` (left translation preserves Lebesgue measure);
    the ratios are self-normalised to mean one before taking the ``p``-th
    moment.  Pass ``pool`` to reuse one simulation across several shifts.
    """
    p = float(p)
    if not p > 1.0:
        raise InputError("p must be > 1")
    group._check(shift)
    if pool is None:
        pool = heat_kernel_mc(group, t, samples, steps, seed, horizontal)
    return RatioEstimator(group, pool, bandwidth).estimate(shift, p, min_ess)


# Defensive mixture: a small weight on a wide Gaussian fitted to the pool keeps
# the estimated density from collapsing at isolated tail points, where a single
# evaluation point otherwise carries the whole ratio sum.
DEFENSIVE_WEIGHT = 0.02
DEFENSIVE_WIDTH = 3.0


class RatioEstimator:
    """Density estimate from the first half of a pool, evaluated at the second half.

    The estimate is ``(1 - eps) KDE + eps N(mean, (3 sd)^2 cov)`` with
    ``eps = DEFENSIVE_WEIGHT``.
    """

    def __init__(self, group: HeisenbergLikeGroup, pool: HeatKernelPool, bandwidth: float | None):
        if bandwidth is not None and not bandwidth > 0:
            raise DegenerateEstimateError(f"bandwidth must be positive, got {bandwidth}")
        half = pool.size // 2
        if half < 2:
            raise DegenerateEstimateError("pool too small")
        pts = pool.points
        self.group = group
        self.seed = pool.seed
        self.kde = ProductGaussianKde(pts[:half], bandwidth)
        self.mean = pts[:half].mean(axis=0)
        cov = np.atleast_2d(np.cov(pts[:half].T)) * DEFENSIVE_WIDTH**2
        self.chol = np.linalg.cholesky(cov)
        self.ev = pts[half:]
        self.base = self.log_density(self.ev)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        d = x.shape[1]
        z = np.linalg.solve(self.chol, (x - self.mean).T)
        wide = -0.5 * np.sum(z * z, axis=0) - float(np.sum(np.log(np.diag(self.chol)))) - 0.5 * d * math.log(2 * math.pi)
        return np.logaddexp(math.log1p(-DEFENSIVE_WEIGHT) + self.kde.log_pdf(x), math.log(DEFENSIVE_WEIGHT) + wide)

    def estimate(self, shift: GroupElement, p: float, min_ess: float = 100.0) -> DensityRatioEstimate:
        group, ev = self.group, self.ev
        n = ev.shape[0]
        if not np.any(shift.w) and not np.any(shift.c):
            return DensityRatioEstimate(shift, p, McEstimate(1.0, 0.0, n, self.seed), self.kde.bandwidth, float(n))
        inv = group.inverse(shift)
        tw, tc = group.multiply_arrays(inv.w, inv.c, ev[:, : group.w_dim], ev[:, group.w_dim :])
        log_r = self.log_density(np.concatenate([tw, tc], axis=1)) - self.base
        log_r -= log_r.max()
        r = np.exp(log_r)
        ess = float(r.sum() ** 2 / np.sum(r**2))
        if ess < min_ess:
            raise DegenerateEstimateError(f"effective sample size {ess:.1f} < {min_ess}")
        return DensityRatioEstimate(shift, p, _ratio_moments(r, p, self.seed), self.kde.bandwidth, ess)


@dataclass(frozen=True)
class BoundFitReport:
    t: float
    p: float
    distances: tuple
    estimates: tuple
    slope: float
    slope_stderr: float
    intercept: float
    intercept_stderr: float
    r2: float

    @property
    def n_shifts(self) -> int:
        return len(self.distances)

    @property
    def accepted(self) -> bool:
        return self.r2 >= 0.9 and abs(self.intercept) <= 3.0 * self.intercept_stderr

    def row(self) -> list:
        return [self.t, self.p, self.n_shifts, self.slope, self.intercept, self.r2]


FIT_HEADER = ["t", "p", "n_shifts", "slope", "intercept", "r2"]


def default_distance(horizontal: bool) -> Callable:
    """Riemannian distance for ``mu_t``, horizontal distance for ``mu_t^h`` (coarse grid)."""
    from . import geodesics

    def dist(group, g):
        fn = geodesics.cc_distance if horizontal else geodesics.riemannian_distance
        return fn(group, g, nodes=32, starts=5, seed=0).distance

    return dist


def bound_shape_fit(
    group: HeisenbergLikeGroup,
    t: float,
    p: float,
    shifts: Sequence[GroupElement],
    distance: Callable | None = None,
    samples: int = 20000,
    seed: int = 0,
    steps: int = 200,
    horizontal: bool = False,
    bandwidth: float | None = None,
    distances: Sequence[float] | None = None,
) -> BoundFitReport:
    """Regress ``log ||J_k||_p`` on ``d(e, k)^2`` over a family of shifts.

    One pool is simulated per call and reused for every shift.  ``distance``
    is ``distance(group, k) -> float``; precomputed ``distances`` may be
    passed instead to avoid recomputing geodesics across replicas.
    """
    if not float(p) > 1.0:
        raise InputError("p must be > 1")
    shifts = list(shifts)
    if len({s for s in shifts}) < 6:
        raise InputError("need at least 6 distinct shifts")
    if distances is None:
        distance = distance or default_distance(horizontal)
        distances = [float(distance(group, k)) for k in shifts]
    distances = [float(d) for d in distances]
    if len(distances) != len(shifts):
        raise InputError("one distance per shift required")
    d2 = np.square(distances)
    if np.ptp(d2) == 0.0:
        raise InputError("degenerate design: all shift distances are equal")
    pool = heat_kernel_mc(group, t, samples, steps, seed, horizontal)
    setup = RatioEstimator(group, pool, bandwidth)
    ests = [setup.estimate(k, float(p)).lp_estimate for k in shifts]
    y = np.log([e.value for e in ests])
    fit = stats.linregress(d2, y)
    return BoundFitReport(
        float(t),
        float(p),
        tuple(distances),
        tuple(ests),
        float(fit.slope),
        float(fit.stderr),
        float(fit.intercept),
        float(fit.intercept_stderr),
        float(fit.rvalue**2),
    )


def replica_seeds(seed: int, replicas: int) -> list[int]:
    return [derive_seed(seed, r) for r in range(replicas)]
