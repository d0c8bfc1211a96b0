"""Heat kernels on Euclidean space and flat tori, and Harnack-type checks.

All kernels are for the generator ``Delta/2``: ``p_t(x, y)`` is the density of
``x + B_t`` with ``B`` a standard Brownian motion, so the Euclidean kernel is
``(2 pi t)^(-d/2) exp(-|x - y|^2 / (2t))``.  Both model spaces are flat, so the
curvature constant is ``k = 0`` throughout and ``c(kt) = c(0) = 1``.

Torus kernels and quadratures factor over coordinates, so every
``d``-dimensional integral of a product integrand is evaluated as a product of
1-d periodic trapezoid rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, ResolutionError
from .mc import check_samples, check_seed, chunk_rng

QUAD_TOL = 1e-6
IMAGE_TOL = 1e-14
MIN_IMAGES = 5
_MIN_GRID = 32
_MAX_GRID = 1 << 15


def c_of(t: float) -> float:
    """``t / (e^t - 1)``, continuously extended by ``c(0) = 1``."""
    t = float(t)
    if abs(t) < 1e-5:
        # Taylor series; the t^3 term vanishes
        return 1.0 - t / 2.0 + t * t / 12.0 - t**4 / 720.0
    return t / math.expm1(t)


def _points(x, dim: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise InputError(f"{name} has dimension {x.shape[-1]}, kernel has {dim}")
    return x


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise InputError(f"t must be a positive real, got {t}")
    return t


@dataclass(frozen=True)
class EuclideanHeatKernel:
    dim: int
    name: str = field(default="euclidean", init=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InputError("dim must be positive")

    def density(self, t: float, x, y) -> np.ndarray:
        t = _check_t(t)
        x, y = _points(x, self.dim, "x"), _points(y, self.dim, "y")
        sq = np.sum((x - y) ** 2, axis=-1)
        return (2.0 * math.pi * t) ** (-self.dim / 2.0) * np.exp(-sq / (2.0 * t))

    def density_1d(self, t: float, x: np.ndarray, y: float, axis: int = 0) -> np.ndarray:
        return np.exp(-((x - y) ** 2) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)

    def distance(self, y, z) -> float:
        y, z = _points(y, self.dim, "y"), _points(z, self.dim, "z")
        return float(np.linalg.norm(y - z))

    def mass(self, t: float, center=None, half_width: float | None = None, n: int = 401) -> float:
        """Trapezoid mass of ``p_t(center, .)`` over a cube, as a product of 1-d rules."""
        t = _check_t(t)
        center = np.zeros(self.dim) if center is None else _points(center, self.dim, "center")
        half_width = 12.0 * math.sqrt(t) if half_width is None else half_width
        total = 1.0
        for j in range(self.dim):
            grid = np.linspace(center[j] - half_width, center[j] + half_width, n)
            total *= np.trapezoid(self.density_1d(t, grid, center[j]), grid)
        return float(total)


@dataclass(frozen=True)
class TorusHeatKernel:
    """Wrapped-Gaussian heat kernel on ``prod_j [0, L_j)`` with periodic images.

    ``image_cutoff`` is the minimum number of images per side; the number
    actually used at time ``t`` grows until the next image term falls below
    ``1e-14`` of the running sum in the worst case (displacement ``L/2``).
    """

    dim: int
    circumferences: tuple
    image_cutoff: int = MIN_IMAGES
    name: str = field(default="torus", init=False)

    def __post_init__(self):
        circ = tuple(float(c) for c in np.atleast_1d(self.circumferences))
        if len(circ) != int(self.dim) or any(not c > 0 for c in circ):
            raise InputError("need one positive circumference per dimension")
        if self.image_cutoff < 1:
            raise InputError("image_cutoff must be positive")
        object.__setattr__(self, "circumferences", circ)

    def images(self, t: float, axis: int) -> int:
        t = _check_t(t)
        L = self.circumferences[axis]
        m = max(self.image_cutoff, MIN_IMAGES)
        # worst case: the nearest image at distance L/2 dominates the sum
        central = math.exp(-((L / 2.0) ** 2) / (2.0 * t))
        while math.exp(-(((m + 1) * L - L / 2.0) ** 2) / (2.0 * t)) >= IMAGE_TOL * central:
            m += 1
        return m

    def wrap(self, delta: np.ndarray, axis: int) -> np.ndarray:
        L = self.circumferences[axis]
        return delta - L * np.round(delta / L)

    def density_1d(self, t: float, x: np.ndarray, y: float, axis: int = 0) -> np.ndarray:
        t = _check_t(t)
        L = self.circumferences[axis]
        m = self.images(t, axis)
        delta = self.wrap(np.asarray(x, dtype=float) - y, axis)
        k = np.arange(-m, m + 1)
        shifted = delta[..., None] + k * L
        terms = np.exp(-(shifted**2) / (2.0 * t))
        # add smallest terms first
        order = np.argsort(np.abs(k))[::-1]
        return terms[..., order].sum(axis=-1) / math.sqrt(2.0 * math.pi * t)

    def density(self, t: float, x, y) -> np.ndarray:
        x, y = _points(x, self.dim, "x"), _points(y, self.dim, "y")
        x, y = np.broadcast_arrays(x, y)
        out = np.ones(x.shape[:-1])
        for j in range(self.dim):
            out = out * self.density_1d(t, x[..., j] - y[..., j], 0.0, axis=j)
        return out

    def distance(self, y, z) -> float:
        y, z = _points(y, self.dim, "y"), _points(z, self.dim, "z")
        d = [self.wrap(np.asarray(y[j] - z[j]), j) for j in range(self.dim)]
        return float(np.sqrt(np.sum(np.square(d))))

    def grid(self, axis: int, n: int) -> np.ndarray:
        L = self.circumferences[axis]
        return np.arange(n) * (L / n)

    def mass(self, t: float, y=None, n: int = 256) -> float:
        y = np.zeros(self.dim) if y is None else _points(y, self.dim, "y")
        total = 1.0
        for j in range(self.dim):
            g = self.grid(j, n)
            total *= float(self.density_1d(t, g, y[j], axis=j).sum() * self.circumferences[j] / n)
        return total


HeatKernel = EuclideanHeatKernel | TorusHeatKernel


# ----------------------------------------------------------------------------
# Adaptive 1-d quadrature (grid doubling)
# ----------------------------------------------------------------------------


def _integrate_1d(rule: Callable[[int], float], grid: int | None, tol: float = QUAD_TOL):
    """Trapezoid value refined by grid doubling; returns ``(value, error_estimate, n)``.

    With ``grid`` given, the estimate compares ``grid`` with ``2 * grid``
    points; otherwise doubling starts at 32 points and stops once successive
    values agree to ``1e-12`` relative.
    """
    if grid is not None:
        if grid < 4:
            raise InputError("grid must have at least 4 points")
        coarse, fine = rule(grid), rule(2 * grid)
        err = abs(fine - coarse)
        if err > tol * max(1.0, abs(fine)):
            raise ResolutionError(f"grid {grid}: estimated quadrature error {err:.3g} > {tol}")
        return fine, err, 2 * grid
    n = _MIN_GRID
    prev = rule(n)
    while n < _MAX_GRID:
        n *= 2
        cur = rule(n)
        err = abs(cur - prev)
        if err <= 1e-12 * max(1.0, abs(cur)):
            return cur, err, n
        prev = cur
    if err > tol * max(1.0, abs(cur)):
        raise ResolutionError(f"quadrature did not resolve below {tol} (error {err:.3g})")
    return cur, err, n


def _harnack_rule_1d(kernel: HeatKernel, axis: int, y: float, z: float, t: float, p: float):
    """1-d factor of the integrated Harnack integral as a function of grid size.

    Returns ``(rule, log_scale)``: the factor is ``rule(n) * exp(log_scale)``.
    """
    if isinstance(kernel, TorusHeatKernel):
        L = kernel.circumferences[axis]

        def rule(n):
            x = kernel.grid(axis, n)
            a = kernel.density_1d(t, x, y, axis)
            b = kernel.density_1d(t, x, z, axis)
            return float(np.sum(a**p * b ** (1.0 - p)) * L / n)

        return rule, 0.0
    # window covering both kernels and the tilted centre z + p (y - z)
    lo = min(y, z) - p * abs(y - z) - 14.0 * math.sqrt(t)
    hi = max(y, z) + p * abs(y - z) + 14.0 * math.sqrt(t)

    # the exponent p log_a + (1-p) log_b peaks at p (p-1) (y-z)^2 / (2t)
    peak = p * (p - 1.0) * (y - z) ** 2 / (2.0 * t)

    def rule(n):
        x = np.linspace(lo, hi, n + 1)
        log_a = -((x - y) ** 2) / (2.0 * t)
        log_b = -((x - z) ** 2) / (2.0 * t)
        vals = np.exp(p * log_a + (1.0 - p) * log_b - peak) / math.sqrt(2.0 * math.pi * t)
        return float(np.trapezoid(vals, x))

    return rule, peak


def integrated_harnack_lhs(
    kernel: HeatKernel,
    y,
    z,
    t: float,
    p: float,
    method: str = "auto",
    grid: int | None = None,
) -> float:
    """``(int [p_t(y,x)/p_t(z,x)]^p p_t(z,x) dx)^(1/p)``.

    ``method="closed"`` (Euclidean only) uses ``exp((p-1)|y-z|^2/(2t))``;
    ``method="quadrature"`` integrates numerically.  ``"auto"`` picks the
    closed form for Euclidean kernels and quadrature for tori.
    """
    t = _check_t(t)
    p = float(p)
    if not p >= 1.0:
        raise InputError("p must be >= 1")
    y, z = _points(y, kernel.dim, "y"), _points(z, kernel.dim, "z")
    euclid = isinstance(kernel, EuclideanHeatKernel)
    if method == "auto":
        method = "closed" if euclid else "quadrature"
    if method == "closed":
        if not euclid:
            raise InputError("closed form is only available for the Euclidean kernel")
        return math.exp((p - 1.0) * float(np.sum((y - z) ** 2)) / (2.0 * t))
    if method != "quadrature":
        raise InputError(f"unknown method {method!r}")
    if np.array_equal(y, z):
        return 1.0
    log_total = 0.0
    for j in range(kernel.dim):
        rule, log_scale = _harnack_rule_1d(kernel, j, y[j], z[j], t, p)
        value, _, _ = _integrate_1d(rule, grid)
        log_total += math.log(value) + log_scale
    return math.exp(log_total / p)


# ----------------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class HarnackReport:
    """One evaluated inequality ``lhs <= rhs``.

    ``ok`` uses the tolerance relative to ``max(1, rhs)`` so that large
    right-hand sides are judged at the same relative precision.
    """

    check: str
    kernel: str
    params: dict
    lhs: float
    rhs: float
    tol: float = 1e-9
    form: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.margin >= -self.tol * max(1.0, abs(self.rhs))

    def row(self, param_keys) -> list:
        return [self.check, self.kernel] + [self.params[k] for k in param_keys] + [
            self.lhs,
            self.rhs,
            self.margin,
        ]


def check_integrated_harnack(kernel: HeatKernel, y, z, t: float, p: float, grid=None) -> HarnackReport:
    """Integrated Harnack inequality with ``k = 0``: lhs against ``exp((p-1) d^2 / (2t))``."""
    lhs = integrated_harnack_lhs(kernel, y, z, t, p, grid=grid)
    d = kernel.distance(y, z)
    rhs = math.exp(c_of(0.0) * (p - 1.0) * d * d / (2.0 * t))
    return HarnackReport(
        "integrated_harnack",
        kernel.name,
        {"t": float(t), "p": float(p), "d": d, "k": 0.0},
        lhs,
        rhs,
        form="(int (p_t(y,x)/p_t(z,x))^p p_t(z,x) dx)^(1/p) <= exp(c(kt)(p-1)d^2/(2t)), k=0",
    )


def _grid_axes(kernel: HeatKernel, centers, t: float, n: int):
    """Per-axis nodes and weights covering the kernel mass around ``centers``."""
    axes = []
    for j in range(kernel.dim):
        if isinstance(kernel, TorusHeatKernel):
            g = kernel.grid(j, n)
            axes.append((g, np.full(n, kernel.circumferences[j] / n)))
        else:
            lo = min(c[j] for c in centers) - 14.0 * math.sqrt(t)
            hi = max(c[j] for c in centers) + 14.0 * math.sqrt(t)
            g = np.linspace(lo, hi, n + 1)
            w = np.full(n + 1, (hi - lo) / n)
            w[[0, -1]] *= 0.5
            axes.append((g, w))
    return axes


def heat_semigroup(kernel: HeatKernel, f: Callable, t: float, points, n: int) -> np.ndarray:
    """``(P_t f)(y)`` for each row ``y`` of ``points`` by tensor-product quadrature.

    ``f`` is evaluated on the grid as ``f(X)`` with ``X`` of shape
    ``(..., dim)``.
    """
    points = np.atleast_2d(_points(points, kernel.dim, "points"))
    axes = _grid_axes(kernel, list(points), t, n)
    mesh = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1)
    weights = np.ones(mesh.shape[:-1])
    for j, (_, w) in enumerate(axes):
        shape = [1] * kernel.dim
        shape[j] = -1
        weights = weights * w.reshape(shape)
    fv = np.asarray(f(mesh), dtype=float)
    if np.any(fv < 0):
        raise InputError("f must be nonnegative on the quadrature grid")
    out = []
    for y in points:
        kern = np.ones(mesh.shape[:-1])
        for j in range(kernel.dim):
            shape = [1] * kernel.dim
            shape[j] = -1
            kern = kern * kernel.density_1d(t, axes[j][0], y[j], axis=j).reshape(shape)
        out.append(float(np.sum(kern * fv * weights)))
    return np.array(out)


def check_wang(
    kernel: HeatKernel,
    f: Callable,
    y,
    z,
    t: float,
    p: float,
    k: float = 0.0,
    grid: int | None = None,
) -> HarnackReport:
    """Wang's inequality ``(P_t f)^p(y) <= (P_t f^p)(z) exp(p' c(kt) d^2 / t)``.

    ``k/(e^{kt}-1)`` is written as ``c(kt)/t`` so that ``k = 0`` is the limit
    ``1/t``.  Semigroup values come from tensor-product quadrature; the grid
    is doubled until both quadratures agree to ``1e-6`` relative.
    """
    t = _check_t(t)
    p = float(p)
    if not p > 1.0:
        raise InputError("p must be > 1")
    y, z = _points(y, kernel.dim, "y"), _points(z, kernel.dim, "z")

    def evaluate(n):
        a = heat_semigroup(kernel, f, t, y, n)[0]
        b = heat_semigroup(kernel, lambda X: np.asarray(f(X), dtype=float) ** p, t, z, n)[0]
        return a, b

    n = grid or (64 if kernel.dim == 1 else 48)
    a0, b0 = evaluate(n)
    while True:
        a1, b1 = evaluate(2 * n)
        err = max(abs(a1 - a0) / max(abs(a1), 1e-300), abs(b1 - b0) / max(abs(b1), 1e-300))
        if err <= QUAD_TOL:
            break
        if grid is not None or 2 * n * max(1, kernel.dim) > 4096:
            raise ResolutionError(f"Wang quadrature error {err:.3g} > {QUAD_TOL}")
        n *= 2
        a0, b0 = a1, b1
    pp = p / (p - 1.0)
    d = kernel.distance(y, z)
    lhs = float(a1**p)
    rhs = float(b1 * math.exp(pp * c_of(k * t) * d * d / t))
    return HarnackReport(
        "wang",
        kernel.name,
        {"t": t, "p": p, "d": d, "k": float(k)},
        lhs,
        rhs,
        form="(P_t f)^p(y) <= (P_t f^p)(z) exp(p' k/(e^{kt}-1) d^2), k=0 -> exp(p' d^2/t)",
    )


# ----------------------------------------------------------------------------
# Li-Yau
# ----------------------------------------------------------------------------


LI_YAU_FORM = (
    "p_t(y,x)/p_{t+s}(z,x) <= ((t+s)/t)^(d a/2) exp(a d(y,z)^2/(2s)), K=0; "
    "generator Delta/2, i.e. the Delta-form bound at times t/2, s/2"
)


def li_yau_bound_delta(tau: float, sigma: float, alpha: float, dim: int, dist: float, K: float = 0.0) -> float:
    """Li-Yau bound for the heat kernel of ``Delta`` at times ``tau``, ``tau + sigma``."""
    exponent = alpha * dist * dist / (4.0 * sigma) + dim * alpha * K * sigma / (4.0 * (alpha - 1.0))
    return ((tau + sigma) / tau) ** (dim * alpha / 2.0) * math.exp(exponent)


def check_li_yau(kernel: EuclideanHeatKernel, alpha: float, t: float, s: float, x, y, z) -> HarnackReport:
    """Li-Yau Harnack inequality for the ``Delta/2`` kernel (``K = 0``).

    The classical bound is stated for ``e^{t Delta}``; our kernel at time
    ``t`` is that kernel at time ``t/2``, so the bound is evaluated at
    ``(t/2, s/2)``.  The resulting right side is
    ``((t+s)/t)^(d alpha/2) exp(alpha d(y,z)^2 / (2s))``.
    """
    if not isinstance(kernel, EuclideanHeatKernel):
        raise InputError("Li-Yau check is implemented for the Euclidean kernel")
    alpha = float(alpha)
    if not alpha > 1.0:
        raise InputError("alpha must be > 1")
    t, s = _check_t(t), _check_t(s)
    x, y, z = (_points(v, kernel.dim, n) for v, n in ((x, "x"), (y, "y"), (z, "z")))
    lhs = float(kernel.density(t, y, x) / kernel.density(t + s, z, x))
    rhs = li_yau_bound_delta(t / 2.0, s / 2.0, alpha, kernel.dim, kernel.distance(y, z))
    return HarnackReport(
        "li_yau",
        kernel.name,
        {"t": t, "s": s, "alpha": alpha, "d": kernel.distance(y, z)},
        lhs,
        rhs,
        form=LI_YAU_FORM,
    )


LI_YAU_BOX = {"x": (-3.0, 3.0), "t": (0.1, 5.0), "s": (0.5, 5.0), "alpha": (1.01, 4.0)}


def li_yau_battery(dim: int, draws: int, seed: int) -> list[HarnackReport]:
    """Seeded random draws of ``(x, y, z, t, s, alpha)`` from :data:`LI_YAU_BOX`."""
    draws = check_samples(draws)
    rng = chunk_rng(check_seed(seed), 0, stream=5)
    kernel = EuclideanHeatKernel(dim)
    lo, hi = LI_YAU_BOX["x"]
    pts = rng.uniform(lo, hi, (draws, 3, dim))
    ts = rng.uniform(*LI_YAU_BOX["t"], draws)
    ss = rng.uniform(*LI_YAU_BOX["s"], draws)
    alphas = rng.uniform(*LI_YAU_BOX["alpha"], draws)
    return [
        check_li_yau(kernel, alphas[i], ts[i], ss[i], pts[i, 0], pts[i, 1], pts[i, 2])
        for i in range(draws)
    ]


# ----------------------------------------------------------------------------
# Cross-check with the finite-state duality
# ----------------------------------------------------------------------------


def discretize_torus(kernel: TorusHeatKernel, t: float, m: int):
    """Finite kernel on an ``m``-point grid of a 1-d torus.

    ``nu`` holds the cell lengths and the sampled kernel is rescaled
    symmetrically to be exactly conservative.
    """
    from .kernel_duality import FiniteMarkovKernel, symmetric_scaling

    if kernel.dim != 1:
        raise InputError("discretization is implemented for 1-d tori")
    g = kernel.grid(0, m)
    a = kernel.density(t, g[:, None, None], g[None, :, None])
    nu = np.full(m, kernel.circumferences[0] / m)
    return FiniteMarkovKernel(nu, symmetric_scaling(a, nu)), g
