"""Wang-type inequalities versus integrated Harnack norms on finite state spaces.

For a positive, symmetric, conservative kernel ``p`` on ``{0..m-1}`` with
reference weights ``nu``, the operator ``(Tf)(x) = sum_y p(x,y) f(y) nu(y)``
satisfies

    (Tf)(x)^p <= C^p (T f^p)(y)   for all f >= 0

exactly when ``C`` dominates the ``L^{p'}(p(y,.) nu)`` norm of the ratio
``g(z) = p(x,z) / p(y,z)``.  Everything here is exact linear algebra apart
from the random search, which is a seeded lower bound on the supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, KernelValidationError
from .mc import check_samples, check_seed, chunk_rng

SYMMETRY_TOL = 1e-14
CONSERVATIVE_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMarkovKernel:
    nu: np.ndarray
    kernel: np.ndarray

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float, copy=True)
        k = np.array(self.kernel, dtype=float, copy=True)
        if nu.ndim != 1 or nu.size == 0 or k.shape != (nu.size, nu.size):
            raise InputError("need nu of length m and an m x m kernel")
        if not np.all(nu > 0):
            raise InputError("reference weights nu must be positive")
        failed, details = [], []
        if not np.all(k > 0):
            failed.append("positivity")
            details.append(f"min entry {k.min():.3g}")
        asym = float(np.max(np.abs(k - k.T)))
        if asym > SYMMETRY_TOL:
            failed.append("symmetry")
            details.append(f"max |p(x,y)-p(y,x)| = {asym:.3g}")
        resid = float(np.max(np.abs(k @ nu - 1.0)))
        if resid > CONSERVATIVE_TOL:
            failed.append("conservativeness")
            details.append(f"max |sum_y p(x,y)nu(y) - 1| = {resid:.3g}")
        if failed:
            raise KernelValidationError(failed, "; ".join(details))
        nu.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "kernel", k)

    @property
    def states(self) -> int:
        return self.nu.size

    @classmethod
    def two_state(cls, a: float) -> "FiniteMarkovKernel":
        """``[[a, 1-a], [1-a, a]]`` with unit weights."""
        return cls(np.ones(2), np.array([[a, 1.0 - a], [1.0 - a, a]]))


def symmetric_scaling(a: np.ndarray, nu: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000):
    """Find ``d > 0`` with ``diag(d) a diag(d)`` conservative w.r.t. ``nu``.

    Symmetric Sinkhorn iteration ``d <- sqrt(d / (a (d nu)))``; the fixed
    point solves ``d_x (a (d nu))_x = 1``.  Returns the exactly symmetrised
    scaled matrix.
    """
    d = np.ones(nu.size)
    for _ in range(max_iter):
        d = np.sqrt(d / (a @ (d * nu)))
        p = d[:, None] * a * d[None, :]
        p = 0.5 * (p + p.T)
        if np.max(np.abs(p @ nu - 1.0)) < tol:
            return p
    raise InputError("symmetric scaling did not converge")


def random_kernel(m: int, seed: int, nu=None, spread: float = 1.0) -> FiniteMarkovKernel:
    """Seeded random valid kernel on ``m`` states.

    Entries start as exponentials of Gaussians (scale ``spread``), are
    symmetrised, then scaled to be conservative for ``nu`` (default: seeded
    random weights in ``[0.5, 1.5]``).
    """
    if m < 1:
        raise InputError("m must be positive")
    rng = chunk_rng(check_seed(seed), 0, stream=11)
    g = np.exp(spread * rng.standard_normal((m, m)))
    a = 0.5 * (g + g.T)
    if nu is None:
        nu = rng.uniform(0.5, 1.5, m)
    nu = np.asarray(nu, dtype=float)
    return FiniteMarkovKernel(nu, symmetric_scaling(a, nu))


def _check_f(K: FiniteMarkovKernel, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != K.states:
        raise InputError(f"test function has {f.shape[-1]} values, kernel has {K.states} states")
    if np.any(f < 0):
        raise InputError("test functions must be nonnegative")
    return f


def _check_state(K, x):
    if not 0 <= int(x) < K.states:
        raise InputError(f"state {x} out of range")
    return int(x)


def apply(K: FiniteMarkovKernel, f) -> np.ndarray:
    """``(Tf)(x) = sum_y p(x,y) f(y) nu(y)`` for every ``x``."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != K.states:
        raise InputError(f"f has {f.shape[-1]} values, kernel has {K.states} states")
    return K.kernel @ (f * K.nu)


def integrated_harnack_norm(K: FiniteMarkovKernel, x: int, y: int, p_prime: float) -> float:
    """``(sum_z [p(x,z)/p(y,z)]^q p(y,z) nu(z))^(1/q)`` with ``q = p_prime``."""
    x, y = _check_state(K, x), _check_state(K, y)
    q = float(p_prime)
    if not q > 1.0:
        raise InputError("p_prime must be > 1")
    if x == y:
        return 1.0
    ratio = K.kernel[x] / K.kernel[y]
    weights = K.kernel[y] * K.nu
    return float(np.sum(ratio**q * weights) ** (1.0 / q))


def conjugate(p: float) -> float:
    p = float(p)
    if not p > 1.0:
        raise InputError("p must be > 1")
    return p / (p - 1.0)


def wang_ratio(K: FiniteMarkovKernel, f, x: int, y: int, p: float) -> np.ndarray:
    """``(Tf)(x) / [(T f^p)(y)]^(1/p)``; ``f`` may be a stack of functions (rows)."""
    f = _check_f(K, f)
    num = f @ (K.kernel[x] * K.nu)
    den = (f**p) @ (K.kernel[y] * K.nu)
    return num / den ** (1.0 / p)


def extremal_function(K: FiniteMarkovKernel, x: int, y: int, p: float) -> np.ndarray:
    """Hoelder extremiser ``g^(p'-1)`` with ``g = p(x,.)/p(y,.)``."""
    pp = conjugate(p)
    return (K.kernel[x] / K.kernel[y]) ** (pp - 1.0)


def wang_constant_extremal(K: FiniteMarkovKernel, x: int, y: int, p: float) -> float:
    x, y = _check_state(K, x), _check_state(K, y)
    if x == y:
        return 1.0
    return float(wang_ratio(K, extremal_function(K, x, y, p), x, y, p))


def wang_random_search(
    K: FiniteMarkovKernel,
    x: int,
    y: int,
    p: float,
    trials: int,
    seed: int,
    sigma: float = 1.0,
    batch: int = 1024,
    local_batch: int = 64,
) -> float:
    """Largest Wang ratio found over ``trials`` seeded nonnegative test functions.

    The first batch starts with ``f = 1``, whose ratio is exactly 1 for a
    conservative kernel and is recorded as such rather than with the
    round-off of the normalisation.  For ``x == y`` the supremum is 1 by
    Jensen's inequality and is returned directly.  The first half of the trials are
    i.i.d. log-normal vectors with log-scale ``sigma`` (batches of ``batch``);
    the rest are log-normal multiplicative perturbations of the incumbent in
    batches of ``local_batch``.  The perturbation scale grows by 1.5 after an
    improving batch and shrinks by 0.7 otherwise.  Batches run sequentially
    with generators derived from ``(seed, batch index)``.
    """
    x, y = _check_state(K, x), _check_state(K, y)
    trials = check_samples(trials)
    seed = check_seed(seed)
    conjugate(p)
    if x == y:
        return 1.0
    explore = max(1, trials // 2)
    best_f = np.ones(K.states)
    best = -np.inf
    scale = 0.5 * sigma
    done = index = 0
    while done < trials:
        local = done >= explore
        n = min(local_batch if local else batch, trials - done, explore - done if not local else trials)
        rng = chunk_rng(seed, index, stream=3)
        z = rng.standard_normal((n, K.states))
        f = best_f * np.exp(scale * z) if local else np.exp(sigma * z)
        if index == 0:
            f[0] = 1.0
        ratios = wang_ratio(K, f, x, y, p)
        if index == 0:
            ratios[0] = 1.0
        i = int(np.argmax(ratios))
        improved = ratios[i] > best
        if improved:
            best, best_f = float(ratios[i]), f[i].copy()
        if local:
            scale = min(1.5 * scale, sigma) if improved else max(0.7 * scale, 1e-4)
        done += n
        index += 1
    return best


@dataclass(frozen=True)
class WangCertificate:
    certified: bool
    constant: float
    norm: float
    witness: np.ndarray | None = None
    witness_ratio: float | None = None
    search_ratio: float | None = None


def certify_wang(
    K: FiniteMarkovKernel, x: int, y: int, p: float, C: float, trials: int = 0, seed: int = 0
) -> WangCertificate:
    """Decide whether ``C`` is a valid Wang constant for ``(x, y, p)``.

    The decision is exact: it compares ``C`` with the integrated Harnack norm
    at the conjugate exponent.  A refutation carries the extremal function,
    whose Wang ratio exceeds ``C``.  A nonzero ``trials`` also records the
    best ratio found by the random search as independent evidence.
    """
    if not C > 0:
        raise InputError("C must be positive")
    norm = integrated_harnack_norm(K, x, y, conjugate(p))
    search = wang_random_search(K, x, y, p, trials, seed) if trials else None
    if C >= norm - 1e-12:
        return WangCertificate(True, float(C), norm, search_ratio=search)
    witness = extremal_function(K, x, y, p)
    ratio = float(wang_ratio(K, witness, x, y, p))
    return WangCertificate(False, float(C), norm, witness, ratio, search)


def read_kernel_csv(path) -> FiniteMarkovKernel:
    """Parse ``m`` / ``nu`` / ``m`` kernel rows; invariants are validated on construction."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise InputError("kernel file needs at least two lines")
    try:
        m = int(lines[0])
        nu = [float(v) for v in lines[1].split(",")]
        rows = [[float(v) for v in ln.split(",")] for ln in lines[2:]]
    except ValueError as exc:
        raise InputError(f"malformed kernel file: {exc}") from None
    if len(nu) != m or len(rows) != m or any(len(r) != m for r in rows):
        raise InputError(f"kernel file shape does not match m = {m}")
    return FiniteMarkovKernel(np.array(nu), np.array(rows))


def write_kernel_csv(K: FiniteMarkovKernel, path) -> None:
    out = [str(K.states), ",".join(repr(float(v)) for v in K.nu)]
    out += [",".join(repr(float(v)) for v in row) for row in K.kernel]
    Path(path).write_text("\n".join(out) + "\n")
