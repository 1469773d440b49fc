"""Pre-processing maps placed in front of a reconstruction network.

Two families are provided:

* :class:`FilterStabilizer` -- a periodic Gaussian low-pass filter;
* :class:`IterativeStabilizer` -- ``M`` iterations of a solver for the
  Tikhonov problem ``argmin 0.5*||Kx - y||^2 + lam*||x||^2`` started from a
  fixed iterate.  CGLS is the default solver; Landweber iteration is offered
  because it is affine in ``y``, so its noise gain is exactly computable.

Objective convention: the data term carries a factor 1/2 and the penalty does
not, so ``2*lam`` appears in the normal equations ``(K^T K + 2 lam I) x = K^T y``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .imaging import BlurOperator, Psf, as_image, gaussian_psf

TIKHONOV_OBJECTIVE = "0.5*||Kx - y||^2 + lambda*||x||^2"

__all__ = [
    "TIKHONOV_OBJECTIVE",
    "TikhonovProblem",
    "IdentityStabilizer",
    "FilterStabilizer",
    "IterativeStabilizer",
    "filter_apply",
    "tikhonov_direct",
    "cgls_solve",
    "landweber_solve",
    "default_landweber_step",
    "landweber_gain_spectrum",
    "estimate_stabilizer_gain",
    "dc_gain",
]


@dataclass(frozen=True)
class TikhonovProblem:
    op: BlurOperator
    lam: float = 1e-2

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam!r}")

    @property
    def shift(self) -> float:
        """Diagonal shift of the normal equations, ``2*lam``."""
        return 2.0 * self.lam


def _sqnorm(a):
    return np.sum(a * a, axis=(-2, -1), keepdims=True)


def _start(p: TikhonovProblem, y, x0):
    y = p.op._check(y, "y")
    if x0 is None:
        return y, np.zeros_like(y)
    x0 = as_image(x0, "x0")
    if x0.shape[-2:] != p.op.shape:
        raise DimensionError(f"x0 has spatial shape {x0.shape[-2:]}, expected {p.op.shape}")
    return y, np.broadcast_to(x0, y.shape).copy()


def tikhonov_direct(p: TikhonovProblem, y) -> np.ndarray:
    """Closed-form Tikhonov minimizer ``conj(T) Y / (|T|^2 + 2 lam)`` in the Fourier domain."""
    y = p.op._check(y, "y")
    t = p.op.transfer
    return p.op._spectral(y, np.conj(t) / (np.abs(t) ** 2 + p.shift))


def cgls_solve(p: TikhonovProblem, y, M: int, x0=None, rtol: float = 1e-14) -> np.ndarray:
    """Run ``M`` CGLS iterations on the augmented system ``[K; sqrt(2 lam) I] x = [y; 0]``.

    Stacks of images are solved independently, each with its own step sizes.
    An image is frozen at its current iterate once the recurrence breaks down
    or its normal-equation residual falls to ``rtol`` times the initial one;
    past that point the Krylov coefficients are ratios of rounding noise.
    """
    if M < 0:
        raise InvalidParameterError(f"M must be non-negative, got {M}")
    y, x = _start(p, y, x0)
    if M == 0:
        return x
    op, mu = p.op, p.shift
    r = y - op.apply(x)
    s = op.adjoint(r) - mu * x
    d = s.copy()
    gamma = _sqnorm(s)
    floor = rtol * rtol * gamma
    for _ in range(M):
        q = op.apply(d)
        denom = _sqnorm(q) + mu * _sqnorm(d)
        active = (denom > 0) & (gamma > floor) & (gamma > 0)
        if not active.any():
            break
        alpha = np.where(active, gamma / np.where(active, denom, 1.0), 0.0)
        x += alpha * d
        r -= alpha * q
        s = op.adjoint(r) - mu * x
        gamma_new = _sqnorm(s)
        beta = gamma_new / np.where(active, gamma, 1.0)
        d = np.where(active, s + beta * d, d)
        gamma = np.where(active, gamma_new, gamma)
    return x


def default_landweber_step(p: TikhonovProblem) -> float:
    return 1.0 / (p.op.norm**2 + p.shift)


def _check_step(p: TikhonovProblem, step: float):
    bound = 2.0 / (p.op.norm**2 + p.shift)
    if not 0 < step < bound:
        raise InvalidParameterError(f"Landweber step must lie in (0, {bound:.6g}), got {step!r}")


def landweber_solve(p: TikhonovProblem, y, M: int, step: float | None = None, x0=None) -> np.ndarray:
    """``M`` gradient steps ``x <- x - step*(K^T(Kx - y) + 2 lam x)``."""
    if M < 0:
        raise InvalidParameterError(f"M must be non-negative, got {M}")
    step = default_landweber_step(p) if step is None else float(step)
    _check_step(p, step)
    y, x = _start(p, y, x0)
    op, mu = p.op, p.shift
    for _ in range(M):
        x -= step * (op.adjoint(op.apply(x) - y) + mu * x)
    return x


def landweber_gain_spectrum(p: TikhonovProblem, M: int, step: float | None = None) -> np.ndarray:
    """Per-frequency gain of the linear part ``y -> x_M`` of Landweber iteration.

    With ``a = |T|^2 + 2 lam`` and ``rho = 1 - step*a`` the linear part is
    ``step * sum_{j<M} rho^j * conj(T)``, whose modulus is
    ``|T| * (1 - rho^M) / a``.
    """
    step = default_landweber_step(p) if step is None else float(step)
    mag = np.abs(p.op.transfer)
    a = mag**2 + p.shift
    rho = 1.0 - step * a
    return mag * (1.0 - rho**M) / a


class IdentityStabilizer:
    tag = "none"

    def __call__(self, y):
        return as_image(y, "y").copy()

    def gain_spectrum(self, shape):
        return np.ones(shape)


class FilterStabilizer:
    """Periodic convolution with a (Gaussian) low-pass kernel."""

    tag = "filter"

    def __init__(self, psf_f: Psf | None = None, radius: int = 3, sigma_f: float = 1.0):
        if psf_f is None:
            psf_f = gaussian_psf(radius, sigma_f)
        if abs(psf_f.weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError("filter weights must sum to 1")
        self.psf_f = psf_f
        self._ops = {}

    def __repr__(self):
        return f"FilterStabilizer(radius={self.psf_f.radius})"

    def operator(self, shape) -> BlurOperator:
        shape = tuple(shape)
        if shape not in self._ops:
            self._ops[shape] = BlurOperator(self.psf_f, shape)
        return self._ops[shape]

    def __call__(self, y):
        y = as_image(y, "y")
        return self.operator(y.shape[-2:]).apply(y)

    def gain_spectrum(self, shape):
        return np.abs(self.operator(shape).transfer)


def filter_apply(f: FilterStabilizer, y) -> np.ndarray:
    return f(y)


class IterativeStabilizer:
    """``phi_M``: the ``M``-th iterate of a Tikhonov solver from a fixed start."""

    tag = "iterative"

    def __init__(self, problem: TikhonovProblem, method: str = "cgls", iterations: int = 50,
                 x0=None, landweber_step: float | None = None):
        method = method.lower()
        if method not in ("cgls", "landweber"):
            raise InvalidParameterError(f"unknown iterative method {method!r}")
        if iterations < 1:
            raise InvalidParameterError(f"iterations must be >= 1, got {iterations}")
        self.problem = problem
        self.method = method
        self.iterations = int(iterations)
        self.x0 = None if x0 is None else as_image(x0, "x0")
        if method == "landweber":
            step = default_landweber_step(problem) if landweber_step is None else float(landweber_step)
            _check_step(problem, step)
            self.landweber_step = step
        else:
            self.landweber_step = landweber_step

    def __repr__(self):
        return (f"IterativeStabilizer(method={self.method!r}, lam={self.problem.lam}, "
                f"M={self.iterations})")

    def __call__(self, y):
        if self.method == "cgls":
            return cgls_solve(self.problem, y, self.iterations, self.x0)
        return landweber_solve(self.problem, y, self.iterations, self.landweber_step, self.x0)

    @property
    def is_affine(self) -> bool:
        return self.method == "landweber"

    def gain_spectrum(self, shape=None):
        if not self.is_affine:
            raise TypeError("CGLS iterates are nonlinear in y; only a sampled gain is available")
        return landweber_gain_spectrum(self.problem, self.iterations, self.landweber_step)


def estimate_stabilizer_gain(phi, op: BlurOperator, samples: int = 1, sigma: float = 0.05,
                             seed: int = 0, power_iters: int = 0, tol: float = 0.0,
                             images=None) -> float:
    """Empirical stability constant of ``phi``: max of ``||phi(Kx+e) - phi(Kx)|| / ||e||``.

    ``samples`` pairs ``(x, e)`` are drawn with ``x`` uniform on [0, 1] (or
    taken cyclically from ``images``) and ``e`` zero-mean Gaussian noise of
    level ``sigma``.  Each perturbation is then refined ``power_iters`` times
    by replacing it with the (mean-free, rescaled) response it produced, a
    power iteration on the map's local linearization that drives ``e`` toward
    the most amplified direction.  The maximum ratio seen is returned.  The
    constant image direction is excluded; see :func:`dc_gain`.
    """
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    if not sigma > 0:
        raise InvalidParameterError("sigma must be positive")
    rng = np.random.default_rng(seed)
    shape = (samples,) + tuple(op.shape)
    if images is None:
        x = rng.uniform(size=shape)
    else:
        imgs = as_image(images, "images").reshape((-1,) + tuple(op.shape))
        x = imgs[np.arange(samples) % len(imgs)]
    y0 = op.apply(x)
    base = phi(y0)
    e = sigma * rng.standard_normal(shape)
    e -= e.mean(axis=(-2, -1), keepdims=True)
    scale = np.sqrt(_sqnorm(e))

    best = 0.0
    prev = None
    for _ in range(power_iters + 1):
        d = phi(y0 + e) - base
        dn = np.sqrt(_sqnorm(d))
        ratio = (dn / np.sqrt(_sqnorm(e))).ravel()
        best = max(best, float(ratio.max()))
        if prev is not None and np.all(np.abs(ratio - prev) <= tol * ratio):
            break
        prev = ratio
        if np.any(dn == 0):
            break
        d -= d.mean(axis=(-2, -1), keepdims=True)
        e = d * (scale / np.sqrt(_sqnorm(d)))
    return best


def dc_gain(phi, op: BlurOperator, level: float = 0.05, seed: int = 0) -> float:
    """Gain of ``phi`` along the constant-image direction."""
    rng = np.random.default_rng(seed)
    y0 = op.apply(rng.uniform(size=op.shape))
    e = np.full(op.shape, level)
    return float(np.linalg.norm(phi(y0 + e) - phi(y0)) / np.linalg.norm(e))
