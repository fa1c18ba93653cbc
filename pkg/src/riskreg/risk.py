"""Predictive risk, its computable lower bound, and the bound's 1-D minimization.

With singular values s_1 >= ... >= s_r > 0 and h = sigma^2/rho^2, the
normalized lower bound is

    T_h(a) = a^2/(a + s_1^2)^2  +  h * sum_i s_i^4/(a + s_i^2)^2,

strictly convex on (0, s_1^2/2), with T_h -> r h as a -> 0+ and T_h -> 1 as
a -> inf.  Its minimizer depends on the data only through h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .linop import SpectralDecomposition
from .tikhonov import InfluenceQuantities, influence_exact

SEARCH_CAP = 0.5  # the minimizer is searched on [0, s1^2 * SEARCH_CAP]


@dataclass
class RiskCurve:
    """A risk-like functional sampled on an increasing alpha grid."""

    alphas: np.ndarray
    values: np.ndarray
    kind: str  # "predictive" | "lower_bound" | "upre" | "gcv"

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve values must be finite")

    def to_csv(self, target) -> None:
        """Write alpha,value,kind rows; target is a path or text file object."""
        close = False
        if not hasattr(target, "write"):
            target = open(target, "w", newline="")
            close = True
        try:
            target.write("alpha,value,kind\n")
            for a, v in zip(self.alphas, self.values):
                target.write(f"{a:.12g},{v:.12g},{self.kind}\n")
        finally:
            if close:
                target.close()


@dataclass
class MinimizerResult:
    """Outcome of the 1-D lower-bound minimization."""

    alpha_star: float
    objective: float
    bracket: Tuple[float, float]
    iterations: int
    converged: bool
    at_boundary: bool = False


def predictive_risk(dec: SpectralDecomposition, g_true, sigma2: float, alpha: float):
    """Expected squared prediction error at alpha: bias plus noise amplification."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    g_true = np.asarray(g_true, dtype=float)
    c = dec.U.T @ g_true
    s2 = dec.s * dec.s
    a = np.asarray(alpha, dtype=float)
    denom = s2 + a[..., None]
    bias = np.sum((a[..., None] / denom) ** 2 * (c * c), axis=-1)
    var = sigma2 * np.sum((s2 / denom) ** 2, axis=-1)
    out = bias + var
    return float(out) if np.isscalar(alpha) else out


def predictive_risk_derivative(dec: SpectralDecomposition, g_true, sigma2: float, alpha: float):
    """d/dalpha of the predictive risk (diagnostic for the over-smoothing check)."""
    g_true = np.asarray(g_true, dtype=float)
    c = dec.U.T @ g_true
    s2 = dec.s * dec.s
    a = np.asarray(alpha, dtype=float)
    denom = (s2 + a[..., None]) ** 3
    bias_d = np.sum(2.0 * a[..., None] * s2 * (c * c) / denom, axis=-1)
    var_d = sigma2 * np.sum(2.0 * s2 * s2 / denom, axis=-1)
    out = bias_d - var_d
    return float(out) if np.isscalar(alpha) else out


def lower_bound_T(rho2: float, sigma2: float,
                  source: Union[SpectralDecomposition, InfluenceQuantities],
                  alpha: float | None = None) -> float:
    """Evaluate rho^2 * sn_sq + sigma^2 * frob_sq from a spectrum or from
    precomputed influence quantities (exact or stochastic)."""
    if rho2 <= 0 or sigma2 < 0:
        raise ValueError("need rho2 > 0 and sigma2 >= 0")
    if isinstance(source, InfluenceQuantities):
        inf = source
        if alpha is not None and not np.isclose(alpha, inf.alpha, rtol=1e-12, atol=0.0):
            raise ValueError("alpha disagrees with the influence quantities")
    else:
        if alpha is None:
            raise ValueError("alpha is required with a spectral source")
        inf = influence_exact(source, alpha)
    return rho2 * inf.sn_sq + sigma2 * inf.frob_sq


def T_h(dec: SpectralDecomposition, h: float, alpha):
    """The normalized lower bound f1 + h f2."""
    s2 = dec.s * dec.s
    a = np.asarray(alpha, dtype=float)
    f1 = (a / (a + s2[0])) ** 2 if dec.rank else np.ones_like(a)
    f2 = np.sum((s2 / (a[..., None] + s2)) ** 2, axis=-1)
    out = f1 + h * f2
    return float(out) if np.isscalar(alpha) else out


def _T_h_derivative_terms(dec: SpectralDecomposition, alpha):
    s2 = dec.s * dec.s
    a = np.asarray(alpha, dtype=float)
    t1 = 2.0 * a * s2[0] / (a + s2[0]) ** 3
    t2 = np.sum(2.0 * s2 * s2 / (a[..., None] + s2) ** 3, axis=-1)
    return t1, t2


def T_h_derivative(dec: SpectralDecomposition, h: float, alpha):
    """Closed-form derivative of T_h."""
    if h <= 0:
        raise ValueError("h must be positive")
    t1, t2 = _T_h_derivative_terms(dec, alpha)
    out = t1 - h * t2
    return float(out) if np.isscalar(alpha) else out


def _T_h_second(dec: SpectralDecomposition, h: float, alpha: float) -> float:
    s2 = dec.s * dec.s
    f1 = 2.0 * s2[0] * (s2[0] - 2.0 * alpha) / (alpha + s2[0]) ** 4
    f2 = np.sum(6.0 * s2 * s2 / (alpha + s2) ** 4)
    return float(f1 + h * f2)


def minimize_T(dec: SpectralDecomposition, h: float, rel_grad_tol: float = 1e-12,
               width_tol: float = 1e-12, max_iter: int = 300) -> MinimizerResult:
    """Minimize T_h over [0, s1^2/2] by safeguarded Newton on its derivative.

    The derivative is negative at 0+; if it is still nonpositive at the right
    endpoint the endpoint is returned with ``at_boundary`` set.  Otherwise the
    unique interior stationary point lies in [s1^2 h, s1^2/2] and is located
    there by Newton steps clipped to the sign-change bracket, with geometric
    bisection as the fallback (the root can sit many decades below the
    endpoint).  Convergence is relative: the derivative's two terms must
    cancel to ``rel_grad_tol``, or the bracket must shrink to ``width_tol``
    relative width.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if dec.rank == 0:
        raise ValueError("cannot minimize over a zero operator")
    s1_sq = float(dec.s[0]) ** 2
    hi = SEARCH_CAP * s1_sq
    t1, t2 = _T_h_derivative_terms(dec, hi)
    if t1 - h * t2 <= 0.0:
        return MinimizerResult(alpha_star=hi, objective=T_h(dec, h, hi),
                               bracket=(0.0, hi), iterations=0, converged=True,
                               at_boundary=True)
    # any interior stationary point satisfies alpha >= s1^2 h
    lo = s1_sq * h
    t1, t2 = _T_h_derivative_terms(dec, lo)
    if t1 - h * t2 >= 0.0:
        return MinimizerResult(alpha_star=lo, objective=T_h(dec, h, lo),
                               bracket=(lo, lo), iterations=0, converged=True)
    up = hi
    x = np.sqrt(lo * up)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        t1, t2 = _T_h_derivative_terms(dec, x)
        d = t1 - h * t2
        if abs(d) <= rel_grad_tol * (t1 + h * t2):
            converged = True
            break
        if d < 0:
            lo = x
        else:
            up = x
        if up - lo <= width_tol * up:
            converged = True
            break
        curv = _T_h_second(dec, h, x)
        x_new = x - d / curv if curv > 0 else np.sqrt(lo * up)
        if not (lo < x_new < up):
            x_new = np.sqrt(lo * up)
        x = x_new
    return MinimizerResult(alpha_star=float(x), objective=T_h(dec, h, x),
                           bracket=(lo, up), iterations=it, converged=converged)


def alpha_bounds(dec: SpectralDecomposition, h: float):
    """Analytic bracket for the minimizer: (s1^2 h, upper) with upper defined
    only when h is below zeta = s1^2 / tr(A^T A)."""
    if h <= 0:
        raise ValueError("h must be positive")
    s1_sq = float(dec.s[0]) ** 2
    zeta = s1_sq / float(np.sum(dec.s * dec.s))
    lo = s1_sq * h
    if h >= zeta:
        return lo, None
    t = (h / zeta) ** (1.0 / 3.0)
    return lo, s1_sq * t / (1.0 - t)


def global_minimizer_certificate(dec: SpectralDecomposition, h: float) -> bool:
    """True when h <= 1/(27 r): the interval minimizer is then the global one."""
    if h <= 0:
        raise ValueError("h must be positive")
    return h <= 1.0 / (27.0 * dec.rank)


def upper_bound_threshold(dec: SpectralDecomposition) -> float:
    """s1^{4/3} * s_r^{2/3}: below this alpha the over-smoothing guarantee
    provably kicks in for any true data (a loose diagnostic)."""
    s1 = float(dec.s[0])
    sr = float(dec.s[dec.rank - 1])
    return s1 ** (4.0 / 3.0) * sr ** (2.0 / 3.0)
