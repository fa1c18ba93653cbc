"""Parameter-choice rules behind one interface.

Two families share the machinery:

- lower-bound minimization: ``pro`` (signal and noise energies known),
  ``pro_estimated`` (noise known, signal energy estimated from the data) and
  ``ipro`` (neither known; alternate between estimating the signal-to-noise
  ratio from the residual and reminimizing);
- classical rules on a sampled regularization path: ``dp``, ``upre``, ``bp``,
  ``gcv``, ``lc`` and ``qoc``.

Rules used inside the replicate harness operate in grid mode: they select a
point of the shared path, so their error can never beat the path oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DegenerateDataError
from .linop import SpectralDecomposition, as_operator
from .problems import snr_db
from .risk import minimize_T
from .tikhonov import InfluencePath, SolutionPath, influence_path_exact

RULE_NAMES = ("pro", "ipro", "dp", "upre", "bp", "gcv", "lc", "qoc")

# Relative residual below which the noise level is considered unidentifiable
# (the residual is then dominated by floating-point rounding).
RESIDUAL_FLOOR = 1e-14


@dataclass
class RuleSelection:
    """A chosen regularization parameter with its diagnostic trail."""

    rule: str
    alpha: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = self.diagnostics
        payload = {
            "rule": self.rule,
            "alpha": self.alpha,
            "xi_hat": d.get("xi_hat"),
            "rho2_hat": d.get("rho2_hat"),
            "sigma2_hat": d.get("sigma2_hat"),
            "iterations": d.get("iterations"),
            "flags": d.get("flags", []),
        }
        if "trail" in d:
            payload["trail"] = [float(a) for a in d["trail"]]
        return json.dumps(payload)


@dataclass(frozen=True)
class SnrSpec:
    """Signal-to-noise specification: either energies or decibels.

    When both are given they must agree: xi = 10 log10(rho2 / (n sigma2)).
    """

    rho2: Optional[float] = None
    sigma2: Optional[float] = None
    xi: Optional[float] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.rho2 is not None and self.sigma2 is not None and self.xi is not None:
            if self.n is None:
                raise ValueError("n is required to cross-check xi")
            implied = snr_db(self.rho2, self.sigma2, self.n)
            if not np.isclose(implied, self.xi, rtol=1e-10, atol=1e-10):
                raise ValueError("inconsistent SNR specification")

    def h(self) -> float:
        if self.rho2 is not None and self.sigma2 is not None:
            return self.sigma2 / self.rho2
        if self.xi is not None and self.n is not None:
            return 1.0 / (self.n * 10.0 ** (self.xi / 10.0))
        raise ValueError("underdetermined SNR specification")


def _argmin_last(values: np.ndarray) -> int:
    # grid minimizers break ties toward the largest alpha
    v = np.asarray(values)
    return int(v.size - 1 - np.argmin(v[::-1]))


def _lower_bound_values(inf: InfluencePath, rho2: float, sigma2: float) -> np.ndarray:
    return rho2 * inf.sn_sq + sigma2 * inf.frob_sq


def _select_min_T(source, rho2: float, sigma2: float):
    """Minimize the lower bound: continuous on a spectrum, grid argmin on an
    influence path.  Returns (alpha, diagnostics)."""
    h = sigma2 / rho2
    if isinstance(source, SpectralDecomposition):
        res = minimize_T(source, h)
        diag = {"h": h, "objective": res.objective * rho2,
                "iterations": res.iterations, "converged": res.converged,
                "flags": (["boundary"] if res.at_boundary else [])}
        return res.alpha_star, diag
    if isinstance(source, InfluencePath):
        values = _lower_bound_values(source, rho2, sigma2)
        idx = _argmin_last(values)
        flags = []
        if idx in (0, len(values) - 1):
            flags.append("grid_edge")
        diag = {"h": h, "objective": float(values[idx]), "grid_index": idx,
                "objective_samples": values, "flags": flags}
        return float(source.alphas[idx]), diag
    raise TypeError("source must be a SpectralDecomposition or InfluencePath")


def pro(source, rho2: float, sigma2: float, n: Optional[int] = None) -> RuleSelection:
    """Minimize the predictive-risk lower bound for known (rho2, sigma2)."""
    if rho2 <= 0 or sigma2 <= 0:
        raise ValueError("need rho2 > 0 and sigma2 > 0")
    alpha, diag = _select_min_T(source, rho2, sigma2)
    diag.update(rho2_hat=rho2, sigma2_hat=sigma2)
    if n is not None:
        diag["xi_hat"] = snr_db(rho2, sigma2, n)
    return RuleSelection(rule="pro", alpha=alpha, diagnostics=diag)


def pro_estimated(source, g, sigma2: float, on_degenerate: str = "raise") -> RuleSelection:
    """Lower-bound rule with the signal energy estimated as ||g||^2 - n sigma2.

    The estimator is unbiased for the exact data energy.  When it comes out
    nonpositive the data is indistinguishable from pure noise; the default is
    to raise, ``on_degenerate="max_alpha"`` opts into maximal smoothing.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    g = np.asarray(g, dtype=float)
    n = g.size
    rho2_hat = float(g @ g) - n * sigma2
    if rho2_hat <= 0:
        if on_degenerate == "max_alpha":
            if isinstance(source, InfluencePath):
                alpha = float(source.alphas[-1])
            else:
                alpha = 0.5 * float(source.s[0]) ** 2
            return RuleSelection(rule="pro", alpha=alpha, diagnostics={
                "rho2_hat": rho2_hat, "sigma2_hat": sigma2,
                "flags": ["degenerate_snr", "fallback_max_alpha"]})
        raise DegenerateDataError(
            "estimated signal energy is nonpositive (data looks like pure noise)")
    alpha, diag = _select_min_T(source, rho2_hat, sigma2)
    diag.update(rho2_hat=rho2_hat, sigma2_hat=sigma2, xi_hat=snr_db(rho2_hat, sigma2, n))
    return RuleSelection(rule="pro", alpha=alpha, diagnostics=diag)


class _ResidualOracle:
    """Squared residual norm as a function of alpha, for the iterative rule."""

    def __init__(self, source, g, path: Optional[SolutionPath], operator=None,
                 solve_tol: float = 1e-8):
        from .tikhonov import solve_iterative
        g = np.asarray(g, dtype=float)
        self._g = g
        self.g_sq = float(g @ g)
        self.n = g.size
        self.path = path
        self._operator = None if operator is None else as_operator(operator)
        self._solve_tol = solve_tol
        self._solve_iterative = solve_iterative
        if isinstance(source, SpectralDecomposition):
            c = source.U.T @ g
            self._c_sq = c * c
            self._s2 = source.s * source.s
            # vector form avoids the catastrophic cancellation of ||g||^2 - ||c||^2
            perp = g - source.U @ c
            self._perp_sq = float(perp @ perp)
        else:
            self._c_sq = None
            if path is None and self._operator is None:
                raise ValueError("grid mode needs a solution path or an operator "
                                 "to evaluate residuals")

    def residual_sq(self, alpha: float, grid_index: Optional[int] = None) -> float:
        if grid_index is not None and self.path is not None:
            return float(self.path.residual_norms[grid_index]) ** 2
        if self._c_sq is not None:
            w = (alpha / (self._s2 + alpha)) ** 2
            return float(np.sum(w * self._c_sq) + self._perp_sq)
        sol = self._solve_iterative(self._operator, self._g, alpha, tol=self._solve_tol)
        return sol.residual_norm ** 2


def ipro(source, g, alpha_init: Optional[float] = None, eps: float = 1e-16,
         max_iter: int = 100, path: Optional[SolutionPath] = None, operator=None,
         solve_tol: float = 1e-8) -> RuleSelection:
    """Alternate between SNR estimation from the residual and lower-bound
    minimization until the parameter stops moving.

    At each step sigma2 <- ||r||^2/n and rho2 <- ||g||^2 - ||r||^2 are taken at
    the current alpha, then alpha is reminimized.  The iterate sequence is
    monotone; it stops when |a_k - a_{k-1}| <= eps * a_k, with a floor of a few
    ulps of a_k so the loop terminates once the fixed point is resolved to
    floating-point precision.
    """
    oracle = _ResidualOracle(source, g, path, operator=operator, solve_tol=solve_tol)
    grid_mode = isinstance(source, InfluencePath)
    if grid_mode and path is not None and path.alphas.shape != source.alphas.shape:
        raise ValueError("influence path and solution path use different grids")

    if grid_mode:
        idx = len(source.alphas) // 2 if alpha_init is None else int(
            np.argmin(np.abs(np.log(source.alphas) - np.log(alpha_init))))
        alpha = float(source.alphas[idx])
    else:
        if alpha_init is None:
            s1_sq = float(source.s[0]) ** 2
            alpha_init = np.sqrt((1e-12 * s1_sq) * (0.5 * s1_sq))
        alpha = float(alpha_init)
        idx = None
    if alpha <= 0:
        raise ValueError("alpha_init must be positive")

    trail = [alpha]
    h_trail = []
    converged = False
    it = 0
    floor_sq = (RESIDUAL_FLOOR ** 2) * oracle.g_sq
    for it in range(1, max_iter + 1):
        r_sq = oracle.residual_sq(alpha, grid_index=idx)
        sigma2 = r_sq / oracle.n
        rho2 = oracle.g_sq - r_sq
        if r_sq <= floor_sq:
            exc = DegenerateDataError(
                "residual below floating-point resolution: noise level is "
                "unidentifiable (zero is not a meaningful fixed point)")
            exc.trail = trail
            raise exc
        if rho2 <= 0.0:
            raise DegenerateDataError("residual exhausts the data energy")
        h_trail.append(sigma2 / rho2)
        if grid_mode:
            values = _lower_bound_values(source, rho2, sigma2)
            new_idx = _argmin_last(values)
            new_alpha = float(source.alphas[new_idx])
        else:
            new_alpha = minimize_T(source, sigma2 / rho2).alpha_star
            new_idx = None
        trail.append(new_alpha)
        if abs(new_alpha - alpha) <= eps * new_alpha + 4.0 * np.spacing(new_alpha):
            alpha, idx = new_alpha, new_idx
            converged = True
            break
        alpha, idx = new_alpha, new_idx
    diag_common = {"trail": trail, "h_trail": h_trail, "iterations": it}
    if not converged:
        raise ConvergenceError("iterative rule did not settle", last_iterate=alpha,
                               iterations=it, trail=trail)
    r_sq = oracle.residual_sq(alpha, grid_index=idx)
    sigma2_hat = r_sq / oracle.n
    rho2_hat = oracle.g_sq - r_sq
    diag = dict(diag_common)
    diag.update(rho2_hat=rho2_hat, sigma2_hat=sigma2_hat,
                xi_hat=snr_db(rho2_hat, sigma2_hat, oracle.n),
                flags=[], grid_index=idx)
    return RuleSelection(rule="ipro", alpha=alpha, diagnostics=diag)


def dp(path: SolutionPath, sigma: float, refine: bool = True) -> RuleSelection:
    """Discrepancy principle: match the residual norm to sqrt(n) * sigma.

    Picks the smallest grid alpha whose residual reaches the target, bisecting
    between neighbors when a resolver is available.  If the target is never
    reached the largest alpha is returned with a saturation flag.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    target = np.sqrt(path.data_size) * sigma
    resid = path.residual_norms
    flags = []
    above = np.nonzero(resid >= target)[0]
    if above.size == 0:
        return RuleSelection(rule="dp", alpha=float(path.alphas[-1]),
                             diagnostics={"target": target, "flags": ["saturated_max"],
                                          "grid_index": len(path) - 1})
    j = int(above[0])
    alpha = float(path.alphas[j])
    if j == 0:
        flags.append("at_grid_min")
    elif refine and path.solve is not None:
        lo, hi = float(path.alphas[j - 1]), alpha
        for _ in range(80):
            if (hi - lo) <= 1e-6 * hi:
                break
            mid = np.sqrt(lo * hi)
            if path.solve(mid).residual_norm >= target:
                hi = mid
            else:
                lo = mid
        alpha = hi
    return RuleSelection(rule="dp", alpha=alpha,
                         diagnostics={"target": target, "flags": flags, "grid_index": j})


def _trace_values(path: SolutionPath, trace_source) -> np.ndarray:
    if isinstance(trace_source, InfluencePath):
        if trace_source.alphas.shape != path.alphas.shape or \
                not np.allclose(trace_source.alphas, path.alphas, rtol=1e-12):
            raise ValueError("influence path and solution path use different grids")
        return trace_source.trace
    if isinstance(trace_source, SpectralDecomposition):
        return influence_path_exact(trace_source, path.alphas).trace
    raise TypeError("trace source must be a SpectralDecomposition or InfluencePath")


def upre(path: SolutionPath, trace_source, sigma2: float) -> RuleSelection:
    """Unbiased predictive-risk estimate: ||r||^2 - 2 sigma2 tr(I - X_a), on the grid."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    tr = _trace_values(path, trace_source)
    values = path.residual_norms ** 2 - 2.0 * sigma2 * (path.data_size - tr)
    idx = _argmin_last(values)
    return RuleSelection(rule="upre", alpha=float(path.alphas[idx]),
                         diagnostics={"objective_samples": values, "grid_index": idx,
                                      "flags": []})


def gcv(path: SolutionPath, trace_source) -> RuleSelection:
    """Generalized cross validation: ||r||^2 / tr(I - X_a)^2, on the grid."""
    tr = _trace_values(path, trace_source)
    denom = (path.data_size - tr) ** 2
    values = path.residual_norms ** 2 / np.maximum(denom, np.finfo(float).tiny)
    idx = _argmin_last(values)
    return RuleSelection(rule="gcv", alpha=float(path.alphas[idx]),
                         diagnostics={"objective_samples": values, "grid_index": idx,
                                      "flags": []})


def bp(path: SolutionPath, sigma: float, noise_source, gamma: float = 0.25,
       c: float = 1.5) -> RuleSelection:
    """Balancing principle over a geometrically thinned subgrid.

    Walking up from the smallest alpha, an alpha stays admissible while its
    solution differs from every less-smoothed subgrid solution by at most
    c * sigma * sqrt(noise amplification there); the largest admissible alpha
    is returned.  The admissible set is a contiguous lower segment by
    construction, so the scan stops at the first failure.
    """
    if path.solutions is None:
        raise ValueError("bp needs the solutions along the path")
    if not 0 < gamma < 1:
        raise ValueError("gamma must be in (0, 1)")
    if isinstance(noise_source, InfluencePath):
        namp = noise_source.noise_amp
    elif isinstance(noise_source, SpectralDecomposition):
        namp = influence_path_exact(noise_source, path.alphas).noise_amp
    else:
        raise TypeError("noise source must be a SpectralDecomposition or InfluencePath")
    ratio = path.alphas[1] / path.alphas[0] if len(path) > 1 else np.e
    step = max(1, int(round(np.log(1.0 / gamma) / np.log(ratio))))
    sub = np.arange(len(path) - 1, -1, -step)[::-1]   # ascending subgrid indices
    thresholds = c * sigma * np.sqrt(namp[sub])
    F = path.solutions
    chosen = sub[0]
    flags = []
    for pos in range(1, sub.size):
        j = sub[pos]
        ok = True
        for pos2 in range(pos):
            b = sub[pos2]
            if np.linalg.norm(F[j] - F[b]) > thresholds[pos2]:
                ok = False
                break
        if not ok:
            break
        chosen = j
    if chosen == sub[0]:
        flags.append("at_grid_min")
    return RuleSelection(rule="bp", alpha=float(path.alphas[chosen]),
                         diagnostics={"grid_index": int(chosen), "flags": flags,
                                      "subgrid": sub, "gamma": gamma, "c": c})


def lc(path: SolutionPath) -> RuleSelection:
    """L-curve corner: maximal curvature of (log ||r||, log ||f||) against log alpha,
    via central differences on the grid."""
    if len(path) < 5:
        raise ValueError("lc needs at least five grid points")
    t = np.log(path.alphas)
    tiny = np.finfo(float).tiny
    x = np.log(np.maximum(path.residual_norms, tiny))
    y = np.log(np.maximum(path.solution_norms, tiny))
    dt = t[1] - t[0]
    xp = np.gradient(x, dt)
    yp = np.gradient(y, dt)
    xpp = np.gradient(xp, dt)
    ypp = np.gradient(yp, dt)
    denom = np.maximum((xp * xp + yp * yp) ** 1.5, tiny)
    kappa = (xp * ypp - yp * xpp) / denom
    interior = slice(1, len(path) - 1)
    idx = 1 + _argmin_last(-kappa[interior])
    flags = []
    if idx in (1, len(path) - 2):
        flags.append("curvature_at_boundary")
    return RuleSelection(rule="lc", alpha=float(path.alphas[idx]),
                         diagnostics={"curvature": kappa, "grid_index": idx,
                                      "flags": flags})


def qoc(path: SolutionPath) -> RuleSelection:
    """Quasi-optimality: minimize the norm of consecutive solution differences."""
    if path.solutions is None:
        raise ValueError("qoc needs the solutions along the path")
    if len(path) < 2:
        raise ValueError("qoc needs at least two grid points")
    diffs = np.linalg.norm(np.diff(path.solutions, axis=0), axis=1)
    idx = _argmin_last(diffs)
    return RuleSelection(rule="qoc", alpha=float(path.alphas[idx]),
                         diagnostics={"differences": diffs, "grid_index": idx,
                                      "flags": []})
