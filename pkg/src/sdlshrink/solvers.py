"""Iterative-shrinkage solvers for basis pursuit denoising.

Every solver minimises

    F(x) = 0.5 * ||D x - p||_2^2 + mu * ||x||_1

and shares one calling convention: ``solve_<method>(problem, config)``
returns a :class:`SparseCode`.  The methods differ only in how they pick
the next iterate; stopping, divergence detection, timing and diagnostics
are handled by a common driver.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from .errors import ArgumentError, ConfigError, DegenerateError, DivergenceError, StagnationError

METHODS = ("ISTA", "FISTA", "FPC_BB", "TWIST", "SPARSA", "GSCG", "ISGA")

# Learning-stage tolerances; reconstruction uses RECON_EPS.
DEFAULT_EPS = {"ISTA": 1e-5, "FISTA": 1e-5, "FPC_BB": 1e-5, "TWIST": 1e-5, "SPARSA": 1e-5, "GSCG": 1e-7, "ISGA": 1e-7}
RECON_EPS = {"ISTA": 1e-5, "FISTA": 1e-5, "FPC_BB": 1e-5, "TWIST": 1e-5, "SPARSA": 1e-5, "GSCG": 1e-10, "ISGA": 1e-10}
DEFAULT_MAX_ITER = 100_000
RECON_MAX_ITER = 5_000_000

BB_CLAMP = (1e-10, 1e10)
DEFAULT_PARAMS = {
    "ISTA": {},
    "FISTA": {},
    "FPC_BB": {"eta": 0.25, "mu0_factor": 0.1, "mu0": None, "stage_tol": 1e-3, "window": 5, "armijo": 1e-4},
    "TWIST": {"alpha": 1.8, "beta": 1.0, "c": 1.0},
    "SPARSA": {"M": 5, "sigma": 1e-5, "contraction": 0.5},
    "GSCG": {"sigma": 1e-4, "gamma": 0.5, "armijo": 1e-4},
    "ISGA": {"c1": 0.1, "c2": 0.9},
}
MAX_BACKTRACKS = 100

_ALIASES = {"FPC-BB": "FPC_BB", "FPCBB": "FPC_BB"}


def canonical_method(name: str) -> str:
    key = name.strip().upper().replace(" ", "")
    key = _ALIASES.get(key, key)
    if key not in METHODS:
        raise ConfigError(f"unknown solver {name!r}; choose from {', '.join(METHODS)}")
    return key


# --------------------------------------------------------------------------
# Problem / config / result types
# --------------------------------------------------------------------------


@dataclass
class BpdnProblem:
    """One instance ``min_x 0.5||Dx - p||^2 + mu ||x||_1``.

    ``lipschitz`` may be supplied when many problems share ``D``; otherwise
    it is estimated on first use.
    """

    D: np.ndarray
    p: np.ndarray
    mu: float
    lipschitz: float | None = None

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64).ravel()
        if self.D.ndim != 2 or min(self.D.shape) < 1:
            raise ArgumentError(f"dictionary must be a non-empty matrix, got shape {self.D.shape}")
        if self.p.shape[0] != self.D.shape[0]:
            raise ArgumentError(f"patch length {self.p.shape[0]} != dictionary rows {self.D.shape[0]}")
        if not self.mu > 0:
            raise ArgumentError("mu must be positive")

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def L(self) -> float:
        if self.lipschitz is None:
            self.lipschitz = estimate_lipschitz(self.D)
        return self.lipschitz


@dataclass
class SolverConfig:
    """Solver selection and stopping parameters.

    ``eps_rel`` defaults to the per-method learning tolerance.  Setting
    ``residual_tol`` adds the data-fit stop ``||p - Dx|| <= residual_tol*||p||``
    used during reconstruction.  With ``strict`` the iterate-change test
    only stops once the fixed-point residual is also small.
    """

    method: str = "FISTA"
    eps_rel: float | None = None
    max_iter: int = DEFAULT_MAX_ITER
    x0: np.ndarray | None = None
    method_params: dict = field(default_factory=dict)
    residual_tol: float | None = None
    strict: bool = False
    record_history: bool = False

    def __post_init__(self):
        self.method = canonical_method(self.method)
        if self.eps_rel is None:
            self.eps_rel = DEFAULT_EPS[self.method]
        if not self.eps_rel > 0:
            raise ConfigError("eps_rel must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        self.max_iter = int(self.max_iter)
        unknown = set(self.method_params) - set(DEFAULT_PARAMS[self.method])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.method}: {sorted(unknown)}")
        if self.method == "TWIST":
            prm = self.params
            a, b, c = prm["alpha"], prm["beta"], prm["c"]
            if not (0 < a < 2 and 0 < b < c * a):
                raise ConfigError(f"TwIST needs 0 < alpha < 2 and 0 < beta < c*alpha (got {a}, {b}, c={c})")

    @property
    def params(self) -> dict:
        return {**DEFAULT_PARAMS[self.method], **self.method_params}

    @classmethod
    def for_reconstruction(cls, method: str, **overrides) -> "SolverConfig":
        """Config with the image-recovery tolerances and iteration cap."""
        method = canonical_method(method)
        eps = overrides.pop("eps_rel", None) or RECON_EPS[method]
        opts = {"eps_rel": eps, "residual_tol": eps, "max_iter": RECON_MAX_ITER}
        opts.update(overrides)
        return cls(method=method, **opts)


@dataclass
class SparseCode:
    x: np.ndarray
    iterations: int
    objective: float
    fixed_point_residual: float
    converged: bool
    wall_time: float
    cpu_time: float = 0.0
    stop_reason: str = "max_iter"
    history: list | None = None


# --------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------


def shrink(x, lam: float) -> np.ndarray:
    """Soft thresholding ``sgn(x) * max(|x| - lam, 0)``."""
    if lam < 0:
        raise ArgumentError("shrinkage threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def _check_x(prob: BpdnProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != prob.n:
        raise ArgumentError(f"code length {x.shape[0]} != dictionary columns {prob.n}")
    return x


def objective(prob: BpdnProblem, x) -> float:
    x = _check_x(prob, x)
    r = prob.D @ x - prob.p
    return 0.5 * float(r @ r) + prob.mu * float(np.abs(x).sum())


def gradient_f(prob: BpdnProblem, x) -> np.ndarray:
    """Gradient ``D^T (D x - p)`` of the smooth part."""
    x = _check_x(prob, x)
    return prob.D.T @ (prob.D @ x - prob.p)


def ista_direction(prob: BpdnProblem, x, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    x = _check_x(prob, x)
    return shrink(x - tau * gradient_f(prob, x), prob.mu * tau) - x


def check_optimality(prob: BpdnProblem, x, tau: float | None = None) -> float:
    """Infinity-norm fixed-point residual; zero exactly at minimisers."""
    tau = 1.0 / prob.L if tau is None else tau
    return float(np.max(np.abs(ista_direction(prob, x, tau)), initial=0.0))


def bb_steplength(s, y, clamp=BB_CLAMP) -> float:
    """Barzilai-Borwein step ``s's / s'y`` clamped to ``clamp``."""
    lo, hi = clamp
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ss = float(s @ s)
    if ss == 0.0:
        return math.sqrt(lo * hi)
    sy = float(s @ y)
    if sy <= 0.0:
        return hi
    return min(max(ss / sy, lo), hi)


def estimate_lipschitz(D, tol: float = 1e-14, max_iter: int = 100_000, v0=None, return_vector: bool = False):
    """Largest eigenvalue of ``D^T D`` by power iteration.

    Iterates on whichever Gram matrix (``D D^T`` or ``D^T D``) is smaller;
    both share the nonzero spectrum.  ``v0`` warm-starts the iteration
    (useful when ``D`` changes slowly) and must match that Gram size.
    """
    D = np.asarray(D, dtype=np.float64)
    if not np.any(D):
        raise DegenerateError("Lipschitz constant of an all-zero dictionary is zero")
    G = D @ D.T if D.shape[0] <= D.shape[1] else D.T @ D
    if v0 is None or np.shape(v0) != (G.shape[0],) or not np.any(v0):
        v = np.random.default_rng(0).standard_normal(G.shape[0])
    else:
        v = np.array(v0, dtype=np.float64)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        lam_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # start vector in the null space
            v = np.random.default_rng(1).standard_normal(G.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    lam = max(lam, float(v @ G @ v))
    return (lam, v) if return_vector else lam


class _Evaluator:
    """Objective pieces for one problem, sharing residual computations."""

    def __init__(self, prob: BpdnProblem):
        self.D = prob.D
        self.p = prob.p
        self.mu = prob.mu
        self.L = prob.L

    def grad(self, x):
        return self.D.T @ (self.D @ x - self.p)

    def F(self, x, mu=None):
        r = self.D @ x - self.p
        return 0.5 * float(r @ r) + (self.mu if mu is None else mu) * float(np.abs(x).sum())

    def F_and_grad(self, x, mu=None):
        r = self.D @ x - self.p
        f = 0.5 * float(r @ r) + (self.mu if mu is None else mu) * float(np.abs(x).sum())
        return f, self.D.T @ r

    def ray(self, x, g, d, mu=None):
        """Return ``(delta, phi)`` for the ray ``x + a d``.

        ``phi(a) = F(x + a d) - F(x)`` is evaluated from precomputed
        products, free of the cancellation in differencing two objective
        values.  ``delta = g'd + mu(||x+d||_1 - ||x||_1)`` is the model
        decrease used by the line searches.
        """
        mu = self.mu if mu is None else mu
        Dd = self.D @ d
        gd = float(g @ d)
        dd = float(Dd @ Dd)
        ax = np.abs(x)

        def phi(a):
            return a * gd + 0.5 * a * a * dd + mu * float((np.abs(x + a * d) - ax).sum())

        delta = gd + mu * float((np.abs(x + d) - ax).sum())
        return delta, phi


def _armijo(phi, delta, c, reference_gap=0.0):
    """Backtrack ``a`` from 1 until ``phi(a) <= reference_gap + c*a*delta``."""
    a = 1.0
    for _ in range(MAX_BACKTRACKS):
        val = phi(a)
        if val <= reference_gap + c * a * delta:
            return a, val
        a *= 0.5
    raise StagnationError("Armijo backtracking exhausted")


def _goldstein(phi, delta, c1, c2):
    """Step satisfying ``c2*a*delta <= phi(a) <= c1*a*delta`` (delta < 0).

    Doubles from ``a = 1`` while the step is too short, bisects once a too
    long step has been seen.
    """
    lo, hi = 0.0, math.inf
    a = 1.0
    for _ in range(MAX_BACKTRACKS):
        val = phi(a)
        if val > c1 * a * delta:
            hi = a
        elif val < c2 * a * delta:
            lo = a
        else:
            return a, val
        a = 2.0 * a if math.isinf(hi) else 0.5 * (lo + hi)
    if lo > 0.0:
        return lo, phi(lo)
    raise StagnationError("Goldstein line search exhausted")


# --------------------------------------------------------------------------
# Iterate generators.  Each yields (x_next, may_stop); may_stop is False
# while FPC-BB is still on an intermediate continuation stage.
# --------------------------------------------------------------------------

Steps = Iterator[tuple]


def _ista_steps(ev: _Evaluator, x, prm) -> Steps:
    tau = 1.0 / ev.L
    while True:
        x = shrink(x - tau * ev.grad(x), ev.mu * tau)
        yield x, True


def _fista_steps(ev: _Evaluator, x, prm) -> Steps:
    tau = 1.0 / ev.L
    x_prev, y, t = x, x, 1.0
    while True:
        x_new = shrink(y - tau * ev.grad(y), ev.mu * tau)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x_prev)
        x_prev, t = x_new, t_new
        yield x_new, True


def _twist_steps(ev: _Evaluator, x, prm) -> Steps:
    alpha, beta = prm["alpha"], prm["beta"]
    tau = 1.0 / ev.L
    fx = ev.F(x)
    x_prev = None
    while True:
        s = shrink(x - tau * ev.grad(x), ev.mu * tau)
        if x_prev is None:
            cand = s
        else:
            cand = (1.0 - alpha) * x_prev + (alpha - beta) * x + beta * s
        fc = ev.F(cand)
        if fc > fx and cand is not s:
            # monotone safeguard: fall back to the plain shrinkage step
            cand, fc = s, ev.F(s)
        x_prev, x, fx = x, cand, fc
        yield x, True


def _fpc_bb_steps(ev: _Evaluator, x, prm) -> Steps:
    eta, window, c = prm["eta"], prm["window"], prm["armijo"]
    mu_bar = prm["mu0"]
    if mu_bar is None:
        mu_bar = prm["mu0_factor"] * float(np.max(np.abs(ev.D.T @ ev.p)))
    mu_bar = max(mu_bar, ev.mu)
    stage_tol = max(prm["stage_tol"], prm["eps"])
    tau = 1.0 / ev.L
    while True:
        final = mu_bar <= ev.mu
        fx, g = ev.F_and_grad(x, mu_bar)
        recent = deque([fx], maxlen=window)
        while True:
            d = shrink(x - tau * g, mu_bar * tau) - x
            if not np.any(d):
                x_new, g_new, f_new = x, g, fx
            else:
                delta, phi = ev.ray(x, g, d, mu_bar)
                if delta >= 0.0:
                    x_new, g_new, f_new = x, g, fx
                else:
                    a, gap = _armijo(phi, delta, c, max(recent) - fx)
                    x_new = x + a * d
                    f_new, g_new = ev.F_and_grad(x_new, mu_bar)
            s = x_new - x
            if np.any(s):
                tau = bb_steplength(s, g_new - g)
            stage_done = float(np.linalg.norm(s)) <= stage_tol * float(np.linalg.norm(x))
            x, g, fx = x_new, g_new, f_new
            recent.append(fx)
            yield x, final
            if not final and stage_done:
                break
        mu_bar = max(mu_bar * eta, ev.mu)


def _sparsa_steps(ev: _Evaluator, x, prm) -> Steps:
    M, sigma, shrink_factor = int(prm["M"]), prm["sigma"], prm["contraction"]
    fx, g = ev.F_and_grad(x)
    recent = deque([fx], maxlen=max(M, 1))
    tau = 1.0 / ev.L
    while True:
        ref = max(recent)
        for _ in range(MAX_BACKTRACKS + 1):
            x_new = shrink(x - tau * g, ev.mu * tau)
            d = x_new - x
            f_new, g_new = ev.F_and_grad(x_new)
            if f_new <= ref - 0.5 * sigma / tau * float(d @ d):
                break
            tau *= shrink_factor
        else:
            raise StagnationError("SpaRSA backtracking exhausted")
        if np.any(d):
            tau = bb_steplength(d, g_new - g)
        x, g, fx = x_new, g_new, f_new
        recent.append(fx)
        yield x, True


def _gscg_steps(ev: _Evaluator, x, prm) -> Steps:
    sigma, gamma, c = prm["sigma"], prm["gamma"], prm["armijo"]
    g = ev.grad(x)
    tau_prev = 1.0 / ev.L
    tau_bb = tau_prev
    d_prev = dtil_prev = None
    while True:
        d = shrink(x - tau_bb * g, ev.mu * tau_bb) - x
        if not np.any(d):
            yield x, True
            continue
        direction = None
        if dtil_prev is not None:
            dd_prev = float(d_prev @ d_prev)
            beta = max(0.0, float(d @ (d - d_prev)) / dd_prev) if dd_prev > 0 else 0.0
            dtil = d + beta * dtil_prev
            if float(g @ dtil) <= -sigma * float(dtil @ dtil):
                delta, phi = ev.ray(x, g, dtil)
                if delta < 0.0:
                    direction, tau = dtil, tau_bb
        if direction is None:
            # restart: ISTA step with blended BB / previous step length
            tau = tau_bb if dtil_prev is None else gamma * tau_bb + (1.0 - gamma) * tau_prev
            direction = shrink(x - tau * g, ev.mu * tau) - x
            delta, phi = ev.ray(x, g, direction)
            if delta >= 0.0 or not np.any(direction):
                yield x, True
                continue
        a, _ = _armijo(phi, delta, c)
        x_new = x + a * direction
        g_new = ev.grad(x_new)
        s = x_new - x
        tau_prev = tau
        tau_bb = bb_steplength(s, g_new - g)
        d_prev, dtil_prev = d, direction
        x, g = x_new, g_new
        yield x, True


def _isga_steps(ev: _Evaluator, x, prm) -> Steps:
    c1, c2 = prm["c1"], prm["c2"]
    if not 0 < c1 < c2 < 1:
        raise ConfigError("ISGA needs 0 < c1 < c2 < 1")
    g = ev.grad(x)
    tau = 1.0 / ev.L
    while True:
        d = shrink(x - tau * g, ev.mu * tau) - x
        if not np.any(d):
            yield x, True
            continue
        delta, phi = ev.ray(x, g, d)
        if delta >= 0.0:
            # model decrease lost to round-off: nothing left to gain
            yield x, True
            continue
        a, _ = _goldstein(phi, delta, c1, c2)
        x_new = x + a * d
        g_new = ev.grad(x_new)
        s = x_new - x
        tau = bb_steplength(s, g_new - g)
        x, g = x_new, g_new
        yield x, True


_STEPS: dict[str, Callable] = {
    "ISTA": _ista_steps,
    "FISTA": _fista_steps,
    "FPC_BB": _fpc_bb_steps,
    "TWIST": _twist_steps,
    "SPARSA": _sparsa_steps,
    "GSCG": _gscg_steps,
    "ISGA": _isga_steps,
}


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------


def default_x0(prob: BpdnProblem) -> np.ndarray:
    """All-ones start scaled by ``||D^T p||_inf``."""
    return np.full(prob.n, float(np.max(np.abs(prob.D.T @ prob.p))))


def _run(prob: BpdnProblem, cfg: SolverConfig, method: str) -> SparseCode:
    if cfg.method != method:
        cfg = replace(cfg, method=method)
    t_wall, t_cpu = time.perf_counter(), time.process_time()
    ev = _Evaluator(prob)
    eps = cfg.eps_rel
    x = default_x0(prob) if cfg.x0 is None else _check_x(prob, cfg.x0).copy()
    prm = {**cfg.params, "eps": eps}

    history = [ev.F(x)] if cfg.record_history else None
    p_norm = float(np.linalg.norm(prob.p))
    stop = "max_iter"
    k = 0
    for k, (x_new, may_stop) in enumerate(_STEPS[method](ev, x, prm), start=1):
        diff = x_new - x
        # a non-finite entry in x_new always makes the change non-finite
        change = math.sqrt(float(diff @ diff))
        if not math.isfinite(change):
            raise DivergenceError(f"{method} produced non-finite iterates at iteration {k}")
        if history is not None:
            history.append(ev.F(x_new))
        x_norm = math.sqrt(float(x @ x))
        x = x_new
        if may_stop:
            if cfg.residual_tol is not None and np.linalg.norm(prob.D @ x - prob.p) <= cfg.residual_tol * p_norm:
                stop = "residual"
                break
            if change <= eps * x_norm:
                if not cfg.strict or check_optimality(prob, x) <= 10.0 * eps * (1.0 + np.max(np.abs(x))):
                    stop = "tolerance"
                    break
        if k >= cfg.max_iter:
            break

    obj = ev.F(x)
    if not math.isfinite(obj):
        raise DivergenceError(f"{method} objective is not finite")
    res = check_optimality(prob, x)
    return SparseCode(
        x=x,
        iterations=k,
        objective=obj,
        fixed_point_residual=res,
        converged=res <= 10.0 * eps * (1.0 + float(np.max(np.abs(x)))),
        wall_time=time.perf_counter() - t_wall,
        cpu_time=time.process_time() - t_cpu,
        stop_reason=stop,
        history=history,
    )


def solve_ista(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """Plain proximal gradient with step ``1/L``."""
    return _run(prob, cfg or SolverConfig("ISTA"), "ISTA")


def solve_fista(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """Proximal gradient with Nesterov momentum (``t_{k+1} = (1+sqrt(1+4t_k^2))/2``)."""
    return _run(prob, cfg or SolverConfig("FISTA"), "FISTA")


def solve_fpc_bb(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """Fixed-point continuation with Barzilai-Borwein steps.

    Solves a decreasing sequence of penalties ``mu0 * eta**j`` down to the
    target ``mu``, warm-starting each stage.  Within a stage the shrinkage
    step uses the BB length and is globalised by a non-monotone Armijo
    search along the shrinkage direction.
    """
    return _run(prob, cfg or SolverConfig("FPC_BB"), "FPC_BB")


def solve_twist(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """Two-step shrinkage with a monotone fallback to the ISTA step."""
    return _run(prob, cfg or SolverConfig("TWIST"), "TWIST")


def solve_sparsa(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """BB step lengths under a non-monotone acceptance window of size ``M``."""
    return _run(prob, cfg or SolverConfig("SPARSA"), "SPARSA")


def solve_gscg(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """Shrinkage conjugate-gradient hybrid.

    The ISTA direction is combined with the previous search direction by
    a truncated Polak-Ribiere coefficient.  When the combination fails the
    sufficient-descent test the method restarts with an ISTA step whose
    length blends the BB estimate with the previous step.
    """
    return _run(prob, cfg or SolverConfig("GSCG"), "GSCG")


def solve_isga(prob: BpdnProblem, cfg: SolverConfig | None = None) -> SparseCode:
    """ISTA direction with BB length and a Goldstein line search on the step."""
    return _run(prob, cfg or SolverConfig("ISGA"), "ISGA")


SOLVERS = {
    "ISTA": solve_ista,
    "FISTA": solve_fista,
    "FPC_BB": solve_fpc_bb,
    "TWIST": solve_twist,
    "SPARSA": solve_sparsa,
    "GSCG": solve_gscg,
    "ISGA": solve_isga,
}


def solve(prob: BpdnProblem, cfg: SolverConfig) -> SparseCode:
    """Dispatch on ``cfg.method``."""
    return SOLVERS[cfg.method](prob, cfg)
