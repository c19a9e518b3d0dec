"""Log-moment generating functions, their conjugates and the entropy approximation.

For a base potential ``f`` and an observable family ``S = (g_1..g_d)``::

    L(t) = P(f + t.S) - P(f)
    I(x) = sup_t <t, x> - L(t)

``L`` is smooth on primitive SFTs; its gradient at ``t`` is the moment
vector of the equilibrium state of ``f + t.S`` and its Hessian is the
asymptotic covariance of ``S`` under that state.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConvergenceError, SpaceError
from .measures import (MarkovMeasure, MeasureLike, cylinder_probabilities, entropy_rate,
                       integrate, moments)
from .potential import ObservableFamily, Potential
from .pressure import GibbsChain, block_order, edge_values, gibbs_chain, pressure_spectral
from .shift import ShiftSpace, admissible_words, count_admissible

GRAD_TOL = 1e-9
T_BOUND = 1e3
MAX_STEP = 10.0
MAX_ITER = 500
BOUNDARY_ETA = 1e-6


def q_star(space: ShiftSpace, f: Potential, mu: MeasureLike) -> float:
    """``P(f) - h(mu) - mu(f)``: zero exactly at equilibrium states of ``f``."""
    return pressure_spectral(space, f).value - entropy_rate(mu) - integrate(mu, f)


@dataclass(frozen=True, eq=False)
class RateResult:
    """Outcome of one conjugate evaluation.

    ``infinite`` marks points outside the closed moment range; ``value`` is
    then ``inf`` and ``t``/``witness`` are ``None``.
    """

    x: np.ndarray
    value: float
    t: np.ndarray | None
    witness: MarkovMeasure | None
    converged: bool
    infinite: bool = False
    grad_norm: float = math.nan
    iterations: int = 0


class RateFunctionHandle:
    """``L`` and ``I`` for one ``(space, f, S)`` triple, with a memo of solved points."""

    def __init__(self, space: ShiftSpace, f: Potential, S: ObservableFamily,
                 grad_tol: float = GRAD_TOL, t_bound: float = T_BOUND,
                 max_iter: int = MAX_ITER):
        if f.space != space or S.space != space:
            raise SpaceError("potential and observables must live on the given space")
        self.space, self.f, self.S = space, f, S
        self.grad_tol, self.t_bound, self.max_iter = grad_tol, t_bound, max_iter
        self.order = block_order(max(f.window, S.window))
        self._phi = edge_values(space, self.order, f)
        self._G = np.stack([edge_values(space, self.order, g) for g in S])
        self._base = gibbs_chain(space, self.order, self._phi)
        self._cache: dict[bytes, RateResult] = {}
        self._lock = threading.Lock()
        self._null = None

    @property
    def d(self) -> int:
        return self.S.d

    @property
    def base_pressure(self) -> float:
        return self._base.pressure

    def _t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        if t.size != self.d or not np.all(np.isfinite(t)):
            raise SpaceError(f"t must be a finite vector of length {self.d}")
        return t

    def chain(self, t) -> GibbsChain:
        t = self._t(t)
        if not t.any():
            return self._base
        return gibbs_chain(self.space, self.order, self._phi + t @ self._G)

    def value(self, t) -> float:
        return self.chain(t).pressure - self._base.pressure

    def gradient(self, t) -> np.ndarray:
        return self._G @ self.chain(t).edge_prob

    def hessian(self, t) -> np.ndarray:
        return _asymptotic_covariance(self.chain(t), self._G)

    # ----------------------------------------------------------- conjugate
    def _null_projector(self) -> np.ndarray:
        # coboundary directions leave L affine; they do not depend on t
        if self._null is None:
            H = self.hessian(np.zeros(self.d))
            w, V = np.linalg.eigh(0.5 * (H + H.T))
            keep = w > max(w.max(), 0.0) * 1e-10
            self._null = V[:, keep]
        return self._null

    def in_moment_range(self, x) -> bool:
        """Whether ``x = p_S(mu)`` for some invariant ``mu`` (LP over stationary edge flows)."""
        return moment_range_contains(self.space, self.order, self._G, x)

    def rate_at(self, x) -> RateResult:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.d or not np.all(np.isfinite(x)):
            raise SpaceError(f"x must be a finite vector of length {self.d}")
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        result = self._solve(x)
        with self._lock:
            # first writer wins so that every caller sees the same object
            result = self._cache.setdefault(key, result)
        return result

    def _solve(self, x: np.ndarray) -> RateResult:
        if not self.in_moment_range(x):
            return RateResult(x, math.inf, None, None, converged=True, infinite=True)
        V = self._null_projector()
        t = np.zeros(self.d)
        chain = self._base
        grad = x - self._G @ chain.edge_prob
        val = 0.0
        for it in range(1, self.max_iter + 1):
            gnorm = float(np.linalg.norm(grad))
            if gnorm < self.grad_tol:
                return RateResult(x, val, t, chain.measure(), True, grad_norm=gnorm, iterations=it)
            H = V.T @ _asymptotic_covariance(chain, self._G) @ V
            z = np.linalg.lstsq(H, V.T @ grad, rcond=1e-14)[0]
            step = V @ z
            if step @ grad <= 0:  # numerically singular curvature: fall back to ascent
                step = V @ (V.T @ grad)
            norm = np.linalg.norm(step)
            if norm > MAX_STEP:
                step *= MAX_STEP / norm
            alpha = 1.0
            while True:
                t_new = t + alpha * step
                if np.linalg.norm(t_new) > self.t_bound:
                    return RateResult(x, math.inf, None, None, converged=False, infinite=True,
                                      grad_norm=gnorm, iterations=it)
                try:
                    c_new = self.chain(t_new)
                except ConvergenceError:
                    c_new = None
                if c_new is not None:
                    v_new = float(t_new @ x) - (c_new.pressure - self._base.pressure)
                    if v_new >= val - 1e-15 * max(1.0, abs(val)):
                        break
                alpha *= 0.5
                if alpha < 1e-12:
                    return RateResult(x, val, t, chain.measure(), gnorm < 1e-7,
                                      grad_norm=gnorm, iterations=it)
            t, chain, val = t_new, c_new, v_new
            grad = x - self._G @ chain.edge_prob
        gnorm = float(np.linalg.norm(grad))
        return RateResult(x, val, t, chain.measure(), gnorm < self.grad_tol,
                          grad_norm=gnorm, iterations=self.max_iter)


def _asymptotic_covariance(chain: GibbsChain, G: np.ndarray) -> np.ndarray:
    """Hessian of the pressure: ``sum_k Cov(g_i, g_j o shift^k)`` under the chain.

    Edge functions ``G`` (shape ``(d, E)``) are centred, their one-step
    conditional means are pushed through the fundamental matrix
    ``Z = (I - Q + 1 pi)^-1`` and the lag-0 term is added to both lag tails.
    """
    Q, pi, src, dst = chain.Q, chain.pi, chain.src, chain.dst
    N = Q.shape[0]
    p = chain.edge_prob
    C = G - (G @ p)[:, None]
    qe = Q[src, dst]
    B = np.zeros((N, src.size))
    B[src, np.arange(src.size)] = qe
    cbar = C @ B.T                        # (d, N) conditional means E[c | state]
    Z = np.linalg.inv(np.eye(N) - Q + np.outer(np.ones(N), pi))
    tail = (Z @ cbar.T)[dst]              # (E, d)
    Cp = C * p
    lag0 = Cp @ C.T
    cross = Cp @ tail
    return lag0 + cross + cross.T


def moment_range_contains(space: ShiftSpace, q: int, G: np.ndarray, x,
                          tol: float = 1e-9) -> bool:
    """Feasibility of a stationary probability flow on the order-``q`` block graph
    whose edge averages of ``G`` equal ``x``."""
    from .shift import overlap_edges

    src, dst = overlap_edges(space, q)
    N, E = count_admissible(space, q), src.size
    x = np.asarray(x, dtype=float).reshape(-1)
    flow = np.zeros((N, E))
    flow[dst, np.arange(E)] += 1.0
    flow[src, np.arange(E)] -= 1.0
    A_eq = np.vstack([np.ones((1, E)), flow, G])
    b_eq = np.concatenate([[1.0], np.zeros(N), x])
    # slack variables absorb rounding in the moment equations
    d = G.shape[0]
    A_eq = np.hstack([A_eq, np.zeros((A_eq.shape[0], 2 * d))])
    A_eq[1 + N:, E:E + d] = np.eye(d)
    A_eq[1 + N:, E + d:] = -np.eye(d)
    c = np.concatenate([np.zeros(E), np.ones(2 * d)])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return bool(res.status == 0 and res.fun <= tol)


# ---------------------------------------------------------- module API

def l_eval(handle: RateFunctionHandle, t) -> float:
    """``L_S(t) = P(f + t.S) - P(f)``."""
    return handle.value(t)


def l_grad(handle: RateFunctionHandle, t) -> np.ndarray:
    """Moments of the equilibrium state of ``f + t.S``."""
    return handle.gradient(t)


def rate_at(handle: RateFunctionHandle, x) -> RateResult:
    """``I_S(x)`` by Newton ascent on the concave dual ``<t, x> - L_S(t)``."""
    return handle.rate_at(x)


@dataclass(frozen=True)
class ConjugateOracle:
    x: np.ndarray
    values: np.ndarray
    argmax: np.ndarray
    gap_bound: np.ndarray


def grid_conjugate_oracle(t_grid, L_values, x_grid) -> ConjugateOracle:
    """Brute-force conjugate ``max_t <t, x> - L(t)`` over sampled ``t`` (d <= 2).

    Always a lower bound on the true conjugate. The reported gap bound is
    ``h*|x| + h**2 * curvature / 8`` with ``h`` the grid spacing and the
    curvature estimated from second differences of the samples; it is
    meaningful only when the maximiser lies inside the grid.
    """
    T = np.asarray(t_grid, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[1] > 2:
        raise SpaceError("grid oracle supports d <= 2")
    L = np.asarray(L_values, dtype=float).reshape(-1)
    X = np.asarray(x_grid, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if T.shape[1] == 1 else X[None, :]
    scores = X @ T.T - L[None, :]
    best = np.argmax(scores, axis=1)
    values = scores[np.arange(X.shape[0]), best]
    if T.shape[0] > 2:
        axis0 = np.unique(T[:, 0])
        h = float(np.min(np.diff(axis0))) if axis0.size > 1 else 0.0
    else:
        h = 0.0
    curv = 0.0
    if T.shape[1] == 1 and T.shape[0] >= 3 and h > 0:
        order = np.argsort(T[:, 0])
        curv = float(np.max(np.abs(np.diff(L[order], 2)))) / h ** 2
    gap = h * np.linalg.norm(X, axis=1) + h ** 2 * curv / 8
    return ConjugateOracle(X, values, T[best], gap)


def cylinder_family(space: ShiftSpace, n: int, cap: int | None = None) -> ObservableFamily:
    """Indicators of all admissible ``n``-cylinders except the lexicographically last."""
    words = admissible_words(space, n, cap)
    if words.shape[0] < 2:
        raise SpaceError(f"space has a single admissible {n}-word; the family would be empty")
    return ObservableFamily(Potential.indicator(space, w) for w in words[:-1])


@dataclass(frozen=True, eq=False)
class ApproximationStep:
    n: int
    d: int
    t: np.ndarray | None
    measure: MarkovMeasure | None
    target_moments: np.ndarray
    solved_moments: np.ndarray
    moment_error: float
    target_moment_error: float
    entropy: float
    entropy_gap: float
    perturbed: bool
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n": self.n, "d": self.d, "converged": self.converged, "perturbed": self.perturbed,
            "moment_error": self.moment_error, "target_moment_error": self.target_moment_error,
            "entropy": self.entropy, "entropy_gap": self.entropy_gap,
            "t": None if self.t is None else self.t.tolist(),
            "diagnostics": dict(self.diagnostics),
        }


def entropy_approximation_sequence(space: ShiftSpace, f: Potential, target: MeasureLike,
                                   max_window: int, eta: float = BOUNDARY_ETA,
                                   grad_tol: float = GRAD_TOL) -> list[ApproximationStep]:
    """Equilibrium states of ``f + t_n.S_n`` matching the ``n``-cylinder moments of ``target``.

    ``S_n`` is :func:`cylinder_family`. Targets with zero-probability
    cylinders (or a diverging dual) are pulled towards the moments of the
    equilibrium state of ``f`` by the factor ``eta``.
    """
    if max_window < 1:
        raise SpaceError(f"max window must be >= 1, got {max_window}")
    h_target = entropy_rate(target)
    steps = []
    for n in range(1, max_window + 1):
        S = cylinder_family(space, n)
        handle = RateFunctionHandle(space, f, S, grad_tol=grad_tol)
        full = cylinder_probabilities(target, admissible_words(space, n))
        x_target = full[:-1].copy()
        x = x_target
        perturbed = bool((full <= 0).any())
        if perturbed:
            x = (1 - eta) * x_target + eta * handle.gradient(np.zeros(S.d))
        res = handle.rate_at(x)
        if not res.converged and not perturbed:
            perturbed = True
            x = (1 - eta) * x_target + eta * handle.gradient(np.zeros(S.d))
            res = handle.rate_at(x)
        if not res.converged or res.infinite:
            steps.append(ApproximationStep(
                n, S.d, res.t, None, x_target, np.full(S.d, np.nan), math.inf, math.inf,
                math.nan, math.nan, perturbed, False,
                {"grad_norm": res.grad_norm, "iterations": res.iterations,
                 "infinite": res.infinite}))
            continue
        mu_n = res.witness
        got = moments(mu_n, S)
        h_n = entropy_rate(mu_n)
        steps.append(ApproximationStep(
            n, S.d, res.t, mu_n, x_target, got,
            float(np.max(np.abs(got - x))), float(np.max(np.abs(got - x_target))),
            h_n, h_n - h_target, perturbed, True,
            {"grad_norm": res.grad_norm, "iterations": res.iterations, "dual_value": res.value}))
    return steps
