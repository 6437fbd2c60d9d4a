"""Kernel local-similarity NMF solver and a plain NMF baseline.

The model factors a kernel matrix ``K`` as ``phi(X) ~ phi(X) W G^T`` with
nonnegative ``W`` (scores) and ``G`` (coefficients), and penalises
similarity ``W G^T`` between samples that are far apart in feature space:

    0.5 tr(K - 2 K W G^T + G W^T K W G^T) + lam tr(W^T D G)

where ``D`` is the squared distance matrix induced by ``K``. Both factors
are updated by elementwise multiplicative rules, which keep them
nonnegative as long as ``K`` and ``D`` are.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import InputError, NumericalFailure, ParameterError
from .kernel import as_kernel, kernel_distance

__all__ = [
    "SolverConfig",
    "FactorPair",
    "UpdateWorkspace",
    "SolveTrace",
    "init_factors",
    "objective",
    "update_w",
    "update_g",
    "kkt_residual_w",
    "kkt_residual_g",
    "orthogonality_deviation",
    "solve_klsnmf",
    "solve_nmf_baseline",
]

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("uniform", "scaled")


@dataclass
class SolverConfig:
    """Parameters of a single factorization run.

    ``descent_guard`` rejects a coefficient update that would raise the
    objective and substitutes the majorize-minimize step for the
    unconstrained coefficient subproblem (see :func:`solve_klsnmf`).
    """

    k: int
    lam: float = 0.0
    max_iterations: int = 500
    tol: float = 1e-6
    epsilon: float = 1e-10
    seed: int = 0
    init_strategy: str = "uniform"
    patience: int = 3
    descent_guard: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k}")
        self.k = int(self.k)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ParameterError(
                f"init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}")


@dataclass
class FactorPair:
    """Score matrix ``W`` and coefficient matrix ``G``, both n x k."""

    W: np.ndarray
    G: np.ndarray

    @property
    def shape(self):
        return self.W.shape

    def copy(self) -> "FactorPair":
        return FactorPair(self.W.copy(), self.G.copy())


@dataclass
class UpdateWorkspace:
    """Matrix products shared by the updates, objective and KKT checks.

    ``KG``/``DG`` feed the score update; ``KW``/``DW`` feed the coefficient
    update. ``GtA`` and ``lam_GtB`` are the two nonnegative halves of the
    eliminated orthogonality multiplier, and ``C = W^T K W``.
    """

    KW: np.ndarray
    DW: np.ndarray
    KG: np.ndarray
    DG: np.ndarray
    GtA: np.ndarray
    lam_GtB: np.ndarray
    GtG: np.ndarray
    C: np.ndarray

    @classmethod
    def build(cls, K, D, F: FactorPair, lam: float) -> "UpdateWorkspace":
        W, G = F.W, F.G
        KW = K @ W
        DW = D @ W
        return cls(KW=KW, DW=DW, KG=K @ G, DG=D @ G,
                   GtA=G.T @ KW, lam_GtB=lam * (G.T @ DW),
                   GtG=G.T @ G, C=W.T @ KW)


@dataclass
class SolveTrace:
    """Per-iteration history of a solver run.

    ``objectives[0]`` is the value at the initial factors, so it has one
    more entry than ``delta_w``/``delta_g``. ``half_objectives[t]`` is the
    objective after the score update of iteration ``t``.
    """

    objectives: List[float] = field(default_factory=list)
    half_objectives: List[float] = field(default_factory=list)
    delta_w: List[float] = field(default_factory=list)
    delta_g: List[float] = field(default_factory=list)
    iteration_seconds: List[float] = field(default_factory=list)
    guarded_steps: int = 0
    kkt_w: Optional[float] = None
    kkt_g: Optional[float] = None
    orthogonality: Optional[float] = None
    gram_diagonal: Optional[List[float]] = None
    zero_rows: List[int] = field(default_factory=list)
    n_iter: int = 0
    reason: str = ""

    @property
    def final_objective(self) -> float:
        return self.objectives[-1]

    def rows(self):
        """Yield ``(iteration, objective, delta_w, delta_g)`` per iteration."""
        for t in range(self.n_iter):
            yield t + 1, self.objectives[t + 1], self.delta_w[t], self.delta_g[t]


def _pair(F, G=None) -> FactorPair:
    if G is not None:
        F = FactorPair(F, G)
    W = np.asarray(F.W, dtype=float)
    G = np.asarray(F.G, dtype=float)
    if W.ndim != 2 or W.shape != G.shape:
        raise InputError(f"W and G must have equal 2-D shapes, got {W.shape} and {G.shape}")
    return FactorPair(W, G)


def _check_shapes(K, D, F):
    n = K.shape[0]
    if K.shape != (n, n) or D.shape != (n, n):
        raise InputError(f"K and D must be n x n, got {K.shape} and {D.shape}")
    if F.W.shape[0] != n:
        raise InputError(f"factors have {F.W.shape[0]} rows, kernel has {n}")


def init_factors(n: int, config: SolverConfig) -> FactorPair:
    """Strictly positive random factors, deterministic in ``config.seed``.

    Entries are uniform on (0, 1]; the ``scaled`` strategy divides them by
    ``sqrt(k)``. A zero entry could never recover under multiplicative
    updates, hence no zeros.
    """
    k = config.k
    if not k < n:
        raise ParameterError(f"need k < n, got k={k}, n={n}")
    rng = np.random.default_rng(config.seed)
    W = 1.0 - rng.random((n, k))
    G = 1.0 - rng.random((n, k))
    if config.init_strategy == "scaled":
        W /= np.sqrt(k)
        G /= np.sqrt(k)
    return FactorPair(W, G)


def _objective(trace_k, KW, DW, W, G, lam):
    # uses tr(K W G^T) = <KW, G>, tr(G W^T K W G^T) = <G C, G> and
    # tr(W^T D G) = <D W, G> for symmetric D
    C = W.T @ KW
    fit = trace_k - 2.0 * np.sum(KW * G) + np.sum((G @ C) * G)
    return 0.5 * fit + lam * np.sum(DW * G)


def objective(K, D, F: FactorPair, lam: float) -> float:
    """Value of the kernel local-similarity objective at ``F``."""
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    F = _pair(F)
    _check_shapes(K, D, F)
    if lam < 0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    return float(_objective(np.trace(K), K @ F.W, D @ F.W, F.W, F.G, lam))


def _w_step(W, KG, KW, GtG, DG, lam, eps):
    return W * np.sqrt(KG / (KW @ GtG + lam * DG + eps))


def _g_step(G, KW, DW, lam, eps):
    num = KW + lam * (G @ (G.T @ DW))
    den = lam * DW + G @ (G.T @ KW) + eps
    return G * np.sqrt(num / den)


def _g_step_mm(G, KW, DW, W, lam, eps):
    # minimiser of the standard auxiliary function of the coefficient
    # subproblem without the orthogonality multiplier; never increases it
    C = W.T @ KW
    return G * np.sqrt(KW / (lam * DW + G @ C + eps))


def update_w(K, D, F: FactorPair, lam: float, epsilon: float = 1e-10) -> np.ndarray:
    """One multiplicative step on the score matrix with ``G`` fixed.

    ``W <- W * sqrt(KG / (K W G^T G + lam D G + epsilon))``
    """
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    F = _pair(F)
    _check_shapes(K, D, F)
    return _w_step(F.W, K @ F.G, K @ F.W, F.G.T @ F.G, D @ F.G, lam, epsilon)


def update_g(K, D, F: FactorPair, lam: float, epsilon: float = 1e-10) -> np.ndarray:
    """One multiplicative step on the coefficient matrix with ``W`` fixed.

    ``G <- G * sqrt((KW + lam G G^T D W) / (lam D W + G G^T K W + epsilon))``
    """
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    F = _pair(F)
    _check_shapes(K, D, F)
    return _g_step(F.G, K @ F.W, D @ F.W, lam, epsilon)


def _slackness(pos, neg, X):
    """max |(neg - pos) * X| scaled by the larger of max(pos * X), max(neg * X)."""
    scale = max(float(np.max(pos * X)), float(np.max(neg * X)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs((neg - pos) * X)) / scale)


def kkt_residual_w(K, D, F: FactorPair, lam: float) -> float:
    """Normalised complementary-slackness residual for ``W``.

    Zero exactly when every entry has ``W_ik = 0`` or a vanishing gradient
    ``(-KG + lam D G + K W G^T G)_ik``.
    """
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    F = _pair(F)
    _check_shapes(K, D, F)
    ws = UpdateWorkspace.build(K, D, F, lam)
    return _slackness(ws.KG, lam * ws.DG + ws.KW @ ws.GtG, F.W)


def kkt_residual_g(K, D, F: FactorPair, lam: float) -> float:
    """Normalised fixed-point residual for ``G``.

    Evaluates ``(-A + G C + lam B + G Theta) * G`` with ``A = KW``,
    ``B = DW`` and ``Theta = G^T A - lam G^T B - C``; the ``C`` terms
    cancel, leaving the two sides of the coefficient update.
    """
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    F = _pair(F)
    _check_shapes(K, D, F)
    ws = UpdateWorkspace.build(K, D, F, lam)
    G = F.G
    pos = ws.KW + G @ ws.lam_GtB
    neg = lam * ws.DW + G @ ws.GtA
    return _slackness(pos, neg, G)


def orthogonality_deviation(G) -> float:
    """Off-diagonal over diagonal Frobenius mass of ``G^T G``."""
    G = np.asarray(G, dtype=float)
    M = G.T @ G
    diag = np.linalg.norm(np.diag(M))
    if diag == 0.0:
        return 0.0
    off = np.linalg.norm(M - np.diag(np.diag(M)))
    return float(off / diag)


def _finalize(trace, K, D, F, lam):
    trace.kkt_w = kkt_residual_w(K, D, F, lam)
    trace.kkt_g = kkt_residual_g(K, D, F, lam)
    trace.orthogonality = orthogonality_deviation(F.G)
    trace.gram_diagonal = [float(x) for x in np.sum(F.G * F.G, axis=0)]
    trace.zero_rows = [int(i) for i in np.flatnonzero(~np.any(F.G > 0, axis=1))]


def solve_klsnmf(
    K,
    config: SolverConfig,
    D=None,
    init: Optional[FactorPair] = None,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray, float], None]] = None,
):
    """Alternate the score and coefficient updates until convergence.

    Parameters
    ----------
    K : KernelMatrix or array_like, shape (n, n)
        Symmetric, entrywise nonnegative, positive semidefinite kernel.
    config : SolverConfig
    D : array_like, optional
        Precomputed ``kernel_distance(K)``.
    init : FactorPair, optional
        Starting factors; defaults to ``init_factors(n, config)``.
    callback : callable, optional
        Called as ``callback(t, W, G, objective)`` after every iteration.

    Returns
    -------
    (FactorPair, SolveTrace)

    Notes
    -----
    Each iteration updates ``W`` then recomputes the ``W``-dependent
    products before updating ``G``. The run stops once the relative
    objective change stays below ``config.tol`` for ``config.patience``
    consecutive iterations, or after ``config.max_iterations``.

    The coefficient rule is derived under ``G^T G = I`` and can raise the
    objective when ``G`` is far from orthonormal. With
    ``config.descent_guard`` set, a coefficient step that would raise the
    objective is replaced by the
    majorize-minimize step ``G * sqrt(KW / (lam DW + G W^T K W))``, and
    ``G`` is left unchanged if that does not help either, so the recorded
    objective never increases. ``trace.guarded_steps`` counts the
    replacements.
    """
    K = as_kernel(K)
    n = K.shape[0]
    if D is None:
        D = kernel_distance(K)
    else:
        D = np.asarray(D, dtype=float)
    if init is None:
        F = init_factors(n, config)
    else:
        F = _pair(init).copy()
        if F.W.shape != (n, config.k):
            raise InputError(f"init factors must be {(n, config.k)}, got {F.W.shape}")
        if np.any(F.W < 0) or np.any(F.G < 0):
            raise InputError("init factors must be nonnegative")
    _check_shapes(K, D, F)

    lam, eps = config.lam, config.epsilon
    trk = float(np.trace(K))
    W, G = F.W, F.G
    KW = K @ W
    DW = D @ W
    f = _objective(trk, KW, DW, W, G, lam)
    trace = SolveTrace(objectives=[float(f)])
    if not np.isfinite(f):
        raise NumericalFailure("initial objective is not finite", trace)

    streak = 0
    reason = "max_iterations"
    for t in range(config.max_iterations):
        tic = time.perf_counter()
        GtG = G.T @ G
        W_new = _w_step(W, K @ G, KW, GtG, D @ G, lam, eps)
        KW = K @ W_new
        DW = D @ W_new
        f_half = _objective(trk, KW, DW, W_new, G, lam)

        G_new = _g_step(G, KW, DW, lam, eps)
        f_new = _objective(trk, KW, DW, W_new, G_new, lam)
        if config.descent_guard and not f_new <= f_half:
            trace.guarded_steps += 1
            G_new = _g_step_mm(G, KW, DW, W_new, lam, eps)
            f_new = _objective(trk, KW, DW, W_new, G_new, lam)
            if not f_new <= f_half:
                G_new, f_new = G, f_half
        trace.iteration_seconds.append(time.perf_counter() - tic)

        trace.half_objectives.append(float(f_half))
        trace.objectives.append(float(f_new))
        trace.delta_w.append(float(np.linalg.norm(W_new - W)))
        trace.delta_g.append(float(np.linalg.norm(G_new - G)))
        trace.n_iter = t + 1
        if not (np.isfinite(f_new) and np.all(np.isfinite(W_new)) and np.all(np.isfinite(G_new))):
            trace.reason = "numerical_failure"
            raise NumericalFailure(f"non-finite values at iteration {t + 1}", trace)

        rel = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        W, G, f = W_new, G_new, f_new
        if callback is not None:
            callback(t + 1, W, G, float(f))
        streak = streak + 1 if rel < config.tol else 0
        if streak >= config.patience:
            reason = "converged"
            break

    trace.reason = reason
    F = FactorPair(W, G)
    _finalize(trace, K, D, F, lam)
    log.debug("klsnmf: %s after %d iterations, objective %.6g, %d guarded steps",
              reason, trace.n_iter, f, trace.guarded_steps)
    return F, trace


def solve_nmf_baseline(X, config: SolverConfig):
    """Frobenius NMF ``X ~ U G^T`` with Lee-Seung multiplicative updates.

    ``X`` is p x n (samples in columns). Returns ``(U, G, trace)`` with
    ``U`` p x k and ``G`` n x k; ``trace.objectives`` holds
    ``||X - U G^T||_F^2``.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if X.ndim != 2:
        raise InputError(f"data must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("data contains non-finite entries")
    if np.any(X < 0):
        raise InputError("baseline NMF needs nonnegative data")
    p, n = X.shape
    k, eps = config.k, config.epsilon
    if not k < n:
        raise ParameterError(f"need k < n, got k={k}, n={n}")
    rng = np.random.default_rng(config.seed)
    U = 1.0 - rng.random((p, k))
    G = 1.0 - rng.random((n, k))
    if config.init_strategy == "scaled":
        U /= np.sqrt(k)
        G /= np.sqrt(k)

    def loss(U, G):
        R = X - U @ G.T
        return float(np.sum(R * R))

    f = loss(U, G)
    trace = SolveTrace(objectives=[f])
    streak = 0
    reason = "max_iterations"
    for t in range(config.max_iterations):
        tic = time.perf_counter()
        U_new = U * (X @ G) / (U @ (G.T @ G) + eps)
        G_new = G * (X.T @ U_new) / (G @ (U_new.T @ U_new) + eps)
        f_new = loss(U_new, G_new)
        trace.iteration_seconds.append(time.perf_counter() - tic)
        trace.objectives.append(f_new)
        trace.delta_w.append(float(np.linalg.norm(U_new - U)))
        trace.delta_g.append(float(np.linalg.norm(G_new - G)))
        trace.n_iter = t + 1
        if not np.isfinite(f_new):
            trace.reason = "numerical_failure"
            raise NumericalFailure(f"non-finite values at iteration {t + 1}", trace)
        rel = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        U, G, f = U_new, G_new, f_new
        streak = streak + 1 if rel < config.tol else 0
        if f == 0.0 or streak >= config.patience:
            reason = "converged"
            break
    trace.reason = reason
    trace.orthogonality = orthogonality_deviation(G)
    trace.zero_rows = [int(i) for i in np.flatnonzero(~np.any(G > 0, axis=1))]
    return U, G, trace
