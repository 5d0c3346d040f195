"""Solvers for the penalized switched-FIR estimators.

Three numerical workhorses live here: plain per-tag least squares, an
accelerated proximal gradient loop for the dictionary-coefficient problems
(entry pairs or pole rows under a group norm), and a per-tag ADMM loop for
the Hankel nuclear norm problem. Coefficient iterates are stacked (2 K, P)
arrays as produced by CoefficientMatrix.stacked().
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .regression import AtomRegression, TagRegression


class Regularizer(enum.Enum):
    """Group layout of the coefficient penalty.

    L1 pairs each pole's (alpha, beta) entries per tag, so the penalty is a
    weighted sum of coefficient moduli. GROUP_ROWS spans each pole's entries
    across every tag, coupling the tags through one group per pole.
    """

    L1 = "l1"
    GROUP_ROWS = "group-rows"


class SolverDivergence(RuntimeError):
    """Raised when step backoff cannot restore descent.

    Carries the objective trace accumulated so far in ``trace``.
    """

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = np.asarray(trace, dtype=np.float64)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol: float = 1e-8
    admm_max_iters: int = 2000
    admm_rho: float = 1.0
    adaptive_rho: bool = True
    restart: bool = True
    power_iters: int = 50
    power_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1 or self.admm_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.tol <= 0 or self.power_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.admm_rho <= 0:
            raise ValueError(f"admm_rho must be positive, got {self.admm_rho}")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")

    @classmethod
    def from_dict(cls, obj: Optional[dict]) -> "SolverConfig":
        if obj is None:
            return cls()
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class SolveResult:
    solution: np.ndarray
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    info: dict = field(default_factory=dict)

    def trace_to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("iter,objective\n")
            for k, val in enumerate(self.objective_trace):
                fh.write(f"{k},{format(val, '.17g')}\n")


# -- proximal operators ------------------------------------------------------

def _shrink_scale(norms: np.ndarray, thresholds) -> np.ndarray:
    """Multiplier (1 - thr/norm)_+ per group, exact zero at or below thr."""
    denom = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > thresholds, 1.0 - thresholds / denom, 0.0)


def _pair_norms(stacked: np.ndarray) -> np.ndarray:
    half = stacked.shape[0] // 2
    return np.hypot(stacked[:half], stacked[half:])


def _row_norms(stacked: np.ndarray) -> np.ndarray:
    half = stacked.shape[0] // 2
    return np.sqrt(
        np.sum(stacked[:half] ** 2 + stacked[half:] ** 2, axis=1))


def group_norms(stacked: np.ndarray, regularizer: Regularizer) -> np.ndarray:
    """Per-group Euclidean norms: (K, P) for L1 pairs, (K,) for pole rows."""
    if regularizer is Regularizer.L1:
        return _pair_norms(stacked)
    return _row_norms(stacked)


def regularizer_value(stacked: np.ndarray, regularizer: Regularizer,
                      weights=1.0) -> float:
    """Weighted sum of group norms; weights broadcast against the norms."""
    return float(np.sum(weights * group_norms(stacked, regularizer)))


def prox_group(stacked: np.ndarray, thresholds,
               regularizer: Regularizer) -> np.ndarray:
    """Block soft threshold on the regularizer's groups.

    thresholds broadcasts against the group-norm array: (P,) or (K, P) for
    L1 pairs, scalar or (K,) for pole rows. A zero threshold returns the
    input unchanged, so gamma = 0 runs through the same code path exactly.
    """
    half = stacked.shape[0] // 2
    norms = group_norms(stacked, regularizer)
    scale = _shrink_scale(norms, thresholds)
    if regularizer is Regularizer.GROUP_ROWS:
        scale = scale[:, None]
    return np.concatenate([stacked[:half] * scale, stacked[half:] * scale])


def prox_l1(values: np.ndarray, thresholds) -> np.ndarray:
    """Scalar soft threshold, sign(v) (|v| - thr)_+."""
    mag = np.abs(values)
    return np.sign(values) * np.maximum(mag - thresholds, 0.0)


def prox_nuclear(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Singular value soft threshold; threshold 0 copies the input."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    if threshold == 0.0:
        return matrix.copy()
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    s = np.maximum(s - threshold, 0.0)
    return (u * s) @ vt


# -- least squares -----------------------------------------------------------

def solve_ls(regressions: Sequence[TagRegression]) -> SolveResult:
    """Per-tag least squares; rank-deficient tags get the minimum-norm fit."""
    n_taps = regressions[0].n_taps
    solution = np.empty((n_taps, len(regressions)))
    ranks = []
    total = 0.0
    for j, reg in enumerate(regressions):
        coef, _, rank, _ = scipy.linalg.lstsq(reg.phi, reg.targets)
        if rank < n_taps:
            warnings.warn(
                f"tag {reg.tau} regression is rank deficient "
                f"({rank} < {n_taps}); returning the minimum-norm solution",
                RuntimeWarning, stacklevel=2)
        solution[:, j] = coef
        ranks.append(int(rank))
        r = reg.targets - reg.phi @ coef
        total += float(r @ r)
    return SolveResult(
        solution=solution,
        objective_trace=np.array([total]),
        converged=True,
        iterations=1,
        info={"ranks": ranks})


# -- accelerated proximal gradient -------------------------------------------

def kill_zone_gamma(problem: AtomRegression, regularizer: Regularizer,
                    weights=1.0) -> float:
    """Smallest gamma at which the all-zero solution is optimal.

    Zero satisfies the stationarity condition exactly when every group's
    gradient norm sits inside its scaled subdifferential ball, i.e. when
    gamma >= ||grad f(0)_g|| / w_g for all groups g.
    """
    grad0 = problem.gradient(np.zeros((2 * problem.n_poles, problem.period)))
    norms = group_norms(grad0, regularizer)
    return float(np.max(norms / np.asarray(weights, dtype=np.float64)))


def group_kkt_residuals(problem: AtomRegression, stacked: np.ndarray,
                        gamma: float, regularizer: Regularizer,
                        weights=1.0) -> np.ndarray:
    """Stationarity residual of each penalty group at a candidate solution.

    Active groups measure ||grad_g + gamma w_g c_g / ||c_g||||; zero groups
    measure the subdifferential excess (||grad_g|| - gamma w_g)_+. A true
    minimizer drives every entry to zero.
    """
    half = stacked.shape[0] // 2
    grad = problem.gradient(stacked)
    norms = group_norms(stacked, regularizer)
    gnorms = group_norms(grad, regularizer)
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), norms.shape)
    residuals = np.empty(norms.shape)
    zero = norms == 0.0
    residuals[zero] = np.maximum(gnorms[zero] - gamma * w[zero], 0.0)
    if np.any(~zero):
        scale = np.where(zero, 1.0, gamma * w / np.where(zero, 1.0, norms))
        if regularizer is Regularizer.GROUP_ROWS:
            scale = scale[:, None]
        moved = grad + np.concatenate(
            [stacked[:half] * scale, stacked[half:] * scale])
        residuals[~zero] = group_norms(moved, regularizer)[~zero]
    return residuals


def solve_prox_grad(problem: AtomRegression, gamma: float,
                    regularizer: Regularizer, weights=1.0,
                    config: Optional[SolverConfig] = None,
                    warm_start: Optional[np.ndarray] = None) -> SolveResult:
    """Minimize the data misfit plus gamma times the weighted group norm.

    Accelerated proximal gradient with a fixed step from a power-iteration
    curvature bound. The default monotone variant rejects any accelerated
    step that would raise the objective, redoing it as a plain step with the
    momentum restarted; if even the plain step rises, the step is halved
    until descent returns (the curvature bound was too low). Stops when the
    relative objective decrease falls below tol twice in a row, the second
    time on a plain step. When gamma is past the kill zone the exact zero
    solution is returned immediately.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    config = config or SolverConfig()
    shape = (2 * problem.n_poles, problem.period)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights <= 0):
        raise ValueError("penalty weights must be positive")

    if gamma > 0 and gamma >= kill_zone_gamma(problem, regularizer, weights):
        zero = np.zeros(shape)
        return SolveResult(
            solution=zero,
            objective_trace=np.array([problem.data_norm2]),
            converged=True, iterations=0,
            info={"kill_zone": True, "restarts": 0, "step_halvings": 0})

    lip = max(problem.lipschitz(config.power_iters, config.power_tol), 1e-12)

    def total_objective(c):
        return problem.objective(c) + gamma * regularizer_value(
            c, regularizer, weights)

    if warm_start is not None:
        x = np.array(warm_start, dtype=np.float64)
        if x.shape != shape:
            raise ValueError(f"warm start must have shape {shape}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("warm start contains non-finite entries")
    else:
        x = np.zeros(shape)

    f_x = total_objective(x)
    trace = [f_x]
    halvings = 0
    restarts = 0

    def plain_step(base, f_base):
        # Descent is guaranteed once 1/lip is below the true curvature, so
        # halve the step until the objective stops rising.
        nonlocal lip, halvings
        _, grad = problem.objective_and_gradient(base)
        while True:
            cand = prox_group(base - grad / lip,
                              gamma * weights / lip, regularizer)
            f_cand = total_objective(cand)
            if np.isfinite(f_cand) and f_cand <= f_base + 1e-12 * max(1.0, f_base):
                return cand, min(f_cand, f_base)
            halvings += 1
            lip *= 2.0
            if halvings > 60:
                raise SolverDivergence(
                    "proximal gradient cannot find a descent step", trace)

    y = x.copy()
    t_mom = 1.0
    converged = False
    pending_stop = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        _, grad_y = problem.objective_and_gradient(y)
        z = prox_group(y - grad_y / lip, gamma * weights / lip, regularizer)
        f_z = total_objective(z)
        restarted = False
        if config.restart and not (np.isfinite(f_z) and f_z <= f_x + 1e-12 * max(1.0, f_x)):
            z, f_z = plain_step(x, f_x)
            t_mom = 1.0
            restarts += 1
            restarted = True
        decrease = f_x - f_z
        stop_now = abs(decrease) <= config.tol * max(abs(f_x), 1e-30)
        if stop_now and (pending_stop or restarted):
            # Second small decrease, the latest from an unaccelerated step:
            # accept z and stop.
            x, f_x = z, min(f_z, f_x)
            trace.append(f_x)
            converged = True
            break
        if stop_now and not pending_stop:
            # Momentum can stall the objective far from the solution, so
            # confirm with a plain step before stopping.
            pending_stop = True
            z, f_z = plain_step(z, f_z)
            t_mom = 1.0
        elif not stop_now:
            pending_stop = False
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = z + ((t_mom - 1.0) / t_next) * (z - x)
        x, f_x = z, f_z
        t_mom = t_next
        trace.append(f_x)

    return SolveResult(
        solution=x,
        objective_trace=np.asarray(trace),
        converged=converged,
        iterations=iterations,
        info={"kill_zone": False, "restarts": restarts,
              "step_halvings": halvings, "lipschitz": lip,
              "gamma": gamma})


# -- Hankel nuclear norm via ADMM --------------------------------------------

def hankel_matrix(g: np.ndarray, hankel_rows: int) -> np.ndarray:
    """Hankel lift of an impulse column, rows x (N - rows + 1)."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError("expected a 1-d impulse column")
    m = hankel_rows
    if not 1 <= m <= g.shape[0]:
        raise ValueError(
            f"hankel_rows must be in 1..{g.shape[0]}, got {m}")
    return scipy.linalg.hankel(g[:m], g[m - 1:])


def hankel_adjoint(matrix: np.ndarray, n_taps: int) -> np.ndarray:
    """Adjoint of the Hankel lift: sum each anti-diagonal back to a column."""
    m, q = matrix.shape
    if m + q - 1 != n_taps:
        raise ValueError(
            f"matrix shape {matrix.shape} does not flatten to {n_taps} taps")
    idx = np.arange(m)[:, None] + np.arange(q)[None, :]
    return np.bincount(idx.ravel(), weights=matrix.ravel(), minlength=n_taps)


def hankel_overlap_counts(n_taps: int, hankel_rows: int) -> np.ndarray:
    """Diagonal of adjoint-compose-lift: how often each lag enters the lift."""
    m = hankel_rows
    q = n_taps - m + 1
    lags = np.arange(n_taps)
    return np.minimum.reduce(
        [lags + 1, np.full(n_taps, m), np.full(n_taps, q), n_taps - lags]
    ).astype(np.float64)


def _nuclear_norm(matrix: np.ndarray) -> float:
    return float(np.sum(scipy.linalg.svdvals(matrix)))


def hankel_admm_tag(phi: np.ndarray, targets: np.ndarray,
                    penalty_weight: float, hankel_rows: int,
                    config: Optional[SolverConfig] = None,
                    warm_start: Optional[dict] = None) -> SolveResult:
    """One tag's misfit plus nuclear norm of the lifted impulse, by ADMM.

    Splits on M = H(g). The g update solves a fixed normal system through a
    cached Cholesky factor (rebuilt when rho changes), the M update is a
    singular value soft threshold, and the scaled dual U accumulates the gap.
    Residual balancing nudges rho every 10 iterations. Iterates are not
    monotone, so the best objective seen is what gets returned.

    warm_start, when given, is the ``info["state"]`` dict of a previous
    result for the same tag.
    """
    config = config or SolverConfig()
    if penalty_weight < 0:
        raise ValueError(f"penalty weight must be >= 0, got {penalty_weight}")
    phi = np.asarray(phi, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n_taps = phi.shape[1]
    m = hankel_rows
    q = n_taps - m + 1
    if q < 1:
        raise ValueError(f"hankel_rows {m} too large for {n_taps} taps")

    gram2 = 2.0 * (phi.T @ phi)
    rhs_data = 2.0 * (phi.T @ targets)
    counts = hankel_overlap_counts(n_taps, m)

    if warm_start is not None:
        g = np.array(warm_start["g"], dtype=np.float64)
        big_m = np.array(warm_start["M"], dtype=np.float64)
        dual = np.array(warm_start["U"], dtype=np.float64)
        rho = float(warm_start["rho"])
    else:
        g = np.zeros(n_taps)
        big_m = np.zeros((m, q))
        dual = np.zeros((m, q))
        rho = config.admm_rho

    def objective(gvec):
        r = targets - phi @ gvec
        return float(r @ r) + penalty_weight * _nuclear_norm(
            hankel_matrix(gvec, m))

    chol = scipy.linalg.cho_factor(gram2 + rho * np.diag(counts))
    best_g = g.copy()
    best_obj = objective(g)
    trace = [best_obj]
    converged = False
    iterations = 0
    primal = dual_res = float("inf")
    for iterations in range(1, config.admm_max_iters + 1):
        g = scipy.linalg.cho_solve(
            chol, rhs_data + rho * hankel_adjoint(big_m - dual, n_taps))
        lifted = hankel_matrix(g, m)
        m_old = big_m
        big_m = prox_nuclear(lifted + dual, penalty_weight / rho)
        dual = dual + lifted - big_m
        obj = objective(g)
        trace.append(obj)
        if obj < best_obj:
            best_obj = obj
            best_g = g.copy()
        primal = float(np.linalg.norm(lifted - big_m))
        dual_res = float(np.linalg.norm(
            rho * hankel_adjoint(big_m - m_old, n_taps)))
        eps_pri = np.sqrt(m * q) * config.tol + config.tol * max(
            np.linalg.norm(lifted), np.linalg.norm(big_m))
        eps_dual = np.sqrt(n_taps) * config.tol + config.tol * np.linalg.norm(
            rho * hankel_adjoint(dual, n_taps))
        if primal <= eps_pri and dual_res <= eps_dual:
            converged = True
            break
        if config.adaptive_rho and iterations % 10 == 0:
            if primal > 10.0 * dual_res:
                rho *= 2.0
                dual /= 2.0
                chol = scipy.linalg.cho_factor(gram2 + rho * np.diag(counts))
            elif dual_res > 10.0 * primal:
                rho /= 2.0
                dual *= 2.0
                chol = scipy.linalg.cho_factor(gram2 + rho * np.diag(counts))

    return SolveResult(
        solution=best_g,
        objective_trace=np.asarray(trace),
        converged=converged,
        iterations=iterations,
        info={
            "best_objective": best_obj,
            "rho": rho,
            "primal_residual": primal,
            "dual_residual": dual_res,
            "state": {"g": g, "M": big_m, "U": dual, "rho": rho},
        })


def solve_hankel_admm(regressions: Sequence[TagRegression], gamma: float,
                      hankel_rows: int, tag_weights=None,
                      config: Optional[SolverConfig] = None,
                      warm_starts: Optional[list] = None) -> SolveResult:
    """Hankel-penalized fit of every tag; the problem separates per tag.

    The combined trace pads each tag's trace with its final value before
    summing, so its length is the longest single-tag run.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    n_tags = len(regressions)
    if tag_weights is None:
        tag_weights = np.ones(n_tags)
    tag_weights = np.asarray(tag_weights, dtype=np.float64)
    if tag_weights.shape != (n_tags,) or np.any(tag_weights <= 0):
        raise ValueError("tag_weights must be positive, one per tag")
    results = []
    for j, reg in enumerate(regressions):
        ws = warm_starts[j] if warm_starts is not None else None
        results.append(hankel_admm_tag(
            reg.phi, reg.targets, gamma * tag_weights[j], hankel_rows,
            config, warm_start=ws))
    solution = np.column_stack([res.solution for res in results])
    longest = max(res.objective_trace.shape[0] for res in results)
    combined = np.zeros(longest)
    for res in results:
        tr = res.objective_trace
        combined[:tr.shape[0]] += tr
        combined[tr.shape[0]:] += tr[-1]
    return SolveResult(
        solution=solution,
        objective_trace=combined,
        converged=all(res.converged for res in results),
        iterations=max(res.iterations for res in results),
        info={
            "tags": [res.info for res in results],
            "best_objective": float(sum(res.info["best_objective"]
                                        for res in results)),
        })
