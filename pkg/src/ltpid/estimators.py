"""The four estimation methods behind one interface, with gamma selection.

identify() solves the chosen method over a gamma grid, scores every model on
a held-out validation record with the same least squares misfit used for
training, and keeps the model whose validation error is smallest. Sweeps are
warm started along the grid, which changes nothing about the selected model
(each solve still meets its own convergence test) but saves most iterations.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .atoms import (CoefficientMatrix, GridSpec, PoleGrid,
                    build_atom_responses, build_pole_grid)
from .ltp import ImpulseResponseMatrix
from .regression import (AtomRegression, IdentDataset, atom_regressors,
                         build_tag_regressions, ls_objective)
from .solvers import (Regularizer, SolverConfig, SolverDivergence,
                      hankel_matrix, solve_hankel_admm, solve_ls,
                      solve_prox_grad)


class Method(enum.Enum):
    LS = "LS"
    HANK = "Hank"
    ATOM = "Atom"
    GATOM = "GAtom"

    @classmethod
    def from_name(cls, name: str) -> "Method":
        for member in cls:
            if member.value.lower() == str(name).lower():
                return member
        raise ValueError(
            f"unknown method {name!r}; expected one of "
            f"{[m.value for m in cls]}")


def default_gamma_grid() -> np.ndarray:
    """10-point log-spaced gamma grid between 0.1 and 10."""
    return np.logspace(-1.0, 1.0, 10)


def case_study_gamma_grid() -> np.ndarray:
    """100-point log-spaced grid between 0.1 and 10, for order sweeps."""
    return np.logspace(-1.0, 1.0, 100)


@dataclass(frozen=True)
class EstimatorSpec:
    """Everything identify() needs besides the data.

    beta weights the per-tag penalty terms of Hank and Atom; group_weights
    weights the per-pole groups of GAtom (default 1 for a real pole, 2 for a
    complex pair, so one grid pole costs the same as its two-sided modal
    content). Thresholds for order counting are relative: order_threshold
    against the largest coefficient modulus or group norm, and
    hankel_rank_threshold against each tag's largest Hankel singular value.
    """

    method: Method
    n_taps: int = 100
    hankel_rows: int = 20
    beta: Optional[tuple] = None
    gamma_grid: tuple = field(
        default_factory=lambda: tuple(default_gamma_grid()))
    grid: Optional[GridSpec] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    order_threshold: float = 1e-4
    hankel_rank_threshold: float = 1e-3
    group_weights: Optional[tuple] = None

    def __post_init__(self):
        if not isinstance(self.method, Method):
            object.__setattr__(self, "method", Method.from_name(self.method))
        if self.n_taps < 1:
            raise ValueError(f"n_taps must be >= 1, got {self.n_taps}")
        if not 1 <= self.hankel_rows <= self.n_taps:
            raise ValueError(
                f"hankel_rows must be in 1..{self.n_taps}, "
                f"got {self.hankel_rows}")
        grid = tuple(float(g) for g in self.gamma_grid)
        if not grid:
            raise ValueError("gamma_grid must not be empty")
        if any(not math.isfinite(g) or g < 0 for g in grid):
            raise ValueError("gamma_grid entries must be finite and >= 0")
        object.__setattr__(self, "gamma_grid", grid)
        if self.beta is not None:
            beta = tuple(float(b) for b in self.beta)
            if any(b <= 0 for b in beta):
                raise ValueError("beta weights must be positive")
            object.__setattr__(self, "beta", beta)
        if self.group_weights is not None:
            gw = tuple(float(w) for w in self.group_weights)
            if any(w <= 0 for w in gw):
                raise ValueError("group_weights must be positive")
            object.__setattr__(self, "group_weights", gw)
        if self.order_threshold < 0 or self.hankel_rank_threshold < 0:
            raise ValueError("order thresholds must be >= 0")

    def grid_spec(self) -> GridSpec:
        if isinstance(self.grid, GridSpec):
            return self.grid
        return GridSpec.from_config(self.grid, self.n_taps)

    def tag_weights(self, period: int) -> np.ndarray:
        if self.beta is None:
            return np.ones(period)
        if len(self.beta) != period:
            raise ValueError(
                f"beta has {len(self.beta)} entries for period {period}")
        return np.asarray(self.beta, dtype=np.float64)

    def pole_weights(self, poles: PoleGrid) -> np.ndarray:
        if self.group_weights is None:
            return np.where(poles.is_complex, 2.0, 1.0)
        if len(self.group_weights) != poles.n_poles:
            raise ValueError(
                f"group_weights has {len(self.group_weights)} entries for "
                f"{poles.n_poles} poles")
        return np.asarray(self.group_weights, dtype=np.float64)

    @classmethod
    def from_dict(cls, obj: dict) -> "EstimatorSpec":
        obj = dict(obj)
        kwargs = {"method": Method.from_name(obj.pop("method"))}
        if "N" in obj:
            kwargs["n_taps"] = int(obj.pop("N"))
        if "m" in obj:
            kwargs["hankel_rows"] = int(obj.pop("m"))
        if "beta" in obj:
            beta = obj.pop("beta")
            kwargs["beta"] = None if beta is None else tuple(beta)
        if "gamma_grid" in obj:
            kwargs["gamma_grid"] = tuple(obj.pop("gamma_grid"))
        if "grid" in obj:
            kwargs["grid"] = GridSpec.from_config(
                obj.pop("grid"), kwargs.get("n_taps", 100))
        if "solver" in obj:
            kwargs["solver"] = SolverConfig.from_dict(obj.pop("solver"))
        for key in ("order_threshold", "hankel_rank_threshold"):
            if key in obj:
                kwargs[key] = float(obj.pop(key))
        if "group_weights" in obj:
            gw = obj.pop("group_weights")
            kwargs["group_weights"] = None if gw is None else tuple(gw)
        if obj:
            raise ValueError(f"unknown estimator options: {sorted(obj)}")
        return cls(**kwargs)


@dataclass
class CrossValReport:
    """Result of one identify() run.

    validation_errors holds eps(gamma) in the order of gamma_grid, with NaN
    marking solves that failed and were excluded from selection. orders is
    the per-tag estimated order at the estimator spec's thresholds (None for
    LS, which exposes no order). poles is kept so active coefficients can be
    serialized next to their pole locations.
    """

    method: Method
    n_taps: int
    hankel_rows: int
    gamma_grid: np.ndarray
    validation_errors: np.ndarray
    gamma_star: Optional[float]
    impulse: ImpulseResponseMatrix
    coefficients: Optional[CoefficientMatrix] = None
    poles: Optional[PoleGrid] = None
    orders: Optional[np.ndarray] = None
    converged: Optional[list] = None
    iterations: Optional[list] = None

    def eps_curve_to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("gamma,eps\n")
            for g, e in zip(self.gamma_grid, self.validation_errors):
                fh.write(f"{format(g, '.17g')},{format(e, '.17g')}\n")

    def active_coefficients(self) -> list:
        """Rows of the coefficient matrix whose group norm is nonzero."""
        if self.coefficients is None:
            return []
        norms = self.coefficients.group_norms()
        out = []
        for k in np.flatnonzero(norms > 0.0):
            w = self.poles.poles[k]
            out.append({
                "pole_index": int(k),
                "w_re": float(w.real),
                "w_im": float(w.imag),
                "kind": "complex" if self.coefficients.is_complex[k]
                        else "real",
                "alpha": [float(a) for a in self.coefficients.alpha[k]],
                "beta": [float(b) for b in self.coefficients.beta[k]],
            })
        return out

    def to_dict(self) -> dict:
        def clean(x):
            return None if x is None or not math.isfinite(x) else float(x)

        out = {
            "method": self.method.value,
            "N": int(self.n_taps),
            "m": int(self.hankel_rows),
            "P": int(self.impulse.period),
            "gamma_grid": [float(g) for g in self.gamma_grid],
            "validation_errors": [clean(e) for e in self.validation_errors],
            "gamma_star": clean(self.gamma_star),
            "orders": None if self.orders is None
                      else [int(o) for o in self.orders],
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.coefficients is not None:
            out["coefficients"] = {
                "n_poles": int(self.coefficients.alpha.shape[0]),
                "active": self.active_coefficients(),
            }
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text


def _hankel_orders(impulse: ImpulseResponseMatrix, hankel_rows: int,
                   rel_threshold: float) -> np.ndarray:
    orders = np.zeros(impulse.period, dtype=int)
    for j in range(impulse.period):
        svals = scipy.linalg.svdvals(
            hankel_matrix(impulse.values[:, j], hankel_rows))
        if svals.size and svals[0] > 0:
            orders[j] = int(np.sum(svals > rel_threshold * svals[0]))
    return orders


def _atom_orders(coeffs: CoefficientMatrix, threshold: float) -> np.ndarray:
    """Per-tag count of active atoms, a complex pair counting 2."""
    moduli = coeffs.modulus()
    pole_count = np.where(coeffs.is_complex, 2, 1)
    return ((moduli > threshold) * pole_count[:, None]).sum(axis=0)


def estimated_orders(report: CrossValReport, threshold: float) -> np.ndarray:
    """Per-tag model order at an explicit threshold.

    Atom and GAtom count coefficient moduli above the (absolute) threshold
    per tag, a complex pair counting 2; Hank counts Hankel singular values
    above threshold times the tag's largest. The group penalty zeroes whole
    rows at once, so GAtom orders come out uniform across tags even though
    they are counted per tag.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    if report.method is Method.HANK:
        return _hankel_orders(report.impulse, report.hankel_rows, threshold)
    if report.coefficients is None:
        raise ValueError(f"orders undefined for method {report.method.value}")
    return _atom_orders(report.coefficients, threshold)


def _default_orders(spec: EstimatorSpec, report: CrossValReport) -> np.ndarray:
    if report.method is Method.HANK:
        return _hankel_orders(report.impulse, spec.hankel_rows,
                              spec.hankel_rank_threshold)
    moduli = report.coefficients.modulus()
    top = float(moduli.max()) if moduli.size else 0.0
    return _atom_orders(report.coefficients, spec.order_threshold * top)


def _select_gamma(gammas: np.ndarray, eps: np.ndarray) -> int:
    """Index of the smallest eps; exact ties go to the larger gamma."""
    valid = np.isfinite(eps)
    if not np.any(valid):
        raise RuntimeError("every gamma solve failed; nothing to select")
    best = np.min(eps[valid])
    candidates = np.flatnonzero(valid & (eps == best))
    return int(candidates[np.argmax(gammas[candidates])])


def _sweep_atom(problem: AtomRegression, spec: EstimatorSpec,
                gammas: Sequence[float], regularizer: Regularizer,
                weights: np.ndarray) -> list:
    """Solve the coefficient problem along a gamma path, largest first.

    Returns results aligned with the input ordering; failed gammas carry
    None. Warm starting descends from the kill zone, where the cold zero
    start is exact, so every warm start point already beats the zero start
    of its own gamma.
    """
    order = np.argsort(gammas)[::-1]
    results = [None] * len(gammas)
    prev = None
    for idx in order:
        try:
            res = solve_prox_grad(
                problem, float(gammas[idx]), regularizer, weights=weights,
                config=spec.solver, warm_start=prev)
        except SolverDivergence as exc:
            warnings.warn(
                f"gamma = {gammas[idx]:g} solve diverged and is excluded: "
                f"{exc}", RuntimeWarning, stacklevel=3)
            continue
        results[idx] = res
        prev = res.solution
    return results


def _sweep_hankel(regressions, spec: EstimatorSpec, gammas: Sequence[float],
                  tag_weights: np.ndarray) -> list:
    """ADMM along the gamma path, smallest first, carrying (M, U, rho)."""
    order = np.argsort(gammas)
    results = [None] * len(gammas)
    warm = None
    for idx in order:
        try:
            res = solve_hankel_admm(
                regressions, float(gammas[idx]), spec.hankel_rows,
                tag_weights=tag_weights, config=spec.solver,
                warm_starts=warm)
        except (SolverDivergence, np.linalg.LinAlgError) as exc:
            warnings.warn(
                f"gamma = {gammas[idx]:g} solve failed and is excluded: "
                f"{exc}", RuntimeWarning, stacklevel=3)
            continue
        results[idx] = res
        warm = [info["state"] for info in res.info["tags"]]
    return results


def identify(data: IdentDataset, spec: EstimatorSpec) -> CrossValReport:
    """Fit the method on the training record and select gamma on validation.

    The validation error of a candidate model is the plain least squares
    misfit of its impulse response on the held-out record. LS has no
    hyperparameter and ignores the grid entirely.
    """
    regs = build_tag_regressions(data, spec.n_taps)
    period = data.period

    if spec.method is Method.LS:
        res = solve_ls(regs)
        report = CrossValReport(
            method=spec.method, n_taps=spec.n_taps,
            hankel_rows=spec.hankel_rows,
            gamma_grid=np.array([]), validation_errors=np.array([]),
            gamma_star=None,
            impulse=ImpulseResponseMatrix(res.solution))
        return report

    gammas = np.asarray(spec.gamma_grid, dtype=np.float64)
    if gammas.shape[0] > 1 and not data.has_validation:
        raise ValueError(
            "gamma selection over a grid needs a validation record")
    regs_val = (build_tag_regressions(data, spec.n_taps, use_validation=True)
                if data.has_validation else None)

    if spec.method is Method.HANK:
        results = _sweep_hankel(regs, spec, gammas,
                                spec.tag_weights(period))
        impulses = [None if r is None else ImpulseResponseMatrix(r.solution)
                    for r in results]
        coeff_of = None
    else:
        grid = build_pole_grid(spec.grid_spec())
        atoms = build_atom_responses(grid, spec.n_taps)
        problem = atom_regressors(regs, atoms)
        if spec.method is Method.ATOM:
            regularizer = Regularizer.L1
            weights = spec.tag_weights(period)
        else:
            regularizer = Regularizer.GROUP_ROWS
            weights = spec.pole_weights(grid)
        results = _sweep_atom(problem, spec, gammas, regularizer, weights)
        impulses = [None if r is None else
                    ImpulseResponseMatrix(problem.impulse_values(r.solution))
                    for r in results]

        def coeff_of(res):
            return CoefficientMatrix.from_stacked(res.solution,
                                                  grid.is_complex)

    eps = np.full(gammas.shape, np.nan)
    for i, imp in enumerate(impulses):
        if imp is not None and regs_val is not None:
            eps[i] = ls_objective(imp, regs_val)
    if regs_val is None:
        # Single-gamma run without validation: select the only candidate.
        survivors = [i for i, r in enumerate(results) if r is not None]
        if not survivors:
            raise RuntimeError("every gamma solve failed; nothing to select")
        best = survivors[0]
    else:
        best = _select_gamma(gammas, eps)
        if results[best] is None:
            raise RuntimeError("selected gamma has no solution")

    report = CrossValReport(
        method=spec.method, n_taps=spec.n_taps, hankel_rows=spec.hankel_rows,
        gamma_grid=gammas, validation_errors=eps,
        gamma_star=float(gammas[best]),
        impulse=impulses[best],
        coefficients=None if coeff_of is None else coeff_of(results[best]),
        poles=None if coeff_of is None else grid,
        converged=[None if r is None else bool(r.converged)
                   for r in results],
        iterations=[None if r is None else int(r.iterations)
                    for r in results])
    if report.coefficients is not None or spec.method is Method.HANK:
        report.orders = _default_orders(spec, report)
    return report


def order_sweep(data: IdentDataset, spec: EstimatorSpec,
                values: Sequence[float]) -> np.ndarray:
    """Estimated per-tag orders along a penalty-scale sweep.

    For Hank and Atom the swept value scales every tag's penalty weight
    (beta uniform across tags, gamma fixed), which multiplies the penalty
    exactly like sweeping gamma with unit beta does; for GAtom it is gamma
    itself. Returns an integer array of shape (len(values), P).
    """
    if spec.method is Method.LS:
        raise ValueError("LS has no penalty to sweep")
    values = np.asarray(values, dtype=np.float64)
    period = data.period
    regs = build_tag_regressions(data, spec.n_taps)
    orders = np.zeros((values.shape[0], period), dtype=int)

    if spec.method is Method.HANK:
        results = _sweep_hankel(regs, spec, values, spec.tag_weights(period))
        for i, res in enumerate(results):
            if res is None:
                orders[i] = -1
                continue
            orders[i] = _hankel_orders(
                ImpulseResponseMatrix(res.solution), spec.hankel_rows,
                spec.hankel_rank_threshold)
        return orders

    grid = build_pole_grid(spec.grid_spec())
    atoms = build_atom_responses(grid, spec.n_taps)
    problem = atom_regressors(regs, atoms)
    if spec.method is Method.ATOM:
        regularizer, weights = Regularizer.L1, spec.tag_weights(period)
    else:
        regularizer, weights = Regularizer.GROUP_ROWS, spec.pole_weights(grid)
    results = _sweep_atom(problem, spec, values, regularizer, weights)
    for i, res in enumerate(results):
        if res is None:
            orders[i] = -1
            continue
        coeffs = CoefficientMatrix.from_stacked(res.solution, grid.is_complex)
        moduli = coeffs.modulus()
        top = float(moduli.max()) if moduli.size else 0.0
        orders[i] = _atom_orders(coeffs, spec.order_threshold * top)
    return orders


def orders_to_csv(path, values: Sequence[float], orders: np.ndarray) -> None:
    """Sweep output as CSV: value, then one order column per tag."""
    orders = np.asarray(orders)
    header = "value," + ",".join(
        f"order_tau{j + 1}" for j in range(orders.shape[1]))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for v, row in zip(values, orders):
            fh.write(format(v, ".17g") + ","
                     + ",".join(str(int(o)) for o in row) + "\n")
