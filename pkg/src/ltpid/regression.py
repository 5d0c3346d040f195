"""Switched-FIR regression problems built from input/output records.

Splitting a record by tag turns the periodic identification problem into P
ordinary linear regressions: row k of the tag-tau design matrix holds the
input lags u(kP + tau - i) for i = 1..N, with u(t) = 0 for t <= 0, and the
target is z(kP + tau).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .atoms import AtomResponseMatrix, response_basis
from .ltp import ImpulseResponseMatrix, _locked


@dataclass(frozen=True, eq=False)
class IdentDataset:
    """A training record, with an optional fresh validation record.

    Record lengths must be divisible by the period; samples are 1-based in
    time and stored in time order.
    """

    period: int
    u: np.ndarray
    z: np.ndarray
    u_val: Optional[np.ndarray] = None
    z_val: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        u = np.asarray(self.u, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        self._check_record("training", u, z)
        object.__setattr__(self, "u", _locked(u))
        object.__setattr__(self, "z", _locked(z))
        if (self.u_val is None) != (self.z_val is None):
            raise ValueError("validation record needs both u_val and z_val")
        if self.u_val is not None:
            u_val = np.asarray(self.u_val, dtype=np.float64)
            z_val = np.asarray(self.z_val, dtype=np.float64)
            self._check_record("validation", u_val, z_val)
            object.__setattr__(self, "u_val", _locked(u_val))
            object.__setattr__(self, "z_val", _locked(z_val))

    def _check_record(self, name: str, u: np.ndarray, z: np.ndarray) -> None:
        if u.ndim != 1 or z.ndim != 1 or u.shape != z.shape:
            raise ValueError(f"{name} u and z must be matching 1-d arrays")
        if u.size == 0 or u.size % self.period != 0:
            raise ValueError(
                f"{name} record length {u.size} is not a positive multiple "
                f"of the period {self.period}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
            raise ValueError(f"{name} record contains non-finite entries")

    @property
    def n_periods(self) -> int:
        return self.u.shape[0] // self.period

    @property
    def has_validation(self) -> bool:
        return self.u_val is not None

    def validation_dataset(self) -> "IdentDataset":
        if not self.has_validation:
            raise ValueError("dataset has no validation record")
        return IdentDataset(period=self.period, u=self.u_val, z=self.z_val)


def record_to_csv(path, u: np.ndarray, z: np.ndarray) -> None:
    """Write one record as CSV with header t,u,z."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,u,z\n")
        for t in range(u.shape[0]):
            fh.write(f"{t + 1},{format(u[t], '.17g')},{format(z[t], '.17g')}\n")


def record_from_csv(path) -> tuple:
    with open(path) as fh:
        header = fh.readline().strip()
    if header != "t,u,z":
        raise ValueError(f"{path}: expected header 't,u,z', got {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns, got {data.shape[1]}")
    t = data[:, 0].astype(int)
    if np.any(t != np.arange(1, data.shape[0] + 1)):
        raise ValueError(f"{path}: time column must run 1..n in order")
    return data[:, 1].copy(), data[:, 2].copy()


def dataset_from_csv(period: int, train_path,
                     validation_path=None) -> IdentDataset:
    u, z = record_from_csv(train_path)
    u_val = z_val = None
    if validation_path is not None:
        u_val, z_val = record_from_csv(validation_path)
    return IdentDataset(period=period, u=u, z=z, u_val=u_val, z_val=z_val)


@dataclass(frozen=True, eq=False)
class TagRegression:
    """Design matrix and targets of one tag's FIR regression."""

    tau: int
    phi: np.ndarray
    targets: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def n_taps(self) -> int:
        return self.phi.shape[1]


def build_tag_regressions(data: IdentDataset, n_taps: int,
                          use_validation: bool = False) -> list:
    """Split a record into its P tag regressions with n_taps input lags."""
    if n_taps < 1:
        raise ValueError(f"n_taps must be >= 1, got {n_taps}")
    if use_validation:
        if not data.has_validation:
            raise ValueError("dataset has no validation record")
        u, z = data.u_val, data.z_val
    else:
        u, z = data.u, data.z
    if n_taps > u.shape[0]:
        warnings.warn(
            f"n_taps = {n_taps} exceeds the record length {u.shape[0]}; "
            "late lag columns are entirely zero-padded",
            RuntimeWarning, stacklevel=2)
    # Row t-1 of the full lag matrix holds u(t-1), ..., u(t-N); tag
    # regressions are its P-strided row slices.
    first_col = np.concatenate([[0.0], u[:-1]])
    lagged = toeplitz(first_col, np.zeros(n_taps))
    out = []
    for tau in range(1, data.period + 1):
        phi = np.ascontiguousarray(lagged[tau - 1::data.period])
        targets = np.ascontiguousarray(z[tau - 1::data.period])
        out.append(TagRegression(tau=tau, phi=phi, targets=targets))
    return out


def ls_objective(impulse, regressions: Sequence[TagRegression]) -> float:
    """Raw sum of squared prediction residuals over all tags and samples."""
    values = impulse.values if isinstance(impulse, ImpulseResponseMatrix) else np.asarray(impulse)
    if values.ndim != 2 or values.shape[1] != len(regressions):
        raise ValueError(
            f"impulse must be (N, {len(regressions)}), got {values.shape}")
    total = 0.0
    for j, reg in enumerate(regressions):
        if reg.n_taps != values.shape[0]:
            raise ValueError(
                f"tag {reg.tau} regression has {reg.n_taps} lags, impulse "
                f"has {values.shape[0]}")
        r = reg.targets - reg.phi @ values[:, j]
        total += float(r @ r)
    return total


class AtomRegression:
    """Tag regressions composed with the atom dictionary.

    Bundles the per-tag design matrices with the real coefficient-to-response
    basis and exposes the smooth part of the estimation objectives: value,
    gradient, and a cached Lipschitz bound of the gradient. Coefficient
    arguments are stacked (2 K, P) arrays (alpha block over beta block).
    """

    def __init__(self, regressions: Sequence[TagRegression],
                 atoms: AtomResponseMatrix):
        if not regressions:
            raise ValueError("at least one tag regression required")
        n_taps = regressions[0].n_taps
        if any(reg.n_taps != n_taps for reg in regressions):
            raise ValueError("all tag regressions must share n_taps")
        if atoms.n_taps != n_taps:
            raise ValueError(
                f"dictionary has {atoms.n_taps} lags, regressions have {n_taps}")
        self.regressions = tuple(regressions)
        self.atoms = atoms
        self.basis = response_basis(atoms)
        self._composites = {}
        self._lipschitz = None

    @property
    def period(self) -> int:
        return len(self.regressions)

    @property
    def n_poles(self) -> int:
        return self.atoms.n_poles

    @cached_property
    def data_norm2(self) -> float:
        return float(sum(reg.targets @ reg.targets for reg in self.regressions))

    def impulse_values(self, stacked: np.ndarray) -> np.ndarray:
        return self.basis @ stacked

    def objective(self, stacked: np.ndarray) -> float:
        g = self.basis @ stacked
        total = 0.0
        for j, reg in enumerate(self.regressions):
            r = reg.targets - reg.phi @ g[:, j]
            total += float(r @ r)
        return total

    def objective_and_gradient(self, stacked: np.ndarray) -> tuple:
        """Smooth objective and its (2 K, P) gradient, sharing one pass."""
        g = self.basis @ stacked
        back = np.empty_like(g)
        total = 0.0
        for j, reg in enumerate(self.regressions):
            r = reg.targets - reg.phi @ g[:, j]
            total += float(r @ r)
            back[:, j] = reg.phi.T @ r
        return total, -2.0 * (self.basis.T @ back)

    def gradient(self, stacked: np.ndarray) -> np.ndarray:
        return self.objective_and_gradient(stacked)[1]

    def composite(self, tau: int) -> np.ndarray:
        """Materialized design-times-basis matrix of one tag (cached)."""
        if not 1 <= tau <= self.period:
            raise ValueError(f"tau must be in 1..{self.period}, got {tau}")
        if tau not in self._composites:
            self._composites[tau] = self.regressions[tau - 1].phi @ self.basis
        return self._composites[tau]

    def lipschitz(self, power_iters: int = 50, power_tol: float = 1e-6) -> float:
        """Gradient Lipschitz bound 2 max_tau lambda_max, by power iteration.

        The iteration runs on the stacked coefficient space, where the
        quadratic forms of all tags act block-diagonally, so it converges to
        the largest per-tag eigenvalue. A 1 percent safety margin covers
        power-iteration underestimation; the solvers back off further if a
        step still overshoots.
        """
        if self._lipschitz is None:
            rng = np.random.default_rng(181001)
            v = rng.standard_normal((self.basis.shape[1], self.period))
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(max(1, power_iters)):
                g = self.basis @ v
                back = np.empty_like(g)
                for j, reg in enumerate(self.regressions):
                    back[:, j] = reg.phi.T @ (reg.phi @ g[:, j])
                w = self.basis.T @ back
                lam_new = float(np.linalg.norm(w))
                if lam_new == 0.0:
                    lam = 0.0
                    break
                v = w / lam_new
                if abs(lam_new - lam) <= power_tol * lam_new:
                    lam = lam_new
                    break
                lam = lam_new
            self._lipschitz = 2.0 * lam * 1.01
        return self._lipschitz


def atom_regressors(regressions: Sequence[TagRegression],
                    atoms: AtomResponseMatrix) -> AtomRegression:
    """Compose tag regressions with the dictionary into one fitting problem."""
    return AtomRegression(regressions, atoms)
