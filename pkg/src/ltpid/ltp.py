"""Periodic state-space models, simulation, and impulse-response handling.

Discrete-time systems x(t+1) = A(t) x(t) + B(t) u(t), y(t) = C(t) x(t) with
P-periodic matrices and 1-based time. The matrix acting at time t is the one
stored at tag ((t - 1) mod P) + 1. Tags are written tau and run 1..P.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels


def _locked(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PeriodicStateSpace:
    """Immutable P-periodic state-space realization.

    Parameters
    ----------
    A : array_like, shape (P, nx, nx)
        State matrices, one per tag.
    B : array_like, shape (P, nx) or (P, nx, 1)
        Input vectors per tag (single-input).
    C : array_like, shape (P, nx) or (P, 1, nx)
        Output vectors per tag (single-output).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        C = np.asarray(self.C, dtype=np.float64)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A must have shape (P, nx, nx), got {A.shape}")
        period, nx = A.shape[0], A.shape[1]
        if period < 1 or nx < 1:
            raise ValueError("period and state dimension must be positive")
        if B.ndim == 3 and B.shape[2] == 1:
            B = B[:, :, 0]
        if C.ndim == 3 and C.shape[1] == 1:
            C = C[:, 0, :]
        if B.shape != (period, nx):
            raise ValueError(f"B must have shape ({period}, {nx}), got {B.shape}")
        if C.shape != (period, nx):
            raise ValueError(f"C must have shape ({period}, {nx}), got {C.shape}")
        for name, arr in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", _locked(A))
        object.__setattr__(self, "B", _locked(B))
        object.__setattr__(self, "C", _locked(C))

    @property
    def period(self) -> int:
        return self.A.shape[0]

    @property
    def state_dim(self) -> int:
        return self.A.shape[1]

    def tag_index(self, t: int) -> int:
        """0-based storage index of the matrices acting at 1-based time t."""
        return (t - 1) % self.period

    def to_dict(self) -> dict:
        return {
            "P": self.period,
            "nx": self.state_dim,
            "A": [a.ravel().tolist() for a in self.A],
            "B": [b.tolist() for b in self.B],
            "C": [c.tolist() for c in self.C],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PeriodicStateSpace":
        period = int(obj["P"])
        nx = int(obj["nx"])
        A = np.array(obj["A"], dtype=np.float64).reshape(period, nx, nx)
        B = np.array(obj["B"], dtype=np.float64).reshape(period, nx)
        C = np.array(obj["C"], dtype=np.float64).reshape(period, nx)
        return cls(A=A, B=B, C=C)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "PeriodicStateSpace":
        try:
            obj = json.loads(source)
        except (TypeError, ValueError):
            with open(source) as fh:
                obj = json.load(fh)
        else:
            if not isinstance(obj, dict):
                with open(source) as fh:
                    obj = json.load(fh)
        return cls.from_dict(obj)


@dataclass(frozen=True, eq=False)
class ImpulseResponseMatrix:
    """Per-tag impulse-response coefficients, stored as an (N, P) matrix.

    Entry (i-1, tau-1) is the lag-i coefficient of the sub-model active at
    tag tau.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-d (N, P), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("impulse response contains non-finite entries")
        object.__setattr__(self, "values", _locked(values))

    @property
    def n_taps(self) -> int:
        return self.values.shape[0]

    @property
    def period(self) -> int:
        return self.values.shape[1]

    def column(self, tau: int) -> np.ndarray:
        if not 1 <= tau <= self.period:
            raise ValueError(f"tau must be in 1..{self.period}, got {tau}")
        return self.values[:, tau - 1]


class StabilityReport(NamedTuple):
    stable: bool
    spectral_radius: float


def simulate(sys: PeriodicStateSpace, u, x0=None) -> np.ndarray:
    """Run the periodic state recursion and return the output sequence.

    The state starts at x(1) = x0 (zeros when omitted) and y(t) = C(t) x(t)
    is returned for t = 1..len(u).
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u must be a nonempty 1-d array")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite entries")
    if x0 is None:
        x0 = np.zeros(sys.state_dim)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.shape != (sys.state_dim,):
        raise ValueError(
            f"x0 must have shape ({sys.state_dim},), got {x0.shape}")
    return kernels.ltp_simulate(sys.A, sys.B, sys.C, u, x0)


def monodromy(sys: PeriodicStateSpace, tau: int = 1) -> np.ndarray:
    """Product A(tau-1) A(tau-2) ... A(tau-P) of one full period of state maps."""
    if not 1 <= tau <= sys.period:
        raise ValueError(f"tau must be in 1..{sys.period}, got {tau}")
    out = np.eye(sys.state_dim)
    for back in range(1, sys.period + 1):
        out = out @ sys.A[sys.tag_index(tau - back)]
    return out


def is_stable(sys: PeriodicStateSpace) -> StabilityReport:
    """Spectral-radius stability test on the monodromy matrix."""
    rho = float(np.max(np.abs(np.linalg.eigvals(monodromy(sys, 1)))))
    return StabilityReport(stable=rho < 1.0, spectral_radius=rho)


def true_impulse_response(sys: PeriodicStateSpace, n_taps: int) -> ImpulseResponseMatrix:
    """Exact switched-FIR coefficients of a periodic state-space model.

    Column tau holds g_i = C(tau) A(tau-1) ... A(tau-i+1) B(tau-i) for
    i = 1..n_taps. Warns when the source system is not asymptotically
    stable, in which case the coefficients do not decay.
    """
    if n_taps < 1:
        raise ValueError(f"n_taps must be >= 1, got {n_taps}")
    report = is_stable(sys)
    if not report.stable:
        warnings.warn(
            "system is not asymptotically stable (spectral radius "
            f"{report.spectral_radius:.6g}); impulse response will not decay",
            RuntimeWarning, stacklevel=2)
    values = kernels.ltp_impulse(sys.A, sys.B, sys.C, int(n_taps))
    return ImpulseResponseMatrix(values=values)


@dataclass(frozen=True, eq=False)
class FitReport:
    """Normalized fit of an estimated impulse response against the truth.

    ``score`` is 100 for an exact match of the first 100 coefficients and
    decreases (unboundedly) with the relative error against the grand-mean
    baseline. ``per_tag_rmse`` holds the root-mean-square coefficient error
    of each tag over the first 100 lags.
    """

    score: float
    per_tag_rmse: np.ndarray
    estimator_name: str = ""
    gamma_selected: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "per_tag_rmse": np.asarray(self.per_tag_rmse).tolist(),
            "estimator_name": self.estimator_name,
            "gamma_selected": self.gamma_selected,
        }


_SCORE_LAGS = 100


def fit_metric(truth: ImpulseResponseMatrix, estimate: ImpulseResponseMatrix,
               estimator_name: str = "",
               gamma_selected: Optional[float] = None) -> FitReport:
    """Score an estimate against the true coefficients over the first 100 lags.

    score = 100 * (1 - sqrt(sum (g - ghat)^2 / sum (g - gbar)^2)) with both
    sums running over all tags and lags 1..100, and gbar the grand mean of
    the true coefficients over that block. Raises when the truth block is
    constant (zero denominator) or when either matrix has fewer than 100 lags.
    """
    if truth.period != estimate.period:
        raise ValueError(
            f"period mismatch: truth {truth.period}, estimate {estimate.period}")
    if truth.n_taps < _SCORE_LAGS or estimate.n_taps < _SCORE_LAGS:
        raise ValueError(
            f"fit_metric needs at least {_SCORE_LAGS} lags, got "
            f"{truth.n_taps} and {estimate.n_taps}")
    g = truth.values[:_SCORE_LAGS]
    ghat = estimate.values[:_SCORE_LAGS]
    gbar = g.mean()
    denom = float(((g - gbar) ** 2).sum())
    if denom == 0.0:
        raise ValueError(
            "truth impulse response is constant over the scored block; "
            "fit score is undefined")
    num = float(((g - ghat) ** 2).sum())
    score = 100.0 * (1.0 - np.sqrt(num / denom))
    rmse = np.sqrt(((g - ghat) ** 2).mean(axis=0))
    return FitReport(score=float(score), per_tag_rmse=rmse,
                     estimator_name=estimator_name,
                     gamma_selected=gamma_selected)


def impulse_to_csv(path, impulse: ImpulseResponseMatrix) -> None:
    """Write coefficients as CSV with columns i, tau, g (lag-major order)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("i,tau,g\n")
        values = impulse.values
        for i in range(values.shape[0]):
            for j in range(values.shape[1]):
                fh.write(f"{i + 1},{j + 1},{format(values[i, j], '.17g')}\n")


def impulse_from_csv(path) -> ImpulseResponseMatrix:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size == 0:
        raise ValueError(f"empty impulse CSV: {path}")
    i = data["i"].astype(int)
    tau = data["tau"].astype(int)
    n_taps, period = i.max(), tau.max()
    values = np.full((n_taps, period), np.nan)
    values[i - 1, tau - 1] = data["g"]
    if np.isnan(values).any():
        raise ValueError(f"impulse CSV {path} does not cover a full (i, tau) grid")
    return ImpulseResponseMatrix(values=values)
