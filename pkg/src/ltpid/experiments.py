"""The two studies: the variable-length pendulum and the Monte Carlo bank.

Both are deterministic given their seed. Record generation always draws the
input first and the measurement noise second from the same stream, so a zero
noise level consumes the same random numbers as a nonzero one.
"""
from __future__ import annotations

import concurrent.futures
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .estimators import EstimatorSpec, Method, identify
from .ltp import (PeriodicStateSpace, fit_metric, is_stable, simulate,
                  true_impulse_response)
from .regression import IdentDataset

_SCORE_TAPS = 100


@dataclass(frozen=True)
class PendulumSpec:
    """Variable-length pendulum: length profile L0 + l cos(omega t).

    The small-angle linearization is a periodic LTV with period 2 pi / omega;
    sampling P times per length cycle gives the discrete period.
    """

    base_length: float = 10.0
    swing_length: float = 5.0
    mass: float = 5.0
    gravity: float = 9.8
    omega: float = 4.0 * np.pi
    period: int = 4
    noise_sigma2: float = (0.1 * np.pi / 180.0) ** 2
    n_samples: int = 500
    substeps: int = 50

    def __post_init__(self):
        if not 0.0 <= self.swing_length < self.base_length:
            raise ValueError("need 0 <= swing amplitude < base length")
        if min(self.mass, self.gravity, self.omega) <= 0:
            raise ValueError("mass, gravity and omega must be positive")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if self.n_samples < 1 or self.n_samples % self.period != 0:
            raise ValueError(
                f"n_samples {self.n_samples} is not a positive multiple of "
                f"the period {self.period}")
        if self.noise_sigma2 < 0:
            raise ValueError("noise_sigma2 must be >= 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def ts(self) -> float:
        """Sampling time; period * ts spans one length cycle exactly."""
        return 2.0 * np.pi / (self.period * self.omega)

    def length_at_samples(self) -> np.ndarray:
        """L evaluated at the first period's sample instants."""
        t = np.arange(self.period) * self.ts
        return self.base_length + self.swing_length * np.cos(self.omega * t)

    @classmethod
    def from_dict(cls, obj: Optional[dict]) -> "PendulumSpec":
        if obj is None:
            return cls()
        obj = dict(obj)
        rename = {"L0": "base_length", "l": "swing_length", "g": "gravity",
                  "P": "period", "nP": "n_samples"}
        kwargs = {}
        for key, value in obj.items():
            name = rename.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise ValueError(f"unknown pendulum option: {key}")
            kwargs[name] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"L0": self.base_length, "l": self.swing_length,
                "mass": self.mass, "g": self.gravity, "omega": self.omega,
                "P": self.period, "Ts": self.ts,
                "noise_sigma2": self.noise_sigma2, "nP": self.n_samples,
                "substeps": self.substeps}


def pendulum_truth(spec: PendulumSpec) -> PeriodicStateSpace:
    """Sampled small-angle truth: state transition and input effect per tag.

    Integrates the linearized dynamics over each sampling interval with
    fixed-step RK4 at spec.substeps steps per sample, under zero-order-held
    force. The output picks the angle, first state component.
    """
    A, B = kernels.pendulum_discretize(
        spec.base_length, spec.swing_length, spec.gravity, spec.mass,
        spec.omega, spec.ts, spec.period, spec.substeps)
    C = np.tile(np.array([1.0, 0.0]), (spec.period, 1))
    return PeriodicStateSpace(A=A, B=B, C=C)


def pendulum_dataset(spec: PendulumSpec, seed: int) -> tuple:
    """Training and validation records from the linearized pendulum.

    Both records use unit Gaussian force and Gaussian angle noise of
    variance spec.noise_sigma2, starting at rest. Returns the dataset and
    the discretized truth it was generated from.
    """
    truth = pendulum_truth(spec)
    report = is_stable(truth)
    if not report.stable:
        warnings.warn(
            f"linearized pendulum is unstable (spectral radius "
            f"{report.spectral_radius:.6f}); records will grow",
            RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(spec.noise_sigma2)

    def record():
        u = rng.standard_normal(spec.n_samples)
        z = simulate(truth, u) + sigma * rng.standard_normal(spec.n_samples)
        return u, z

    u, z = record()
    u_val, z_val = record()
    data = IdentDataset(period=spec.period, u=u, z=z,
                        u_val=u_val, z_val=z_val)
    return data, truth


def simulate_pendulum_nonlinear(spec: PendulumSpec, u: np.ndarray,
                                psi0: float = 0.0,
                                dpsi0: float = 0.0) -> np.ndarray:
    """Angle samples of the full nonlinear pendulum under held force u."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError("u must be a 1-d force sequence")
    return kernels.pendulum_nonlinear(
        spec.base_length, spec.swing_length, spec.gravity, spec.mass,
        spec.omega, spec.ts, spec.substeps, u, float(psi0), float(dpsi0))


# -- Monte Carlo study --------------------------------------------------------

def default_methods() -> tuple:
    """The four estimators at their defaults, in reporting order."""
    return (EstimatorSpec(method=Method.LS),
            EstimatorSpec(method=Method.HANK),
            EstimatorSpec(method=Method.ATOM),
            EstimatorSpec(method=Method.GATOM))


@dataclass(frozen=True)
class MonteCarloSpec:
    n_systems: int = 20
    period: int = 2
    order_range: tuple = (2, 10)
    noise_levels: tuple = (0.1, 0.01)
    n_samples: int = 500
    seed: int = 20260817
    methods: tuple = field(default_factory=default_methods)
    max_draws: int = 1000

    def __post_init__(self):
        if self.n_systems < 1:
            raise ValueError("n_systems must be >= 1")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        lo, hi = self.order_range
        if not (1 <= int(lo) <= int(hi)):
            raise ValueError(f"bad order_range {self.order_range}")
        object.__setattr__(self, "order_range", (int(lo), int(hi)))
        if not self.noise_levels or any(s < 0 for s in self.noise_levels):
            raise ValueError("noise_levels must be nonnegative and nonempty")
        object.__setattr__(self, "noise_levels",
                           tuple(float(s) for s in self.noise_levels))
        if self.n_samples < 1 or self.n_samples % self.period != 0:
            raise ValueError(
                f"n_samples {self.n_samples} is not a positive multiple of "
                f"the period {self.period}")
        if not self.methods:
            raise ValueError("at least one method required")
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.max_draws < 1:
            raise ValueError("max_draws must be >= 1")

    @classmethod
    def from_dict(cls, obj: Optional[dict]) -> "MonteCarloSpec":
        if obj is None:
            return cls()
        obj = dict(obj)
        kwargs = {}
        rename = {"P": "period", "nP": "n_samples",
                  "noise_sigma2": "noise_levels"}
        methods = obj.pop("methods", None)
        for key, value in obj.items():
            name = rename.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise ValueError(f"unknown Monte Carlo option: {key}")
            kwargs[name] = tuple(value) if isinstance(value, list) else value
        if methods is not None:
            kwargs["methods"] = tuple(
                EstimatorSpec.from_dict(m) for m in methods)
        return cls(**kwargs)


def _random_sub_realization(rng: np.random.Generator, nx: int) -> tuple:
    """One tag's (A, B, C) draw: modal radii below 0.9, unit DC gain.

    Poles come in conjugate pairs with radius uniform on (0, 0.9) and angle
    uniform on (0, pi); an odd state count adds one real pole of random
    sign. The block-modal form is hidden behind a random orthogonal change
    of basis, which keeps the 2-norm of A at the largest radius.
    """
    blocks = []
    n_pairs, odd = divmod(nx, 2)
    for _ in range(n_pairs):
        r = 0.9 * rng.uniform()
        th = np.pi * rng.uniform()
        c, s = r * np.cos(th), r * np.sin(th)
        blocks.append(np.array([[c, s], [-s, c]]))
    if odd:
        r = 0.9 * rng.uniform()
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        blocks.append(np.array([[sign * r]]))
    modal = np.zeros((nx, nx))
    pos = 0
    for blk in blocks:
        w = blk.shape[0]
        modal[pos:pos + w, pos:pos + w] = blk
        pos += w
    q, r_factor = np.linalg.qr(rng.standard_normal((nx, nx)))
    q *= np.sign(np.diag(r_factor))
    A = q @ modal @ q.T
    while True:
        B = rng.standard_normal(nx)
        C = rng.standard_normal(nx)
        dc = C @ np.linalg.solve(np.eye(nx) - A, B)
        if abs(dc) >= 1e-2:
            break
    return A, B / dc, C


def random_ltp_bank(spec: MonteCarloSpec) -> list:
    """Draw the bank of random stable systems, one RNG stream per system."""
    lo, hi = spec.order_range
    bank = []
    for i in range(spec.n_systems):
        rng = np.random.default_rng([spec.seed, 0, i])
        for _ in range(spec.max_draws):
            nx = int(rng.integers(lo, hi + 1))
            parts = [_random_sub_realization(rng, nx)
                     for _ in range(spec.period)]
            sys = PeriodicStateSpace(
                A=np.stack([p[0] for p in parts]),
                B=np.stack([p[1] for p in parts]),
                C=np.stack([p[2] for p in parts]))
            if is_stable(sys).spectral_radius < 0.97:
                bank.append(sys)
                break
        else:
            raise RuntimeError(
                f"system {i}: no stable draw in {spec.max_draws} attempts")
    return bank


@dataclass
class McCell:
    """One (system, method, noise level) result."""

    system_id: int
    method: str
    sigma2: float
    score: float
    gamma_star: Optional[float]
    gamma_grid: np.ndarray
    validation_errors: np.ndarray


@dataclass
class McStats:
    """Study output: per-cell results plus per (method, noise) summaries."""

    cells: list
    failures: list
    methods: list
    noise_levels: list
    n_systems: int

    @staticmethod
    def summarize(scores: Sequence[float]) -> dict:
        w = np.asarray(scores, dtype=np.float64)
        if w.size == 0:
            return {"count": 0, "mean": None, "median": None, "std": None}
        return {
            "count": int(w.size),
            "mean": float(np.mean(w)),
            "median": float(np.median(w)),
            "std": float(np.std(w, ddof=1)) if w.size > 1 else 0.0,
        }

    def scores(self, method: str, sigma2: float) -> np.ndarray:
        return np.array([c.score for c in self.cells
                         if c.method == method and c.sigma2 == sigma2])

    def to_dict(self) -> dict:
        stats = {}
        for method in self.methods:
            per_noise = {}
            for sigma2 in self.noise_levels:
                entry = self.summarize(self.scores(method, sigma2))
                per_noise[format(sigma2, "g")] = entry
            stats[method] = per_noise
        return {
            "n_systems": self.n_systems,
            "methods": list(self.methods),
            "noise_levels": [float(s) for s in self.noise_levels],
            "n_failures": len(self.failures),
            "failures": [{"system_id": s, "method": m,
                          "sigma2": float(n), "error": e}
                         for (s, m, n, e) in self.failures],
            "stats": stats,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text

    def raw_to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("system_id,method,sigma2,W\n")
            for c in self.cells:
                fh.write(f"{c.system_id},{c.method},{format(c.sigma2, 'g')},"
                         f"{format(c.score, '.17g')}\n")

    def eps_curves_to_csv(self, path) -> None:
        """Every cell's validation curve in one file."""
        with open(path, "w", newline="\n") as fh:
            fh.write("system_id,method,sigma2,gamma,eps\n")
            for c in self.cells:
                for g, e in zip(c.gamma_grid, c.validation_errors):
                    fh.write(
                        f"{c.system_id},{c.method},{format(c.sigma2, 'g')},"
                        f"{format(g, '.17g')},{format(e, '.17g')}\n")


def read_raw_csv(path) -> list:
    """Rows of a raw study CSV as (system_id, method, sigma2, W) tuples."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "system_id,method,sigma2,W":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            sid, method, sigma2, score = line.strip().split(",")
            rows.append((int(sid), method, float(sigma2), float(score)))
    return rows


def _thread_count() -> int:
    env = os.environ.get("LTPID_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"LTPID_THREADS must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


def run_monte_carlo(spec: MonteCarloSpec,
                    progress: Optional[Callable[[str], None]] = None
                    ) -> McStats:
    """Run every estimator over the random bank at every noise level.

    Each (system, noise) job generates its records from the RNG stream
    (seed, 1, system, noise index), shared by all methods so they see the
    same data, then scores each method's model against the true impulse
    response. Jobs run on a thread pool sized by LTPID_THREADS (default: CPU
    count); results are ordered by (system, noise, method) regardless of
    scheduling. A failed method marks that cell missing and is reported, not
    raised.
    """
    bank = random_ltp_bank(spec)
    truths = [true_impulse_response(sys, _SCORE_TAPS) for sys in bank]
    jobs = [(i, j) for i in range(spec.n_systems)
            for j in range(len(spec.noise_levels))]

    def run_cell(job):
        i, j = job
        sigma2 = spec.noise_levels[j]
        rng = np.random.default_rng([spec.seed, 1, i, j])
        sigma = math.sqrt(sigma2)

        def record():
            u = rng.standard_normal(spec.n_samples)
            z = simulate(bank[i], u) + sigma * rng.standard_normal(
                spec.n_samples)
            return u, z

        u, z = record()
        u_val, z_val = record()
        data = IdentDataset(period=spec.period, u=u, z=z,
                            u_val=u_val, z_val=z_val)
        cells, failures = [], []
        for mspec in spec.methods:
            name = mspec.method.value
            try:
                report = identify(data, mspec)
                fit = fit_metric(truths[i], report.impulse,
                                 estimator_name=name,
                                 gamma_selected=report.gamma_star)
            except Exception as exc:
                failures.append((i, name, sigma2, f"{type(exc).__name__}: {exc}"))
                continue
            cells.append(McCell(
                system_id=i, method=name, sigma2=sigma2, score=fit.score,
                gamma_star=report.gamma_star,
                gamma_grid=np.asarray(report.gamma_grid),
                validation_errors=np.asarray(report.validation_errors)))
        if progress is not None:
            progress(f"system {i} sigma2 {sigma2:g}: "
                     f"{len(cells)} fits, {len(failures)} failures")
        return cells, failures

    workers = min(_thread_count(), len(jobs))
    if workers == 1:
        outcomes = [run_cell(job) for job in jobs]
    else:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run_cell, jobs))

    # outcomes follow the jobs list (map preserves order), so cells come out
    # sorted by (system, noise level, method) without an explicit sort.
    cells, failures = [], []
    for got_cells, got_failures in outcomes:
        cells.extend(got_cells)
        failures.extend(got_failures)
    method_names = [m.method.value for m in spec.methods]
    return McStats(cells=cells, failures=failures, methods=method_names,
                   noise_levels=list(spec.noise_levels),
                   n_systems=spec.n_systems)
