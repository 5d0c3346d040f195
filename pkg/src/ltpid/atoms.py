"""Pole grid and first-order atom dictionary.

An atom is the single-pole transfer function a_w(q) = (1 - |w|^2) / (q - w),
whose impulse response is (1 - |w|^2) w^(i-1). The scaling gives every atom
unit Hankel nuclear norm in the infinite-window limit. Only poles with
nonnegative imaginary part are stored; each strictly complex pole implicitly
stands for a conjugate pair, and real-valued coefficient pairs (alpha, beta)
encode Re/Im parts of its complex weight. Reconstruction doubles the real
part for those poles, which keeps every reconstructed response exactly real.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .ltp import ImpulseResponseMatrix, _locked

REFERENCE_GRID_PRESET = "paper-2601"

_IM_SNAP = 1e-15


def _reference_radii() -> np.ndarray:
    return np.concatenate([np.arange(1, 50) * 0.02, [0.99, 0.999]])


def _reference_angles() -> np.ndarray:
    return np.linspace(0.0, np.pi, 51)


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Polar description of a pole grid plus the FIR truncation length."""

    radii: tuple
    angles: tuple
    n_taps: int = 100

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        angles = tuple(float(a) for a in self.angles)
        if not radii or not angles:
            raise ValueError("radii and angles must be nonempty")
        if any(not 0.0 < r < 1.0 for r in radii):
            raise ValueError("radii must lie strictly inside (0, 1)")
        if any(not 0.0 <= a <= np.pi for a in angles):
            raise ValueError("angles must lie in [0, pi]")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be strictly increasing")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValueError("angles must be strictly increasing")
        if self.n_taps < 1:
            raise ValueError(f"n_taps must be >= 1, got {self.n_taps}")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "n_taps", int(self.n_taps))

    @classmethod
    def reference(cls, n_taps: int = 100) -> "GridSpec":
        """The 51-radii by 51-angle default grid (2601 poles)."""
        return cls(radii=tuple(_reference_radii()),
                   angles=tuple(_reference_angles()), n_taps=n_taps)

    def to_dict(self) -> dict:
        return {"radii": list(self.radii), "angles": list(self.angles),
                "N": self.n_taps}

    @classmethod
    def from_config(cls, obj: Union[str, dict, None],
                    n_taps: int = 100) -> "GridSpec":
        """Build from a config value: a preset name, a dict, or None.

        The dict form uses keys radii, angles, and N; N falls back to the
        n_taps argument when absent. None selects the reference preset.
        """
        if obj is None:
            return cls.reference(n_taps=n_taps)
        if isinstance(obj, str):
            if obj == REFERENCE_GRID_PRESET:
                return cls.reference(n_taps=n_taps)
            raise ValueError(f"unknown grid preset {obj!r}")
        return cls(radii=tuple(obj["radii"]), angles=tuple(obj["angles"]),
                   n_taps=int(obj.get("N", n_taps)))

    @classmethod
    def from_json(cls, path) -> "GridSpec":
        with open(path) as fh:
            return cls.from_config(json.load(fh))


@dataclass(frozen=True, eq=False)
class PoleGrid:
    """Stored poles (upper half disc) with their conjugate-pair bookkeeping.

    ``is_complex`` marks poles with strictly positive imaginary part; those
    stand for an implicit conjugate pair. ``n_poles_nominal`` counts poles of
    the conjugate-closed set, ``n_poles`` the stored ones.
    """

    poles: np.ndarray
    is_complex: np.ndarray

    def __post_init__(self):
        poles = np.asarray(self.poles, dtype=np.complex128)
        is_complex = np.asarray(self.is_complex, dtype=bool)
        if poles.ndim != 1 or poles.shape != is_complex.shape:
            raise ValueError("poles and is_complex must be matching 1-d arrays")
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("all poles must lie strictly inside the unit disc")
        if np.any(poles.imag < 0.0):
            raise ValueError("stored poles must have nonnegative imaginary part")
        if np.any((poles.imag > 0.0) != is_complex):
            raise ValueError("is_complex must mark exactly the poles with Im > 0")
        order = np.lexsort((poles.imag, poles.real))
        sorted_p = poles[order]
        if np.any(np.abs(np.diff(sorted_p)) <= 1e-12):
            raise ValueError("duplicate poles within 1e-12")
        locked_p = poles.copy()
        locked_p.setflags(write=False)
        locked_c = is_complex.copy()
        locked_c.setflags(write=False)
        object.__setattr__(self, "poles", locked_p)
        object.__setattr__(self, "is_complex", locked_c)

    @property
    def n_poles(self) -> int:
        return self.poles.shape[0]

    @property
    def n_poles_nominal(self) -> int:
        return self.poles.shape[0] + int(self.is_complex.sum())


def build_pole_grid(spec: GridSpec) -> PoleGrid:
    """Materialize the polar grid, snapping on-axis poles to exactly real."""
    radii = np.asarray(spec.radii)
    angles = np.asarray(spec.angles)
    re = np.outer(radii, np.cos(angles)).ravel()
    im = np.outer(radii, np.sin(angles)).ravel()
    im[np.abs(im) < _IM_SNAP] = 0.0
    return PoleGrid(poles=re + 1j * im, is_complex=im > 0.0)


def atom_response(w: complex, n_taps: int) -> np.ndarray:
    """Impulse response (1 - |w|^2) w^(i-1), i = 1..n_taps, of one atom."""
    w = complex(w)
    if abs(w) >= 1.0:
        raise ValueError(f"atom pole must satisfy |w| < 1, got |w| = {abs(w)}")
    if n_taps < 1:
        raise ValueError(f"n_taps must be >= 1, got {n_taps}")
    return (1.0 - abs(w) ** 2) * w ** np.arange(n_taps)


def hankel_nuclear_norm_of_atom(w: complex, n_taps: int,
                                hankel_rows: int) -> float:
    """Nuclear norm of the (rows x (n_taps - rows + 1)) Hankel of one atom.

    Approaches 1 from below as the window grows; used as a test oracle for
    the atom normalization.
    """
    if not 1 <= hankel_rows <= n_taps:
        raise ValueError(
            f"hankel_rows must be in 1..{n_taps}, got {hankel_rows}")
    resp = atom_response(w, n_taps)
    cols = n_taps - hankel_rows + 1
    idx = np.arange(hankel_rows)[:, None] + np.arange(cols)[None, :]
    return float(np.linalg.svd(resp[idx], compute_uv=False).sum())


@dataclass(frozen=True, eq=False)
class AtomResponseMatrix:
    """Sampled atom responses: real and imaginary parts, one column per pole."""

    real_part: np.ndarray
    imag_part: np.ndarray
    poles: np.ndarray
    is_complex: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.real_part, dtype=np.float64)
        im = np.asarray(self.imag_part, dtype=np.float64)
        if re.ndim != 2 or re.shape != im.shape:
            raise ValueError("real_part and imag_part must be matching 2-d arrays")
        if re.shape[1] != self.poles.shape[0]:
            raise ValueError("one response column required per pole")
        object.__setattr__(self, "real_part", _locked(re))
        object.__setattr__(self, "imag_part", _locked(im))

    @property
    def n_taps(self) -> int:
        return self.real_part.shape[0]

    @property
    def n_poles(self) -> int:
        return self.real_part.shape[1]


def build_atom_responses(grid: PoleGrid, n_taps: int) -> AtomResponseMatrix:
    """Sample every atom on the grid out to n_taps lags."""
    if n_taps < 1:
        raise ValueError(f"n_taps must be >= 1, got {n_taps}")
    powers = grid.poles[None, :] ** np.arange(n_taps)[:, None]
    resp = (1.0 - np.abs(grid.poles) ** 2)[None, :] * powers
    return AtomResponseMatrix(real_part=resp.real.copy(),
                              imag_part=resp.imag.copy(),
                              poles=grid.poles, is_complex=grid.is_complex)


def response_basis(atoms: AtomResponseMatrix) -> np.ndarray:
    """Real linear map from stacked (alpha, beta) coefficients to responses.

    Shape (n_taps, 2 K). The alpha block carries Re of each atom (doubled
    for implicit-conjugate poles); the beta block carries -2 Im for those
    poles and zero columns for real poles, so beta coefficients of real
    poles never influence the reconstruction.
    """
    scale = np.where(atoms.is_complex, 2.0, 1.0)
    basis = np.empty((atoms.n_taps, 2 * atoms.n_poles))
    basis[:, :atoms.n_poles] = atoms.real_part * scale
    basis[:, atoms.n_poles:] = np.where(atoms.is_complex, -2.0, 0.0) * atoms.imag_part
    return basis


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """Per-pole, per-tag atom weights in the implicit-conjugate encoding.

    alpha and beta are (K, P) real matrices holding Re and Im of the complex
    weights; beta rows of real poles are pinned to zero.
    """

    alpha: np.ndarray
    beta: np.ndarray
    is_complex: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        is_complex = np.asarray(self.is_complex, dtype=bool)
        if alpha.ndim != 2 or alpha.shape != beta.shape:
            raise ValueError("alpha and beta must be matching 2-d arrays")
        if is_complex.shape != (alpha.shape[0],):
            raise ValueError("is_complex must have one entry per pole row")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("coefficients contain non-finite entries")
        if np.any(beta[~is_complex] != 0.0):
            raise ValueError("beta rows of real poles must be identically zero")
        locked_c = is_complex.copy()
        locked_c.setflags(write=False)
        object.__setattr__(self, "alpha", _locked(alpha))
        object.__setattr__(self, "beta", _locked(beta))
        object.__setattr__(self, "is_complex", locked_c)

    @property
    def n_poles(self) -> int:
        return self.alpha.shape[0]

    @property
    def period(self) -> int:
        return self.alpha.shape[1]

    def stacked(self) -> np.ndarray:
        """(2 K, P) array with the alpha block above the beta block."""
        return np.vstack([self.alpha, self.beta])

    @classmethod
    def from_stacked(cls, stacked: np.ndarray,
                     is_complex: np.ndarray) -> "CoefficientMatrix":
        n_poles = is_complex.shape[0]
        if stacked.shape[0] != 2 * n_poles:
            raise ValueError(
                f"stacked must have {2 * n_poles} rows, got {stacked.shape[0]}")
        return cls(alpha=stacked[:n_poles], beta=stacked[n_poles:],
                   is_complex=is_complex)

    def modulus(self) -> np.ndarray:
        """(K, P) matrix of complex weight magnitudes sqrt(alpha^2 + beta^2)."""
        return np.hypot(self.alpha, self.beta)

    def group_norms(self) -> np.ndarray:
        """Euclidean norm of each pole's weights across all tags (length K)."""
        return np.sqrt((self.alpha ** 2).sum(axis=1) + (self.beta ** 2).sum(axis=1))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(),
                "is_complex": self.is_complex.tolist()}


def reconstruct(coeffs: CoefficientMatrix,
                atoms: AtomResponseMatrix) -> ImpulseResponseMatrix:
    """Real impulse response of a coefficient matrix over the dictionary.

    Column tau equals sum_k alpha Re(g_k) over real poles plus
    2 (alpha Re(g_k) - beta Im(g_k)) over implicit-conjugate poles.
    """
    if coeffs.n_poles != atoms.n_poles:
        raise ValueError(
            f"coefficients cover {coeffs.n_poles} poles, dictionary has "
            f"{atoms.n_poles}")
    if np.any(coeffs.is_complex != atoms.is_complex):
        raise ValueError("coefficient and dictionary pole kinds disagree")
    values = response_basis(atoms) @ coeffs.stacked()
    return ImpulseResponseMatrix(values=values)
