"""Physical parameters, the Fourier grid, wavefunctions and the trapping well."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, NoBoundStateError, NumericalError, UsageError

DEFAULT_X_MIN = -204.8
DEFAULT_X_MAX = 204.8
DEFAULT_N_POINTS = 4096


@dataclass(frozen=True)
class PhysicalParams:
    """Mass, well depth, well width and hbar (default units are all 1)."""

    mass: float = 1.0
    depth: float = 1.0
    width: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mass", "depth", "width", "hbar"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")

    def to_dict(self) -> dict:
        return {"mass": self.mass, "depth": self.depth, "width": self.width, "hbar": self.hbar}


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``x_j = x_min + j*dx`` with DFT-ordered momenta."""

    x_min: float
    x_max: float
    n_points: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    def mirror_index(self, center: float = 0.0) -> np.ndarray:
        """Index map j -> j' with x_j' = 2*center - x_j (periodic); center must sit on a node."""
        j0 = (center - self.x_min) / self.dx
        if abs(j0 - round(j0)) > 1e-9:
            raise UsageError("mirror center must coincide with a grid node")
        j0 = int(round(j0))
        return (2 * j0 - np.arange(self.n_points)) % self.n_points

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}


def build_grid(x_min: float = DEFAULT_X_MIN, x_max: float = DEFAULT_X_MAX,
               n_points: int = DEFAULT_N_POINTS) -> Grid:
    n_points = int(n_points)
    if n_points < 16 or n_points & (n_points - 1):
        raise ConfigurationError(f"n_points must be a power of two >= 16, got {n_points}")
    if not x_min < x_max:
        raise ConfigurationError(f"need x_min < x_max, got [{x_min}, {x_max}]")
    return Grid(float(x_min), float(x_max), n_points)


@dataclass
class Wavefunction:
    """Complex amplitudes sampled on a grid."""

    grid: Grid
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise UsageError("amplitude array does not match the grid")

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.grid, self.amplitudes / np.sqrt(self.norm2()))

    def copy(self) -> "Wavefunction":
        return Wavefunction(self.grid, self.amplitudes.copy())


def inner_product(psi1: Wavefunction, psi2: Wavefunction) -> complex:
    """<psi1|psi2> = sum conj(psi1) psi2 dx."""
    if psi1.grid != psi2.grid:
        raise UsageError("inner product of wavefunctions on different grids")
    return complex(np.vdot(psi1.amplitudes, psi2.amplitudes) * psi1.grid.dx)


def well_potential(grid: Grid, params: PhysicalParams, center: float = 0.0) -> np.ndarray:
    """z * (tanh^2((x - center)/w) - 1), i.e. -z sech^2((x - center)/w)."""
    return params.depth * (np.tanh((grid.x - center) / params.width) ** 2 - 1.0)


def poschl_teller_energy(params: PhysicalParams) -> float:
    """Exact ground-state energy of -z sech^2(x/w).

    With lambda (lambda - 1) = 2 m z w^2 / hbar^2, E0 = -hbar^2 (lambda - 1)^2 / (2 m w^2).

    >>> poschl_teller_energy(PhysicalParams())
    -0.5
    """
    m, z, w, hb = params.mass, params.depth, params.width, params.hbar
    lam = 0.5 * (1.0 + np.sqrt(1.0 + 8.0 * m * z * w**2 / hb**2))
    return float(-(hb**2) * (lam - 1.0) ** 2 / (2.0 * m * w**2))


def harmonic_potential(grid: Grid, mass: float, omega: float, center: float = 0.0) -> np.ndarray:
    return 0.5 * mass * omega**2 * (grid.x - center) ** 2


def energy(psi: Wavefunction, potential: np.ndarray, params: PhysicalParams) -> float:
    """Expectation value of p^2/2m + V for a (not necessarily normalized) state."""
    grid = psi.grid
    amp_k = np.fft.fft(psi.amplitudes)
    kinetic = np.sum((params.hbar * grid.k) ** 2 / (2 * params.mass) * np.abs(amp_k) ** 2) / np.sum(np.abs(amp_k) ** 2)
    dens = np.abs(psi.amplitudes) ** 2
    return float(kinetic + np.sum(potential * dens) / np.sum(dens))


# Imaginary-time steps, coarse to fine; the last stage sets the residual
# O(dt^2) splitting bias of the relaxed state.
_RELAX_STAGES = (0.05, 0.01, 0.002)
_RELAX_BLOCK = 25


def ground_state(grid: Grid, params: PhysicalParams, tol: float = 1e-12,
                 potential: np.ndarray | None = None, center: float = 0.0,
                 max_steps: int = 400_000,
                 require_bound: bool | None = None) -> tuple[Wavefunction, float]:
    """Relax to the lowest eigenstate of p^2/2m + V by imaginary-time Strang steps.

    ``potential`` defaults to the tanh^2 well centred at ``center``. Each stage
    runs blocks of steps until consecutive energy estimates differ by less
    than ``tol``; the result is normalized and phased real-positive at its peak.
    The negative-energy check applies to the well only unless ``require_bound``
    says otherwise.
    """
    if require_bound is None:
        require_bound = potential is None
    V = well_potential(grid, params, center) if potential is None else np.asarray(potential, float)
    kin = (params.hbar * grid.k) ** 2 / (2 * params.mass)
    width = 2.0 * params.width
    psi = np.exp(-(((grid.x - center) / width) ** 2)).astype(np.complex128)
    steps = 0
    e_new = np.inf
    for dtau in _RELAX_STAGES:
        half_v = np.exp(-0.5 * dtau * V / params.hbar)
        full_k = np.exp(-dtau * kin / params.hbar)
        e_old = np.inf
        while True:
            for _ in range(_RELAX_BLOCK):
                psi = np.fft.ifft(np.fft.fft(psi * half_v) * full_k) * half_v
            psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
            steps += _RELAX_BLOCK
            e_new = energy(Wavefunction(grid, psi), V, params)
            if abs(e_new - e_old) < tol:
                break
            if steps > max_steps:
                raise NumericalError(f"imaginary-time relaxation did not converge in {max_steps} steps")
            e_old = e_new
    if require_bound and e_new >= 0:
        raise NoBoundStateError(f"relaxed energy {e_new:.3e} is not negative; no bound state")
    peak = np.argmax(np.abs(psi))
    psi *= np.abs(psi[peak]) / psi[peak]
    return Wavefunction(grid, psi), e_new
