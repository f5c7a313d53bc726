"""Exact solution of a particle in a moving harmonic trap.

For H = p^2/2m + (m w^2 / 2)(x - x0(t))^2 every solution has the form

    psi(x, t) = exp(i m xi'(t) x / hbar) sum_j c_j exp(-i e_j t / hbar) chi_j(x - xi(t))

up to a global phase, where xi solves xi'' + w^2 xi = w^2 x0 and is given by
xi = sum_n (-1/w^2)^n x0^(2n). Global phases are dropped throughout; every
comparison here is phase-insensitive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .core import Grid, PhysicalParams, Wavefunction, build_grid, harmonic_potential, inner_product
from .errors import NumericalError, ResonanceError, UsageError
from .propagator import NO_ABSORBER, SplitOperator

J_MAX = 64
TAIL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class HarmonicSystem:
    mass: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mass", "omega", "hbar"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")

    @property
    def length(self) -> float:
        """Oscillator length sqrt(hbar / m w)."""
        return math.sqrt(self.hbar / (self.mass * self.omega))

    def level(self, j: int) -> float:
        return self.hbar * self.omega * (j + 0.5)


@dataclass(frozen=True)
class HarmonicMotion:
    """Trap centre x0(t): a polynomial (``coeffs`` in powers of t) or A cos(Omega t + phase)."""

    coeffs: tuple = ()
    amplitude: float = 0.0
    frequency: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.frequency is not None and self.coeffs:
            raise UsageError("motion is either polynomial or sinusoidal, not both")

    @classmethod
    def polynomial(cls, coeffs) -> "HarmonicMotion":
        return cls(coeffs=tuple(coeffs))

    @classmethod
    def sinusoidal(cls, amplitude: float, frequency: float, phase: float = 0.0) -> "HarmonicMotion":
        return cls(amplitude=float(amplitude), frequency=float(frequency), phase=float(phase))

    @property
    def is_sinusoidal(self) -> bool:
        return self.frequency is not None

    def _poly(self) -> Polynomial:
        return Polynomial(self.coeffs or (0.0,))

    def __call__(self, t):
        if self.is_sinusoidal:
            return self.amplitude * np.cos(self.frequency * np.asarray(t) + self.phase)
        return self._poly()(np.asarray(t, dtype=float))

    def scaled(self, factor: float) -> "HarmonicMotion":
        if self.is_sinusoidal:
            return HarmonicMotion.sinusoidal(self.amplitude * factor, self.frequency, self.phase)
        return HarmonicMotion.polynomial([factor * c for c in self.coeffs])


def effective_center(X: HarmonicMotion, E: HarmonicMotion, system: HarmonicSystem) -> HarmonicMotion:
    """x0(t) = X(t) - E(t) / (m w^2) for the potential (m w^2/2)(x - X)^2 + E x."""
    minus_e = E.scaled(-1.0 / (system.mass * system.omega**2))
    x_zero = not X.is_sinusoidal and not any(X.coeffs)
    e_zero = not E.is_sinusoidal and not any(E.coeffs)
    if e_zero:
        return X
    if x_zero:
        return minus_e
    if X.is_sinusoidal != E.is_sinusoidal:
        raise UsageError("cannot combine polynomial and sinusoidal motions")
    if not X.is_sinusoidal:
        n = max(len(X.coeffs), len(minus_e.coeffs))
        a = np.zeros(n)
        a[:len(X.coeffs)] += X.coeffs
        a[:len(minus_e.coeffs)] += minus_e.coeffs
        return HarmonicMotion.polynomial(a)
    if not math.isclose(X.frequency, E.frequency, rel_tol=1e-12):
        raise UsageError("sinusoidal X and E must share one frequency")
    z = X.amplitude * np.exp(1j * X.phase) + minus_e.amplitude * np.exp(1j * minus_e.phase)
    return HarmonicMotion.sinusoidal(abs(z), X.frequency, float(np.angle(z)))


def xi(motion: HarmonicMotion, t, omega: float = 1.0):
    """(xi, xi') at time(s) t for trap frequency ``omega``.

    >>> [round(float(v), 12) for v in xi(HarmonicMotion.polynomial([0, 0, 0.5]), 2.0)]
    [1.0, 2.0]
    """
    t = np.asarray(t, dtype=float)
    if motion.is_sinusoidal:
        ratio = motion.frequency / omega
        if abs(1.0 - ratio**2) < 1e-12:
            raise ResonanceError("drive at the trap frequency: the series for xi diverges")
        gain = motion.amplitude / (1.0 - ratio**2)
        arg = motion.frequency * t + motion.phase
        return gain * np.cos(arg), -gain * motion.frequency * np.sin(arg)
    poly = motion._poly()
    series = Polynomial([0.0])
    term = poly
    k = 0
    while term.degree() >= 0 and np.any(term.coef):
        series = series + (-1.0 / omega**2) ** k * term
        term = term.deriv(2) if term.degree() >= 2 else Polynomial([0.0])
        k += 1
    return series(t), series.deriv(1)(t)


def hermite_functions(y: np.ndarray, j_max: int) -> np.ndarray:
    """chi_j(y) for j = 0..j_max in dimensionless y, normalized in y.

    Uses the three-term recurrence chi_{j+1} = sqrt(2/(j+1)) y chi_j - sqrt(j/(j+1)) chi_{j-1}.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty((j_max + 1,) + y.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * y**2)
    if j_max >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for j in range(1, j_max):
        out[j + 1] = math.sqrt(2.0 / (j + 1)) * y * out[j] - math.sqrt(j / (j + 1)) * out[j - 1]
    return out


def eigenstates(grid: Grid, system: HarmonicSystem, j_max: int = J_MAX, center: float = 0.0) -> np.ndarray:
    """Rows are chi_j(x - center) on the grid, normalized in x."""
    ell = system.length
    return hermite_functions((grid.x - center) / ell, j_max) / math.sqrt(ell)


def coherent_coefficients(shift: float, momentum: float, system: HarmonicSystem, j_max: int = J_MAX) -> np.ndarray:
    """Expansion of the trap ground state displaced by ``shift`` and boosted by ``momentum``."""
    alpha = (shift / system.length + 1j * momentum * system.length / system.hbar) / math.sqrt(2.0)
    j = np.arange(j_max + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in j])
    mag = np.exp(-0.5 * abs(alpha) ** 2 + j * np.log(abs(alpha) + 1e-300) - 0.5 * log_fact)
    if alpha == 0:
        mag = (j == 0).astype(float)
    return mag * np.exp(1j * j * np.angle(alpha))


def project(psi: Wavefunction, system: HarmonicSystem, motion: HarmonicMotion, t: float,
            j_max: int = J_MAX) -> np.ndarray:
    """Coefficients c_j of ``psi`` in the co-moving basis of ``motion`` at time t (grid quadrature)."""
    x_i, v_i = xi(motion, t, system.omega)
    basis = eigenstates(psi.grid, system, j_max, float(x_i))
    boosted = psi.amplitudes * np.exp(-1j * system.mass * float(v_i) * psi.grid.x / system.hbar)
    energies = system.level(np.arange(j_max + 1))
    c = basis @ boosted * psi.grid.dx * np.exp(1j * energies * t / system.hbar)
    tail = psi.norm2() - float(np.sum(np.abs(c) ** 2))
    if tail > TAIL_TOLERANCE:
        raise NumericalError(f"state weight {tail:.2e} lies beyond j_max = {j_max}")
    return c


def exact_evolve(coeffs, motion: HarmonicMotion, t: float, system: HarmonicSystem, grid: Grid,
                 j_max: int = J_MAX) -> Wavefunction:
    """Exact state at time t, sampled on the grid."""
    c = np.asarray(coeffs, dtype=complex)
    if c.size > j_max + 1:
        tail = float(np.sum(np.abs(c[j_max + 1:]) ** 2))
        if tail > TAIL_TOLERANCE:
            raise NumericalError(f"coefficient weight {tail:.2e} beyond j_max = {j_max}")
        c = c[:j_max + 1]
    x_i, v_i = xi(motion, t, system.omega)
    basis = eigenstates(grid, system, c.size - 1, float(x_i))
    energies = system.level(np.arange(c.size))
    amp = (c * np.exp(-1j * energies * t / system.hbar)) @ basis
    amp = amp * np.exp(1j * system.mass * float(v_i) * grid.x / system.hbar)
    return Wavefunction(grid, amp)


def survival_amplitude_ground(xi_value: float, xi_dot: float, system: HarmonicSystem) -> float:
    """|<ground|ground displaced by (xi, xi')>| = exp(-(m w / 4 hbar)(xi^2 + xi'^2 / w^2)).

    >>> round(survival_amplitude_ground(1.0, 0.0, HarmonicSystem()), 5)
    0.7788
    """
    m, w, hb = system.mass, system.omega, system.hbar
    return math.exp(-(m * w / (4 * hb)) * (xi_value**2 + xi_dot**2 / w**2))


def switch_transition_prob(n: int, x_n: float, system: HarmonicSystem) -> tuple[float, float]:
    """Transition probability after switching on x0(t) = x_n (t - t1)^n / n! from rest.

    Returns (exact, leading order).
    """
    if n < 0:
        raise UsageError("order must be non-negative")
    m, w, hb = system.mass, system.omega, system.hbar
    lead = (m * w / (2 * hb)) * x_n**2 / w ** (2 * n)
    return -math.expm1(-lead), lead


def perturbative_transition(v0_jk: float, gap: float, n: int, alpha_n: float, hbar: float = 1.0) -> float:
    """|hbar^n V0_jk alpha^(n) / gap^(n+1)|^2 for H = h + alpha(t) V0."""
    if gap == 0:
        raise UsageError("degenerate levels: zero gap")
    return abs(hbar**n * v0_jk * alpha_n / gap ** (n + 1)) ** 2


def oscillator_matrix_element(system: HarmonicSystem) -> float:
    """<1| m w^2 x |0> = m w^2 sqrt(hbar / 2 m w)."""
    return system.mass * system.omega**2 * math.sqrt(system.hbar / (2 * system.mass * system.omega))


# ---------------------------------------------------------------------------
# cross-checks against the grid propagator


def _params(system: HarmonicSystem) -> PhysicalParams:
    return PhysicalParams(mass=system.mass, hbar=system.hbar)


def propagate_harmonic(psi: Wavefunction, motion: HarmonicMotion, system: HarmonicSystem,
                       t0: float, t1: float, dt: float = 0.01) -> Wavefunction:
    """Split-operator evolution in the trap; the centre enters as the force -m w^2 x0(t)."""
    grid = psi.grid
    n = max(1, int(round((t1 - t0) / dt)))
    step = (t1 - t0) / n
    op = SplitOperator(grid, harmonic_potential(grid, system.mass, system.omega), _params(system), step,
                       NO_ABSORBER)
    k = -system.mass * system.omega**2
    out = op.run(psi.amplitudes.copy(), lambda t: k * float(motion(t)), n, t0=t0)
    return Wavefunction(grid, np.array(out))


def fidelity(a: Wavefunction, b: Wavefunction) -> float:
    return abs(inner_product(a, b)) ** 2 / (a.norm2() * b.norm2())


def evolution_fidelity(motion: HarmonicMotion, system: HarmonicSystem, t_end: float = 100.0,
                       grid: Grid | None = None, dt: float = 0.01) -> float:
    """Fidelity between exact and split-operator evolution of the co-moving ground state."""
    grid = grid or build_grid()
    c = np.zeros(J_MAX + 1)
    c[0] = 1.0
    psi0 = exact_evolve(c, motion, 0.0, system, grid)
    num = propagate_harmonic(psi0, motion, system, 0.0, t_end, dt)
    return fidelity(num, exact_evolve(c, motion, t_end, system, grid))


def sudden_switch_overlap(motion: HarmonicMotion, system: HarmonicSystem, t1: float = 0.0,
                          grid: Grid | None = None) -> tuple[float, float]:
    """(grid overlap, closed form) of the resting ground state with the post-switch ground state."""
    grid = grid or build_grid()
    rest = eigenstates(grid, system, 0)[0].astype(complex)
    before = Wavefunction(grid, rest)
    after = exact_evolve([1.0], motion, t1, system, grid)
    x_i, v_i = xi(motion, t1, system.omega)
    return abs(inner_product(before, after)), survival_amplitude_ground(float(x_i), float(v_i), system)


def switch_escape_on_grid(n: int, x_n: float, system: HarmonicSystem, t_end: float = 20.0,
                          grid: Grid | None = None, dt: float = 0.01) -> float:
    """1 - |<co-moving ground|psi(t_end)>|^2 after switching on x0 = x_n t^n / n! at t = 0."""
    grid = grid or build_grid()
    coeffs = np.zeros(n + 1)
    coeffs[n] = x_n / math.factorial(n)
    motion = HarmonicMotion.polynomial(coeffs)
    rest = Wavefunction(grid, eigenstates(grid, system, 0)[0].astype(complex))
    psi = propagate_harmonic(rest, motion, system, 0.0, t_end, dt)
    target = exact_evolve([1.0], motion, t_end, system, grid)
    return 1.0 - fidelity(psi, target)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def harmonic_check(grid: Grid | None = None, seed: int = 0) -> list[SuiteResult]:
    """Run the four oracle suites plus the grid Morita check."""
    grid = grid or build_grid()
    system = HarmonicSystem()
    results = []

    motions = {"constant_acceleration": HarmonicMotion.polynomial([0.0, 0.0, 0.0025]),
               "sinusoidal": HarmonicMotion.sinusoidal(2.0, 0.5)}
    fids = {k: evolution_fidelity(m, system, 100.0, grid) for k, m in motions.items()}
    results.append(SuiteResult("evolution_fidelity", all(f >= 1 - 1e-6 for f in fids.values()),
                               {k: 1 - f for k, f in fids.items()}))

    switches = {"step": HarmonicMotion.polynomial([0.7]), "kick": HarmonicMotion.polynomial([0.0, 0.4]),
                "ramp": HarmonicMotion.polynomial([0.3, -0.2, 0.1])}
    errs = {}
    for k, m in switches.items():
        grid_val, closed = sudden_switch_overlap(m, system, 0.0, grid)
        errs[k] = abs(grid_val - closed)
    results.append(SuiteResult("sudden_switch_overlap", all(e <= 1e-8 for e in errs.values()), errs))

    rng = np.random.default_rng(seed)
    rel = []
    for _ in range(20):
        s = HarmonicSystem(*rng.uniform(0.3, 3.0, size=3))
        n = int(rng.integers(0, 6))
        x_n = float(rng.uniform(-1, 1))
        _, lead = switch_transition_prob(n, x_n, s)
        pert = perturbative_transition(oscillator_matrix_element(s), s.hbar * s.omega, n, x_n, s.hbar)
        rel.append(abs(lead - pert) / lead)
    results.append(SuiteResult("morita_vs_perturbative", max(rel) <= 1e-12, {"max_rel": max(rel)}))

    rel = []
    for _ in range(20):
        v0, gap, hb = rng.uniform(0.1, 5.0, size=3)
        b0, b1 = abs(v0 / gap), abs(hb * v0 / gap**2)
        for n in range(6):
            direct = abs(hb**n * v0 / gap ** (n + 1))
            rel.append(abs(b0 ** (1 - n) * b1**n - direct) / direct)
    results.append(SuiteResult("b_composition", max(rel) <= 1e-12, {"max_rel": max(rel)}))

    # the splitting error is O(dt^2); Richardson-extrapolate dt and dt/2
    morita = {}
    for n, x_n in ((0, 0.1), (1, 0.1), (2, 0.1)):
        exact, _ = switch_transition_prob(n, x_n, system)
        coarse = switch_escape_on_grid(n, x_n, system, grid=grid, dt=0.01)
        fine = switch_escape_on_grid(n, x_n, system, grid=grid, dt=0.005)
        morita[str(n)] = {"grid": fine, "extrapolated": (4 * fine - coarse) / 3, "exact": exact}
    ok = all(abs(v["extrapolated"] - v["exact"]) <= 1e-5 * v["exact"] for v in morita.values())
    results.append(SuiteResult("morita_grid", ok, morita))
    return results
