import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conveyor.core import PhysicalParams, Wavefunction, build_grid, harmonic_potential
from conveyor.errors import NumericalError, ResonanceError, UsageError
from conveyor.harmonic import (J_MAX, HarmonicMotion, HarmonicSystem, coherent_coefficients, effective_center,
                               eigenstates, evolution_fidelity, exact_evolve, fidelity, harmonic_check,
                               hermite_functions, oscillator_matrix_element, perturbative_transition, project,
                               sudden_switch_overlap, survival_amplitude_ground, switch_escape_on_grid,
                               switch_transition_prob, xi)
from conveyor.propagator import NO_ABSORBER, SplitOperator

SYS = HarmonicSystem()


@pytest.fixture(scope="module")
def grid():
    return build_grid(-51.2, 51.2, 1024)


def poly(*c):
    return HarmonicMotion.polynomial(c)


def test_effective_center():
    X = poly(0, 1.0)
    assert effective_center(X, poly(), SYS) == X
    assert effective_center(poly(), poly(2.5), SYS)(3.0) == pytest.approx(-2.5)
    assert effective_center(poly(0, 0, 1.0), poly(0, 0, 1.0), SYS)(7.0) == pytest.approx(0.0)
    s = effective_center(HarmonicMotion.sinusoidal(1.0, 0.5), HarmonicMotion.sinusoidal(1.0, 0.5), HarmonicSystem(omega=2))
    assert s(1.3) == pytest.approx(0.75 * math.cos(0.65))
    with pytest.raises(UsageError):
        effective_center(poly(1.0), HarmonicMotion.sinusoidal(1.0, 0.5), SYS)
    with pytest.raises(UsageError):
        effective_center(HarmonicMotion.sinusoidal(1, 0.5), HarmonicMotion.sinusoidal(1, 0.7), SYS)


def test_xi_closed_forms():
    a = 0.3
    x, v = xi(poly(0, 0, a / 2), 2.0)
    assert x == pytest.approx(a / 2 * 4 - a) and v == pytest.approx(a * 2)
    x, _ = xi(HarmonicMotion.sinusoidal(1.0, 0.5), 0.0)
    assert x == pytest.approx(4 / 3)
    x, _ = xi(HarmonicMotion.sinusoidal(1.0, 1e-6), 1.0)
    assert x == pytest.approx(math.cos(1e-6), rel=1e-10)
    with pytest.raises(ResonanceError):
        xi(HarmonicMotion.sinusoidal(1.0, 1.0), 0.0)


@settings(max_examples=30, deadline=None)
@given(coeffs=st.lists(st.floats(-1, 1), min_size=1, max_size=7), omega=st.floats(0.5, 3.0), t=st.floats(0, 5))
def test_xi_solves_driven_oscillator(coeffs, omega, t):
    m = HarmonicMotion.polynomial(coeffs)
    h = 1e-3
    x0, _ = xi(m, t, omega)
    xp, _ = xi(m, t + h, omega)
    xm, _ = xi(m, t - h, omega)
    acc = (xp - 2 * x0 + xm) / h**2
    scale = 1 + sum(abs(c) for c in coeffs) * (1 + t) ** len(coeffs)
    assert acc + omega**2 * x0 == pytest.approx(omega**2 * m(t), abs=1e-4 * scale * omega**2)


def test_xi_series_terminates():
    # degree 5: x0, x0'', x0'''' contribute
    m = poly(0, 0, 0, 0, 0, 1.0)
    x, _ = xi(m, 1.0, 1.0)
    assert x == pytest.approx(1 - 20 + 120)


def test_hermite_orthonormal(grid):
    basis = eigenstates(grid, SYS, 40)
    gram = basis @ basis.T * grid.dx
    assert np.max(np.abs(gram - np.eye(41))) < 1e-12
    assert hermite_functions(np.array([0.0]), 2)[2, 0] == pytest.approx(-math.pi**-0.25 / math.sqrt(2))


def test_exact_evolve_trivial_cases(grid):
    c = np.zeros(J_MAX + 1)
    c[0] = 1
    still = poly()
    a0 = exact_evolve(c, still, 0.0, SYS, grid)
    a1 = exact_evolve(c, still, 7.3, SYS, grid)
    assert np.allclose(np.abs(a0.amplitudes), np.abs(a1.amplitudes), atol=1e-14)
    mixed = np.zeros(5, complex)
    mixed[[0, 3]] = [0.6, 0.8j]
    psi = exact_evolve(mixed, still, 0.0, SYS, grid)
    assert np.allclose(project(psi, SYS, still, 0.0, 10)[:5], mixed, atol=1e-12)


def test_tail_weight_guard(grid):
    c = np.zeros(80)
    c[70] = 1.0
    with pytest.raises(NumericalError):
        exact_evolve(c, poly(), 0.0, SYS, grid)
    far = Wavefunction(grid, np.exp(-((grid.x - 30) ** 2)).astype(complex))
    with pytest.raises(NumericalError):
        project(far.normalized(), SYS, poly(), 0.0, 10)


def test_coherent_coefficients_match_projection(grid):
    psi = exact_evolve([1.0], poly(0.8), 0.0, SYS, grid)
    psi.amplitudes *= np.exp(1j * 0.5 * grid.x)
    c = project(psi, SYS, poly(), 0.0)
    ref = coherent_coefficients(0.8, 0.5, SYS)
    assert np.allclose(np.abs(c), np.abs(ref), atol=1e-12)
    assert abs(np.vdot(ref, c)) == pytest.approx(1.0, abs=1e-12)


def test_survival_amplitude_examples():
    assert survival_amplitude_ground(0, 0, SYS) == 1.0
    assert survival_amplitude_ground(1, 0, SYS) == pytest.approx(math.exp(-0.25))
    assert survival_amplitude_ground(0, 1, SYS) == pytest.approx(0.77880, abs=1e-5)


def test_switch_transition_examples():
    assert switch_transition_prob(3, 0.0, SYS) == (0.0, 0.0)
    exact, lead = switch_transition_prob(0, 0.1, SYS)
    assert exact == pytest.approx(4.9875e-3, rel=1e-4) and lead == pytest.approx(5e-3)


@settings(max_examples=50, deadline=None)
@given(m=st.floats(0.2, 5), w=st.floats(0.2, 5), hb=st.floats(0.2, 5), n=st.integers(0, 5), x=st.floats(-2, 2))
def test_morita_equals_perturbative(m, w, hb, n, x):
    s = HarmonicSystem(m, w, hb)
    _, lead = switch_transition_prob(n, x, s)
    pert = perturbative_transition(oscillator_matrix_element(s), hb * w, n, x, hb)
    assert pert == pytest.approx(lead, rel=1e-12, abs=1e-300)


def test_perturbative_examples():
    assert perturbative_transition(1.0, 2.0, 1, 0.0) == 0.0
    assert perturbative_transition(1.0, 1.0, 1, 0.3) / perturbative_transition(1.0, 2.0, 1, 0.3) == pytest.approx(16)
    with pytest.raises(UsageError):
        perturbative_transition(1.0, 0.0, 1, 0.3)


@settings(max_examples=50, deadline=None)
@given(v0=st.floats(0.01, 10), gap=st.floats(0.01, 10), hb=st.floats(0.1, 10), n=st.integers(0, 5))
def test_b_composition_identity(v0, gap, hb, n):
    b0, b1 = abs(v0 / gap), abs(hb * v0 / gap**2)
    assert b0 ** (1 - n) * b1**n == pytest.approx(abs(hb**n * v0 / gap ** (n + 1)), rel=1e-12)


def test_one_step_reproduces_exact_state(grid):
    motion = poly(0.0, 0.1, 0.02, -0.003)
    c = coherent_coefficients(0.3, -0.2, SYS)
    errs = []
    for dt in (0.02, 0.01):
        psi = exact_evolve(c, motion, 1.0, SYS, grid)
        op = SplitOperator(grid, harmonic_potential(grid, 1.0, 1.0), PhysicalParams(), dt, NO_ABSORBER)
        stepped = op.step(psi.amplitudes.copy(), -float(motion(1.0 + dt / 2)))
        target = exact_evolve(c, motion, 1.0 + dt, SYS, grid)
        errs.append(1 - fidelity(Wavefunction(grid, stepped), target))
    # fidelity loss is the square of an O(dt^3) local error
    assert errs[0] < 1e-9 and errs[0] / errs[1] > 20


def test_fidelity_against_propagator(grid):
    assert 1 - evolution_fidelity(poly(0, 0, 0.0025), SYS, 100.0, grid) < 1e-6
    assert 1 - evolution_fidelity(HarmonicMotion.sinusoidal(2.0, 0.5), SYS, 100.0, grid) < 1e-6


def test_sudden_switch(grid):
    for m in (poly(0.7), poly(0, 0.4), poly(0.3, -0.2, 0.1)):
        on_grid, closed = sudden_switch_overlap(m, SYS, 0.0, grid)
        assert on_grid == pytest.approx(closed, abs=1e-8)


def test_grid_escape_converges_to_morita(grid):
    exact, _ = switch_transition_prob(1, 0.1, SYS)
    errs = [abs(switch_escape_on_grid(1, 0.1, SYS, 10.0, grid, dt) - exact) for dt in (0.02, 0.01)]
    assert errs[1] < 1e-6 * 20 and errs[0] / errs[1] == pytest.approx(4, rel=0.1)


def test_harmonic_check_passes(grid):
    results = harmonic_check(grid)
    assert [r.name for r in results] == ["evolution_fidelity", "sudden_switch_overlap", "morita_vs_perturbative",
                                         "b_composition", "morita_grid"]
    assert all(r.passed for r in results), [(r.name, r.detail) for r in results if not r.passed]


def test_system_validation():
    with pytest.raises(UsageError):
        HarmonicSystem(omega=0)
    with pytest.raises(UsageError):
        HarmonicMotion(coeffs=(1.0,), frequency=2.0)
