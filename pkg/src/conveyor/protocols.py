"""Acceleration schedules a(t) on [0, tau] with closed-form kinematics.

Every protocol starts at rest at the origin (x0(0) = v(0) = 0). Derivatives at
the endpoints are one-sided and analytic, which is what the disturbance model
needs to locate the lowest-order discontinuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainRangeError, UsageError

INITIAL = "initial"
FINAL = "final"
ENDPOINTS = (INITIAL, FINAL)

POLY5_PREFACTOR = 840.0


def amplitude_from_constraint(variant: str, L: float, tau: float) -> float:
    """Amplitude that carries the trap a distance L in time tau, ending at rest.

    >>> round(amplitude_from_constraint("cos", 5000, 500), 7)
    0.098696
    """
    if L <= 0 or tau <= 0:
        raise UsageError(f"need L > 0 and tau > 0, got L={L}, tau={tau}")
    if variant == "cos":
        return math.pi**2 * L / (2 * tau**2)
    if variant == "sin":
        return 2 * math.pi * L / tau**2
    if variant == "poly5":
        return POLY5_PREFACTOR * L * tau**-7
    raise UsageError(f"variant {variant!r} has no (L, tau) amplitude constraint")


def _check_time(t, tau):
    arr = np.asarray(t, dtype=float)
    slack = 1e-9 * tau
    if np.any(arr < -slack) or np.any(arr > tau + slack):
        raise DomainRangeError(f"time outside [0, {tau}]")
    return np.clip(arr, 0.0, tau)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


class Protocol:
    """Base class; subclasses provide the closed forms."""

    variant: str = ""
    tau: float

    def acceleration(self, t):
        t = _check_time(t, self.tau)
        return _scalar(self._a(t))

    def velocity(self, t):
        t = _check_time(t, self.tau)
        return _scalar(self._v(t))

    def position(self, t):
        t = _check_time(t, self.tau)
        return _scalar(self._x(t))

    def distance(self) -> float:
        return float(self._x(np.float64(self.tau)))

    def endpoint_derivative(self, n: int, endpoint: str = INITIAL) -> float:
        return self._derivative(n, endpoint)[0]

    def peak_acceleration(self, samples: int = 4001) -> float:
        return float(np.max(np.abs(self._a(np.linspace(0.0, self.tau, samples)))))

    def leading_discontinuity(self, endpoint: str = INITIAL, n_max: int = 6) -> tuple[int, float] | None:
        """Lowest order n with a nonzero one-sided a^(n) at the endpoint.

        Returns ``None`` when every derivative up to ``n_max`` vanishes (a
        smooth endpoint). Zero means below 1e-14 of the protocol's natural
        scale max|a| * (2 pi / tau)^n, or below the polynomial round-off bound.
        """
        if endpoint not in ENDPOINTS:
            raise UsageError(f"endpoint must be one of {ENDPOINTS}")
        amax = self.peak_acceleration()
        for n in range(n_max + 1):
            value, roundoff = self._derivative(n, endpoint)
            scale = amax * (2 * math.pi / self.tau) ** n
            if abs(value) > max(1e-14 * scale, roundoff):
                return n, value
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    # subclass hooks
    def _a(self, t):
        raise NotImplementedError

    def _v(self, t):
        raise NotImplementedError

    def _x(self, t):
        raise NotImplementedError

    def _derivative(self, n: int, endpoint: str) -> tuple[float, float]:
        """(value, round-off magnitude) of the n-th one-sided derivative."""
        raise NotImplementedError


def _endpoint_time(endpoint, tau):
    if endpoint == INITIAL:
        return 0.0
    if endpoint == FINAL:
        return tau
    raise UsageError(f"endpoint must be one of {ENDPOINTS}")


@dataclass(frozen=True)
class Cos(Protocol):
    """a(t) = c cos(omega t), omega = pi/tau, c = pi^2 L / (2 tau^2)."""

    L: float
    tau: float
    variant = "cos"

    def __post_init__(self):
        amplitude_from_constraint("cos", self.L, self.tau)

    @property
    def omega(self) -> float:
        return math.pi / self.tau

    @property
    def c(self) -> float:
        return amplitude_from_constraint("cos", self.L, self.tau)

    def _a(self, t):
        return self.c * np.cos(self.omega * t)

    def _v(self, t):
        return self.c / self.omega * np.sin(self.omega * t)

    def _x(self, t):
        return self.c / self.omega**2 * (1.0 - np.cos(self.omega * t))

    def _derivative(self, n, endpoint):
        t = _endpoint_time(endpoint, self.tau)
        return self.c * self.omega**n * math.cos(self.omega * t + n * math.pi / 2), 0.0

    def to_dict(self):
        return {"variant": "cos", "L": self.L, "tau": self.tau}


class _Sinusoid(Protocol):
    """a(t) = c sin(2 omega t + phi) with omega = pi/tau."""

    c: float
    phi: float

    @property
    def omega(self) -> float:
        return math.pi / self.tau

    def _a(self, t):
        return self.c * np.sin(2 * self.omega * t + self.phi)

    def _v(self, t):
        w2 = 2 * self.omega
        return self.c / w2 * (math.cos(self.phi) - np.cos(w2 * t + self.phi))

    def _x(self, t):
        w2 = 2 * self.omega
        return self.c / w2 * (t * math.cos(self.phi) - (np.sin(w2 * t + self.phi) - math.sin(self.phi)) / w2)

    def _derivative(self, n, endpoint):
        t = _endpoint_time(endpoint, self.tau)
        w2 = 2 * self.omega
        return self.c * w2**n * math.sin(w2 * t + self.phi + n * math.pi / 2), 0.0


@dataclass(frozen=True)
class ShiftedSin(_Sinusoid):
    """Sinusoid with free amplitude and phase; the distance travelled is an output."""

    c: float
    phi: float
    tau: float
    variant = "shifted_sin"

    def __post_init__(self):
        if self.tau <= 0:
            raise UsageError("tau must be positive")

    def to_dict(self):
        return {"variant": "shifted_sin", "c": self.c, "phi": self.phi, "tau": self.tau}


@dataclass(frozen=True)
class Sin(_Sinusoid):
    """a(t) = c sin(2 omega t) with c = 2 pi L / tau^2."""

    L: float
    tau: float
    variant = "sin"
    phi = 0.0

    def __post_init__(self):
        amplitude_from_constraint("sin", self.L, self.tau)

    @property
    def c(self) -> float:
        return amplitude_from_constraint("sin", self.L, self.tau)

    def to_dict(self):
        return {"variant": "sin", "L": self.L, "tau": self.tau}


class _PolynomialProtocol(Protocol):
    """Acceleration stored as polynomial expansions about both endpoints."""

    _about_start: Polynomial
    _about_end: Polynomial  # in s = t - tau

    def _a(self, t):
        return self._about_start(t)

    def _v(self, t):
        return self._about_start.integ(1, lbnd=0.0)(t)

    def _x(self, t):
        return self._about_start.integ(2, lbnd=0.0)(t)

    def _derivative(self, n, endpoint):
        if n < 0:
            raise UsageError("derivative order must be non-negative")
        poly = self._about_start if endpoint == INITIAL else self._about_end
        _endpoint_time(endpoint, self.tau)
        coef = poly.coef
        if n >= len(coef):
            return 0.0, 0.0
        value = factorial(n) * float(coef[n])
        # shifting coefficients to the final endpoint costs round-off
        # proportional to the term magnitudes at that endpoint
        roundoff = 0.0
        if endpoint == FINAL and getattr(self, "_shifted", False):
            ks = np.arange(n, len(self._about_start.coef))
            terms = np.abs(self._about_start.coef[n:]) * np.array(
                [factorial(k) / factorial(k - n) for k in ks]) * self.tau ** (ks - n)
            roundoff = 64 * np.finfo(float).eps * float(np.sum(terms))
        return value, roundoff


@dataclass(frozen=True)
class ConstantA(_PolynomialProtocol):
    """Constant acceleration a for a duration tau."""

    a: float
    tau: float
    variant = "const"

    def __post_init__(self):
        if self.tau <= 0:
            raise UsageError("tau must be positive")
        object.__setattr__(self, "_about_start", Polynomial([self.a]))
        object.__setattr__(self, "_about_end", Polynomial([self.a]))

    def to_dict(self):
        return {"variant": "const", "a": self.a, "tau": self.tau}


@dataclass(frozen=True)
class Poly5(_PolynomialProtocol):
    """a(t) = a0 t^2 (tau/2 - t) (tau - t)^2 with a0 = 840 L tau^-7."""

    L: float
    tau: float
    variant = "poly5"

    def __post_init__(self):
        a0 = amplitude_from_constraint("poly5", self.L, self.tau)
        tau = self.tau
        start = a0 * Polynomial([0, 0, 1]) * Polynomial([tau / 2, -1]) * Polynomial([tau, -1]) ** 2
        # same factors written in s = t - tau
        end = a0 * Polynomial([tau, 1]) ** 2 * Polynomial([-tau / 2, -1]) * Polynomial([0, 0, 1])
        object.__setattr__(self, "_about_start", start)
        object.__setattr__(self, "_about_end", end)

    @property
    def a0(self) -> float:
        return amplitude_from_constraint("poly5", self.L, self.tau)

    def to_dict(self):
        return {"variant": "poly5", "L": self.L, "tau": self.tau}


@dataclass(frozen=True)
class TaylorCustom(_PolynomialProtocol):
    """a(t) = sum_k coeffs[k] t^k on [0, tau]."""

    coeffs: tuple
    tau: float
    variant = "taylor"

    def __post_init__(self):
        if self.tau <= 0:
            raise UsageError("tau must be positive")
        coeffs = tuple(float(c) for c in self.coeffs)
        if not coeffs:
            raise UsageError("taylor protocol needs at least one coefficient")
        object.__setattr__(self, "coeffs", coeffs)
        start = Polynomial(coeffs)
        object.__setattr__(self, "_about_start", start)
        object.__setattr__(self, "_about_end", start(Polynomial([self.tau, 1.0])))
        object.__setattr__(self, "_shifted", True)

    def to_dict(self):
        return {"variant": "taylor", "coeffs": list(self.coeffs), "tau": self.tau}


_FIELDS = {
    "const": ("a", "tau"),
    "cos": ("L", "tau"),
    "sin": ("L", "tau"),
    "poly5": ("L", "tau"),
    "shifted_sin": ("c", "phi", "tau"),
    "taylor": ("coeffs", "tau"),
}


def protocol_from_dict(desc: dict) -> Protocol:
    """Build a protocol from its JSON descriptor; exactly the variant's fields are accepted."""
    desc = dict(desc)
    variant = desc.pop("variant", None)
    if variant not in _FIELDS:
        raise UsageError(f"unknown protocol variant {variant!r}")
    expected = set(_FIELDS[variant])
    if set(desc) != expected:
        extra = sorted(set(desc) - expected)
        missing = sorted(expected - set(desc))
        raise UsageError(f"{variant} protocol fields: unexpected {extra}, missing {missing}")
    if variant == "const":
        return ConstantA(a=float(desc["a"]), tau=float(desc["tau"]))
    if variant == "cos":
        return Cos(L=float(desc["L"]), tau=float(desc["tau"]))
    if variant == "sin":
        return Sin(L=float(desc["L"]), tau=float(desc["tau"]))
    if variant == "poly5":
        return Poly5(L=float(desc["L"]), tau=float(desc["tau"]))
    if variant == "shifted_sin":
        return ShiftedSin(c=float(desc["c"]), phi=float(desc["phi"]), tau=float(desc["tau"]))
    return TaylorCustom(coeffs=tuple(desc["coeffs"]), tau=float(desc["tau"]))
