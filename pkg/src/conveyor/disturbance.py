"""Endpoint disturbance factors d = (B_n a^(n))^2.

B_0 comes either from the constant-acceleration prefactors (p_M = (1 - B_0^2 a^2)^2)
or from a large-tau escape sweep of the cos protocol; B_1 from a sin sweep.
Higher orders are composed as B_n = B_0^(1-n) B_1^n.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .errors import FitError, UsageError
from .propagator import Settings, propagate, run_parallel
from .protocols import FINAL, INITIAL, Cos, Poly5, Protocol, Sin
from .tunneling import GammaTable, gamma_integral

log = logging.getLogger(__name__)

FITTED = "fitted"
COMPOSED = "composed"

# |a^(n)(0)| = g L tau^(-n-2) for the symmetric families
FAMILY_PREFACTOR = {
    "cos": (0, math.pi**2 / 2),
    "sin": (1, 4 * math.pi**2),
}

# adiabatic tunnelling allowed inside an asymptotic sweep point
REGIME_GAMMA_INTEGRAL = 1e-3
# ... and relative to the measured escape
REGIME_TUNNEL_FRACTION = 0.01

# largest 1 - sqrt(p_M) used by the quadratic fit
QUADRATIC_D_MAX = 0.01


@dataclass
class DisturbanceModel:
    """B_n coefficients with per-entry provenance."""

    B: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    quadratic_coefficient: float | None = None
    source_sweeps: list = field(default_factory=list)

    def __post_init__(self):
        self.B = {int(n): float(b) for n, b in self.B.items()}
        self.provenance = {int(n): str(p) for n, p in self.provenance.items()}
        for n, b in self.B.items():
            if not b > 0:
                raise UsageError(f"B_{n} must be positive, got {b}")
            self.provenance.setdefault(n, FITTED)

    def set_fitted(self, n: int, b: float, source: dict | None = None) -> None:
        if not b > 0:
            raise UsageError(f"B_{n} must be positive, got {b}")
        self.B[int(n)] = float(b)
        self.provenance[int(n)] = FITTED
        if source is not None:
            self.source_sweeps.append(source)

    def coefficient(self, n: int) -> float:
        """B_n, composing it from B_0 and B_1 when not stored."""
        if n in self.B:
            return self.B[n]
        return compose_b(self, n)

    def to_dict(self) -> dict:
        return {
            "B": {str(n): self.B[n] for n in sorted(self.B)},
            "provenance": {str(n): self.provenance[n] for n in sorted(self.provenance)},
            "quadratic_coefficient": self.quadratic_coefficient,
            "source_sweeps": list(self.source_sweeps),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DisturbanceModel":
        try:
            return cls(B=dict(data["B"]), provenance=dict(data.get("provenance", {})),
                       quadratic_coefficient=data.get("quadratic_coefficient"),
                       source_sweeps=list(data.get("source_sweeps", [])))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed B model: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DisturbanceModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def reference_model() -> DisturbanceModel:
    """B_0^2 = 2.64477 and B_1^2 = 8.60949, the published L = 8000 sweep values."""
    return DisturbanceModel(B={0: math.sqrt(2.64477), 1: math.sqrt(8.60949)})


def fit_quadratic_disturbance(table: GammaTable, d_max: float = QUADRATIC_D_MAX) -> float:
    """Slope q of 1 - sqrt(p_M) = q a^2, least squares through the origin.

    Only the small-disturbance regime 1 - sqrt(p_M) <= ``d_max`` on the rising
    branch is used: at larger a the fitted prefactor stops following the
    quadratic law (it turns over near a ~ 0.18 and rises again).
    """
    a, p_m = table.a, table.p_M
    ok = (p_m > 0.5) & (p_m <= 1.0 + 1e-9)
    y = 1.0 - np.sqrt(np.clip(p_m, 0.0, 1.0))
    # stop at the first entry past d_max or where 1 - sqrt(p_M) stops rising
    keep = np.zeros_like(ok)
    last = -np.inf
    for i in range(len(a)):
        if not ok[i] or y[i] > d_max or y[i] < last:
            break
        keep[i] = True
        last = y[i]
    if keep.sum() < 5:
        raise FitError(f"need >= 5 unsaturated entries with 1 - sqrt(p_M) <= {d_max}, have {int(keep.sum())}")
    x = a[keep] ** 2
    return float(np.dot(x, y[keep]) / np.dot(x, x))


@dataclass
class TauSweep:
    """Escape probability 1 - p(tau) of one protocol family at fixed L."""

    family: str
    L: float
    taus: np.ndarray
    p_escape: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.p_escape = np.asarray(self.p_escape, dtype=float)
        if self.taus.shape != self.p_escape.shape or self.taus.size == 0:
            raise UsageError("taus and p_escape must be non-empty and of equal length")
        if np.any(np.diff(self.taus) <= 0):
            raise UsageError("sweep taus must be strictly increasing")
        if np.any((self.p_escape < 0) | (self.p_escape > 1)):
            raise UsageError("p_escape must lie in [0, 1]")

    def protocols(self) -> list[Protocol]:
        return [family_protocol(self.family, self.L, tau) for tau in self.taus]

    def to_dict(self) -> dict:
        return {"family": self.family, "L": self.L, "taus": self.taus.tolist(),
                "p_escape": self.p_escape.tolist(), "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "TauSweep":
        return cls(data["family"], float(data["L"]), data["taus"], data["p_escape"], data.get("metadata", {}))


def family_protocol(family: str, L: float, tau: float) -> Protocol:
    if family == "cos":
        return Cos(L=L, tau=tau)
    if family == "sin":
        return Sin(L=L, tau=tau)
    if family == "poly5":
        return Poly5(L=L, tau=tau)
    raise UsageError(f"no (L, tau) sweep family {family!r}")


def _escape_one(tau: float, family: str, L: float, settings: Settings) -> float:
    series = propagate(family_protocol(family, L, tau), settings)
    return float(min(1.0, max(0.0, 1.0 - series.final())))


def sweep_tau(family: str, L: float, taus: Sequence[float], settings: Settings | None = None,
              workers: int = 1) -> TauSweep:
    """Run one full protocol per tau and record 1 - p(tau)."""
    settings = settings or Settings(sample_stride=1000)
    taus = sorted(float(t) for t in taus)
    esc = run_parallel(partial(_escape_one, family=family, L=L, settings=settings), taus, workers)
    return TauSweep(family, L, taus, esc, metadata={"settings": settings.to_dict()})


def check_regime(sweep: TauSweep, table: GammaTable) -> np.ndarray:
    """Integral of Gamma over each sweep protocol; raises if any point is tunnelling-dominated.

    A point qualifies when the integral is below 1e-3 and below 1% of the
    measured escape, so the endpoint disturbance dominates.
    """
    integrals = np.array([gamma_integral(table, p) for p in sweep.protocols()])
    bad = (integrals >= REGIME_GAMMA_INTEGRAL) | (integrals >= REGIME_TUNNEL_FRACTION * sweep.p_escape)
    if np.any(bad):
        taus = ", ".join(f"{t:g}" for t in sweep.taus[bad])
        raise FitError(f"tau = {taus} not in the asymptotic regime (tunnelling integral too large); "
                       "use larger tau")
    return integrals


@dataclass(frozen=True)
class EscapeFit:
    j: float
    slope: float
    j_free: float
    n: int


def fit_asymptotic_escape(sweep: TauSweep, n: int, table: GammaTable | None = None) -> EscapeFit:
    """Fit p_escape ~ j tau^-(2n+4).

    ``slope`` and ``j_free`` come from an unconstrained log-log line; ``j``
    is the geometric mean of p_escape tau^(2n+4), i.e. the prefactor at the
    theoretical slope. With a Gamma table the asymptotic regime is checked first.
    """
    if table is not None:
        check_regime(sweep, table)
    if sweep.taus.size < 2:
        raise FitError("need at least two sweep points")
    if np.any(sweep.p_escape <= 0):
        raise FitError("non-positive escape probability in sweep")
    lt, lp = np.log(sweep.taus), np.log(sweep.p_escape)
    slope, icpt = np.polyfit(lt, lp, 1)
    j = float(np.exp(np.mean(lp + (2 * n + 4) * lt)))
    return EscapeFit(j=j, slope=float(slope), j_free=float(np.exp(icpt)), n=n)


def b_from_j(j: float, L: float, family: str, n: int | None = None) -> float:
    """B_n^2 = j / (2 g^2 L^2) for a symmetric family with |a^(n)(0)| = g L tau^(-n-2).

    Returns B_n^2.

    >>> round(b_from_j(8.2440e9, 8000, "cos"), 5)
    2.64477
    """
    if family not in FAMILY_PREFACTOR:
        raise UsageError(f"no endpoint prefactor known for family {family!r}")
    order, g = FAMILY_PREFACTOR[family]
    if n is not None and n != order:
        raise UsageError(f"family {family!r} has its leading discontinuity at n={order}, not {n}")
    if not (j > 0 and L > 0):
        raise UsageError("j and L must be positive")
    return j / (2 * g**2 * L**2)


def compose_b(model: DisturbanceModel, n: int) -> float:
    """B_n = B_0^(1-n) B_1^n, stored in the model as a composed entry."""
    if n < 0:
        raise UsageError("order must be non-negative")
    if 0 not in model.B or 1 not in model.B:
        raise UsageError("composition needs both B_0 and B_1")
    if n in (0, 1):
        return model.B[n]
    b = model.B[0] ** (1 - n) * model.B[1] ** n
    if model.provenance.get(n) != FITTED:
        model.B[n] = b
        model.provenance[n] = COMPOSED
    return model.B[n]


@dataclass(frozen=True)
class Disturbance:
    d: float
    n: int | None
    derivative: float
    flags: tuple = ()


def endpoint_disturbance(protocol: Protocol, endpoint: str, model: DisturbanceModel,
                         n_max: int = 6) -> Disturbance:
    """Disturbance factor with the order and |a^(n)| that produced it."""
    lead = protocol.leading_discontinuity(endpoint, n_max=n_max)
    if lead is None:
        return Disturbance(0.0, None, 0.0, ("smooth endpoint",))
    n, value = lead
    d = (model.coefficient(n) * value) ** 2
    flags = ("clamped",) if d > 1 else ()
    return Disturbance(min(1.0, d), n, abs(value), flags)


def disturbance_factor(protocol: Protocol, endpoint: str, model: DisturbanceModel) -> float:
    """d = (B_n a^(n))^2 at the endpoint's leading discontinuity, clamped to [0, 1]."""
    if endpoint not in (INITIAL, FINAL):
        raise UsageError(f"endpoint must be {INITIAL!r} or {FINAL!r}")
    return endpoint_disturbance(protocol, endpoint, model).d


def model_from_sweeps(cos_fit: EscapeFit | None, sin_fit: EscapeFit | None, L_cos: float, L_sin: float,
                      quadratic: float | None = None) -> DisturbanceModel:
    """B_0 from the cos sweep (or the quadratic coefficient), B_1 from the sin sweep."""
    model = DisturbanceModel(quadratic_coefficient=quadratic)
    if cos_fit is not None:
        model.set_fitted(0, math.sqrt(b_from_j(cos_fit.j, L_cos, "cos")),
                         {"family": "cos", "L": L_cos, "j": cos_fit.j, "slope": cos_fit.slope})
    elif quadratic is not None:
        model.set_fitted(0, math.sqrt(quadratic), {"family": "const", "quadratic_coefficient": quadratic})
    if sin_fit is not None:
        model.set_fitted(1, math.sqrt(b_from_j(sin_fit.j, L_sin, "sin")),
                         {"family": "sin", "L": L_sin, "j": sin_fit.j, "slope": sin_fit.slope})
    return model
