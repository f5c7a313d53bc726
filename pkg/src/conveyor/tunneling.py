"""Adiabatic tunnelling rate Gamma(a) from constant-acceleration decay fits."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import DomainRangeError, FitError, UsageError
from .propagator import Settings, SurvivalSeries, propagate_constant, run_parallel
from .protocols import Protocol

log = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
WINDOW_FLOOR_POINTS = 20
TARGET_R2 = 0.999
FLAG_R2 = 0.99
# below this survival the log-linear fit is not attempted
P_FLOOR = 1e-12
# Gamma values this small count as "no tunnelling" below the table
GAMMA_NOISE_FLOOR = 1e-6
# fitted prefactors above this are flagged
PREFACTOR_LIMIT = 1.05


@dataclass(frozen=True)
class DecayFit:
    A: float
    gamma: float
    window: tuple[float, float]
    r2: float
    n_points: int


def fit_exponential_decay(series: SurvivalSeries, window: tuple[float, float]) -> DecayFit:
    """Least-squares line through (t, ln p) on the window: p ~ A exp(-gamma t)."""
    t_lo, t_hi = window
    t = np.asarray(series.times)
    p = np.asarray(series.p)
    sel = (t >= t_lo - 1e-9) & (t <= t_hi + 1e-9)
    if sel.sum() < MIN_FIT_POINTS:
        raise FitError(f"only {int(sel.sum())} samples in window [{t_lo}, {t_hi}], need {MIN_FIT_POINTS}")
    if np.any(p[sel] <= 0):
        raise FitError("non-positive survival probability inside the fit window")
    tw, y = t[sel], np.log(p[sel])
    slope, intercept = np.polyfit(tw, y, 1)
    resid = y - (slope * tw + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 0.0 or ss_res <= 1e-30 * max(ss_tot, 1e-300):
        r2 = 1.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(A=float(np.exp(intercept)), gamma=max(0.0, float(-slope)),
                    window=(float(tw[0]), float(tw[-1])), r2=r2, n_points=int(sel.sum()))


def auto_fit(series: SurvivalSeries) -> DecayFit:
    """Fit over the latter half of the usable record, trimming from the left until r^2 >= 0.999.

    The usable record ends at the run length T or where p first drops below
    ``P_FLOOR``, whichever is earlier.
    """
    t, p = np.asarray(series.times), np.asarray(series.p)
    below = np.nonzero(p < P_FLOOR)[0]
    t_end = t[below[0] - 1] if below.size else t[-1]
    t_lo = 0.5 * t_end
    fit = fit_exponential_decay(series, (t_lo, t_end))
    while fit.r2 < TARGET_R2:
        n_left = int(np.sum((t >= t_lo) & (t <= t_end)))
        if n_left <= WINDOW_FLOOR_POINTS:
            break
        inside = t[(t >= t_lo) & (t <= t_end)]
        t_lo = inside[max(1, len(inside) // 10)]
        if np.sum((t >= t_lo) & (t <= t_end)) < WINDOW_FLOOR_POINTS:
            t_lo = inside[-WINDOW_FLOOR_POINTS]
        fit = fit_exponential_decay(series, (t_lo, t_end))
    return fit


@dataclass(frozen=True)
class GammaEntry:
    a: float
    gamma: float
    p_M: float
    r2: float
    flags: tuple = ()


@dataclass
class GammaTable:
    entries: list[GammaEntry]
    params: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.a)
        a = [e.a for e in self.entries]
        if any(a2 <= a1 for a1, a2 in zip(a, a[1:])):
            raise UsageError("gamma table accelerations must be strictly increasing")
        if any(e.gamma < 0 for e in self.entries):
            raise UsageError("gamma table rates must be non-negative")

    @property
    def a(self) -> np.ndarray:
        return np.array([e.a for e in self.entries])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([e.gamma for e in self.entries])

    @property
    def p_M(self) -> np.ndarray:
        return np.array([e.p_M for e in self.entries])

    def is_monotone(self, resolved_only: bool = False) -> bool:
        g = np.array([e.gamma for e in self.entries if not resolved_only or e.r2 >= FLAG_R2])
        return bool(np.all(np.diff(g) >= 0))

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "runs": self.runs,
            "entries": [
                {"a": e.a, "gamma": e.gamma, "p_M": e.p_M, "r2": e.r2, **({"flags": list(e.flags)} if e.flags else {})}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GammaTable":
        try:
            entries = [GammaEntry(float(e["a"]), float(e["gamma"]), float(e["p_M"]), float(e["r2"]),
                                  tuple(e.get("flags", ()))) for e in data["entries"]]
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed gamma table: {exc}") from exc
        return cls(entries, dict(data.get("params", {})), dict(data.get("runs", {})))

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GammaTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _scan_one(a: float, T: float, settings: Settings) -> GammaEntry:
    series = propagate_constant(a, T, settings)
    fit = auto_fit(series)
    flags = list(series.warnings)
    if fit.r2 < FLAG_R2:
        flags.append(f"poor fit r2={fit.r2:.4f}")
    if fit.A > PREFACTOR_LIMIT:
        flags.append(f"prefactor {fit.A:.3f} above {PREFACTOR_LIMIT}: non-exponential onset")
    return GammaEntry(a=float(a), gamma=fit.gamma, p_M=fit.A, r2=fit.r2, flags=tuple(flags))


def gamma_scan(a_values: Sequence[float], T: float = 500.0, settings: Settings | None = None,
               workers: int = 1) -> GammaTable:
    """One constant-acceleration run and decay fit per acceleration."""
    settings = settings or Settings(sample_stride=10)
    a_values = [float(a) for a in a_values]
    if any(a <= 0 for a in a_values):
        raise UsageError("scan accelerations must be positive")
    if a_values != sorted(a_values):
        raise UsageError("scan accelerations must be sorted")
    entries = run_parallel(partial(_scan_one, T=T, settings=settings), a_values, workers)
    table = GammaTable(entries, params=settings.params.to_dict(),
                       runs={"T": T, "dt": settings.dt, "grid": settings.grid.to_dict(),
                             "absorber": settings.absorber.to_dict(), "sample_stride": settings.sample_stride})
    if not table.is_monotone(resolved_only=True):
        log.warning("gamma(a) is not monotone over the scanned range")
    return table


def _lagrange4(xs: np.ndarray, ys: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise 4-point Lagrange interpolation; xs, ys have shape (m, 4)."""
    out = np.zeros_like(x)
    for j in range(4):
        w = np.ones_like(x)
        for k in range(4):
            if k != j:
                w *= (x - xs[:, k]) / (xs[:, j] - xs[:, k])
        out += w * ys[:, j]
    return out


def resolved_nodes(table: GammaTable) -> tuple[np.ndarray, np.ndarray]:
    """(a, Gamma) of entries whose decay was resolved (fit r^2 >= 0.99)."""
    keep = np.array([e.r2 >= FLAG_R2 for e in table.entries], dtype=bool)
    return table.a[keep], table.gamma[keep]


def gamma_interpolate(table: GammaTable, a):
    """Gamma at |a| from the four nearest resolved table entries.

    The cubic runs through ln(Gamma) when all four rates are positive (Gamma
    spans decades across a scan) and through Gamma otherwise; results are
    clamped at zero. Entries with unresolved decays (r^2 < 0.99) are skipped.

    Below the table, ln(Gamma) is continued linearly in 1/a through the two
    lowest entries, the exp(-b/a) form of tunnelling through a tilted
    barrier; if those rates are not positive and below ``GAMMA_NOISE_FLOOR``,
    Gamma is zero there. Above the table a range error is raised.
    """
    nodes, rates = resolved_nodes(table)
    if len(nodes) < 4:
        raise UsageError("gamma interpolation needs at least 4 resolved table entries")
    scalar = np.ndim(a) == 0
    a = np.abs(np.atleast_1d(np.asarray(a, dtype=float)))
    if np.any(a > nodes[-1] * (1 + 1e-12)):
        raise DomainRangeError(f"|a| = {a.max():.6g} above the gamma table range (max {nodes[-1]:.6g})")
    below = a < nodes[0]
    out = np.zeros_like(a)
    if np.any(below & (a > 0)):
        if rates[0] > 0 and rates[1] > rates[0]:
            b = np.log(rates[1] / rates[0]) / (1 / nodes[0] - 1 / nodes[1])
            ab = a[below]
            with np.errstate(divide="ignore", over="ignore"):
                out[below] = np.where(ab > 0, rates[0] * np.exp(-b * (1 / np.maximum(ab, 1e-300) - 1 / nodes[0])), 0.0)
        elif rates[0] >= GAMMA_NOISE_FLOOR:
            raise DomainRangeError(
                f"|a| = {a[below].min():.6g} below the gamma table (min {nodes[0]:.6g}, gamma {rates[0]:.3g})")
    inside = ~below
    if np.any(inside):
        ai = a[inside]
        idx = np.clip(np.searchsorted(nodes, ai, side="right") - 2, 0, len(nodes) - 4)
        cols = idx[:, None] + np.arange(4)
        xs, ys = nodes[cols], rates[cols]
        positive = np.all(ys > 0, axis=1)
        vals = np.empty_like(ai)
        if np.any(positive):
            vals[positive] = np.exp(_lagrange4(xs[positive], np.log(ys[positive]), ai[positive]))
        if np.any(~positive):
            vals[~positive] = _lagrange4(xs[~positive], ys[~positive], ai[~positive])
        # nodes are reproduced exactly
        exact = np.searchsorted(nodes, ai)
        hit = (exact < len(nodes)) & (nodes[np.minimum(exact, len(nodes) - 1)] == ai)
        vals[hit] = rates[exact[hit]]
        out[inside] = np.maximum(vals, 0.0)
    return float(out[0]) if scalar else out


def _simpson_gamma(table: GammaTable, accel: Callable, t0: float, t1: float, panels: int) -> float:
    t = np.linspace(t0, t1, panels + 1)
    return float(simpson(gamma_interpolate(table, accel(t)), x=t))


def integrate_gamma(table: GammaTable, accel: Callable, t0: float, t1: float,
                    min_panels: int = 1000, rtol: float = 1e-6, max_panels: int = 2**22) -> float:
    """Composite Simpson of Gamma(|accel(t)|) on [t0, t1], doubling panels until converged."""
    if t1 <= t0:
        return 0.0
    panels = min_panels + (min_panels % 2)
    prev = _simpson_gamma(table, accel, t0, t1, panels)
    while True:
        panels *= 2
        cur = _simpson_gamma(table, accel, t0, t1, panels)
        if abs(cur - prev) <= rtol * abs(cur) or cur == prev:
            return cur
        if panels >= max_panels:
            log.warning("gamma integral not converged to %g after %d panels", rtol, panels)
            return cur
        prev = cur


def gamma_integral(table: GammaTable, protocol: Protocol) -> float:
    """Integral of Gamma(|a(t)|) over the whole protocol."""
    return integrate_gamma(table, protocol.acceleration, 0.0, protocol.tau)


def cumulative_gamma_integral(table: GammaTable, protocol: Protocol, times, panels: int | None = None) -> np.ndarray:
    """Integral of Gamma(|a|) from 0 to each of ``times``.

    Uses a uniform composite-Simpson grid fine enough that the full-range
    integral has converged, then interpolates linearly between grid nodes.
    """
    times = np.asarray(times, dtype=float)
    if panels is None:
        panels = 1000
        prev = _simpson_gamma(table, protocol.acceleration, 0.0, protocol.tau, panels)
        while panels < 2**20:
            panels *= 2
            cur = _simpson_gamma(table, protocol.acceleration, 0.0, protocol.tau, panels)
            if abs(cur - prev) <= 1e-6 * abs(cur) or cur == prev:
                break
            prev = cur
        panels *= 4
    grid = np.linspace(0.0, protocol.tau, panels + 1)
    rates = gamma_interpolate(table, protocol.acceleration(grid))
    cum = np.concatenate([[0.0], cumulative_simpson(rates, x=grid)])
    return np.interp(times, grid, cum)
