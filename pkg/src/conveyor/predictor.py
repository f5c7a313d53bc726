"""Closed-form survival estimate p_fit(t) = (1 - d_ini)(1 - d_inst(t)) exp(-int_0^t Gamma(|a|) dt')."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .disturbance import DisturbanceModel, endpoint_disturbance
from .errors import UsageError
from .propagator import SurvivalSeries
from .protocols import FINAL, INITIAL, Protocol
from .tunneling import GammaTable, cumulative_gamma_integral, gamma_integral

CSV_COLUMNS = ("t", "p_fit", "d_ini", "d_inst", "gamma_integral")


def fingerprint(obj) -> str:
    """Stable short hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Prediction:
    times: np.ndarray
    p_fit: np.ndarray
    d_ini: np.ndarray
    d_inst: np.ndarray
    gamma_integral: np.ndarray
    inputs: dict = field(default_factory=dict)

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in zip(self.times, self.p_fit, self.d_ini, self.d_inst, self.gamma_integral):
                w.writerow([f"{v:.12g}" for v in row])


def instantaneous_disturbance(protocol: Protocol, times, model: DisturbanceModel) -> np.ndarray:
    """(B_0 a(t))^2 clamped to [0, 1]; at t = tau the final-endpoint factor instead."""
    times = np.asarray(times, dtype=float)
    d = np.minimum(1.0, (model.coefficient(0) * protocol.acceleration(times)) ** 2)
    d = np.atleast_1d(np.asarray(d, dtype=float)).copy()
    at_end = np.isclose(np.atleast_1d(times), protocol.tau, rtol=0, atol=1e-9 * protocol.tau)
    if np.any(at_end):
        d[at_end] = endpoint_disturbance(protocol, FINAL, model).d
    return d


def predict(protocol: Protocol, times, table: GammaTable, model: DisturbanceModel) -> Prediction:
    """p_fit sampled at ``times`` (within [0, tau])."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    d_ini = endpoint_disturbance(protocol, INITIAL, model).d
    d_inst = instantaneous_disturbance(protocol, times, model)
    gint = cumulative_gamma_integral(table, protocol, times)
    p = (1.0 - d_ini) * (1.0 - d_inst) * np.exp(-gint)
    inputs = {"protocol": protocol.to_dict(), "gamma_table": fingerprint(table.to_dict()),
              "b_model": fingerprint(model.to_dict())}
    return Prediction(times, np.clip(p, 0.0, 1.0), np.full_like(times, d_ini), d_inst, gint, inputs)


def predict_survival(protocol: Protocol, t: float, table: GammaTable, model: DisturbanceModel) -> float:
    return float(predict(protocol, [t], table, model).p_fit[0])


def predict_escape_large_tau(protocol: Protocol, model: DisturbanceModel, table: GammaTable | None = None) -> float:
    """1 - (1 - d_ini)(1 - d_fin) exp(-int Gamma); without a table tunnelling is ignored."""
    d_ini = endpoint_disturbance(protocol, INITIAL, model).d
    d_fin = endpoint_disturbance(protocol, FINAL, model).d
    gint = gamma_integral(table, protocol) if table is not None else 0.0
    # written to keep precision when everything is tiny
    survive_dist = (1.0 - d_ini) * (1.0 - d_fin)
    return float(-np.expm1(np.log(survive_dist) - gint)) if survive_dist > 0 else 1.0


@dataclass(frozen=True)
class DeviationReport:
    max_abs_dev: float
    mean_abs_dev: float
    rel_dev_at_tau: float
    n_samples: int
    t_min: float = 0.0

    def to_dict(self) -> dict:
        return {"max_abs_dev": self.max_abs_dev, "mean_abs_dev": self.mean_abs_dev,
                "rel_dev_at_tau": self.rel_dev_at_tau, "n_samples": self.n_samples, "t_min": self.t_min}


def compare(sim: SurvivalSeries, pred: Prediction, t_min: float = 0.0) -> DeviationReport:
    """Deviation of the prediction from a simulation over their common sample times >= ``t_min``.

    ``rel_dev_at_tau`` is (p_fit - p_sim) / p_sim at the last common sample.
    """
    ts, tp = np.asarray(sim.times), np.asarray(pred.times)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(ts))) if ts.size else 1.0)
    idx = np.searchsorted(tp, ts)
    idx = np.clip(idx, 0, max(len(tp) - 1, 0))
    cand = [np.clip(idx - 1, 0, None), idx]
    pairs = []
    for i, t in enumerate(ts):
        for j in (cand[0][i], cand[1][i]):
            if len(tp) and abs(tp[j] - t) <= tol and t >= t_min - tol:
                pairs.append((i, j))
                break
    if not pairs:
        raise UsageError("simulation and prediction share no sample times")
    i, j = map(np.array, zip(*pairs))
    dev = np.abs(pred.p_fit[j] - np.asarray(sim.p)[i])
    p_end = float(sim.p[i[-1]])
    rel = float((pred.p_fit[j[-1]] - p_end) / p_end) if p_end > 0 else float("inf")
    return DeviationReport(float(dev.max()), float(dev.mean()), rel, len(pairs), float(t_min))
