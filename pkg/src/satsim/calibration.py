"""Tune Q so degraded imagery matches the LV of a reference satellite image.

Each survey gets its own crossing: a coarse sweep brackets the target LV and
bisection refines it. The calibrated Q is the mean over surveys.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .blur import laplacian_variance
from .optics import DegradeConfig, degrade
from .raster import Raster


class CalibrationError(ValueError):
    pass


class TargetNotBracketed(CalibrationError):
    pass


class AmbiguousCrossing(CalibrationError):
    def __init__(self, message: str, crossings: list[tuple[float, float]]):
        super().__init__(message)
        self.crossings = crossings


@dataclass(frozen=True)
class SweepConfig:
    q_min: float = 0.25
    q_max: float = 8.0
    q_step: float = 0.25
    lv_tol: float = 0.01
    q_tol: float = 1e-3
    max_iter: int = 60
    workers: int = 1

    def grid(self) -> list[float]:
        n = int(round((self.q_max - self.q_min) / self.q_step))
        qs = [self.q_min + i * self.q_step for i in range(n + 1)]
        if qs[-1] < self.q_max - 1e-12:
            qs.append(self.q_max)
        return qs


@dataclass
class CalibrationResult:
    q_star: float
    lv_target: float
    lv_achieved: float
    sweep: list[tuple[float, float]]
    per_survey_q: list[tuple[str, float]]
    per_survey_sweep: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["sweep"] = [list(s) for s in self.sweep]
        d["per_survey_q"] = [list(s) for s in self.per_survey_q]
        d["per_survey_sweep"] = {k: [list(s) for s in v] for k, v in self.per_survey_sweep.items()}
        return d

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _lv_at(uav: Raster, phi: float, q: float) -> float:
    cfg = DegradeConfig(q=q, phi=phi, target_gsd=uav.gsd * phi)
    return laplacian_variance(degrade(uav, cfg)).lv


def lv_curve(uav: Raster, phi: float, q_grid: Sequence[float], workers: int = 1) -> list[tuple[float, float]]:
    """LV of the degraded image at each grid Q (one sample per grid point)."""
    qs = [float(q) for q in q_grid]
    if not qs:
        raise ValueError("q_grid must not be empty")
    if any(q <= 0 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
        raise ValueError("q_grid must be positive and strictly increasing")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            lvs = list(pool.map(lambda q: _lv_at(uav, phi, q), qs))
    else:
        lvs = [_lv_at(uav, phi, q) for q in qs]
    return list(zip(qs, lvs))


def find_crossing(uav: Raster, phi: float, lv_target: float, curve, cfg: SweepConfig) -> tuple[float, float]:
    """Bisect the single bracketed crossing of ``curve``; returns (q, lv)."""
    qs = np.array([q for q, _ in curve])
    diff = np.array([lv for _, lv in curve]) - lv_target

    exact = [i for i in range(len(qs)) if diff[i] == 0]
    brackets = [i for i in range(len(qs) - 1) if diff[i] * diff[i + 1] < 0]
    crossings = [(float(qs[i]), float(qs[i])) for i in exact]
    crossings += [(float(qs[i]), float(qs[i + 1])) for i in brackets]
    if not crossings:
        lo, hi = float(diff.min() + lv_target), float(diff.max() + lv_target)
        raise TargetNotBracketed(
            f"target not bracketed: LV {lv_target:.4f} outside [{lo:.4f}, {hi:.4f}] "
            f"over q in [{qs[0]}, {qs[-1]}]"
        )
    if len(crossings) > 1:
        listing = ", ".join(f"[{a:g}, {b:g}]" for a, b in crossings)
        raise AmbiguousCrossing(f"ambiguous crossing: {listing}", crossings)
    if exact:
        return float(qs[exact[0]]), lv_target

    i = brackets[0]
    lo, hi = float(qs[i]), float(qs[i + 1])
    d_lo = diff[i]
    q_mid, lv_mid = lo, float(diff[i] + lv_target)
    for _ in range(cfg.max_iter):
        q_mid = 0.5 * (lo + hi)
        lv_mid = _lv_at(uav, phi, q_mid)
        d_mid = lv_mid - lv_target
        if abs(d_mid) <= cfg.lv_tol or (hi - lo) / 2 <= cfg.q_tol:
            break
        if d_mid * d_lo < 0:
            hi = q_mid
        else:
            lo, d_lo = q_mid, d_mid
    return q_mid, lv_mid


def calibrate_q(uav_surveys: Sequence[Raster], reference: Raster, phi: float,
                cfg: SweepConfig | None = None, survey_ids: Sequence[str] | None = None) -> CalibrationResult:
    """Find the Q whose degraded LV matches ``reference``, averaged over surveys.

    ``reference`` must already be at the target GSD and cover the same ground
    as the surveys; no registration is done here.
    """
    cfg = cfg or SweepConfig()
    if not uav_surveys:
        raise ValueError("at least one survey raster is required")
    if survey_ids is None:
        survey_ids = [str(i) for i in range(len(uav_surveys))]
    if len(survey_ids) != len(uav_surveys):
        raise ValueError("survey_ids must match uav_surveys")

    lv_target = laplacian_variance(reference).lv
    grid = cfg.grid()
    per_q, per_lv, sweeps = [], [], {}
    for sid, uav in zip(survey_ids, uav_surveys):
        curve = lv_curve(uav, phi, grid, workers=cfg.workers)
        sweeps[sid] = curve
        q, lv = find_crossing(uav, phi, lv_target, curve, cfg)
        per_q.append((sid, q))
        per_lv.append(lv)

    q_star = float(np.mean([q for _, q in per_q]))
    # the sweep table averages LV across surveys at each grid point
    mean_sweep = [(q, float(np.mean([sweeps[s][i][1] for s in survey_ids])))
                  for i, q in enumerate(grid)]
    return CalibrationResult(
        q_star=q_star,
        lv_target=lv_target,
        lv_achieved=float(np.mean(per_lv)),
        sweep=mean_sweep,
        per_survey_q=per_q,
        per_survey_sweep=sweeps,
    )
