"""Gravity-based transit accessibility.

Accessibility of origin i is the job count of every destination weighted by a
travel-time decay, ``A_i = sum_j O_j f(t_ij)``, with the truncated hyperbolic
decay ``f(t) = scale / (offset + t) - 1`` for ``t < cutoff`` and 0 otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError

UNREACHABLE = np.inf


@dataclass(frozen=True)
class ImpedanceParams:
    scale: float = 180.0
    offset: float = 90.0
    cutoff: float = 90.0


DEFAULT_IMPEDANCE = ImpedanceParams()


def impedance(t, params: ImpedanceParams = DEFAULT_IMPEDANCE):
    """Travel-time weight in [0, 1]. ``t`` in minutes; ``inf`` marks unreachable."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(t_arr)) or np.any(t_arr < 0):
        raise DataError("travel time must be non-negative (use inf for unreachable)")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(t_arr < params.cutoff, params.scale / (params.offset + t_arr) - 1.0, 0.0)
    w = np.clip(w, 0.0, 1.0)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class TravelTimeMatrix:
    minutes: np.ndarray
    origins: tuple
    destinations: tuple

    def __post_init__(self):
        m = np.asarray(self.minutes, dtype=float)
        object.__setattr__(self, "minutes", m)
        object.__setattr__(self, "origins", tuple(self.origins))
        object.__setattr__(self, "destinations", tuple(self.destinations))
        if m.shape != (len(self.origins), len(self.destinations)):
            raise DataError(f"matrix shape {m.shape} does not match zone lists")
        if np.any(np.isnan(m)) or np.any(m < 0):
            raise DataError("travel times must be >= 0; mark unreachable pairs with inf")

    @classmethod
    def from_long(cls, frame: pd.DataFrame) -> "TravelTimeMatrix":
        """Build from (origin, destination, minutes) rows; absent pairs are unreachable."""
        origins = tuple(pd.unique(frame["origin"]))
        dests = tuple(pd.unique(frame["destination"]))
        oi = {z: i for i, z in enumerate(origins)}
        di = {z: j for j, z in enumerate(dests)}
        m = np.full((len(origins), len(dests)), UNREACHABLE)
        for o, d, t in frame[["origin", "destination", "minutes"]].itertuples(index=False):
            m[oi[o], di[d]] = float(t)
        return cls(m, origins, dests)

    @classmethod
    def read_csv(cls, path: str | Path) -> "TravelTimeMatrix":
        return cls.from_long(pd.read_csv(path))


@dataclass(frozen=True)
class OpportunityVector:
    jobs: np.ndarray
    zones: tuple

    def __post_init__(self):
        j = np.asarray(self.jobs, dtype=float)
        object.__setattr__(self, "jobs", j)
        object.__setattr__(self, "zones", tuple(self.zones))
        if j.shape != (len(self.zones),):
            raise DataError("jobs and zone list lengths differ")
        if np.any(~np.isfinite(j)) or np.any(j < 0):
            raise DataError("job counts must be finite and >= 0")

    @classmethod
    def read_csv(cls, path: str | Path) -> "OpportunityVector":
        frame = pd.read_csv(path)
        return cls(frame["jobs"].to_numpy(), frame["zone"].tolist())


@dataclass(frozen=True)
class AccessibilityScore:
    access: np.ndarray
    zones: tuple

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"zone": list(self.zones), "access": self.access})

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def gravity_accessibility(
    ttm: TravelTimeMatrix,
    jobs: OpportunityVector,
    params: ImpedanceParams = DEFAULT_IMPEDANCE,
) -> AccessibilityScore:
    if ttm.destinations != jobs.zones:
        if set(ttm.destinations) != set(jobs.zones):
            raise DataError("destination zones of the travel-time matrix and job vector differ")
        pos = {z: i for i, z in enumerate(jobs.zones)}
        opp = jobs.jobs[[pos[z] for z in ttm.destinations]]
    else:
        opp = jobs.jobs
    access = impedance(ttm.minutes, params) @ opp
    return AccessibilityScore(np.atleast_1d(access), ttm.origins)


def euclidean_travel_times(
    origins_xy: np.ndarray,
    dest_xy: np.ndarray,
    speed_kmh: float = 20.0,
    fixed_minutes: float = 5.0,
) -> np.ndarray:
    """Crude straight-line travel times in minutes, used by the synthetic generator."""
    d = np.linalg.norm(np.asarray(origins_xy)[:, None, :] - np.asarray(dest_xy)[None, :, :], axis=2)
    return fixed_minutes + d / 1000.0 / speed_kmh * 60.0


def access_for_points(
    points_xy: np.ndarray,
    job_centers: Sequence[Sequence[float]],
    speed_kmh: float = 20.0,
    fixed_minutes: float = 5.0,
    params: ImpedanceParams = DEFAULT_IMPEDANCE,
) -> np.ndarray:
    centers = np.asarray(job_centers, dtype=float)
    minutes = euclidean_travel_times(points_xy, centers[:, :2], speed_kmh, fixed_minutes)
    ttm = TravelTimeMatrix(minutes, range(len(points_xy)), range(len(centers)))
    return gravity_accessibility(ttm, OpportunityVector(centers[:, 2], range(len(centers))), params).access
