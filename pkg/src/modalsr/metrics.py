"""Energy-map mismatch and angular-error scoring of recovered maps."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import DirectionGrid, angular_distances

KERNEL_WIDTH_RAD = np.pi / 12.0        # mismatch kernel support, 15 degrees
PEAK_FLOOR_DB = -20.0                  # peaks below this, relative to max, are ignored
NEIGHBORHOOD_DEG = 20.0                # search window around a true direction
NEIGHBORHOOD_POWER_FRACTION = 0.8      # peak must reach 80% of the window maximum
MISS_PENALTY_DEG = 20.0                # a missed source enters averages at the window radius


@dataclass
class EnergyMap:
    """Nonnegative per-direction power over a grid."""

    grid: DirectionGrid
    power: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        if self.power.shape != (len(self.grid),):
            raise ValueError("power must have one entry per grid direction")
        if np.any(self.power < 0):
            raise ValueError("energy map power must be nonnegative")

    def normalized(self) -> "EnergyMap":
        """Map scaled to unit total power (mismatch compares shapes, not scales)."""
        total = self.power.sum()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero energy map")
        return replace(self, power=self.power / total)


@dataclass(frozen=True)
class PeakSet:
    """Grid-local maxima above the relative floor, strongest first."""

    indices: tuple[int, ...]
    powers: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.indices)


def kernel(angle: float | np.ndarray) -> float | np.ndarray:
    """Linear decay from 1 at zero separation to 0 at pi/12, zero beyond."""
    return np.maximum(1.0 - np.asarray(angle) / KERNEL_WIDTH_RAD, 0.0)


def energy_map_mismatch(a: EnergyMap, b: EnergyMap) -> float:
    """Normalized kernel mismatch E in [0, 1]; 0 iff the maps agree.

    E = (K11 + K22 - 2 K12) / (K11 + K22) with
    K_ij = sum_qp sqrt(rho_q rho_p) kernel(angle(q, p)).
    Note E is not invariant to scaling one map alone; normalize first when
    comparing maps of unrelated scale.
    """
    if a.grid is not b.grid and len(a.grid) != len(b.grid):
        raise ValueError("maps must live on the same grid")
    if a.power.sum() <= 0 or b.power.sum() <= 0:
        raise ValueError("mismatch needs maps with positive total power")
    km = kernel(a.grid.pairwise_angles())
    sa = np.sqrt(a.power)
    sb = np.sqrt(b.power)
    k11 = float(sa @ km @ sa)
    k22 = float(sb @ km @ sb)
    k12 = float(sa @ km @ sb)
    return (k11 + k22 - 2.0 * k12) / (k11 + k22)


def find_peaks(emap: EnergyMap) -> PeakSet:
    """Strict local maxima over the grid adjacency, at least -20 dB of the max."""
    p = emap.power
    if not np.any(p > 0):
        return PeakSet((), ())
    floor = 10.0 ** (PEAK_FLOOR_DB / 10.0) * p.max()
    found = []
    for i, adj in enumerate(emap.grid.adjacency):
        if p[i] >= floor and all(p[i] > p[j] for j in adj):
            found.append((i, float(p[i])))
    found.sort(key=lambda t: (-t[1], t[0]))
    return PeakSet(tuple(i for i, _ in found), tuple(v for _, v in found))


def angular_error(emap: EnergyMap, truth: Sequence[float],
                  peaks: PeakSet | None = None) -> float | None:
    """Angle (radians) to the accepted peak near `truth`, or None for a miss.

    Candidate peaks lie within 20 degrees of the true direction; among them
    only peaks reaching 80% of the strongest candidate qualify, and the
    nearest qualifying peak is scored. The 80% rule can reject a nearer but
    weak peak in favor of a farther dominant one.
    """
    if peaks is None:
        peaks = find_peaks(emap)
    if not len(peaks):
        return None
    idx = np.array(peaks.indices)
    ang = angular_distances(emap.grid.directions[idx], truth)
    window = np.radians(NEIGHBORHOOD_DEG)
    inside = ang <= window
    if not np.any(inside):
        return None
    powers = np.array(peaks.powers)[inside]
    angles = ang[inside]
    qualifying = powers >= NEIGHBORHOOD_POWER_FRACTION * powers.max()
    return float(angles[qualifying].min())


def truth_map(grid: DirectionGrid, directions: np.ndarray, label: str = "truth") -> EnergyMap:
    """Unit-power deltas at the grid vertices nearest each true direction."""
    power = np.zeros(len(grid))
    for d in np.atleast_2d(directions):
        power[grid.nearest_vertex(d)] += 1.0
    return EnergyMap(grid, power, label=label)


def score_map(emap: EnergyMap, truth_directions: np.ndarray) -> tuple[float, float, float]:
    """(mismatch E, mean angular error in degrees, miss rate) against ground truth.

    Both maps are normalized to unit power before the mismatch. Missed
    sources enter the angular average at MISS_PENALTY_DEG.
    """
    truth_directions = np.atleast_2d(np.asarray(truth_directions, dtype=float))
    reference = truth_map(emap.grid, truth_directions).normalized()
    mismatch = energy_map_mismatch(emap.normalized(), reference)
    peaks = find_peaks(emap)
    errors = []
    misses = 0
    for d in truth_directions:
        err = angular_error(emap, d, peaks=peaks)
        if err is None:
            misses += 1
            errors.append(np.radians(MISS_PENALTY_DEG))
        else:
            errors.append(err)
    mean_err_deg = float(np.degrees(np.mean(errors)))
    return mismatch, mean_err_deg, misses / len(truth_directions)
