"""Microphone array geometries, icosphere direction grids and angular utilities.

All coordinates are meters in a right-handed frame with the spherical
sub-array centered at the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ConfigError

SMA_LABEL = "SMA"


@dataclass(frozen=True)
class MicArray:
    """Ordered microphone positions with per-microphone sub-array labels."""

    positions: np.ndarray          # (M, 3) float64
    labels: tuple[str, ...]        # "SMA" or "LMA{i}"
    name: str = "array"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ConfigError("positions must be an (M, 3) array")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("microphone positions must be finite")
        if len(self.labels) != len(pos):
            raise ConfigError("labels must match microphone count")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    def sub_array(self, label: str) -> np.ndarray:
        """Positions of all microphones carrying `label`."""
        idx = [i for i, l in enumerate(self.labels) if l == label]
        return self.positions[idx]


class DirectionGrid:
    """Unit direction grid from recursive icosahedral subdivision.

    Vertices keep the adjacency of the triangle mesh they came from;
    the base icosahedron vertices have five neighbors, all others six.
    """

    def __init__(self, directions: np.ndarray, adjacency: list[list[int]], level: int):
        directions = np.asarray(directions, dtype=float)
        norms = np.linalg.norm(directions, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ConfigError("grid directions must be unit vectors")
        self.directions = directions
        self.adjacency = adjacency
        self.level = level
        self._angle_matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return self.directions.shape[0]

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]

    @property
    def ref(self) -> str:
        return f"icosphere:L={self.level}:N={len(self)}"

    def nearest_vertex(self, direction: Sequence[float]) -> int:
        """Index of the grid vertex closest in angle to `direction`."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return int(np.argmax(self.directions @ d))

    def pairwise_angles(self) -> np.ndarray:
        """(N, N) matrix of angular distances, cached after first use."""
        if self._angle_matrix is None:
            dots = np.clip(self.directions @ self.directions.T, -1.0, 1.0)
            self._angle_matrix = np.arccos(dots)
            np.fill_diagonal(self._angle_matrix, 0.0)
        return self._angle_matrix


@dataclass(frozen=True)
class LmaSpec:
    """One linear sub-array: `count` mics along `axis` centered at `offset`."""

    count: int
    spacing_m: float
    offset: tuple[float, float, float]
    axis: tuple[float, float, float]


@dataclass(frozen=True)
class HybridConfig:
    """Construction parameters for the spherical-plus-linear hybrid array."""

    sma_count: int = 64
    sma_radius_m: float = 0.10
    lmas: tuple[LmaSpec, ...] = field(default_factory=tuple)

    @staticmethod
    def default() -> "HybridConfig":
        """64-mic open sphere of radius 10 cm plus four tangential 8-mic
        linear arrays with 4 cm spacing, 0.5 m out along +-x and +-y."""
        return HybridConfig(lmas=_default_lmas(8, 0.04, 0.5, "tangential"))

    @staticmethod
    def from_json(doc: str | dict) -> "HybridConfig":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid hybrid config JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("hybrid config must be a JSON object")
        sma = doc.get("sma", {})
        lma = doc.get("lma", {})
        count_each = int(lma.get("count_each", 8))
        spacing = float(lma.get("spacing_m", 0.04))
        offset = float(lma.get("offset_m", 0.5))
        axes_mode = str(lma.get("axes", "tangential"))
        if axes_mode not in ("tangential", "radial"):
            raise ConfigError(f"unknown lma.axes mode: {axes_mode!r}")
        lmas = _default_lmas(count_each, spacing, offset, axes_mode) if count_each > 0 else ()
        return HybridConfig(
            sma_count=int(sma.get("count", 64)),
            sma_radius_m=float(sma.get("radius_m", 0.10)),
            lmas=lmas,
        )


def _default_lmas(count_each: int, spacing: float, offset: float, axes_mode: str) -> tuple[LmaSpec, ...]:
    specs = []
    for cx, cy in ((offset, 0.0), (-offset, 0.0), (0.0, offset), (0.0, -offset)):
        center = np.array([cx, cy, 0.0])
        radial = center / np.linalg.norm(center)
        tangential = np.array([-radial[1], radial[0], 0.0])
        axis = tangential if axes_mode == "tangential" else radial
        specs.append(LmaSpec(count_each, spacing, tuple(center), tuple(axis)))
    return tuple(specs)


def build_sma(n_mics: int, radius: float) -> MicArray:
    """Open spherical array sampled with a deterministic Fibonacci lattice."""
    if n_mics < 4:
        raise ConfigError(f"spherical array needs at least 4 microphones, got {n_mics}")
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(n_mics)
    z = 1.0 - 2.0 * (i + 0.5) / n_mics
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = golden * i
    pts = radius * np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)
    return MicArray(pts, (SMA_LABEL,) * n_mics, name=f"sma{n_mics}")


def build_lma(n_mics: int, spacing: float, center: Sequence[float],
              axis: Sequence[float], label: str = "LMA0") -> MicArray:
    """Uniform collinear array centered on `center` along unit `axis`."""
    if n_mics < 2:
        raise ConfigError(f"linear array needs at least 2 microphones, got {n_mics}")
    if spacing <= 0:
        raise ConfigError(f"spacing must be positive, got {spacing}")
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ConfigError("axis must be a nonzero vector")
    axis = axis / norm
    offsets = (np.arange(n_mics) - (n_mics - 1) / 2.0) * spacing
    pts = np.asarray(center, dtype=float) + offsets[:, None] * axis[None, :]
    return MicArray(pts, (label,) * n_mics, name=label.lower())


def build_hybrid(config: HybridConfig | None = None) -> MicArray:
    """SMA block first, then each LMA in configuration order."""
    if config is None:
        config = HybridConfig.default()
    parts = [build_sma(config.sma_count, config.sma_radius_m)]
    for i, spec in enumerate(config.lmas):
        parts.append(build_lma(spec.count, spec.spacing_m, spec.offset, spec.axis,
                               label=f"LMA{i}"))
    positions = np.vstack([p.positions for p in parts])
    labels = tuple(l for p in parts for l in p.labels)
    d2 = np.sum((positions[:, None, :] - positions[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    if d2.min() < 1e-6 ** 2:
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        raise ConfigError(f"microphones {i} and {j} overlap (distance < 1e-6 m)")
    return MicArray(positions, labels, name="hybrid" if config.lmas else parts[0].name)


_ICO_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def _icosahedron() -> tuple[list[np.ndarray], list[tuple[int, int, int]]]:
    verts = []
    for a in (-1.0, 1.0):
        for b in (-1.0, 1.0):
            verts.append(np.array([0.0, a, b * _ICO_PHI]))
            verts.append(np.array([a, b * _ICO_PHI, 0.0]))
            verts.append(np.array([a * _ICO_PHI, 0.0, b]))
    verts = [v / np.linalg.norm(v) for v in verts]
    edge = 2.0 / np.sqrt(_ICO_PHI * np.sqrt(5.0))
    edges = {
        (i, j)
        for i, j in combinations(range(12), 2)
        if abs(np.linalg.norm(verts[i] - verts[j]) - edge) < 1e-9
    }
    faces = [
        (i, j, k)
        for i, j, k in combinations(range(12), 3)
        if (i, j) in edges and (j, k) in edges and (i, k) in edges
    ]
    return verts, faces


def build_direction_grid(level: int) -> DirectionGrid:
    """Icosphere vertices at subdivision `level`: 10 * 4**level + 2 directions."""
    if not 0 <= level <= 6:
        raise ConfigError(f"subdivision level must be in [0, 6], got {level}")
    verts, faces = _icosahedron()
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces
    adjacency: list[set[int]] = [set() for _ in range(len(verts))]
    for a, b, c in faces:
        for i, j in ((a, b), (b, c), (c, a)):
            adjacency[i].add(j)
            adjacency[j].add(i)
    return DirectionGrid(np.array(verts), [sorted(s) for s in adjacency], level)


def angular_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Great-circle angle between two directions, in [0, pi].

    Uses the chord formulation 2*asin(|a-b|/2), which is exact at 0 and pi
    and more accurate than acos(dot) for nearly parallel vectors.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    chord = np.linalg.norm(a - b)
    return float(2.0 * np.arcsin(min(1.0, 0.5 * chord)))


def angular_distances(directions: np.ndarray, ref: Sequence[float]) -> np.ndarray:
    """Vectorized angular distance from each row of `directions` to `ref`."""
    d = np.asarray(directions, dtype=float)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    r = np.asarray(ref, dtype=float)
    r = r / np.linalg.norm(r)
    chord = np.linalg.norm(d - r, axis=1)
    return 2.0 * np.arcsin(np.minimum(1.0, 0.5 * chord))
