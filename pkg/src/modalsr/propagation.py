"""Plane-wave transfer matrices and reverberant scene synthesis.

Phase convention: a time dependence exp(-i w t), so a plane wave traveling
along unit vector u has spatial factor exp(+i k u.x) and the outgoing
point-source Green's function is exp(+i k d) / (4 pi d). Grid directions
point from the array toward the source, so u = -direction. The convention
is applied uniformly to the dictionary and to the image-source simulator;
sparse recovery only works if the two agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, SceneError
from .geometry import DirectionGrid, MicArray, angular_distance

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class TransferMatrix:
    """Free-field plane-wave transfer matrix at one frequency."""

    entries: np.ndarray       # (M, N) complex128
    frequency: float
    array_ref: str = ""
    grid_ref: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with Sabine-calibrated uniform wall absorption."""

    dimensions: tuple[float, float, float]
    rt60: float
    max_reflection_order: int = 3
    array_center: tuple[float, float, float] | None = None

    def __post_init__(self):
        dims = tuple(float(x) for x in self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        if any(d <= 0 for d in dims):
            raise ConfigError(f"room dimensions must be positive, got {dims}")
        if self.rt60 <= 0:
            raise ConfigError(f"rt60 must be positive, got {self.rt60}")
        if self.max_reflection_order < 0 or self.max_reflection_order > 6:
            raise ConfigError("max_reflection_order must be in [0, 6]")
        if self.array_center is None:
            object.__setattr__(self, "array_center", tuple(d / 2 for d in dims))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.array_center, dtype=float)


@dataclass(frozen=True)
class SceneSpec:
    """Source layout and signal model for one synthesized scene.

    `directions` may be omitted, in which case unit directions are drawn
    uniformly (subject to the room boundary) from the seed. `activity`,
    `frame_hop_s` and `tail_rel` extend the plain Gaussian surrogate with
    time-frequency-sparse amplitudes, per-image frame delays, and a diffuse
    late-field term; all three default to off.
    """

    n_sources: int
    distance_m: float
    room: RoomSpec | None = None        # None = free field
    frames: int = 32
    snr_db: float = 30.0
    seed: int = 0
    directions: tuple[tuple[float, float, float], ...] | None = None
    activity: float = 1.0
    frame_hop_s: float = 0.0
    tail_rel: float = 0.0
    min_separation_deg: float = 0.0

    def __post_init__(self):
        if self.n_sources < 1:
            raise ConfigError("scene needs at least one source")
        if self.frames < 1:
            raise ConfigError("scene needs at least one frame")
        if self.distance_m <= 0:
            raise ConfigError("source distance must be positive")
        if not 0.0 < self.activity <= 1.0:
            raise ConfigError("activity must be in (0, 1]")

    @staticmethod
    def from_json(doc: str | dict) -> "SceneSpec":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid scene JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("scene spec must be a JSON object")
        sources = doc.get("sources", {})
        room = None
        if not doc.get("free_field", False):
            rm = doc.get("room")
            if rm is None:
                raise ConfigError('scene needs either "room" or "free_field": true')
            room = RoomSpec(
                dimensions=tuple(rm["dims_m"]),
                rt60=float(rm["rt60_s"]),
                max_reflection_order=int(rm.get("max_order", 3)),
                array_center=tuple(rm["array_center"]) if "array_center" in rm else None,
            )
        dirs = sources.get("directions")
        return SceneSpec(
            n_sources=int(sources.get("count", 1)),
            distance_m=float(sources.get("distance_m", 2.5)),
            room=room,
            frames=int(doc.get("frames", 32)),
            snr_db=float(doc.get("snr_db", 30.0)),
            seed=int(doc.get("seed", 0)),
            directions=tuple(tuple(map(float, d)) for d in dirs) if dirs else None,
            activity=float(doc.get("activity", 1.0)),
            frame_hop_s=float(doc.get("frame_hop_s", 0.0)),
            tail_rel=float(doc.get("tail_rel", 0.0)),
            min_separation_deg=float(doc.get("min_separation_deg", 0.0)),
        )


@dataclass(frozen=True)
class ObservationBlock:
    """Per-frequency microphone snapshots with the generating ground truth."""

    frequency: float
    snapshots: np.ndarray                     # (M, T) complex128
    truth_directions: np.ndarray              # (S, 3) unit vectors
    truth_distances: np.ndarray               # (S,) meters
    seed: int = 0


def wavenumber(f: float) -> float:
    return 2.0 * np.pi * f / SPEED_OF_SOUND


def steering_vector(positions: np.ndarray, direction: Sequence[float], f: float) -> np.ndarray:
    """Far-field steering for a wave arriving from `direction` (toward source)."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    u = -d
    return np.exp(1j * wavenumber(f) * (np.asarray(positions) @ u))


def plane_wave_matrix(array: MicArray, grid: DirectionGrid, f: float) -> TransferMatrix:
    """h[m, n] = exp(+i k u_n . r_m), u_n the propagation vector of grid direction n."""
    if f <= 0:
        raise ConfigError(f"frequency must be positive, got {f}")
    u = -grid.directions
    entries = np.exp(1j * wavenumber(f) * (array.positions @ u.T))
    return TransferMatrix(entries, f, array_ref=f"{array.name}:M={len(array)}", grid_ref=grid.ref)


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform Sabine absorption alpha = 0.161 V / (S RT60), clamped to (0, 1]."""
    lx, ly, lz = room.dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * room.rt60)
    if alpha > 1.0:
        import warnings

        warnings.warn(
            f"Sabine absorption {alpha:.3f} > 1: room too small for RT60={room.rt60}s, clamping",
            stacklevel=2,
        )
        return 1.0
    return alpha


def _axis_images(length: float, coord: float, max_order: int) -> list[tuple[float, int]]:
    """1-D image coordinates with reflection counts, up to max_order bounces."""
    out = []
    for m in range(-(max_order + 1), max_order + 2):
        for q in (0, 1):
            refl = abs(m - q) + abs(m)
            if refl <= max_order:
                out.append((2.0 * m * length + (1 - 2 * q) * coord, refl))
    return out


def image_sources(room: RoomSpec, src: Sequence[float]) -> list[tuple[np.ndarray, int]]:
    """All image-source positions with total reflection counts <= max order."""
    src = np.asarray(src, dtype=float)
    per_axis = [_axis_images(room.dimensions[i], src[i], room.max_reflection_order) for i in range(3)]
    images = []
    for x, rx in per_axis[0]:
        for y, ry in per_axis[1]:
            if rx + ry > room.max_reflection_order:
                continue
            for z, rz in per_axis[2]:
                order = rx + ry + rz
                if order <= room.max_reflection_order:
                    images.append((np.array([x, y, z]), order))
    return images


def _check_inside(room: RoomSpec, point: Sequence[float], what: str) -> None:
    p = np.asarray(point, dtype=float)
    dims = np.asarray(room.dimensions)
    if np.any(p <= 0.0) or np.any(p >= dims):
        raise SceneError(f"{what} at {p.tolist()} is outside the {dims.tolist()} m room")


def image_source_rtf(room: RoomSpec, src: Sequence[float], mic: Sequence[float], f: float) -> complex:
    """Room transfer function between one source and one microphone.

    Sum over images of beta**order * exp(+i k d) / (4 pi d) with
    beta = sqrt(1 - alpha). The +i k d phase keeps the far-field limit
    consistent with `plane_wave_matrix` (see module docstring).
    """
    _check_inside(room, src, "source")
    _check_inside(room, mic, "microphone")
    alpha = sabine_absorption(room)
    beta = np.sqrt(max(0.0, 1.0 - alpha))
    k = wavenumber(f)
    mic = np.asarray(mic, dtype=float)
    total = 0.0 + 0.0j
    for pos, order in image_sources(room, src):
        d = float(np.linalg.norm(pos - mic))
        if d < 1e-6:
            raise SceneError(f"source image coincides with microphone (d={d:.2e} m)")
        total += (beta ** order) * np.exp(1j * k * d) / (4.0 * np.pi * d)
    return complex(total)


def _image_steering(room: RoomSpec, src: np.ndarray, mics: np.ndarray, f: float,
                    beta: float) -> list[tuple[np.ndarray, int, float]]:
    """Per-image steering vectors over all mics: (vector, order, mean distance)."""
    k = wavenumber(f)
    out = []
    for pos, order in image_sources(room, src):
        d = np.linalg.norm(mics - pos[None, :], axis=1)
        if np.any(d < 1e-6):
            raise SceneError("source image coincides with a microphone")
        g = (beta ** order) * np.exp(1j * k * d) / (4.0 * np.pi * d)
        out.append((g, order, float(d.mean())))
    return out


def draw_directions(rng: np.random.Generator, n: int, min_separation_deg: float = 0.0,
                    room: RoomSpec | None = None, distance: float = 1.0,
                    margin: float = 0.05, max_tries: int = 100_000) -> np.ndarray:
    """Uniform unit directions, optionally separated and room-feasible.

    When a room is given, directions whose source point at `distance` from
    the array center falls within `margin` of a wall are rejected.
    """
    dirs: list[np.ndarray] = []
    sep = np.radians(min_separation_deg)
    for _ in range(max_tries):
        if len(dirs) == n:
            break
        v = rng.standard_normal(3)
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            continue
        v = v / nv
        if room is not None:
            p = room.center + distance * v
            dims = np.asarray(room.dimensions)
            if np.any(p < margin) or np.any(p > dims - margin):
                continue
        if sep > 0 and any(angular_distance(v, u) < sep for u in dirs):
            continue
        dirs.append(v)
    if len(dirs) < n:
        raise SceneError(
            f"could not place {n} sources at distance {distance} m "
            f"with {min_separation_deg} deg separation inside the room"
        )
    return np.array(dirs)


def synthesize_scene(scene: SceneSpec, array: MicArray, freqs: Sequence[float],
                     seed: int | Sequence[int] | None = None) -> list[ObservationBlock]:
    """Per-frequency snapshots for point sources in a room (or free field).

    Per frequency, each source gets i.i.d. circular Gaussian frame amplitudes
    of unit average power, propagated through the image-source model (free
    field: far-field plane-wave steering); blocks then pass through
    `add_noise`. Deterministic given (scene, seed).
    """
    if seed is None:
        seed = scene.seed
    base = seed if isinstance(seed, (list, tuple)) else [int(seed)]
    base = [int(x) for x in base]

    if scene.directions is not None:
        dirs = np.asarray(scene.directions, dtype=float)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        if len(dirs) != scene.n_sources:
            raise ConfigError("directions list must match sources.count")
    else:
        rng_dirs = np.random.default_rng(np.random.SeedSequence(base + [0x5EED]))
        dirs = draw_directions(rng_dirs, scene.n_sources, scene.min_separation_deg,
                               room=scene.room, distance=scene.distance_m)

    room = scene.room
    if room is not None:
        for v in dirs:
            _check_inside(room, room.center + scene.distance_m * v, "source")
        for r in array.positions:
            _check_inside(room, room.center + r, "microphone")
        beta = np.sqrt(max(0.0, 1.0 - sabine_absorption(room)))

    T = scene.frames
    max_delay = 8 if scene.frame_hop_s > 0 else 0
    blocks = []
    for fi, f in enumerate(freqs):
        ss = np.random.SeedSequence(base + [1 + fi])
        rng_amp, rng_tail = (np.random.default_rng(c) for c in ss.spawn(2))
        Y = np.zeros((len(array), T), dtype=complex)
        for v in dirs:
            a = (rng_amp.standard_normal(T + max_delay)
                 + 1j * rng_amp.standard_normal(T + max_delay)) / np.sqrt(2.0)
            if scene.activity < 1.0:
                mask = rng_amp.random(T + max_delay) < scene.activity
                a = a * mask / np.sqrt(scene.activity)
            if room is None:
                Y += np.outer(steering_vector(array.positions, v, f), a[max_delay:max_delay + T])
                continue
            src = room.center + scene.distance_m * v
            mics = room.center + array.positions
            d_direct = scene.distance_m
            g_early = np.zeros(len(array), dtype=complex)
            for g, order, d_mean in _image_steering(room, src, mics, f, beta):
                g_early += g
                if scene.frame_hop_s > 0:
                    lag = (d_mean - d_direct) / (SPEED_OF_SOUND * scene.frame_hop_s)
                    delay = int(np.clip(np.floor(lag), 0, max_delay))
                else:
                    delay = 0
                Y += np.outer(g, a[max_delay - delay:max_delay - delay + T])
            if scene.tail_rel > 0:
                n_tail = 128
                tdirs = rng_tail.standard_normal((n_tail, 3))
                tdirs /= np.linalg.norm(tdirs, axis=1, keepdims=True)
                A = np.exp(1j * wavenumber(f) * (array.positions @ (-tdirs.T)))
                amp = np.sqrt(scene.tail_rel * (np.abs(g_early) ** 2).mean() / n_tail)
                at = amp * (rng_tail.standard_normal((n_tail, T))
                            + 1j * rng_tail.standard_normal((n_tail, T))) / np.sqrt(2.0)
                Y += A @ at
        block = ObservationBlock(
            frequency=float(f),
            snapshots=Y,
            truth_directions=dirs,
            truth_distances=np.full(len(dirs), scene.distance_m),
            seed=base[0],
        )
        blocks.append(add_noise(block, scene.snr_db, seed=base + [100_000 + fi]))
    return blocks


def add_noise(block: ObservationBlock, snr_db: float, seed: int | Sequence[int] = 0) -> ObservationBlock:
    """Add spatially white complex Gaussian noise at the requested block SNR.

    Noise power is set against the average per-entry signal power, so the
    empirical SNR of a large block matches `snr_db`. Infinite SNR returns
    the block unchanged.
    """
    if np.isinf(snr_db):
        return block
    if not np.isfinite(snr_db):
        raise ConfigError("snr_db must be finite or +inf")
    base = seed if isinstance(seed, (list, tuple)) else [int(seed)]
    rng = np.random.default_rng(np.random.SeedSequence([int(x) for x in base] + [0xA0]))
    signal_power = float((np.abs(block.snapshots) ** 2).mean())
    noise_power = signal_power * 10.0 ** (-snr_db / 10.0)   # underflows to 0 for huge SNR
    shape = block.snapshots.shape
    noise = np.sqrt(noise_power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return replace(block, snapshots=block.snapshots + noise)
