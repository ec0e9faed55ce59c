"""SVD modal decomposition of the transfer operator and subspace analysis.

The thin SVD H = U S V^H orders microphone modes (U) and field modes (V)
by coupling strength. Truncating to the top K modes and whitening gives a
row-orthonormal dictionary for sparse recovery; principal angles against
spherical-harmonic subspaces quantify how far the learned modes are from
classical SH processing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import sph_harm_y

from .errors import NumericalError, RankDeficiencyError
from .geometry import DirectionGrid, MicArray, angular_distance
from .propagation import TransferMatrix, plane_wave_matrix

SIGMA_FLOOR_REL = 1e-6          # whitening refused below this fraction of sigma_1
DEGENERACY_REL = 1e-8           # singular values closer than this are one cluster


@dataclass(frozen=True)
class ModalBasis:
    """Thin SVD factors of a transfer matrix, with a truncation rank K."""

    U: np.ndarray                 # (M, r) orthonormal columns
    sigma: np.ndarray             # (r,) descending, nonnegative
    V: np.ndarray                 # (N, r) orthonormal columns
    K: int
    frequency: float
    array_ref: str = ""
    grid_ref: str = ""

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def degenerate_clusters(self) -> list[list[int]]:
        """Groups of singular-value indices equal within DEGENERACY_REL.

        Column identity is arbitrary inside a cluster; compare subspaces,
        never individual columns.
        """
        clusters: list[list[int]] = []
        current = [0]
        for i in range(1, self.rank):
            ref = self.sigma[current[0]]
            if ref > 0 and abs(self.sigma[i] - ref) / ref <= DEGENERACY_REL:
                current.append(i)
            else:
                clusters.append(current)
                current = [i]
        clusters.append(current)
        return clusters


@dataclass(frozen=True)
class SHBasis:
    """Real spherical harmonics sampled on a grid, columns orthonormalized."""

    order: int
    matrix: np.ndarray            # (N, (order+1)**2)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[1]


def svd_decompose(H: TransferMatrix) -> ModalBasis:
    """Thin SVD with singular values descending; K initialized to full rank."""
    entries = H.entries
    if not np.all(np.isfinite(entries.real)) or not np.all(np.isfinite(entries.imag)):
        raise NumericalError(f"transfer matrix at {H.frequency} Hz has non-finite entries")
    try:
        U, s, Vh = np.linalg.svd(entries, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed to converge at {H.frequency} Hz") from exc
    return ModalBasis(U=U, sigma=s, V=Vh.conj().T, K=len(s),
                      frequency=H.frequency, array_ref=H.array_ref, grid_ref=H.grid_ref)


def truncate(basis: ModalBasis, K: int) -> ModalBasis:
    """Keep the K dominant modes (Eckart-Young best rank-K factors)."""
    if not 1 <= K <= basis.rank:
        raise ValueError(f"K must be in [1, {basis.rank}], got {K}")
    return replace(basis, U=basis.U[:, :K], sigma=basis.sigma[:K], V=basis.V[:, :K], K=K)


def whiten(basis: ModalBasis, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Whitened observations and dictionary: (S_K^-1 U_K^H y, V_K^H).

    The whitened model y~ = H~ x holds exactly for noiseless on-grid data
    and the dictionary rows are orthonormal. Modes with sigma below
    SIGMA_FLOOR_REL * sigma_1 are refused: inverting them amplifies noise
    without bound.
    """
    K = basis.K
    sigma = basis.sigma[:K]
    floor = SIGMA_FLOOR_REL * (basis.sigma[0] if basis.rank else 0.0)
    bad = np.nonzero(sigma <= floor)[0]
    if bad.size:
        raise RankDeficiencyError(
            f"mode {int(bad[0])} has sigma {sigma[bad[0]]:.3e} below the floor "
            f"{floor:.3e} at {basis.frequency} Hz",
            mode_index=int(bad[0]),
        )
    y = np.asarray(y)
    single = y.ndim == 1
    if single:
        y = y[:, None]
    y_w = (basis.U[:, :K].conj().T @ y) / sigma[:, None]
    dictionary = basis.V[:, :K].conj().T
    return (y_w[:, 0] if single else y_w), dictionary


def _real_sh_columns(directions: np.ndarray, order: int) -> np.ndarray:
    """Real orthonormal SH sampled at unit directions, (N, (order+1)^2)."""
    x, y, z = directions.T
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(y, x)
    cols = []
    for n in range(order + 1):
        for m in range(-n, n + 1):
            Y = sph_harm_y(n, abs(m), theta, phi)
            if m == 0:
                cols.append(Y.real)
            elif m > 0:
                cols.append(np.sqrt(2.0) * (-1.0) ** m * Y.real)
            else:
                cols.append(np.sqrt(2.0) * (-1.0) ** m * Y.imag)
    return np.stack(cols, axis=1)


def sh_matrix(grid: DirectionGrid, order: int) -> SHBasis:
    """Real SH basis on the grid, QR-orthonormalized in the discrete inner product."""
    if not 0 <= order <= 6:
        raise ValueError(f"SH order must be in [0, 6], got {order}")
    n_modes = (order + 1) ** 2
    if len(grid) < n_modes:
        raise ValueError(f"grid with {len(grid)} directions cannot carry {n_modes} SH modes")
    raw = _real_sh_columns(grid.directions, order)
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))            # deterministic column signs
    return SHBasis(order=order, matrix=q)


def _check_orthonormal(A: np.ndarray, name: str) -> None:
    gram = A.conj().T @ A
    dev = np.abs(gram - np.eye(A.shape[1])).max()
    if dev > 1e-6:
        raise ValueError(f"{name} columns are not orthonormal (Gram deviation {dev:.2e})")


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Canonical angles (radians, ascending) between equal-dimension subspaces."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"subspace dimensions differ: {A.shape} vs {B.shape}")
    _check_orthonormal(A, "A")
    _check_orthonormal(B, "B")
    s = np.linalg.svd(A.conj().T @ B, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))[::-1]


def mean_principal_angle(A: np.ndarray, B: np.ndarray) -> float:
    """Arithmetic mean of the principal angles, in degrees."""
    return float(np.degrees(principal_angles(A, B)).mean())


def sh_subspace(grid: DirectionGrid, n_modes: int) -> np.ndarray:
    """First `n_modes` orthonormal SH columns (complete orders first)."""
    order = 0
    while (order + 1) ** 2 < n_modes:
        order += 1
    return sh_matrix(grid, order).matrix[:, :n_modes].astype(complex)


def angle_sweep(arrays: Iterable[MicArray], grid: DirectionGrid,
                freqs: Sequence[float], K_list: Sequence[int]) -> list[dict]:
    """Mean principal angle between V_K and the matching SH subspace.

    Returns one row per (array, frequency, K) as dicts with keys
    array, frequency, K, mean_angle_deg.
    """
    rows = []
    for array in arrays:
        for f in freqs:
            basis = svd_decompose(plane_wave_matrix(array, grid, f))
            for K in K_list:
                VK = truncate(basis, K).V
                angle = mean_principal_angle(VK, sh_subspace(grid, K))
                rows.append({"array": array.name, "frequency": float(f),
                             "K": int(K), "mean_angle_deg": angle})
    return rows


def directivity_index(basis_or_array: ModalBasis | MicArray, grid: DirectionGrid,
                      f: float, steering: Sequence[float]) -> float:
    """Directivity index (dB) of the rank-K matched-field beamformer.

    The beamformer is the steering row of the truncated pseudoinverse, so its
    grid response is row n0 of V_K V_K^H. DI compares the response power at
    the steered vertex against the uniformly weighted average over the grid.
    """
    if isinstance(basis_or_array, MicArray):
        basis = svd_decompose(plane_wave_matrix(basis_or_array, grid, f))
    else:
        basis = basis_or_array
    n0 = grid.nearest_vertex(steering)
    max_neighbor = max(
        angular_distance(grid.directions[n0], grid.directions[j]) for j in grid.adjacency[n0]
    )
    if angular_distance(steering, grid.directions[n0]) > max_neighbor:
        raise ValueError("steering direction is farther than one grid cell from any vertex")
    VK = basis.V[:, :basis.K]
    response = VK @ VK[n0].conj()             # b(Omega_q) over the grid
    num = np.abs(response[n0]) ** 2
    mean_power = float((np.abs(response) ** 2).mean())
    if num == 0 or mean_power == 0:
        raise NumericalError("beamformer response vanished at the steering vertex")
    return float(10.0 * np.log10(num / mean_power))
