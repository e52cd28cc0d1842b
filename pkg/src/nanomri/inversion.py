"""Linear inversion of per-slice signal loads into a voxel density image.

Each measured slice contributes one row: the load l = -ln(2 s) is modelled
as the sum over voxels of n_v * w(slice, voxel), where the weight is the
response -ln(1 - S) a unit spin in that voxel would produce. Rows are
sparse after thresholding tiny weights; the system is solved by damped
conjugate-gradient least squares with optional nonnegativity projection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constants import gyromagnetic
from .probe import ProbeDensity, coupling_at
from .signal_model import CoherenceParams, single_spin_response

_IMAGE_MAGIC = b"NMRIV001"


@dataclass(frozen=True)
class VoxelGrid:
    """Cubic voxel grid above the surface; linear index is x-fastest."""

    origin: np.ndarray   # (3,) lower corner, m
    pitch: float         # voxel edge, m
    shape: tuple         # (nx, ny, nz)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.pitch <= 0:
            raise ValueError("voxel pitch must be positive")
        if any(s < 1 for s in self.shape):
            raise ValueError("grid shape must be positive")
        if origin[2] <= 0:
            raise ValueError("grid must sit above the surface (z > 0)")

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def centers(self) -> np.ndarray:
        """(n_voxels, 3) voxel centers, x-fastest ordering."""
        nx, ny, nz = self.shape
        iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx),
                                 indexing="ij")
        idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
        return self.origin[None, :] + (idx + 0.5) * self.pitch

    def index_of(self, point) -> int:
        i = np.floor((np.asarray(point) - self.origin) / self.pitch).astype(int)
        nx, ny, nz = self.shape
        if np.any(i < 0) or i[0] >= nx or i[1] >= ny or i[2] >= nz:
            raise ValueError("point outside the voxel grid")
        return int(i[0] + nx * (i[1] + ny * i[2]))

    def as_volume(self, flat: np.ndarray) -> np.ndarray:
        """Reshape a flat x-fastest vector to (nx, ny, nz)."""
        nx, ny, nz = self.shape
        return np.asarray(flat).reshape(nz, ny, nx).transpose(2, 1, 0)


def grid_for_box(center_xy, z_min, z_max, half_width, pitch) -> VoxelGrid:
    """Grid covering [center-hw, center+hw]^2 x [z_min, z_max]."""
    n_xy = int(round(2 * half_width / pitch))
    n_z = int(round((z_max - z_min) / pitch))
    origin = np.array([center_xy[0] - half_width, center_xy[1] - half_width,
                       z_min])
    return VoxelGrid(origin=origin, pitch=pitch, shape=(n_xy, n_xy, n_z))


_WEIGHT_FLOOR = 1e-9


def build_slice_matrix(records, grid: VoxelGrid, density: ProbeDensity,
                       coherence: CoherenceParams | None = None,
                       isotope: str = "1H",
                       weight_floor: float = _WEIGHT_FLOOR) -> sp.csr_matrix:
    """Sparse forward matrix: entry (s, v) = -ln(1 - S) for a unit spin.

    records carry the slice geometry and schedule used during acquisition;
    the voxel coupling k(v) is recomputed per slice orientation. Entries
    below weight_floor (relative to the row maximum) are dropped.
    """
    from .probe import FieldOrientation
    from .signal_model import ControlSchedule

    coherence = coherence or CoherenceParams()
    gamma_n = gyromagnetic(isotope).gamma
    centers = grid.centers()
    # group records by orientation so couplings are computed once per group
    by_orient = {}
    for i, rec in enumerate(records):
        by_orient.setdefault((rec.theta, rec.phi), []).append(i)
    entries = [None] * len(records)
    for (theta, phi), idxs in by_orient.items():
        orient = FieldOrientation(theta, phi)
        k = coupling_at(density, centers, orient, gamma_n)
        for i in idxs:
            rec = records[i]
            sched = ControlSchedule(t_detect=rec.t_detect,
                                    t_control=rec.t_control, b_ac=rec.b_ac)
            s = single_spin_response(rec.gamma, k, sched, coherence, gamma_n)
            w = -np.log1p(-np.clip(s, 0.0, 1.0 - 1e-12))
            w[w < weight_floor * max(w.max(), 1e-300)] = 0.0
            entries[i] = sp.csr_matrix(w)
    mat = sp.vstack(entries, format="csr")
    mat.eliminate_zeros()
    return mat


def build_slice_matrix_dense(records, grid: VoxelGrid, density: ProbeDensity,
                             coherence: CoherenceParams | None = None,
                             isotope: str = "1H",
                             dtype=np.float32) -> np.ndarray:
    """Dense variant of build_slice_matrix, assembled row-block by row-block.

    For large scans the slice matrix is effectively fully dense; building
    it straight into a float32 array halves memory and skips the sparse
    packing overhead.
    """
    from .probe import FieldOrientation
    from .signal_model import ControlSchedule

    coherence = coherence or CoherenceParams()
    gamma_n = gyromagnetic(isotope).gamma
    centers = grid.centers()
    out = np.zeros((len(records), grid.n_voxels), dtype=dtype)
    by_orient = {}
    for i, rec in enumerate(records):
        by_orient.setdefault((rec.theta, rec.phi), []).append(i)
    for (theta, phi), idxs in by_orient.items():
        orient = FieldOrientation(theta, phi)
        k = coupling_at(density, centers, orient, gamma_n)
        for i in idxs:
            rec = records[i]
            sched = ControlSchedule(t_detect=rec.t_detect,
                                    t_control=rec.t_control, b_ac=rec.b_ac)
            s = single_spin_response(rec.gamma, k, sched, coherence, gamma_n)
            out[i] = -np.log1p(-np.clip(s, 0.0, 1.0 - 1e-12))
    return out


@dataclass
class InversionResult:
    density: np.ndarray          # flat voxel occupancies
    converged: bool
    n_iter: int
    residual_norm: float
    residual_history: np.ndarray


def spin_loads(records, coherence: CoherenceParams) -> np.ndarray:
    """Per-slice loads with the deterministic probe-decay baseline removed.

    The raw load -ln(2 s) contains t_detect / T2_probe from the probe echo
    even with no targets present; the slice matrix models only the target
    response, so that baseline must come off before inversion. Negative
    values (shot-noise fluctuations below the baseline) are kept so the
    noise stays zero-mean for the least-squares fit.
    """
    return np.array([rec.load - rec.t_detect / coherence.probe_t2
                     for rec in records])


def invert(matrix, loads, *, damping: float | None = None,
           nonneg: bool = True, max_iter: int = 500,
           tol: float = 1e-6) -> InversionResult:
    """Damped least squares via CGLS with optional nonnegativity projection.

    Solves min ||A x - b||^2 + damping^2 ||x||^2. The default damping is
    1e-3 times the largest row norm of A. With nonneg the iterate is
    projected to x >= 0 after each step (projected CGLS restarts the
    conjugacy whenever the projection clips). Non-convergence is reported
    through the result, not raised.
    """
    A = sp.csr_matrix(matrix)
    # mostly-filled matrices run far faster as dense BLAS operands
    if A.nnz > 0.2 * A.shape[0] * A.shape[1]:
        A = A.toarray()
        row_norms = np.sqrt((A * A).sum(axis=1))
    else:
        row_norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    b = np.asarray(loads, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise ValueError("matrix rows and load vector length differ")
    if damping is None:
        damping = 1e-3 * (row_norms.max() if row_norms.size else 1.0)

    n = A.shape[1]
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return InversionResult(x, True, 0, 0.0, np.zeros(1))

    # CGLS on the damped system [A; damping I] x = [b; 0]
    g = A.T @ (b - A @ x) - damping**2 * x
    p = g.copy()
    gamma_old = g @ g
    history = [np.linalg.norm(b - A @ x)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Ap = A @ p
        denom = Ap @ Ap + damping**2 * (p @ p)
        if denom <= 0:
            break
        alpha = gamma_old / denom
        x_new = x + alpha * p
        clipped = False
        if nonneg and np.any(x_new < 0):
            x_new = np.maximum(x_new, 0.0)
            clipped = True
        x = x_new
        g = A.T @ (b - A @ x) - damping**2 * x
        gamma_new = g @ g
        history.append(float(np.linalg.norm(b - A @ x)))
        if history[-1] <= tol * bnorm:
            converged = True
            break
        if clipped:
            p = g.copy()          # restart conjugacy after projection
        else:
            p = g + (gamma_new / gamma_old) * p
        gamma_old = gamma_new
        if gamma_old == 0:
            converged = True
            break
    return InversionResult(density=x, converged=converged, n_iter=it,
                           residual_norm=history[-1],
                           residual_history=np.array(history))


def invert_sparse(matrix, loads, *, max_support: int = 120,
                  tol_frac: float = 1e-4) -> InversionResult:
    """Nonnegative least squares by active-set growth (Lawson-Hanson).

    Adds the voxel with the largest positive residual correlation, solves
    the unconstrained subproblem on the active set, and clips back to the
    feasible boundary when a coefficient goes negative. Solutions have at
    most max_support occupied voxels, which suits point-like densities far
    better than the smeared minimum-norm iterates of the damped solver
    when the loads are shot-noise dominated.
    """
    A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    b = np.asarray(loads, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise ValueError("matrix rows and load vector length differ")
    n = A.shape[1]
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return InversionResult(x, True, 0, 0.0, np.zeros(1))
    # float32 matvecs are fine for the search; subproblems run in float64
    b_lo = b.astype(A.dtype) if A.dtype == np.float32 else b
    active: list[int] = []
    r = b_lo.copy()
    history = [float(np.linalg.norm(r))]
    w_first = None
    converged = False
    it = 0
    for it in range(1, max_support + 1):
        w = A.T @ r
        if active:
            w[active] = -np.inf
        j = int(np.argmax(w))
        if w_first is None:
            w_first = w[j]
        if w[j] <= tol_frac * max(w_first, 0.0) or w[j] <= 0:
            converged = True
            break
        active.append(j)
        while active:
            sub = A[:, active].astype(np.float64)
            z, *_ = np.linalg.lstsq(sub, b, rcond=None)
            if np.all(z > 0):
                break
            xp = x[active]
            neg = z <= 0
            alpha = np.min(xp[neg] / (xp[neg] - z[neg]))
            xp = xp + alpha * (z - xp)
            x[np.array(active)] = xp
            keep = xp > 1e-12 * max(xp.max(), 1e-300)
            active = [a for a, k in zip(active, keep) if k]
        x[:] = 0.0
        if not active:
            converged = True
            break
        x[np.array(active)] = z
        r = b_lo - A[:, active] @ z.astype(A.dtype)
        history.append(float(np.linalg.norm(b - A[:, active] @ z)))
    return InversionResult(density=x, converged=converged, n_iter=it,
                           residual_norm=history[-1],
                           residual_history=np.array(history))


# ---------------------------------------------------------------------------
# Density image file: JSON header line, then little-endian float32 payload.
# ---------------------------------------------------------------------------

def save_density_image(path: str, grid: VoxelGrid, density: np.ndarray,
                       meta: dict | None = None) -> None:
    flat = np.asarray(density, dtype="<f4").ravel()
    if flat.size != grid.n_voxels:
        raise ValueError("density length does not match grid")
    header = {"origin_m": [float(v) for v in grid.origin],
              "pitch_m": grid.pitch, "shape": list(grid.shape),
              "dtype": "float32", "byte_order": "little",
              "order": "x-fastest"}
    if meta:
        header["meta"] = meta
    hdr = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_IMAGE_MAGIC)
        fh.write(struct.pack("<I", len(hdr)))
        fh.write(hdr)
        fh.write(flat.tobytes())


def load_density_image(path: str) -> tuple[VoxelGrid, np.ndarray, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_IMAGE_MAGIC)) != _IMAGE_MAGIC:
            raise ValueError("not a density image file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        payload = np.frombuffer(fh.read(), dtype="<f4").astype(float)
    grid = VoxelGrid(origin=np.array(header["origin_m"]),
                     pitch=header["pitch_m"], shape=tuple(header["shape"]))
    if payload.size != grid.n_voxels:
        raise ValueError("density payload does not match grid shape")
    return grid, payload, header.get("meta", {})
