"""Peak extraction and matching for reconstructed voxel density images."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .inversion import VoxelGrid


@dataclass(frozen=True)
class Peak:
    position: np.ndarray   # (3,) voxel center, m
    value: float
    index: tuple           # (ix, iy, iz)


def find_peaks(grid: VoxelGrid, density, threshold_frac: float = 0.25,
               include_edges: bool = False, refine: bool = True) -> list[Peak]:
    """Strict local maxima over the 26-neighborhood of each voxel.

    A voxel is a peak if its value exceeds all 26 neighbors and is at
    least threshold_frac of the global maximum. Edge voxels lack a full
    neighborhood and are excluded unless include_edges is set. With
    refine, interior peak positions are sharpened to the intensity
    centroid of the surrounding 3x3x3 block (sub-voxel accuracy).
    """
    vol = grid.as_volume(np.asarray(density, dtype=float))
    if not 0.0 <= threshold_frac <= 1.0:
        raise ValueError("threshold_frac must lie in [0, 1]")
    vmax = vol.max()
    if vmax <= 0:
        return []
    nx, ny, nz = vol.shape
    pad = np.full((nx + 2, ny + 2, nz + 2), -np.inf)
    pad[1:-1, 1:-1, 1:-1] = vol
    is_max = np.ones(vol.shape, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                nb = pad[1 + dx:nx + 1 + dx, 1 + dy:ny + 1 + dy,
                         1 + dz:nz + 1 + dz]
                is_max &= vol > nb
    is_max &= vol >= threshold_frac * vmax
    if not include_edges:
        edge = np.zeros(vol.shape, dtype=bool)
        edge[0, :, :] = edge[-1, :, :] = True
        edge[:, 0, :] = edge[:, -1, :] = True
        edge[:, :, 0] = edge[:, :, -1] = True
        is_max &= ~edge
    peaks = []
    for ix, iy, iz in zip(*np.nonzero(is_max)):
        idx = np.array([ix, iy, iz], dtype=float)
        interior = (0 < ix < nx - 1) and (0 < iy < ny - 1) and (0 < iz < nz - 1)
        if refine and interior:
            block = np.clip(vol[ix - 1:ix + 2, iy - 1:iy + 2, iz - 1:iz + 2],
                            0.0, None)
            ox, oy, oz = np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1],
                                     indexing="ij")
            w = block.sum()
            if w > 0:
                idx = idx + np.array([(ox * block).sum(),
                                      (oy * block).sum(),
                                      (oz * block).sum()]) / w
        pos = grid.origin + (idx + 0.5) * grid.pitch
        peaks.append(Peak(position=pos, value=float(vol[ix, iy, iz]),
                          index=(int(ix), int(iy), int(iz))))
    peaks.sort(key=lambda p: -p.value)
    return peaks


def iso_contour_mask(grid: VoxelGrid, density, level_frac: float = 0.5):
    """Boolean volume of voxels at or above level_frac of the maximum."""
    vol = grid.as_volume(np.asarray(density, dtype=float))
    return vol >= level_frac * vol.max()


@dataclass
class MatchReport:
    pairs: list            # (peak_idx, true_idx, distance)
    unmatched_peaks: list
    unmatched_truth: list
    mean_deviation: float  # mean distance over matched pairs, m

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    def as_dict(self) -> dict:
        return {"pairs": [[int(i), int(j), float(d)] for i, j, d in self.pairs],
                "unmatched_peaks": [int(i) for i in self.unmatched_peaks],
                "unmatched_truth": [int(j) for j in self.unmatched_truth],
                "mean_deviation_m": self.mean_deviation,
                "n_matched": self.n_matched}


def match_peaks(peaks, true_positions, r_cut: float, *,
                optimal: bool = False) -> MatchReport:
    """One-to-one matching of peak positions to true sites within r_cut.

    Default is greedy in ascending pair distance; optimal uses a full
    assignment solve (helpful when sites sit closer than the cutoff).
    """
    ppos = np.array([p.position for p in peaks]).reshape(-1, 3)
    tpos = np.atleast_2d(np.asarray(true_positions, dtype=float))
    if ppos.size == 0 or tpos.size == 0:
        return MatchReport([], list(range(len(peaks))),
                           list(range(tpos.shape[0] if tpos.size else 0)),
                           float("nan"))
    dist = np.linalg.norm(ppos[:, None, :] - tpos[None, :, :], axis=-1)
    pairs = []
    if optimal:
        from scipy.optimize import linear_sum_assignment
        cost = np.where(dist <= r_cut, dist, 1e6 + dist)
        ri, ci = linear_sum_assignment(cost)
        for i, j in zip(ri, ci):
            if dist[i, j] <= r_cut:
                pairs.append((int(i), int(j), float(dist[i, j])))
    else:
        order = np.dstack(np.unravel_index(np.argsort(dist, axis=None),
                                           dist.shape))[0]
        used_p, used_t = set(), set()
        for i, j in order:
            if dist[i, j] > r_cut:
                break
            if i in used_p or j in used_t:
                continue
            pairs.append((int(i), int(j), float(dist[i, j])))
            used_p.add(int(i))
            used_t.add(int(j))
    matched_p = {i for i, _, _ in pairs}
    matched_t = {j for _, j, _ in pairs}
    mean_dev = (float(np.mean([d for _, _, d in pairs]))
                if pairs else float("nan"))
    return MatchReport(
        pairs=pairs,
        unmatched_peaks=[i for i in range(ppos.shape[0]) if i not in matched_p],
        unmatched_truth=[j for j in range(tpos.shape[0]) if j not in matched_t],
        mean_deviation=mean_dev)


def save_peaks_csv(peaks, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "z_m", "value", "ix", "iy", "iz"])
        for p in peaks:
            w.writerow([*(f"{v:.9e}" for v in p.position),
                        f"{p.value:.9e}", *p.index])


def save_match_report(report: MatchReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=1)
