"""Run configuration: named imaging modes, JSON round-trip, manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class RunConfig:
    """All tunables of a scan + reconstruction run.

    Angles are degrees and lengths nanometers here (file-friendly); the
    geometry builders convert to SI.
    """

    mode: str = "sectional"
    isotope: str = "13C"
    donor_depth_nm: float = 2.5
    theta_max_deg: float = 63.0
    d_theta_deg: float = 1.5
    d_phi_deg: float = 6.0
    r_max_nm: float = 1.4
    d_r_nm: float = 0.025
    voxel_pitch_nm: float = 0.05
    b_ac_surface_t: float = 0.5e-6
    rho_detect: float = 0.2
    rho_control: float = 0.2
    coupling_scale: float = 1.0 / 3.0
    t_control_cap_s: float | None = None
    n_measure: int = 1000
    t_measure_s: float = 5e-6
    probe_t2_s: float = 0.1
    target_t_rho_s: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("sectional", "extended", "custom"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("donor_depth_nm", "theta_max_deg", "d_theta_deg",
                     "d_phi_deg", "r_max_nm", "d_r_nm", "voxel_pitch_nm",
                     "b_ac_surface_t", "t_measure_s", "probe_t2_s",
                     "target_t_rho_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.rho_detect <= 1 or not 0 < self.rho_control <= 1:
            raise ValueError("rho factors must lie in (0, 1]")
        if not 0 < self.coupling_scale <= 1:
            raise ValueError("coupling_scale must lie in (0, 1]")
        if self.n_measure < 1:
            raise ValueError("n_measure must be >= 1")
        if self.theta_max_deg >= 90:
            raise ValueError("theta_max_deg must stay below 90")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def sectional_config(**overrides) -> RunConfig:
    """Carbon-13 sectional imaging defaults (about 2.8 s per orientation)."""
    return RunConfig(**{**dict(mode="sectional"), **overrides})


def extended_config(**overrides) -> RunConfig:
    """Nitrogen-14 extended imaging defaults: shallower cap, longer reach,
    control time capped near the target coherence time."""
    base = dict(mode="extended", isotope="14N", theta_max_deg=45.0,
                d_theta_deg=1.4, d_phi_deg=5.0, r_max_nm=4.0, d_r_nm=0.05,
                voxel_pitch_nm=0.075, b_ac_surface_t=1.25e-6,
                t_control_cap_s=0.13)
    return RunConfig(**{**base, **overrides})


_MODES = {"sectional": sectional_config, "extended": extended_config}


def config_from_dict(doc: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    mode = doc.get("mode", "sectional")
    if mode in _MODES:
        return _MODES[mode](**{k: v for k, v in doc.items() if k != "mode"})
    return RunConfig(**doc)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.as_dict(), fh, indent=1)


def scan_geometry(cfg: RunConfig):
    from .scan import ScanGeometry
    return ScanGeometry(theta_max=math.radians(cfg.theta_max_deg),
                        d_theta=math.radians(cfg.d_theta_deg),
                        d_phi=math.radians(cfg.d_phi_deg),
                        r_min=0.0, r_max=cfg.r_max_nm * 1e-9,
                        d_r=cfg.d_r_nm * 1e-9)


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(cfg: RunConfig, inputs: dict[str, str] | None = None,
                 outputs: dict[str, str] | None = None) -> dict:
    """Provenance record: config plus sha256 digests of named files."""
    doc = {"config": cfg.as_dict()}
    for key, table in (("inputs", inputs), ("outputs", outputs)):
        if table:
            doc[key] = {name: {"path": p, "sha256": file_sha256(p)}
                        for name, p in table.items()}
    return doc
