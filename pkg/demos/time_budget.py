"""Acquisition-time arithmetic and donor-depth tradeoff.

Reproduces the per-orientation and total acquisition times of the two
standard imaging modes, and the surface-hyperfine reach that sets the
optimal donor depth. Run:

    python3 demos/time_budget.py
"""

import numpy as np

from nanomri.config import extended_config, scan_geometry, sectional_config
from nanomri.hyperfine import a_max_vs_depth
from nanomri.probe import (calibrated_model, density_from_model,
                           threshold_density)
from nanomri.scan import build_scan, estimate_time
from nanomri.signal_model import ShotNoiseModel

for label, cfg in (("sectional", sectional_config()),
                   ("extended", extended_config())):
    density = threshold_density(density_from_model(
        calibrated_model(cfg.donor_depth_nm * 1e-9)))
    plan = build_scan(scan_geometry(cfg), isotope=cfg.isotope)
    est = estimate_time(plan, density,
                        ShotNoiseModel(cfg.n_measure, cfg.t_measure_s),
                        b_ac_surface=cfg.b_ac_surface_t,
                        t_control_cap=cfg.t_control_cap_s)
    print(f"{label} mode ({cfg.isotope}, depth {cfg.donor_depth_nm} nm):")
    print(f"  {est.n_orientations} orientations x "
          f"{est.per_orientation:.3f} s = {est.total / 3600.0:.2f} h total")

print("\nmaximum surface-hydrogen hyperfine coupling vs donor depth:")
depths = np.linspace(1e-9, 4e-9, 7)
for d, a_max in zip(depths, a_max_vs_depth(depths)):
    marker = "  <- below 250 krad/s guideline" if a_max < 2.5e5 else ""
    print(f"  depth {d * 1e9:4.1f} nm: a_max {a_max / 1e3:9.1f} krad/s{marker}")
