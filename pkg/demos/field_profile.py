"""Dipole coupling field of the donor probe.

Prints the on-axis coupling profile for a few donor depths, the magic-angle
null, and the response of the field pattern to a tilt of the background
field. Run from the repository root:

    python3 demos/field_profile.py
"""

import numpy as np

from nanomri.constants import gyromagnetic
from nanomri.probe import (FieldOrientation, calibrated_model, coupling_at,
                           density_from_model, point_dipole_zz, point_probe,
                           threshold_density)

gamma_h = gyromagnetic("1H").gamma
up = FieldOrientation(0.0, 0.0)

print("on-axis ZZ coupling above the donor (point dipole), kHz equiv")
print(f"{'r above surface (nm)':>22s}" + "".join(
    f"  depth {d:.1f} nm" for d in (1.5, 2.5, 3.5)))
for r in np.linspace(0.0, 1.4, 8):
    row = [f"{r:22.2f}"]
    for depth in (1.5e-9, 2.5e-9, 3.5e-9):
        k = point_dipole_zz(np.array([0.0, 0.0, depth + r * 1e-9]),
                            up, gamma_h)
        row.append(f"{k / 1e3:12.2f}")
    print("".join(row))

magic = np.arccos(1.0 / np.sqrt(3.0))
r_vec = 2.5e-9 * np.array([np.sin(magic), 0.0, np.cos(magic)])
print(f"\ncoupling on the magic cone (theta = {np.degrees(magic):.2f} deg): "
      f"{point_dipole_zz(r_vec, up, gamma_h):.3e} rad/s")

# the whole lobe pattern follows the background-field orientation
tilt = FieldOrientation(np.radians(45.0), 0.0)
p = np.array([0.0, 0.0, 2.5e-9])
print(f"on-axis point, upright field:  {point_dipole_zz(p, up, gamma_h):12.1f} rad/s")
print(f"same point, field tilted 45deg: {point_dipole_zz(p, tilt, gamma_h):12.1f} rad/s")

# delocalized donor density vs the point approximation
model = threshold_density(density_from_model(calibrated_model(2.5e-9)))
point = point_probe(2.5e-9)
# surface-frame positions: z measured above the surface, donor below it
pts = np.column_stack([np.zeros(6), np.zeros(6),
                       np.linspace(0.1e-9, 1.4e-9, 6)])
full = coupling_at(model, pts, up, gamma_h)
approx = coupling_at(point, pts, up, gamma_h)
print(f"\ndelocalisation correction on axis ({model.sites.shape[0]} lattice sites):")
for z, a, b in zip(pts[:, 2], full, approx):
    print(f"  r = {1e9 * z:5.2f} nm   full {a:12.1f}   "
          f"point {b:12.1f}   ratio {a / b:.4f}")
