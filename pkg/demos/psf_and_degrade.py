"""
From camera optics to a simulated satellite pixel
=================================================

Q ties the diffraction blur of a lens to the pixel pitch of its sensor.
Here we compute Q for the drone camera, look at how the PSF spreads as Q
grows, and then degrade a 0.05 m/px photo to 0.5 m/px.
"""

import sys
from pathlib import Path

import numpy as np

from satsim import CameraSpec, DegradeConfig, degrade, make_psf, q_from_camera, sample_photo, save_raster

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out_dir.mkdir(exist_ok=True)

# 20 mm lens, 5 mm aperture, 6.17 mm sensor across 4000 px
drone = CameraSpec(focal_length=0.020, aperture_diameter=0.005, pixel_pitch=6.17e-3 / 4000)
print(f"drone camera Q = {q_from_camera(drone):.3f}")

# the PSF is drawn on the fine grid, ten input pixels per output pixel
for q in (0.5, 1.0, 2.0, 4.34):
    k = make_psf(q, phi=10)
    w = k.weights
    c = k.size // 2
    radius = np.sqrt((w * ((np.arange(k.size) - c)[:, None] ** 2 + (np.arange(k.size) - c)[None, :] ** 2)).sum())
    print(f"q={q:<5} support={k.size:>3}  centre={k.centre_weight:.5f}  rms radius={radius:6.2f} px"
          f"  energy kept={k.energy_fraction:.3f}")

photo = sample_photo(gsd=0.05)
sim = degrade(photo, DegradeConfig.from_gsd(4.34, source_gsd=0.05, target_gsd=0.5))
print(f"{photo.width}x{photo.height} @ {photo.gsd} m/px  ->  {sim.width}x{sim.height} @ {sim.gsd} m/px")

save_raster(photo, out_dir / "uav.png")
save_raster(sim, out_dir / "sim_q4.34.png")
print("wrote", out_dir / "uav.png", "and", out_dir / "sim_q4.34.png")
