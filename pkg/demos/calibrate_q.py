"""
Calibrating Q against a reference image
=======================================

Given a drone survey and a real satellite patch of the same ground, we look
for the Q whose simulated image has the same Laplacian variance. Without
real satellite data we fake the reference by degrading the photo at a known
Q and check that calibration finds it again.
"""

from satsim import DegradeConfig, calibrate_q, degrade, sample_photo
from satsim.calibration import SweepConfig

photo = sample_photo(gsd=0.05)
true_q = 3.1
reference = degrade(photo, DegradeConfig.from_gsd(true_q, 0.05, 0.5))

result = calibrate_q([photo], reference, phi=10, cfg=SweepConfig(q_min=0.5, q_max=6.0, q_step=0.5))
print(f"reference LV   {result.lv_target:.3f}")
print(f"recovered Q    {result.q_star:.4f}  (true {true_q})")
print(f"LV at that Q   {result.lv_achieved:.3f}")

print("\nsweep (the curve the crossing is read from):")
for q, lv in result.sweep:
    bar = "#" * int(60 * lv / result.sweep[0][1])
    print(f"  {q:4.1f} {lv:9.2f} {bar}")
