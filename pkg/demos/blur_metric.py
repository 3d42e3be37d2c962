"""
Laplacian variance as a sharpness score
=======================================

The metric convolves the grey image with an 8-neighbour Laplacian and takes
the variance of the response. Sharp images score high, blurred ones low.
"""

import numpy as np

from satsim import DegradeConfig, Raster, degrade, laplacian_variance, sample_photo

photo = sample_photo(gsd=0.05)
print(f"original photo        LV = {laplacian_variance(photo).lv:10.2f}")

flat = Raster.filled(64, 64, 128.0)
print(f"flat grey             LV = {laplacian_variance(flat).lv:10.2f}")

# the score ignores brightness offsets but grows with contrast squared
print(f"photo + 30            LV = {laplacian_variance(photo.with_pixels(photo.pixels + 30)).lv:10.2f}")
print(f"photo * 0.5           LV = {laplacian_variance(photo.with_pixels(photo.pixels * 0.5)).lv:10.2f}")

print("\nsimulated 0.5 m/px images get blurrier as Q grows:")
for q in np.arange(1.0, 6.0):
    sim = degrade(photo, DegradeConfig.from_gsd(q, 0.05, 0.5))
    print(f"  q={q:.0f}  LV = {laplacian_variance(sim).lv:9.2f}")
