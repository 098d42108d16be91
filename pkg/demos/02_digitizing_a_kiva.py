"""From clicked rim points to a kiva radius in centimetres.

A synthetic stand-in for hand digitization: three passes of noisy clicks
around a circle, a scale bar of known length, one radius with an honest
uncertainty at the end.
"""
import numpy as np

from geomprobe import DigitizedSet, Measurement, aggregate_passes, calibrate_scale, fit_circle

rng = np.random.default_rng(2)
true_radius_cm, cm_per_px = 385.0, 2.0

# %% The scale bar: 250 px on the image covers 500 ± 5 cm on the ground
scale = calibrate_scale(250, Measurement(500, 5))
print(f"scale = {scale.value:.3f} ± {scale.sigma:.3f} cm/px")

# %% Three digitization passes, each a fresh set of clicks
passes = []
for p in range(3):
    t = rng.uniform(0, 2 * np.pi, 30)
    r_px = true_radius_cm / cm_per_px
    pts = np.column_stack([640 + r_px * np.cos(t), 480 + r_px * np.sin(t)])
    pts += rng.normal(0, 1.5, pts.shape)
    est = fit_circle(DigitizedSet("kiva_b_outer", str(p), pts))
    passes.append(est)
    print(f"pass {p}: r = {est.radius:.2f} px (se {est.radius_se:.2f}), rms {est.rms_residual:.2f} px, "
          f"{est.iterations} iterations")

# %% Combine the passes
# The pass-to-pass scatter and the scale uncertainty add in quadrature.
radius, centre = aggregate_passes(passes, scale)
print(f"radius = {radius.value:.1f} ± {radius.sigma:.1f} cm (truth {true_radius_cm:.0f})")
