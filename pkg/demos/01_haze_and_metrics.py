"""How the synthetic underwater haze looks to the three image metrics.

Each channel is attenuated by its own transmission and filled in with a
blue-green backlight.  Red dies first, so the colour error (ΔE) grows much
faster than the structural error (SSIM) as the water gets "deeper".
"""
import numpy as np

from uwunfold.data import DegradeParams, natural_patches, synth_degrade
from uwunfold.metrics import delta_e, psnr, ssim

clean = natural_patches(1, size=96, seed=3)[0]

print(f"{'red transmission':>18s} {'PSNR':>7s} {'SSIM':>6s} {'ΔE':>6s}")
for t_red in (1.0, 0.8, 0.6, 0.4, 0.2):
    params = DegradeParams(transmission=(t_red, 0.75, 0.85), background=(0.05, 0.45, 0.55), noise_std=0.0)
    hazy = synth_degrade(clean, params)
    print(f"{t_red:18.1f} {psnr(hazy, clean):7.2f} {ssim(hazy, clean).item():6.3f} {delta_e(hazy, clean):6.2f}")

# identical images: PSNR is unbounded, the other two are at their ideal values
print("identical:", psnr(clean, clean), ssim(clean, clean).item(), delta_e(clean, clean))
