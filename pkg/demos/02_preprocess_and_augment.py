"""From a raw gray crop to a network input, and what augmentation does to landmarks.

Writes a few PGM files to ./demo_out/preprocess for a visual check.
"""
from pathlib import Path

import numpy as np

from petl.augment import apply_affine, sample_spec
from petl.io import write_pgm
from petl.preprocess import clahe, contrast_stretch, hist_equalize, prepare_input
from petl.synthetic import generate_synthetic

out = Path("demo_out/preprocess")
out.mkdir(parents=True, exist_ok=True)

ds, images, _ = generate_synthetic(2, 7, seed=1)
img, sample = images[3], ds.samples[3]
print(f"sample {sample.image_path}: {sample.expression}, subject {sample.subject_id}")

for name, fn in (("raw", lambda a: a), ("clahe", clahe), ("he", hist_equalize), ("stretch", contrast_stretch)):
    e = fn(img)
    write_pgm(out / f"{name}.pgm", e)
    print(f"  {name:<8} gray range {e.min():>3}..{e.max():<3} mean {e.mean():6.1f}")

x = prepare_input(img, 160)
print(f"network input {x.shape}, values in [{x.min():.2f}, {x.max():.2f}]")

# the same affine map moves pixels and points together; a flip also swaps left/right labels
rng = np.random.default_rng(0)
for i in range(3):
    spec = sample_spec(rng)
    warped, pts, _ = apply_affine(img, sample.landmarks, spec)
    drawn = warped.copy()
    for x_, y_ in np.round(pts).astype(int):
        if 0 <= x_ < drawn.shape[1] and 0 <= y_ < drawn.shape[0]:
            drawn[y_, x_] = 255
    write_pgm(out / f"augmented_{i}.pgm", drawn)
    print(f"  augmentation {i}: flip={spec.flip} rotation {spec.rotation_deg:+.1f} deg, "
          f"shear {spec.shear_deg:+.1f} deg, shift ({spec.translate_frac[0]:+.2f}, {spec.translate_frac[1]:+.2f})")
print(f"wrote images to {out}")
