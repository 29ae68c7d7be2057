"""Record a demonstration dataset and walk the augmentation catalogue.

Covers: time-synchronized recording, label histograms, straight-bin omission,
reflection, Gaussian noise, crop+scale, color schemes, K-means color
quantization, edges and Hough lines, and the perspective patch compositor.

Run:  python demos/03_dataset_and_augmentation.py
"""

from pathlib import Path

import numpy as np

from hallpilot import maps
from hallpilot.cli import histogram_svg, record_expert_dataset
from hallpilot.pipeline import (PipelineSpec, color_convert, composite_patch,
                                crop_scale, edge_map, gaussian_noise,
                                hough_lines, kmeans_quantize)
from hallpilot.recorder import label_histogram, write_ppm

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

world = maps.get_map("rect_loop")
ds = record_expert_dataset(world, OUT / "demo_dataset", hz=20.0, speed=0.8,
                           duration=30.0)
print(f"recorded {len(ds)} synchronized samples")

hist = label_histogram(ds, 15)
(OUT / "labels_hist.svg").write_text(histogram_svg(hist))
print("label histogram:", hist.tolist())

# dataset-level rebalance + reflect, then per-sample noise, as one spec
spec = PipelineSpec([
    {"op": "rebalance_omit", "cap": 0.33},
    {"op": "add_reflection"},
    {"op": "gaussian_noise", "sigma": 0.02},
])
aug = spec.apply_dataset(ds, seed=0)
aug_hist = label_histogram(aug, 15)
print(f"after pipeline: {len(ds)} -> {len(aug)} samples")
print("mirror-symmetric histogram:", aug_hist.tolist())

img = ds.samples[0].rgb
write_ppm(OUT / "aug_crop.ppm", crop_scale(img, crop=(6, 8, 11, 20),
                                           out_hw=(12, 24)))
write_ppm(OUT / "aug_noise.ppm", gaussian_noise(img, 0.08, seed=1))
hsv = color_convert(img, "HSV")
print(f"HSV value channel mean {hsv[..., 2].mean():.3f}")

quant = kmeans_quantize(img, k=2, seed=0)
write_ppm(OUT / "aug_kmeans2.ppm", quant)
print(f"k-means K=2 distinct colors: "
      f"{len(np.unique(quant.reshape(-1, 3), axis=0))}")

edges = edge_map(img, threshold=0.5)
lines = hough_lines(edges, max_lines=4)
print(f"{int((edges > 0).sum())} edge pixels, "
      f"top lines: {[(round(l.rho, 1), round(l.theta, 2)) for l in lines]}")

patch = np.zeros((8, 8, 3), dtype=np.uint8)
patch[::2, ::2] = 255
spliced = composite_patch(img, patch, [(4, 4), (14, 6), (13, 13), (5, 12)])
write_ppm(OUT / "aug_patch.ppm", spliced)
print(f"patch composited -> {OUT}/aug_patch.ppm")
