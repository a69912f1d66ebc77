"""
Views and augmentation ablation on toy shapes
=============================================

Two augmented views of one image, then the effect on probe accuracy of
removing single augmentation stages.
"""
import numpy as np

from condiv import augment as A
from condiv.config import ModelSpec, ProbeConfig, TrainConfig
from condiv.data import gen_toy_shapes
from condiv.experiments import ablate_augmentations
from condiv.nn import seeded_rng

data = gen_toy_shapes(n_per=30, size=16, seed=0)
print(f"{len(data)} images of shape {data.sample_shape}")

spec = A.preset("small")
print("stages in the small preset:", spec.enabled_stages())
v1, v2 = A.two_views(data.images[0], spec, seeded_rng(0))
print(f"view difference: mean |v1 - v2| = {np.abs(v1 - v2).mean():.3f}")

cfg = TrainConfig(model=ModelSpec(encoder=(64,), projection_hidden=32, embed_dim=8, kappa=10),
                  batch_size=32, epochs=5, probe=ProbeConfig(epochs=30))
for stage, top1, delta in ablate_augmentations(data, cfg, ["crop", "jitter", "grayscale"]):
    print(f"{stage:>10}: top-1 {top1:.3f}  change {delta:+.3f}")
