"""
The learned divergence over the input plane
===========================================

Train a small model on two clusters, then map the deep divergence from
one cluster's centre to every point of a grid.  Points the model groups
with the anchor sit at exactly zero.
"""
import numpy as np

from condiv import ContrastiveDivergenceModel, fit, gen_gaussian_clusters
from condiv.config import ModelSpec, TrainConfig
from condiv.experiments import export_divergence_grid

cfg = TrainConfig(model=ModelSpec(encoder=(64, 64), projection_hidden=64, embed_dim=16, kappa=20),
                  epochs=15)
data = gen_gaussian_clusters(k=2, n_per=200, seed=0)
model = ContrastiveDivergenceModel.from_config(data.input_dim, cfg)
fit(model, data, cfg)

anchor = data.flat()[data.labels == 0].mean(axis=0)
res = 24
grid = np.array(export_divergence_grid(model, anchor, resolution=res))
d = grid[:, 2].reshape(res, res)

# '.' for zero divergence, '#' for positive; y grows upwards
print(f"anchor at {np.round(anchor, 2)}")
for row in d[::-1]:
    print("".join("." if v == 0 else "#" for v in row))
print(f"{(d == 0).mean():.0%} of the plane is at zero divergence from the anchor")
