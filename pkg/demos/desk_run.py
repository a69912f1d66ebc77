"""
Training on two Gaussian clusters
=================================

The default configuration end to end: generate data, train the encoder
with both losses, then measure it with a linear probe.
"""
import time

from condiv import ContrastiveDivergenceModel, TrainConfig, fit, gen_gaussian_clusters, linear_eval

cfg = TrainConfig()
data = gen_gaussian_clusters(k=2, n_per=200, stddev=0.3, seed=0)
print(f"{len(data)} points in {data.input_dim} dims, {data.num_classes} classes")

model = ContrastiveDivergenceModel.from_config(data.input_dim, cfg)
t0 = time.perf_counter()
log = fit(model, data, cfg)
print(f"{cfg.epochs} epochs, {len(log.records)} steps in {time.perf_counter() - t0:.1f}s")

# per-epoch mean losses
for row in log.epoch_summaries()[::5]:
    print(f"epoch {row['epoch']:>2}  contrastive {row['contrastive']:.4f}  "
          f"divergence {row['divergence']:.4f}  total {row['total']:.4f}")

# only the encoder survives training
report = linear_eval(model.encoder, data, cfg.probe)
print(f"linear probe top-1: {report.top1:.3f} on {report.n_test} held-out points")
