"""
Bregman divergences and the max-affine potential
================================================

Closed-form divergences first, then a learned potential built from
kappa affine subnetworks and the divergence it induces.
"""
import numpy as np

from condiv import bregman as B
from condiv.nn import seeded_rng
from condiv.tensor import Tensor

x = np.array([0.5, 0.5])
y = np.array([0.25, 0.75])

# the same pair under three generating functions
for phi in (B.SQUARED_EUCLIDEAN, B.NEGATIVE_ENTROPY, B.BURG):
    print(f"{phi.kind:>18}: D(x, y) = {B.bregman_divergence(phi, x, y):.5f}"
          f"   D(y, x) = {B.bregman_divergence(phi, y, x):.5f}")

# divergences are linear in the potential
mix = B.combine([(2.0, B.NEGATIVE_ENTROPY), (0.5, B.BURG)])
print("mixed potential:", B.bregman_divergence(mix, x, y))

# a max-affine potential: phi_hat(z) = max_k (w_k . z + b_k)
net = B.DeepDivergenceNet(embed_dim=2, kappa=4, rng=seeded_rng(0))
z = seeded_rng(1).normal(size=(6, 2))
value, winner = B.phi_hat(net, Tensor(z))
print("phi_hat:", np.round(value.data, 3))
print("winning subnetwork per row:", winner)

# deep divergence between the six points; zero wherever the winners agree
o = net(Tensor(z))
D = B.deep_divergence(o, o).data
print(np.round(D, 3))
print("zero where argmax agrees:", bool((D[winner[:, None] == winner[None, :]] == 0).all()))

# phi_hat is convex by construction
rep = B.convexity_check(net, 1000, seeded_rng(2))
print(f"midpoint convexity: {rep.violations} violations in {rep.trials} trials")
