"""Contrastive divergence learning: NT-Xent plus a learned deep Bregman divergence."""
from .bregman import (BURG, NEGATIVE_ENTROPY, SQUARED_EUCLIDEAN, DeepDivergenceNet, Potential,
                      bregman_divergence, convexity_check, deep_divergence, phi_hat)
from .config import DataConfig, ModelSpec, ProbeConfig, TrainConfig, load_config
from .data import Dataset, gen_gaussian_clusters, gen_toy_shapes, read_dataset, write_dataset
from .losses import SimilarityKernel, apply_kernel, divergence_loss, nt_xent, total_loss
from .model import ContrastiveDivergenceModel, load_encoder, load_model, save_model
from .tensor import Tensor
from .train import fit, linear_eval, train_step

__version__ = "0.1.0"
