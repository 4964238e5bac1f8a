"""quadlab: quadruplet ranking loss with margin-based online hard negative
mining, its triplet/contrastive baselines, and a CMC evaluation harness."""

__version__ = "0.1.0"
