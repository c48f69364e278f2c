"""Desk-scale laboratory for large-batch synchronous data-parallel SGD.

Subpackages:
  nn        - minimal feed-forward engine with exact analytic gradients
  optim     - momentum SGD, poly decay, warmup, linear scaling, LARS
  cluster   - deterministic P-worker synchronous-SGD simulator
  costmodel - alpha-beta-gamma performance and energy model
  data      - synthetic datasets and the IDX binary loader
  config    - experiment config file format
  runner    - experiment orchestration and CSV emission
  cli       - the `batchlab` command-line interface
"""

from . import cluster, config, costmodel, data, nn, optim, reduction, runner

__all__ = ["cluster", "config", "costmodel", "data", "nn", "optim", "reduction", "runner"]
__version__ = "0.1.0"
