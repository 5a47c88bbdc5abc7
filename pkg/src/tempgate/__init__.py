"""Graph attention with learnable softmax temperature and feature gating,
plus CSBM signal-to-noise verification tools.

Modules: graph (CSR containers, dataset format, CSBM sampling), autodiff
(tape-based reverse mode), attention (the eleven method variants), noise
(feature corruption and the oracle gate), theory (Monte-Carlo estimators
and closed forms), training (loss/Adam/loop/metrics), planetoid (raw-file
converter), cli (experiment runner).
"""

__version__ = "0.1.0"
