"""
Layers with hand-written backward passes
========================================

Every layer caches what it needs in ``forward`` and returns the input gradient
from ``backward``. Central differences confirm the algebra.
"""

import numpy as np

from ecgrhythm.losses import focal_loss, focal_loss_grad
from ecgrhythm.nn import (BatchNorm1d, BiLSTM, Conv1d, MaxPool1d, ReLU, Sequential,
                          gradient_check, max_error)

rng = np.random.default_rng(0)

# conv -> batchnorm -> relu -> pool, the repeating unit of the backbone
block = Sequential(Conv1d(1, 4, 5, padding="same", rng=rng, dtype=np.float64),
                   BatchNorm1d(4, dtype=np.float64), ReLU(), MaxPool1d(2))
x = rng.standard_normal((3, 1, 32))
print("block output", block.forward(x).shape)
print("conv block, worst relative gradient error:", max_error(gradient_check(block, x)))

# A bidirectional LSTM summarizing a sequence into one hidden-size vector
lstm = BiLSTM(3, 8, rng=rng, dtype=np.float64)
seq = rng.standard_normal((2, 12, 3))
print("bilstm output", lstm.forward(seq).shape)
print("bilstm, worst relative gradient error:", max_error(gradient_check(lstm, seq)))

# Focal loss shrinks the contribution of confident, correct predictions.
p = np.array([[0.9, 0.05, 0.05], [0.4, 0.3, 0.3]])
y = np.array([0, 0])
for gamma in (0.0, 2.0):
    print(f"gamma={gamma}: loss {focal_loss(p, y, gamma):.4f}, "
          f"dL/dp[target] {focal_loss_grad(p, y, gamma)[:, 0].round(4).tolist()}")
