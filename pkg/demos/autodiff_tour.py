"""A short tour of the reverse-mode engine.

Tensors wrap float64 ndarrays; operations record backward closures on the
active Tape; Tape.backward walks the records in reverse and returns a
{parameter: gradient} map. Without an open tape, the same ops run
forward-only, which is what evaluation passes use.
"""

import numpy as np

from tempgate import autodiff as ad

# --- forward and backward on a tiny expression -----------------------------

x = ad.param(np.array([1.0, 2.0, 3.0]))
w = ad.param(np.array([0.5, -1.0, 2.0]))

with ad.Tape() as tape:
    loss = ad.summ(ad.sigmoid(ad.mul(x, w)))
    grads = tape.backward(loss)

print("loss            ", float(loss.data))
print("d loss / d x    ", grads[x])
print("d loss / d w    ", grads[w])

# --- segment softmax: one segment per node's neighborhood ------------------

logits = ad.constant(np.array([1.0, 2.0, 3.0, -1.0, 1.0]))
segments = np.array([0, 0, 0, 1, 1])  # node 0 has 3 in-edges, node 1 has 2

for temperature in (1.0, 10.0, 1e6):
    alpha = ad.segment_softmax(logits, segments, temperature=temperature)
    print(f"T = {temperature:>9,.0f} ->", np.round(alpha.data, 4))
# Large T flattens each neighborhood toward uniform without ever changing
# which neighbor holds the argmax.

# --- the temperature is itself differentiable -------------------------------

theta = ad.param(0.0)  # T = softplus(theta) + 1e-3
targets = np.array([1.0, 0.0, 0.0, 1.0, 0.0])

with ad.Tape() as tape:
    t = ad.add(ad.softplus(theta), 1e-3)
    alpha = ad.segment_softmax(logits, segments, temperature=t)
    score = ad.summ(ad.mul(alpha, targets))
    grads = tape.backward(score)

print("d score / d theta =", float(grads[theta]))

# --- gradient checking -------------------------------------------------------

rng = np.random.default_rng(0)
m = ad.param(rng.standard_normal((4, 4)))


def f():
    return ad.reduce_mean(ad.elu(ad.matmul(m, m)))


err = ad.grad_check(f, [m])
print(f"grad_check max relative error: {err:.2e}")
