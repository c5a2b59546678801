"""Pure numpy forward/backward for the transformation classifier.

Parameter layout shared with the compiled kernel::

    [W1, b1, W2, b2, ..., W5, b5, Wh, bh]

Hidden weights are ``(out, in)``; ``Wh`` is ``(n_classes, hidden)``. A
LeakyReLU follows every hidden affine layer, the head is linear.
"""

import numpy as np

LEAKY_SLOPE = 0.2


def leaky_relu(a):
    return np.where(a > 0, a, LEAKY_SLOPE * a)


def features(params, Z):
    h = Z
    for W, b in zip(params[:-2:2], params[1:-2:2]):
        h = leaky_relu(h @ W.T + b)
    return h


def loss_and_grads(params, Z, labels):
    """Mean cross-entropy over the rows of ``Z`` and its parameter gradients."""
    n_hidden = (len(params) - 2) // 2
    acts = [Z]
    pre = []
    h = Z
    for layer in range(n_hidden):
        W, b = params[2 * layer], params[2 * layer + 1]
        a = h @ W.T + b
        h = np.where(a > 0, a, LEAKY_SLOPE * a)
        pre.append(a)
        acts.append(h)
    Wh, bh = params[-2], params[-1]
    logits = h @ Wh.T + bh
    B = Z.shape[0]
    rows = np.arange(B)
    mx = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - mx)
    s = e.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(s[:, 0]) + mx[:, 0] - logits[rows, labels]))

    g = e / s
    g[rows, labels] -= 1.0
    g /= B
    grads = [None] * len(params)
    grads[-2] = g.T @ h
    grads[-1] = g.sum(axis=0)
    dh = g @ Wh
    for layer in reversed(range(n_hidden)):
        da = dh * np.where(pre[layer] > 0, 1.0, LEAKY_SLOPE)
        grads[2 * layer] = da.T @ acts[layer]
        grads[2 * layer + 1] = da.sum(axis=0)
        if layer:
            dh = da @ params[2 * layer]
    return loss, grads
