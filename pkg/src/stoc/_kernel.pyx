# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled forward/backward pass for the transformation classifier.

Same contract as ``stoc._kernel_py.loss_and_grads``. The per-row loop lives
in ``_kernel_core.h``; rows are processed one at a time so the
(rows x classes) logit matrix is never materialized.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


cdef extern from "_kernel_core.h":
    double stoc_fused_step(
        long L, const long *n_in, const long *n_out, const long *w_off, const long *b_off,
        const double *hp, long H, long M, const double *WhT, const double *bh,
        long B, long R, const double *Z, const int64_t *labels,
        double *ghp, double *gWhT, double *gbh, long width) nogil


def loss_and_grads(params, Z, labels):
    """Mean cross-entropy over the rows of ``Z`` and its parameter gradients."""
    n_hidden = (len(params) - 2) // 2
    hidden_W = [params[2 * l] for l in range(n_hidden)]
    hidden_b = [params[2 * l + 1] for l in range(n_hidden)]
    head_W = params[len(params) - 2]
    head_b = params[len(params) - 1]

    n_in = np.array([W.shape[1] for W in hidden_W], dtype=np.int_)
    n_out = np.array([W.shape[0] for W in hidden_W], dtype=np.int_)
    sizes = np.array([W.size + b.size for W, b in zip(hidden_W, hidden_b)], dtype=np.int_)
    w_off = np.zeros(n_hidden, dtype=np.int_)
    w_off[1:] = np.cumsum(sizes)[:n_hidden - 1]
    b_off = w_off + n_in * n_out
    hp = np.concatenate([np.concatenate([np.ravel(W), b]) for W, b in zip(hidden_W, hidden_b)])
    hp = np.ascontiguousarray(hp, dtype=np.float64)
    WhT = np.ascontiguousarray(np.transpose(head_W), dtype=np.float64)
    bh = np.ascontiguousarray(head_b, dtype=np.float64)
    Zc = np.ascontiguousarray(Z, dtype=np.float64)
    lab = np.ascontiguousarray(labels, dtype=np.int64)
    if Zc.ndim != 2 or Zc.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2-D matrix")
    if Zc.shape[1] != n_in[0]:
        raise ValueError(f"input has {Zc.shape[1]} columns, network expects {n_in[0]}")
    if lab.shape[0] != Zc.shape[0] or lab.min() < 0 or lab.max() >= WhT.shape[1]:
        raise ValueError("labels out of range or misaligned with rows")
    if WhT.shape[0] != n_out[n_hidden - 1]:
        raise ValueError("head width does not match the last hidden layer")

    ghp = np.zeros_like(hp)
    gWhT = np.zeros_like(WhT)
    gbh = np.zeros_like(bh)

    cdef long[::1] in_v = n_in, out_v = n_out, woff_v = w_off, boff_v = b_off
    cdef double[::1] hp_v = hp, ghp_v = ghp, bh_v = bh, gbh_v = gbh
    cdef double[:, ::1] WhT_v = WhT, gWhT_v = gWhT, Z_v = Zc
    cdef int64_t[::1] lab_v = lab
    cdef long L = n_hidden, H = WhT.shape[0], M = WhT.shape[1]
    cdef long B = Zc.shape[0], R = Zc.shape[1], width = max(int(n_out.max()), 1)
    cdef double loss
    with nogil:
        loss = stoc_fused_step(
            L, &in_v[0], &out_v[0], &woff_v[0], &boff_v[0],
            &hp_v[0], H, M, &WhT_v[0, 0], &bh_v[0],
            B, R, &Z_v[0, 0], &lab_v[0],
            &ghp_v[0], &gWhT_v[0, 0], &gbh_v[0], width)

    grads = []
    for l in range(n_hidden):
        o = int(w_off[l])
        grads.append(ghp[o:o + n_in[l] * n_out[l]].reshape(n_out[l], n_in[l]).copy())
        grads.append(ghp[b_off[l]:b_off[l] + n_out[l]].copy())
    grads.append(np.ascontiguousarray(gWhT.T))
    grads.append(gbh)
    return float(loss), grads
