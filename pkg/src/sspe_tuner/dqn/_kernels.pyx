# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled MLP kernels for the small dense networks the learner uses.

Same contract as _kernels_py; at these matrix sizes (batch 32, widths <= 128)
explicit C loops beat the per-call overhead of BLAS dispatch.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


cdef void _linear(double[:, ::1] a, double[:, ::1] w, double[::1] b,
                  double[:, ::1] out, bint rectify) noexcept nogil:
    cdef Py_ssize_t batch = a.shape[0]
    cdef Py_ssize_t fan_in = a.shape[1]
    cdef Py_ssize_t fan_out = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(batch):
        for j in range(fan_out):
            s = b[j]
            for k in range(fan_in):
                s += a[i, k] * w[k, j]
            if rectify and s < 0.0:
                s = 0.0
            out[i, j] = s


def forward_batch(list weights, list biases, x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t l
    a = np.ascontiguousarray(x, dtype=np.float64)
    for l in range(n_layers):
        out = np.empty((a.shape[0], weights[l].shape[1]), dtype=np.float64)
        _linear(a, weights[l], biases[l], out, l < n_layers - 1)
        a = out
    return a


def loss_grads(list weights, list biases, x, actions, targets):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t l, i, j, k

    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef long[::1] act = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] tgt = np.ascontiguousarray(targets, dtype=np.float64)

    activations = [x]
    a = x
    for l in range(n_layers):
        out = np.empty((a.shape[0], weights[l].shape[1]), dtype=np.float64)
        _linear(a, weights[l], biases[l], out, l < n_layers - 1)
        a = out
        activations.append(a)

    cdef double[:, ::1] q = activations[n_layers]
    cdef double loss = 0.0
    cdef double err
    delta_arr = np.zeros_like(activations[n_layers])
    cdef double[:, ::1] delta = delta_arr
    for i in range(batch):
        err = q[i, act[i]] - tgt[i]
        loss += err * err
        delta[i, act[i]] = 2.0 * err / batch
    loss /= batch

    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    cdef double[:, ::1] gw
    cdef double[::1] gb
    cdef double[:, ::1] prev
    cdef double[:, ::1] wv
    cdef double[:, ::1] nd
    cdef double s
    for l in range(n_layers - 1, -1, -1):
        prev = activations[l]
        gw_arr = np.zeros((prev.shape[1], delta.shape[1]), dtype=np.float64)
        gb_arr = np.zeros(delta.shape[1], dtype=np.float64)
        gw = gw_arr
        gb = gb_arr
        with nogil:
            for i in range(batch):
                for j in range(delta.shape[1]):
                    s = delta[i, j]
                    if s != 0.0:
                        gb[j] += s
                        for k in range(prev.shape[1]):
                            gw[k, j] += prev[i, k] * s
        grad_w[l] = gw_arr
        grad_b[l] = gb_arr
        if l > 0:
            wv = weights[l]
            nd_arr = np.zeros((batch, wv.shape[0]), dtype=np.float64)
            nd = nd_arr
            with nogil:
                for i in range(batch):
                    for k in range(wv.shape[0]):
                        if prev[i, k] > 0.0:
                            s = 0.0
                            for j in range(wv.shape[1]):
                                s += delta[i, j] * wv[k, j]
                            nd[i, k] = s
            delta_arr = nd_arr
            delta = nd
    return loss, grad_w, grad_b
