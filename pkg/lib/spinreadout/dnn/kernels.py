"""
Compiled forward and backward passes of the CNN+LSTM classifier.

All kernels work on the flat parameter vector described in
:func:`spinreadout.dnn.model.param_layout`:

* conv layer ``l``: ``kernel`` weights then one bias, at ``l * (kernel + 1)``
* LSTM gate matrices in the order i, f, g, o, each ``hidden x (1 + hidden)``
  row-major with the input column first
* LSTM biases in the same gate order, ``hidden`` each

Gradients are accumulated trace by trace in index order, so batch sums do
not depend on threading.
"""
import math

import numpy as np
from numba import njit

RELU = 0
TANH = 1

N_GATES = 4
GATE_I, GATE_F, GATE_G, GATE_O = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def _sigmoid(z):
    if z >= 0.0:
        e = math.exp(-z)
        return 1.0 / (1.0 + e)
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _activate(z, act):
    if act == RELU:
        return z if z > 0.0 else 0.0
    return math.tanh(z)


@njit(cache=True, nogil=True)
def _activate_grad(z, a, act):
    if act == RELU:
        return 1.0 if z > 0.0 else 0.0
    return 1.0 - a * a


@njit(cache=True, nogil=True)
def conv_lengths(n_in, n_layers, kernel, stride):
    lengths = np.empty(n_layers + 1, np.int64)
    lengths[0] = n_in
    for layer in range(n_layers):
        lengths[layer + 1] = (lengths[layer] - kernel) // stride + 1
    return lengths


@njit(cache=True, nogil=True)
def run_trace(params, x, is_event, n_layers, kernel, stride, hidden, act, grad, want_grad):
    """
    Forward pass of one trace, optionally followed by backpropagation.

    Returns ``(p_event, p_noevent, loss)`` where loss is the cross-entropy
    against ``is_event``. With ``want_grad`` the loss gradient is added to
    ``grad``.
    """
    n_in = x.shape[0]
    lengths = conv_lengths(n_in, n_layers, kernel, stride)
    width = kernel + 1

    # Convolution stack, valid padding.
    acts = np.zeros((n_layers + 1, n_in))
    pres = np.zeros((n_layers + 1, n_in))
    for t in range(n_in):
        acts[0, t] = x[t]
    for layer in range(n_layers):
        off = layer * width
        bias = params[off + kernel]
        for j in range(lengths[layer + 1]):
            s = bias
            base = j * stride
            for k in range(kernel):
                s += params[off + k] * acts[layer, base + k]
            pres[layer + 1, j] = s
            acts[layer + 1, j] = _activate(s, act)

    # LSTM over the conv features, one scalar per step.
    n_steps = lengths[n_layers]
    row = 1 + hidden
    w_off = n_layers * width
    b_off = w_off + N_GATES * hidden * row
    gates = np.zeros((N_GATES, n_steps, hidden))
    cells = np.zeros((n_steps, hidden))
    outs = np.zeros((n_steps, hidden))
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    z = np.zeros((N_GATES, hidden))
    for t in range(n_steps):
        xt = acts[n_layers, t]
        for gate in range(N_GATES):
            for r in range(hidden):
                w0 = w_off + gate * hidden * row + r * row
                s = params[b_off + gate * hidden + r] + params[w0] * xt
                for q in range(hidden):
                    s += params[w0 + 1 + q] * h[q]
                z[gate, r] = s
        for r in range(hidden):
            gi = _sigmoid(z[GATE_I, r])
            gf = _sigmoid(z[GATE_F, r])
            gg = math.tanh(z[GATE_G, r])
            go = _sigmoid(z[GATE_O, r])
            c[r] = gf * c[r] + gi * gg
            h[r] = go * math.tanh(c[r])
            gates[GATE_I, t, r] = gi
            gates[GATE_F, t, r] = gf
            gates[GATE_G, t, r] = gg
            gates[GATE_O, t, r] = go
            cells[t, r] = c[r]
            outs[t, r] = h[r]

    # Softmax over the final hidden state: unit 0 is the event logit.
    top = max(h[0], h[1])
    e0 = math.exp(h[0] - top)
    e1 = math.exp(h[1] - top)
    p_event = e0 / (e0 + e1)
    p_noevent = e1 / (e0 + e1)
    loss = -math.log(p_event) if is_event else -math.log(p_noevent)
    if not want_grad:
        return p_event, p_noevent, loss

    # Backpropagation through time.
    dh = np.zeros(hidden)
    dh[0] = p_event - (1.0 if is_event else 0.0)
    dh[1] = p_noevent - (0.0 if is_event else 1.0)
    dc = np.zeros(hidden)
    dfeat = np.zeros(n_steps)
    dz = np.zeros((N_GATES, hidden))
    zeros = np.zeros(hidden)
    for t in range(n_steps - 1, -1, -1):
        c_prev = cells[t - 1] if t > 0 else zeros
        h_prev = outs[t - 1] if t > 0 else zeros
        dc_prev = np.zeros(hidden)
        for r in range(hidden):
            gi = gates[GATE_I, t, r]
            gf = gates[GATE_F, t, r]
            gg = gates[GATE_G, t, r]
            go = gates[GATE_O, t, r]
            tc = math.tanh(cells[t, r])
            d_out = dh[r] * tc
            d_cell = dc[r] + dh[r] * go * (1.0 - tc * tc)
            dz[GATE_I, r] = d_cell * gg * gi * (1.0 - gi)
            dz[GATE_F, r] = d_cell * c_prev[r] * gf * (1.0 - gf)
            dz[GATE_G, r] = d_cell * gi * (1.0 - gg * gg)
            dz[GATE_O, r] = d_out * go * (1.0 - go)
            dc_prev[r] = d_cell * gf
        xt = acts[n_layers, t]
        dh_prev = np.zeros(hidden)
        for gate in range(N_GATES):
            for r in range(hidden):
                d = dz[gate, r]
                w0 = w_off + gate * hidden * row + r * row
                grad[b_off + gate * hidden + r] += d
                grad[w0] += d * xt
                dfeat[t] += d * params[w0]
                for q in range(hidden):
                    grad[w0 + 1 + q] += d * h_prev[q]
                    dh_prev[q] += d * params[w0 + 1 + q]
        dh = dh_prev
        dc = dc_prev

    # Back through the convolution stack.
    dact = dfeat
    for layer in range(n_layers - 1, -1, -1):
        off = layer * width
        dprev = np.zeros(lengths[layer])
        for j in range(lengths[layer + 1]):
            d = dact[j] * _activate_grad(pres[layer + 1, j], acts[layer + 1, j], act)
            if d == 0.0:
                continue
            grad[off + kernel] += d
            base = j * stride
            for k in range(kernel):
                grad[off + k] += d * acts[layer, base + k]
                dprev[base + k] += d * params[off + k]
        dact = dprev
    return p_event, p_noevent, loss


@njit(cache=True, nogil=True)
def batch_loss_grad(params, samples, is_event, indices, n_layers, kernel, stride, hidden, act, grad):
    """Summed loss over ``indices``; the summed gradient is written to ``grad``."""
    grad[:] = 0.0
    total = 0.0
    for n in range(indices.shape[0]):
        i = indices[n]
        total += run_trace(params, samples[i], is_event[i], n_layers, kernel, stride, hidden, act, grad, True)[2]
    return total


@njit(cache=True, nogil=True)
def batch_predict(params, samples, n_layers, kernel, stride, hidden, act):
    """Event probability of every row of ``samples``."""
    n = samples.shape[0]
    out = np.empty(n)
    unused = np.zeros(1)
    for i in range(n):
        out[i] = run_trace(params, samples[i], True, n_layers, kernel, stride, hidden, act, unused, False)[0]
    return out
