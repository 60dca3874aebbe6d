"""Shared test oracles: central finite differences and straight-line
(numpy-only) re-implementations of the model forward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_gradient(f: Callable[[], float], data: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of f() w.r.t. ``data``, perturbed in place."""
    grad = np.zeros_like(data)
    flat = data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = f()
        flat[i] = orig - eps
        minus = f()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


# ---------------------------------------------------------------------------
# straight-line references (no tape, plain numpy)


def np_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_step_reference(x, h, c, p):
    """One cell step straight from the gate equations; ``p`` holds arrays."""
    i = np_sigmoid(x @ p["W_ii"].T + p["b_ii"] + h @ p["W_hi"].T + p["b_hi"])
    f = np_sigmoid(x @ p["W_if"].T + p["b_if"] + h @ p["W_hf"].T + p["b_hf"])
    g = np.tanh(x @ p["W_ig"].T + p["b_ig"] + h @ p["W_hg"].T + p["b_hg"])
    o = np_sigmoid(x @ p["W_io"].T + p["b_io"] + h @ p["W_ho"].T + p["b_ho"])
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return h_next, c_next


def feedforward_reference(x, net):
    z = np.tanh(x @ net.W1.data.T + net.b1.data)
    return z @ net.W2.data.T + net.b2.data


def np_softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mfn_forward_reference(language, audio, visual, params) -> np.ndarray:
    """Straight-line memory-fusion forward for any T, plain numpy."""
    cells = [params.language_cell, params.audio_cell, params.visual_cell]
    arrays = [{name: t.data for name, t in c.named().items()} for c in cells]
    blocks = [language, audio, visual]
    batch, steps = language.shape[:2]
    hs = [np.zeros((batch, c.hidden_dim)) for c in cells]
    cs = [np.zeros((batch, c.hidden_dim)) for c in cells]
    memory = np.zeros((batch, params.memory_dim))
    for t in range(steps):
        prev_cs = cs
        stepped = [lstm_step_reference(b[:, t, :], h, c, a) for b, h, c, a in zip(blocks, hs, cs, arrays)]
        hs = [s[0] for s in stepped]
        cs = [s[1] for s in stepped]
        if t >= 1:
            window = np.concatenate(prev_cs + cs, axis=1)
            scores = feedforward_reference(window, params.attention_net)
            attended = window * np_softmax_rows(scores)
            proposal = feedforward_reference(attended, params.proposal_net)
            keep = np_sigmoid(feedforward_reference(attended, params.retain_gate))
            write = np_sigmoid(feedforward_reference(attended, params.update_gate))
            memory = keep * memory + write * np.tanh(proposal)
    return feedforward_reference(np.concatenate(hs + [memory], axis=1), params.output_head)
