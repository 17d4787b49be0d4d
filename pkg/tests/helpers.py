"""Independent oracles shared across the test suite.

Everything here is deliberately written the slow, literal way (loops,
central differences, pairwise enumeration) so it cannot share bugs with
the vectorized implementations it checks.
"""

from __future__ import annotations

import numpy as np

from egcn.tensor import Tensor


def numerical_grad(fn, param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued fn w.r.t. one tensor."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray, rel_tol: float = 1e-4,
                      abs_tol: float = 1e-7):
    """Check |analytic - numeric| <= abs_tol + rel_tol*|numeric| elementwise.

    The absolute floor absorbs central-difference truncation noise (~1e-9 at
    h=1e-5) on near-zero entries, where a relative comparison is meaningless.
    """
    ratio = np.abs(analytic - numeric) / (abs_tol + rel_tol * np.abs(numeric))
    assert ratio.max() < 1.0, (
        f"gradient mismatch: worst ratio {ratio.max():.3f} "
        f"(analytic {analytic.reshape(-1)[ratio.argmax()]:.3e}, "
        f"numeric {numeric.reshape(-1)[ratio.argmax()]:.3e})"
    )


def sigmoid_np(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dense_gated_layer(h, edges, blocks, self_block, gate_block):
    """Literal per-node implementation of one gated relational update.

    h: (n, d) array. edges: dict relation -> set of unordered (i, j) pairs.
    blocks: dict relation -> (W, b) arrays. self_block / gate_block: (W, b).
    Neighbour counts are over distinct neighbours in the union of all
    relations; a pair carrying k relations contributes k messages.
    """
    n, d = h.shape
    w_s, b_s = self_block
    w_a, b_a = gate_block
    out = np.zeros_like(h)
    for i in range(n):
        u = w_s @ h[i] + b_s
        neighbours = set()
        for pairs in edges.values():
            for a, b in pairs:
                if a == i:
                    neighbours.add(b)
                elif b == i:
                    neighbours.add(a)
        if neighbours:
            total = np.zeros(d)
            for j in sorted(neighbours):
                for rel, pairs in edges.items():
                    if (min(i, j), max(i, j)) in pairs:
                        w_r, b_r = blocks[rel]
                        total += w_r @ h[j] + b_r
            u = u + total / len(neighbours)
        gate = sigmoid_np(w_a @ np.concatenate([u, h[i]]) + b_a)
        out[i] = np.tanh(u) * gate + h[i] * (1.0 - gate)
    return out


def enumerate_spans(doc_tokens, targets, normalize):
    """Brute-force span matcher: every (start, end) whose normalized form
    equals a normalized target. Returns list of (start, end, key)."""
    found = []
    max_len = max((len(normalize(t.split())) + len(t.split()) for t in targets), default=0)
    for start in range(len(doc_tokens)):
        for end in range(start + 1, min(len(doc_tokens), start + max_len + 2) + 1):
            form = normalize(doc_tokens[start:end])
            for key in targets:
                if form and form == normalize(key.split()):
                    found.append((start, end, key))
    return found
