"""Finite-difference verification of backprop gradients."""

from __future__ import annotations

import numpy as np

from .model import Model


def grad_check(model: Model, loss_fn, x: np.ndarray, target,
               h: float = 1e-4, max_per_tensor: int | None = None,
               adapt_steps: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in float64 regardless of the model's training dtype; rel err per
    element is |ga - gn| / max(|ga|, |gn|, 1e-8).

    By default every parameter element is checked; max_per_tensor limits each
    tensor to its highest-|gradient| elements (wiring checks on big models).
    A central difference at step h is a bad oracle sample in two known cases:
    a ReLU/pool kink inside +-h (needs smaller h) and an exactly-flat loss
    direction where cancellation noise divided by 2h dominates (needs larger
    h). With adapt_steps > 0 an element that fails is retried at h/10^k and
    h*10^k and its best estimate kept; genuine backward bugs fail at every
    step size.
    """
    params = model.params()
    orig_dtype = params[0].data.dtype if params else np.float32
    model.cast(np.float64)
    x = x.astype(np.float64)
    try:
        model.zero_grad()
        out = model.forward(x)
        _, dout = loss_fn(out, target)
        model.backward(dout.reshape(out.shape))
        analytic = [p.grad.copy() for p in params]

        def rel_at(flat, i, ga_i, hh):
            orig = flat[i]
            flat[i] = orig + hh
            lp, _ = loss_fn(model.forward(x), target)
            flat[i] = orig - hh
            lm, _ = loss_fn(model.forward(x), target)
            flat[i] = orig
            gn = (lp - lm) / (2.0 * hh)
            return abs(ga_i - gn) / max(abs(ga_i), abs(gn), 1e-8)

        worst = 0.0
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gflat = ga.reshape(-1)
            if max_per_tensor is None or flat.size <= max_per_tensor:
                indices = range(flat.size)
            else:
                indices = np.argsort(-np.abs(gflat))[:max_per_tensor]
            for i in indices:
                rel = rel_at(flat, i, gflat[i], h)
                for k in range(1, adapt_steps + 1):
                    if rel <= 1e-4:
                        break
                    rel = min(rel, rel_at(flat, i, gflat[i], h / 10 ** k),
                              rel_at(flat, i, gflat[i], h * 10 ** k))
                worst = max(worst, rel)
        return worst
    finally:
        model.cast(orig_dtype)
