"""Shared test utilities: finite-difference oracles and tolerance checks."""

import numpy as np

from stemo import autodiff as ad


def fd_grad(f, params, step=1e-5):
    """Central finite differences of scalar f() w.r.t. a list of Tensors.

    Independent of the tape: only calls f() with perturbed parameter values.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.values)
        flat = p.values.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f()
            flat[i] = orig - step
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    a = np.concatenate([x.reshape(-1) for x in analytic])
    n = np.concatenate([x.reshape(-1) for x in numeric])
    denom = max(1.0, float(np.max(np.abs(n))))
    return float(np.max(np.abs(a - n))) / denom


def grad_check(build_loss, params, tol=1e-4, step=1e-5):
    """Run autodiff backward and compare against the finite-difference oracle."""
    for p in params:
        p.zero_grad()
    with ad.Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in params]

    def value():
        return build_loss().item()

    numeric = fd_grad(value, params, step=step)
    err = rel_error(analytic, numeric)
    assert err < tol, f"gradient mismatch: rel error {err:.2e} >= {tol}"
    return err
