"""Shared test utilities: finite-difference oracle and tolerance checks."""

import numpy as np


def fd_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar-valued f wrt array x.

    f takes no arguments and must recompute from the current contents of x;
    x is perturbed in place and restored.
    """
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = f()
        flat_x[i] = orig - h
        fm = f()
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_grads_close(analytic: np.ndarray, numeric: np.ndarray,
                       atol: float = 1e-6, rtol: float = 1e-4) -> None:
    """Elementwise |a - n| <= max(atol, rtol * |n|)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    diff = np.abs(analytic - numeric)
    bound = np.maximum(atol, rtol * np.abs(numeric))
    worst = (diff - bound).max()
    assert np.all(diff <= bound), f"gradient mismatch, worst excess {worst:.3g}"
