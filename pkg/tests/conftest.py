import numpy as np
import pytest

from ssws.neural_core import kernels


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.abs(a).max(initial=0.0) + np.abs(b).max(initial=0.0) + 1e-12
    return np.abs(a - b).max(initial=0.0) / denom


def gradcheck(build, tensors, h=1e-5, tol=1e-4):
    """Check autodiff gradients of a scalar against central finite differences.

    build(*tensors) must reconstruct the graph from `tensors` (float64 data)
    on every call; the numeric side perturbs each element in place.
    """
    for t in tensors:
        assert t.data.dtype == np.float64, "gradient checks run in 64-bit"
        t.grad = None
    loss = build(*tensors)
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, ga in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gn = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = build(*tensors).item()
            flat[i] = orig - h
            lm = build(*tensors).item()
            flat[i] = orig
            gn[i] = (lp - lm) / (2.0 * h)
        worst = max(worst, rel_err(ga, gn.reshape(t.data.shape)))
    assert worst < tol, f"gradient mismatch: rel err {worst:.3e} >= {tol}"
    return worst


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test under both kernel backends."""
    prev = kernels._backend
    kernels.set_backend(request.param)
    if request.param == "numba" and kernels.get_backend() != "numba":
        kernels.set_backend(prev)
        pytest.skip("numba unavailable")
    yield request.param
    kernels.set_backend(prev)
