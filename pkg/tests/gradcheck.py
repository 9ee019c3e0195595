"""Central finite differences for layer gradient checks."""
import numpy as np


def numeric_grad(f, x, eps=1e-6):
    """Gradient of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a, b):
    """``|a - b| / (|a| + |b|)`` in the 2-norm; zero when both vanish."""
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def check_layer(layer, x, rng, train=False):
    """Worst relative error over input and parameter gradients of ``sum(y * r)``."""
    w = {k: v.astype(np.float64) + 0.1 * rng.standard_normal(np.shape(v))
         for k, v in layer.init_params(rng).items()}
    w.update({k: v.astype(np.float64) for k, v in layer.init_buffers().items()})
    y, cache, _ = layer.forward(w, x, train)
    proj = rng.standard_normal(y.shape)

    def loss():
        return float(np.sum(layer.forward(w, x, train)[0] * proj))

    dx, grads = layer.backward(w, cache, proj)
    errs = [rel_error(dx, numeric_grad(loss, x))]
    for name in layer.param_shapes():
        errs.append(rel_error(grads[name], numeric_grad(loss, w[name])))
    return max(errs)
