"""Independent oracles used by the test suite.

Everything here is deliberately dumb and slow: central finite differences,
dense quadrature, brute-force nearest neighbours, analytic intersections.
None of it shares code with the implementation paths it is used to check.
"""

import numpy as np

from vdnfields.autodiff import Tape, Tensor


def finite_difference_grads(fn, arrays, h):
    """Central-difference gradient of scalar fn(*arrays) wrt each array."""
    grads = []
    for k, base in enumerate(arrays):
        base = np.asarray(base, dtype=np.float64)
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(*arrays_with(arrays, k, base))
            flat[i] = orig - h
            fm = fn(*arrays_with(arrays, k, base))
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def arrays_with(arrays, k, replacement):
    out = list(arrays)
    out[k] = replacement
    return out


def gradcheck(build_loss, arrays, dtype=np.float64, h=None, rtol=None):
    """Compare tape gradients of build_loss(*leaf tensors) with central FD.

    Returns the worst relative error across all inputs. `build_loss` must be
    a pure function of its tensor arguments.
    """
    if h is None:
        h = 1e-5 if dtype == np.float64 else 1e-3
    arrays = [np.asarray(a, dtype=dtype) for a in arrays]
    leaves = [Tensor(a.copy(), dtype=dtype, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build_loss(*leaves)
        tape.backward(loss)
    analytic = [leaf.grad.astype(np.float64) for leaf in leaves]

    def scalar_fn(*arrs):
        ts = [Tensor(np.asarray(a, dtype=dtype)) for a in arrs]
        return float(build_loss(*ts).data.reshape(-1)[0])

    numeric = finite_difference_grads(scalar_fn, arrays, h)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.abs(ga) + np.abs(gn), 1e-4 if dtype == np.float32 else 1e-8)
        rel = np.abs(ga - gn) / denom
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst


def ray_sphere_hits(origin, direction, center, radius):
    """Analytic quadratic-root ray/sphere intersection; returns (t0, t1) or None."""
    o = np.asarray(origin, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    v = np.asarray(direction, dtype=np.float64)
    b = 2.0 * float(o @ v)
    c = float(o @ o) - radius * radius
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return None
    s = np.sqrt(disc)
    return (-b - s) / 2.0, (-b + s) / 2.0


def quadrature_weights(f_of_t, t_near, t_far, s, n=10_000):
    """Dense-grid rendering weights for a 1-d SDF profile along a ray.

    Evaluates the continuous density rho = max(-d/dt Phi_s(f) / Phi_s(f), 0)
    on a fine grid, accumulates transmittance by trapezoid quadrature and
    returns (t_grid, w_grid, integral of w).
    """
    t = np.linspace(t_near, t_far, n)
    f = f_of_t(t)
    phi = 1.0 / (1.0 + np.exp(-s * f))
    dphi_dt = np.gradient(phi, t)
    rho = np.maximum(-dphi_dt / np.maximum(phi, 1e-300), 0.0)
    dt = np.diff(t)
    seg = 0.5 * (rho[:-1] + rho[1:]) * dt
    acc = np.concatenate([[0.0], np.cumsum(seg)])
    trans = np.exp(-acc)
    w = trans * rho
    integral = float(np.sum(0.5 * (w[:-1] + w[1:]) * dt))
    return t, w, integral


def brute_force_chamfer(pa, pb, order=1):
    """All-pairs nearest-neighbour chamfer between two point sets."""
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    dab = np.sqrt(d2.min(axis=1))
    dba = np.sqrt(d2.min(axis=0))
    if order == 1:
        return 0.5 * (dab.mean() + dba.mean())
    return 0.5 * ((dab**2).mean() + (dba**2).mean())


def weight_entropy(w):
    w = np.asarray(w, dtype=np.float64)
    p = w / max(w.sum(), 1e-300)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
