"""Independent reference computations used by the tests."""

import itertools

import numpy as np
from scipy.optimize import minimize

from dynplast.convex_sets import VonMisesCylinder
from dynplast.tensor_core import sym_prod


def brute_infconv(S, K, nu, z, n_grid=11):
    """Minimize ``S z'.z'/2 + H((z' - z) (.) nu)`` by grid search and simplex refinement.

    Returns the minimal value and the minimizer ``z'``. The support function
    is the only ingredient taken from the library.
    """
    S = np.asarray(S, float)
    z = np.asarray(z, float)
    n = len(z)
    if isinstance(K, VonMisesCylinder):
        # H is finite only for (z' - z) orthogonal to nu
        _, _, vt = np.linalg.svd(nu[None, :])
        basis = vt[1:].T
        origin = z
    else:
        basis = np.eye(n)
        origin = np.zeros(n)

    def point(a):
        return origin + basis @ a

    def J(a):
        zp = point(a)
        return 0.5 * zp @ S @ zp + float(K.support(sym_prod(zp - z, nu)))

    lam_min = np.linalg.eigvalsh(S).min()
    radius = np.sqrt(max(z @ S @ z, 1e-30) / lam_min) + 1e-12
    if isinstance(K, VonMisesCylinder):
        centre = np.zeros(basis.shape[1])
        radius += np.linalg.norm(z)
    else:
        centre = np.zeros(n)
    axis = np.linspace(-radius, radius, n_grid)
    grid = np.array(list(itertools.product(axis, repeat=basis.shape[1]))) + centre
    vals = np.array([J(a) for a in grid])
    best = grid[np.argmin(vals)]
    step = 2 * radius / (n_grid - 1)
    for _ in range(4):
        simplex = np.vstack([best, best + step * np.eye(len(best))])
        res = minimize(J, best, method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 40000,
                                "maxfev": 80000, "initial_simplex": simplex})
        best = res.x
        step *= 1e-2
    return J(best), point(best)


def fd_gradient(f, x, h=1e-6):
    """Central differences."""
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g
