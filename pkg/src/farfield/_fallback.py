"""Pure numpy implementation of the hot kernels (used when the compiled core is absent)."""

import numpy as np
from numpy.polynomial import polynomial as P

BACKEND = "python"

# series/recurrence switch for z = a*s, above this the forward recurrence is stable
_SERIES_MARGIN = 10.0
_SERIES_TERMS = 120


def potential_radials(s, a, kmax):
    """h^(k)(s) for k = 0..kmax, where h(s) = (1 - exp(-a s)) / s.

    Uses h^(k)(s) = (-1)^k a^(k+1) E_k(a s) with E_k(z) = gamma(k+1, z) / z^(k+1).
    Small z: positive series for E_kmax, then the stable downward recurrence
    E_{k-1} = (z E_k + e^-z) / k.  Large z: upward recurrence E_k = (k E_{k-1} - e^-z) / z.
    """
    s = np.ascontiguousarray(s, dtype=np.float64).ravel()
    z = a * s
    ez = np.exp(-z)
    E = np.empty((kmax + 1, s.size))

    small = z <= kmax + _SERIES_MARGIN
    if small.any():
        zs = z[small]
        term = np.full(zs.shape, 1.0 / (kmax + 1))
        total = term.copy()
        for n in range(1, _SERIES_TERMS):
            term = term * zs / (kmax + n + 1)
            total += term
            if np.all(term < 1e-18 * total):
                break
        Es = np.empty((kmax + 1, zs.size))
        Es[kmax] = ez[small] * total
        for k in range(kmax, 0, -1):
            Es[k - 1] = (zs * Es[k] + ez[small]) / k
        E[:, small] = Es
    big = ~small
    if big.any():
        zb = z[big]
        Eb = np.empty((kmax + 1, zb.size))
        Eb[0] = -np.expm1(-zb) / zb
        for k in range(1, kmax + 1):
            Eb[k] = (k * Eb[k - 1] - ez[big]) / zb
        E[:, big] = Eb

    signs = (-1.0) ** np.arange(kmax + 1)
    powers = a ** np.arange(1, kmax + 2)
    return E * (signs * powers)[:, None]


def table_sum(x1, x2, radial, comp, k, i, j, coef, ncomp):
    """out[c, p] = sum over terms with comp == c of coef * radial[k, p] * x1[p]^i * x2[p]^j."""
    x1 = np.ascontiguousarray(x1, dtype=np.float64).ravel()
    x2 = np.ascontiguousarray(x2, dtype=np.float64).ravel()
    out = np.zeros((ncomp, x1.size))
    if coef.size == 0:
        return out
    deg = int(max(i.max(), j.max())) + 1
    for c in np.unique(comp):
        sel_c = comp == c
        for kk in np.unique(k[sel_c]):
            sel = sel_c & (k == kk)
            C = np.zeros((deg, deg))
            np.add.at(C, (i[sel], j[sel]), coef[sel])
            out[c] += radial[kk] * P.polyval2d(x1, x2, C)
    return out
