"""Vectorised adaptive Simpson quadrature.

All integrals of a batch are refined together: every pass evaluates the
integrand once on the midpoints of all still-unconverged panels, so the cost
is a handful of NumPy calls regardless of the batch size.
"""

import numpy as np

from .errors import NumericError


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=60):
    """Integrate ``f`` over ``[a, b]`` elementwise.

    Parameters
    ----------
    f : callable
        Vectorised integrand, ``f(x)`` must accept and return arrays.
    a, b : array_like
        Lower and upper limits; broadcast against each other. ``b < a`` is
        allowed and yields the negated integral.
    tol : float
        Absolute error target per integral.
    max_depth : int
        Maximum number of bisections of any panel.

    Returns
    -------
    ndarray
        Integral values with the broadcast shape of ``a`` and ``b``.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a.shape
    lo = a.ravel().copy()
    hi = b.ravel().copy()
    out = np.zeros(lo.size)
    if lo.size == 0:
        return out.reshape(shape)

    owner = np.arange(lo.size)
    fl, fh = f(lo), f(hi)
    mid = 0.5 * (lo + hi)
    fm = f(mid)
    whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh)
    ptol = np.full(lo.size, float(tol))

    for depth in range(max_depth + 1):
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = f(lm)
        frm = f(rm)
        left = (mid - lo) / 6.0 * (fl + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fh)
        diff = left + right - whole
        done = np.abs(diff) <= 15.0 * ptol
        # Panels that shrank to rounding level cannot improve further.
        done |= (mid <= lo) | (mid >= hi)
        if done.any():
            np.add.at(out, owner[done], left[done] + right[done] + diff[done] / 15.0)
        keep = ~done
        if not keep.any():
            return out.reshape(shape)
        if depth == max_depth:
            worst = float(np.max(np.abs(diff[keep])))
            raise NumericError(
                f"adaptive Simpson did not converge after {max_depth} bisections "
                f"(worst panel error estimate {worst:.3e}, tolerance {tol:.1e})"
            )
        lo, mid, hi = lo[keep], mid[keep], hi[keep]
        fl, fm, fh = fl[keep], fm[keep], fh[keep]
        flm, frm = flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        owner = owner[keep]
        ptol = ptol[keep] * 0.5
        # Split every surviving panel into its two halves.
        lo = np.concatenate([lo, mid])
        hi_new = np.concatenate([mid, hi])
        mid = np.concatenate([lm[keep], rm[keep]])
        fl = np.concatenate([fl, fm])
        fh = np.concatenate([fm, fh])
        fm = np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        owner = np.concatenate([owner, owner])
        ptol = np.concatenate([ptol, ptol])
        hi = hi_new
    return out.reshape(shape)  # pragma: no cover
