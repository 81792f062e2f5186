"""Shared test helpers."""

import numpy as np
import pytest


def fd1(fn, x, h=None):
    """Richardson-extrapolated central first difference."""
    if h is None:
        h = 1e-5 * max(1.0, abs(x))

    def d(step):
        return (fn(x + step) - fn(x - step)) / (2.0 * step)

    return (4.0 * d(h / 2.0) - d(h)) / 3.0


def fd2(fn, x, h=None):
    """Richardson-extrapolated central second difference."""
    if h is None:
        h = 1e-4 * max(1.0, abs(x))

    def d(step):
        return (fn(x + step) - 2.0 * fn(x) + fn(x - step)) / (step * step)

    return (4.0 * d(h / 2.0) - d(h)) / 3.0


def assert_derivative_contract(fn, points, rel=1e-5):
    """ScalarFn contract: analytic derivatives match Richardson differences."""
    for x in points:
        if fn.deriv1 is not None:
            num = fd1(lambda t: float(np.atleast_1d(fn.eval(t))[0]), x)
            ana = float(np.atleast_1d(fn.deriv1(x))[0])
            assert ana == pytest.approx(num, rel=rel, abs=1e-12 * max(1.0, abs(num)))
        if fn.deriv2 is not None and fn.deriv1 is not None:
            num = fd1(lambda t: float(np.atleast_1d(fn.deriv1(t))[0]), x)
            ana = float(np.atleast_1d(fn.deriv2(x))[0])
            assert ana == pytest.approx(num, rel=rel, abs=1e-12 * max(1.0, abs(num)))
