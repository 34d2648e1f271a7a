import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from satattack import roots


def test_bisect_sqrt2():
    x = roots.bisect(lambda x: x * x - 2.0, 0.0, 2.0)
    assert x == pytest.approx(math.sqrt(2.0), rel=1e-15)


@given(st.floats(-50, 50))
def test_bisect_linear_root(c):
    x = roots.bisect(lambda x: x - c, -100.0, 100.0)
    assert abs(x - c) < 1e-9


def test_bisect_requires_sign_change():
    with pytest.raises(roots.NoRootError):
        roots.bisect(lambda x: x * x + 1.0, -1.0, 1.0)


def test_bisect_rejects_poles():
    # a jump discontinuity brackets a sign change but has no root
    with pytest.raises(roots.NoRootError):
        roots.bisect(lambda x: 1.0 if x > 0.3 else -1.0, 0.0, 1.0)


def test_bisect_endpoint_root():
    assert roots.bisect(lambda x: x, 0.0, 1.0) == 0.0


def test_expand_bracket():
    lo, hi = roots.expand_bracket(lambda x: x - 37.0, 1.0, 2.0, 1e3)
    assert lo < 37.0 <= hi
    with pytest.raises(roots.NoRootError):
        roots.expand_bracket(lambda x: 1.0, 1.0, 2.0, 100.0)
    with pytest.raises(ValueError):
        roots.expand_bracket(lambda x: x, -1.0, 0.0, 10.0)


def test_first_sign_change():
    assert roots.first_sign_change(lambda x: x - 2.5, [0, 1, 2, 3, 4]) == (2, 3)
    assert roots.first_sign_change(lambda x: 1.0, [0, 1]) is None
