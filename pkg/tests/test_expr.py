import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sobolev_gauge.expr import ExpressionError, compile_predicate

PTS = np.array([[0.0, 0.0], [0.5, 0.5], [2.0, -1.0], [-0.3, 0.9]])


@pytest.mark.parametrize("src, expected", [
    ("x^2 + y^2 < 1", [True, True, False, True]),
    ("x**2 + y**2 < 1", [True, True, False, True]),
    ("0 < x <= 1", [False, True, False, False]),
    ("abs(y) < x", [False, False, True, False]),
    ("max(abs(x), abs(y)) < 1 and not (x > 0 and y > 0)", [True, False, False, True]),
    ("sqrt(x1*x1 + x2*x2) >= 1 or x2 > 0.8", [False, False, True, True]),
    ("min(x, y, 0.1) > -0.5", [True, True, False, True]),
])
def test_predicates(src, expected):
    assert compile_predicate(src, 2)(PTS).tolist() == expected


@pytest.mark.parametrize("src", [
    "x + y",                 # not boolean
    "__import__('os')",      # calls outside the whitelist
    "x.real > 0",            # attribute access
    "z > 0",                 # variable beyond the dimension
    "x == 0",                # equality is not in the grammar
    "x < ",                  # syntax
    "min(x) < 1",            # min needs two arguments
    "lambda: 1",
])
def test_rejects(src):
    with pytest.raises(ExpressionError):
        compile_predicate(src, 2)(PTS)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))
def test_matches_numpy(cx, cy, r):
    pred = compile_predicate(f"(x - {cx})^2 + (y - {cy})^2 < {r}^2", 2)
    pts = np.random.default_rng(0).uniform(-6, 6, (200, 2))
    ref = np.sum((pts - [cx, cy]) ** 2, axis=1) < r**2
    assert np.array_equal(pred(pts), ref)


def test_caret_binds_like_power():
    pred = compile_predicate("2 * x^2 - y^3 > 1", 2)
    pts = np.array([[1.0, 0.5], [0.5, 0.0], [-1.0, -1.0]])
    assert pred(pts).tolist() == (2 * pts[:, 0] ** 2 - pts[:, 1] ** 3 > 1).tolist()
