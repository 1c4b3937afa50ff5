import math

import numpy as np
import pytest

import oracles
from sobolev_gauge.capacity import (Condenser, PlateConnectivityWarning,
                                    capacity_phi_lower_bound, p_capacity, ring_in_space)
from sobolev_gauge.geometry import BallDomain, BoxDomain, Union
from sobolev_gauge.setfn import ExponentPair

BOX = BoxDomain((-1.25, -1.25), (1.25, 1.25))


def annulus(a=0.5, b=1.0, ambient=BOX):
    return Condenser(BallDomain((0, 0), a, closed=True), BallDomain((0, 0), b), ambient)


def test_p2_annulus_converges_from_below():
    vals = [p_capacity(annulus(), 2.0, h).value for h in (1 / 32, 1 / 64, 1 / 128)]
    assert vals[0] < vals[1] < vals[2] < oracles.ANNULUS_CAPACITY[2.0]
    assert vals[2] == pytest.approx(oracles.ANNULUS_CAPACITY[2.0], rel=0.02)


def test_p3_annulus_and_initial_guess_independence():
    ref = oracles.ANNULUS_CAPACITY[3.0]
    a = p_capacity(annulus(), 3.0, 1 / 64)
    b = p_capacity(annulus(), 3.0, 1 / 64, init="random", seed=5)
    assert a.converged and b.converged
    assert a.value == pytest.approx(ref, rel=0.05)
    assert b.value == pytest.approx(a.value, rel=1e-6)
    assert a.regularized_value >= a.value and a.eps == 1e-8


def test_capacity_field_is_admissible():
    res = p_capacity(annulus(), 2.0, 1 / 32, keep_field=True)
    f = res.field
    assert np.nanmin(f.values) >= 0 and np.nanmax(f.values) <= 1
    assert f.at((0.0, 0.0)) == 1.0
    assert f.at((1.125, 0.0)) == 0.0
    mid = f.at((0.75, 0.0))
    # the p = 2 profile is log(1/r)/log 2
    assert mid == pytest.approx(math.log(1 / 0.75) / math.log(2), abs=0.03)


def test_monotonicity_in_plate_and_shell():
    base = p_capacity(annulus(0.5, 1.0), 2.0, 1 / 64).value
    bigger_plate = p_capacity(annulus(0.6, 1.0), 2.0, 1 / 64).value
    bigger_shell = p_capacity(annulus(0.5, 1.2), 2.0, 1 / 64).value
    assert bigger_plate > base > bigger_shell


def test_conformal_invariance_p_equals_n():
    small = p_capacity(annulus(0.25, 0.5), 2.0, 1 / 128).value
    large = p_capacity(annulus(0.5, 1.0), 2.0, 1 / 64).value
    assert small == pytest.approx(large, rel=1e-9)  # same grid in units of the radii


def test_degenerate_condensers():
    empty = Condenser(None, BallDomain((0, 0), 1), BOX)
    assert p_capacity(empty, 2.0, 1 / 16).value == 0
    outside = Condenser(BallDomain((0, 0), 0.9, closed=True), BallDomain((0, 0), 0.5), BOX)
    res = p_capacity(outside, 2.0, 1 / 16)
    assert math.isinf(res.value) and not res.admissible
    with pytest.raises(ValueError):
        p_capacity(annulus(), 1.0, 1 / 16)


def test_plate_connectivity_warning():
    plate = Union([BallDomain((-0.5, 0), 0.2, closed=True), BallDomain((0.5, 0), 0.2, closed=True)])
    with pytest.warns(PlateConnectivityWarning):
        p_capacity(Condenser(plate, BallDomain((0, 0), 1), BOX), 2.0, 1 / 16)


def test_nonconvergence_is_reported():
    res = p_capacity(annulus(), 3.0, 1 / 32, max_iter=1, init="random")
    assert not res.converged


def test_ring_in_space_pads_the_shell():
    cond = ring_in_space(BallDomain((0, 0), 0.2, closed=True), BallDomain((0, 0), 0.5), 0.1)
    lo, hi = cond.ambient.bbox
    assert np.allclose(lo, -0.7) and np.allclose(hi, 0.7)


PQ = ExponentPair(6, 4)


def test_phi_bound_full_space_is_finite():
    c = (0.3, -0.2)
    res = capacity_phi_lower_bound(BoxDomain((-2, -2), (2, 2)), BallDomain(c, 0.5),
                                   BallDomain(c, 0.2, closed=True), PQ, 1 / 32)
    assert math.isfinite(res.phi_lb) and res.phi_lb > 0
    expected = (res.cap_q.value ** (1 / 4) / res.cap_p.value ** (1 / 6)) ** 12
    assert res.phi_lb == pytest.approx(expected)


def test_phi_bound_degenerate_cases():
    half = BoxDomain((-2, 0), (2, 2))
    shell = BallDomain((0, -1), 0.5)
    # plate misses the domain: cap_p = 0 while cap_q > 0, so no extension is possible
    res = capacity_phi_lower_bound(half, shell, BallDomain((0, -1), 0.2, closed=True), PQ, 1 / 32)
    assert math.isinf(res.phi_lb) and res.cap_p.value == 0 and res.cap_q.value > 0
    # plate sticking out of the shell inside the domain: cap_p infinite, bound trivial
    res = capacity_phi_lower_bound(BoxDomain((-2, -2), (2, 2)), BallDomain((0, 0), 0.3),
                                   BallDomain((0, 0), 0.5, closed=True), PQ, 1 / 16)
    assert res.phi_lb == 0 and not res.cap_p.admissible
    with pytest.raises(ValueError):
        capacity_phi_lower_bound(half, shell, shell, ExponentPair(4, 4), 1 / 16)
