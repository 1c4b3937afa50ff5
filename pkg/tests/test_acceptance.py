"""Acceptance criteria 1-9.

Each criterion prints exactly one line ``[PASS] C<k> ...`` or ``[FAIL] C<k> ...``
(printed even under pytest's output capture) and asserts its outcome.  Run
standalone with ``python3 tests/test_acceptance.py`` for the summary alone.
"""

import contextlib
import io
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oracles  # noqa: E402
from sobolev_gauge.capacity import Condenser, capacity_phi_lower_bound, p_capacity  # noqa: E402
from sobolev_gauge.cli import run  # noqa: E402
from sobolev_gauge.conditions import cusp_admissible_region, sharpness_trend  # noqa: E402
from sobolev_gauge.geometry import (Ball, BallDomain, BoxDomain, CuspDomain,  # noqa: E402
                                    ball_intersection_volume, l_domain, loglog_slope,
                                    unit_disc)
from sobolev_gauge.metric import (CELL_GRADIENT_EPS, STENCIL_EPS,  # noqa: E402
                                  build_grid_graph, intrinsic_distance, vaisala_test_function)
from sobolev_gauge.setfn import (AdditiveSetFunction, AxisBox, DemoExtensionOperator,  # noqa: E402
                                 ExponentPair, Region, bump_family, estimate_phi)

DOMAINS = Path(__file__).resolve().parent.parent / "domains"


def report(capsys, ok: bool, tag: str, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


# ------------------------------------------------------------------ C1

def criterion_1(capsys=None):
    t0 = time.perf_counter()
    slopes, oracle_ok = {}, True
    for alpha in (1.5, 2.0, 3.0):
        dom = CuspDomain(alpha)
        vols = []
        for k, r in enumerate(oracles.CUSP_RADII):
            est = ball_intersection_volume(dom, Ball((0.0, 0.0), r), budget=10**5, seed=k)
            vols.append(est.value)
            ref = oracles.CUSP_VOLUMES[alpha][k]
            oracle_ok &= abs(est.value - ref) <= 2 * est.stderr + 1e-12 * ref
        slopes[alpha] = loglog_slope(oracles.CUSP_RADII, vols)
    elapsed = time.perf_counter() - t0
    slope_ok = all(abs(s - (a + 1)) <= 0.05 for a, s in slopes.items())
    ok = slope_ok and oracle_ok and elapsed < 60
    desc = ", ".join(f"a={a}: {s:.4f} (quad {oracles.CUSP_SLOPES[a]:.4f})"
                     for a, s in slopes.items())
    return report(capsys, ok, "C1 cusp volume law",
                  f"slopes {desc}; volumes within CI of quadrature={oracle_ok}; {elapsed:.1f}s")


# ------------------------------------------------------------------ C2

def criterion_2(capsys=None):
    a = cusp_admissible_region(3, 4).q_max
    lips = {p: cusp_admissible_region(1, p).q_max for p in (2, 4, 8)}
    ok = a == 2 and all(v == p for p, v in lips.items())
    return report(capsys, ok, "C2 admissibility formula",
                  f"q_max(3,4)={a}; q_max(1,p)={lips}")


# ------------------------------------------------------------------ C3

def criterion_3(capsys=None):
    t0 = time.perf_counter()
    wrong = []
    n_cases = 0
    for alpha in (1.5, 2.0, 3.0):
        for p in (4.0, 6.0):
            thr = cusp_admissible_region(alpha, p).q_max
            for q in (max(1.0, 0.6 * thr), thr, 0.5 * (thr + p)):
                tr = sharpness_trend(alpha, ExponentPair(p, q), budget=10**5, seed=1)
                n_cases += 1
                if tr.bounded != (q <= thr):
                    wrong.append((alpha, p, round(q, 3), round(tr.slope, 3)))
    elapsed = time.perf_counter() - t0
    ok = not wrong and elapsed < 300
    return report(capsys, ok, "C3 sharpness dichotomy",
                  f"{n_cases - len(wrong)}/{n_cases} (alpha, p, q) cases classified correctly "
                  f"(slope tol 0.1), mismatches={wrong}; {elapsed:.1f}s")


# ------------------------------------------------------------------ C4

def criterion_4(capsys=None):
    box = BoxDomain((-1.25, -1.25), (1.25, 1.25))
    cond = Condenser(BallDomain((0, 0), 0.5, closed=True), BallDomain((0, 0), 1.0), box)
    parts = []
    ok = True
    for p in (2.0, 3.0):
        closed = oracles.radial_capacity_closed_form(p)
        profile = oracles.radial_capacity_minimized(p)
        t0 = time.perf_counter()
        res = p_capacity(cond, p, 1 / 256)
        elapsed = time.perf_counter() - t0
        ref = profile  # the 1-D minimization pins the value; closed form cross-checks it
        err = abs(res.value - ref) / ref
        good = err <= 0.05 and res.converged and elapsed < 120 and abs(profile / closed - 1) < 1e-4
        ok &= good
        parts.append(f"p={p:g}: {res.value:.4f} vs {ref:.4f} ({100 * err:.2f}%, {elapsed:.1f}s)")
    return report(capsys, ok, "C4 capacity oracle", "; ".join(parts))


# ------------------------------------------------------------------ C5

def criterion_5(capsys=None):
    disc = intrinsic_distance(unit_disc(), (-0.5, 0.0), (0.5, 0.0), 0.01, 16)
    disc_err = abs(disc.d_omega - 1.0)
    x, y = oracles.L_PAIR
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L16 = intrinsic_distance(l_domain(), x, y, 1 / 512, 16).d_omega
    L_err = abs(L16 / oracles.L_DISTANCE - 1)
    ok = disc_err <= 0.028 and L_err <= 0.01
    return report(capsys, ok, "C5 geodesic oracles",
                  f"disc d={disc.d_omega:.6f} (err {100 * disc_err:.2f}% <= 2.8%, 16-nbr); "
                  f"L d={L16:.6f} vs {oracles.L_DISTANCE:.6f} ({100 * L_err:.2f}%, 16-nbr, "
                  f"h=1/512)")


# ------------------------------------------------------------------ C6

VAISALA_PAIRS = {
    "disc": (unit_disc(), [((0, 0), (0.5, 0)), ((-0.5, 0.3), (0.6, -0.2)),
                           ((0.1, 0.8), (0.1, -0.8))]),
    "L": (l_domain(), [oracles.L_PAIR, ((0.2, 0.2), (0.8, 0.6)), ((0.5, 1.5), (1.8, 1.8))]),
    "cusp2": (CuspDomain(2.0), [((0.5, 0.1), (1.5, 0.5)), ((0.3, 0.05), (0.9, -0.2)),
                                ((2.0, 1.0), (1.0, 0.0))]),
}


def criterion_6(capsys=None, stencil=8):
    eps = STENCIL_EPS[stencil]
    failures = []
    worst_grad = 0.0
    for name, (dom, pairs) in VAISALA_PAIRS.items():
        g = build_grid_graph(dom, 1 / 64, stencil)
        for x, y in pairs:
            tf, rep = vaisala_test_function(dom, x, y, graph=g)
            f = tf.values
            checks = {
                "range": f.min() >= 0 and f.max() <= 1,
                "f(x)=1": f[tf.x_node] == 1,
                "f(y)=0": f[tf.y_node] == 0,
                "gradient": rep.max_gradient <= 1 + max(eps, CELL_GRADIENT_EPS) + 1e-12,
                "support": rep.support_radius < 1 + eps,
            }
            worst_grad = max(worst_grad, rep.max_gradient)
            failures += [f"{name}{x}->{y}:{k}" for k, v in checks.items() if not v]
    ok = not failures
    return report(capsys, ok, "C6 Vaisala suite",
                  f"9 pairs on disc/L/cusp2, {stencil}-nbr, eps={eps:.4f}; "
                  f"max R*|grad f|={worst_grad:.4f}; failures={failures}")


# ------------------------------------------------------------------ C7

def _generators(rng, count):
    cells = rng.choice(25, size=count, replace=False)
    gens = []
    for c in cells:
        ox, oy = 2.0 * (c % 5), 2.0 * (c // 5)
        if rng.random() < 0.5:
            gens.append(Ball((ox + 1, oy + 1), float(rng.uniform(0.3, 0.95))))
        else:
            w, h = rng.uniform(0.4, 1.9, 2)
            gens.append(AxisBox((ox, oy), (ox + w, oy + h)))
    return gens


def criterion_7(capsys=None):
    def rate(pts):
        return 1.0 + np.cos(pts[..., 0]) ** 2 + 0.25 * pts[..., 1]

    set_fail = 0
    for case in range(100):
        rng = np.random.default_rng(10_000 + case)
        gens = _generators(rng, int(rng.integers(2, 6)))
        split = int(rng.integers(1, len(gens)))
        A, B, W = Region.of(*gens[:split]), Region.of(*gens[split:]), Region.of(*gens)
        atomic = AdditiveSetFunction(atoms={g: int(rng.integers(0, 4096)) / 128 for g in gens})
        dens = AdditiveSetFunction(density=rate, budget=20_000, seed=case)
        ok_atomic = (atomic.evaluate(W).value == atomic.evaluate(A).value + atomic.evaluate(B).value
                     and atomic.evaluate(A).value <= atomic.evaluate(W).value)
        va, vb, vw = dens.evaluate(A), dens.evaluate(B), dens.evaluate(W)
        err = math.sqrt(va.stderr**2 + vb.stderr**2 + vw.stderr**2)
        ok_dens = abs(vw.value - va.value - vb.value) <= 2 * err and va.value <= vw.value + 2 * err
        set_fail += not (ok_atomic and ok_dens)

    op = DemoExtensionOperator()
    pq = ExponentPair(6, 4)
    phi_fail = 0
    for case in range(20):
        rng = np.random.default_rng(20_000 + case)
        c = (float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-0.3, 0.4)))
        r1 = float(rng.uniform(0.3, 0.6))
        A1, A2 = Ball(c, r1), Ball(c, r1 * float(rng.uniform(1.1, 1.8)))
        fam1 = bump_family(A1, 50, seed=case)
        fam2 = bump_family(A2, 50, seed=case + 500)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            half = estimate_phi(op, A1, pq, family=fam1[:25], h=0.02).phi_lb
            full = estimate_phi(op, A1, pq, family=fam1, h=0.02).phi_lb
            big = estimate_phi(op, A2, pq, family=fam1 + fam2, h=0.02).phi_lb
        phi_fail += not (half <= full <= big)
    ok = set_fail == 0 and phi_fail == 0
    return report(capsys, ok, "C7 set-function properties",
                  f"additivity/monotonicity {100 - set_fail}/100 configurations; "
                  f"Phi-estimate monotonicity {20 - phi_fail}/20 cases")


# ------------------------------------------------------------------ C8

def criterion_8(capsys=None):
    box = BoxDomain((-3, -3), (3, 3))
    pq = ExponentPair(6, 4)
    rng = np.random.default_rng(8)
    values = []
    for _ in range(10):
        c = tuple(rng.uniform(-1.5, 1.5, 2).tolist())
        R = float(rng.uniform(0.3, 0.9))
        plate = BallDomain(c, R * float(rng.uniform(0.2, 0.6)), closed=True)
        res = capacity_phi_lower_bound(box, BallDomain(c, R), plate, pq, 1 / 32)
        values.append(res.phi_lb)
    ok = all(math.isfinite(v) and v > 0 for v in values)
    return report(capsys, ok, "C8 capacity bound self-consistency",
                  f"10 condensers in a full box, (p,q)=(6,4): phi_lb range "
                  f"[{min(values):.4g}, {max(values):.4g}], all finite={ok}")


# ------------------------------------------------------------------ C9

def _d(name):
    return str(DOMAINS / name)


DETERMINISM_RUNS = {
    "volume": ["volume", "--domain", _d("cusp2.json"), "--center", "0,0", "--radius", "0.015625",
               "--samples", "1e5", "--seed", "7"],
    "density": ["density", "--domain", _d("cusp2.json"), "--center", "0,0", "--radius", "0.1",
                "--p", "6", "--q", "4", "--samples", "20000", "--seed", "2"],
    "geodesic": ["geodesic", "--domain", _d("l_domain.json"), "--from", "0.5,0.25",
                 "--to", "1.5,1.25", "--h", "0.02", "--stencil", "16"],
    "m-scale": ["m-scale", "--domain", _d("l_domain.json"), "--center", "1.05,1.05",
                "--radius", "0.3", "--radius", "0.6"],
    "vaisala": ["vaisala", "--domain", _d("cusp2.json"), "--from", "0.5,0.1", "--to", "1.5,0.5",
                "--format", "json"],
    "capacity": ["capacity", "--condenser", _d("annulus_condenser.json"), "--p", "3",
                 "--h", "0.03125", "--init", "random", "--seed", "5"],
    "phi-estimate": ["phi-estimate", "--ball", "0.2,0.1,0.5", "--p", "6", "--q", "4",
                     "--seed", "11"],
    "check": ["check", "--domain", _d("cusp2.json"), "--p", "6", "--q", "4",
              "--condition", "metric", "--probes", "6", "--seed", "3"],
    "admissible-region": ["admissible-region", "--alpha", "2", "--format", "json"],
    "norm-bound": ["norm-bound", "--domain", _d("cusp2.json"), "--p", "6", "--q", "4",
                   "--radius", "0.05", "--radius", "0.1", "--spacing", "0.2", "--seed", "1"],
}


def _capture(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = run(argv)
    return code, buf.getvalue()


def criterion_9(capsys=None):
    bad = []
    for name, argv in DETERMINISM_RUNS.items():
        c1, o1 = _capture(argv)
        c2, o2 = _capture(argv)
        if not (c1 == c2 == 0 and o1 == o2 and o1):
            bad.append(name)
    ok = not bad
    return report(capsys, ok, "C9 determinism",
                  f"{len(DETERMINISM_RUNS) - len(bad)}/{len(DETERMINISM_RUNS)} subcommands "
                  f"byte-identical on rerun; differing={bad}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"C{i}" for i in range(1, 10)])
def test_criterion(criterion, capsys):
    assert criterion(capsys)


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
