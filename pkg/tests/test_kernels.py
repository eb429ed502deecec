import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from corrcox import kernels
from corrcox.core.hazard import tent_transform
from corrcox.estimator import _left_area, _tent_piece_area


def random_instance(rng, k=None, floor=None):
    k = k or int(rng.integers(1, 30))
    lip = float(rng.uniform(0.2, 3.0))
    gaps = rng.uniform(0.005, 0.2, k - 1)
    s1 = float(rng.uniform(0.01, 0.3))
    floor = float(rng.uniform(0.0, 0.3)) if floor is None else floor
    v = np.empty(k)
    v[0] = floor + rng.uniform(0.05, 1.5)
    for i in range(1, k):
        step = rng.uniform(-0.95, 0.95) * lip * gaps[i - 1]
        v[i] = max(floor + 1e-3, v[i - 1] + step)
    events = rng.integers(0, 3, k).astype(float)
    risk_w = rng.uniform(0.2, 2.0, k)
    tail = np.cumsum(risk_w[::-1])[::-1]
    return dict(v=v, events=events, r0=float(tail[0]), risk=np.ascontiguousarray(tail[1:]),
                gaps=gaps, s1=s1, lip=lip, floor=floor)


def args(inst, v=None):
    return ((inst["v"] if v is None else v), inst["events"], inst["r0"], inst["risk"],
            inst["gaps"], inst["s1"], inst["lip"], inst["floor"])


@pytest.mark.parametrize("seed", range(20))
def test_areas_match_geometry(seed):
    inst = random_instance(np.random.default_rng(seed))
    v, gaps, lip, fl = inst["v"], inst["gaps"], inst["lip"], inst["floor"]
    cum = kernels.knot_cumulative(v, gaps, inst["s1"], lip, fl)
    knots = inst["s1"] + np.r_[0.0, np.cumsum(gaps)]
    h = tent_transform(knots, v, lip, knots[-1] + 0.1, floor=fl)
    assert np.allclose(cum, h.cumulative(knots), rtol=1e-12, atol=1e-14)
    a0 = _left_area(v[0], inst["s1"], lip, fl)
    pieces = _tent_piece_area(v[:-1], v[1:], gaps, lip, fl)
    assert np.allclose(cum, a0 + np.r_[0.0, np.cumsum(pieces)], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_loop_and_vector_backends_agree(seed):
    inst = random_instance(np.random.default_rng(100 + seed))
    # the *_loop sources stay plain Python; only their aliases are jitted
    a = kernels._barrier_value_loop(*args(inst))
    b = kernels._barrier_value_vec(*args(inst))
    assert np.allclose(a, b, rtol=1e-12)
    ta = kernels._barrier_terms_loop(*args(inst), 7.0)
    tb = kernels._barrier_terms_vec(*args(inst), 7.0)
    for x, y in zip(ta, tb):
        assert np.allclose(x, y, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_jitted_kernels_match_python_source(seed):
    inst = random_instance(np.random.default_rng(200 + seed))
    fast = kernels._barrier_terms(*args(inst), 3.0)
    slow = kernels._barrier_terms_vec(*args(inst), 3.0)
    for x, y in zip(fast, slow):
        assert np.allclose(x, y, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_gradient_and_hessian_by_finite_differences(seed):
    inst = random_instance(np.random.default_rng(300 + seed))
    _, g, hd, ho = kernels.reduced_terms(*args(inst))
    v = inst["v"]
    k = v.size
    h = 1e-6
    fd = np.empty(k)
    fdh = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        fp = kernels.reduced_terms(*args(inst, v + e))
        fm = kernels.reduced_terms(*args(inst, v - e))
        fd[i] = (fp[0] - fm[0]) / (2 * h)
        fdh[i] = (fp[1] - fm[1]) / (2 * h)
    assert np.max(np.abs(g - fd)) <= 1e-4 * max(1.0, np.max(np.abs(g)))
    hess = np.diag(hd) + np.diag(ho, 1) + np.diag(ho, -1)
    # the Hessian jumps across tent kinks; compare away from them
    assert np.max(np.abs(hess - fdh)) <= 1e-3 * max(1.0, np.max(np.abs(hess))) or \
        _near_kink(inst)


def _near_kink(inst, tol=1e-5):
    v, fl, lip = inst["v"], inst["floor"], inst["lip"]
    h = 0.5 * (v[:-1] + v[1:] - 2 * fl - lip * inst["gaps"])
    return bool(np.any(np.abs(h) < tol) or abs(v[0] - fl - lip * inst["s1"]) < tol)


@given(st.integers(0, 10_000))
def test_reduced_objective_is_concave(seed):
    inst = random_instance(np.random.default_rng(seed))
    _, _, hd, ho = kernels.reduced_terms(*args(inst))
    if hd.size == 1:
        assert hd[0] <= 1e-12
    else:
        top = eigh_tridiagonal(hd, ho, eigvals_only=True).max()
        assert top <= 1e-10 * max(1.0, np.abs(hd).max())
    # midpoint inequality along a feasible chord
    other = random_instance(np.random.default_rng(seed + 1), k=inst["v"].size, floor=inst["floor"])
    w = other["v"]
    ok = np.all(np.abs(np.diff(w)) <= inst["lip"] * inst["gaps"])
    if ok:
        f = lambda x: kernels.reduced_terms(*args(inst, x))[0]
        assert f(0.5 * (inst["v"] + w)) >= 0.5 * (f(inst["v"]) + f(w)) - 1e-10


@pytest.mark.parametrize("k", [1, 2, 7, 50])
def test_spd_tridiagonal_solve(k, rng):
    off = rng.uniform(-1, 1, k - 1)
    diag = 2.5 + rng.uniform(0, 1, k)
    rhs = rng.normal(size=k)
    mat = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(kernels.spd_tridiag_solve(diag, off, rhs), np.linalg.solve(mat, rhs))


def test_barrier_solution_satisfies_kkt():
    inst = random_instance(np.random.default_rng(7), k=25, floor=0.0)
    inst["events"][:] = np.maximum(inst["events"], 1.0)
    v0 = np.full(25, 0.5)
    v, steps, gap, conv = kernels.barrier_maximize(
        inst["events"], inst["r0"], inst["risk"], inst["gaps"], inst["s1"], inst["lip"],
        0.0, v0, 1.0, 1e-9, 50.0, 5000)
    assert conv and gap <= 1e-9
    assert np.all(np.abs(np.diff(v)) <= inst["lip"] * inst["gaps"] + 1e-12)
    # no feasible coordinate move improves the objective
    f0 = kernels.reduced_terms(*args(inst, v))[0]
    for i in range(v.size):
        for d in (-1e-4, 1e-4):
            w = v.copy()
            w[i] += d
            if w[i] > 0 and np.all(np.abs(np.diff(w)) <= inst["lip"] * inst["gaps"]):
                assert kernels.reduced_terms(*args(inst, w))[0] <= f0 + 1e-9
