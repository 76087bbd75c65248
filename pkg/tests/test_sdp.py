import cvxpy as cp
import numpy as np
import pytest

from blsmo.errors import Infeasible
from blsmo.sdp import SdpBuilder, solve_cvxpy, write_sdpa


def _small_problem():
    b = SdpBuilder()
    b.symmetric("S", 2)
    b.matrix("K", 2, 1)
    b.scalar("t")
    b.psd("lmi", lambda v: np.block([[v["S"], v["K"]], [v["K"].T, v["t"]]]))
    b.equal("trace", lambda v: np.trace(v["S"]) - 2.0)
    b.minimize(lambda v: v["t"])
    return b.build()


def test_coefficients_reproduce_the_affine_map():
    p = _small_problem()
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=p.n_vars)
        v = p.unpack(x)
        want = np.block([[v["S"], v["K"]], [v["K"].T, v["t"]]])
        np.testing.assert_allclose(p.lmis[0].evaluate(x), want, atol=1e-14)
        np.testing.assert_allclose(p.A_eq @ x - p.b_eq, [np.trace(v["S"]) - 2.0], atol=1e-14)


def test_objective_returning_a_bare_variable():
    p = _small_problem()
    assert p.c[p.variables["t"].offset] == 1.0
    assert np.count_nonzero(p.c) == 1


def test_symmetric_variable_packing():
    p = _small_problem()
    assert p.variables["S"].size == 3 and p.n_vars == 3 + 2 + 1
    S = p.variables["S"].unpack(np.array([1.0, 2.0, 3.0, 0, 0, 0]))
    np.testing.assert_array_equal(S, [[1, 2], [2, 3]])


def test_solve_known_optimum():
    b = SdpBuilder()
    b.scalar("t")
    b.psd("lmi", lambda v: np.array([[v["t"][0, 0], 1.0], [1.0, v["t"][0, 0]]]))
    b.minimize(lambda v: v["t"])
    res = solve_cvxpy(b.build())
    assert res.objective == pytest.approx(1.0, abs=1e-7)


def test_margin_shifts_the_constraint():
    b = SdpBuilder()
    b.scalar("t")
    b.psd("lmi", lambda v: v["t"], margin=0.5)
    b.minimize(lambda v: v["t"])
    assert solve_cvxpy(b.build()).objective == pytest.approx(0.5, abs=1e-7)


def test_infeasible_raises():
    b = SdpBuilder()
    b.scalar("t")
    b.psd("pos", lambda v: v["t"])
    b.nsd("neg", lambda v: v["t"] + 1.0)
    with pytest.raises(Infeasible):
        solve_cvxpy(b.build())


def _read_sdpa(path):
    """Minimal reader for the sparse SDPA format, written independently of the writer."""
    lines = [ln for ln in open(path).read().splitlines() if ln and ln[0] not in "*\""]
    m = int(lines[0])
    nblocks = int(lines[1])
    sizes = [int(s) for s in lines[2].replace(",", " ").split()]
    c = np.array([float(v) for v in lines[3].split()])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for ln in lines[4:]:
        k, blk, i, j, v = ln.split()
        M = mats[int(k)][int(blk) - 1]
        M[int(i) - 1, int(j) - 1] = M[int(j) - 1, int(i) - 1] = float(v)
    assert len(sizes) == nblocks
    return c, mats


def test_sdpa_round_trip(tmp_path):
    p = _small_problem()
    path = tmp_path / "p.dat-s"
    write_sdpa(p, path)
    c, mats = _read_sdpa(path)
    x = cp.Variable(len(c))
    cons = []
    for blk in range(len(mats[0])):
        expr = sum(x[i] * mats[i + 1][blk] for i in range(len(c))) - mats[0][blk]
        cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver="CLARABEL")
    assert prob.value == pytest.approx(solve_cvxpy(p).objective, abs=1e-6)
