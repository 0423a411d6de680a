import math

import numpy as np
import pytest

from instances import make_spec, planar_instance, spatial_instance
from trilat import cubic_path, model, numeric
from trilat.errors import DegenerateGeometryError, DegenerateReductionError
from trilat.model import Classification, Mode
from trilat.numeric import SolverConfig


def minima_xy(cands, boundary=False):
    return sorted((c.x, c.y) for c in cands if c.is_minimum and (boundary or not c.boundary))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grid_resolution=2)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(search_box=-1.0)


def test_gauss_newton_reference(ref_spec):
    cand, trace = numeric.gauss_newton(ref_spec, (0.5, 1.0))
    assert trace.termination_reason == "converged"
    assert math.dist((cand.x, cand.y), (1, 2)) < 1e-9
    assert cand.classification is Classification.MINIMUM


def test_gauss_newton_spatial_from_nearby_start(rng):
    for _ in range(20):
        spec, X = spatial_instance(rng)
        start = np.array(X) + rng.uniform(-1, 1, 3) * spec.scale / (4 * math.sqrt(3))
        cand, trace = numeric.gauss_newton(spec, start)
        assert trace.termination_reason == "converged"
        assert math.dist(cand.unknowns, X) <= 1e-6 * spec.scale


def test_gauss_newton_at_saddle(ref_spec):
    saddle = next(c for c in cubic_path.solve_planar2(ref_spec).candidates
                  if c.classification is Classification.SADDLE)
    cand, trace = numeric.gauss_newton(ref_spec, (saddle.x, saddle.y))
    assert trace.termination_reason == "converged"
    assert len(trace.iterates) == 1
    assert cand.classification is Classification.SADDLE


def test_accepted_steps_descend(rng):
    for _ in range(30):
        spec, _ = planar_instance(rng, n=3, noise=0.02)
        _, trace = numeric.gauss_newton(spec, rng.uniform(0, 1e4, 2))
        damped = [it.objective for it in trace.iterates if it.kind in ("start", "damped")]
        assert all(b < a for a, b in zip(damped, damped[1:]))


def test_multistart_planar2_matches_algebraic(rng):
    done = 0
    while done < 20:
        spec, _ = planar_instance(rng)
        try:
            alg = cubic_path.solve_planar2(spec).candidates
        except DegenerateReductionError:
            continue
        done += 1
        ms = numeric.multistart_solve(spec)
        a, b = minima_xy(alg, True), minima_xy(ms, True)
        for p in b:
            assert min(math.dist(p, q) for q in a) <= 1e-6 * spec.scale


def test_multistart_planar3_contains_truth(rng):
    for _ in range(20):
        spec, X = planar_instance(rng, n=3)
        ms = numeric.multistart_solve(spec)
        best = min(ms, key=lambda c: math.dist((c.x, c.y), X))
        assert math.dist((best.x, best.y), X) <= 1e-6 * spec.scale
        assert best.objective_value <= 1e-12 * float(np.dot(spec.L, spec.L))


def test_multistart_spatial_noisy_residuals(rng):
    for _ in range(20):
        spec, _ = spatial_instance(rng, noise=0.01)
        ms = numeric.multistart_solve(spec)
        assert any(c.is_minimum for c in ms)
        bound = 1e-9 * max(1.0, float(np.linalg.norm(spec.L)) * spec.scale)
        for c in ms:
            assert model.stationarity_residual(spec, c.unknowns).max_abs <= bound


def test_multistart_deterministic(rng):
    spec, _ = planar_instance(rng, n=3, noise=0.03)
    assert numeric.multistart_solve(spec) == numeric.multistart_solve(spec)


def test_collinear_layout_rejected():
    spec = make_spec([(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 3, 3)], [1, 2, 3, 4], Mode.SPATIAL)
    with pytest.raises(DegenerateGeometryError):
        numeric.multistart_solve(spec)


def test_grid_reference(ref_spec):
    got = sorted(minima_xy(numeric.grid_then_polish(ref_spec)), key=lambda p: p[1])
    np.testing.assert_allclose(got, [(1, -2), (1, 2)], atol=1e-9)


def test_grid_unique_minimum_planar3(rng):
    checked = 0
    while checked < 10:
        spec, _ = planar_instance(rng, n=3, noise=0.02)
        ms = minima_xy(numeric.multistart_solve(spec))
        if len(ms) != 1:
            continue
        checked += 1
        grid = minima_xy(numeric.grid_then_polish(spec))
        assert len(grid) == 1 and math.dist(grid[0], ms[0]) <= 1e-6 * spec.scale


def test_grid_box_excluding_solution(ref_spec):
    cfg = SolverConfig(search_box=0.5)
    rep = numeric.grid_then_polish_report(ref_spec, cfg)
    assert any(c.boundary for c in rep.candidates)
    assert any(d["code"] == "search_box_boundary" for d in rep.diagnostics)
    assert not minima_xy(rep.candidates)


def test_grid_spatial_runs(rng):
    spec, X = spatial_instance(rng)
    cands = numeric.grid_then_polish(spec, SolverConfig(spatial_grid_resolution=21))
    assert any(math.dist(c.unknowns, X) <= 1e-6 * spec.scale for c in cands if c.is_minimum)


def test_batch_matches_scalar(rng):
    spec, _ = planar_instance(rng, noise=0.01)
    L = spec.L + rng.normal(0, 1e-4, (50, 2)) * spec.L
    X0 = minima_xy(numeric.multistart_solve(spec), True)[0]
    X, ok = numeric.gauss_newton_batch(spec, L, X0, SolverConfig())
    assert ok.all()
    for Lk, Xk in zip(L[:5], X[:5]):
        c, _ = numeric.gauss_newton(spec.with_observations(Lk), X0)
        assert math.dist((c.x, c.y), Xk) <= 1e-8 * spec.scale
