"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (the lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""

import math
import subprocess
import sys
import time

import numpy as np

from instances import circle_intersections, make_spec, planar_instance, spatial_instance
from trilat import cli, covariance, cubic_path, model, numeric, reduction, solver
from trilat.errors import DegenerateReductionError
from trilat.model import Mode

RESULTS: dict[str, tuple[bool, str]] = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    return line


def xy(c):
    return (c.x, c.y)


# ---- 1. algebraic path -----------------------------------------------------


def test_criterion_1_algebraic_path():
    rng = np.random.default_rng(1)
    specs = [planar_instance(rng)[0] for _ in range(200)]
    misses, flagged, extra = [], 0, 0
    timed = []
    for k, spec in enumerate(specs):
        truth = circle_intersections(spec)
        try:
            cands = cubic_path.solve_planar2(spec).candidates
            timed.append(spec)
        except DegenerateReductionError:
            # flagged instances must pass through the documented numeric fallback
            flagged += 1
            out = solver.solve(spec, with_covariance=False)
            assert out.fallback == "numeric"
            cands = out.candidates
        mins = [xy(c) for c in cands if c.is_minimum]
        if not all(min(math.dist(p, m) for m in mins) <= 1e-6 * spec.scale for p in truth):
            misses.append(k)
        # any further minima must be genuine local minima of G, away from both intersections
        for m in mins:
            if min(math.dist(p, m) for p in truth) > 1e-6 * spec.scale:
                extra += 1
                H = model.hessian_G(spec, m)
                assert np.all(np.linalg.eigvalsh(H) > 0)

    # best of repeats per instance, to keep scheduler noise out of the figure
    per = []
    for spec in timed:
        best = math.inf
        for _ in range(7):
            t0 = time.perf_counter()
            cubic_path.solve_planar2(spec)
            best = min(best, time.perf_counter() - t0)
        per.append(best)
    ms = 1e3 * float(np.mean(per))
    ok = not misses and ms < 1.0
    record("1", ok, f"{200 - len(misses)}/200 match intersections within 1e-6*D "
           f"({flagged} flagged -> numeric fallback, {extra} extra genuine minima); "
           f"mean {ms:.3f} ms per algebraic solve (best of 7)")
    assert ok, (misses, ms)


# ---- 2. stationarity of every emitted solution -------------------------------


def test_criterion_2_stationarity():
    rng = np.random.default_rng(2)
    worst = {}
    bad = 0
    for label, gen in (
        ("planar2", lambda k: planar_instance(rng, 2, noise=0.02 * (k % 2))),
        ("planar3", lambda k: planar_instance(rng, 3, noise=0.02 * (k % 2))),
        ("spatial4", lambda k: spatial_instance(rng, 4, noise=0.02 * (k % 2))),
    ):
        w = 0.0
        for k in range(100):
            spec, _ = gen(k)
            bound = 1e-7 * max(1.0, float(np.linalg.norm(spec.L)))
            emitted = list(solver.solve(spec, verify=True, with_covariance=False).candidates)
            emitted += numeric.multistart_solve(spec)
            if spec.mode.planar:
                emitted += numeric.grid_then_polish(spec)
            if spec.mode is Mode.PLANAR2:
                try:
                    emitted += cubic_path.solve_planar2(spec).candidates
                except DegenerateReductionError:
                    pass
            for c in emitted:
                r = model.stationarity_residual(spec, c.coords(spec.mode.planar)).max_abs / bound
                w = max(w, r)
                bad += r > 1
        worst[label] = w
    ok = bad == 0
    record("2", ok, f"{bad} violations; worst residual/bound "
           + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# ---- 3. equation chain -------------------------------------------------------


def _unit_instance(rng):
    st_ = np.c_[rng.uniform(-2, 2, (2, 2)), rng.uniform(-0.5, 0.5, 2)]
    X = rng.uniform(-2, 2, 2)
    L = (((st_[:, :2] - X) ** 2).sum(1) + st_[:, 2] ** 2) * (1 + 0.1 * rng.standard_normal(2))
    return make_spec(st_, np.abs(L), Mode.PLANAR2, 0.0)


def test_criterion_3_equation_chain():
    rng = np.random.default_rng(3)
    worst_chain = 0.0
    for _ in range(1000):
        spec = _unit_instance(rng)
        agg = reduction.aggregates(spec, reduction.planar_constants(spec))
        pol = reduction.polar_constants(agg)
        x, y = rng.uniform(-3, 3, 2)
        rho, th = math.hypot(x, y), math.atan2(y, x)
        ex, ey = reduction.expanded_residuals(agg, x, y)
        e1, e2 = reduction.complex_form_residuals(agg, x, y)
        p1, p2 = reduction.polar_residuals(pol, agg, rho, th)
        s1, s2 = reduction.polar_residual_scales(pol, agg, rho, th)
        # calibrated constants: complex = (4 ex, 4i ey), polar = (2 ex, 2 ey)
        rel = max(
            abs(e1 / 4 - ex) / (s1 / 2), abs(e2 / 4j - ey) / (s2 / 2),
            abs(p1 / 2 - ex) / (s1 / 2), abs(p2 / 2 - ey) / (s2 / 2),
        )
        m1, m2 = model.stationarity_residual(spec, (x, y)).components
        rel = max(rel, abs(m1 + ex) / (s1 / 2), abs(m2 + ey) / (s2 / 2))
        worst_chain = max(worst_chain, rel)

    # the compatibility expression B C2 - B2 C at accepted candidates
    worst_bc, worst_res, n = 0.0, 0.0, 0
    rng = np.random.default_rng(33)
    while n < 1000:
        spec, _ = planar_instance(rng, noise=0.02)
        try:
            sol = cubic_path.solve_planar2(spec)
        except DegenerateReductionError:
            continue
        for c in sol.candidates:
            n += 1
            k = reduction.rho_theta_coefficients(sol.polar, sol.aggregates, c.theta)
            bc = abs(k.B * k.C2 - k.B2 * k.C) / (abs(k.B * k.C2) + abs(k.B2 * k.C))
            worst_bc = max(worst_bc, bc)
            r1 = abs(k.A * k.C2 - k.A2 * k.C)
            r2 = abs(k.A * k.B2 - k.A2 * k.B)
            r3 = abs(k.B * k.C2 - k.B2 * k.C)
            scale = (abs(k.A * k.C2) + abs(k.A2 * k.C)) ** 2 + (abs(k.A * k.B2) + abs(k.A2 * k.B)) * (
                abs(k.B * k.C2) + abs(k.B2 * k.C))
            worst_res = max(worst_res, abs(r1 * r1 - r2 * r3) / scale)
    chain_ok = worst_chain <= 1e-9
    bc_ok = worst_bc <= 1e-8
    record("3", chain_ok and bc_ok,
           f"chain worst rel {worst_chain:.1e} ({'ok' if chain_ok else 'over 1e-9'}); "
           f"B*C2-B2*C at {n} accepted candidates worst rel {worst_bc:.1e} "
           f"({'ok' if bc_ok else 'over 1e-8'}; resultant there {worst_res:.1e})")
    assert chain_ok, worst_chain
    assert bc_ok, f"B*C2 - B2*C does not vanish at true stationary points (worst {worst_bc:.2e})"


# ---- 4. derivatives ----------------------------------------------------------


def _fd(f, x, h):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def test_criterion_4_derivatives():
    rng = np.random.default_rng(4)
    worst_g = worst_h = 0.0
    for k in range(100):
        mode = list(Mode)[k % 3]
        n = {Mode.PLANAR2: 2, Mode.PLANAR3: 3, Mode.SPATIAL: 4}[mode]
        st_ = rng.uniform(0, 1e4, (n, 3))
        L = rng.uniform(1e6, 1e8, n)
        spec = make_spec(st_, L, mode, 25.0 if mode.planar else None, rng.uniform(0.5, 2, n))
        X = rng.uniform(-5e3, 1.5e4, 2 if mode.planar else 3)
        h = 1e-4 * spec.scale
        g = model.gradient(spec, X)
        fg = _fd(lambda x: model.objective(spec, x), X, h)
        H = model.hessian_G(spec, X)
        fH = _fd(lambda x: model.gradient(spec, x), X, h)
        worst_g = max(worst_g, np.linalg.norm(g - fg) / np.linalg.norm(g))
        worst_h = max(worst_h, np.linalg.norm(H - fH) / np.linalg.norm(H))
    ok = worst_g <= 1e-5 and worst_h <= 1e-5
    record("4", ok, f"worst relative error gradient {worst_g:.1e}, Hessian {worst_h:.1e} (100 instances)")
    assert ok


# ---- 5. covariance -----------------------------------------------------------


def test_criterion_5_covariance():
    t0 = time.perf_counter()
    spec = make_spec([(0, 0, 0), (4, 0, 0)], [5.0, 13.0], Mode.PLANAR2, 0.0)
    # independent 2x2 arithmetic: J = 2 [[1, 2], [-3, 2]], det = 32
    a, b, c, d = 2.0, 4.0, -6.0, 4.0
    det = a * d - b * c
    Ji = [[d / det, -b / det], [-c / det, a / det]]
    hand = [[sum(Ji[i][k] * Ji[j][k] for k in range(2)) for j in range(2)] for i in range(2)]
    expected = [[0.03125, 0.015625], [0.015625, 0.0390625]]
    rep = covariance.propagate(spec, (1, 2), np.eye(2))
    analytic_ok = np.allclose(rep.sigma_X, expected, rtol=1e-14, atol=0) and np.allclose(hand, expected)

    D = spec.scale
    sigma = 1e-3 * D * D
    S = sigma**2 * np.eye(2)
    mc = covariance.monte_carlo(spec, (1, 2), S, 100_000, seed=5, minima=[(1, -2)])
    rel = float(mc.relative_difference.max())
    elapsed = time.perf_counter() - t0
    ok = analytic_ok and rel <= 0.05 and elapsed < 60
    record("5", ok, f"analytic sigma_X {'exact' if analytic_ok else 'MISMATCH'}; Monte Carlo 1e5 trials "
           f"(sigma {sigma:g}) worst entrywise rel diff {rel:.2%}, {mc.excluded} excluded; {elapsed:.1f} s")
    assert ok


# ---- 6. oracle equivalence ---------------------------------------------------


def test_criterion_6_oracle_equivalence():
    rng = np.random.default_rng(6)
    cfg = numeric.SolverConfig()
    bad = []
    total = 0
    for n in (2, 3):
        for k in range(100):
            noise = 0.0 if k % 2 == 0 else 0.05 * rng.uniform()
            spec, _ = planar_instance(rng, n, noise=noise)
            radius = 1e-6 * spec.scale
            a = [xy(c) for c in numeric.grid_then_polish(spec, cfg) if c.is_minimum and not c.boundary]
            b = [xy(c) for c in numeric.multistart_solve(spec, cfg) if c.is_minimum and not c.boundary]
            total += 1
            same = len(a) == len(b) and all(min(math.dist(p, q) for q in b) <= radius for p in a)
            if not same:
                bad.append((n, k, len(a), len(b)))
    ok = not bad
    record("6", ok, f"{total - len(bad)}/{total} planar2+planar3 instances with identical in-box minima sets")
    assert ok, bad


# ---- 7. determinism ----------------------------------------------------------

REF = """\
format = "trilat-problem/1"
mode = "planar2"
z0 = 0.0
station = [ { id = "A", u = 0.0, v = 0.0 }, { id = "B", u = 4.0, v = 0.0 } ]
observation = [
  { station = "A", squared_distance = 5.0, sigma = 0.016 },
  { station = "B", squared_distance = 13.0, sigma = 0.016 },
]
"""


def test_criterion_7_determinism(tmp_path):
    prob = tmp_path / "p.toml"
    prob.write_text(REF)
    runs = {
        "solve": ["solve", str(prob), "--verify", "--seed", "3"],
        "montecarlo": ["montecarlo", str(prob), "--trials", "5000", "--seed", "3"],
    }
    same = {}
    for name, argv in runs.items():
        blobs = []
        for i in range(2):
            out = tmp_path / f"{name}{i}.json"
            assert cli.main([*argv, "--format", "structured", "--output", str(out)]) == 0
            blobs.append(out.read_bytes())
        # and once more from a fresh interpreter
        out = tmp_path / f"{name}_proc.json"
        subprocess.run([sys.executable, "-m", "trilat.cli", *argv, "--format", "structured",
                        "--output", str(out)], check=True)
        blobs.append(out.read_bytes())
        same[name] = len(set(blobs)) == 1
    ok = all(same.values())
    record("7", ok, ", ".join(f"{k} reports {'byte-identical' if v else 'DIFFER'} over 3 runs"
                               for k, v in same.items()))
    assert ok


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if name.endswith("determinism"):
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
