"""Acceptance criteria 1-8, one recorded PASS/FAIL line each.

Tolerances below are pinned to the documented acceptance values; they are
not tuning knobs.
"""

import math
import time

import numpy as np
import pytest

from halfgeo.certify import (HALF_GEODESIC, REFUTED, blaschke_equivalence_report,
                             certify_half_geodesic, example_2_2_report, example_2_4_report)
from halfgeo.closed import ellipse_perimeter, random_great_circles, refine_closed
from halfgeo.distance import BLASCHKE, NOT_BLASCHKE, SHOOTING_REFINED, engine_for
from halfgeo.geodesic import jacobi_index, random_unit_tangent, shoot
from halfgeo.pathspace import (DiscretePath, concatenate, concatenation_energy,
                               discrete_hessian_index, energy, length, random_path)
from halfgeo.surfaces import SurfaceSpec, project_to_surface, tangent_frame

SPHERE = SurfaceSpec.sphere(1.0)
OBLATE = SurfaceSpec.oblate(0.8)
TRIAXIAL = SurfaceSpec.triaxial(1.0, 1.05, 1.1)
BUILTINS = [SPHERE, OBLATE, TRIAXIAL]

# criterion 1
C1_DIAM_TOL, C1_INJ_TOL, C1_CIRCLES, C1_BUDGET_S = 1e-3, 1e-2, 32, 120.0
# criterion 2
C2_PERIM_TOL, C2_DEFICIT_TOL, C2_BUDGET_S = 1e-3, 5e-3, 300.0
# criterion 4
C4_GEODESICS, C4_LMIN, C4_LMAX, C4_GAP, C4_N = 20, 0.5, 7.0, 0.05, 400
# criterion 5
C5_PATHS, C5_EQ_TOL = 1000, 1e-12
# criterion 6
C6_TRIPLES, C6_POOL, C6_SYM_TOL = 500, 24, 2e-9
# criterion 7
C7_DRIFT, C7_RATIO = 1e-8, 8.0

E1, E2, E3 = np.eye(3)


def _random_unit(spec, rng):
    p = project_to_surface(spec, rng.normal(size=3) + 1e-6)
    return p, random_unit_tangent(spec, p, rng)


def test_criterion_1_round_sphere(acceptance):
    t0 = time.perf_counter()
    rep = engine_for(SPHERE).scan()
    rng = np.random.default_rng(1)
    certs = [certify_half_geodesic(SPHERE, cg) for cg in random_great_circles(SPHERE, C1_CIRCLES, rng)]
    elapsed = time.perf_counter() - t0
    n_half = sum(c.verdict == HALF_GEODESIC for c in certs)
    ok = (abs(rep.diameter_est - math.pi) <= C1_DIAM_TOL
          and abs(rep.inj_est - math.pi) <= C1_INJ_TOL
          and rep.blaschke_verdict == BLASCHKE
          and n_half == C1_CIRCLES and elapsed <= C1_BUDGET_S)
    acceptance(1, ok, f"diam={rep.diameter_est:.6f} inj={rep.inj_est:.6f} "
               f"verdict={rep.blaschke_verdict} half={n_half}/{C1_CIRCLES} time={elapsed:.1f}s")
    assert ok


def test_criterion_2_oblate(acceptance):
    t0 = time.perf_counter()
    rep = example_2_4_report(0.8)
    elapsed = time.perf_counter() - t0
    quad = ellipse_perimeter(1.0, 0.8)
    # prime length measured from the return map, independently of the quadrature
    measured = refine_closed(OBLATE, E1, np.array([0.0, 0.02, 1.0]), 5.6).prime_length
    scan = rep["scan"]
    deficit_gap = abs(rep["equator"].max_deficit - (math.pi - scan.diameter_est))
    ok = (abs(measured - quad) <= C2_PERIM_TOL
          and abs(rep["meridian_prime_length"] - quad) <= C2_PERIM_TOL
          and rep["meridian"].verdict == HALF_GEODESIC
          and rep["equator"].verdict == REFUTED
          and deficit_gap <= C2_DEFICIT_TOL
          and scan.blaschke_verdict == NOT_BLASCHKE
          and elapsed <= C2_BUDGET_S)
    acceptance(2, ok, f"meridian L={measured:.6f} (quad {quad:.6f}) "
               f"meridian={rep['meridian'].verdict} equator={rep['equator'].verdict} "
               f"deficit={rep['equator'].max_deficit:.5f} pi-diam={math.pi - scan.diameter_est:.5f} "
               f"scan={scan.blaschke_verdict} time={elapsed:.1f}s")
    assert ok


def test_criterion_3_triaxial(acceptance):
    rep = example_2_2_report(1.0, 1.05, 1.1)
    s = rep["sections"]
    ok = s["Z0"]["verdict"] == HALF_GEODESIC
    parts = [f"Z0={s['Z0']['verdict']}"]
    for plane in ("X0", "Y0"):
        e = s[plane]
        near = e.get("witness_offset_from_second_axis", math.inf)
        ok = ok and e["verdict"] == REFUTED and e["max_deficit"] > 3 * e["tol"] and near <= 0.1
        parts.append(f"{plane}={e['verdict']} deficit={e['max_deficit']:.5f} "
                     f"(3tol={3 * e['tol']:.5f}) witness_offset={near:.2e}")
    acceptance(3, ok, "; ".join(parts))
    assert ok


def _index_case(spec, rng):
    while True:
        p, v = _random_unit(spec, rng)
        L = rng.uniform(C4_LMIN, C4_LMAX)
        probe = jacobi_index(spec, shoot(spec, p, v, min(L + 2 * C4_GAP, 8.0)))
        if all(abs(t - L) >= C4_GAP for t in probe.conjugate_times):
            return p, v, L


def test_criterion_4_index_oracles(acceptance):
    rng = np.random.default_rng(4)
    mismatches = []
    for k in range(C4_GEODESICS):
        spec = BUILTINS[k % 3]
        p, v, L = _index_case(spec, rng)
        geo = shoot(spec, p, v, L)
        a, b = jacobi_index(spec, geo).index, discrete_hessian_index(spec, geo, C4_N)
        if a != b:
            mismatches.append((str(spec), L, a, b))
    sphere_bad = []
    for L in np.linspace(C4_LMIN, C4_LMAX, 40):
        if min(abs(L - m * math.pi) for m in range(3)) < C4_GAP:
            continue
        geo = shoot(SPHERE, E1, E2, L)
        want = math.floor(L / math.pi)
        if not (jacobi_index(SPHERE, geo).index == discrete_hessian_index(SPHERE, geo, C4_N) == want):
            sphere_bad.append(L)
    ok = not mismatches and not sphere_bad
    acceptance(4, ok, f"{C4_GEODESICS} geodesics, mismatches={mismatches}; "
               f"sphere floor(L/pi) failures={sphere_bad}")
    assert ok


def test_criterion_5_path_space(acceptance):
    rng = np.random.default_rng(5)
    worst_cs = -math.inf
    min_gap = math.inf
    for k in range(C5_PATHS):
        spec = BUILTINS[k % 3]
        p, _ = _random_unit(spec, rng)
        path = random_path(spec, p, int(rng.integers(2, 30)), 0.05, rng)
        L, E = length(path), energy(path)
        worst_cs = max(worst_cs, L * L - E)
        min_gap = min(min_gap, E - L * L)
    # constant speed: equality, and the concatenation identity
    eq_err = 0.0
    cat_err = 0.0
    for k in range(30):
        spec = BUILTINS[k % 3]
        p, v = _random_unit(spec, rng)
        n = int(rng.choice([20, 40]))
        c = DiscretePath.along(shoot(spec, p, v, rng.uniform(0.3, 2.0)), n)
        eq_err = max(eq_err, abs(energy(c) - length(c) ** 2))
        eps = float(rng.choice([0.2, 0.5]))
        y = c.points[-1]
        tc = concatenate(c, shoot(spec, y, tangent_frame(spec, y)[0], eps))
        cat_err = max(cat_err, abs(energy(tc) - concatenation_energy(energy(c), eps)))
    # E(c) <= 4.1 and eps = 1/2 give E <= 8.7
    c = DiscretePath.along(shoot(TRIAXIAL, E1, np.array([0, 0.6, 0.8]), math.sqrt(4.1)), 40)
    y = c.points[-1]
    tc = concatenate(c, shoot(TRIAXIAL, y, tangent_frame(TRIAXIAL, y)[1], 0.5))
    e41 = energy(tc)
    inst = (abs(concatenation_energy(4.1, 0.5) - 8.7) <= C5_EQ_TOL
            and abs(e41 - concatenation_energy(energy(c), 0.5)) <= C5_EQ_TOL
            and e41 <= 8.7 + C5_EQ_TOL)
    ok = (worst_cs <= 0.0 and min_gap > C5_EQ_TOL and eq_err <= C5_EQ_TOL
          and cat_err <= C5_EQ_TOL and inst)
    acceptance(5, ok, f"{C5_PATHS} random paths: max(L^2-E)={worst_cs:.2e}, "
               f"min(E-L^2)={min_gap:.2e}; constant speed |E-L^2|<={eq_err:.1e}; "
               f"concat err<={cat_err:.1e}; E(c)={energy(c):.6f} -> E(tau*c)={e41:.6f} <= 8.7")
    assert ok


@pytest.mark.parametrize("spec", BUILTINS, ids=str)
def test_criterion_6_distance_properties(acceptance, spec):
    rng = np.random.default_rng(6)
    eng = engine_for(spec)
    pool = [project_to_surface(spec, rng.normal(size=3) + 1e-6) for _ in range(C6_POOL)]
    R = [[eng.distance(a, b) for b in pool] for a in pool]
    D = np.array([[r.value for r in row] for row in R])
    slack = np.array([[0.0 if r.method == SHOOTING_REFINED else r.upper_bound - r.lower_bound
                       for r in row] for row in R])
    sym = tri = brk = 0
    for _ in range(C6_TRIPLES):
        i, j, k = rng.choice(C6_POOL, size=3, replace=False)
        if abs(D[i, j] - D[j, i]) > C6_SYM_TOL + slack[i, j] + slack[j, i]:
            sym += 1
        if D[i, k] > D[i, j] + D[j, k] + 1e-9 + slack[i, j] + slack[j, k] + slack[i, k]:
            tri += 1
        for a, b in ((i, j), (j, k), (i, k)):
            r = R[a][b]
            if not r.lower_bound - 1e-12 <= r.value <= r.upper_bound + 1e-12:
                brk += 1
    cut_bad = []
    if spec.kind == "sphere":
        for r in (1.0, 2.0):
            s = SurfaceSpec.sphere(r)
            for _ in range(3):
                p, v = _random_unit(s, rng)
                c = engine_for(s).cut_time(p, v).cut_time
                if abs(c - math.pi * r) > 1e-2 * r:
                    cut_bad.append((r, c))
    ok = sym == tri == brk == 0 and not cut_bad
    acceptance(6, ok, f"{spec}: {C6_TRIPLES} triples, symmetry={sym} triangle={tri} "
               f"bracket={brk} violations, fallbacks={eng.fallbacks}"
               + (f", sphere cut-time failures={cut_bad}" if spec.kind == "sphere" else ""))
    assert ok


def test_criterion_7_integrator(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(30):
        spec = BUILTINS[k % 3]
        p, v = _random_unit(spec, rng)
        L = rng.uniform(0.5, 12.0)
        path = shoot(spec, p, v, L, check_drift=False)
        worst = max(worst, path.speed_drift / L)
    refs = [(SPHERE, E1, np.array([0, 0.6, 0.8]), 3.0),
            (OBLATE, E1, E3, 2.83617),
            (TRIAXIAL, E1, np.array([0, 1, 1]) / math.sqrt(2), 5.0)]
    ratios = []
    for spec, p, v, L in refs:
        ends = [shoot(spec, p, v, L, 0.1 / 2**k, check_drift=False).end for k in range(3)]
        ratios.append(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    ok = worst <= C7_DRIFT and min(ratios) >= C7_RATIO
    acceptance(7, ok, f"max drift/length={worst:.2e}; step-halving ratios="
               + ", ".join(f"{r:.2f}" for r in ratios))
    assert ok


def test_criterion_8_blaschke_equivalence(acceptance):
    parts = []
    ok = True
    for spec in BUILTINS:
        rep = blaschke_equivalence_report(spec, seed=8)
        ok = ok and rep["agree"]
        verdicts = sorted({c.verdict for c in rep["certificates"]})
        parts.append(f"{spec}: scan={rep['scan'].blaschke_verdict} certificates={verdicts} "
                     f"agree={rep['agree']}")
    acceptance(8, ok, "; ".join(parts))
    assert ok
