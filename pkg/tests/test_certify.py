import json
import math

import numpy as np
import pytest

from halfgeo.certify import (HALF_GEODESIC, INCONCLUSIVE, REFUTED, antipodal_distance,
                             blaschke_equivalence_report, certify_half_geodesic,
                             example_2_2_report)
from halfgeo.closed import random_great_circles, section_geodesic
from halfgeo.distance import engine_for
from halfgeo.surfaces import SurfaceSpec

SMALL_SCAN = {"point_samples": 3, "direction_samples": 2, "diameter_points": 60}


def test_great_circles_are_half_geodesics(sphere, rng):
    for cg in random_great_circles(sphere, 2, rng):
        cert = certify_half_geodesic(sphere, cg, num_samples=8)
        assert cert.verdict == HALF_GEODESIC
        assert all(abs(d - math.pi) <= cert.tol for _, d, _ in cert.samples)
        assert cert.witness is None


def test_oblate_meridian_and_equator(oblate):
    mer = certify_half_geodesic(oblate, section_geodesic(oblate, "X0"), num_samples=8)
    assert mer.verdict == HALF_GEODESIC
    equ = certify_half_geodesic(oblate, section_geodesic(oblate, "Z0"), num_samples=8)
    assert equ.verdict == REFUTED
    assert equ.max_deficit > 3 * equ.tol
    # every antipodal pair on the equator is joined over the poles
    deficits = [e for _, _, e in equ.samples]
    np.testing.assert_allclose(deficits, math.pi - 2.836166789, atol=1e-6)


def test_default_tol(oblate):
    cg = section_geodesic(oblate, "X0")
    cert = certify_half_geodesic(oblate, cg, num_samples=4)
    assert cert.tol == pytest.approx(1e-3 * cg.prime_length / 2)
    assert [t for t, _, _ in cert.samples] == pytest.approx(
        [k * cg.prime_length / 8 for k in range(4)])


def test_certificate_symmetry(triaxial):
    cg = section_geodesic(triaxial, "X0")
    eng = engine_for(triaxial)
    half = cg.prime_length / 2
    for t in (0.1, 0.9, 2.0):
        a = antipodal_distance(eng, cg, t)
        b = antipodal_distance(eng, cg, t + half)
        slack = 2 * max(a.upper_bound - a.value, 1e-9)
        assert abs(a.value - b.value) <= slack


def test_scaling_covariance():
    c1 = certify_half_geodesic(SurfaceSpec.sphere(1.0),
                               section_geodesic(SurfaceSpec.sphere(1.0), "Y0"), num_samples=6)
    c2 = certify_half_geodesic(SurfaceSpec.sphere(2.0),
                               section_geodesic(SurfaceSpec.sphere(2.0), "Y0"), num_samples=6)
    assert c1.verdict == c2.verdict == HALF_GEODESIC
    assert c2.prime_length == pytest.approx(2 * c1.prime_length)
    for (t1, d1, e1), (t2, d2, e2) in zip(c1.samples, c2.samples):
        assert t2 == pytest.approx(2 * t1)
        assert d2 == pytest.approx(2 * d1, rel=1e-9)
        assert abs(e2 - 2 * e1) <= 1e-8


def test_json_schema(oblate):
    cert = certify_half_geodesic(oblate, section_geodesic(oblate, "Z0"), num_samples=4)
    d = json.loads(cert.to_json())
    assert {"surface", "prime_length", "tol", "samples", "verdict", "witness"} <= set(d)
    assert set(d["samples"][0]) == {"t", "d", "deficit"}
    assert d["verdict"] == REFUTED and d["witness"] is not None


def test_inconclusive_band(oblate):
    # a tolerance between deficit/3 and the deficit lands in the middle band
    cert = certify_half_geodesic(oblate, section_geodesic(oblate, "Z0"), num_samples=4, tol=0.2)
    assert cert.verdict == INCONCLUSIVE


def test_triaxial_sections_default():
    rep = example_2_2_report(1.0, 1.05, 1.1, num_samples=16)
    v = {k: s["verdict"] for k, s in rep["sections"].items()}
    assert v == {"X0": REFUTED, "Y0": REFUTED, "Z0": HALF_GEODESIC}
    assert rep["matches"]
    for plane in ("X0", "Y0"):
        s = rep["sections"][plane]
        assert s["max_deficit"] > 3 * s["tol"]
        assert s["witness_offset_from_second_axis"] <= 0.05


def test_triaxial_sections_round():
    rep = example_2_2_report(1.0, 1.0, 1.0, num_samples=6)
    assert {s["verdict"] for s in rep["sections"].values()} == {HALF_GEODESIC}


def test_triaxial_sections_oblate_like():
    rep = example_2_2_report(1.0, 1.0, 1.2, num_samples=12)
    assert rep["sections"]["X0"]["verdict"] == REFUTED
    assert rep["sections"]["Y0"]["verdict"] == REFUTED


def test_triaxial_sections_reject_order():
    with pytest.raises(ValueError):
        example_2_2_report(1.1, 1.05, 1.0)


def test_equivalence_sphere(sphere):
    rep = blaschke_equivalence_report(sphere, n_closed=2, num_samples=6, scan_kw=SMALL_SCAN)
    assert rep["blaschke"] and rep["all_half_geodesics"] and rep["agree"]
