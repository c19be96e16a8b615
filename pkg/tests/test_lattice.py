import math

import numpy as np
import pytest
from scipy.spatial import Voronoi

from becforce import BeamGeometry, build_reciprocal_lattice, fold_to_fbz
from becforce.lattice import bragg_peak_positions, bragg_peak_shells

DEG = math.pi / 180.0
LAM = 1.064e-6


def brute_force_fold(q, lat, reach=3):
    """Oracle: minimize |q - (n b1 + m b2)| by enumeration around q."""
    basis = np.column_stack([lat.b1, lat.b2])
    n0, m0 = np.rint(np.linalg.solve(basis, q)).astype(int)
    best = None
    for n in range(n0 - reach, n0 + reach + 1):
        for m in range(m0 - reach, m0 + reach + 1):
            r = q - (n * lat.b1 + m * lat.b2)
            d = np.linalg.norm(r)
            if best is None or d < best[0] - 1e-9 * np.linalg.norm(lat.b1):
                best = (d, r)
    return best[1]


def voronoi_origin_cell(lat):
    """Oracle: Wigner-Seitz cell via scipy Voronoi over the 19 nearest points."""
    pts, _ = bragg_peak_shells(lat, 3)
    assert len(pts) == 19
    vor = Voronoi(pts)
    origin_idx = int(np.argmin(np.linalg.norm(pts, axis=1)))
    region = vor.regions[vor.point_region[origin_idx]]
    assert -1 not in region
    return vor.vertices[region]


class TestBuildReciprocalLattice:
    def test_b_vector_length_default_geometry(self, geom, lat):
        # direct evaluation of sqrt(3)*2*pi/lambda
        expected = math.sqrt(3) * 2 * math.pi / LAM
        assert np.linalg.norm(lat.b1) == pytest.approx(expected, rel=1e-12)
        assert np.linalg.norm(lat.b2) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.0228e7, rel=1e-4)

    def test_fbz_vertex_distance_matches_voronoi_oracle(self, lat):
        cell = voronoi_origin_cell(lat)
        oracle_radius = np.linalg.norm(cell, axis=1)
        assert len(lat.fbz_vertices) == 6
        radii = np.linalg.norm(lat.fbz_vertices, axis=1)
        assert np.allclose(sorted(radii), sorted(oracle_radius), rtol=1e-9)
        expected = 2 * math.pi / LAM
        assert np.allclose(radii, expected, rtol=1e-12)
        assert expected == pytest.approx(5.905e6, rel=1e-4)

    def test_fbz_vertices_match_voronoi_vertex_set(self, lat):
        cell = voronoi_origin_cell(lat)
        scale = np.linalg.norm(lat.b1)
        for v in lat.fbz_vertices:
            dist = np.min(np.linalg.norm(cell - v, axis=1))
            assert dist < 1e-9 * scale

    def test_rotating_beams_rotates_lattice_keeps_area(self, geom, lat):
        phi = 17.3 * DEG
        rot = BeamGeometry(LAM, tuple(a + phi for a in geom.beam_angles))
        lat2 = build_reciprocal_lattice(rot)
        c, s = math.cos(phi), math.sin(phi)
        R = np.array([[c, -s], [s, c]])
        assert np.allclose(lat2.b1, R @ lat.b1, rtol=1e-12)
        assert lat2.fbz_area == pytest.approx(lat.fbz_area, rel=1e-12)

    def test_collinear_wavevector_differences_rejected(self):
        # Three distinct beams on the wavevector circle are never collinear,
        # so the construction error is exercised via a degenerate stand-in.
        class _Collinear:
            def beam_wavevectors(self):
                return np.array([[0.0, 0.0], [1.0e6, 0.0], [3.0e6, 0.0]])

        with pytest.raises(ValueError, match="degenerate|collinear"):
            build_reciprocal_lattice(_Collinear())

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            BeamGeometry(-1.0, (0.0, 2.0, 4.0))
        with pytest.raises(ValueError):
            BeamGeometry(LAM, (0.0, 0.0, 2.0))
        with pytest.raises(ValueError):
            BeamGeometry(LAM, (0.0, 2 * math.pi, 2.0))

    def test_fbz_hexagon_six_fold_closure(self, lat):
        c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
        R = np.array([[c, -s], [s, c]])
        rotated = lat.fbz_vertices @ R.T
        scale = np.linalg.norm(lat.b1)
        for v in rotated:
            assert np.min(np.linalg.norm(lat.fbz_vertices - v, axis=1)) < 1e-9 * scale

    def test_fbz_area_equals_cell_area(self, lat):
        assert lat.fbz_area == pytest.approx(lat.cell_area, rel=1e-12)

    def test_wigner_seitz_vertex_equidistance(self, lat):
        # every vertex equidistant from the origin and >= 2 nonzero points
        pts, _ = bragg_peak_shells(lat, 2)
        nonzero = pts[np.linalg.norm(pts, axis=1) > 0]
        for v in lat.fbz_vertices:
            d0 = np.linalg.norm(v)
            d = np.linalg.norm(nonzero - v, axis=1)
            ties = np.sum(np.isclose(d, d0, rtol=1e-9))
            assert ties >= 2


class TestFoldToFbz:
    def test_origin_and_lattice_points_fold_to_zero(self, lat):
        assert np.allclose(fold_to_fbz(np.zeros(2), lat), 0.0)
        assert np.allclose(fold_to_fbz(lat.b1, lat), 0.0, atol=1e-9)
        assert np.allclose(fold_to_fbz(3 * lat.b1 - 2 * lat.b2, lat), 0.0,
                           atol=1e-6)

    def test_fold_fractional_point(self, lat):
        q = 0.6 * lat.b1
        expected = brute_force_fold(q, lat)
        got = fold_to_fbz(q, lat)
        assert np.allclose(got, expected, rtol=1e-12)
        assert np.allclose(got, -0.4 * lat.b1, rtol=1e-12)

    def test_matches_brute_force_on_random_points(self, lat):
        rng = np.random.default_rng(7)
        scale = np.linalg.norm(lat.b1)
        for q in rng.uniform(-2.5 * scale, 2.5 * scale, size=(200, 2)):
            assert np.allclose(fold_to_fbz(q, lat), brute_force_fold(q, lat),
                               atol=1e-9 * scale)

    def test_idempotent(self, lat):
        rng = np.random.default_rng(11)
        scale = np.linalg.norm(lat.b1)
        for q in rng.uniform(-3 * scale, 3 * scale, size=(500, 2)):
            once = fold_to_fbz(q, lat)
            assert np.array_equal(fold_to_fbz(once, lat), once)

    def test_periodic_under_lattice_translations(self, lat):
        rng = np.random.default_rng(13)
        scale = np.linalg.norm(lat.b1)
        pts, _ = bragg_peak_shells(lat, 3)
        for q in rng.uniform(-scale, scale, size=(40, 2)):
            base = fold_to_fbz(q, lat)
            for g in pts[::4]:
                assert np.allclose(fold_to_fbz(q + g, lat), base,
                                   atol=1e-7 * scale)

    def test_boundary_tie_lexicographic(self, lat):
        q = 0.5 * lat.b1
        folded = fold_to_fbz(q, lat)
        # tie between +-0.5*b1; lexicographic smallest wins
        assert np.allclose(folded, -0.5 * lat.b1, rtol=1e-12)
        assert np.array_equal(fold_to_fbz(folded, lat), folded)

    def test_folding_commutes_with_sixty_degree_rotation(self, geom, lat):
        c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
        R = np.array([[c, -s], [s, c]])
        rot_geom = BeamGeometry(LAM, tuple(a + math.pi / 3
                                           for a in geom.beam_angles))
        rot_lat = build_reciprocal_lattice(rot_geom)
        rng = np.random.default_rng(17)
        scale = np.linalg.norm(lat.b1)
        for q in rng.uniform(-2 * scale, 2 * scale, size=(100, 2)):
            lhs = fold_to_fbz(R @ q, rot_lat)
            rhs = R @ fold_to_fbz(q, lat)
            assert np.allclose(lhs, rhs, atol=1e-7 * scale)


class TestBraggPeaks:
    def test_zeroth_shell_only(self, lat):
        q = np.array([1.0e5, -2.0e5])
        pts = bragg_peak_positions(lat, q, 0)
        assert pts.shape == (1, 2)
        assert np.allclose(pts[0], q)

    def test_first_shell_has_seven_points(self, lat):
        # oracle: enumerate lattice points and count the |G| = |b1| ring
        pts = bragg_peak_positions(lat, np.zeros(2), 1)
        assert len(pts) == 7
        mags = np.linalg.norm(pts, axis=1)
        b = np.linalg.norm(lat.b1)
        assert np.isclose(mags.min(), 0.0)
        assert np.sum(np.isclose(mags, b, rtol=1e-9)) == 6

    def test_translation_covariance(self, lat):
        q = 0.1 * lat.b1
        base = bragg_peak_positions(lat, np.zeros(2), 2)
        moved = bragg_peak_positions(lat, q, 2)
        assert np.allclose(moved, base + q, rtol=1e-12)

    def test_sorted_by_shell_then_lexicographic(self, lat):
        pts, shells = bragg_peak_shells(lat, 2)
        assert list(shells) == sorted(shells)
        for s in range(3):
            block = pts[shells == s]
            keys = [tuple(p) for p in block]
            assert keys == sorted(keys)

    def test_negative_cutoff_rejected(self, lat):
        with pytest.raises(ValueError):
            bragg_peak_positions(lat, np.zeros(2), -1)
