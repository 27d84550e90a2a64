import math

import networkx as nx
import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.linalg

from utils.errors import ConfigError, SpectrumError
from utils.graph_model import polygon_loop
from utils.sos_engine import SOSEngine
from utils.spectral_solver import SpectralSolver, secular_matrix, trk_residual


@pytest.fixture(scope="module")
def seven_edge_spectrum(solver, seven_edge):
    return solver.find_spectrum(seven_edge, 30)


def test_box_levels(box_spectrum):
    n = np.arange(1, 51)
    np.testing.assert_allclose(box_spectrum.k, n, rtol=1e-10)
    np.testing.assert_allclose(box_spectrum.energies, 0.5 * n * n, rtol=1e-10)
    assert box_spectrum.multiplicities() == [1] * 50
    assert abs(box_spectrum.e10 - 1.5) < 1e-9


def test_box_ground_state(box_spectrum):
    ground = box_spectrum.ground_state()
    s = box_spectrum.arc[1]
    np.testing.assert_allclose(ground.psi(1), math.sqrt(2.0 / math.pi) * np.sin(s), atol=1e-9)
    assert abs(ground.energy - 0.5) < 1e-10


def test_secular_matrix_vanishes_on_box_levels(box):
    k = np.array([1.0, 2.0, 3.0, 2.5])
    det = np.linalg.det(secular_matrix(box, k))
    assert det.shape == (4,)
    assert np.all(np.abs(det[:3]) < 1e-12)
    assert abs(det[3]) > 0.5


def test_loop_levels_are_doubly_degenerate(solver, triangle_loop):
    spectrum = solver.find_spectrum(triangle_loop, 7)
    assert spectrum.multiplicities() == [1, 2, 2, 2]
    expected = [0.0] + [2.0 * math.pi * q / 3.0 for q in (1, 1, 2, 2, 3, 3)]
    np.testing.assert_allclose(spectrum.k, expected, rtol=1e-9, atol=1e-12)
    ground = spectrum.ground_state()
    for edge_id in spectrum.edge_ids:
        np.testing.assert_allclose(ground.psi(edge_id), 1.0 / math.sqrt(3.0), atol=1e-12)


def test_star_degenerate_pairs(star_spectrum):
    levels = star_spectrum.levels
    pairs = [level for level in levels if level.multiplicity == 2]
    assert [level.first_mode for level in pairs[:2]] == [4, 10]
    for level, q in zip(pairs, (1, 2)):
        assert abs(level.k - 5.0 * math.pi * q) < 1e-9 * level.k
    for mode in (4, 5, 10, 11):
        assert abs(star_spectrum.k[mode] - 5.0 * math.pi * (1 if mode < 10 else 2)) < 1e-8


def test_orthonormality(seven_edge_spectrum, star_spectrum, three_star, seven_edge):
    test_cases = [
        {"spectrum": seven_edge_spectrum, "graph": seven_edge, "description": "seven-edge tree"},
        {"spectrum": star_spectrum, "graph": three_star, "description": "star with degenerate levels"},
    ]
    for test in test_cases:
        overlap = test["spectrum"].overlap_matrix(test["graph"])
        error = np.abs(overlap - np.eye(len(overlap))).max()
        assert error < 1e-9, test["description"]


def test_vertex_conditions(seven_edge_spectrum, seven_edge):
    spectrum = seven_edge_spectrum
    for mode in range(spectrum.n_modes):
        scale = np.abs(spectrum.coefficients[mode]).max()
        k = spectrum.k[mode]
        for vertex in seven_edge.vertices:
            values, flux = [], 0.0
            for edge, end in seven_edge.incident(vertex.id):
                wave = spectrum.edge_wave(mode, edge.id)
                s = 0.0 if end == "tail" else edge.length
                values.append(wave.evaluate(s))
                flux += wave.derivative(s) if end == "tail" else -wave.derivative(s)
            if vertex.is_leaf:
                assert abs(values[0]) < 1e-8 * scale
            else:
                assert max(values) - min(values) < 1e-8 * scale
                assert abs(flux) < 1e-8 * k * scale


def test_ground_state_is_nonnegative(seven_edge_spectrum):
    ground = seven_edge_spectrum.ground_state()
    peak = max(np.abs(ground.psi(edge_id)).max() for edge_id in seven_edge_spectrum.edge_ids)
    for edge_id in seven_edge_spectrum.edge_ids:
        assert ground.psi(edge_id).min() > -1e-10 * peak
    assert seven_edge_spectrum.k[0] > 0.0


def test_scale_covariance(solver, three_star, star_spectrum):
    scaled = solver.find_spectrum(three_star.scaled(0.5), 12)
    np.testing.assert_allclose(scaled.energies[:12], 4.0 * star_spectrum.energies[:12], rtol=1e-9)


def test_trk_sum_rule(logger, solver, box, box_spectrum):
    engine = SOSEngine(logger)
    mx, my = engine.moments(box_spectrum, box)
    assert trk_residual(box_spectrum, mx, my) < 1e-3

    loop = polygon_loop(48, 2.0 * math.pi)
    spectrum = solver.find_spectrum(loop, 50)
    mx, my = engine.moments(spectrum, loop)
    assert trk_residual(spectrum, mx, my) < 1e-3


def test_configuration_errors(logger, box):
    with pytest.raises(ConfigError):
        SpectralSolver(logger, grid=2000)
    with pytest.raises(ConfigError):
        SpectralSolver(logger).find_spectrum(box, 1)


def test_exhausted_scan_window(logger, box, monkeypatch):
    solver = SpectralSolver(logger, grid=101)
    monkeypatch.setattr(solver, "_candidate_roots", lambda graph, k_max, step: [])
    with pytest.raises(SpectrumError) as excinfo:
        solver.find_spectrum(box, 5)
    assert excinfo.value.report["found"] == 0
    assert excinfo.value.report["requested"] == 5


def _finite_difference_energies(graph, per_unit, count):
    """Lowest energies of -1/2 d^2/ds^2 on a uniform-step discretization of the graph."""
    lattice = nx.Graph()
    for edge in graph.edges:
        intervals = round(edge.length * per_unit)
        chain = [("v", edge.tail)] + [(edge.id, i) for i in range(1, intervals)] + [("v", edge.head)]
        nx.add_path(lattice, chain)
    order = list(lattice.nodes)
    keep = [i for i, node in enumerate(order) if not (node[0] == "v" and graph.is_leaf(node[1]))]
    laplacian = nx.laplacian_matrix(lattice, nodelist=order).tocsr().astype(float)
    # Vertex nodes carry half a cell from every incident edge
    mass = np.array([graph.vertex(order[i][1]).degree / 2.0 if order[i][0] == "v" else 1.0 for i in keep])
    scale = scipy.sparse.diags(1.0 / np.sqrt(mass))
    hamiltonian = 0.5 * per_unit**2 * (scale @ laplacian[keep][:, keep] @ scale)
    values = scipy.sparse.linalg.eigsh(hamiltonian.tocsc(), k=count, sigma=0.0, which="LM")[0]
    return np.sort(values)


def test_matches_finite_differences(star_spectrum, three_star):
    coarse = _finite_difference_energies(three_star, 2000, 10)
    fine = _finite_difference_energies(three_star, 4000, 10)
    extrapolated = (4.0 * fine - coarse) / 3.0
    np.testing.assert_allclose(extrapolated, star_spectrum.energies[:10], rtol=1e-4)
