import dataclasses
import math

import numpy as np
import pytest

from utils.errors import NumericsError, SpectrumError
from utils.sos_engine import (
    MomentMatrix,
    SOSEngine,
    TensorUnits,
    beta_max,
    beta_sos,
    component_labels,
    gamma_max,
    intrinsic_normalize,
    transition_moments,
)


@pytest.fixture(scope="module")
def sos(logger):
    return SOSEngine(logger)


@pytest.fixture(scope="module")
def star_tensors(sos, star_spectrum, three_star):
    raw, _ = sos.compute(star_spectrum, three_star)
    return raw


def test_box_moments(box_spectrum, box):
    mx = transition_moments(box_spectrum, box, "x")
    assert abs(mx.r00 - math.pi / 2) < 1e-12
    assert abs(abs(mx.values[0, 1]) - 16.0 / (9.0 * math.pi)) < 1e-10
    assert np.all(mx.values == mx.values.T)
    assert np.abs(mx.barred()[0]).max() == np.abs(mx.values[0, 1:]).max()

    my = transition_moments(box_spectrum, box, "y")
    assert np.abs(my.values).max() < 1e-15

    with pytest.raises(NumericsError):
        transition_moments(box_spectrum, box, "z")


def test_box_parity(sos, box_spectrum, box):
    raw, _ = sos.compute(box_spectrum, box)
    assert np.abs(raw.beta).max() < 1e-10
    assert raw.gamma[0, 0, 0, 1] == 0.0
    assert raw.gamma[1, 1, 1, 1] == 0.0
    assert raw.gamma[0, 0, 0, 0] != 0.0
    assert raw.units is TensorUnits.RAW


def test_half_turn_flips_beta(sos, star_spectrum, three_star, star_tensors):
    turned, _ = sos.compute(star_spectrum, three_star.rotated(math.pi))
    scale = np.abs(star_tensors.beta).max()
    assert np.abs(turned.beta + star_tensors.beta).max() < 1e-12 * scale
    assert np.abs(turned.gamma - star_tensors.gamma).max() < 1e-12 * np.abs(star_tensors.gamma).max()


def test_reflection_parity(sos, star_spectrum, three_star, star_tensors):
    mirrored, _ = sos.compute(star_spectrum, three_star.reflected())
    scale = np.abs(star_tensors.beta).max()
    test_cases = [
        {"index": (0, 0, 0), "sign": 1.0, "description": "no y index"},
        {"index": (0, 0, 1), "sign": -1.0, "description": "one y index"},
        {"index": (0, 1, 1), "sign": 1.0, "description": "two y indices"},
        {"index": (1, 1, 1), "sign": -1.0, "description": "three y indices"},
    ]
    for test in test_cases:
        expected = test["sign"] * star_tensors.beta[test["index"]]
        assert abs(mirrored.beta[test["index"]] - expected) < 1e-12 * scale, test["description"]


def test_tensors_are_exactly_symmetric(star_tensors):
    beta, gamma = star_tensors.beta, star_tensors.gamma
    assert beta[0, 0, 1] == beta[0, 1, 0] == beta[1, 0, 0]
    assert beta[0, 1, 1] == beta[1, 0, 1] == beta[1, 1, 0]
    assert gamma[0, 0, 1, 1] == gamma[1, 1, 0, 0] == gamma[0, 1, 0, 1] == gamma[1, 0, 1, 0]
    assert gamma[0, 0, 0, 1] == gamma[1, 0, 0, 0]


def test_intrinsic_scale_invariance(sos, solver, three_star, star_spectrum, star_tensors):
    base = intrinsic_normalize(star_tensors.beta, star_tensors.gamma, star_spectrum.e10)
    grown = three_star.scaled(2.5)
    spectrum = solver.find_spectrum(grown, 30)
    raw, _ = sos.compute(spectrum, grown)
    scaled = intrinsic_normalize(raw.beta, raw.gamma, spectrum.e10)
    assert np.abs(scaled.beta - base.beta).max() < 1e-8 * np.abs(base.beta).max()
    assert np.abs(scaled.gamma - base.gamma).max() < 1e-8 * np.abs(base.gamma).max()
    assert abs(np.abs(raw.beta).max() / np.abs(star_tensors.beta).max() - 2.5**7) < 1e-6 * 2.5**7


def test_degenerate_basis_independence(sos, star_spectrum, three_star, star_tensors):
    angle = 0.7
    mix = np.array([[math.cos(angle), math.sin(angle)], [-math.sin(angle), math.cos(angle)]])
    samples = {}
    for edge_id, phi in star_spectrum.samples.items():
        rotated = phi.copy()
        rotated[[4, 5]] = mix @ phi[[4, 5]]
        samples[edge_id] = rotated
    mixed = dataclasses.replace(star_spectrum, samples=samples)
    raw, _ = sos.compute(mixed, three_star)
    assert np.abs(raw.beta - star_tensors.beta).max() < 1e-9 * np.abs(star_tensors.beta).max()
    assert np.abs(raw.gamma - star_tensors.gamma).max() < 1e-9 * np.abs(star_tensors.gamma).max()


def test_intrinsic_bounds(star_tensors, star_spectrum):
    intrinsic = intrinsic_normalize(star_tensors.beta, star_tensors.gamma, star_spectrum.e10)
    assert intrinsic.units is TensorUnits.INTRINSIC
    assert intrinsic.bound_violations() == []
    with pytest.raises(NumericsError):
        star_tensors.bound_violations()


def test_intrinsic_normalize_needs_positive_gap():
    for e10 in (0.0, -1.0, math.inf):
        with pytest.raises(SpectrumError):
            intrinsic_normalize(np.zeros((2, 2, 2)), np.zeros((2, 2, 2, 2)), e10)


def test_normalization_constants():
    assert abs(beta_max(1.0) - 3.0**0.25) < 1e-15
    assert abs(gamma_max(2.0) - 4.0 / 32.0) < 1e-15
    assert abs(beta_max(4.0) - 3.0**0.25 / 128.0) < 1e-15


def test_component_names(star_tensors):
    assert component_labels(3)[:3] == ["xxx", "xxy", "xyx"]
    assert len(component_labels(4)) == 16
    components = star_tensors.components()
    assert len(components) == 24
    assert components["beta_xyy"] == star_tensors.beta[0, 1, 1]
    assert components["gamma_yyyy"] == star_tensors.gamma[1, 1, 1, 1]


def test_rejects_degenerate_ground_state():
    moments = MomentMatrix("x", np.eye(3))
    with pytest.raises(SpectrumError):
        beta_sos(moments, moments, np.array([0.5, 0.5, 2.0]))


def test_gamma_only_skips_beta(sos, box_spectrum, box):
    raw, (mx, my) = sos.compute(box_spectrum, box, gamma_only=True)
    assert np.all(raw.beta == 0.0)
    assert mx.axis == "x" and my.axis == "y"
