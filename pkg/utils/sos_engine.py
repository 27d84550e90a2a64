"""Truncated sum-over-states hyperpolarizabilities."""

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from utils.errors import NumericsError, SpectrumError
from utils.numerics import permutation_sum, simpson_weights

AXES = ("x", "y")
BOUND_TOLERANCE = 1e-6


class TensorUnits(Enum):
    RAW = "raw"
    INTRINSIC = "intrinsic"


def component_labels(rank):
    """Index labels in lexicographic order: xxx, xxy, xyx, ..."""
    return ["".join(index) for index in itertools.product(AXES, repeat=rank)]


@dataclass(frozen=True)
class MomentMatrix:
    axis: str
    values: np.ndarray

    @property
    def r00(self):
        return float(self.values[0, 0])

    def barred(self):
        """r_nm - delta_nm r_00."""
        return self.values - self.r00 * np.eye(len(self.values))


@dataclass(frozen=True)
class PolTensors:
    beta: np.ndarray
    gamma: np.ndarray
    units: TensorUnits
    e10: float

    def components(self):
        values = {}
        for label in component_labels(3):
            values[f"beta_{label}"] = float(self.beta[tuple(AXES.index(c) for c in label)])
        for label in component_labels(4):
            values[f"gamma_{label}"] = float(self.gamma[tuple(AXES.index(c) for c in label)])
        return values

    def bound_violations(self, tol=BOUND_TOLERANCE):
        """Components outside |beta| <= 1 and -1/4 <= gamma_iiii <= 1."""
        if self.units is not TensorUnits.INTRINSIC:
            raise NumericsError("Bounds only apply to intrinsic tensors")
        violations = []
        for label in component_labels(3):
            value = float(self.beta[tuple(AXES.index(c) for c in label)])
            if abs(value) > 1.0 + tol:
                violations.append(f"beta_{label}={value:.6g}")
        for axis in range(len(AXES)):
            value = float(self.gamma[axis, axis, axis, axis])
            if value < -0.25 - tol or value > 1.0 + tol:
                violations.append(f"gamma_{AXES[axis] * 4}={value:.6g}")
        return violations


def transition_moments(spectrum, graph, axis):
    """r_nm = sum_p int (r_0p + s u_p) phi_n phi_m ds over all edges."""
    if axis not in AXES:
        raise NumericsError(f"Unknown axis '{axis}'")
    n = spectrum.n_points
    values = np.zeros((spectrum.n_modes, spectrum.n_modes))
    for edge in graph.edges:
        phi = spectrum.samples[edge.id]
        if phi.shape[1] != n:
            raise NumericsError(f"Edge {edge.id} sampled on {phi.shape[1]} points, expected {n}")
        s, x, y = graph.coordinate_samples(edge.id, n)
        r = x if axis == "x" else y
        w = simpson_weights(n, edge.length / (n - 1))
        values += (phi * (w * r)) @ phi.T
    values = 0.5 * (values + values.T)
    return MomentMatrix(axis, values)


def _excited_terms(moments_x, moments_y, energies):
    r = np.stack([moments_x.values, moments_y.values])
    barred = np.stack([moments_x.barred(), moments_y.barred()])
    d = np.asarray(energies, dtype=float)
    d = d[1:] - d[0]
    if d.size == 0 or np.any(d <= 0.0):
        raise SpectrumError("Non-positive excitation energy in sum over states")
    return r[:, 0, 1:], barred[:, 1:, 1:], d


def beta_sos(moments_x, moments_y, energies):
    """beta_ijk = 1/2 P_ijk sum' r^i_0n rbar^j_nm r^k_m0 / (E_n0 E_m0)."""
    a, barred, d = _excited_terms(moments_x, moments_y, energies)
    u = a / d
    terms = 0.5 * np.einsum("in,jnm,km->ijk", u, barred, u)
    return permutation_sum(terms)


def gamma_sos(moments_x, moments_y, energies):
    a, barred, d = _excited_terms(moments_x, moments_y, energies)
    u = a / d
    three_state = np.einsum("in,jnm,m,kmp,lp->ijkl", u, barred, 1.0 / d, barred, u, optimize=True)
    two_state = np.einsum(
        "ij,kl->ijkl",
        np.einsum("in,jn,n->ij", a, a, 1.0 / (d * d)),
        np.einsum("km,lm,m->kl", a, a, 1.0 / d),
    )
    return permutation_sum((three_state - two_state) / 6.0)


def beta_max(e10):
    return 3.0 ** 0.25 / e10 ** 3.5


def gamma_max(e10):
    return 4.0 / e10 ** 5


def intrinsic_normalize(beta, gamma, e10):
    if not (e10 > 0.0 and math.isfinite(e10)):
        raise SpectrumError(f"E10 must be positive for intrinsic units, got {e10}")
    return PolTensors(
        beta=np.asarray(beta) / beta_max(e10),
        gamma=np.asarray(gamma) / gamma_max(e10),
        units=TensorUnits.INTRINSIC,
        e10=e10,
    )


class SOSEngine:
    def __init__(self, logger):
        self.logger = logger

    def moments(self, spectrum, graph):
        return transition_moments(spectrum, graph, "x"), transition_moments(spectrum, graph, "y")

    def compute(self, spectrum, graph, gamma_only=False):
        """Raw tensors from a solved spectrum."""
        mx, my = self.moments(spectrum, graph)
        energies = spectrum.energies
        beta = np.zeros((2, 2, 2)) if gamma_only else beta_sos(mx, my, energies)
        gamma = gamma_sos(mx, my, energies)
        self.logger.debug(
            f"SOS over {spectrum.n_modes} modes on '{graph.name}': "
            f"max|beta|={np.abs(beta).max():.6g}, max|gamma|={np.abs(gamma).max():.6g}"
        )
        return PolTensors(beta, gamma, TensorUnits.RAW, spectrum.e10), (mx, my)
