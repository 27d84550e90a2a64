"""Free-particle eigenproblem on a quantum graph.

Each edge carries phi_p(s) = A_p sin(k s) + B_p cos(k s). Leaves are
Dirichlet, interior vertices impose continuity plus Kirchhoff flux
conservation. The matching conditions form a 2E x 2E secular matrix whose
null vectors at an eigen-wavenumber give the edge coefficients.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from utils.errors import ConfigError, SpectrumError
from utils.numerics import (
    bracket_and_bisect,
    null_space,
    refine_minimum,
    scan_grid,
    simpson_weights,
)

MERGE_TOLERANCE = 1e-9
# Wavenumbers per batched secular-matrix evaluation
SCAN_CHUNK = 256


@dataclass(frozen=True)
class EdgeWave:
    edge_id: int
    k: float
    A: float
    B: float
    s: np.ndarray
    values: np.ndarray

    def evaluate(self, s):
        return self.A * np.sin(self.k * s) + self.B * np.cos(self.k * s)

    def derivative(self, s):
        return self.k * (self.A * np.cos(self.k * s) - self.B * np.sin(self.k * s))


@dataclass(frozen=True)
class Level:
    k: float
    energy: float
    multiplicity: int
    first_mode: int


@dataclass(frozen=True)
class GroundState:
    """Lowest mode: energy, wavenumber and the per-edge samples of psi_0."""

    energy: float
    k: float
    waves: dict
    n_points: int

    def psi(self, edge_id):
        return self.waves[edge_id].values

    def psi_squared(self, edge_id):
        values = self.waves[edge_id].values
        return values * values


@dataclass(frozen=True)
class Spectrum:
    graph_name: str
    edge_ids: tuple
    levels: tuple
    k: np.ndarray
    energies: np.ndarray
    coefficients: np.ndarray  # (modes, E, 2) -> (A_p, B_p)
    samples: dict  # edge id -> (modes, n_points)
    arc: dict  # edge id -> s grid
    n_points: int

    @property
    def n_modes(self):
        return len(self.energies)

    @property
    def excitation_energies(self):
        return self.energies - self.energies[0]

    @property
    def e10(self):
        return float(self.energies[1] - self.energies[0])

    def edge_wave(self, mode, edge_id):
        p = self.edge_ids.index(edge_id)
        A, B = self.coefficients[mode, p]
        return EdgeWave(
            edge_id,
            float(self.k[mode]),
            float(A),
            float(B),
            self.arc[edge_id],
            self.samples[edge_id][mode],
        )

    def ground_state(self):
        waves = {edge_id: self.edge_wave(0, edge_id) for edge_id in self.edge_ids}
        return GroundState(float(self.energies[0]), float(self.k[0]), waves, self.n_points)

    def multiplicities(self):
        return [level.multiplicity for level in self.levels]

    def overlap_matrix(self, graph):
        """Edge-sum inner products <n|m> under Simpson quadrature."""
        overlap = np.zeros((self.n_modes, self.n_modes))
        for edge in graph.edges:
            h = edge.length / (self.n_points - 1)
            w = simpson_weights(self.n_points, h)
            phi = self.samples[edge.id]
            overlap += (phi * w) @ phi.T
        return overlap


def secular_matrix(graph, k):
    """Matching-condition matrix M(k) over stacked (A_p, B_p).

    Accepts a scalar or an array of wavenumbers; flux rows are divided by k.
    """
    k = np.asarray(k, dtype=float)
    size = 2 * len(graph.edges)
    column = {edge.id: 2 * i for i, edge in enumerate(graph.edges)}
    matrix = np.zeros(k.shape + (size, size))

    def value_terms(edge, end):
        c = column[edge.id]
        if end == "tail":
            return [(c + 1, 1.0)]
        ka = k * edge.length
        return [(c, np.sin(ka)), (c + 1, np.cos(ka))]

    def flux_terms(edge, end):
        c = column[edge.id]
        if end == "tail":
            return [(c, 1.0)]
        ka = k * edge.length
        return [(c, -np.cos(ka)), (c + 1, np.sin(ka))]

    row = 0
    for vertex in graph.vertices:
        ends = graph.incident(vertex.id)
        if vertex.is_leaf:
            for c, value in value_terms(*ends[0]):
                matrix[..., row, c] += value
            row += 1
            continue
        first = ends[0]
        for other in ends[1:]:
            for c, value in value_terms(*other):
                matrix[..., row, c] += value
            for c, value in value_terms(*first):
                matrix[..., row, c] -= value
            row += 1
        for end in ends:
            for c, value in flux_terms(*end):
                matrix[..., row, c] += value
        row += 1
    return matrix


def trk_residual(spectrum, moments_x, moments_y, n=0):
    """|sum_m E_mn (x_nm^2 + y_nm^2) - 1/2| over the truncated basis."""
    energies = spectrum.energies
    x = moments_x.values[n]
    y = moments_y.values[n]
    total = math.fsum((energies - energies[n]) * (x * x + y * y))
    return abs(total - 0.5)


class SpectralSolver:
    def __init__(
        self,
        logger,
        grid=2001,
        scan_subdivisions=32,
        svd_threshold=1e-8,
        root_rtol=1e-12,
        conditioning_floor=1e-6,
    ):
        if grid < 3 or grid % 2 == 0:
            raise ConfigError(f"Grid must be an odd number of points per edge, got {grid}")
        self.logger = logger
        self.grid = grid
        self.scan_subdivisions = scan_subdivisions
        self.svd_threshold = svd_threshold
        self.root_rtol = root_rtol
        self.conditioning_floor = conditioning_floor

    def find_spectrum(self, graph, modes):
        """The lowest `modes` eigenmodes, completing the last degenerate level."""
        if modes < 2:
            raise ConfigError(f"At least two modes are needed, got {modes}")
        L = graph.total_length
        n_edges = len(graph.edges)
        step = math.pi / (self.scan_subdivisions * L)
        k_max = 2.0 * math.pi * (modes + n_edges + 1) / L
        self.logger.info(
            f"Solving spectrum of '{graph.name}' for {modes} modes (k <= {k_max:.4g}, step {step:.3g})"
        )

        levels = []
        if not graph.leaves():
            levels.append((0.0, self._zero_mode_basis(graph)))
            self.logger.debug("Leafless graph: constant zero mode added")

        found = sum(basis.shape[1] for _, basis in levels)
        for k in self._candidate_roots(graph, k_max, step):
            if found >= modes:
                break
            basis = self._level_basis(graph, k)
            if basis is None:
                continue
            levels.append((k, basis))
            found += basis.shape[1]
            if basis.shape[1] > 1:
                self.logger.debug(f"Degenerate level k={k:.12g} with multiplicity {basis.shape[1]}")

        if found < modes:
            raise SpectrumError(
                f"Scan window exhausted on '{graph.name}': {found} of {modes} modes below k={k_max:.6g}",
                report={"found": found, "requested": modes, "k_max": k_max},
            )
        return self._assemble(graph, levels)

    def ground_state(self, graph):
        return self.find_spectrum(graph, 2).ground_state()

    def _sigma_ratio(self, graph, k):
        def ratio(part):
            sigma = np.linalg.svd(secular_matrix(graph, part), compute_uv=False)
            return sigma[..., -1] / sigma[..., 0]

        return _in_chunks(ratio, k)

    def _candidate_roots(self, graph, k_max, step):
        """Sign changes of det M(k) merged with near-zero minima of sigma_min/sigma_max."""

        def determinant(k):
            return _in_chunks(lambda part: np.linalg.det(secular_matrix(graph, part)), k)

        roots = bracket_and_bisect(
            determinant, (0.0, k_max), step, tol=self.root_rtol, vectorized=True
        )

        grid = scan_grid((0.0, k_max), step)
        ratio = self._sigma_ratio(graph, grid)
        minima = []
        for i in range(1, len(grid) - 1):
            if ratio[i] < ratio[i - 1] and ratio[i] < ratio[i + 1]:
                k, value = refine_minimum(
                    lambda x: float(self._sigma_ratio(graph, x)),
                    (grid[i - 1], grid[i], grid[i + 1]),
                )
                if value < self.svd_threshold:
                    minima.append(k)

        merged = list(roots)
        for k in minima:
            if all(abs(k - r) > MERGE_TOLERANCE * max(k, r) for r in merged):
                merged.append(k)
        merged.sort()
        self.logger.debug(
            f"{len(roots)} sign-change roots and {len(minima)} singular-value minima, {len(merged)} candidates"
        )
        return merged

    def _level_basis(self, graph, k):
        matrix = secular_matrix(graph, k)
        sigma = np.linalg.svd(matrix, compute_uv=False)
        basis = null_space(matrix, self.svd_threshold)
        dim = basis.shape[1]
        if dim == 0:
            self.logger.debug(f"Candidate k={k:.12g} rejected: sigma_min/sigma_max={sigma[-1] / sigma[0]:.2e}")
            return None
        if dim < len(sigma):
            gap = sigma[-dim - 1] / sigma[0]
            if gap < self.conditioning_floor:
                raise SpectrumError(
                    f"Ill-conditioned null space at k={k:.12g} on '{graph.name}'",
                    report={
                        "k": k,
                        "multiplicity": dim,
                        "singular_values": (sigma / sigma[0]).tolist(),
                        "gap": gap,
                    },
                )
        return basis

    def _zero_mode_basis(self, graph):
        basis = np.zeros((2 * len(graph.edges), 1))
        basis[1::2, 0] = 1.0
        return basis

    def _assemble(self, graph, levels):
        n = self.grid
        edges = graph.edges
        arc = {edge.id: graph.arc_samples(edge.id, n) for edge in edges}
        weights = np.concatenate(
            [simpson_weights(n, edge.length / (n - 1)) for edge in edges]
        )
        root_w = np.sqrt(weights)

        ks, coefficients, blocks, level_info = [], [], [], []
        for k, basis in levels:
            coeff = basis.T.reshape(-1, len(edges), 2)
            phi = np.stack([self._sample(edges, arc, k, c) for c in coeff])
            if phi.shape[0] == 1:
                norm = math.sqrt(simpson_norm(phi[0], weights))
                phi, coeff = phi / norm, coeff / norm
            else:
                # Orthonormalise the degenerate subspace under the quadrature weights
                _, r = scipy.linalg.qr((phi * root_w).T, mode="economic")
                signs = np.sign(np.diag(r))
                signs[signs == 0] = 1.0
                r = r * signs[:, None]
                transform = np.linalg.inv(r)
                phi = transform.T @ phi
                coeff = np.einsum("dn,dpc->npc", transform, coeff)
            level_info.append(Level(k, 0.5 * k * k, len(phi), len(ks)))
            for row, c in zip(phi, coeff):
                sign = self._mode_sign(row, c, ground=not ks)
                ks.append(k)
                coefficients.append(sign * c)
                blocks.append(sign * row)

        phi_all = np.array(blocks)
        offsets = np.cumsum([0] + [n] * len(edges))
        samples = {
            edge.id: phi_all[:, offsets[i] : offsets[i + 1]].copy()
            for i, edge in enumerate(edges)
        }
        k_arr = np.array(ks)
        spectrum = Spectrum(
            graph_name=graph.name,
            edge_ids=tuple(edge.id for edge in edges),
            levels=tuple(level_info),
            k=k_arr,
            energies=0.5 * k_arr * k_arr,
            coefficients=np.array(coefficients),
            samples=samples,
            arc=arc,
            n_points=n,
        )
        ground = phi_all[0]
        if ground.min() < -1e-10 * np.abs(ground).max():
            self.logger.warning(f"Ground state of '{graph.name}' changes sign; check the scan step")
        self.logger.info(
            f"Spectrum of '{graph.name}': {spectrum.n_modes} modes in {len(level_info)} levels, "
            f"E0={spectrum.energies[0]:.8g}, E1={spectrum.energies[1]:.8g}"
        )
        return spectrum

    @staticmethod
    def _sample(edges, arc, k, coeff):
        return np.concatenate(
            [A * np.sin(k * arc[e.id]) + B * np.cos(k * arc[e.id]) for e, (A, B) in zip(edges, coeff)]
        )

    @staticmethod
    def _mode_sign(row, coeff, ground):
        if ground:
            return -1.0 if row.sum() < 0.0 else 1.0
        flat = coeff.ravel()
        return -1.0 if flat[np.argmax(np.abs(flat))] < 0.0 else 1.0


def _in_chunks(fn, k):
    k = np.asarray(k, dtype=float)
    if k.ndim == 0 or len(k) <= SCAN_CHUNK:
        return fn(k)
    return np.concatenate([fn(k[i : i + SCAN_CHUNK]) for i in range(0, len(k), SCAN_CHUNK)])


def simpson_norm(values, weights):
    return math.fsum(weights * values * values)
