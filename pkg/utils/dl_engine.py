"""Dalgarno-Lewis fields on quantum graphs.

On every edge a DL field f with source g (mean zero against psi_0^2) solves

    (f' psi_0^2)' = 2 g psi_0^2,   f' psi_0^2 / 2 = int_0^s g psi_0^2 + C_p

so f is fixed by one flux constant C_p per edge and one value per vertex.
The constants follow from flux conservation at the vertices (plus one
closure row per independent cycle); vertex values are chained outwards
from the root and the field is finally shifted so that <0|f|0> = 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from utils.errors import DLError, NumericsError
from utils.numerics import (
    cumulative_simpson,
    permutation_sum,
    reverse_cumulative_simpson,
    simpson,
    solve_dense,
)
from utils.sos_engine import AXES, PolTensors, TensorUnits

# Each <...> whose leftmost factor is a DL field picks up this sign: F and G
# are anti-Hermitian, so the bra side is the adjoint of the ket-side field.
ADJOINT_SIGN = -1.0


@dataclass(frozen=True)
class EdgeMoment:
    edge_id: int
    axis: str
    value: float


@dataclass(frozen=True)
class DLField:
    kind: str
    axes: tuple
    values: dict
    constants: dict
    tail_values: dict
    end_slopes: dict
    gauge_offset: float
    slope_scale: float
    periodicity: dict = field(default_factory=dict)

    @property
    def label(self):
        return f"{self.kind}_{''.join(self.axes)}"

    @property
    def scale(self):
        return max(float(np.abs(v).max()) for v in self.values.values())


@dataclass(frozen=True)
class VertexResidual:
    vertex: int
    continuity: float
    flux: float


def _step(edge, n_points):
    return edge.length / (n_points - 1)


def coordinate(graph, ground, edge_id, axis):
    _, x, y = graph.coordinate_samples(edge_id, ground.n_points)
    return x if axis == "x" else y


def mean_position(graph, ground, axis):
    """r_00 = <0|r|0>."""
    return math.fsum(
        simpson(coordinate(graph, ground, e.id, axis) * ground.psi_squared(e.id), _step(e, ground.n_points))
        for e in graph.edges
    )


def barred_coordinate(graph, ground, axis):
    r00 = mean_position(graph, ground, axis)
    return {e.id: coordinate(graph, ground, e.id, axis) - r00 for e in graph.edges}


def _resolve(factor, graph, ground, edge_id):
    if isinstance(factor, DLField):
        return factor.values[edge_id]
    if isinstance(factor, dict):
        return factor[edge_id]
    if factor in AXES:
        return coordinate(graph, ground, edge_id, factor)
    if isinstance(factor, str) and factor.endswith("bar") and factor[0] in AXES:
        return coordinate(graph, ground, edge_id, factor[0]) - mean_position(graph, ground, factor[0])
    raise NumericsError(f"Unknown expectation factor {factor!r}")


def expectation(factors, ground, graph):
    """<0| product of factors |0> as plain real products.

    A factor is a DLField, a per-edge sample dict, an axis name ('x', 'y')
    or a barred axis name ('xbar', 'ybar').
    """
    n = ground.n_points
    total = []
    for edge in graph.edges:
        product = ground.psi_squared(edge.id).copy()
        for factor in factors:
            samples = _resolve(factor, graph, ground, edge.id)
            if len(samples) != n:
                raise NumericsError(f"Factor sampled on {len(samples)} points, expected {n}")
            product = product * samples
        total.append(simpson(product, _step(edge, n)))
    return math.fsum(total)


def edge_moments(graph, ground, axis):
    """Per-edge <rbar_p> = int rbar psi_0^2 ds."""
    rbar = barred_coordinate(graph, ground, axis)
    return [
        EdgeMoment(
            e.id,
            axis,
            simpson(rbar[e.id] * ground.psi_squared(e.id), _step(e, ground.n_points)),
        )
        for e in graph.edges
    ]


def solve_flux_constants(graph, moments, axis=None, cycle_integrals=None):
    """Flux constants C_p from vertex flux balance.

    Every vertex contributes sum_{tail=v} C_p - sum_{head=v} C_p =
    sum_{head=v} m_p; at a leaf this reads C_p = 0 (tail) or C_p = -m_p
    (head). Graphs with cycles need cycle_integrals = (J, W) per edge so
    that the field closes around every fundamental cycle.
    """
    m = {moment.edge_id: moment.value for moment in moments}
    column = {edge.id: i for i, edge in enumerate(graph.edges)}
    rows, rhs = [], []
    for vertex in graph.vertices:
        row = np.zeros(len(graph.edges))
        value = 0.0
        for edge, end in graph.incident(vertex.id):
            if end == "tail":
                row[column[edge.id]] += 1.0
            else:
                row[column[edge.id]] -= 1.0
                value += m[edge.id]
        rows.append(row)
        rhs.append(value)

    cycles = graph.fundamental_cycles()
    if cycles:
        if cycle_integrals is None:
            raise DLError(f"Graph '{graph.name}' has cycles; closure integrals are required")
        J, W = cycle_integrals
        for cycle in cycles:
            row = np.zeros(len(graph.edges))
            value = 0.0
            for edge_id, sign in cycle:
                row[column[edge_id]] += sign * W[edge_id]
                value -= sign * J[edge_id]
            rows.append(row)
            rhs.append(value)

    try:
        solution, rank = solve_dense(np.array(rows), np.array(rhs))
    except NumericsError as e:
        raise DLError(f"Flux system for axis {axis} on '{graph.name}' is inconsistent: {e}") from e
    if rank < len(graph.edges):
        raise DLError(
            f"Flux system for axis {axis} on '{graph.name}' is singular (rank {rank} < {len(graph.edges)})"
        )
    return {edge.id: float(solution[column[edge.id]]) for edge in graph.edges}


def _gauge_shift(graph, ground, values):
    n = ground.n_points
    norm = math.fsum(simpson(ground.psi_squared(e.id), _step(e, n)) for e in graph.edges)
    mean = math.fsum(simpson(values[e.id] * ground.psi_squared(e.id), _step(e, n)) for e in graph.edges)
    return mean / norm


def _solve_field(graph, ground, source, kind, axes):
    n = ground.n_points
    inner, psi2, h = {}, {}, {}
    for e in graph.edges:
        h[e.id] = _step(e, n)
        psi2[e.id] = ground.psi_squared(e.id)
        inner[e.id] = cumulative_simpson(source[e.id] * psi2[e.id], h[e.id])
    moments = [EdgeMoment(e.id, "".join(axes), float(inner[e.id][-1])) for e in graph.edges]

    J, W = {}, {}
    for cycle in graph.fundamental_cycles():
        for edge_id, _ in cycle:
            if edge_id not in W:
                W[edge_id] = simpson(1.0 / psi2[edge_id], h[edge_id])
                J[edge_id] = simpson(inner[edge_id] / psi2[edge_id], h[edge_id])
    constants = solve_flux_constants(graph, moments, "".join(axes), (J, W) if W else None)

    ratio, increments = {}, {}
    for e in graph.edges:
        p = e.id
        tail_leaf, head_leaf = graph.is_leaf(e.tail), graph.is_leaf(e.head)
        if head_leaf:
            # Integrate from the leaf end so the numerator vanishes there to rounding
            backward = -reverse_cumulative_simpson(source[p] * psi2[p], h[p])
        if tail_leaf and head_leaf:
            mid = (n - 1) // 2
            numerator = np.concatenate([inner[p][: mid + 1], backward[mid + 1 :]])
        elif tail_leaf:
            numerator = inner[p]
        elif head_leaf:
            numerator = backward
        else:
            numerator = inner[p] + constants[p]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = numerator / psi2[p]
        if tail_leaf:
            q[0] = 0.0
        if head_leaf:
            q[-1] = 0.0
        if not np.all(np.isfinite(q)):
            raise DLError(f"Non-finite {kind}_{''.join(axes)} quadrature on edge {p}")
        ratio[p] = q
        increments[p] = 2.0 * cumulative_simpson(q, h[p])

    potential = {graph.root: 0.0}
    for u, v, key in graph.traversal():
        if v in potential:
            continue
        edge = graph.edge(key)
        delta = increments[key][-1]
        potential[v] = potential[u] + delta if edge.tail == u else potential[u] - delta

    values = {e.id: potential[e.tail] + increments[e.id] for e in graph.edges}
    offset = _gauge_shift(graph, ground, values)
    values = {p: v - offset for p, v in values.items()}
    return DLField(
        kind=kind,
        axes=tuple(axes),
        values=values,
        constants=constants,
        tail_values={p: float(v[0]) for p, v in values.items()},
        end_slopes={p: (2.0 * float(q[0]), 2.0 * float(q[-1])) for p, q in ratio.items()},
        gauge_offset=offset,
        slope_scale=2.0 * max(float(np.abs(q).max()) for q in ratio.values()),
    )


def _solve_loop_field(graph, ground, source, kind, axes):
    n = ground.n_points
    walk = graph.cycle_walk()
    carry = 0.0
    segments = []
    for edge, forward in walk:
        h = _step(edge, n)
        g = source[edge.id] if forward else source[edge.id][::-1]
        psi2 = ground.psi_squared(edge.id)
        psi2 = psi2 if forward else psi2[::-1]
        inner = carry + cumulative_simpson(g * psi2, h)
        carry = float(inner[-1])
        segments.append((edge, forward, h, inner, psi2))

    total_w = sum(simpson(1.0 / psi2, h) for _, _, h, _, psi2 in segments)
    total_j = sum(simpson(inner / psi2, h) for _, _, h, inner, psi2 in segments)
    C = -total_j / total_w

    values, constants, slopes = {}, {}, {}
    level = 0.0
    first_slope = last_slope = 0.0
    scale = 0.0
    for index, (edge, forward, h, inner, psi2) in enumerate(segments):
        q = (inner + C) / psi2
        along = level + 2.0 * cumulative_simpson(q, h)
        level = float(along[-1])
        scale = max(scale, float(np.abs(q).max()))
        if index == 0:
            first_slope = 2.0 * float(q[0])
        last_slope = 2.0 * float(q[-1])
        if forward:
            values[edge.id] = along
            constants[edge.id] = float(inner[0] + C)
            slopes[edge.id] = (2.0 * float(q[0]), 2.0 * float(q[-1]))
        else:
            values[edge.id] = along[::-1].copy()
            constants[edge.id] = -float(inner[-1] + C)
            slopes[edge.id] = (-2.0 * float(q[-1]), -2.0 * float(q[0]))

    offset = _gauge_shift(graph, ground, values)
    values = {p: v - offset for p, v in values.items()}
    return DLField(
        kind=kind,
        axes=tuple(axes),
        values=values,
        constants=constants,
        tail_values={p: float(v[0]) for p, v in values.items()},
        end_slopes=slopes,
        gauge_offset=offset,
        slope_scale=2.0 * scale,
        periodicity={"value_jump": level, "slope_jump": last_slope - first_slope, "C": C},
    )


def _g_source(graph, ground, f_field, axis):
    rbar = barred_coordinate(graph, ground, axis)
    c = expectation([rbar, f_field], ground, graph)
    return {p: rbar[p] * f_field.values[p] - c for p in rbar}


def build_F(graph, ground, axis):
    return _solve_field(graph, ground, barred_coordinate(graph, ground, axis), "F", (axis,))


def build_G(graph, ground, f_field, axis):
    """G_ij with source rbar^i F_j - <0|rbar^i F_j|0>."""
    source = _g_source(graph, ground, f_field, axis)
    return _solve_field(graph, ground, source, "G", (axis, f_field.axes[0]))


def build_F_loop(graph, ground, axis):
    if not graph.is_pure_loop:
        raise DLError(f"Loop construction applied to non-loop graph '{graph.name}'")
    return _solve_loop_field(graph, ground, barred_coordinate(graph, ground, axis), "F", (axis,))


def build_G_loop(graph, ground, f_field, axis):
    if not graph.is_pure_loop:
        raise DLError(f"Loop construction applied to non-loop graph '{graph.name}'")
    source = _g_source(graph, ground, f_field, axis)
    return _solve_loop_field(graph, ground, source, "G", (axis, f_field.axes[0]))


def beta_dl(f_x, f_y, ground, graph):
    """beta_ijk = -(1/2) P_ijk (<F_i r^j F_k> - r^j_00 <F_i F_k>)."""
    fields = (f_x, f_y)
    r00 = [mean_position(graph, ground, axis) for axis in AXES]
    pair = np.array([[expectation([fi, fk], ground, graph) for fk in fields] for fi in fields])
    terms = np.zeros((2, 2, 2))
    for i, fi in enumerate(fields):
        for j, axis in enumerate(AXES):
            for k, fk in enumerate(fields):
                bracket = ADJOINT_SIGN * (
                    expectation([fi, axis, fk], ground, graph) - r00[j] * pair[i, k]
                )
                terms[i, j, k] = -0.5 * bracket
    return permutation_sum(terms)


def gamma_dl(f_fields, g_fields, ground, graph):
    """gamma = (1/6) P_ijkl <F_i rbar^j G_kl> - (1/6) P_ijkl <F_i F_j><r^k F_l>.

    g_fields maps (k, l) axis-index pairs to G_kl.
    """
    ff = np.array([[expectation([fi, fj], ground, graph) for fj in f_fields] for fi in f_fields])
    rf = np.array(
        [[expectation([axis, fl], ground, graph) for fl in f_fields] for axis in AXES]
    )
    bars = [barred_coordinate(graph, ground, axis) for axis in AXES]
    terms = np.zeros((2, 2, 2, 2))
    for i, fi in enumerate(f_fields):
        for j, bar in enumerate(bars):
            for k in range(2):
                for l in range(2):
                    first = ADJOINT_SIGN * expectation([fi, bar, g_fields[(k, l)]], ground, graph)
                    second = ADJOINT_SIGN * ff[i, j] * rf[k, l]
                    terms[i, j, k, l] = (first - second) / 6.0
    return permutation_sum(terms)


def vertex_residuals(graph, dl_field):
    """Continuity spread and outward-slope sum at every interior vertex."""
    residuals = []
    for vertex in graph.interior_vertices():
        values, flux = [], 0.0
        for edge, end in graph.incident(vertex.id):
            start_slope, end_slope = dl_field.end_slopes[edge.id]
            if end == "tail":
                values.append(dl_field.values[edge.id][0])
                flux += start_slope
            else:
                values.append(dl_field.values[edge.id][-1])
                flux -= end_slope
        residuals.append(VertexResidual(vertex.id, float(max(values) - min(values)), abs(flux)))
    return residuals


def relative_vertex_residuals(graph, dl_field):
    """Worst continuity and flux residuals relative to the field's value and slope scales."""
    residuals = vertex_residuals(graph, dl_field)
    if not residuals:
        return 0.0, 0.0
    continuity = max(r.continuity for r in residuals) / max(dl_field.scale, 1e-300)
    flux = max(r.flux for r in residuals) / max(dl_field.slope_scale, 1e-300)
    return continuity, flux


@dataclass
class DLResult:
    tensors: PolTensors
    fields: dict
    diagnostics: dict


class DLEngine:
    def __init__(self, logger):
        self.logger = logger

    def build_fields(self, graph, ground):
        loop = graph.is_pure_loop
        make_f = build_F_loop if loop else build_F
        make_g = build_G_loop if loop else build_G
        f_fields = tuple(make_f(graph, ground, axis) for axis in AXES)
        # G_kl is driven by rbar^k F_l
        g_fields = {
            (k, l): make_g(graph, ground, f_fields[l], AXES[k]) for k in range(2) for l in range(2)
        }
        return f_fields, g_fields

    def compute(self, graph, ground, e10):
        """Raw DL tensors plus fields and their vertex/periodicity diagnostics."""
        self.logger.debug(f"Building DL fields on '{graph.name}' ({'loop' if graph.is_pure_loop else 'general'} path)")
        f_fields, g_fields = self.build_fields(graph, ground)
        beta = beta_dl(f_fields[0], f_fields[1], ground, graph)
        gamma = gamma_dl(f_fields, g_fields, ground, graph)

        fields = {f.label: f for f in f_fields}
        fields.update({g.label: g for g in g_fields.values()})
        diagnostics = {"vertex_continuity": 0.0, "vertex_flux": 0.0}
        for dl_field in fields.values():
            continuity, flux = relative_vertex_residuals(graph, dl_field)
            diagnostics["vertex_continuity"] = max(diagnostics["vertex_continuity"], continuity)
            diagnostics["vertex_flux"] = max(diagnostics["vertex_flux"], flux)
            if dl_field.periodicity:
                diagnostics[f"{dl_field.label}_value_jump"] = abs(dl_field.periodicity["value_jump"])
                diagnostics[f"{dl_field.label}_slope_jump"] = abs(dl_field.periodicity["slope_jump"])
        diagnostics["gauge_F"] = max(abs(expectation([f], ground, graph)) for f in f_fields)

        if diagnostics["vertex_continuity"] > 1e-8 or diagnostics["vertex_flux"] > 1e-8:
            self.logger.warning(
                f"DL vertex residuals on '{graph.name}': continuity {diagnostics['vertex_continuity']:.2e}, "
                f"flux {diagnostics['vertex_flux']:.2e}"
            )
        return DLResult(PolTensors(beta, gamma, TensorUnits.RAW, e10), fields, diagnostics)
