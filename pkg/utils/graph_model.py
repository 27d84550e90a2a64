"""Planar quantum graphs: parsing, validation and Cartesian embedding."""

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import networkx as nx
import numpy as np

from utils.errors import GraphSpecError

CLOSURE_TOLERANCE = 1e-9


class VertexKind(Enum):
    DIRICHLET_LEAF = "dirichlet-leaf"
    KIRCHHOFF_INTERIOR = "kirchhoff-interior"


@dataclass(frozen=True)
class Edge:
    """One wire. s = 0 sits on the tail vertex, s = length on the head."""

    id: int
    length: float
    angle: float
    tail: int
    head: int

    @property
    def direction(self):
        return math.cos(self.angle), math.sin(self.angle)

    @property
    def displacement(self):
        cos_t, sin_t = self.direction
        return self.length * cos_t, self.length * sin_t

    def other_end(self, vertex):
        return self.head if vertex == self.tail else self.tail


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: VertexKind
    degree: int

    @property
    def is_leaf(self):
        return self.kind is VertexKind.DIRICHLET_LEAF


@dataclass(frozen=True)
class QuantumGraph:
    edges: tuple
    vertices: tuple
    embedding: dict
    edge_offsets: dict
    name: str = "graph"

    @property
    def root(self):
        return self.vertices[0].id

    @property
    def edge_ids(self):
        return [edge.id for edge in self.edges]

    @cached_property
    def _edges_by_id(self):
        return {edge.id: edge for edge in self.edges}

    @cached_property
    def _vertices_by_id(self):
        return {vertex.id: vertex for vertex in self.vertices}

    def edge(self, edge_id):
        try:
            return self._edges_by_id[edge_id]
        except KeyError:
            raise GraphSpecError(f"Unknown edge id {edge_id} in graph '{self.name}'") from None

    def vertex(self, vertex_id):
        return self._vertices_by_id[vertex_id]

    @cached_property
    def multigraph(self):
        g = nx.MultiGraph()
        g.add_nodes_from(vertex.id for vertex in self.vertices)
        for edge in self.edges:
            g.add_edge(edge.tail, edge.head, key=edge.id)
        return g

    @cached_property
    def _incidence(self):
        ends = {vertex.id: [] for vertex in self.vertices}
        for edge in self.edges:
            ends[edge.tail].append((edge, "tail"))
            ends[edge.head].append((edge, "head"))
        return ends

    def incident(self, vertex_id):
        """Edge ends touching a vertex as (edge, 'tail' | 'head'), in edge-id order."""
        return self._incidence[vertex_id]

    def leaves(self):
        return [vertex for vertex in self.vertices if vertex.is_leaf]

    def interior_vertices(self):
        return [vertex for vertex in self.vertices if not vertex.is_leaf]

    def is_leaf(self, vertex_id):
        return self._vertices_by_id[vertex_id].is_leaf

    @property
    def total_length(self):
        return math.fsum(edge.length for edge in self.edges)

    @property
    def cycle_rank(self):
        return len(self.edges) - len(self.vertices) + 1

    @property
    def is_pure_loop(self):
        """A single cycle: every vertex has degree two."""
        return all(vertex.degree == 2 for vertex in self.vertices) and self.cycle_rank == 1

    def classify_vertices(self):
        return {vertex.id: vertex.kind for vertex in self.vertices}

    def project_coordinate(self, edge_id, s, axis):
        edge = self.edge(edge_id)
        if s < 0.0 or s > edge.length * (1.0 + 1e-12):
            raise GraphSpecError(f"Arc length {s} outside [0, {edge.length}] on edge {edge_id}")
        x0, y0 = self.edge_offsets[edge_id]
        cos_t, sin_t = edge.direction
        if axis == "x":
            return x0 + s * cos_t
        if axis == "y":
            return y0 + s * sin_t
        raise GraphSpecError(f"Unknown axis '{axis}'")

    def arc_samples(self, edge_id, n_points):
        return np.linspace(0.0, self.edge(edge_id).length, n_points)

    def coordinate_samples(self, edge_id, n_points):
        """(s, x(s), y(s)) on the uniform grid of one edge."""
        edge = self.edge(edge_id)
        s = self.arc_samples(edge_id, n_points)
        x0, y0 = self.edge_offsets[edge_id]
        cos_t, sin_t = edge.direction
        return s, x0 + s * cos_t, y0 + s * sin_t

    def traversal(self):
        """Breadth-first edge order from the root as (from_vertex, to_vertex, edge_id)."""
        return list(nx.edge_bfs(self.multigraph, source=self.root))

    def spanning_tree(self):
        """Tree edges keyed by the vertex they discover, plus the left-over edges."""
        parent = {self.root: None}
        chords = []
        for u, v, key in self.traversal():
            if v not in parent:
                parent[v] = (key, u)
            else:
                chords.append(key)
        return parent, chords

    def fundamental_cycles(self):
        """One signed edge list per independent cycle.

        Each cycle is a list of (edge_id, sign) with sign +1 when the edge is
        walked tail to head.
        """
        parent, chords = self.spanning_tree()

        def path_to_root(vertex):
            signs = {}
            while parent[vertex] is not None:
                key, up = parent[vertex]
                edge = self.edge(key)
                signs[key] = 1 if edge.tail == vertex else -1
                vertex = up
            return signs

        cycles = []
        for key in chords:
            edge = self.edge(key)
            signs = {key: 1}
            for tree_key, sign in path_to_root(edge.head).items():
                signs[tree_key] = signs.get(tree_key, 0) + sign
            for tree_key, sign in path_to_root(edge.tail).items():
                signs[tree_key] = signs.get(tree_key, 0) - sign
            cycles.append([(k, s) for k, s in sorted(signs.items()) if s != 0])
        return cycles

    def cycle_walk(self):
        """Walk a pure loop from the root as (edge, forward) pairs."""
        if not self.is_pure_loop:
            raise GraphSpecError(f"Graph '{self.name}' is not a single loop")
        walk = []
        used = set()
        vertex = self.root
        for _ in range(len(self.edges)):
            edge, _end = next(
                (edge, end) for edge, end in self.incident(vertex) if edge.id not in used
            )
            used.add(edge.id)
            forward = edge.tail == vertex
            walk.append((edge, forward))
            vertex = edge.other_end(vertex)
        return walk

    def edge_specs(self):
        return [
            {
                "length": edge.length,
                "angle_deg": math.degrees(edge.angle),
                "from": edge.tail,
                "to": edge.head,
            }
            for edge in self.edges
        ]

    def _rebuild(self, edges, origin=None, name=None):
        return build_graph(
            edges,
            name=name or self.name,
            origin=origin if origin is not None else self.embedding[self.root],
        )

    def rotated(self, delta):
        """Rigid rotation about the root vertex by delta radians."""
        edges = [Edge(e.id, e.length, e.angle + delta, e.tail, e.head) for e in self.edges]
        return self._rebuild(edges)

    def reflected(self):
        """Mirror image through the x axis."""
        edges = [Edge(e.id, e.length, -e.angle, e.tail, e.head) for e in self.edges]
        x0, y0 = self.embedding[self.root]
        return self._rebuild(edges, origin=(x0, -y0))

    def scaled(self, factor):
        edges = [Edge(e.id, e.length * factor, e.angle, e.tail, e.head) for e in self.edges]
        x0, y0 = self.embedding[self.root]
        return self._rebuild(edges, origin=(x0 * factor, y0 * factor))

    def translated(self, dx, dy):
        x0, y0 = self.embedding[self.root]
        return self._rebuild(list(self.edges), origin=(x0 + dx, y0 + dy))

    def with_edge_angle(self, edge_id, angle):
        self.edge(edge_id)
        edges = [
            Edge(e.id, e.length, angle if e.id == edge_id else e.angle, e.tail, e.head)
            for e in self.edges
        ]
        return self._rebuild(edges)

    def summary(self):
        return {
            "name": self.name,
            "edges": len(self.edges),
            "vertices": len(self.vertices),
            "leaves": len(self.leaves()),
            "total_length": self.total_length,
            "cycle_rank": self.cycle_rank,
        }


def _embed(edges, vertex_ids, root, origin):
    g = nx.MultiGraph()
    g.add_nodes_from(vertex_ids)
    for edge in edges:
        g.add_edge(edge.tail, edge.head, key=edge.id)
    if not nx.is_connected(g):
        raise GraphSpecError("Graph is disconnected")

    by_id = {edge.id: edge for edge in edges}
    positions = {root: (float(origin[0]), float(origin[1]))}
    chords = []
    for u, v, key in nx.edge_bfs(g, source=root):
        edge = by_id[key]
        dx, dy = edge.displacement
        if edge.tail != u:
            dx, dy = -dx, -dy
        if v not in positions:
            ux, uy = positions[u]
            positions[v] = (ux + dx, uy + dy)
        else:
            chords.append(edge)

    total = math.fsum(edge.length for edge in edges)
    for edge in chords:
        tx, ty = positions[edge.tail]
        hx, hy = positions[edge.head]
        dx, dy = edge.displacement
        gap = math.hypot(tx + dx - hx, ty + dy - hy)
        if gap > CLOSURE_TOLERANCE * total:
            raise GraphSpecError(
                f"Cycle through edge {edge.id} does not close: gap {gap:.3e} "
                f"exceeds {CLOSURE_TOLERANCE:g} x total length"
            )
    return positions


def build_graph(edges, name="graph", origin=(0.0, 0.0)):
    """Validate edges and embed them with the lowest-id vertex at origin."""
    edges = sorted(edges, key=lambda e: e.id)
    if not edges:
        raise GraphSpecError("A graph needs at least one edge")
    seen = set()
    for edge in edges:
        if edge.id in seen:
            raise GraphSpecError(f"Duplicate edge id {edge.id}")
        seen.add(edge.id)
        if not (math.isfinite(edge.length) and edge.length > 0.0):
            raise GraphSpecError(f"Edge {edge.id} has non-positive length {edge.length}")
        if not math.isfinite(edge.angle):
            raise GraphSpecError(f"Edge {edge.id} has a non-finite angle")
        if edge.tail == edge.head:
            raise GraphSpecError(f"Edge {edge.id} is a self-loop on vertex {edge.tail}")

    degree = {}
    for edge in edges:
        degree[edge.tail] = degree.get(edge.tail, 0) + 1
        degree[edge.head] = degree.get(edge.head, 0) + 1
    vertex_ids = sorted(degree)
    vertices = tuple(
        Vertex(
            v,
            VertexKind.DIRICHLET_LEAF if degree[v] == 1 else VertexKind.KIRCHHOFF_INTERIOR,
            degree[v],
        )
        for v in vertex_ids
    )

    embedding = _embed(edges, vertex_ids, vertex_ids[0], origin)
    offsets = {edge.id: embedding[edge.tail] for edge in edges}
    return QuantumGraph(
        edges=tuple(edges),
        vertices=vertices,
        embedding=embedding,
        edge_offsets=offsets,
        name=name,
    )


def _number(entry, key, index):
    value = entry.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphSpecError(f"Edge #{index}: '{key}' must be a number, got {value!r}")
    return float(value)


def _vertex_id(entry, key, index):
    value = entry.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphSpecError(f"Edge #{index}: '{key}' must be an integer vertex id, got {value!r}")
    return value


def parse_graph(spec):
    """Build a QuantumGraph from a graph spec document (JSON text or parsed dict).

    Schema: {"edges": [{"length", "angle_deg", "from", "to"}, ...], "name"?}.
    Edge ids are assigned 1, 2, ... in document order.
    """
    if isinstance(spec, (str, bytes)):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as e:
            raise GraphSpecError(f"Graph spec is not valid JSON: {e}") from e
    if not isinstance(spec, dict):
        raise GraphSpecError("Graph spec must be a JSON object")
    entries = spec.get("edges")
    if not isinstance(entries, list) or not entries:
        raise GraphSpecError("Graph spec needs a non-empty 'edges' list")

    edges = []
    for index, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            raise GraphSpecError(f"Edge #{index} must be an object")
        edges.append(
            Edge(
                id=index,
                length=_number(entry, "length", index),
                angle=math.radians(_number(entry, "angle_deg", index)),
                tail=_vertex_id(entry, "from", index),
                head=_vertex_id(entry, "to", index),
            )
        )
    name = spec.get("name", "graph")
    if not isinstance(name, str):
        raise GraphSpecError("'name' must be a string")
    return build_graph(edges, name=name)


def load_graph(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_graph(f.read())


def star_graph(lengths, angles_deg, name="star"):
    """Center vertex 0 is the tail of every arm; arm p ends on leaf p."""
    if len(lengths) != len(angles_deg):
        raise GraphSpecError("A star needs one angle per arm")
    edges = [
        Edge(p, float(a), math.radians(t), 0, p)
        for p, (a, t) in enumerate(zip(lengths, angles_deg), start=1)
    ]
    return build_graph(edges, name=name)


def wire_graph(lengths, angles_deg, name="wire"):
    """Chain 0 -> 1 -> ... -> n of straight segments."""
    if len(lengths) != len(angles_deg):
        raise GraphSpecError("A wire needs one angle per segment")
    edges = [
        Edge(p, float(a), math.radians(t), p - 1, p)
        for p, (a, t) in enumerate(zip(lengths, angles_deg), start=1)
    ]
    return build_graph(edges, name=name)


def polygon_loop(sides, perimeter, name=None):
    """Regular polygon with the given number of sides, walked counter-clockwise."""
    if sides < 2:
        raise GraphSpecError("A loop needs at least two edges")
    side = perimeter / sides
    edges = [
        Edge(p + 1, side, 2.0 * math.pi * p / sides, p, (p + 1) % sides)
        for p in range(sides)
    ]
    return build_graph(edges, name=name or f"loop{sides}")
