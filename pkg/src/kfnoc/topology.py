"""Mesh layout, node roles and dimension-ordered routing.

The network is a W x H 2D mesh of tiles.  Every tile holds one node that
is either a CPU cluster, a GPU cluster, or a memory controller (MC), and
one router per subnetwork.  Physical channels are split into independent
subnetworks (2 or 4) so that requests and replies never share buffers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple


class NodeRole(IntEnum):
    CPU = 0
    GPU = 1
    MC = 2


class Port(IntEnum):
    """Router port indices, identical for inputs and outputs.

    EJECT is the local port: flits enter the network through it (from the
    network interface) and leave through it (to the node).
    """

    EAST = 0
    WEST = 1
    NORTH = 2
    SOUTH = 3
    EJECT = 4

    @property
    def opposite(self) -> "Port":
        return _OPPOSITE[self]


# Local port seen from the neighbouring router's perspective has no
# opposite; routing never produces EJECT->EJECT hops.
_OPPOSITE = {
    Port.EAST: Port.WEST,
    Port.WEST: Port.EAST,
    Port.NORTH: Port.SOUTH,
    Port.SOUTH: Port.NORTH,
    Port.EJECT: Port.EJECT,
}

# (dx, dy) per direction; y grows southwards so row 0 is the north edge.
_OFFSETS = {
    Port.EAST: (1, 0),
    Port.WEST: (-1, 0),
    Port.NORTH: (0, -1),
    Port.SOUTH: (0, 1),
}

N_PORTS = 5

VALID_SUBNET_COUNTS = (2, 4)

_ROLE_CHARS = {"C": NodeRole.CPU, "G": NodeRole.GPU, "M": NodeRole.MC}


class NodeId(NamedTuple):
    x: int
    y: int


@dataclass
class Topology:
    """Static description of one mesh instance."""

    width: int
    height: int
    subnet_count: int
    roles: dict[NodeId, NodeRole]
    cpu_nodes: list[NodeId] = field(default_factory=list)
    gpu_nodes: list[NodeId] = field(default_factory=list)
    mc_nodes: list[NodeId] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.cpu_nodes and not self.gpu_nodes and not self.mc_nodes:
            for node in self.nodes():
                role = self.roles[node]
                if role == NodeRole.CPU:
                    self.cpu_nodes.append(node)
                elif role == NodeRole.GPU:
                    self.gpu_nodes.append(node)
                else:
                    self.mc_nodes.append(node)

    def nodes(self) -> list[NodeId]:
        """All nodes in row-major order (the canonical iteration order)."""
        return [NodeId(x, y) for y in range(self.height) for x in range(self.width)]

    def node_index(self, node: NodeId) -> int:
        return node.y * self.width + node.x

    def node_at(self, index: int) -> NodeId:
        return NodeId(index % self.width, index // self.width)

    def in_bounds(self, node: NodeId) -> bool:
        return 0 <= node.x < self.width and 0 <= node.y < self.height

    def neighbor(self, node: NodeId, port: Port) -> NodeId | None:
        """Neighbouring node through ``port``, or None at the mesh edge."""
        if port == Port.EJECT:
            return None
        dx, dy = _OFFSETS[port]
        cand = NodeId(node.x + dx, node.y + dy)
        return cand if self.in_bounds(cand) else None

    def link_ports(self, node: NodeId) -> list[Port]:
        """Mesh directions that actually have a neighbour at ``node``."""
        return [p for p in (Port.EAST, Port.WEST, Port.NORTH, Port.SOUTH)
                if self.neighbor(node, p) is not None]

    def role_of(self, node: NodeId) -> NodeRole:
        return self.roles[node]


def xy_route(current: NodeId, dest: NodeId) -> Port:
    """Dimension-ordered (XY) routing decision for one hop.

    The X offset is reduced to zero first, then the Y offset.  With all
    traffic following the same order, no cyclic channel dependency can
    form inside a subnetwork, so the route function is deadlock free as
    long as requests and replies use disjoint subnetworks.
    """
    if current == dest:
        return Port.EJECT
    if dest.x != current.x:
        return Port.EAST if dest.x > current.x else Port.WEST
    return Port.SOUTH if dest.y > current.y else Port.NORTH


def route_path(src: NodeId, dest: NodeId) -> list[NodeId]:
    """Full XY path, endpoints included."""
    path = [src]
    cur = src
    while cur != dest:
        port = xy_route(cur, dest)
        dx, dy = _OFFSETS[port]
        cur = NodeId(cur.x + dx, cur.y + dy)
        path.append(cur)
    return path


def _default_roles(width: int, height: int) -> dict[NodeId, NodeRole]:
    """Built-in placement: MCs on the west and east columns (corners
    excluded), remaining tiles checkerboarded CPU/GPU.

    On the default 6x6 mesh this yields 14 CPU, 14 GPU and 8 MC nodes.
    """
    if width < 3 or height < 3:
        raise ValueError(
            "default placement needs width >= 3 and height >= 3, "
            f"got {width}x{height}"
        )
    roles: dict[NodeId, NodeRole] = {}
    for y in range(height):
        for x in range(width):
            node = NodeId(x, y)
            if x in (0, width - 1) and 0 < y < height - 1:
                roles[node] = NodeRole.MC
            elif (x + y) % 2 == 0:
                roles[node] = NodeRole.CPU
            else:
                roles[node] = NodeRole.GPU
    return roles


def _parse_role_grid(width: int, height: int, grid: str) -> dict[NodeId, NodeRole]:
    rows = [r.strip() for r in grid.replace("\n", "/").split("/") if r.strip()]
    if len(rows) != height:
        raise ValueError(f"placement grid has {len(rows)} rows, expected {height}")
    roles: dict[NodeId, NodeRole] = {}
    for y, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(
                f"placement grid row {y} has {len(row)} cells, expected {width}"
            )
        for x, ch in enumerate(row.upper()):
            if ch not in _ROLE_CHARS:
                raise ValueError(f"unknown role character {ch!r} in placement grid")
            roles[NodeId(x, y)] = _ROLE_CHARS[ch]
    return roles


def build_topology(width: int, height: int, placement: str = "default",
                   subnet_count: int = 2) -> Topology:
    """Construct a mesh.

    ``placement`` is either ``"default"`` or an explicit role grid such
    as ``"CGM/GCM"`` (rows north to south, characters C/G/M west to
    east).
    """
    if width < 2 or height < 2:
        raise ValueError(f"mesh must be at least 2x2, got {width}x{height}")
    if subnet_count not in VALID_SUBNET_COUNTS:
        raise ValueError(f"subnet_count must be one of {VALID_SUBNET_COUNTS}, "
                         f"got {subnet_count}")
    if placement == "default":
        roles = _default_roles(width, height)
    else:
        roles = _parse_role_grid(width, height, placement)
    topo = Topology(width, height, subnet_count, roles)
    if not topo.mc_nodes:
        raise ValueError("placement has no memory controller node")
    if not topo.cpu_nodes and not topo.gpu_nodes:
        raise ValueError("placement has no traffic-generating node")
    return topo
