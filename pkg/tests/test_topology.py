import pytest

from kfnoc.topology import (NodeId, NodeRole, Port, Topology, build_topology,
                            route_path, xy_route)


def test_default_6x6_role_counts():
    topo = build_topology(6, 6)
    assert len(topo.cpu_nodes) == 14
    assert len(topo.gpu_nodes) == 14
    assert len(topo.mc_nodes) == 8


def test_default_6x6_mc_positions():
    topo = build_topology(6, 6)
    expected = {NodeId(x, y) for x in (0, 5) for y in range(1, 5)}
    assert set(topo.mc_nodes) == expected


def test_default_checkerboard():
    topo = build_topology(6, 6)
    for node in topo.cpu_nodes:
        assert (node.x + node.y) % 2 == 0
    for node in topo.gpu_nodes:
        assert (node.x + node.y) % 2 == 1


def test_xy_route_at_destination_ejects():
    assert xy_route(NodeId(2, 3), NodeId(2, 3)) == Port.EJECT


def test_xy_route_reduces_x_first():
    assert xy_route(NodeId(0, 0), NodeId(3, 0)) == Port.EAST
    # X offsets win even when Y also differs
    assert xy_route(NodeId(0, 0), NodeId(3, 2)) == Port.EAST
    assert xy_route(NodeId(4, 1), NodeId(2, 3)) == Port.WEST


def test_xy_route_then_y():
    assert xy_route(NodeId(1, 4), NodeId(1, 1)) == Port.NORTH
    assert xy_route(NodeId(1, 1), NodeId(1, 4)) == Port.SOUTH


@pytest.mark.parametrize("src,dest", [
    (NodeId(0, 0), NodeId(4, 4)),
    (NodeId(3, 1), NodeId(0, 2)),
    (NodeId(2, 2), NodeId(2, 2)),
])
def test_route_path_is_minimal(src, dest):
    path = route_path(src, dest)
    assert path[0] == src and path[-1] == dest
    assert len(path) == 1 + abs(src.x - dest.x) + abs(src.y - dest.y)


def test_route_path_x_complete_before_y():
    for src in build_topology(5, 5).nodes():
        for dest in build_topology(5, 5).nodes():
            turned = False
            for a, b in zip(route_path(src, dest), route_path(src, dest)[1:]):
                if a.y != b.y:
                    turned = True
                elif turned:
                    pytest.fail(f"X move after Y move on {src}->{dest}")


def _channel_dependency_graph(topo: Topology):
    """Edges between channels that some XY route uses consecutively."""
    edges = set()
    for src in topo.nodes():
        for dest in topo.nodes():
            path = route_path(src, dest)
            hops = list(zip(path, path[1:]))
            for (a, b), (b2, c) in zip(hops, hops[1:]):
                assert b == b2
                edges.add(((a, b), (b, c)))
    return edges


@pytest.mark.parametrize("width,height", [(3, 3), (4, 4), (5, 2)])
def test_xy_channel_dependencies_acyclic(width, height):
    if width >= 3 and height >= 3:
        topo = build_topology(width, height)
    else:
        grid = "/".join("".join("M" if (x + y) % 3 == 0 else
                                ("C" if (x + y) % 2 == 0 else "G")
                                for x in range(width)) for y in range(height))
        topo = build_topology(width, height, placement=grid)
    edges = _channel_dependency_graph(topo)
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {}

    def dfs(u):
        color[u] = GREY
        for w in adj.get(u, ()):
            if color.get(w, WHITE) == GREY:
                pytest.fail(f"cyclic channel dependency through {w}")
            if color.get(w, WHITE) == WHITE:
                dfs(w)
        color[u] = BLACK

    for u in list(adj):
        if color.get(u, WHITE) == WHITE:
            dfs(u)


def test_node_index_roundtrip():
    topo = build_topology(4, 6)
    for i, node in enumerate(topo.nodes()):
        assert topo.node_index(node) == i
        assert topo.node_at(i) == node


def test_neighbor_edges():
    topo = build_topology(4, 4)
    assert topo.neighbor(NodeId(0, 0), Port.WEST) is None
    assert topo.neighbor(NodeId(0, 0), Port.NORTH) is None
    assert topo.neighbor(NodeId(0, 0), Port.EAST) == NodeId(1, 0)
    assert topo.neighbor(NodeId(0, 0), Port.SOUTH) == NodeId(0, 1)
    assert topo.neighbor(NodeId(3, 3), Port.EAST) is None
    assert set(topo.link_ports(NodeId(1, 1))) == {Port.EAST, Port.WEST,
                                                  Port.NORTH, Port.SOUTH}


def test_port_opposites():
    assert Port.EAST.opposite == Port.WEST
    assert Port.NORTH.opposite == Port.SOUTH
    assert Port.SOUTH.opposite == Port.NORTH


def test_explicit_grid_placement():
    topo = build_topology(3, 2, placement="CGM/GCM")
    assert topo.role_of(NodeId(0, 0)) == NodeRole.CPU
    assert topo.role_of(NodeId(1, 0)) == NodeRole.GPU
    assert topo.role_of(NodeId(2, 0)) == NodeRole.MC
    assert topo.role_of(NodeId(1, 1)) == NodeRole.CPU
    assert len(topo.mc_nodes) == 2


@pytest.mark.parametrize("kwargs,match", [
    (dict(width=1, height=6), "at least 2x2"),
    (dict(width=6, height=6, subnet_count=3), "subnet_count"),
    (dict(width=2, height=2), "default placement"),
    (dict(width=3, height=2, placement="CGC/GCG"), "no memory controller"),
    (dict(width=3, height=2, placement="MMM/MMM"), "no traffic-generating"),
    (dict(width=3, height=2, placement="CGM"), "rows"),
    (dict(width=3, height=2, placement="CG/GM"), "cells"),
    (dict(width=3, height=2, placement="CXM/GCM"), "role character"),
])
def test_build_topology_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        build_topology(**kwargs)
