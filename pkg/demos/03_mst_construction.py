"""
Distributed minimum spanning tree against a centralized oracle
==============================================================

Fragments merge across their cheapest outgoing edges until one tree spans
the graph.  Edge weights are lexicographic UID pairs, so the minimum
spanning tree is unique and a twenty-line union-find can check the
distributed answer exactly.
"""

from consim import Simulation, TimingParams, kruskal_mst, make_topology
from consim.ghs import GhsMstProtocol, mst_edges, tree_from_automata
from consim.metrics import byte_complexity, message_complexity

g = make_topology("random_connected", 16, {"p": 0.35}, seed=11)
sim = Simulation(GhsMstProtocol(), g, [0] * g.n, fn=None,
                 timing=TimingParams(d=0.01, l=0.001), scheduler="random",
                 seed=11)
trace = sim.run()

distributed = mst_edges(sim.automata)
oracle = kruskal_mst(g)
print(f"graph: {g.n} nodes, {len(g.edges)} edges")
print(f"distributed tree == union-find oracle: {distributed == oracle}")
print(f"tree edges: {sorted(distributed)}")
print(f"cost: {message_complexity(trace)} messages,"
      f" {byte_complexity(trace)} bits")

tree = tree_from_automata(sim.automata)
root = next(u for u, info in tree.items() if info.is_root)
print(f"root (larger endpoint of the final merge): {root}")
depths = {}
for u in tree:
    d, cur = 0, u
    while tree[cur].parent is not None:
        cur = tree[cur].parent
        d += 1
    depths[u] = d
print(f"tree height: {max(depths.values())}")
