"""
Closed-form ceilings next to measured peaks
===========================================

The worst-case formulas bound what any execution may transmit at one
instant.  This script prints the formula curves for n=100, b=768,
d=10 ms (both log-rounding modes) and overlays a few measured points.
The same table is available as CSV from `consim bounds`.
"""

from consim import SizeModel, TimingParams, make_topology, run
from consim.bounds import eval_bounds
from consim.flooding import FloodingProtocol
from consim.functions import MaxFunction
from consim.ghs import GhsTokenProtocol
from consim.hybrid import HybridProtocol
from consim.metrics import peak_bandwidth

N, B, D = 100, 768, 0.01
timing = TimingParams(d=D, l=D / 10)

print(f"formula ceilings at n={N}, b={B}, d={D}:")
for mode in ("ceil_log2", "exact_log2"):
    t = eval_bounds(N, B, D, m=10, mode=mode)
    print(f"  [{mode}] flooding {t['flooding_bandwidth_bps']/1e6:9.1f} Mbps"
          f" | averaging {t['average_bandwidth_bps']/1e3:8.1f} kbps"
          f" | tree+token {t['ghs_token_bandwidth_bps']/1e3:7.1f} kbps"
          f" | tunable(m=10) {t['hybrid_bandwidth_bps']/1e6:7.1f} Mbps")

print("\nmeasured peaks on matching worst-case topologies:")
g = make_topology("complete", N, seed=1)
sm = SizeModel.for_network(N, B, pool_size=g.pool_size)
tr = run(FloodingProtocol(), g, list(range(N)), fn=MaxFunction(B),
         timing=timing, size_model=sm)
print(f"  flooding on K100:   {peak_bandwidth(tr)/1e6:9.1f} Mbps")

g = make_topology("star", N, seed=1)
sm = SizeModel.for_network(N, B, pool_size=g.pool_size)
tr = run(GhsTokenProtocol(), g, list(range(N)), fn=MaxFunction(B),
         timing=timing, size_model=sm)
print(f"  tree+token on star: {peak_bandwidth(tr)/1e3:9.1f} kbps")

g = make_topology("cycle", N, seed=1)
sm = SizeModel.for_network(N, B, pool_size=g.pool_size)
tr = run(HybridProtocol(10), g, list(range(N)), fn=MaxFunction(B),
         timing=timing, size_model=sm)
print(f"  tunable m=10 cycle: {peak_bandwidth(tr)/1e6:9.3f} Mbps")
