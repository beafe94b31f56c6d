"""How accuracy changes when a zone is identified with meters from neighbouring zones.

On this small feeder the trend is not monotone beyond the first ring; see the
notes printed at the end.
"""

from phaseid.feeder import load_bundled_feeder
from phaseid.study import StudyContext, make_zoning, prepare_network, run_cs2

net = prepare_network(load_bundled_feeder())
zoning, _ = make_zoning(net, clusters=3)
ctx = StudyContext(net, zoning, Q=50)
rep = run_cs2(ctx, tau=0.01, max_level=2, mode="single")
print("zone level   A      F       D      references")
for r in sorted(rep["rows"], key=lambda r: (r["zone"], r["level"])):
    print(f"{r['zone']:>4} {r['level']:>5} {r['A']:6.1f} {r['F']:+.3f} {r['D']:.4f}  {r['references']}")
print("zone rings:", rep["levels"])
print("Only three zones exist, so L1 and L2 of a feeder zone both hold whole feeders;")
print("the drop from L0 to L1 is the robust part of the proximity effect.")
