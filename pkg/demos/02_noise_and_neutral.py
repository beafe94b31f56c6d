"""Accuracy of S3-J1 against metering tolerance, and the cost of ignoring the neutral."""

from phaseid.evaluation import Model
from phaseid.feeder import load_bundled_feeder
from phaseid.study import StudyContext, make_zoning, prepare_network, run_cs3, run_cs4

S3 = Model("J1", "S3")
net = prepare_network(load_bundled_feeder())
zoning, _ = make_zoning(net, clusters=3)
ctx = StudyContext(net, zoning, Q=50)

sweep = run_cs3(ctx, (0.0, 0.01, 0.02, 0.05, 0.10), [S3, Model("J1", "S0")])
print("tau    S3-J1 A / F / D          S0-J1 A")
for tau in (0.0, 0.01, 0.02, 0.05, 0.10):
    a = sweep["overall"][f"S3-J1@{tau:g}"]
    b = sweep["overall"][f"S0-J1@{tau:g}"]
    print(f"{tau:<6g} {a['A']:6.1f} / {a['F']:+.3f} / {a['D']:.4f}    {b['A']:6.1f}")

neutral = run_cs4(ctx, ("eq1", "kron", "drop"), tau=0.05, models=[S3])
for mode in ("eq1", "kron", "drop"):
    print(f"truth simulated with {mode:>4}: S3-J1 {neutral['overall'][f'S3-J1@{mode}']['A']:.1f} %")
print("max |dV| between panels:", {k: round(v, 4) for k, v in neutral["max_abs_dv"].items()})
