"""Walk through one identification by hand on the bundled desk feeder.

Simulate a month of hourly voltages, zone the network, add 1 % metering
noise and compare the naive single-meter estimate with consensus.
"""

import numpy as np

from phaseid.consensus import consensus_weighted, estimate_naive
from phaseid.correlation import correlation_tensor
from phaseid.evaluation import accuracy, confidence_factor, zone_rng, noisy_measurements
from phaseid.feeder import load_bundled_feeder
from phaseid.study import StudyContext, make_zoning, prepare_network, zone_tasks

net = prepare_network(load_bundled_feeder())
zoning, curve = make_zoning(net, clusters=3)
print("silhouette curve:", {c: round(s, 3) for c, s in curve.items()})
for c in range(1, zoning.n_zones + 1):
    print(f"zone {c}: {zoning.counts(c)} references {zoning.references[c]}")

ctx = StudyContext(net, zoning)
scen = ctx.scenario()
print(f"|V| range {scen.panel.magnitudes.min():.3f} .. {scen.panel.magnitudes.max():.3f} pu")

for task in zone_tasks(scen, zoning, ctx.betas(scen), naive_reference=net.references[0]):
    cons, refs, naive = noisy_measurements(task, 0.01, 0.01, zone_rng(33, task.zone, 0))
    t = correlation_tensor(refs, cons, "J1", ref_ids=task.reference_ids)
    _, s3 = consensus_weighted(t, "S3")
    s0 = estimate_naive(correlation_tensor([naive], cons, "J1").values[0])
    print(f"zone {task.zone}: S3-J1 {accuracy(s3, task.truth):5.1f} % "
          f"(F={confidence_factor(s3.weights, task.truth):+.3f}), "
          f"S0-J1 from the busbar {accuracy(s0, task.truth):5.1f} %")
