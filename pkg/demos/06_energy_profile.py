#!/usr/bin/env python3
"""Demo 6: synaptic-operation counting and the 45nm energy model.

An ANN pays 4.6 pJ per multiply-accumulate on every input. A spiking
layer only pays 0.9 pJ per addition, and only when a spike arrives, so
its cost scales with the measured firing rate. This demo counts the
MAC-equivalent ops of a network layer by layer, measures real spike
rates on a synthetic sequence, and prices the whole forward pass.
"""

import numpy as np

from evrecon.energy import (PUBLISHED, ann_snn_ratio, count_ann_ops,
                            energy_from_totals, estimate_energy,
                            format_report, measure_spike_rates)
from evrecon.model import Network, NetworkSpec
from evrecon.synthetic import random_scene
from evrecon.training import scene_to_bins

spec = NetworkSpec(height=32, width=32, n_channels=8, n_encoders=2,
                   n_residual=1)
net = Network(spec, seed=0)
net.train_mode(True)  # batch-stat normalization keeps untrained nets active

counts = count_ann_ops(spec)
scene = random_scene(32, 32, steps=9, rng=np.random.default_rng(1), contrast=0.1)
bins, _, _ = scene_to_bins(scene)
stats = measure_spike_rates(net, [bins], op_counts=counts)
report = estimate_energy(counts, stats)

print(format_report(counts, report, stats))
print(f"\noverall firing rate: {stats.overall_neuron_weighted:.3f} "
      f"(neuron-weighted) / {stats.overall_op_weighted:.3f} (op-weighted)")

# Published operating points at 180x240, priced with the same model.
print("\npublished full-scale operating points:")
ref = energy_from_totals(PUBLISHED["e2vid-lstm"]["op_ann"], 0, 0)
for name, p in PUBLISHED.items():
    joules = energy_from_totals(p["op_ann"], p["op_snn"], p["rate"])
    line = f"  {name:12s} {joules * 1e3:7.3f} mJ/frame  (normalized {joules / ref:.4f})"
    if p["op_snn"] > 0:
        line += f"  ANN/SNN ratio {ann_snn_ratio(1.0, p['rate'], p['mp_fraction']):.2f}x"
    print(line)
