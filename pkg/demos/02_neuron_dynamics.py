#!/usr/bin/env python3
"""Demo 2: membrane-potential traces of the neuron zoo.

Drives each neuron model with the same input current and prints its
potential trace: LIF (leak + spike + hard reset), IF (no leak), MP_LIF
(leaky average, never spikes), and the adaptive-tau AMP neuron whose
time constant is recomputed every step from incoming spike statistics.
"""

import numpy as np

from evrecon.autodiff import Tensor
from evrecon.neurons import (AmpBlockParams, NeuronConfig, amp_compute_tau,
                             if_step, lif_step, mp_step)

STEPS = 12
DRIVE = [0.6] * 6 + [0.0] * 6  # constant current, then silence


def trace(label, values, spikes=None):
    bars = "".join("|" if spikes and spikes[i] else " " for i in range(STEPS))
    vals = " ".join(f"{v:5.2f}" for v in values)
    print(f"{label:8s} {vals}")
    if spikes:
        print(f"{'spikes':8s} " + "     ".join(bars) )


print(f"input current: {DRIVE}\n")

for kind in ("LIF", "IF"):
    cfg = NeuronConfig(kind=kind, v_th=1.0, tau=2.0)
    v = Tensor(np.array(0.0))
    vs, ss = [], []
    for x in DRIVE:
        step = lif_step if kind == "LIF" else if_step
        s, v = step(v, Tensor(np.array(x)), cfg)
        vs.append(v.item())
        ss.append(int(s.item()))
    trace(kind, vs, ss)
    print()

# The MP neuron is the non-spiking counterpart: an exponential moving
# average of its input that simply relaxes once the drive stops.
v = Tensor(np.array(0.0))
vs = []
for x in DRIVE:
    _, v = mp_step(v, Tensor(np.array(x)), 2.0)
    vs.append(v.item())
trace("MP_LIF", vs)

# AMP: tau is a function of the spike tensor feeding the layer. Busy
# input -> different tau than sparse input, per channel and per sample.
print("\nadaptive tau from spike statistics (channels=2):")
params = AmpBlockParams.create(channels=2, rng=np.random.default_rng(3))
for rate in (0.1, 0.5, 0.9):
    spikes = (np.random.default_rng(0).random((1, 2, 8, 8)) < rate).astype(float)
    tau = amp_compute_tau(Tensor(spikes), params).data
    print(f"  input firing rate {rate:.1f} -> tau per channel "
          f"{np.round(tau[0], 3)}  (always > 1)")
