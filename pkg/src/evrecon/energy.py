"""Synaptic-operation counting, spike-rate measurement, and the 45nm
energy model (4.6 pJ per ANN MAC, 0.9 pJ per SNN addition).

Per-layer MAC counts follow k_w * k_h * c_in * h_out * w_out * c_out for
convolutions and f_in * f_out for linear layers; pooling, elementwise and
skip operations are excluded. SNN layers contribute op_ann * rate * E_ADD;
membrane-potential branch layers compute on real values and are billed at
the ANN MAC cost.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import layer_geometry

E_MAC = 4.6e-12  # J per ANN multiply-accumulate
E_ADD = 0.9e-12  # J per SNN addition

# Published reference operating points (180x240 input) usable via the CLI
# --paper-rates switch: op counts, measured rates, and MP-op fractions.
PUBLISHED = {
    "evsnn": {"op_ann": 0.0, "op_snn": 16.12e9, "rate": 0.264, "mp_fraction": 0.0},
    "pa-evsnn": {"op_ann": 1.49e9, "op_snn": 16.35e9, "rate": 0.251, "mp_fraction": 0.084},
    "e2vid-lstm": {"op_ann": 20.07e9, "op_snn": 0.0, "rate": 0.0, "mp_fraction": 0.0},
    "e2vid-gru": {"op_ann": 17.63e9, "op_snn": 0.0, "rate": 0.0, "mp_fraction": 0.0},
}


@dataclass
class LayerOpCount:
    layer: str
    op_ann: int
    is_snn: bool
    is_mp: bool


@dataclass
class SpikeStats:
    per_layer: dict  # layer id -> firing rate in [0, 1]
    overall_neuron_weighted: float
    overall_op_weighted: float


@dataclass
class EnergyReport:
    per_layer: dict  # layer id -> joules
    total: float
    total_ann_equivalent: float
    ratio_vs_ann: float
    warnings: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "per_layer_joules": self.per_layer,
            "total_joules": self.total,
            "total_ann_equivalent_joules": self.total_ann_equivalent,
            "ratio_vs_ann": self.ratio_vs_ann,
            "warnings": self.warnings,
        }, indent=2)


def count_ann_ops(spec, height=None, width=None):
    """MAC-equivalent count per weighted layer of a network spec."""
    if height is not None or width is not None:
        from dataclasses import replace
        spec = replace(spec, height=height or spec.height, width=width or spec.width)
    counts = []
    for layer in layer_geometry(spec):
        k = layer["kernel"]
        if layer["op"] == "conv":
            ops = k * k * layer["cin"] * layer["h_out"] * layer["w_out"] * layer["cout"]
        elif layer["op"] == "dwconv":
            ops = k * k * layer["h_out"] * layer["w_out"] * layer["cout"]
        else:  # linear
            ops = layer["cin"] * layer["cout"]
        counts.append(LayerOpCount(layer=layer["name"], op_ann=int(ops),
                                   is_snn=layer["snn"], is_mp=layer["mp"]))
    return counts


def measure_spike_rates(net, bin_sequences, op_counts=None):
    """Run sequences through `net` and average each layer's firing rate.

    `bin_sequences` is an iterable of bin lists (each a full sequence; the
    state is reset between sequences). Rates are spikes / elements pooled
    over all steps and sequences.
    """
    ones = {}
    elems = {}
    for bins in bin_sequences:
        monitors = []
        net.forward_sequence(bins, monitor_list=monitors)
        for monitor in monitors:
            for lid, spikes in monitor.items():
                ones[lid] = ones.get(lid, 0.0) + float(spikes.sum())
                elems[lid] = elems.get(lid, 0) + spikes.size
    per_layer = {lid: (ones[lid] / elems[lid] if elems[lid] else 0.0)
                 for lid in ones}
    total_ones = sum(ones.values())
    total_elems = sum(elems.values())
    neuron_weighted = total_ones / total_elems if total_elems else 0.0

    if op_counts is None:
        op_counts = count_ann_ops(net.spec)
    ops = {c.layer: c.op_ann for c in op_counts}
    weighted = [(per_layer[lid], ops[lid]) for lid in per_layer if lid in ops]
    denom = sum(w for _, w in weighted)
    op_weighted = (sum(r * w for r, w in weighted) / denom) if denom else 0.0
    return SpikeStats(per_layer=per_layer,
                      overall_neuron_weighted=neuron_weighted,
                      overall_op_weighted=op_weighted)


def estimate_energy(op_counts, spike_stats=None, default_rate=0.0,
                    empty_input_rate=None):
    """Energy per layer and in total.

    SNN layers: op_ann * rate * E_ADD. ANN/MP layers: op_ann * E_MAC.
    `spike_stats` may be a SpikeStats or a plain {layer: rate} dict;
    missing layers fall back to `default_rate`.
    """
    rates = {}
    if spike_stats is not None:
        rates = spike_stats.per_layer if isinstance(spike_stats, SpikeStats) else dict(spike_stats)
    per_layer = {}
    total_ann = 0.0
    for c in op_counts:
        total_ann += c.op_ann * E_MAC
        if c.is_snn and not c.is_mp:
            rate = rates.get(c.layer, default_rate)
            per_layer[c.layer] = c.op_ann * rate * E_ADD
        else:
            per_layer[c.layer] = c.op_ann * E_MAC
    total = sum(per_layer.values())
    warnings = []
    if empty_input_rate is not None and empty_input_rate > 0:
        warnings.append(
            f"spike rate {empty_input_rate:.4f} > 0 with empty input: "
            "unfolded batch-norm bias keeps neurons firing, inflating energy")
    return EnergyReport(per_layer=per_layer, total=total,
                        total_ann_equivalent=total_ann,
                        ratio_vs_ann=(total_ann / total if total > 0 else float("inf")),
                        warnings=warnings)


def energy_from_totals(op_ann, op_snn, rate):
    """Headline energy: #OP_ann * 4.6pJ + #OP_snn * rate * 0.9pJ."""
    return op_ann * E_MAC + op_snn * rate * E_ADD


def ann_snn_ratio(a, b, c):
    """ANN/SNN energy ratio from normalized op counts.

    a: normalized ANN ops (convention 1), b: spike rate of the SNN part,
    c: fraction of ops in membrane-potential (ANN-cost) layers.
    """
    if not (0.0 <= b <= 1.0 and 0.0 <= c <= 1.0):
        raise ConfigError("rate and MP fraction must lie in [0, 1]")
    return (a * 4.6) / (c * 4.6 + (1.0 - c) * b * 0.9)


def format_report(op_counts, report, spike_stats=None):
    """Aligned-column text table of per-layer ops, rates, and energy."""
    rates = {}
    if spike_stats is not None:
        rates = spike_stats.per_layer if isinstance(spike_stats, SpikeStats) else dict(spike_stats)
    lines = [f"{'layer':<18}{'type':<6}{'op_ann':>14}{'rate':>8}{'energy (J)':>14}"]
    for c in op_counts:
        kind = "MP" if c.is_mp else ("SNN" if c.is_snn else "ANN")
        rate = rates.get(c.layer)
        rate_s = f"{rate:.4f}" if rate is not None else "-"
        lines.append(f"{c.layer:<18}{kind:<6}{c.op_ann:>14,}{rate_s:>8}"
                     f"{report.per_layer.get(c.layer, 0.0):>14.3e}")
    lines.append(f"{'total':<18}{'':<6}{sum(c.op_ann for c in op_counts):>14,}"
                 f"{'':>8}{report.total:>14.3e}")
    lines.append(f"ANN-equivalent total: {report.total_ann_equivalent:.3e} J "
                 f"(ratio {report.ratio_vs_ann:.2f}x)")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines)
