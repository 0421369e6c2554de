"""U-shaped spiking reconstruction networks.

The fully spiking variant runs head -> encoders -> residual blocks ->
decoders (with spike skip connections) -> a conv + MP_LIF prediction
layer whose membrane potential is the output image. The potential-assisted
variant adds an MP (or adaptive-tau) neuron to every encoder and decoder
stage; encoder potentials ride the skip connections and decoder potentials
ride the backbone into the next stage.
"""

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError
from .neurons import NeuronConfig, SpikingLayer, MPLayer

SKIP_KINDS = ("ADD", "OR", "IAND", "CONCAT")


@dataclass
class NetworkSpec:
    height: int
    width: int
    n_channels: int = 32
    n_encoders: int = 3
    n_residual: int = 1
    skip_kind: str = "CONCAT"
    neuron_kind: str = "LIF"
    potential_assisted: bool = False
    amp_enabled: bool = False
    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    head_kernel: int = 5
    encoder_kernel: int = 5
    residual_kernel: int = 3
    decoder_kernel: int = 5
    prediction_kernel: int = 3

    def __post_init__(self):
        if self.skip_kind not in SKIP_KINDS:
            raise ConfigError(f"unknown skip kind {self.skip_kind!r}")
        if self.neuron_kind not in ("IF", "LIF", "PLIF"):
            raise ConfigError(f"backbone neuron must be IF/LIF/PLIF, got {self.neuron_kind!r}")
        if self.n_channels < 1 or self.n_encoders < 1 or self.n_residual < 0:
            raise ConfigError("n_channels/n_encoders must be >= 1, n_residual >= 0")
        if self.amp_enabled and not self.potential_assisted:
            raise ConfigError("amp_enabled requires potential_assisted")
        if self.height < 2 ** self.n_encoders or self.width < 2 ** self.n_encoders:
            raise ConfigError("input too small for the encoder stride schedule")

    @property
    def n_decoders(self):
        return self.n_encoders

    def padded_size(self):
        """Spatial size rounded up to a multiple of the total stride."""
        m = 2 ** self.n_encoders
        return (-(-self.height // m) * m, -(-self.width // m) * m)

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def skip_connect(kind, a, b):
    """Merge encoder spikes `a` into decoder spikes `b`.

    ADD: a+b (values up to 2, non-spike); OR: max; IAND: (1-a)*b;
    CONCAT: channel concatenation with `a` first.
    """
    if kind not in SKIP_KINDS:
        raise ConfigError(f"unknown skip kind {kind!r}")
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"skip operand shapes differ: {a.shape} vs {b.shape}")
    if kind == "ADD":
        return a + b
    if kind == "OR":
        return ad.maximum(a, b)
    if kind == "IAND":
        return (1.0 - a) * b
    return ad.concat([a, b], axis=1)


def layer_geometry(spec):
    """Yield one descriptor per weighted layer, in forward order.

    Each descriptor: name, op ('conv' | 'dwconv' | 'linear'), kernel,
    stride, cin, cout, h_out, w_out, upsample, snn (operates on binary
    spikes), mp (belongs to a membrane-potential branch).
    """
    hp, wp = spec.padded_size()
    nc = spec.n_channels

    def conv(name, k, stride, cin, cout, h, w, upsample=False, snn=True, mp=False):
        return {"name": name, "op": "conv", "kernel": k, "stride": stride,
                "cin": cin, "cout": cout, "h_out": h, "w_out": w,
                "upsample": upsample, "snn": snn, "mp": mp}

    layers = [conv("head", spec.head_kernel, 1, 1, nc, hp, wp)]
    h, w = hp, wp
    for i in range(1, spec.n_encoders + 1):
        h, w = h // 2, w // 2
        cin, cout = nc * 2 ** (i - 1), nc * 2 ** i
        layers.append(conv(f"down{i}", spec.encoder_kernel, 2, cin, cout, h, w))
        if spec.potential_assisted:
            layers.extend(_amp_geometry(f"down{i}", cout, h, w, spec))
    c_mid = nc * 2 ** spec.n_encoders
    for r in range(1, spec.n_residual + 1):
        layers.append(conv(f"res{r}-1", spec.residual_kernel, 1, c_mid, c_mid, h, w))
        layers.append(conv(f"res{r}-2", spec.residual_kernel, 1, c_mid, c_mid, h, w))
    for j in range(1, spec.n_decoders + 1):
        cin = nc * 2 ** (spec.n_encoders - j + 1)
        cout = nc * 2 ** (spec.n_encoders - j)
        if spec.skip_kind == "CONCAT":
            cin *= 2
        h, w = h * 2, w * 2
        layers.append(conv(f"up{j}", spec.decoder_kernel, 1, cin, cout, h, w,
                           upsample=True))
        if spec.potential_assisted:
            layers.extend(_amp_geometry(f"up{j}", cout, h, w, spec))
    layers.append(conv("pred", spec.prediction_kernel, 1, nc, 1, hp, wp))
    return layers


def _amp_geometry(stage, channels, h, w, spec):
    if not spec.amp_enabled:
        return []
    return [
        {"name": f"{stage}-amp-conv", "op": "dwconv", "kernel": 3, "stride": 1,
         "cin": channels, "cout": channels, "h_out": h, "w_out": w,
         "upsample": False, "snn": False, "mp": True},
        {"name": f"{stage}-amp-linear", "op": "linear", "kernel": 1, "stride": 1,
         "cin": 2 * channels, "cout": channels, "h_out": 1, "w_out": 1,
         "upsample": False, "snn": False, "mp": True},
    ]


class ConvStage:
    """Conv (optionally preceded by nearest 2x upsample) + batch norm."""

    def __init__(self, name, cin, cout, k, stride, rng, upsample=False, bn=True):
        self.name = name
        self.stride = stride
        self.padding = k // 2
        self.upsample = upsample
        scale = 1.0 / np.sqrt(cin * k * k)
        self.w = Tensor(rng.uniform(-scale, scale, (cout, cin, k, k)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(cout), requires_grad=True)
        self.has_bn = bn
        if bn:
            self.gamma = Tensor(np.ones(cout), requires_grad=True)
            self.beta = Tensor(np.zeros(cout), requires_grad=True)
            self.running_mean = np.zeros(cout)
            self.running_var = np.ones(cout)

    def forward(self, x, training):
        if self.upsample:
            x = ad.upsample_nearest2x(x)
        u = ad.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)
        if self.has_bn:
            u = ad.batch_norm2d(u, self.gamma, self.beta,
                                self.running_mean, self.running_var, training)
        return u

    def parameters(self):
        params = [self.w, self.b]
        if self.has_bn:
            params += [self.gamma, self.beta]
        return params

    def named_tensors(self):
        out = {f"{self.name}.w": self.w.data, f"{self.name}.b": self.b.data}
        if self.has_bn:
            out[f"{self.name}.gamma"] = self.gamma.data
            out[f"{self.name}.beta"] = self.beta.data
            out[f"{self.name}.running_mean"] = self.running_mean
            out[f"{self.name}.running_var"] = self.running_var
        return out

    def load_tensors(self, tensors):
        self.w.data[:] = tensors[f"{self.name}.w"]
        self.b.data[:] = tensors[f"{self.name}.b"]
        if self.has_bn and f"{self.name}.gamma" in tensors:
            self.gamma.data[:] = tensors[f"{self.name}.gamma"]
            self.beta.data[:] = tensors[f"{self.name}.beta"]
            self.running_mean[:] = tensors[f"{self.name}.running_mean"]
            self.running_var[:] = tensors[f"{self.name}.running_var"]

    def fold_bn(self, eps=1e-5):
        """Fold batch-norm statistics into the conv weights and disable it."""
        if not self.has_bn:
            return
        inv = self.gamma.data / np.sqrt(self.running_var + eps)
        self.w.data *= inv[:, None, None, None]
        self.b.data = (self.b.data - self.running_mean) * inv + self.beta.data
        self.has_bn = False


def _neuron_cfg(spec, kind=None):
    return NeuronConfig(kind=kind or spec.neuron_kind, v_th=spec.v_th,
                        v_reset=spec.v_reset, v_rest=spec.v_reset, tau=spec.tau)


class Network:
    """A built reconstruction network with per-layer recurrent state."""

    def __init__(self, spec, seed=0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.training = False
        nc = spec.n_channels
        hp, wp = spec.padded_size()
        self._pad = (hp - spec.height, wp - spec.width)

        mp_kind = "AMP_LIF" if spec.amp_enabled else "MP_LIF"
        self.head = ConvStage("head", 1, nc, spec.head_kernel, 1, rng)
        self.head_neuron = SpikingLayer(_neuron_cfg(spec))

        self.encoders = []
        for i in range(1, spec.n_encoders + 1):
            cin, cout = nc * 2 ** (i - 1), nc * 2 ** i
            stage = ConvStage(f"down{i}", cin, cout, spec.encoder_kernel, 2, rng)
            neuron = SpikingLayer(_neuron_cfg(spec))
            pot = (MPLayer(_neuron_cfg(spec, mp_kind), channels=cout, rng=rng)
                   if spec.potential_assisted else None)
            self.encoders.append((stage, neuron, pot))

        c_mid = nc * 2 ** spec.n_encoders
        self.residuals = []
        for r in range(1, spec.n_residual + 1):
            block = []
            for half in (1, 2):
                stage = ConvStage(f"res{r}-{half}", c_mid, c_mid,
                                  spec.residual_kernel, 1, rng)
                block.append((stage, SpikingLayer(_neuron_cfg(spec))))
            self.residuals.append(block)

        self.decoders = []
        for j in range(1, spec.n_decoders + 1):
            cin = nc * 2 ** (spec.n_encoders - j + 1)
            cout = nc * 2 ** (spec.n_encoders - j)
            if spec.skip_kind == "CONCAT":
                cin *= 2
            stage = ConvStage(f"up{j}", cin, cout, spec.decoder_kernel, 1, rng,
                              upsample=True)
            neuron = SpikingLayer(_neuron_cfg(spec))
            pot = (MPLayer(_neuron_cfg(spec, mp_kind), channels=cout, rng=rng)
                   if spec.potential_assisted else None)
            self.decoders.append((stage, neuron, pot))

        self.pred = ConvStage("pred", nc, 1, spec.prediction_kernel, 1, rng, bn=False)
        self.pred_neuron = MPLayer(NeuronConfig(kind="MP_LIF", tau=2.0))

    # -- bookkeeping ---------------------------------------------------------
    def _conv_stages(self):
        stages = [self.head]
        stages += [s for s, _, _ in self.encoders]
        for block in self.residuals:
            stages += [s for s, _ in block]
        stages += [s for s, _, _ in self.decoders]
        stages.append(self.pred)
        return stages

    def _neuron_layers(self):
        layers = [self.head_neuron]
        for _, neuron, pot in self.encoders:
            layers.append(neuron)
            if pot is not None:
                layers.append(pot)
        for block in self.residuals:
            layers += [n for _, n in block]
        for _, neuron, pot in self.decoders:
            layers.append(neuron)
            if pot is not None:
                layers.append(pot)
        layers.append(self.pred_neuron)
        return layers

    def spiking_layer_ids(self):
        ids = ["head"] + [f"down{i+1}" for i in range(self.spec.n_encoders)]
        for r in range(1, self.spec.n_residual + 1):
            ids += [f"res{r}-1", f"res{r}-2"]
        ids += [f"up{j+1}" for j in range(self.spec.n_decoders)]
        return ids

    def parameters(self):
        params = []
        for stage in self._conv_stages():
            params += stage.parameters()
        for layer in self._neuron_layers():
            params += layer.parameters()
        return params

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def reset_state(self):
        for layer in self._neuron_layers():
            layer.reset_state()

    def detach_state(self):
        for layer in self._neuron_layers():
            layer.detach_state()

    def get_state(self):
        """Membrane potentials keyed by layer id (arrays, detached)."""
        state = {}
        for lid, layer in zip(self._state_ids(), self._neuron_layers()):
            state[lid] = None if layer.state is None else layer.state.data.copy()
        return state

    def set_state(self, state):
        layers = dict(zip(self._state_ids(), self._neuron_layers()))
        if set(state) != set(layers):
            raise ContractError("state keys do not match this network's layers")
        for lid, value in state.items():
            layers[lid].state = None if value is None else Tensor(value.copy())

    def _state_ids(self):
        ids = ["head"]
        for i in range(1, self.spec.n_encoders + 1):
            ids.append(f"down{i}")
            if self.spec.potential_assisted:
                ids.append(f"down{i}-mp")
        for r in range(1, self.spec.n_residual + 1):
            ids += [f"res{r}-1", f"res{r}-2"]
        for j in range(1, self.spec.n_decoders + 1):
            ids.append(f"up{j}")
            if self.spec.potential_assisted:
                ids.append(f"up{j}-mp")
        ids.append("pred")
        return ids

    def train_mode(self, flag=True):
        self.training = flag

    def fold_batchnorm(self):
        for stage in self._conv_stages():
            stage.fold_bn()

    def zero_biases(self):
        for stage in self._conv_stages():
            stage.b.data[:] = 0.0
            if stage.has_bn:
                stage.beta.data[:] = 0.0

    # -- forward -------------------------------------------------------------
    def forward_step(self, bin_plane, monitor=None):
        """Advance one temporal bin; returns the predicted image Tensor.

        `bin_plane` is (H, W), (1, H, W), or (N, 1, H, W). `monitor`, if
        given, is a dict that receives each spiking layer's binary output
        (numpy) keyed by layer id.
        """
        spec = self.spec
        x = bin_plane.data if isinstance(bin_plane, Tensor) else np.asarray(bin_plane, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected a single-channel bin, got shape {x.shape}")
        if x.shape[2] != spec.height or x.shape[3] != spec.width:
            raise ShapeError(f"bin is {x.shape[2]}x{x.shape[3]}, "
                             f"spec wants {spec.height}x{spec.width}")
        ph, pw = self._pad
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)))
        x = Tensor(x)

        def note(lid, spikes):
            if monitor is not None:
                monitor[lid] = spikes.data

        s = self.head_neuron.step(self.head.forward(x, self.training))
        note("head", s)

        enc_spikes, enc_pots = [], []
        for idx, (stage, neuron, pot) in enumerate(self.encoders, start=1):
            u = stage.forward(s, self.training)
            s = neuron.step(u)
            note(f"down{idx}", s)
            enc_spikes.append(s)
            enc_pots.append(pot.step(u, s_input=s) if (pot is not None and pot.amp is not None)
                            else (pot.step(u) if pot is not None else None))

        for r, block in enumerate(self.residuals, start=1):
            s_in = s
            for half, (stage, neuron) in enumerate(block, start=1):
                s = neuron.step(stage.forward(s, self.training))
                note(f"res{r}-{half}", s)
            s = ad.maximum(s_in, s)  # OR-merge keeps the block spike-compatible

        b = s
        b_pot = None
        for j, (stage, neuron, pot) in enumerate(self.decoders, start=1):
            a = enc_spikes[spec.n_encoders - j]
            a_pot = enc_pots[spec.n_encoders - j]
            a_eff = a + a_pot if a_pot is not None else a
            b_eff = b + b_pot if b_pot is not None else b
            fused = skip_connect(spec.skip_kind, a_eff, b_eff)
            u = stage.forward(fused, self.training)
            s = neuron.step(u)
            note(f"up{j}", s)
            b_pot = (pot.step(u, s_input=s) if (pot is not None and pot.amp is not None)
                     else (pot.step(u) if pot is not None else None))
            b = s

        pred_in = b + b_pot if b_pot is not None else b
        image = self.pred_neuron.step(self.pred.forward(pred_in, self.training))
        if ph or pw:
            image = image[:, :, :spec.height, :spec.width]
        return image

    def forward_sequence(self, bins, monitor_list=None):
        """Reset state, fold forward_step over bins, return per-step images.

        Runs without gradient recording; images come back as (H, W) arrays
        (first batch element).
        """
        self.reset_state()
        images = []
        with ad.no_grad():
            for plane in bins:
                monitor = {} if monitor_list is not None else None
                out = self.forward_step(plane, monitor=monitor)
                if monitor_list is not None:
                    monitor_list.append(monitor)
                images.append(out.data[0, 0].copy())
        return images

    # -- serialization -------------------------------------------------------
    def save(self, path):
        tensors = {}
        for stage in self._conv_stages():
            tensors.update(stage.named_tensors())
        for lid, layer in zip(self._state_ids(), self._neuron_layers()):
            for k, t in enumerate(layer.parameters()):
                tensors[f"{lid}.np{k}"] = t.data
        ckpt.save_tensors(path, tensors, meta={"spec": json.loads(self.spec.to_json())})

    @classmethod
    def load(cls, path):
        tensors, meta = ckpt.load_tensors(path)
        if not meta or "spec" not in meta:
            raise ContractError(f"{path}: checkpoint has no embedded network spec")
        net = cls(NetworkSpec(**meta["spec"]))
        for stage in net._conv_stages():
            stage.load_tensors(tensors)
        for lid, layer in zip(net._state_ids(), net._neuron_layers()):
            for k, t in enumerate(layer.parameters()):
                t.data[...] = tensors[f"{lid}.np{k}"]
        return net


def build_network(spec, seed=0):
    """Construct a network from its spec (alias for the constructor)."""
    return Network(spec, seed=seed)
