"""Two-branch embedding network.

Each view (frontal, profile) runs through its own stack of downsampling
conv blocks interleaved with residual blocks; the final feature maps are
concatenated along channels and collapsed by a convolution whose kernel spans
the whole map, yielding one unit-norm embedding per input pair. A single-view
variant keeps one branch only.
"""

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .ops import (add, concat_channels, conv2d, instance_norm2d, l2_normalize,
                  leaky_relu, reshape)
from .tensor import Tensor

LRELU_SLOPE = 0.2
EMBED_DIM = 128


class BranchConfig:
    """Shape plan for one branch: stage widths, depth, and input size."""

    def __init__(self, input_size, widths, res_per_stage=1, embed_dim=EMBED_DIM,
                 in_channels=3):
        widths = tuple(int(w) for w in widths)
        if not widths or any(w < 1 for w in widths):
            raise ConfigError("stage widths must be positive, got %r" % (widths,))
        if embed_dim < 1:
            raise ConfigError("embedding dim must be >= 1, got %d" % embed_dim)
        if res_per_stage < 0:
            raise ConfigError("res_per_stage must be >= 0, got %d" % res_per_stage)
        if input_size % (2 ** len(widths)) != 0:
            raise ConfigError(
                "input size %d not divisible by 2^%d (one halving per stage)"
                % (input_size, len(widths)))
        self.input_size = int(input_size)
        self.widths = widths
        self.res_per_stage = int(res_per_stage)
        self.embed_dim = int(embed_dim)
        self.in_channels = int(in_channels)

    @property
    def final_map_size(self):
        return self.input_size // (2 ** len(self.widths))

    def __repr__(self):
        return "BranchConfig(input_size=%d, widths=%r, res_per_stage=%d, embed_dim=%d)" % (
            self.input_size, self.widths, self.res_per_stage, self.embed_dim)


# architecture presets; "desk" is sized so a full synthetic-benchmark training
# run stays inside a laptop-core time budget, "paper" is the 224-pixel scale
PRESETS = {
    "desk": dict(input_size=32, widths=(8, 16, 32), res_per_stage=1),
    "paper": dict(input_size=224, widths=(32, 64, 128, 256), res_per_stage=1),
}


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError("unknown architecture preset %r (have: %s)"
                          % (name, ", ".join(sorted(PRESETS))))
    return BranchConfig(**PRESETS[name])


class ConvBlockParams:
    """3x3 stride-2 conv + instance norm + LReLU; halves the resolution."""

    def __init__(self, w, b, gamma, beta):
        self.w, self.b, self.gamma, self.beta = w, b, gamma, beta

    def named(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b,
                prefix + ".gamma": self.gamma, prefix + ".beta": self.beta}


class ResBlockParams:
    """Two 3x3 stride-1 convs with instance norm and an identity skip."""

    def __init__(self, w1, b1, g1, be1, w2, b2, g2, be2):
        self.w1, self.b1, self.g1, self.be1 = w1, b1, g1, be1
        self.w2, self.b2, self.g2, self.be2 = w2, b2, g2, be2

    def named(self, prefix):
        return {prefix + ".conv1.w": self.w1, prefix + ".conv1.b": self.b1,
                prefix + ".norm1.gamma": self.g1, prefix + ".norm1.beta": self.be1,
                prefix + ".conv2.w": self.w2, prefix + ".conv2.b": self.b2,
                prefix + ".norm2.gamma": self.g2, prefix + ".norm2.beta": self.be2}


class Branch:
    def __init__(self, stages):
        self.stages = stages  # list of (ConvBlockParams, [ResBlockParams, ...])

    def named(self, prefix):
        out = {}
        for i, (cb, rbs) in enumerate(self.stages):
            out.update(cb.named("%s.stage%d.cb" % (prefix, i)))
            for j, rb in enumerate(rbs):
                out.update(rb.named("%s.stage%d.rb%d" % (prefix, i, j)))
        return out


class MultiViewNet:
    """Branch parameters per view plus the fusion head.

    ``views`` is ("frontal", "profile") for the two-view network and a single
    name for the ablation variant. Branches never share tensors.
    """

    def __init__(self, config, branches, head_w, head_b):
        self.config = config
        self.branches = branches  # dict view name -> Branch
        self.head_w = head_w
        self.head_b = head_b

    @property
    def views(self):
        return tuple(self.branches)

    def params(self):
        out = {}
        for view in self.branches:
            out.update(self.branches[view].named(view))
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def param_count(self):
        return sum(p.size for p in self.params().values())


def _uniform_fan_in(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32),
                  requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)


def _init_conv(rng, out_c, in_c, k):
    w = _uniform_fan_in(rng, (out_c, in_c, k, k), in_c * k * k)
    return w, _zeros((out_c,))


def _init_branch(rng, config):
    stages = []
    in_c = config.in_channels
    for width in config.widths:
        w, b = _init_conv(rng, width, in_c, 3)
        cb = ConvBlockParams(w, b, _ones((width,)), _zeros((width,)))
        rbs = []
        for _ in range(config.res_per_stage):
            w1, b1 = _init_conv(rng, width, width, 3)
            w2, b2 = _init_conv(rng, width, width, 3)
            rbs.append(ResBlockParams(w1, b1, _ones((width,)), _zeros((width,)),
                                      w2, b2, _ones((width,)), _zeros((width,))))
        stages.append((cb, rbs))
        in_c = width
    return Branch(stages)


def _init_net(config, seed, views):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    branches = {view: _init_branch(rng, config) for view in views}
    s = config.final_map_size
    head_in = config.widths[-1] * len(views)
    head_w, head_b = _init_conv(rng, config.embed_dim, head_in, s)
    return MultiViewNet(config, branches, head_w, head_b)


def init_multiview_net(config, seed):
    """Fresh two-branch network; deterministic parameters for a given seed."""
    return _init_net(config, seed, ("frontal", "profile"))


def init_singleview_net(config, seed):
    """One-branch ablation variant sharing the same block design."""
    return _init_net(config, seed, ("frontal",))


# ---------------------------------------------------------------------------
# forward passes

def conv_block_forward(x, p):
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ContractError(
            "conv block needs even spatial dims to halve exactly, got %s" % (x.shape,))
    h = conv2d(x, p.w, p.b, stride=2, padding=1)
    h = instance_norm2d(h, p.gamma, p.beta)
    return leaky_relu(h, LRELU_SLOPE)


def res_block_forward(x, p):
    if x.shape[1] != p.w1.shape[1]:
        raise DimensionError("res block", x.shape, p.w1.shape)
    h = conv2d(x, p.w1, p.b1, stride=1, padding=1)
    h = instance_norm2d(h, p.g1, p.be1)
    h = leaky_relu(h, LRELU_SLOPE)
    h = conv2d(h, p.w2, p.b2, stride=1, padding=1)
    h = instance_norm2d(h, p.g2, p.be2)
    return leaky_relu(add(h, x), LRELU_SLOPE)


def branch_forward(x, branch):
    for cb, rbs in branch.stages:
        x = conv_block_forward(x, cb)
        for rb in rbs:
            x = res_block_forward(x, rb)
    return x


def _check_images(net, *images):
    s = net.config.input_size
    c = net.config.in_channels
    for img in images:
        if img.ndim != 4 or img.shape[1] != c or img.shape[2] != s or img.shape[3] != s:
            raise DimensionError("embed input", img.shape, ("N", c, s, s))


def _head(net, fused):
    h = conv2d(fused, net.head_w, net.head_b)  # kernel spans the full map
    h = reshape(h, (fused.shape[0], net.config.embed_dim))
    return l2_normalize(h)


def embed_pair(frontal, profile, net):
    """Embed frontal+profile image batches into unit-norm rows (N x 128)."""
    if net.views != ("frontal", "profile"):
        raise ContractError("embed_pair needs a two-view network, got views %r"
                            % (net.views,))
    _check_images(net, frontal, profile)
    if frontal.shape[0] != profile.shape[0]:
        raise DimensionError("embed_pair batch", frontal.shape, profile.shape)
    fmap = branch_forward(frontal, net.branches["frontal"])
    pmap = branch_forward(profile, net.branches["profile"])
    return _head(net, concat_channels(fmap, pmap))


def embed_single(image, net):
    """Embed an image batch through a one-branch network (N x 128)."""
    if len(net.views) != 1:
        raise ContractError("embed_single needs a one-view network, got views %r"
                            % (net.views,))
    _check_images(net, image)
    fmap = branch_forward(image, net.branches[net.views[0]])
    return _head(net, fmap)
