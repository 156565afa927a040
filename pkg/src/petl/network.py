"""Network assembly: the 68-point partition, the three network kinds, and size accounting."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .layers import BatchNorm, Conv2D, Dense, GlobalAvgPool, MaxPool2D, ReLU, Sequential, Sigmoid

FEATURES = ("eyebrows", "eyes", "nose", "mouth", "jaw")

# iBUG 68-point layout
PARTITION = {
    "jaw": tuple(range(0, 17)),
    "eyebrows": tuple(range(17, 27)),
    "nose": tuple(range(27, 36)),
    "eyes": tuple(range(36, 48)),
    "mouth": tuple(range(48, 68)),
}

KINDS = ("baseline", "full_transfer", "part")
EXTRACTOR_WIDTHS = (16, 32, 64, 128)
HEAD_WIDTH = 128
INPUT_SIZE = 160
LANDMARK_OUTPUTS = (18, 20, 24, 34, 40, 136)


def partition_indices(feature):
    """Landmark indices (0..67) belonging to one facial feature."""
    try:
        return list(PARTITION[feature])
    except KeyError:
        raise ValueError(f"unknown facial feature {feature!r}; expected one of {FEATURES}") from None


@dataclass(frozen=True)
class NetworkSpec:
    kind: str = "part"
    feature: str | None = None
    num_classes: int = 7
    widths: tuple = EXTRACTOR_WIDTHS
    head_width: int = HEAD_WIDTH
    input_size: int = INPUT_SIZE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.kind == "part":
            partition_indices(self.feature)
        elif self.feature is not None:
            raise ValueError(f"{self.kind} network takes no feature")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.input_size % (2 ** len(self.widths)):
            raise ValueError(f"input size {self.input_size} not divisible by 2^{len(self.widths)}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def landmark_indices(self):
        if self.kind == "part":
            return partition_indices(self.feature)
        if self.kind == "full_transfer":
            return list(range(68))
        return []

    @property
    def z(self):
        """Number of localization outputs (two per landmark), or None for the baseline."""
        return 2 * len(self.landmark_indices) or None

    @property
    def label(self):
        return self.feature if self.kind == "part" else self.kind

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["widths"] = tuple(d.get("widths", EXTRACTOR_WIDTHS))
        return cls(**d)


def _seeds(seed, n):
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)]


def build_feature_extractor(widths=EXTRACTOR_WIDTHS, seed=0, in_channels=3):
    """Conv blocks (conv-BN-relu x2) alternating with 2x2 max pools, then global average pooling."""
    seeds = iter(_seeds(seed, 2 * len(widths)))
    layers = []
    cin = in_channels
    for b, w in enumerate(widths, start=1):
        p = f"extractor.block{b}"
        for i in (1, 2):
            layers += [
                Conv2D(cin, w, next(seeds), name=f"{p}.conv{i}"),
                BatchNorm(w, name=f"{p}.bn{i}"),
                ReLU(f"{p}.relu{i}"),
            ]
            cin = w
        layers.append(MaxPool2D(f"{p}.pool"))
    layers.append(GlobalAvgPool("extractor.gap"))
    return Sequential(layers, "extractor")


def build_localization_head(z, din=EXTRACTOR_WIDTHS[-1], width=HEAD_WIDTH, seed=0):
    """Dense(relu) then Dense(sigmoid) regressing ``z`` normalized coordinates."""
    if z not in LANDMARK_OUTPUTS:
        raise ValueError(f"landmark output count must be one of {LANDMARK_OUTPUTS}, got {z}")
    s1, s2 = _seeds(seed, 2)
    return Sequential([
        Dense(din, width, s1, name="localization.dense1"),
        ReLU("localization.relu1"),
        Dense(width, z, s2, name="localization.out"),
        Sigmoid("localization.sigmoid"),
    ], "localization")


def build_classification_head(num_classes, din=EXTRACTOR_WIDTHS[-1], width=HEAD_WIDTH, seed=0,
                              zero_output=False):
    """Two relu Dense layers and a linear output producing class logits (softmax applied by callers)."""
    if num_classes not in (7, 8) and num_classes < 2:
        raise ValueError(f"invalid class count {num_classes}")
    s1, s2, s3 = _seeds(seed, 3)
    return Sequential([
        Dense(din, width, s1, name="classifier.dense1"),
        ReLU("classifier.relu1"),
        Dense(width, width, s2, name="classifier.dense2"),
        ReLU("classifier.relu2"),
        Dense(width, num_classes, s3, name="classifier.out", zero_init=zero_output),
    ], "classifier")


class Network:
    """Feature extractor plus optional localization and classification heads."""

    def __init__(self, spec, seed=0, with_localization=True, zero_output=False):
        self.spec = spec
        self.seed = seed
        self.meta = {}
        s_ext, s_loc, s_cls = _seeds(seed, 3)
        self.extractor = build_feature_extractor(spec.widths, s_ext)
        din = spec.widths[-1]
        self.localization = None
        if spec.z and with_localization:
            self.localization = build_localization_head(spec.z, din, spec.head_width, s_loc)
        self.classifier = build_classification_head(spec.num_classes, din, spec.head_width, s_cls, zero_output)

    # parameters ---------------------------------------------------------
    def heads(self):
        return [h for h in (self.localization, self.classifier) if h is not None]

    def named_params(self):
        out = self.extractor.named_params()
        for h in self.heads():
            out += h.named_params()
        return out

    def params(self):
        return dict(self.named_params())

    def trainable(self, *groups):
        """Trainable tensors of the named groups ('extractor', 'localization', 'classifier')."""
        out = {}
        for g in groups:
            part = getattr(self, g)
            if part is None:
                raise ValueError(f"network has no {g} head")
            out.update({n: t for n, t in part.named_params() if t.trainable})
        return out

    def cast(self, dtype):
        for _, t in self.named_params():
            t.data = t.data.astype(dtype)
        return self

    # inference ----------------------------------------------------------
    def _check_input(self, x):
        if x.ndim != 4 or x.shape[3] != 3:
            raise ValueError(f"expected an N x H x W x 3 batch, got shape {x.shape}")
        n_pool = len(self.spec.widths)
        if x.shape[1] % 2 ** n_pool or x.shape[2] % 2 ** n_pool:
            raise ValueError(f"spatial dims {x.shape[1:3]} must be divisible by {2 ** n_pool}")

    def features(self, x, train=False):
        self._check_input(x)
        return self.extractor.forward(x, train)

    def logits(self, x, batch_size=64):
        return self._batched(x, batch_size, lambda f: self.classifier.forward(f)[0])

    def predict_proba(self, x, batch_size=64):
        return ops.softmax(self.logits(x, batch_size))

    def predict_landmarks(self, x, batch_size=64):
        if self.localization is None:
            raise ValueError("network has no localization head")
        return self._batched(x, batch_size, lambda f: self.localization.forward(f)[0])

    def _batched(self, x, batch_size, head):
        x = np.asarray(x, dtype=self.extractor.layers[0].kernel.data.dtype)
        if x.ndim == 3:
            x = x[None]
        out = []
        for i in range(0, len(x), batch_size):
            f, _ = self.features(x[i:i + batch_size], train=False)
            out.append(head(f))
        return np.concatenate(out)

    def gap_index(self):
        """Index of the global-average-pool layer in the extractor stack."""
        return len(self.extractor) - 1

    def __repr__(self):
        return f"Network({self.spec.kind}, {self.spec.label}, C={self.spec.num_classes})"


def build_network(spec, seed=0, **kw):
    return Network(spec, seed, **kw)


def strip_localization(net):
    """Copy of ``net`` without its localization head, sharing no arrays with it."""
    out = Network(net.spec, net.seed, with_localization=False)
    src = net.params()
    for name, t in out.named_params():
        t.data = src[name].data.copy()
    out.meta = dict(net.meta)
    return out


# --- size accounting -------------------------------------------------------

def _as_network(spec_or_net):
    if isinstance(spec_or_net, Network):
        return spec_or_net
    return Network(spec_or_net)


def count_params(spec_or_net):
    """Exact parameter counts (batchnorm moving statistics included) per part.

    ``inference`` is what remains once the localization head is dropped.
    """
    net = _as_network(spec_or_net)
    groups = {"extractor": net.extractor, "localization": net.localization, "classifier": net.classifier}
    out = {}
    for g, part in groups.items():
        out[g] = sum(t.size for _, t in part.named_params()) if part is not None else 0
    out["total"] = out["extractor"] + out["localization"] + out["classifier"]
    out["inference"] = out["extractor"] + out["classifier"]
    out["trainable"] = sum(t.size for _, t in net.named_params() if t.trainable)
    out["per_layer"] = {n: t.size for n, t in net.named_params()}
    return out


def count_macs(spec, include_localization=False):
    """Multiply-accumulate counts for one forward pass, split into extractor and head parts."""
    h = spec.input_size
    cin = 3
    conv = 0
    for w in spec.widths:
        conv += h * h * 9 * cin * w + h * h * 9 * w * w
        cin = w
        h //= 2
    hw = spec.head_width
    cls = cin * hw + hw * hw + hw * spec.num_classes
    loc = (cin * hw + hw * spec.z) if (include_localization and spec.z) else 0
    return {"conv": conv, "classifier": cls, "localization": loc, "total": conv + cls + loc}


def count_flops(spec, convention="full", n_models=1):
    """FLOPs (2 per multiply-accumulate) of inference under a named convention.

    ``"heads"`` counts only the classification-head dense layers; ``"full"``
    counts every convolution and dense layer of the inference network.
    """
    macs = count_macs(spec)
    if convention == "heads":
        per = macs["classifier"]
    elif convention == "full":
        per = macs["total"]
    else:
        raise ValueError(f"unknown FLOP convention {convention!r}")
    return 2 * per * n_models
