"""Architecture descriptions and the named relay-selection networks.

An :class:`ArchSpec` is a plain, JSON-serializable description: the input
matrix shape, the network size and an ordered list of :class:`LayerSpec`.
Convolutional specs also keep the compact ``nodes``/``kernels`` plan they
were expanded from, which is what the architecture search edits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

from ..dataset import N_COLS, input_rows

LAYER_KINDS = ("conv", "inception", "dense", "bn", "relu", "maxpool", "skip", "pool", "flatten")

# kernel of the hidden conv blocks per (n, k)
SC_KERNELS = {
    (1, 2): (2, 2),
    (2, 2): (3, 2),
    (3, 2): (3, 3),
    (4, 2): (4, 4),
    (5, 2): (5, 4),
}
# second kernel of the inception blocks per (n, k); the first is always 4x4
SKIN_KERNELS = {
    (1, 2): (2, 2),
    (2, 2): (3, 2),
    (3, 2): (3, 3),
    (4, 2): (4, 4),
    (5, 2): (5, 5),
}
SC_NODES = (16, 64, 64, 32, 32, 16, 10)
SKIN_NODES = (32, 64, 64, 32, 24, 16)
STU_NODES = (8, 8, 8, 10)
STEM_KERNEL = (4, 4)
REL_HIDDEN = (128, 64)


@dataclass(frozen=True)
class LayerSpec:
    """One layer.

    ``kind`` selects the meaning of the other fields: ``out`` is the channel
    or unit count (conv, inception, dense) or the pooled ``(rows, cols)``
    (pool); ``kernel``/``kernel2`` are conv and inception kernels;
    ``source`` is the layer index whose output a skip layer concatenates.
    """

    kind: str
    out: int | tuple = 0
    kernel: tuple = ()
    kernel2: tuple = ()
    source: int = -1
    zero_init: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(int(v) for v in self.kernel))
        object.__setattr__(self, "kernel2", tuple(int(v) for v in self.kernel2))
        if isinstance(self.out, (list, tuple)):
            object.__setattr__(self, "out", tuple(int(v) for v in self.out))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.out:
            d["out"] = list(self.out) if isinstance(self.out, tuple) else self.out
        if self.kernel:
            d["kernel"] = list(self.kernel)
        if self.kernel2:
            d["kernel2"] = list(self.kernel2)
        if self.kind == "skip":
            d["source"] = self.source
        if self.zero_init:
            d["zero_init"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


@dataclass(frozen=True)
class ArchSpec:
    """A network description.

    Attributes
    ----------
    name : str
    n_sources, n_relays : int
    layers : tuple of LayerSpec
    output : {"per_source", "joint"}
        ``per_source`` nets emit ``(k+1) x n`` logits with a softmax per
        column; ``joint`` nets emit ``(k+1)**n`` logits, one per assignment.
    nodes, kernels : tuple
        Plan of a convolutional net: per position a width and a tuple of
        kernels (one kernel for a conv block, two for an inception block).
        Empty for dense nets.
    """

    name: str
    n_sources: int
    n_relays: int
    layers: tuple
    output: str = "per_source"
    nodes: tuple = ()
    kernels: tuple = ()

    def __post_init__(self):
        if self.output not in ("per_source", "joint"):
            raise ValueError(f"unknown output kind {self.output!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "nodes", tuple(int(m) for m in self.nodes))
        object.__setattr__(
            self, "kernels", tuple(tuple(tuple(int(v) for v in k) for k in ks) for ks in self.kernels)
        )

    @property
    def input_shape(self) -> tuple[int, int]:
        return input_rows(self.n_sources, self.n_relays), N_COLS

    @property
    def class_shape(self) -> tuple:
        if self.output == "joint":
            return ((self.n_relays + 1) ** self.n_sources,)
        return self.n_relays + 1, self.n_sources

    @property
    def hidden_blocks(self) -> int:
        """Number of surviving blocks between the stem and the last layer."""
        return sum(1 for m in self.nodes[1:-1] if m > 0)

    def with_nodes(self, nodes) -> "ArchSpec":
        """Same plan with new widths; a width of 0 drops that block."""
        if not self.nodes:
            raise ValueError("only convolutional plans can be re-sized")
        nodes = tuple(int(m) for m in nodes)
        if len(nodes) != len(self.nodes):
            raise ValueError(f"expected {len(self.nodes)} widths, got {len(nodes)}")
        return conv_plan(self.name, self.n_sources, self.n_relays, nodes, self.kernels)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_sources": self.n_sources,
            "n_relays": self.n_relays,
            "output": self.output,
            "nodes": list(self.nodes),
            "kernels": [[list(k) for k in ks] for ks in self.kernels],
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(
            name=d["name"],
            n_sources=int(d["n_sources"]),
            n_relays=int(d["n_relays"]),
            layers=tuple(LayerSpec.from_dict(x) for x in d["layers"]),
            output=d.get("output", "per_source"),
            nodes=tuple(d.get("nodes", ())),
            kernels=tuple(d.get("kernels", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def renamed(self, name: str) -> "ArchSpec":
        return replace(self, name=name)


def conv_plan(name, n, k, nodes, kernels) -> ArchSpec:
    """Expand a node/kernel plan into layers.

    Every surviving position becomes a conv (one kernel) or inception block
    (two kernels) followed by batch norm and ReLU.  The stem's output is
    concatenated onto the last block's output, a zero-initialized 1x1 conv
    maps to one channel and adaptive average pooling yields the
    ``(k+1) x n`` logits.
    """
    nodes, kernels = tuple(nodes), tuple(kernels)
    if len(nodes) != len(kernels):
        raise ValueError("nodes and kernels must have the same length")
    if any(m < 0 for m in nodes):
        raise ValueError(f"node counts must be non-negative, got {nodes}")
    layers = []
    stem_out = -1
    for pos, (m, ks) in enumerate(zip(nodes, kernels)):
        if m == 0:
            continue
        if len(ks) == 1:
            layers.append(LayerSpec("conv", m, ks[0]))
        elif len(ks) == 2:
            layers.append(LayerSpec("inception", m, ks[0], ks[1]))
        else:
            raise ValueError(f"position {pos}: expected 1 or 2 kernels, got {len(ks)}")
        layers += [LayerSpec("bn"), LayerSpec("relu")]
        if stem_out < 0:
            stem_out = len(layers) - 1
    if stem_out >= 0:
        layers.append(LayerSpec("skip", source=stem_out))
    layers.append(LayerSpec("conv", 1, (1, 1), zero_init=True))
    layers.append(LayerSpec("pool", (k + 1, n)))
    return ArchSpec(name, n, k, tuple(layers), "per_source", nodes, kernels)


def _check_size(n, k, table, what):
    if (n, k) not in table:
        raise ValueError(f"{what} has no kernel table entry for n={n}, k={k}; pass kernel= explicitly")
    return table[(n, k)]


def make_sc_net(n: int = 3, k: int = 2, kernel=None, nodes=SC_NODES) -> ArchSpec:
    """Convolutional teacher: 4x4 stem, hidden ``kernel`` blocks, 1x1 last block."""
    kernel = tuple(kernel) if kernel is not None else _check_size(n, k, SC_KERNELS, "SC-NET")
    if len(nodes) < 2:
        raise ValueError("need at least a stem and a last layer")
    kernels = ((STEM_KERNEL,),) + ((kernel,),) * (len(nodes) - 2) + (((1, 1),),)
    return conv_plan("sc-net", n, k, nodes, kernels)


def make_skin_net(n: int = 3, k: int = 2, kernel2=None, nodes=SKIN_NODES) -> ArchSpec:
    """Inception variant: 4x4 stem conv then inception blocks (4x4 and ``kernel2``)."""
    kernel2 = tuple(kernel2) if kernel2 is not None else _check_size(n, k, SKIN_KERNELS, "SKIN-NET")
    kernels = ((STEM_KERNEL,),) + ((STEM_KERNEL, kernel2),) * (len(nodes) - 1)
    return conv_plan("skin-net", n, k, nodes, kernels)


def make_student(nodes=STU_NODES, n: int = 3, k: int = 2, kernel=(2, 2), n_hidden: int = 1) -> ArchSpec:
    """Small student net: 4x4 stem, ``n_hidden`` ``kernel`` blocks, then 1x1 blocks."""
    nodes = tuple(nodes)
    if len(nodes) < n_hidden + 2:
        raise ValueError("nodes must cover the stem, the hidden blocks and a last layer")
    n_tail = len(nodes) - 1 - n_hidden
    kernels = ((STEM_KERNEL,),) + ((tuple(kernel),),) * n_hidden + (((1, 1),),) * n_tail
    return conv_plan("stu-sc-net", n, k, nodes, kernels)


def make_rel_net(n: int = 3, k: int = 2, hidden=REL_HIDDEN) -> ArchSpec:
    """Dense classifier over all ``(k+1)**n`` assignments."""
    layers = [LayerSpec("flatten")]
    for h in hidden:
        layers += [LayerSpec("dense", int(h)), LayerSpec("bn"), LayerSpec("relu")]
    layers.append(LayerSpec("dense", (k + 1) ** n, zero_init=True))
    return ArchSpec("rel-net", n, k, tuple(layers), "joint")


ARCHITECTURES = {
    "sc-net": make_sc_net,
    "skin-net": make_skin_net,
    "rel-net": make_rel_net,
    "stu-sc-net": lambda n=3, k=2: make_student(STU_NODES, n, k),
    "mini-sc-net": lambda n=3, k=2: make_student(STU_NODES, n, k).renamed("mini-sc-net"),
}


def make_arch(name: str, n: int = 3, k: int = 2) -> ArchSpec:
    if name not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {name!r}; choose from {sorted(ARCHITECTURES)}")
    return ARCHITECTURES[name](n=n, k=k)
