"""Declarative description of the dense grouped-convolution encoder-decoder.

The network is specified as data before anything trainable exists: five
encoder blocks (3x3 conv -> channel-wise grouped conv -> 2x2 max pool),
five decoder blocks (max unpool -> skip merge -> 3x3 conv -> grouped conv),
and a 1x1 classification head.  Everything downstream -- shape inference,
parameter audits, the trainable torch module -- is derived from a
:class:`NetworkSpec`, which keeps the layer table auditable independently
of any framework object.

Two details are worth calling out because they are forced by the reference
parameter budget (see ``REFERENCE_LAYER_TABLE``):

* Grouped convolutions are channel-wise (``groups == channels``): the
  reference counts (320 = 9*32 + 32 and so on) admit no other grouping.
* The decoder channel descent 128 -> 64 -> 32 cannot happen inside the
  conv layers (their budgeted counts force equal in/out channels), and the
  unpool layers must receive exactly as many channels as their paired pool
  recorded indices for.  The descent is therefore a parameter-free "fold"
  that averages adjacent channel pairs immediately before the affected
  unpool layers.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, replace

KERNEL = 3
POOL_WINDOW = 2
ENCODER_CHANNELS = (32, 64, 128, 128, 128)
SKIP_MODES = ("concat", "add")


class SpecError(ValueError):
    """A network spec that cannot describe a valid layer graph."""


class ChannelMismatchError(SpecError):
    """Raised by shape inference when a layer's declared input channels
    disagree with the arriving feature map.  Carries the layer name."""

    def __init__(self, layer: str, expected: int, got: int):
        super().__init__(
            f"layer {layer!r} declares {expected} input channels but receives {got}"
        )
        self.layer = layer


@dataclass(frozen=True)
class TensorShape:
    """Height x width x channels of one feature map."""

    height: int
    width: int
    channels: int

    def __post_init__(self):
        if min(self.height, self.width, self.channels) <= 0:
            raise SpecError(f"non-positive tensor shape {self}")

    def __str__(self):
        return f"{self.height}x{self.width}x{self.channels}"

    @staticmethod
    def parse(text: str) -> "TensorShape":
        h, w, c = (int(p) for p in text.strip().split("x"))
        return TensorShape(h, w, c)


@dataclass(frozen=True)
class ConvLayerSpec:
    """Same-padded 3x3 convolution with bias and rectifier activation."""

    name: str
    in_channels: int
    out_channels: int


@dataclass(frozen=True)
class GroupedConvLayerSpec:
    """Channel-wise grouped 3x3 convolution: one 3x3 filter per channel
    (groups == channels), bias and rectifier included."""

    name: str
    channels: int


@dataclass(frozen=True)
class PoolLayerSpec:
    """2x2 max pooling, stride 2; records argmax indices for its unpool."""

    name: str


@dataclass(frozen=True)
class UnpoolLayerSpec:
    """Max unpooling that places values at the argmax positions recorded by
    the pool layer named in ``pairs``."""

    name: str
    pairs: str


@dataclass(frozen=True)
class FoldLayerSpec:
    """Parameter-free channel reduction: averages adjacent channel groups.

    ``in_channels`` must be an integer multiple of ``out_channels``; the map
    reshapes (C,H,W) to (out, C//out, H, W) and takes the mean over axis 1,
    so channels (2i, 2i+1) fold into output channel i when halving.
    """

    name: str
    in_channels: int
    out_channels: int

    def __post_init__(self):
        if self.in_channels % self.out_channels != 0:
            raise SpecError(
                f"fold {self.name!r}: {self.in_channels} channels do not divide "
                f"into {self.out_channels}"
            )


@dataclass(frozen=True)
class SkipPath:
    """Outer dense route from an encoder block to a decoder block.

    The source tap is the output of the encoder block's first convolution
    (before pooling); the merge point is the decoder block entry directly
    after its unpool, where spatial resolutions coincide.
    """

    source_block: int
    target_block: int
    tap: str
    merge_name: str
    mode: str

    def __post_init__(self):
        if self.mode not in SKIP_MODES:
            raise SpecError(f"unknown skip mode {self.mode!r}")


@dataclass(frozen=True)
class EncoderBlockSpec:
    index: int
    conv: ConvLayerSpec
    grouped: GroupedConvLayerSpec
    pool: PoolLayerSpec


@dataclass(frozen=True)
class DecoderBlockSpec:
    index: int
    fold: FoldLayerSpec | None
    unpool: UnpoolLayerSpec
    conv: ConvLayerSpec
    grouped: GroupedConvLayerSpec


@dataclass(frozen=True)
class NetworkSpec:
    """Complete declarative description of the segmentation network."""

    input_shape: TensorShape
    num_classes: int
    encoder_blocks: tuple[EncoderBlockSpec, ...]
    decoder_blocks: tuple[DecoderBlockSpec, ...]
    skips: tuple[SkipPath, ...]
    head_name: str = "classifier"

    @property
    def skip_mode(self) -> str:
        return self.skips[0].mode if self.skips else "concat"

    def encoder_block(self, index: int) -> EncoderBlockSpec:
        return self.encoder_blocks[index - 1]

    def skip_into(self, decoder_index: int) -> SkipPath | None:
        for skip in self.skips:
            if skip.target_block == decoder_index:
                return skip
        return None

    def fingerprint(self) -> str:
        """Stable identity of the architecture, used to pair checkpoints
        with the spec they were trained from."""
        return hashlib.sha256(to_text(self).encode()).hexdigest()


# --------------------------------------------------------------------------
# construction

# Reference layer table: canonical name, layer kind, parameter budget and
# feature-map size (at 640x640x3 input) that the architecture is audited
# against.  A few printed feature-map entries are inconsistent with the
# layer arithmetic; they are kept verbatim here and surfaced by the audit
# as source discrepancies rather than silently corrected.
REFERENCE_LAYER_TABLE = (
    ("Conv1_1", "conv", 896, "640x640x32"),
    ("groupedconv_1", "grouped", 320, "640x640x32"),
    ("Pool1", "pool", 0, "320x320x32"),
    ("Conv2_1", "conv", 18496, "320x320x64"),
    ("groupedconv_2", "grouped", 640, "320x320x64"),
    ("Pool2_1", "pool", 0, "160x160x64"),
    ("Conv3_1_1", "conv", 73856, "160x160x128"),
    ("groupedconv_3", "grouped", 1280, "160x160x128"),
    ("Pool2_2", "pool", 0, "80x80x128"),
    ("Conv3_1_2", "conv", 147584, "80x80x128"),
    ("groupedconv_4", "grouped", 1280, "80x80x128"),
    ("Pool2_3", "pool", 0, "40x40x128"),
    ("Conv3_1_3", "conv", 147584, "40x40x128"),
    ("groupedconv_5", "grouped", 1280, "80x80x128"),
    ("Pool3", "pool", 0, "20x20x128"),
    ("decoder3_unpool", "unpool", 0, "40x40x128"),
    ("decoder3_conv2_1_3", "conv", 147584, "40x40x128"),
    ("groupedconv_6", "grouped", 1280, "40x40x256"),
    ("decoder2_unpool_3", "unpool", 0, "80x80x128"),
    ("decoder3_conv2_1_2", "conv", 147584, "80x80x128"),
    ("groupedconv_7", "grouped", 1280, "80x80x128"),
    ("decoder2_unpool_2", "unpool", 0, "160x160x128"),
    ("decoder3_conv2_1_1", "conv", 147584, "160x160x128"),
    ("groupedconv_8", "grouped", 1280, "160x160x128"),
    ("decoder2_unpool_1", "unpool", 0, "320x320x64"),
    ("decoder3_conv2", "conv", 36928, "320x320x64"),
    ("groupedconv_9", "grouped", 640, "320x320x64"),
    ("decoder1_unpool", "unpool", 0, "640x640x32"),
    ("decoder1_conv2", "conv", 9248, "320x320x64"),
    ("groupedconv_10", "grouped", 320, "320x320x64"),
)

REFERENCE_PARAMS = {name: params for name, _, params, _ in REFERENCE_LAYER_TABLE}
REFERENCE_SHAPES = {name: shape for name, _, _, shape in REFERENCE_LAYER_TABLE}

_ENCODER_NAMES = (
    ("Conv1_1", "groupedconv_1", "Pool1"),
    ("Conv2_1", "groupedconv_2", "Pool2_1"),
    ("Conv3_1_1", "groupedconv_3", "Pool2_2"),
    ("Conv3_1_2", "groupedconv_4", "Pool2_3"),
    ("Conv3_1_3", "groupedconv_5", "Pool3"),
)
_DECODER_NAMES = (
    ("decoder3_unpool", "decoder3_conv2_1_3", "groupedconv_6"),
    ("decoder2_unpool_3", "decoder3_conv2_1_2", "groupedconv_7"),
    ("decoder2_unpool_2", "decoder3_conv2_1_1", "groupedconv_8"),
    ("decoder2_unpool_1", "decoder3_conv2", "groupedconv_9"),
    ("decoder1_unpool", "decoder1_conv2", "groupedconv_10"),
)
_FOLD_NAMES = {4: "decoder2_fold", 5: "decoder1_fold"}


def default_network_spec(
    input_shape: TensorShape = TensorShape(640, 640, 3),
    num_classes: int = 3,
    skip_mode: str = "concat",
) -> NetworkSpec:
    """Build the canonical five-block spec for a given input resolution.

    Input height and width must be divisible by 32 (five 2x pools), and
    ``num_classes`` must be at least 2.  ``skip_mode`` selects how outer
    dense routes merge into the decoder: ``"concat"`` stacks channels,
    ``"add"`` sums equal-width maps and reproduces the reference parameter
    budget exactly.
    """
    if input_shape.height % 32 != 0 or input_shape.width % 32 != 0:
        raise SpecError(
            f"input {input_shape} not divisible by 32; five 2x2 pools need "
            "height and width multiples of 32"
        )
    if num_classes < 2:
        raise SpecError(f"num_classes must be >= 2, got {num_classes}")
    if skip_mode not in SKIP_MODES:
        raise SpecError(f"unknown skip mode {skip_mode!r}")

    encoder = []
    in_ch = input_shape.channels
    for i, out_ch in enumerate(ENCODER_CHANNELS, start=1):
        conv_name, grouped_name, pool_name = _ENCODER_NAMES[i - 1]
        encoder.append(
            EncoderBlockSpec(
                index=i,
                conv=ConvLayerSpec(conv_name, in_ch, out_ch),
                grouped=GroupedConvLayerSpec(grouped_name, out_ch),
                pool=PoolLayerSpec(pool_name),
            )
        )
        in_ch = out_ch

    decoder = []
    skips = []
    carry = ENCODER_CHANNELS[-1]
    for i in range(1, 6):
        unpool_name, conv_name, grouped_name = _DECODER_NAMES[i - 1]
        source_block = 6 - i
        width = ENCODER_CHANNELS[source_block - 1]
        fold = None
        if carry != width:
            fold = FoldLayerSpec(_FOLD_NAMES[i], carry, width)
        merged = width if skip_mode == "add" else 2 * width
        decoder.append(
            DecoderBlockSpec(
                index=i,
                fold=fold,
                unpool=UnpoolLayerSpec(unpool_name, pairs=_ENCODER_NAMES[source_block - 1][2]),
                conv=ConvLayerSpec(conv_name, merged, width),
                grouped=GroupedConvLayerSpec(grouped_name, width),
            )
        )
        skips.append(
            SkipPath(
                source_block=source_block,
                target_block=i,
                tap=_ENCODER_NAMES[source_block - 1][0],
                merge_name=f"skip{source_block}_merge",
                mode=skip_mode,
            )
        )
        carry = width

    return NetworkSpec(
        input_shape=input_shape,
        num_classes=num_classes,
        encoder_blocks=tuple(encoder),
        decoder_blocks=tuple(decoder),
        skips=tuple(skips),
    )


# --------------------------------------------------------------------------
# parameter counting

LayerSpec = (
    ConvLayerSpec | GroupedConvLayerSpec | PoolLayerSpec | UnpoolLayerSpec | FoldLayerSpec
)


def count_parameters(layer: LayerSpec) -> int:
    """Trainable parameter count of a single layer.

    Convolutions carry 3*3*in*out weights plus out biases; channel-wise
    grouped convolutions 3*3*ch weights plus ch biases; pooling, unpooling
    and channel folds carry none.
    """
    if isinstance(layer, ConvLayerSpec):
        return KERNEL * KERNEL * layer.in_channels * layer.out_channels + layer.out_channels
    if isinstance(layer, GroupedConvLayerSpec):
        return KERNEL * KERNEL * layer.channels + layer.channels
    if isinstance(layer, (PoolLayerSpec, UnpoolLayerSpec, FoldLayerSpec)):
        return 0
    raise TypeError(f"not a layer spec: {layer!r}")


def head_parameter_count(spec: NetworkSpec) -> int:
    """1x1 classification convolution: num_classes filters over the last
    decoder width, plus biases."""
    width = spec.decoder_blocks[-1].conv.out_channels
    return width * spec.num_classes + spec.num_classes


def total_parameter_count(spec: NetworkSpec) -> int:
    total = head_parameter_count(spec)
    for block in spec.encoder_blocks:
        total += count_parameters(block.conv) + count_parameters(block.grouped)
    for block in spec.decoder_blocks:
        total += count_parameters(block.conv) + count_parameters(block.grouped)
    return total


# --------------------------------------------------------------------------
# shape inference

class ShapeTrace:
    """Ordered (layer name, output shape) pairs covering every layer."""

    def __init__(self, rows: list[tuple[str, TensorShape]]):
        self.rows = rows
        self._by_name = dict(rows)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def shape_of(self, name: str) -> TensorShape:
        return self._by_name[name]

    @property
    def output_shape(self) -> TensorShape:
        return self.rows[-1][1]

    def format(self) -> str:
        width = max(len(name) for name, _ in self.rows)
        return "\n".join(f"{name:<{width}}  {shape}" for name, shape in self.rows)


def infer_shapes(spec: NetworkSpec, input_shape: TensorShape | None = None) -> ShapeTrace:
    """Walk the spec and compute every layer's output shape.

    Raises :class:`ChannelMismatchError` naming the first layer whose
    declared input channels disagree with the arriving feature map, which
    makes this function double as the spec validator.
    """
    shape = input_shape or spec.input_shape
    if shape != spec.input_shape:
        raise SpecError(f"input {shape} does not match spec input {spec.input_shape}")

    rows: list[tuple[str, TensorShape]] = []
    pool_inputs: dict[str, TensorShape] = {}
    taps: dict[str, TensorShape] = {}

    for block in spec.encoder_blocks:
        if block.conv.in_channels != shape.channels:
            raise ChannelMismatchError(block.conv.name, block.conv.in_channels, shape.channels)
        shape = TensorShape(shape.height, shape.width, block.conv.out_channels)
        rows.append((block.conv.name, shape))
        taps[block.conv.name] = shape
        if block.grouped.channels != shape.channels:
            raise ChannelMismatchError(block.grouped.name, block.grouped.channels, shape.channels)
        rows.append((block.grouped.name, shape))
        if shape.height % 2 or shape.width % 2:
            raise SpecError(f"pool {block.pool.name!r} input {shape} has odd spatial dims")
        pool_inputs[block.pool.name] = shape
        shape = TensorShape(shape.height // 2, shape.width // 2, shape.channels)
        rows.append((block.pool.name, shape))

    for block in spec.decoder_blocks:
        if block.fold is not None:
            if block.fold.in_channels != shape.channels:
                raise ChannelMismatchError(block.fold.name, block.fold.in_channels, shape.channels)
            shape = TensorShape(shape.height, shape.width, block.fold.out_channels)
            rows.append((block.fold.name, shape))
        paired = pool_inputs.get(block.unpool.pairs)
        if paired is None:
            raise SpecError(f"unpool {block.unpool.name!r} pairs unknown pool {block.unpool.pairs!r}")
        if paired.channels != shape.channels:
            raise ChannelMismatchError(block.unpool.name, paired.channels, shape.channels)
        if (paired.height, paired.width) != (shape.height * 2, shape.width * 2):
            raise SpecError(
                f"unpool {block.unpool.name!r} output {paired} does not double input {shape}"
            )
        shape = paired
        rows.append((block.unpool.name, shape))

        skip = spec.skip_into(block.index)
        if skip is not None:
            tap_shape = taps.get(skip.tap)
            if tap_shape is None:
                raise SpecError(f"skip tap {skip.tap!r} is not an encoder convolution")
            if (tap_shape.height, tap_shape.width) != (shape.height, shape.width):
                raise SpecError(
                    f"skip {skip.merge_name!r} joins unequal resolutions "
                    f"{tap_shape} and {shape}"
                )
            if skip.mode == "add":
                if tap_shape.channels != shape.channels:
                    raise ChannelMismatchError(skip.merge_name, tap_shape.channels, shape.channels)
            else:
                shape = TensorShape(shape.height, shape.width, shape.channels + tap_shape.channels)
            rows.append((skip.merge_name, shape))

        if block.conv.in_channels != shape.channels:
            raise ChannelMismatchError(block.conv.name, block.conv.in_channels, shape.channels)
        shape = TensorShape(shape.height, shape.width, block.conv.out_channels)
        rows.append((block.conv.name, shape))
        if block.grouped.channels != shape.channels:
            raise ChannelMismatchError(block.grouped.name, block.grouped.channels, shape.channels)
        rows.append((block.grouped.name, shape))

    shape = TensorShape(shape.height, shape.width, spec.num_classes)
    rows.append((spec.head_name, shape))
    rows.append(("softmax", shape))
    return ShapeTrace(rows)


# --------------------------------------------------------------------------
# audit

@dataclass(frozen=True)
class AuditRow:
    name: str
    kind: str
    computed: int
    expected: int | None
    status: str  # "match" | "deviation" | "mismatch" | "unlisted"
    note: str = ""


@dataclass(frozen=True)
class ShapeDiscrepancy:
    """A reference-table feature-map entry that contradicts the recomputed
    shape chain; the recomputed chain is authoritative."""

    name: str
    listed: str
    computed: str


class ParamAudit:
    """Per-layer computed vs reference parameter counts plus shape notes."""

    def __init__(
        self,
        rows: list[AuditRow],
        shape_discrepancies: list[ShapeDiscrepancy],
        head_params: int,
    ):
        self.rows = rows
        self.shape_discrepancies = shape_discrepancies
        self.head_params = head_params

    @property
    def computed_total(self) -> int:
        return sum(r.computed for r in self.rows) + self.head_params

    @property
    def matched(self) -> list[AuditRow]:
        return [r for r in self.rows if r.status == "match" and r.expected]

    @property
    def deviations(self) -> list[AuditRow]:
        return [r for r in self.rows if r.status == "deviation"]

    @property
    def mismatches(self) -> list[AuditRow]:
        return [r for r in self.rows if r.status == "mismatch"]

    def to_records(self) -> list[dict]:
        return [
            {
                "name": r.name,
                "kind": r.kind,
                "computed": r.computed,
                "expected": r.expected,
                "status": r.status,
                "note": r.note,
            }
            for r in self.rows
        ]

    def format(self) -> str:
        out = io.StringIO()
        width = max(len(r.name) for r in self.rows)
        print(f"{'layer':<{width}}  {'kind':<8} {'computed':>9} {'expected':>9}  status", file=out)
        for r in self.rows:
            expected = "-" if r.expected is None else str(r.expected)
            line = f"{r.name:<{width}}  {r.kind:<8} {r.computed:>9} {expected:>9}  {r.status}"
            if r.note:
                line += f"  ({r.note})"
            print(line, file=out)
        print(f"{'classifier head':<{width}}  {'conv1x1':<8} {self.head_params:>9} {'-':>9}  unlisted", file=out)
        print(f"total trainable parameters: {self.computed_total}", file=out)
        if self.shape_discrepancies:
            print("source discrepancies (reference feature-map column vs recomputed):", file=out)
            for d in self.shape_discrepancies:
                print(f"  {d.name}: listed {d.listed}, computed {d.computed}", file=out)
        return out.getvalue()


def audit_against_tables(spec: NetworkSpec) -> ParamAudit:
    """Compare each layer's computed parameter count with the reference
    layer table.

    With ``add`` skips every listed count matches.  With ``concat`` skips the
    decoder convolutions see doubled input channels; those rows are flagged
    as documented deviations rather than mismatches, with the delta recorded.
    Any other disagreement is a genuine mismatch.
    """
    rows: list[AuditRow] = []

    def add_row(layer: LayerSpec, kind: str):
        computed = count_parameters(layer)
        expected = REFERENCE_PARAMS.get(layer.name)
        if expected is None:
            rows.append(AuditRow(layer.name, kind, computed, None, "unlisted"))
        elif computed == expected:
            rows.append(AuditRow(layer.name, kind, computed, expected, "match"))
        elif (
            kind == "conv"
            and isinstance(layer, ConvLayerSpec)
            and spec.skip_mode == "concat"
            and count_parameters(replace(layer, in_channels=layer.in_channels // 2)) == expected
        ):
            rows.append(
                AuditRow(
                    layer.name,
                    kind,
                    computed,
                    expected,
                    "deviation",
                    "concat skips double the input channels",
                )
            )
        else:
            rows.append(AuditRow(layer.name, kind, computed, expected, "mismatch"))

    for block in spec.encoder_blocks:
        add_row(block.conv, "conv")
        add_row(block.grouped, "grouped")
        add_row(block.pool, "pool")
    for block in spec.decoder_blocks:
        if block.fold is not None:
            add_row(block.fold, "fold")
        add_row(block.unpool, "unpool")
        add_row(block.conv, "conv")
        add_row(block.grouped, "grouped")

    discrepancies = []
    if spec.input_shape == TensorShape(640, 640, spec.input_shape.channels):
        trace = infer_shapes(spec)
        for name, listed in REFERENCE_SHAPES.items():
            try:
                computed = trace.shape_of(name)
            except KeyError:
                continue
            if str(computed) != listed:
                discrepancies.append(ShapeDiscrepancy(name, listed, str(computed)))

    return ParamAudit(rows, discrepancies, head_parameter_count(spec))


# --------------------------------------------------------------------------
# serialization

def to_text(spec: NetworkSpec) -> str:
    """Serialize a spec to the line-oriented text schema.

    Schema (one directive per line, ``#`` comments ignored)::

        cupdisc-spec v1
        input <HxWxC>
        classes <n>
        encoder <block> conv <name> <in> <out>
        encoder <block> grouped <name> <ch>
        encoder <block> pool <name>
        decoder <block> fold <name> <in> <out>        (optional per block)
        decoder <block> unpool <name> pairs <pool>
        decoder <block> conv <name> <in> <out>
        decoder <block> grouped <name> <ch>
        skip <encoder block> <decoder block> tap <conv> mode <concat|add>
    """
    lines = ["cupdisc-spec v1"]
    lines.append(f"input {spec.input_shape}")
    lines.append(f"classes {spec.num_classes}")
    for b in spec.encoder_blocks:
        lines.append(f"encoder {b.index} conv {b.conv.name} {b.conv.in_channels} {b.conv.out_channels}")
        lines.append(f"encoder {b.index} grouped {b.grouped.name} {b.grouped.channels}")
        lines.append(f"encoder {b.index} pool {b.pool.name}")
    for b in spec.decoder_blocks:
        if b.fold is not None:
            lines.append(f"decoder {b.index} fold {b.fold.name} {b.fold.in_channels} {b.fold.out_channels}")
        lines.append(f"decoder {b.index} unpool {b.unpool.name} pairs {b.unpool.pairs}")
        lines.append(f"decoder {b.index} conv {b.conv.name} {b.conv.in_channels} {b.conv.out_channels}")
        lines.append(f"decoder {b.index} grouped {b.grouped.name} {b.grouped.channels}")
    for s in spec.skips:
        lines.append(f"skip {s.source_block} {s.target_block} tap {s.tap} mode {s.mode}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> NetworkSpec:
    """Parse the text schema produced by :func:`to_text`."""
    lines = [
        ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines or lines[0].split() != ["cupdisc-spec", "v1"]:
        raise SpecError("not a cupdisc-spec v1 document")

    input_shape = None
    num_classes = None
    enc: dict[int, dict] = {}
    dec: dict[int, dict] = {}
    skips = []

    for ln in lines[1:]:
        parts = ln.split()
        try:
            if parts[0] == "input":
                input_shape = TensorShape.parse(parts[1])
            elif parts[0] == "classes":
                num_classes = int(parts[1])
            elif parts[0] in ("encoder", "decoder"):
                table = enc if parts[0] == "encoder" else dec
                block = table.setdefault(int(parts[1]), {})
                kind = parts[2]
                if kind == "conv":
                    block["conv"] = ConvLayerSpec(parts[3], int(parts[4]), int(parts[5]))
                elif kind == "grouped":
                    block["grouped"] = GroupedConvLayerSpec(parts[3], int(parts[4]))
                elif kind == "pool":
                    block["pool"] = PoolLayerSpec(parts[3])
                elif kind == "fold":
                    block["fold"] = FoldLayerSpec(parts[3], int(parts[4]), int(parts[5]))
                elif kind == "unpool":
                    if parts[4] != "pairs":
                        raise SpecError(f"malformed unpool line: {ln!r}")
                    block["unpool"] = UnpoolLayerSpec(parts[3], pairs=parts[5])
                else:
                    raise SpecError(f"unknown layer kind {kind!r}")
            elif parts[0] == "skip":
                if parts[3] != "tap" or parts[5] != "mode":
                    raise SpecError(f"malformed skip line: {ln!r}")
                src, dst = int(parts[1]), int(parts[2])
                skips.append(
                    SkipPath(src, dst, tap=parts[4], merge_name=f"skip{src}_merge", mode=parts[6])
                )
            else:
                raise SpecError(f"unknown directive {parts[0]!r}")
        except (IndexError, ValueError) as err:
            if isinstance(err, SpecError):
                raise
            raise SpecError(f"malformed spec line: {ln!r}") from err

    if input_shape is None or num_classes is None:
        raise SpecError("spec missing input or classes directive")

    encoder_blocks = tuple(
        EncoderBlockSpec(i, enc[i]["conv"], enc[i]["grouped"], enc[i]["pool"])
        for i in sorted(enc)
    )
    decoder_blocks = tuple(
        DecoderBlockSpec(i, dec[i].get("fold"), dec[i]["unpool"], dec[i]["conv"], dec[i]["grouped"])
        for i in sorted(dec)
    )
    return NetworkSpec(
        input_shape=input_shape,
        num_classes=num_classes,
        encoder_blocks=encoder_blocks,
        decoder_blocks=decoder_blocks,
        skips=tuple(skips),
    )


def save_spec(spec: NetworkSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_text(spec))


def load_spec(path) -> NetworkSpec:
    with open(path) as fh:
        return from_text(fh.read())
