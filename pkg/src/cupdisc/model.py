"""Trainable realization of a :class:`~cupdisc.netspec.NetworkSpec`.

The module mirrors the declarative spec layer for layer: encoder blocks of
3x3 conv -> channel-wise grouped conv -> indexed max pool, decoder blocks of
(optional channel fold) -> max unpool -> skip merge -> 3x3 conv -> grouped
conv, and a 1x1 classification head.  Pooling indices flow to the unpool
layer paired in the spec, and skip taps are taken after each encoder
block's first convolution.
"""

from __future__ import annotations

import torch
from torch import nn

from .netspec import NetworkSpec, TensorShape, default_network_spec, total_parameter_count


def _conv3x3(in_ch: int, out_ch: int, groups: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1, groups=groups, bias=True)


class _Fold(nn.Module):
    """Parameter-free channel descent: mean over adjacent channel groups."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.group = in_channels // out_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(f"fold expected {self.in_channels} channels, got {c}")
        return x.view(b, self.out_channels, self.group, h, w).mean(dim=2)

    def extra_repr(self) -> str:
        return f"{self.in_channels} -> {self.out_channels}"


class DenseEncoderDecoder(nn.Module):
    """Encoder-decoder segmentation network with grouped convolutions,
    indexed unpooling and outer dense skip routes.

    ``forward`` returns raw class logits (B, num_classes, H, W);
    :meth:`predict_probs` applies the softmax head.
    """

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec

        self.encoder_convs = nn.ModuleList()
        self.encoder_grouped = nn.ModuleList()
        self.pools = nn.ModuleList()
        for block in spec.encoder_blocks:
            self.encoder_convs.append(_conv3x3(block.conv.in_channels, block.conv.out_channels))
            self.encoder_grouped.append(
                _conv3x3(block.grouped.channels, block.grouped.channels, groups=block.grouped.channels)
            )
            self.pools.append(nn.MaxPool2d(2, stride=2, return_indices=True))

        self.folds = nn.ModuleDict()
        self.unpools = nn.ModuleList()
        self.decoder_convs = nn.ModuleList()
        self.decoder_grouped = nn.ModuleList()
        for block in spec.decoder_blocks:
            if block.fold is not None:
                self.folds[str(block.index)] = _Fold(block.fold.in_channels, block.fold.out_channels)
            self.unpools.append(nn.MaxUnpool2d(2, stride=2))
            self.decoder_convs.append(_conv3x3(block.conv.in_channels, block.conv.out_channels))
            self.decoder_grouped.append(
                _conv3x3(block.grouped.channels, block.grouped.channels, groups=block.grouped.channels)
            )

        last_width = spec.decoder_blocks[-1].conv.out_channels
        self.classifier = nn.Conv2d(last_width, spec.num_classes, kernel_size=1, bias=True)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        spec = self.spec
        if x.ndim != 4 or x.shape[1] != spec.input_shape.channels:
            raise ValueError(
                f"expected input (B, {spec.input_shape.channels}, H, W), got {tuple(x.shape)}"
            )
        if x.shape[2] % 32 or x.shape[3] % 32:
            raise ValueError(f"spatial dims {tuple(x.shape[2:])} not divisible by 32")

        taps: dict[str, torch.Tensor] = {}
        indices: dict[str, torch.Tensor] = {}
        sizes: dict[str, torch.Size] = {}

        for i, block in enumerate(spec.encoder_blocks):
            x = self.relu(self.encoder_convs[i](x))
            taps[block.conv.name] = x
            x = self.relu(self.encoder_grouped[i](x))
            sizes[block.pool.name] = x.shape
            x, idx = self.pools[i](x)
            indices[block.pool.name] = idx

        for i, block in enumerate(spec.decoder_blocks):
            if block.fold is not None:
                x = self.folds[str(block.index)](x)
            x = self.unpools[i](x, indices[block.unpool.pairs], output_size=sizes[block.unpool.pairs])
            skip = spec.skip_into(block.index)
            if skip is not None:
                tap = taps[skip.tap]
                x = x + tap if skip.mode == "add" else torch.cat([x, tap], dim=1)
            x = self.relu(self.decoder_convs[i](x))
            x = self.relu(self.decoder_grouped[i](x))

        return self.classifier(x)

    @torch.no_grad()
    def predict_probs(self, x: torch.Tensor) -> torch.Tensor:
        """Per-pixel class probabilities, computed in eval mode."""
        was_training = self.training
        self.eval()
        try:
            probs = torch.softmax(self.forward(x), dim=1)
        finally:
            self.train(was_training)
        return probs

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def build_network(
    spec: NetworkSpec | None = None,
    seed: int | None = None,
    mode: str = "train",
) -> DenseEncoderDecoder:
    """Construct the network, optionally with seeded initialization.

    Weights use He fan-in initialization (suits the rectifier activations);
    biases start at zero.  ``mode`` is ``"train"`` or ``"infer"`` and sets
    the module's training flag.  The built module's trainable parameter
    count always equals the spec's analytic total.
    """
    if spec is None:
        spec = default_network_spec()
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")

    if seed is not None:
        torch.manual_seed(seed)
    net = DenseEncoderDecoder(spec)
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            nn.init.zeros_(m.bias)

    expected = total_parameter_count(spec)
    actual = net.parameter_count()
    if actual != expected:
        raise RuntimeError(
            f"built network has {actual} trainable parameters, spec says {expected}"
        )

    net.train(mode == "train")
    return net


def trace_forward(net: DenseEncoderDecoder, input_shape: TensorShape | None = None):
    """Run a dummy forward pass and return the (B-stripped) output shape.

    Mostly a convenience for checking that the realized module reproduces
    the spec's analytic shape chain end to end.
    """
    shape = input_shape or net.spec.input_shape
    x = torch.zeros(1, shape.channels, shape.height, shape.width)
    with torch.no_grad():
        y = net(x)
    return TensorShape(y.shape[2], y.shape[3], y.shape[1])
