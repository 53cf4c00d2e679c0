"""Training, evaluation, checkpointing and single-image prediction.

The loop is deliberately plain: full-precision CPU/GPU-agnostic torch,
adaptive-moment steps with a per-epoch exponential learning-rate decay,
the generalized dice objective, and early stopping on validation dice.
Everything is reproducible from (seed, config, single device): sample
order, augmentation draws and weight init all derive from the recorded
seed.

Checkpoints are versioned dicts carrying the architecture's fingerprint
and its full text form, so a checkpoint can be loaded without the code
that produced it agreeing on defaults -- and refuses to load against a
different architecture.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .data import FundusSample, augment
from .loss import generalized_dice_loss_from_logits, one_hot_target
from .metrics import (
    CDR_SCREEN_THRESHOLD,
    METRIC_NAMES,
    STRUCTURES,
    CdrResult,
    aggregate,
    compute_cdr,
    evaluate_pair,
)
from .model import DenseEncoderDecoder, build_network
from .netspec import NetworkSpec, from_text, to_text

CHECKPOINT_FORMAT_VERSION = 1


class CompatibilityError(Exception):
    """Checkpoint and architecture do not match."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 2
    learning_rate: float = 1e-3
    lr_decay: float = 0.95
    seed: int = 0
    skip_mode: str = "concat"
    augmentation: bool = False
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning_rate must be > 0 and lr_decay in (0, 1]")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass(frozen=True)
class CheckpointMeta:
    fingerprint: str
    epoch: int
    metrics: dict
    seed: int
    format_version: int = CHECKPOINT_FORMAT_VERSION


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    train_loss: float
    val_dice_od: float
    val_dice_oc: float


def history_to_text(rows: list[HistoryRow]) -> str:
    lines = ["# epoch train_loss val_dice_od val_dice_oc"]
    for r in rows:
        lines.append(f"{r.epoch} {r.train_loss!r} {r.val_dice_od!r} {r.val_dice_oc!r}")
    return "\n".join(lines) + "\n"


def history_from_text(text: str) -> list[HistoryRow]:
    rows = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        e, tl, od, oc = ln.split()
        rows.append(HistoryRow(int(e), float(tl), float(od), float(oc)))
    return rows


def _to_input_tensor(image: np.ndarray) -> torch.Tensor:
    """Standardize each channel to zero mean, unit variance.

    Conditioning the input this way is what lets the loss's very small
    class-weighted gradients train at a conventional learning rate; raw
    [0, 1] intensities converge far slower.
    """
    x = torch.from_numpy(image.astype(np.float32)).permute(2, 0, 1) / 255.0
    mean = x.mean(dim=(1, 2), keepdim=True)
    std = x.std(dim=(1, 2), keepdim=True).clamp_min(1e-6)
    return (x - mean) / std


def _check_shapes(samples: list[FundusSample], spec: NetworkSpec, what: str) -> None:
    want = (spec.input_shape.height, spec.input_shape.width)
    for s in samples:
        if s.image.shape[:2] != want:
            raise ValueError(
                f"{what} sample {s.id!r} is {s.image.shape[:2]}, spec wants {want}"
            )


def _dice_from_labels(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    scores = evaluate_pair(pred, truth)
    return scores["disc"]["dice"], scores["cup"]["dice"]


@torch.no_grad()
def _validation_dice(net: DenseEncoderDecoder, samples: list[FundusSample]) -> tuple[float, float]:
    od, oc = [], []
    for s in samples:
        probs = net.predict_probs(_to_input_tensor(s.image).unsqueeze(0))[0].numpy()
        pred = np.argmax(probs, axis=0).astype(np.uint8)
        d_od, d_oc = _dice_from_labels(pred, s.labels)
        od.append(d_od)
        oc.append(d_oc)
    return float(np.mean(od)), float(np.mean(oc))


def _make_checkpoint(
    spec: NetworkSpec, state_dict, epoch: int, metrics: dict, config: TrainConfig, diverged: bool
) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "fingerprint": spec.fingerprint(),
        "spec_text": to_text(spec),
        "state_dict": state_dict,
        "epoch": epoch,
        "metrics": metrics,
        "seed": config.seed,
        "config": asdict(config),
        "diverged": diverged,
    }


def train(
    spec: NetworkSpec,
    train_set: list[FundusSample],
    val_set: list[FundusSample],
    config: TrainConfig,
    log=None,
) -> tuple[dict, list[HistoryRow]]:
    """Fit the network; returns (checkpoint dict, per-epoch history).

    The checkpoint holds the best-validation weights (mean of disc and cup
    dice).  An empty ``val_set`` validates against the training set
    itself, which keeps the early-stopping machinery defined.  Non-finite
    loss trips the divergence guard: training aborts and the last good
    weights are returned with ``diverged`` set in the checkpoint.
    """
    if not train_set:
        raise ValueError("train set is empty")
    _check_shapes(train_set, spec, "train")
    _check_shapes(val_set, spec, "val")
    val_samples = val_set or train_set

    torch.manual_seed(config.seed)
    net = build_network(spec, seed=config.seed)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=config.lr_decay)
    rng = np.random.default_rng(config.seed)

    targets = [one_hot_target(torch.from_numpy(s.labels.astype(np.int64)), spec.num_classes)[0]
               for s in train_set]

    best_state = copy.deepcopy(net.state_dict())
    best_score = -math.inf
    best_epoch = 0
    best_metrics = {"val_dice_od": 0.0, "val_dice_oc": 0.0}
    bad_epochs = 0
    diverged = False
    history: list[HistoryRow] = []

    for epoch in range(1, config.epochs + 1):
        net.train()
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch_ids = order[start : start + config.batch_size]
            xs, ys = [], []
            for i in batch_ids:
                s = train_set[i]
                y = targets[i]
                if config.augmentation:
                    s = augment(s, AUGMENT_TRAIN_OPS, seed=int(rng.integers(2**31)))
                    y = one_hot_target(
                        torch.from_numpy(s.labels.astype(np.int64)), spec.num_classes
                    )[0]
                xs.append(_to_input_tensor(s.image))
                ys.append(y)
            x = torch.stack(xs)
            y = torch.stack(ys)
            logits = net(x)
            loss = generalized_dice_loss_from_logits(logits, y)
            if not torch.isfinite(loss):
                diverged = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())
        if diverged:
            if log:
                log(f"epoch {epoch}: non-finite loss, aborting with last good weights")
            break
        sched.step()

        val_od, val_oc = _validation_dice(net, val_samples)
        train_loss = float(np.mean(epoch_losses))
        history.append(HistoryRow(epoch, train_loss, val_od, val_oc))
        if log:
            log(f"epoch {epoch}: loss {train_loss:.4f} val dice od {val_od:.4f} oc {val_oc:.4f}")

        score = 0.5 * (val_od + val_oc)
        if score > best_score:
            best_score = score
            best_state = copy.deepcopy(net.state_dict())
            best_epoch = epoch
            best_metrics = {"val_dice_od": val_od, "val_dice_oc": val_oc}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.early_stop_patience:
                if log:
                    log(f"early stop at epoch {epoch} (no improvement for {bad_epochs})")
                break

    ckpt = _make_checkpoint(spec, best_state, best_epoch, best_metrics, config, diverged)
    return ckpt, history


AUGMENT_TRAIN_OPS = ("hflip", "vflip", "rotate90")


def overfit_single(
    spec: NetworkSpec,
    sample: FundusSample,
    iterations: int,
    learning_rate: float = 1e-3,
    seed: int = 0,
    log=None,
):
    """Drive the loss to zero on one sample; the standard trainability probe.

    Returns an :class:`OverfitTrace` with per-iteration loss and the dice
    of the argmax decoding for both structures.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    _check_shapes([sample], spec, "overfit")

    torch.manual_seed(seed)
    net = build_network(spec, seed=seed)
    opt = torch.optim.Adam(net.parameters(), lr=learning_rate)
    x = _to_input_tensor(sample.image).unsqueeze(0)
    y = one_hot_target(torch.from_numpy(sample.labels.astype(np.int64)), spec.num_classes)

    losses, dice_od, dice_oc = [], [], []
    for it in range(1, iterations + 1):
        logits = net(x)
        loss = generalized_dice_loss_from_logits(logits, y)
        if not torch.isfinite(loss):
            break
        opt.zero_grad()
        loss.backward()
        opt.step()
        pred = np.argmax(logits.detach()[0].numpy(), axis=0).astype(np.uint8)
        d_od, d_oc = _dice_from_labels(pred, sample.labels)
        losses.append(loss.item())
        dice_od.append(d_od)
        dice_oc.append(d_oc)
        if log and (it % 20 == 0 or it == 1):
            log(f"iter {it}: loss {loss.item():.4f} dice od {d_od:.3f} oc {d_oc:.3f}")
    return OverfitTrace(losses, dice_od, dice_oc)


@dataclass(frozen=True)
class OverfitTrace:
    losses: list[float]
    dice_od: list[float]
    dice_oc: list[float]

    def __len__(self):
        return len(self.losses)

    def smoothed_losses(self, window: int = 5) -> list[float]:
        out = []
        for i in range(len(self.losses)):
            lo = max(0, i - window + 1)
            out.append(float(np.mean(self.losses[lo : i + 1])))
        return out


# --------------------------------------------------------------------------
# checkpoint IO

def save_checkpoint(ckpt: dict, path) -> None:
    torch.save(ckpt, path)


def load_checkpoint(path, spec: NetworkSpec | None = None) -> tuple[DenseEncoderDecoder, CheckpointMeta]:
    """Rebuild the network from a checkpoint file.

    When ``spec`` is given its fingerprint must equal the stored one;
    otherwise the architecture embedded in the checkpoint is used.
    """
    try:
        ckpt = torch.load(path, map_location="cpu")
    except Exception as err:
        raise CompatibilityError(f"cannot read checkpoint {path}: {err}") from err
    version = ckpt.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CompatibilityError(
            f"checkpoint format {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    stored = from_text(ckpt["spec_text"])
    if stored.fingerprint() != ckpt["fingerprint"]:
        raise CompatibilityError("checkpoint fingerprint does not match its own spec text")
    if spec is not None and spec.fingerprint() != ckpt["fingerprint"]:
        raise CompatibilityError(
            "checkpoint was trained on a different architecture "
            f"({ckpt['fingerprint'][:12]} != {spec.fingerprint()[:12]})"
        )
    net = DenseEncoderDecoder(stored)
    net.load_state_dict(ckpt["state_dict"])
    net.eval()
    meta = CheckpointMeta(
        fingerprint=ckpt["fingerprint"],
        epoch=int(ckpt["epoch"]),
        metrics=dict(ckpt["metrics"]),
        seed=int(ckpt["seed"]),
        format_version=version,
    )
    return net, meta


# --------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class ImageResult:
    id: str
    scores: dict  # structure -> metric name -> value
    cdr: float | None
    screen_positive: bool | None


@dataclass
class EvalReport:
    """Per-image scores plus dataset aggregates, re-derivable from itself."""

    rows: list[ImageResult]
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = self.recompute_aggregates()

    def recompute_aggregates(self) -> dict:
        return aggregate([r.scores for r in self.rows])

    def verify(self, tol: float = 1e-12) -> None:
        """Check internal consistency: aggregates are the per-image means and
        every row satisfies the metric identities that tie the six scores
        together.  A report whose numbers were edited by hand fails here."""
        fresh = self.recompute_aggregates()
        for s in STRUCTURES:
            for m in METRIC_NAMES:
                if abs(fresh[s][m] - self.aggregates[s][m]) > tol:
                    raise ValueError(
                        f"aggregate {s}/{m} inconsistent: stored "
                        f"{self.aggregates[s][m]!r}, recomputed {fresh[s][m]!r}"
                    )
        for r in self.rows:
            for s in STRUCTURES:
                sc = r.scores[s]
                for m in METRIC_NAMES:
                    if not 0.0 <= sc[m] <= 1.0:
                        raise ValueError(f"row {r.id} {s}/{m} out of range: {sc[m]!r}")
                jc = sc["jaccard"]
                if abs(sc["overlap_error"] - (1.0 - jc)) > tol:
                    raise ValueError(f"row {r.id} {s}: overlap error is not 1 - JC")
                if abs(sc["dice"] - 2.0 * jc / (1.0 + jc)) > tol:
                    raise ValueError(f"row {r.id} {s}: dice is not 2 JC / (1 + JC)")
                ba = (sc["sensitivity"] + sc["specificity"]) / 2.0
                if abs(sc["balanced_accuracy"] - ba) > tol:
                    raise ValueError(
                        f"row {r.id} {s}: balanced accuracy is not the mean of Sen and Sp"
                    )
            if r.cdr is not None and not 0.0 <= r.cdr:
                raise ValueError(f"row {r.id}: negative cdr {r.cdr!r}")

    @property
    def screen_counts(self) -> tuple[int, int]:
        flagged = sum(1 for r in self.rows if r.screen_positive)
        measurable = sum(1 for r in self.rows if r.screen_positive is not None)
        return flagged, measurable

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["id"]
        for s in STRUCTURES:
            header += [f"{s}_{m}" for m in METRIC_NAMES]
        header += ["cdr", "screen_positive"]
        writer.writerow(header)
        for r in self.rows:
            row = [r.id]
            for s in STRUCTURES:
                row += [repr(r.scores[s][m]) for m in METRIC_NAMES]
            row.append("none" if r.cdr is None else repr(r.cdr))
            row.append("none" if r.screen_positive is None else str(r.screen_positive))
            writer.writerow(row)
        return buf.getvalue()

    @staticmethod
    def from_csv_text(text: str) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        want = ["id"]
        for s in STRUCTURES:
            want += [f"{s}_{m}" for m in METRIC_NAMES]
        want += ["cdr", "screen_positive"]
        if header != want:
            raise ValueError(f"unexpected report columns: {header}")
        rows = []
        for rec in reader:
            scores = {}
            k = 1
            for s in STRUCTURES:
                scores[s] = {m: float(rec[k + j]) for j, m in enumerate(METRIC_NAMES)}
                k += len(METRIC_NAMES)
            cdr = None if rec[k] == "none" else float(rec[k])
            screen = None if rec[k + 1] == "none" else rec[k + 1] == "True"
            rows.append(ImageResult(rec[0], scores, cdr, screen))
        return EvalReport(rows)

    def to_table_text(self) -> str:
        """Aggregate table: DC, JC, Sen, Sp per structure plus the E/BA pair."""
        out = io.StringIO()
        print(f"{'structure':<10}{'DC':>9}{'JC':>9}{'Sen':>9}{'Sp':>9}{'E':>9}{'BA':>9}", file=out)
        order = ("dice", "jaccard", "sensitivity", "specificity", "overlap_error", "balanced_accuracy")
        for s in STRUCTURES:
            vals = "".join(f"{self.aggregates[s][m]:>9.4f}" for m in order)
            print(f"{s:<10}{vals}", file=out)
        flagged, measurable = self.screen_counts
        print(f"screen positive (cdr > {CDR_SCREEN_THRESHOLD}): {flagged}/{measurable}", file=out)
        return out.getvalue()


def decode_labels(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over (C, H, W) probabilities; ties resolve to the
    lowest class index."""
    return np.argmax(probs, axis=0).astype(np.uint8)


def evaluate(net: DenseEncoderDecoder, samples: list[FundusSample]) -> EvalReport:
    """Score a trained network over a sample list."""
    if not samples:
        raise ValueError("nothing to evaluate")
    _check_shapes(samples, net.spec, "eval")
    rows = []
    for s in samples:
        probs = net.predict_probs(_to_input_tensor(s.image).unsqueeze(0))[0].numpy()
        pred = decode_labels(probs)
        result = compute_cdr(pred)
        rows.append(ImageResult(s.id, evaluate_pair(pred, s.labels), result.cdr, result.screen_positive))
    return EvalReport(rows)


@dataclass(frozen=True)
class Prediction:
    labels: np.ndarray  # at network resolution
    probs: np.ndarray  # (C, H, W) at network resolution
    cdr: CdrResult
    source_labels: np.ndarray | None  # at input resolution when upsampling applied


def predict(
    net: DenseEncoderDecoder,
    image: np.ndarray,
    upsample_to_source: bool = True,
) -> Prediction:
    """Segment one RGB image of any size.

    The image is resized to the network's input resolution (bilinear),
    decoded by per-pixel argmax, and the cup-to-disc ratio measured on the
    decoded map.  With ``upsample_to_source`` the label map is also mapped
    back to the original resolution by nearest neighbor.
    """
    from PIL import Image as PILImage

    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got {image.shape}")
    side = net.spec.input_shape.height
    src_h, src_w = image.shape[:2]
    resized = image
    if (src_h, src_w) != (side, side):
        resized = np.asarray(
            PILImage.fromarray(image.astype(np.uint8)).resize((side, side), PILImage.BILINEAR)
        )
    probs = net.predict_probs(_to_input_tensor(resized).unsqueeze(0))[0].numpy()
    labels = decode_labels(probs)
    result = compute_cdr(labels)
    source_labels = None
    if upsample_to_source and (src_h, src_w) != (side, side):
        source_labels = np.asarray(
            PILImage.fromarray(labels).resize((src_w, src_h), PILImage.NEAREST), dtype=np.uint8
        )
    return Prediction(labels, probs, result, source_labels)
