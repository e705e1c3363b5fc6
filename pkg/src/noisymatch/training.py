"""Deterministic training loop with label correction, plus retrieval metrics.

One run walks a schedule of training pieces; inside each piece, epochs of
shuffled fixed-size batches compute matching probabilities, record per-pair
predictions, read the thresholded soft labels, evaluate the selected loss,
and take one SGD step per batch. At epoch boundaries the soft labels are
refreshed; at piece boundaries the encoder is re-initialized from a
piece-derived seed while the labels carry over. Everything is a pure
function of the config and master seed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import correction, losses, matching
from .data import PairedDataset

LOSS_KINDS = ("acl", "active_only", "complementary_only", "triplet_hn", "soft_margin")

HIST_BINS = 32

_SPLIT_STREAM = 0xA110
_SHUFFLE_STREAM = 0x5F1E

_MODEL_MAGIC = b"NMMODEL1"
_MODEL_HEADER = struct.Struct("<8sIQQQ")


class TrainingDivergedError(RuntimeError):
    """Raised when a batch loss stops being finite; carries a diagnostic snapshot."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of a training run. See field comments for semantics."""

    batch_size: int = 128
    learning_rate: float = 0.0005
    lr_decay_epoch: int = 15  # epoch within the final piece at which lr decays
    lr_decay_factor: float = 0.1
    piece_lengths: tuple = (7, 7, 7, 32)
    freeze_epochs: int = 2
    label_momentum: float = 0.8
    label_threshold: float = 0.1
    temperature: float = 0.05
    comp_weight: float = 5.0
    loss: str = "acl"
    comp_q: float = 1.0  # fixed exponent for loss == "complementary_only"
    margin: float = 0.2
    curve: float = 10.0
    use_scc: bool | None = None  # None: on for label-aware losses, off otherwise
    seed: int = 0
    dim: int = 16
    val_fraction: float = 0.1
    sgd_momentum: float = 0.9

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError(f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}")
        if self.lr_decay_epoch < 1:
            raise ValueError(f"lr_decay_epoch must be >= 1, got {self.lr_decay_epoch}")
        if not self.piece_lengths or any(int(e) < 1 for e in self.piece_lengths):
            raise ValueError(f"piece_lengths must be nonempty positive, got {self.piece_lengths}")
        if self.freeze_epochs < 0:
            raise ValueError(f"freeze_epochs must be >= 0, got {self.freeze_epochs}")
        if not 0 < self.label_momentum < 1:
            raise ValueError(f"label_momentum must be in (0, 1), got {self.label_momentum}")
        if not 0 <= self.label_threshold < 1:
            raise ValueError(f"label_threshold must be in [0, 1), got {self.label_threshold}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.comp_weight < 0:
            raise ValueError(f"comp_weight must be >= 0, got {self.comp_weight}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if not 0 <= self.comp_q <= 1:
            raise ValueError(f"comp_q must be in [0, 1], got {self.comp_q}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.curve <= 1:
            raise ValueError(f"curve must be > 1, got {self.curve}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if not 0 <= self.sgd_momentum < 1:
            raise ValueError(f"sgd_momentum must be in [0, 1), got {self.sgd_momentum}")

    @property
    def scc_enabled(self) -> bool:
        if self.use_scc is not None:
            return self.use_scc
        return self.loss in ("acl", "soft_margin")

    @property
    def total_epochs(self) -> int:
        return int(sum(self.piece_lengths))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["piece_lengths"] = list(self.piece_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["piece_lengths"] = tuple(d["piece_lengths"])
        return cls(**d)


@dataclass
class EvalResult:
    """Bidirectional recalls (percent) plus optional correction metrics."""

    r1_i2t: float
    r5_i2t: float
    r10_i2t: float
    r1_t2i: float
    r5_t2i: float
    r10_t2i: float
    rsum: float
    correction_auc: float | None = None
    mean_label_clean: float | None = None
    mean_label_noisy: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class EpochRecord:
    """One history row: training loss, validation recalls, label histograms."""

    epoch: int
    piece: int
    epoch_in_piece: int
    loss_mean: float
    recalls: EvalResult
    hist_clean: list
    hist_noisy: list


@dataclass
class TrainResult:
    params: matching.EncoderParams
    state: correction.CorrespondenceState
    history: list
    train_indices: np.ndarray
    val_indices: np.ndarray
    velocity: tuple


def _rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream, index)))


def _recall_ranks(s: np.ndarray) -> np.ndarray:
    """Rank of the diagonal entry within each row, ties broken by lower index."""
    n = s.shape[0]
    diag = s[np.arange(n), np.arange(n)]
    greater = (s > diag[:, None]).sum(axis=1)
    tied_before = ((s == diag[:, None]) & (np.arange(n)[None, :] < np.arange(n)[:, None])).sum(
        axis=1
    )
    return 1 + greater + tied_before


def _recalls_from_similarity(s: np.ndarray) -> tuple:
    rows = _recall_ranks(s)
    cols = _recall_ranks(s.T)
    out = []
    for ranks in (rows, cols):
        for k in (1, 5, 10):
            out.append(float(100.0 * np.mean(ranks <= k)))
    return tuple(out)


def evaluate(params: matching.EncoderParams, test_ds: PairedDataset) -> EvalResult:
    """Retrieval recalls over a clean test set.

    The test set must carry the identity pairing; the per-query rank of the
    true match uses descending similarity with ties broken by lower index.
    """
    if np.any(test_ds.pairing != np.arange(test_ds.n)):
        raise ValueError("evaluate requires a clean test set (identity pairing)")
    img_emb, txt_emb = matching.encode(params, test_ds.images, test_ds.texts)
    s = matching.similarity_matrix(img_emb, txt_emb)
    r = _recalls_from_similarity(s)
    return EvalResult(*r, rsum=float(sum(r)))


def correction_quality(state: correction.CorrespondenceState, ds: PairedDataset):
    """(AUC, mean clean label, mean noisy label) of the final soft labels.

    AUC scores 1 - y against the ground-truth mismatch flags; it is None
    when all pairs are clean or all are noisy.
    """
    idx = state.pair_indices if state.pair_indices is not None else np.arange(ds.n)
    flags = ds.noise_flags[idx]
    y = state.y
    n_pos = int(flags.sum())
    n_neg = int((~flags).sum())
    mean_clean = float(y[~flags].mean()) if n_neg else None
    mean_noisy = float(y[flags].mean()) if n_pos else None
    if n_pos == 0 or n_neg == 0:
        return None, mean_clean, mean_noisy
    ranks = rankdata(1.0 - y)
    auc = (ranks[flags].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc), mean_clean, mean_noisy


def _label_histograms(state: correction.CorrespondenceState, flags: np.ndarray):
    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    hist_clean, _ = np.histogram(state.y[~flags], bins=edges)
    hist_noisy, _ = np.histogram(state.y[flags], bins=edges)
    return [int(c) for c in hist_clean], [int(c) for c in hist_noisy]


def _batch_objective(cfg: TrainConfig, ctx: matching.SimilarityContext, y_hat: np.ndarray):
    """Dispatch the configured loss over one batch. Returns a LossEvaluation."""
    if cfg.loss == "acl":
        return losses.batch_loss(
            ctx, y_hat, losses.LossConfig(cfg.temperature, cfg.comp_weight)
        )
    if cfg.loss == "active_only":
        return losses.batch_active(ctx, y_hat)
    if cfg.loss == "complementary_only":
        return losses.batch_complementary(ctx, cfg.comp_q)
    if cfg.loss == "triplet_hn":
        return losses.batch_triplet(ctx.s, cfg.margin)
    if cfg.loss == "soft_margin":
        return losses.batch_triplet(ctx.s, losses.soft_margins(y_hat, cfg.margin, cfg.curve))
    raise ValueError(f"unknown loss {cfg.loss!r}")


@dataclass
class Snapshot:
    """Everything needed to resume a run mid-schedule, bit-exactly."""

    config: TrainConfig
    global_epoch: int  # completed epochs
    params: matching.EncoderParams
    velocity: tuple
    state: correction.CorrespondenceState
    history: list


def train(
    ds: PairedDataset,
    cfg: TrainConfig,
    resume: Snapshot | None = None,
    epoch_hook=None,
) -> TrainResult:
    """Run the full piece schedule on a (possibly noisy) dataset.

    Batches drop the ragged tail so every step sees exactly ``batch_size``
    pairs. A held-out fraction of pairs is evaluated with its clean identity
    pairing every epoch for the history curves; those pairs never train and
    never touch the labels. ``epoch_hook`` (if given) receives a
    :class:`Snapshot` after every completed epoch.
    """
    cfg.validate()
    ds.validate()
    n = ds.n

    split_rng = _rng(cfg.seed, _SPLIT_STREAM)
    perm = split_rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    if train_idx.size < cfg.batch_size:
        raise ValueError(
            f"training split has {train_idx.size} pairs, fewer than batch_size {cfg.batch_size}"
        )
    val_images = ds.images[val_idx]
    val_texts = ds.texts[val_idx]
    train_flags = ds.noise_flags[train_idx]

    if resume is not None:
        if resume.config != cfg:
            raise ValueError("snapshot config does not match the requested config")
        params = resume.params.copy()
        vel_v, vel_t = resume.velocity[0].copy(), resume.velocity[1].copy()
        state = resume.state.copy()
        history = list(resume.history)
        done = resume.global_epoch
    else:
        params = matching.init_encoder_params(
            ds.images.shape[1], ds.texts.shape[1], cfg.dim,
            correction.piece_seed_sequence(cfg.seed, 1),
        )
        vel_v = np.zeros_like(params.w_v)
        vel_t = np.zeros_like(params.w_t)
        state = correction.init_state(
            train_idx.size,
            momentum=cfg.label_momentum,
            threshold=cfg.label_threshold,
            freeze_epochs=cfg.freeze_epochs,
            piece_lengths=cfg.piece_lengths,
            pair_indices=train_idx,
        )
        history = []
        done = 0

    n_batches = train_idx.size // cfg.batch_size
    num_pieces = len(cfg.piece_lengths)

    while done < cfg.total_epochs and not state.finished:
        epoch_no = done + 1
        piece = state.piece_index
        t = state.epoch_in_piece
        lr = cfg.learning_rate
        if piece == num_pieces and t >= cfg.lr_decay_epoch:
            lr *= cfg.lr_decay_factor

        order = _rng(cfg.seed, _SHUFFLE_STREAM, epoch_no).permutation(train_idx.size)
        ones = np.ones(cfg.batch_size)
        loss_sum = 0.0
        for b in range(n_batches):
            slots = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            orig = train_idx[slots]
            imgs = ds.images[orig]
            txts = ds.texts[ds.pairing[orig]]
            if not (np.all(np.isfinite(params.w_v)) and np.all(np.isfinite(params.w_t))):
                raise TrainingDivergedError(
                    "encoder weights are no longer finite",
                    {"epoch": epoch_no, "piece": piece, "batch": b, "lr": lr},
                )
            try:
                ctx = matching.context_from_embeddings(params, imgs, txts, cfg.temperature)
            except ValueError as exc:
                # a non-finite or fully saturated forward pass mid-training is
                # a divergence, not a caller error
                raise TrainingDivergedError(
                    f"forward pass failed: {exc}",
                    {
                        "epoch": epoch_no,
                        "piece": piece,
                        "batch": b,
                        "lr": lr,
                        "param_scale": float(np.abs(params.w_v).max()),
                    },
                ) from exc
            diag = np.arange(cfg.batch_size)
            p_hat = 0.5 * (ctx.p_row[diag, diag] + ctx.p_col[diag, diag])
            correction.record_predictions(state, slots, p_hat)
            if cfg.scc_enabled:
                y_hat = correction.corrected_labels(state)[slots]
            else:
                y_hat = ones
            ev = _batch_objective(cfg, ctx, y_hat)
            if not np.isfinite(ev.value) or not np.all(np.isfinite(ev.grad_s)):
                raise TrainingDivergedError(
                    "non-finite batch loss",
                    {
                        "epoch": epoch_no,
                        "piece": piece,
                        "batch": b,
                        "loss": ev.value,
                        "param_scale": float(np.abs(params.w_v).max()),
                    },
                )
            g_wv, g_wt = matching.encode_backward(params, imgs, txts, ev.grad_s)
            vel_v = cfg.sgd_momentum * vel_v + g_wv
            vel_t = cfg.sgd_momentum * vel_t + g_wt
            params.w_v -= lr * vel_v
            params.w_t -= lr * vel_t
            loss_sum += ev.value

        if val_idx.size:
            img_emb, txt_emb = matching.encode(params, val_images, val_texts)
            r = _recalls_from_similarity(matching.similarity_matrix(img_emb, txt_emb))
            recalls = EvalResult(*r, rsum=float(sum(r)))
        else:
            recalls = EvalResult(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        hist_clean, hist_noisy = _label_histograms(state, train_flags)
        history.append(
            EpochRecord(
                epoch=epoch_no,
                piece=piece,
                epoch_in_piece=t,
                loss_mean=loss_sum / n_batches,
                recalls=recalls,
                hist_clean=hist_clean,
                hist_noisy=hist_noisy,
            )
        )

        correction.advance_epoch(state)
        done += 1
        if not state.finished and state.piece_index > piece:

            def reinit(piece_index: int) -> None:
                fresh = matching.init_encoder_params(
                    ds.images.shape[1], ds.texts.shape[1], cfg.dim,
                    correction.piece_seed_sequence(cfg.seed, piece_index),
                )
                params.w_v[:] = fresh.w_v
                params.w_t[:] = fresh.w_t
                vel_v[:] = 0.0
                vel_t[:] = 0.0

            correction.begin_piece(state, reinit)

        if epoch_hook is not None:
            epoch_hook(
                Snapshot(
                    config=cfg,
                    global_epoch=done,
                    params=params.copy(),
                    velocity=(vel_v.copy(), vel_t.copy()),
                    state=state.copy(),
                    history=list(history),
                )
            )

    return TrainResult(
        params=params,
        state=state,
        history=history,
        train_indices=train_idx,
        val_indices=val_idx,
        velocity=(vel_v, vel_t),
    )


_HIST_COLS = [f"hist_clean_{b:02d}" for b in range(HIST_BINS)] + [
    f"hist_noisy_{b:02d}" for b in range(HIST_BINS)
]
_CSV_COLS = [
    "epoch",
    "piece",
    "epoch_in_piece",
    "loss_mean",
    "r1_i2t",
    "r5_i2t",
    "r10_i2t",
    "r1_t2i",
    "r5_t2i",
    "r10_t2i",
    "rsum",
] + _HIST_COLS


def export_history(history: list, path) -> None:
    """Write one CSV row per epoch; floats are emitted with full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLS)
        for rec in history:
            rc = rec.recalls
            row = [
                rec.epoch,
                rec.piece,
                rec.epoch_in_piece,
                repr(float(rec.loss_mean)),
                repr(float(rc.r1_i2t)),
                repr(float(rc.r5_i2t)),
                repr(float(rc.r10_i2t)),
                repr(float(rc.r1_t2i)),
                repr(float(rc.r5_t2i)),
                repr(float(rc.r10_t2i)),
                repr(float(rc.rsum)),
            ]
            row.extend(rec.hist_clean)
            row.extend(rec.hist_noisy)
            writer.writerow(row)


def load_history(path) -> list:
    """Inverse of :func:`export_history`; floats round-trip exactly."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _CSV_COLS:
            raise ValueError("unrecognized history CSV header")
        for row in reader:
            vals = dict(zip(header, row))
            recalls = EvalResult(
                r1_i2t=float(vals["r1_i2t"]),
                r5_i2t=float(vals["r5_i2t"]),
                r10_i2t=float(vals["r10_i2t"]),
                r1_t2i=float(vals["r1_t2i"]),
                r5_t2i=float(vals["r5_t2i"]),
                r10_t2i=float(vals["r10_t2i"]),
                rsum=float(vals["rsum"]),
            )
            out.append(
                EpochRecord(
                    epoch=int(vals["epoch"]),
                    piece=int(vals["piece"]),
                    epoch_in_piece=int(vals["epoch_in_piece"]),
                    loss_mean=float(vals["loss_mean"]),
                    recalls=recalls,
                    hist_clean=[int(vals[c]) for c in _HIST_COLS[:HIST_BINS]],
                    hist_noisy=[int(vals[c]) for c in _HIST_COLS[HIST_BINS:]],
                )
            )
    return out


def save_snapshot(snap: Snapshot, json_path, bin_path) -> None:
    """Persist a snapshot as a JSON/binary pair (weights and velocities raw)."""
    import json as _json

    w_v, w_t = snap.params.w_v, snap.params.w_t
    with open(bin_path, "wb") as fh:
        fh.write(
            _MODEL_HEADER.pack(_MODEL_MAGIC, 1, w_v.shape[0], w_t.shape[0], w_v.shape[1])
        )
        for arr in (w_v, w_t, snap.velocity[0], snap.velocity[1]):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = {
        "version": 1,
        "config": snap.config.to_dict(),
        "global_epoch": snap.global_epoch,
        "state": correction.state_to_json(snap.state),
        "history": _history_to_jsonable(snap.history),
    }
    with open(json_path, "w") as fh:
        _json.dump(payload, fh)


def load_snapshot(json_path, bin_path) -> Snapshot:
    import json as _json

    with open(json_path) as fh:
        payload = _json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported snapshot version {payload.get('version')!r}")
    cfg = TrainConfig.from_dict(payload["config"])
    with open(bin_path, "rb") as fh:
        header = fh.read(_MODEL_HEADER.size)
        magic, version, d_v, d_t, dim = _MODEL_HEADER.unpack(header)
        if magic != _MODEL_MAGIC or version != 1:
            raise ValueError("unrecognized model file")
        arrs = []
        for shape in ((d_v, dim), (d_t, dim), (d_v, dim), (d_t, dim)):
            count = shape[0] * shape[1]
            arrs.append(
                np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
            )
    return Snapshot(
        config=cfg,
        global_epoch=int(payload["global_epoch"]),
        params=matching.EncoderParams(arrs[0], arrs[1]),
        velocity=(arrs[2], arrs[3]),
        state=correction.state_from_json(payload["state"]),
        history=_history_from_jsonable(payload["history"]),
    )


def _history_to_jsonable(history: list) -> list:
    rows = []
    for rec in history:
        rows.append(
            {
                "epoch": rec.epoch,
                "piece": rec.piece,
                "epoch_in_piece": rec.epoch_in_piece,
                "loss_mean": rec.loss_mean,
                "recalls": rec.recalls.to_dict(),
                "hist_clean": rec.hist_clean,
                "hist_noisy": rec.hist_noisy,
            }
        )
    return rows


def _history_from_jsonable(rows: list) -> list:
    out = []
    for row in rows:
        rc = {k: v for k, v in row["recalls"].items()}
        out.append(
            EpochRecord(
                epoch=row["epoch"],
                piece=row["piece"],
                epoch_in_piece=row["epoch_in_piece"],
                loss_mean=row["loss_mean"],
                recalls=EvalResult(**rc),
                hist_clean=row["hist_clean"],
                hist_noisy=row["hist_noisy"],
            )
        )
    return out
