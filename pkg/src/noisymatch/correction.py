"""Self-refining correspondence correction.

Soft per-pair labels start at 1, freeze for a few epochs, then track the
model's own matching probabilities through an exponential moving average.
Training is cut into pieces; at each piece boundary the labels survive while
the model is re-initialized, so later pieces inherit the accumulated
correspondence knowledge without the memorized noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CorrespondenceState:
    """Soft labels and bookkeeping for the correction schedule.

    ``piece_index`` and ``epoch_in_piece`` are 1-based and designate the
    epoch currently being trained; labels for that epoch are already in
    ``y``. ``preds`` holds the latest recorded average matching probability
    of each pair; pairs never seen keep their label until a prediction
    exists.
    """

    y: np.ndarray  # (n,) soft labels in [0, 1]
    preds: np.ndarray  # (n,) latest recorded predictions
    has_pred: np.ndarray  # (n,) bool, whether preds[i] was ever recorded
    piece_index: int = 1
    epoch_in_piece: int = 1
    momentum: float = 0.8
    threshold: float = 0.1
    freeze_epochs: int = 2
    piece_lengths: tuple = (7, 7, 7, 32)
    finished: bool = False
    pair_indices: np.ndarray | None = None  # original dataset indices, if a subset
    _recorded_this_epoch: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._recorded_this_epoch is None:
            self._recorded_this_epoch = np.zeros(self.y.shape[0], dtype=bool)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def num_pieces(self) -> int:
        return len(self.piece_lengths)

    @property
    def total_epochs(self) -> int:
        return int(sum(self.piece_lengths))

    def global_epoch(self) -> int:
        """1-based index of the epoch currently being trained."""
        done = sum(self.piece_lengths[: self.piece_index - 1])
        return int(done + self.epoch_in_piece)

    def copy(self) -> "CorrespondenceState":
        out = CorrespondenceState(
            y=self.y.copy(),
            preds=self.preds.copy(),
            has_pred=self.has_pred.copy(),
            piece_index=self.piece_index,
            epoch_in_piece=self.epoch_in_piece,
            momentum=self.momentum,
            threshold=self.threshold,
            freeze_epochs=self.freeze_epochs,
            piece_lengths=self.piece_lengths,
            finished=self.finished,
            pair_indices=None if self.pair_indices is None else self.pair_indices.copy(),
        )
        out._recorded_this_epoch = self._recorded_this_epoch.copy()
        return out


def init_state(
    n: int,
    momentum: float = 0.8,
    threshold: float = 0.1,
    freeze_epochs: int = 2,
    piece_lengths=(7, 7, 7, 32),
    pair_indices: np.ndarray | None = None,
) -> CorrespondenceState:
    """Fresh state: all labels 1, no predictions, first epoch of first piece."""
    if not 0.0 < momentum < 1.0:
        raise ValueError(f"momentum must be in (0, 1), got {momentum}")
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {threshold}")
    if freeze_epochs < 0:
        raise ValueError(f"freeze_epochs must be >= 0, got {freeze_epochs}")
    piece_lengths = tuple(int(e) for e in piece_lengths)
    if not piece_lengths or any(e < 1 for e in piece_lengths):
        raise ValueError(f"piece_lengths must be nonempty positive ints, got {piece_lengths}")
    return CorrespondenceState(
        y=np.ones(n, dtype=np.float64),
        preds=np.zeros(n, dtype=np.float64),
        has_pred=np.zeros(n, dtype=bool),
        momentum=momentum,
        threshold=threshold,
        freeze_epochs=freeze_epochs,
        piece_lengths=piece_lengths,
        pair_indices=None if pair_indices is None else np.asarray(pair_indices, dtype=np.int64),
    )


def record_prediction(state: CorrespondenceState, i: int, p_hat: float) -> None:
    """Record pair i's average matching probability for the current epoch."""
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"prediction must be in [0, 1], got {p_hat}")
    if state._recorded_this_epoch[i]:
        raise RuntimeError(f"pair {i} already recorded this epoch")
    state.preds[i] = p_hat
    state.has_pred[i] = True
    state._recorded_this_epoch[i] = True


def record_predictions(state: CorrespondenceState, indices: np.ndarray, p_hats: np.ndarray) -> None:
    """Vectorized :func:`record_prediction` for one batch of pairs."""
    indices = np.asarray(indices)
    p_hats = np.asarray(p_hats, dtype=np.float64)
    if np.any((p_hats < 0.0) | (p_hats > 1.0)):
        raise ValueError("predictions must lie in [0, 1]")
    if np.any(state._recorded_this_epoch[indices]):
        raise RuntimeError("some pairs already recorded this epoch")
    state.preds[indices] = p_hats
    state.has_pred[indices] = True
    state._recorded_this_epoch[indices] = True


def advance_epoch(state: CorrespondenceState) -> CorrespondenceState:
    """Close the current epoch: update labels for the next one and step the clock.

    Label rules for the upcoming epoch t of piece j:
    freeze epochs (t <= freeze) keep the labels carried into the piece; the
    first post-freeze epoch of the first piece adopts the raw predictions
    (the all-ones start is uninformative); every other epoch blends,
    y <- momentum * y + (1 - momentum) * pred. Only pairs with a recorded
    prediction move. Rolls into the next piece when the current one ends and
    flags completion after the last epoch of the last piece.
    """
    if state.finished:
        raise RuntimeError("schedule already finished")
    if not state._recorded_this_epoch.any():
        raise RuntimeError("advance_epoch called before any prediction was recorded")

    j, t = state.piece_index, state.epoch_in_piece
    if t < state.piece_lengths[j - 1]:
        nj, nt = j, t + 1
    elif j < state.num_pieces:
        nj, nt = j + 1, 1
    else:
        state.finished = True
        state._recorded_this_epoch[:] = False
        return state

    if nt <= state.freeze_epochs:
        pass  # labels frozen: carried from the piece start
    elif nj == 1 and nt == state.freeze_epochs + 1:
        m = state.has_pred
        state.y[m] = state.preds[m]
    else:
        m = state.has_pred
        state.y[m] = state.momentum * state.y[m] + (1.0 - state.momentum) * state.preds[m]

    state.piece_index, state.epoch_in_piece = nj, nt
    state._recorded_this_epoch[:] = False
    return state


def corrected_labels(state: CorrespondenceState) -> np.ndarray:
    """Labels used by the loss: values below the threshold are zeroed out."""
    return np.where(state.y < state.threshold, 0.0, state.y)


def begin_piece(state: CorrespondenceState, reinit_hook) -> None:
    """Start a fresh piece: labels carry over, the model starts from scratch.

    Must be called right after :func:`advance_epoch` rolled into a new
    piece; invokes ``reinit_hook(piece_index)`` which is expected to
    re-initialize model parameters (and any optimizer state) with a
    piece-derived seed.
    """
    if state.finished:
        raise RuntimeError("schedule already finished")
    if state.epoch_in_piece != 1 or state.piece_index < 2:
        raise RuntimeError(
            f"begin_piece expects the first epoch of a later piece, "
            f"got piece {state.piece_index}, epoch {state.epoch_in_piece}"
        )
    reinit_hook(state.piece_index)


def piece_seed_sequence(master_seed: int, piece_index: int) -> np.random.SeedSequence:
    """Deterministic seed material for re-initializing piece ``piece_index``."""
    return np.random.SeedSequence((master_seed, 0x1EC3, piece_index))


def state_to_json(state: CorrespondenceState) -> str:
    """Serialize the state (losslessly for float64) to a JSON string."""
    payload = {
        "version": 1,
        "y": state.y.tolist(),
        "preds": state.preds.tolist(),
        "has_pred": state.has_pred.astype(int).tolist(),
        "piece_index": state.piece_index,
        "epoch_in_piece": state.epoch_in_piece,
        "momentum": state.momentum,
        "threshold": state.threshold,
        "freeze_epochs": state.freeze_epochs,
        "piece_lengths": list(state.piece_lengths),
        "finished": state.finished,
        "pair_indices": None if state.pair_indices is None else state.pair_indices.tolist(),
    }
    return json.dumps(payload)


def state_from_json(text: str) -> CorrespondenceState:
    """Inverse of :func:`state_to_json`."""
    payload = json.loads(text)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported state version {payload.get('version')!r}")
    state = CorrespondenceState(
        y=np.asarray(payload["y"], dtype=np.float64),
        preds=np.asarray(payload["preds"], dtype=np.float64),
        has_pred=np.asarray(payload["has_pred"], dtype=bool),
        piece_index=int(payload["piece_index"]),
        epoch_in_piece=int(payload["epoch_in_piece"]),
        momentum=float(payload["momentum"]),
        threshold=float(payload["threshold"]),
        freeze_epochs=int(payload["freeze_epochs"]),
        piece_lengths=tuple(payload["piece_lengths"]),
        finished=bool(payload["finished"]),
        pair_indices=None
        if payload["pair_indices"] is None
        else np.asarray(payload["pair_indices"], dtype=np.int64),
    )
    return state
