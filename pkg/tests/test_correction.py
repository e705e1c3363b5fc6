import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisymatch.correction import (
    advance_epoch,
    begin_piece,
    corrected_labels,
    init_state,
    piece_seed_sequence,
    record_prediction,
    record_predictions,
    state_from_json,
    state_to_json,
)


def _fill_epoch(state, value):
    record_predictions(state, np.arange(state.n), np.full(state.n, value))


def test_initial_labels_are_one():
    state = init_state(6)
    assert np.all(state.y == 1.0)
    assert state.piece_index == 1 and state.epoch_in_piece == 1


def test_record_validates_range_and_duplicates():
    state = init_state(4)
    with pytest.raises(ValueError):
        record_prediction(state, 0, 1.5)
    record_prediction(state, 0, 0.4)
    with pytest.raises(RuntimeError):
        record_prediction(state, 0, 0.4)


def test_advance_requires_predictions():
    state = init_state(4)
    with pytest.raises(RuntimeError):
        advance_epoch(state)


def test_freeze_epochs_keep_labels_bit_identical():
    state = init_state(5, freeze_epochs=2, piece_lengths=(6,))
    start = state.y.copy()
    _fill_epoch(state, 0.3)
    advance_epoch(state)  # entering epoch 2, still frozen
    assert np.array_equal(state.y, start)
    assert state.epoch_in_piece == 2


def test_first_unfreeze_adopts_raw_predictions():
    state = init_state(5, freeze_epochs=2, piece_lengths=(6,))
    _fill_epoch(state, 0.9)
    advance_epoch(state)
    _fill_epoch(state, 0.12)
    advance_epoch(state)  # entering epoch 3 = freeze_epochs + 1 of piece 1
    assert np.all(state.y == 0.12)


def test_momentum_blend_arithmetic():
    state = init_state(1, momentum=0.8, freeze_epochs=1, piece_lengths=(8,))
    _fill_epoch(state, 0.5)
    advance_epoch(state)  # epoch 2 = freeze+1: adopt 0.5? no: freeze_epochs=1 so epoch 2 adopts raw
    assert state.y[0] == 0.5
    state.y[:] = 1.0
    _fill_epoch(state, 0.5)
    advance_epoch(state)  # now a momentum epoch
    assert state.y[0] == pytest.approx(0.9, abs=1e-15)


def test_momentum_geometric_convergence():
    beta = 0.8
    state = init_state(3, momentum=beta, freeze_epochs=1, piece_lengths=(30,))
    c = 0.25
    _fill_epoch(state, c)
    advance_epoch(state)  # adopt raw? epoch 2 == freeze+1 and piece 1: y = c already
    state.y[:] = 1.0  # restart the gap to watch the decay
    gap0 = abs(state.y[0] - c)
    for t in range(1, 12):
        _fill_epoch(state, c)
        advance_epoch(state)
        assert abs(state.y[0] - c) == pytest.approx(beta**t * gap0, abs=1e-12)


def test_unseen_pairs_keep_labels():
    state = init_state(4, freeze_epochs=1, piece_lengths=(5,))
    record_predictions(state, np.array([0, 1]), np.array([0.2, 0.3]))
    advance_epoch(state)  # adopt raw for seen pairs only
    assert state.y[0] == 0.2 and state.y[1] == 0.3
    assert state.y[2] == 1.0 and state.y[3] == 1.0


def test_threshold_filter():
    state = init_state(3, threshold=0.1)
    state.y = np.array([0.05, 0.10, 0.9])
    labels = corrected_labels(state)
    assert labels[0] == 0.0
    assert labels[1] == 0.10  # strict inequality keeps the boundary
    assert labels[2] == 0.9


@settings(max_examples=60, deadline=None)
@given(
    preds=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=5, max_size=25),
    eps_pct=st.integers(min_value=0, max_value=60),
)
def test_labels_stay_in_unit_interval_and_filter_gap(preds, eps_pct):
    eps = eps_pct / 100.0
    state = init_state(1, threshold=eps, freeze_epochs=2, piece_lengths=(4, 4, 4))
    for p in preds:
        if state.finished:
            break
        record_prediction(state, 0, p)
        advance_epoch(state)
        assert 0.0 <= state.y[0] <= 1.0
        lab = corrected_labels(state)[0]
        assert lab == 0.0 or lab >= eps


def test_piece_rollover_and_freeze_carry():
    state = init_state(2, freeze_epochs=1, piece_lengths=(2, 3))
    _fill_epoch(state, 0.4)
    advance_epoch(state)  # piece 1 epoch 2 (freeze=1 so adopt raw at epoch 2)
    assert state.y[0] == 0.4
    _fill_epoch(state, 0.6)
    advance_epoch(state)  # rolls into piece 2 epoch 1, frozen: labels carried
    assert state.piece_index == 2 and state.epoch_in_piece == 1
    assert state.y[0] == 0.4
    _fill_epoch(state, 0.8)
    advance_epoch(state)  # piece 2 epoch 2 > freeze: momentum branch (not raw adopt)
    assert state.y[0] == pytest.approx(0.8 * 0.4 + 0.2 * 0.8, abs=1e-15)


def test_begin_piece_invokes_hook_once_per_boundary():
    state = init_state(2, freeze_epochs=1, piece_lengths=(1, 1, 1))
    calls = []
    for _ in range(2):
        _fill_epoch(state, 0.5)
        advance_epoch(state)
        if not state.finished and state.epoch_in_piece == 1 and state.piece_index >= 2:
            begin_piece(state, calls.append)
    assert calls == [2, 3]


def test_begin_piece_guards():
    state = init_state(2, piece_lengths=(3, 3))
    with pytest.raises(RuntimeError):
        begin_piece(state, lambda j: None)


def test_single_piece_never_reinitializes():
    state = init_state(2, freeze_epochs=0, piece_lengths=(4,))
    boundaries = 0
    for _ in range(4):
        if state.finished:
            break
        _fill_epoch(state, 0.5)
        advance_epoch(state)
        if not state.finished and state.epoch_in_piece == 1:
            boundaries += 1
    assert boundaries == 0
    assert state.finished


def test_finished_schedule_rejects_further_updates():
    state = init_state(2, piece_lengths=(1,))
    _fill_epoch(state, 0.5)
    advance_epoch(state)
    assert state.finished
    with pytest.raises(RuntimeError):
        advance_epoch(state)


def test_piece_seed_reproducible_and_distinct():
    a = np.random.default_rng(piece_seed_sequence(7, 2)).standard_normal(4)
    b = np.random.default_rng(piece_seed_sequence(7, 2)).standard_normal(4)
    c = np.random.default_rng(piece_seed_sequence(7, 3)).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_json_round_trip():
    state = init_state(4, momentum=0.7, threshold=0.2, freeze_epochs=1, piece_lengths=(2, 5))
    _fill_epoch(state, 0.37)
    advance_epoch(state)
    back = state_from_json(state_to_json(state))
    assert np.array_equal(back.y, state.y)
    assert np.array_equal(back.preds, state.preds)
    assert np.array_equal(back.has_pred, state.has_pred)
    assert back.piece_index == state.piece_index
    assert back.epoch_in_piece == state.epoch_in_piece
    assert back.piece_lengths == state.piece_lengths
    assert back.momentum == state.momentum


def test_init_state_validation():
    with pytest.raises(ValueError):
        init_state(3, momentum=1.0)
    with pytest.raises(ValueError):
        init_state(3, threshold=1.0)
    with pytest.raises(ValueError):
        init_state(3, piece_lengths=())
    with pytest.raises(ValueError):
        init_state(3, freeze_epochs=-1)
