import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisymatch.data import (
    DatasetFormatError,
    GenConfig,
    generate_bimodal,
    inject_noise,
    load_dataset,
    save_dataset,
)


def test_generation_deterministic():
    cfg = GenConfig(n=10, latent_dim=4, d_v=6, d_t=5, seed=7)
    a = generate_bimodal(cfg)
    b = generate_bimodal(cfg)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.texts, b.texts)
    assert np.array_equal(a.pairing, b.pairing)


def test_identity_maps_make_equal_modalities():
    d = 5
    cfg = GenConfig(n=8, latent_dim=d, d_v=d, d_t=d, noise_std=0.0, seed=1)
    eye = np.eye(d)
    ds = generate_bimodal(cfg, map_override=(eye, eye))
    assert np.array_equal(ds.images, ds.texts)


def _probe_recall_at_1(ds):
    # independent oracle: least-squares map images -> texts, cosine retrieval
    w, *_ = np.linalg.lstsq(ds.images, ds.texts, rcond=None)
    pred = ds.images @ w
    pred = pred / np.linalg.norm(pred, axis=1, keepdims=True)
    t = ds.texts / np.linalg.norm(ds.texts, axis=1, keepdims=True)
    sims = pred @ t.T
    hits = sum(int(np.argmax(sims[i]) == i) for i in range(ds.n))
    return hits / ds.n


def test_linear_probe_recovers_pairing():
    cfg = GenConfig(n=100, latent_dim=8, d_v=16, d_t=12, noise_std=0.1, seed=3)
    ds = generate_bimodal(cfg)
    assert _probe_recall_at_1(ds) > 0.9


def test_invalid_dims_rejected():
    with pytest.raises(ValueError):
        GenConfig(n=10, latent_dim=9, d_v=8, d_t=8).validate()
    with pytest.raises(ValueError):
        GenConfig(n=1).validate()
    with pytest.raises(ValueError):
        GenConfig(n=10, noise_std=-1.0).validate()


def test_inject_zero_noise_is_identity():
    ds = generate_bimodal(GenConfig(n=12, latent_dim=3, d_v=4, d_t=4, seed=0))
    out = inject_noise(ds, 0.0, seed=5)
    assert np.array_equal(out.pairing, np.arange(12))
    assert not out.noise_flags.any()
    assert out.noise_rate == 0.0


def test_inject_exact_flag_count():
    ds = generate_bimodal(GenConfig(n=10, latent_dim=3, d_v=4, d_t=4, seed=0))
    out = inject_noise(ds, 0.4, seed=2)
    assert int(out.noise_flags.sum()) == 4
    assert np.all(out.pairing[out.noise_flags] != np.flatnonzero(out.noise_flags))


def test_inject_small_case_enumerated():
    # n=5, eta=0.4: exactly 2 mismatched, permutation must stay a bijection
    ds = generate_bimodal(GenConfig(n=5, latent_dim=2, d_v=3, d_t=3, seed=0))
    out = inject_noise(ds, 0.4, seed=123)
    perm = out.pairing
    assert sorted(perm) == [0, 1, 2, 3, 4]
    mismatched = [i for i in range(5) if perm[i] != i]
    assert len(mismatched) == 2
    # the two selected pairs swapped texts with each other
    i, j = mismatched
    assert perm[i] == j and perm[j] == i


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=4, max_value=40),
    eta_pct=st.integers(min_value=0, max_value=75),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_injection_invariants(n, eta_pct, seed):
    eta = eta_pct / 100.0
    ds = generate_bimodal(GenConfig(n=n, latent_dim=2, d_v=3, d_t=3, seed=1))
    expected = int(np.floor(eta * n + 0.5))
    if expected == 1:
        with pytest.warns(UserWarning):
            out = inject_noise(ds, eta, seed)
        expected = 2
    else:
        out = inject_noise(ds, eta, seed)
    assert sorted(out.pairing) == list(range(n))
    assert int(out.noise_flags.sum()) == expected
    flagged = np.flatnonzero(out.noise_flags)
    # flagged pairs form a derangement among themselves
    assert set(out.pairing[flagged]) == set(flagged)
    assert np.all(out.pairing[flagged] != flagged)


def test_inject_same_seed_identical():
    ds = generate_bimodal(GenConfig(n=20, latent_dim=3, d_v=4, d_t=4, seed=0))
    a = inject_noise(ds, 0.5, seed=9)
    b = inject_noise(ds, 0.5, seed=9)
    assert np.array_equal(a.pairing, b.pairing)


def test_inject_eta_out_of_range():
    ds = generate_bimodal(GenConfig(n=10, latent_dim=3, d_v=4, d_t=4, seed=0))
    with pytest.raises(ValueError):
        inject_noise(ds, 0.95, seed=0)  # above (n-1)/n
    with pytest.raises(ValueError):
        inject_noise(ds, -0.1, seed=0)


def test_inject_requires_clean_input():
    ds = generate_bimodal(GenConfig(n=10, latent_dim=3, d_v=4, d_t=4, seed=0))
    noisy = inject_noise(ds, 0.4, seed=1)
    with pytest.raises(ValueError):
        inject_noise(noisy, 0.2, seed=2)


def test_round_trip_exact(tmp_path):
    ds = inject_noise(
        generate_bimodal(GenConfig(n=15, latent_dim=4, d_v=6, d_t=5, seed=42)), 0.4, seed=3
    )
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(ds.images, back.images)
    assert np.array_equal(ds.texts, back.texts)
    assert np.array_equal(ds.pairing, back.pairing)
    assert np.array_equal(ds.noise_flags, back.noise_flags)
    assert ds.noise_rate == back.noise_rate
    assert ds.seed == back.seed


def test_load_truncated_reports_offset(tmp_path):
    ds = generate_bimodal(GenConfig(n=6, latent_dim=2, d_v=3, d_t=3, seed=0))
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 10])
    with pytest.raises(DatasetFormatError) as err:
        load_dataset(path)
    assert err.value.offset > 0


def test_load_bad_magic(tmp_path):
    path = tmp_path / "ds.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 100)
    with pytest.raises(DatasetFormatError):
        load_dataset(path)


def test_load_non_bijective_pairing_rejected(tmp_path):
    ds = generate_bimodal(GenConfig(n=6, latent_dim=2, d_v=3, d_t=3, seed=0))
    path = tmp_path / "ds.bin"
    save_dataset(ds, path)
    blob = bytearray(path.read_bytes())
    # pairing lives right after the two float blocks; stomp its first entry
    header = 8 + 4 + 8 * 3 + 8 + 8
    pairing_off = header + 8 * 6 * 3 + 8 * 6 * 3
    blob[pairing_off : pairing_off + 8] = (5).to_bytes(8, "little")  # duplicates index 5
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        load_dataset(path)


def test_subset_requires_closure():
    ds = generate_bimodal(GenConfig(n=6, latent_dim=2, d_v=3, d_t=3, seed=0))
    noisy = inject_noise(ds, 0.5, seed=0)
    flagged = np.flatnonzero(noisy.noise_flags)
    # dropping one member of the deranged group breaks closure
    keep = np.setdiff1d(np.arange(6), flagged[:1])
    with pytest.raises(ValueError):
        noisy.subset(keep)


def test_subset_of_clean_split():
    ds = generate_bimodal(GenConfig(n=10, latent_dim=2, d_v=3, d_t=3, seed=0))
    sub = ds.subset(np.arange(6, 10))
    assert sub.n == 4
    assert np.array_equal(sub.images, ds.images[6:])
    assert not sub.noise_flags.any()
