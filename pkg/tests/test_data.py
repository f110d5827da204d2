import numpy as np
import pytest

from dfsmn.data import TaskSpec, dumps_dataset, generate, load_dataset, loads_dataset, save_dataset
from dfsmn.errors import ConfigError, FormatError
from dfsmn.lfr import FrameDataset


def _shown(feats, k):
    return feats[:, :k].argmax(axis=1)


def _same(a, b):
    return len(a) == len(b) and all(
        fa.tobytes() == fb.tobytes() and ta.tobytes() == tb.tobytes() for (fa, ta), (fb, tb) in zip(a.sequences, b.sequences)
    )


@pytest.mark.parametrize("kind,K", [("delayed_echo", 4), ("future_cue", 4), ("sparse_parity", 2)])
def test_generation_is_deterministic(kind, K):
    task = TaskSpec(kind, 3, 4, 50, 6, K, 0.1, seed=7)
    assert _same(generate(task), generate(task))
    assert not _same(generate(task), generate(TaskSpec(kind, 3, 4, 50, 6, K, 0.1, seed=8)))


def test_delayed_echo_labels_rederived():
    k = 10
    for feats, targets in generate(TaskSpec("delayed_echo", k, 5, 80, 6, 4, 0.0, seed=1)).sequences:
        shown, labels = _shown(feats, 4), targets.argmax(axis=1)
        expected = np.array([shown[t - k] if t >= k else shown[t] for t in range(80)])
        np.testing.assert_array_equal(labels, expected)


def test_future_cue_labels_rederived():
    j = 5
    for feats, targets in generate(TaskSpec("future_cue", j, 5, 60, 4, 4, 0.0, seed=2)).sequences:
        shown, labels = _shown(feats, 4), targets.argmax(axis=1)
        expected = np.array([shown[t + j] if t + j < 60 else shown[t] for t in range(60)])
        np.testing.assert_array_equal(labels, expected)


def test_sparse_parity_labels_rederived():
    w = 6
    for feats, targets in generate(TaskSpec("sparse_parity", w, 5, 70, 3, 2, 0.0, seed=3)).sequences:
        ev = feats[:, 0] > 0.5
        expected = [int(sum(ev[max(t - w, 0) : t + 1])) % 2 for t in range(70)]
        np.testing.assert_array_equal(targets.argmax(axis=1), expected)


def test_zero_delay_echo_is_identity():
    feats, targets = generate(TaskSpec("delayed_echo", 0, 1, 40, 4, 4)).sequences[0]
    np.testing.assert_array_equal(targets, feats[:, :4])


@pytest.mark.parametrize(
    "task",
    [
        TaskSpec("nope", 1),
        TaskSpec("delayed_echo", 200, frames_per_sequence=200),
        TaskSpec("delayed_echo", -1),
        TaskSpec("delayed_echo", 1, noise_std=-1),
        TaskSpec("delayed_echo", 1, feature_dim=2, num_classes=4),
        TaskSpec("sparse_parity", 1, num_classes=3),
    ],
)
def test_invalid_task(task):
    with pytest.raises(ConfigError):
        generate(task)


def test_round_trip_bit_identity(tmp_path, rng):
    seqs = [(rng.standard_normal((T, 3)).astype(np.float32), np.eye(4, dtype=np.float32)[rng.integers(0, 4, T)]) for T in (5, 1, 9)]
    ds = FrameDataset(seqs)
    save_dataset(ds, tmp_path / "d.fsmd")
    assert _same(load_dataset(tmp_path / "d.fsmd"), ds)


def test_empty_dataset_round_trips():
    assert len(loads_dataset(dumps_dataset(FrameDataset([])))) == 0


def test_corruption_is_format_error():
    buf = dumps_dataset(generate(TaskSpec("delayed_echo", 2, 2, 10, 4, 4)))
    for n in range(len(buf)):
        with pytest.raises(FormatError):
            loads_dataset(buf[:n])
    with pytest.raises(FormatError, match="offset 0"):
        loads_dataset(b"XXXX" + buf[4:])
    with pytest.raises(FormatError, match="version"):
        loads_dataset(buf[:4] + b"\x02\x00" + buf[6:])
    with pytest.raises(FormatError, match="trailing"):
        loads_dataset(buf + b"\x00")
