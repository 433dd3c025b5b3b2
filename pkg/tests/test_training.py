import numpy as np
import pytest

from psnerv.data import toy_video
from psnerv.embedding import EncodingConfig
from psnerv.errors import ConfigurationError
from psnerv.model import ArchConfig
from psnerv.training import MaskSpec, TrainConfig, train

ARCH = ArchConfig(enc=EncodingConfig(l=6), N=2, upscales=(2, 1), base_channels=6, min_channels=4,
                  stem_hidden=8, base_h=2, base_w=2)
CFG = TrainConfig(epochs=3, batch_size=5, ssim_window=3, lr=1e-2)


@pytest.fixture(scope="module")
def video():
    return toy_video(n_frames=4, height=8, width=8)


def test_pairs_per_epoch_and_steps(video):
    _, log = train(video, ARCH, CFG)
    assert log.pairs_per_epoch == 4 * 4
    assert log.steps == 3 * 4  # ceil(16 / 5) steps per epoch
    assert [r.epoch for r in log.records] == [0, 1, 2]


def test_each_pair_once_per_epoch(video):
    seen = []
    train(video, ARCH, CFG, on_batch=lambda t, p: seen.extend(zip(t.tolist(), p.tolist())))
    for e in range(3):
        chunk = seen[16 * e:16 * (e + 1)]
        assert sorted(chunk) == [(t, p) for t in range(4) for p in range(4)]


def test_masked_pairs_never_reach_loss(video):
    excluded = {(0, 1), (2, 3), (3, 0)}
    seen = []
    _, log = train(video, ARCH, CFG, mask=MaskSpec(excluded),
                   on_batch=lambda t, p: seen.extend(zip(t.tolist(), p.tolist())))
    assert sum(pair in excluded for pair in seen) == 0
    assert log.pairs_per_epoch == 13


def test_mask_all_raises(video):
    everything = {(t, p) for t in range(4) for p in range(4)}
    with pytest.raises(ConfigurationError):
        train(video, ARCH, CFG, mask=MaskSpec(everything))


def test_mask_out_of_range(video):
    with pytest.raises(ConfigurationError):
        train(video, ARCH, CFG, mask=MaskSpec({(9, 0)}))


def test_deterministic(video):
    a, la = train(video, ARCH, CFG)
    b, lb = train(video, ARCH, CFG)
    for p in a:
        assert p.value.tobytes() == b[p.name].value.tobytes()
    assert la.losses == lb.losses


def test_loss_decreases(video):
    _, log = train(video, ARCH, TrainConfig(epochs=40, batch_size=8, ssim_window=3, lr=1e-2))
    assert np.mean(log.losses[-5:]) < log.losses[0]


def test_keep_mask_pins_zeros(video):
    params, _ = train(video, ARCH, CFG)
    keep = {"blocks.0.weight": (np.arange(params["blocks.0.weight"].size) % 2 == 0)
            .reshape(params["blocks.0.weight"].shape)}
    tuned, _ = train(video, ARCH, CFG, params=params, keep_mask=keep)
    assert not tuned["blocks.0.weight"].value[~keep["blocks.0.weight"]].any()


def test_config_validation():
    with pytest.raises(ConfigurationError, match="alpha"):
        TrainConfig(alpha=1.0)
    with pytest.raises(ConfigurationError, match="batch_size"):
        TrainConfig(batch_size=0)


def test_log_exports(video):
    _, log = train(video, ARCH, CFG)
    lines = log.to_csv().splitlines()
    assert lines[0] == "epoch,loss,psnr,lr,seconds" and len(lines) == 4
    assert '"pairs_per_epoch": 16' in log.to_json()
