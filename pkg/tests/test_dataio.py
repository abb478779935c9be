import json

import numpy as np
import pytest

from tidevae.dataio.checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from tidevae.dataio.config import ConfigError, load_config, parse_config
from tidevae.dataio.images import compose_grid, resize_bilinear
from tidevae.dataio.manifest import ManifestError, load_images, load_manifest, parse_manifest, write_dataset
from tidevae.dataio.ppm import PpmError, decode_ppm, encode_ppm, read_ppm, write_ppm
from tidevae.dataio.toy import LabeledDataset, make_toy_dataset
from tidevae.engine.rng import Rng
from tidevae.model import TideConfig, build_model, generate

SMALL = TideConfig(image_size=(16, 16), stem_filters=2, msb_filters=(4, 8, 16, 32), pool_filters=(8, 16, 32),
                   encoder_fc=16)


# --- PPM -----------------------------------------------------------------

def test_ppm_white_2x2():
    img = decode_ppm(b"P6\n2 2\n255\n" + b"\xff" * 12)
    assert img.shape == (3, 2, 2) and np.all(img == 1.0)


def test_ppm_byte_fixpoint(tmp_path):
    raw = b"P6\n3 2\n255\n" + bytes(Rng(50).u32(18).astype(np.uint8))
    f = tmp_path / "a.ppm"
    f.write_bytes(raw)
    write_ppm(read_ppm(f), tmp_path / "b.ppm")
    assert (tmp_path / "b.ppm").read_bytes() == raw


def test_ppm_quantization_bound():
    img = Rng(51).uniform(3 * 7 * 5).reshape(3, 7, 5)
    back = decode_ppm(encode_ppm(img))
    assert np.abs(back - img).max() <= 1 / 510 + 1e-7


def test_ppm_header_comments():
    img = decode_ppm(b"P6 # made by hand\n1 1\n# maxval next\n255\n\x00\x80\xff")
    np.testing.assert_allclose(img[:, 0, 0], [0, 128 / 255, 1])


@pytest.mark.parametrize("buf,needle", [
    (b"P3\n1 1\n255\n\x00\x00\x00", "byte 0"),
    (b"P6\n1 1\n65535\n\x00\x00\x00", "maxval"),
    (b"P6\n2 2\n255\n\x00\x00\x00", "truncated payload"),
    (b"P6\n2 x\n255\n", "non-integer height"),
])
def test_ppm_errors(buf, needle):
    with pytest.raises(PpmError, match=needle):
        decode_ppm(buf)


def test_ppm_truncation_names_offset():
    with pytest.raises(PpmError, match="after byte offset 11"):
        decode_ppm(b"P6\n2 2\n255\n\x00")


# --- resize & grid -------------------------------------------------------

def test_resize_identity_and_constant():
    img = Rng(52).uniform(3 * 5 * 6).reshape(3, 5, 6).astype(np.float32)
    out = resize_bilinear(img, (5, 6))
    np.testing.assert_array_equal(out, img)
    assert out is not img
    const = np.full((3, 7, 9), 0.3, dtype=np.float32)
    np.testing.assert_allclose(resize_bilinear(const, (4, 13)), 0.3, atol=1e-7)
    with pytest.raises(ValueError):
        resize_bilinear(img, (0, 3))


def test_resize_ramp_by_hand():
    ramp = np.arange(16, dtype=np.float64).reshape(1, 4, 4) / 15
    # half-pixel centres: output pixel 0 samples source 0.5, pixel 1 samples 2.5
    expect = np.array([[2.5, 4.5], [10.5, 12.5]]) / 15
    np.testing.assert_allclose(resize_bilinear(ramp, (2, 2))[0], expect, atol=1e-12)


def test_resize_stays_in_unit_range():
    img = Rng(53).uniform(3 * 9 * 9).reshape(3, 9, 9)
    out = resize_bilinear(img, (23, 4))
    assert out.min() >= 0 and out.max() <= 1


def test_compose_grid():
    one = Rng(54).uniform(3 * 4 * 4).reshape(3, 4, 4).astype(np.float32)
    np.testing.assert_array_equal(compose_grid([one], 3), one)
    imgs = [np.zeros((3, 96, 96), np.float32)] * 4
    g = compose_grid(imgs, 2, separator=2)
    assert g.shape == (3, 194, 194)
    assert np.all(g[:, 96:98, :] == 1) and np.all(g[:, :, 96:98] == 1)
    assert compose_grid(imgs[:3], 2).shape == (3, 194, 194)
    with pytest.raises(ValueError):
        compose_grid([], 2)
    with pytest.raises(ValueError, match="image 1"):
        compose_grid([one, np.zeros((3, 5, 4))], 2)


# --- toy data & manifests --------------------------------------------------

def test_toy_dataset_contract():
    a = make_toy_dataset("blobs", 5, 16, seed=1)
    b = make_toy_dataset("blobs", 5, 16, seed=1)
    np.testing.assert_array_equal(a.images, b.images)
    assert a.labels.tolist() == [0] * 5 + [1] * 5
    assert a.images.shape == (10, 3, 16, 16)
    assert a.images.min() >= 0 and a.images.max() <= 1
    assert not np.array_equal(make_toy_dataset("blobs", 5, 16, seed=2).images, a.images)
    # lesions darken: abnormal images have less total intensity on average
    s = make_toy_dataset("stripes", 20, 32, seed=3)
    assert s.images[s.labels == 1].mean() < s.images[s.labels == 0].mean()
    with pytest.raises(ValueError):
        make_toy_dataset("checkers", 2, 16, seed=0)


def test_labeled_dataset_validation():
    with pytest.raises(ValueError, match="mismatch"):
        LabeledDataset(np.zeros((2, 3, 4, 4)), np.array([0]))
    with pytest.raises(ValueError, match="0 or 1"):
        LabeledDataset(np.zeros((1, 3, 4, 4)), np.array([2]))


def test_manifest_parsing():
    text = "# header\na.ppm 0\n\nb.ppm 1 train\nc.ppm 0  # trailing comment\n"
    entries = parse_manifest(text)
    assert [e.path for e in entries] == ["a.ppm", "b.ppm", "c.ppm"]
    assert entries[1].split == "train"
    with pytest.raises(ManifestError, match=":2:"):
        parse_manifest("a.ppm 0\nb.ppm 2\n")
    with pytest.raises(ManifestError, match="duplicate"):
        parse_manifest("a.ppm 0\na.ppm 1\n")


def test_manifest_roundtrip(tmp_path):
    ds = make_toy_dataset("blobs", 2, 16, seed=4).subset([2, 0, 3])
    mpath = write_dataset(ds, tmp_path / "set")
    back = load_manifest(mpath)
    assert back.paths == [p if p.endswith(".ppm") else p + ".ppm" for p in ds.paths]
    assert back.labels.tolist() == ds.labels.tolist()
    assert np.abs(back.images - ds.images).max() <= 1 / 510 + 1e-7
    assert load_manifest(mpath, resolution=(8, 8)).images.shape == (3, 3, 8, 8)
    assert len(load_manifest(mpath, label=1)) == 2
    assert load_images(tmp_path / "set").shape == (3, 3, 16, 16)


def test_manifest_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    with pytest.raises(ManifestError, match="no images"):
        load_manifest(empty)
    missing = tmp_path / "missing.txt"
    missing.write_text("ghost.ppm 0\n")
    with pytest.raises(ManifestError, match="ghost.ppm"):
        load_manifest(missing)


# --- checkpoint ----------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    m = build_model(SMALL, Rng(55))
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.config == m.config
    assert list(back.params) == list(m.params)
    for k in m.params:
        assert back.params[k].data.tobytes() == m.params[k].data.tobytes()
    np.testing.assert_array_equal(generate(back, Rng(3), 4), generate(m, Rng(3), 4))
    assert encode_checkpoint(back) == path.read_bytes()


def test_checkpoint_header_layout():
    buf = encode_checkpoint(build_model(SMALL, Rng(56)))
    assert buf[:4] == b"TIDE"
    assert int.from_bytes(buf[4:8], "little") == 1
    n = int.from_bytes(buf[8:12], "little")
    assert json.loads(buf[12:12 + n])["image_size"] == [16, 16]


def test_checkpoint_corruption():
    buf = bytearray(encode_checkpoint(build_model(SMALL, Rng(57))))
    bad = bytes(b"X" + buf[1:])
    with pytest.raises(CheckpointError, match="magic .* at byte 0"):
        decode_checkpoint(bad)
    with pytest.raises(CheckpointError, match="version 7 at byte 4"):
        decode_checkpoint(bytes(buf[:4] + (7).to_bytes(4, "little") + buf[8:]))
    with pytest.raises(CheckpointError, match="truncated .* at byte"):
        decode_checkpoint(bytes(buf[:-3]))
    with pytest.raises(CheckpointError, match="truncated"):
        decode_checkpoint(bytes(buf[:10]))


# --- config --------------------------------------------------------------

def test_config_documents(tmp_path):
    cfg = parse_config({"model": {"image_size": [32, 32]}, "train": {"max_epochs": 3},
                        "substitution": {"k": 4}})
    assert cfg.model.image_size == (32, 32) and cfg.train.max_epochs == 3 and cfg.substitution.k == 4
    assert cfg.classifier.epochs == 40
    with pytest.raises(ConfigError, match="learning_rat"):
        parse_config({"train": {"learning_rat": 0.1}})
    with pytest.raises(ConfigError, match="section"):
        parse_config({"optimizer": {}})
    with pytest.raises(ConfigError, match="invalid section 'model'"):
        parse_config({"model": {"image_size": [30, 30]}})
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(p)
