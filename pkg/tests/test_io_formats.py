"""Binary tensor container, config round trips, model serialization, datasets."""

import io
import struct

import numpy as np
import pytest

from lorid.attacks import ClassifierTrainConfig, train_classifier
from lorid.diffusion import MlpTrainConfig, make_linear_schedule, train_mlp_denoiser
from lorid.io_formats import (
    ConfigError,
    RunConfig,
    TENSOR_MAGIC,
    TENSOR_VERSION,
    TensorFormatError,
    default_config,
    format_config,
    gen_gaussian_dataset,
    gen_striped_images,
    gen_two_gaussian_classes,
    gen_two_point_dataset,
    parse_config,
    read_basis,
    read_classifier,
    read_mlp,
    read_tensor,
    write_basis,
    write_classifier,
    write_csv,
    write_mlp,
    write_tensor,
)
from lorid.tucker import TensorizationLayout, fit_basis, tf_apply


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(601)
        for shape in [(5,), (3, 4), (2, 3, 4, 2)]:
            x = rng.standard_normal(shape)
            path = str(tmp_path / "t.lten")
            write_tensor(path, x)
            back = read_tensor(path)
            np.testing.assert_array_equal(back, x)
            assert back.dtype == np.float64

    def test_scalar_zero_dim(self, tmp_path):
        path = str(tmp_path / "s.lten")
        write_tensor(path, np.array(3.5))
        back = read_tensor(path)
        assert back.shape == ()
        assert back == 3.5

    def test_header_layout(self, tmp_path):
        """Magic, version, ndim, dims — all little-endian, then raw f8 payload."""
        path = str(tmp_path / "h.lten")
        write_tensor(path, np.arange(6.0).reshape(2, 3))
        blob = open(path, "rb").read()
        assert blob[:4] == TENSOR_MAGIC
        version, ndim = struct.unpack("<HH", blob[4:8])
        assert version == TENSOR_VERSION
        assert ndim == 2
        assert struct.unpack("<2Q", blob[8:24]) == (2, 3)
        np.testing.assert_array_equal(
            np.frombuffer(blob[24:], dtype="<f8"), np.arange(6.0)
        )

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "bad.lten")
        open(path, "wb").write(b"NOPE" + b"\x00" * 16)
        with pytest.raises(TensorFormatError):
            read_tensor(path)

    def test_newer_version_rejected(self, tmp_path):
        path = str(tmp_path / "future.lten")
        with open(path, "wb") as fh:
            fh.write(TENSOR_MAGIC)
            fh.write(struct.pack("<HH", TENSOR_VERSION + 1, 1))
            fh.write(struct.pack("<Q", 1))
            fh.write(struct.pack("<d", 1.0))
        with pytest.raises(TensorFormatError):
            read_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = str(tmp_path / "trunc.lten")
        write_tensor(path, np.zeros(8))
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-4])
        with pytest.raises(TensorFormatError):
            read_tensor(path)

    def test_trailing_bytes_rejected_on_path_read(self, tmp_path):
        path = str(tmp_path / "extra.lten")
        with open(path, "wb") as fh:
            write_tensor(fh, np.zeros(2))
            fh.write(b"junk")
        with pytest.raises(TensorFormatError):
            read_tensor(path)

    def test_handle_reads_sequential_blocks(self):
        buf = io.BytesIO()
        a = np.arange(3.0)
        b = np.arange(4.0).reshape(2, 2)
        write_tensor(buf, a)
        write_tensor(buf, b)
        buf.seek(0)
        np.testing.assert_array_equal(read_tensor(buf), a)
        np.testing.assert_array_equal(read_tensor(buf), b)

    def test_dimension_overflow_rejected(self, tmp_path):
        path = str(tmp_path / "huge.lten")
        with open(path, "wb") as fh:
            fh.write(TENSOR_MAGIC)
            fh.write(struct.pack("<HH", TENSOR_VERSION, 2))
            fh.write(struct.pack("<2Q", 1 << 32, 1 << 32))
        with pytest.raises(TensorFormatError):
            read_tensor(path)


class TestCsv:
    def test_floats_at_full_precision(self, tmp_path):
        path = str(tmp_path / "out.csv")
        value = 0.1 + 0.2  # classically unrepresentable sum
        write_csv(path, ["a", "b"], [[value, 1], [True, "x"]])
        text = open(path).read()
        lines = text.splitlines()
        assert lines[0] == "a,b"
        assert float(lines[1].split(",")[0]) == value
        assert lines[2] == "true,x"

    def test_deterministic_bytes(self, tmp_path):
        rows = [[0.5, 2], [1.25, 3]]
        p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        write_csv(p1, ["x", "n"], rows)
        write_csv(p2, ["x", "n"], rows)
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestRunConfig:
    def test_round_trip(self):
        cfg = default_config(seed=9, t=80)
        back = parse_config(format_config(cfg))
        assert back == cfg

    def test_round_trip_with_ranks(self):
        cfg = default_config(eta=None, ranks=(2, 2, 8, 1))
        back = parse_config(format_config(cfg))
        assert back == cfg
        assert back.ranks == (2, 2, 8, 1)

    def test_comments_and_blanks_ignored(self):
        text = format_config(default_config())
        noisy = "# leading comment\n\n" + text.replace("t=100", "t=100  # depth")
        assert parse_config(noisy) == default_config()

    def test_unknown_key_rejected(self):
        text = format_config(default_config()) + "extra=1\n"
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_duplicate_key_rejected(self):
        text = format_config(default_config()) + "seed=5\n"
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_keys_listed(self):
        with pytest.raises(ConfigError, match="beta_start"):
            parse_config("T=100\n")

    def test_exactly_one_rank_policy(self):
        with pytest.raises(ConfigError):
            default_config(eta=None)  # neither
        with pytest.raises(ConfigError):
            default_config(ranks=(1, 1, 1, 1))  # both

    def test_value_validation(self):
        with pytest.raises(ConfigError):
            default_config(T=0)
        with pytest.raises(ConfigError):
            default_config(sampler="euler")
        with pytest.raises(ConfigError):
            default_config(eta=1.5)
        with pytest.raises(ConfigError):
            default_config(eta=None, ranks=(1, 2, 3))

    def test_bad_syntax_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("just words\n")
        with pytest.raises(ConfigError):
            parse_config(format_config(default_config()).replace("T=1000", "T=ten"))


class TestModelSerialization:
    def test_basis_round_trip(self, tmp_path):
        images, _ = gen_striped_images(64, seed=41)
        layout = TensorizationLayout(height=16, width=16, channels=1, patch=4)
        basis = fit_basis(images, layout, rank_policy=(2, 2, 8, 1))
        path = str(tmp_path / "basis.lten")
        write_basis(path, basis)
        back = read_basis(path)
        assert back.ranks == basis.ranks
        assert back.layout == basis.layout
        np.testing.assert_array_equal(back.discarded_energy, basis.discarded_energy)
        for u1, u2 in zip(back.factors, basis.factors):
            np.testing.assert_array_equal(u1, u2)
        x = images[:3]
        np.testing.assert_array_equal(tf_apply(x, back), tf_apply(x, basis))

    def test_mlp_round_trip(self, tmp_path):
        sched = make_linear_schedule(50, 1e-3, 0.02)
        data = np.random.default_rng(42).standard_normal((32, 3))
        cfg = MlpTrainConfig(hidden=(6, 4), epochs=2, batch_size=16)
        model, _ = train_mlp_denoiser(data, sched, cfg, np.random.default_rng(43))
        path = str(tmp_path / "mlp.lten")
        write_mlp(path, model)
        back = read_mlp(path)
        assert back.dim == model.dim
        assert back.hidden == model.hidden
        assert back.t_total == model.t_total
        probe = np.random.default_rng(44).standard_normal((5, 3))
        np.testing.assert_array_equal(back.predict_eps(probe, 25), model.predict_eps(probe, 25))

    def test_classifier_round_trip(self, tmp_path):
        x, y = gen_two_gaussian_classes(80, seed=45)
        clf = train_classifier(x, y, ClassifierTrainConfig(hidden=(6,), epochs=5),
                               np.random.default_rng(46))
        path = str(tmp_path / "clf.lten")
        write_classifier(path, clf)
        back = read_classifier(path)
        assert back.input_dim == clf.input_dim
        assert back.n_classes == clf.n_classes
        np.testing.assert_array_equal(back.predict(x), clf.predict(x))


class TestGenerators:
    def test_gaussian_dataset_seeded(self):
        a = gen_gaussian_dataset(4, 10, seed=7)
        b = gen_gaussian_dataset(4, 10, seed=7)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (10, 4)

    def test_two_gaussian_classes_balanced(self):
        x, y = gen_two_gaussian_classes(100, seed=8)
        assert x.shape == (100, 2)
        assert np.sum(y == 0) == 50
        # class 0 sits left of class 1 along the split axis
        assert x[y == 0, 0].mean() < x[y == 1, 0].mean()

    def test_two_point_dataset(self):
        data = gen_two_point_dataset(50, seed=9)
        assert data.shape == (50, 1)
        assert set(np.unique(data)) == {-1.0, 1.0}
        assert abs(data.sum()) <= 1  # balanced up to odd n

    def test_striped_images_structure(self):
        images, labels = gen_striped_images(40, seed=10, noise=0.0)
        assert images.shape == (40, 16, 16, 1)
        assert set(np.unique(labels)) == {0, 1}
        img0 = images[labels == 0][0, :, :, 0]
        img1 = images[labels == 1][0, :, :, 0]
        # horizontal stripes: rows constant; vertical: columns constant
        assert np.ptp(img0, axis=1).max() < 1e-12
        assert np.ptp(img1, axis=0).max() < 1e-12
        # period-2 alternation with amplitude in the documented band
        amp = np.abs(img0).max()
        assert 0.2 - 1e-12 <= amp <= 0.4 + 1e-12
        np.testing.assert_allclose(img0[0], -img0[1], rtol=1e-12)

    def test_striped_images_seeded(self):
        a, la = gen_striped_images(20, seed=11)
        b, lb = gen_striped_images(20, seed=11)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(la, lb)

    def test_generator_validation(self):
        with pytest.raises(ValueError):
            gen_gaussian_dataset(0, 5, seed=0)
        with pytest.raises(ValueError):
            gen_two_point_dataset(1, seed=0)
        with pytest.raises(ValueError):
            gen_striped_images(10, seed=0, noise=-0.1)
