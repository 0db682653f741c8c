import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from lcdbnet.checkpoint_io import Checkpoint, load_checkpoint, model_parameters, save_checkpoint
from lcdbnet.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, read_plane
from lcdbnet.colorspace import decode_uint8, denormalize_ycc, rgb_to_ycc, normalize_ycc, ycc_to_rgb
from lcdbnet.config import TOY_NETWORK
from lcdbnet.metrics import MetricReport, evaluate_pair
from lcdbnet.networks import LCDBNet
from lcdbnet.synthetic import make_pairs, write_dataset

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FAST = ["--config", str(CONFIGS / "toy.yaml"), "--override", "epochs=1", "--override", "crop=32"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_dataset(root, make_pairs(4, 40, 36, seed=9))
    return root


@pytest.fixture(scope="module")
def identity_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "identity.lcdb"
    save_checkpoint(Checkpoint(TOY_NETWORK, model_parameters(LCDBNet(TOY_NETWORK))), path)
    return path


def test_train_smoke(tmp_path, dataset, capsys):
    assert main(["train", *FAST, "--data", str(dataset), "--out", str(tmp_path / "run")]) == EXIT_OK
    ckpt = load_checkpoint(tmp_path / "run" / "latest.lcdb")
    assert ckpt.step == 1 and ckpt.network_config == TOY_NETWORK
    assert "finished at step 1" in capsys.readouterr().out


def test_train_uses_env_data_root(tmp_path, dataset, monkeypatch):
    monkeypatch.setenv("LCDBNET_DATA_ROOT", str(dataset))
    assert main(["train", *FAST, "--out", str(tmp_path / "run")]) == EXIT_OK


def test_invalid_key_reports_all_problems(tmp_path, dataset, capsys):
    code = main(["train", "--override", "epochz=1", "--override", "crop=-5", "--data", str(dataset),
                 "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == EXIT_USAGE
    assert "epochz" in err
    assert not (tmp_path / "latest.lcdb").exists()


def test_bad_override_syntax(capsys):
    assert main(["info", "--override", "no-equals-sign"]) == EXIT_USAGE
    assert "no-equals-sign" in capsys.readouterr().err


def test_unknown_ablation_is_usage_error():
    assert main(["train", "--ablate", "no_everything"]) == EXIT_USAGE


def test_ablate_no_crn(tmp_path, dataset):
    assert main(["train", *FAST, "--ablate", "no_crn", "--data", str(dataset), "--out", str(tmp_path)]) == EXIT_OK
    ckpt = load_checkpoint(tmp_path / "latest.lcdb")
    assert ckpt.network_config.ablations == ("no_crn",)
    assert not any(k.startswith("crn.") for k in ckpt.parameters)


def test_missing_dataset_is_data_error(tmp_path):
    assert main(["train", *FAST, "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == EXIT_DATA


def test_enhance_keeps_size_and_is_deterministic(tmp_path, dataset, identity_ckpt):
    src = dataset / "low"
    assert main(["enhance", str(identity_ckpt), str(src), str(tmp_path / "a")]) == EXIT_OK
    assert main(["enhance", str(identity_ckpt), str(src), str(tmp_path / "b")]) == EXIT_OK
    for p in sorted(src.iterdir()):
        a, b = tmp_path / "a" / p.name, tmp_path / "b" / p.name
        assert a.read_bytes() == b.read_bytes()
        assert Image.open(a).size == Image.open(p).size


def test_enhance_odd_size_single_file(tmp_path, identity_ckpt):
    img = (np.random.default_rng(0).random((13, 21, 3)) * 255).astype(np.uint8)
    Image.fromarray(img).save(tmp_path / "odd.png")
    assert main(["enhance", str(identity_ckpt), str(tmp_path / "odd.png"), str(tmp_path / "out")]) == EXIT_OK
    out = np.asarray(Image.open(tmp_path / "out" / "odd.png"))
    assert out.shape == img.shape
    assert np.abs(out.astype(int) - img).max() <= 1


def test_enhance_skips_unreadable(tmp_path, identity_ckpt, capsys):
    d = tmp_path / "in"
    d.mkdir()
    (d / "bad.png").write_bytes(b"junk")
    assert main(["enhance", str(identity_ckpt), str(d), str(tmp_path / "out")]) == EXIT_DATA
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(d / "good.png")
    assert main(["enhance", str(identity_ckpt), str(d), str(tmp_path / "out")]) == EXIT_OK
    assert "failed: " in capsys.readouterr().out


def test_evaluate_report(tmp_path, identity_ckpt):
    root = tmp_path / "test15"
    samples = make_pairs(15, 24, 32, seed=4)
    write_dataset(root, samples)
    stem = tmp_path / "reports" / "r"
    assert main(["evaluate", str(identity_ckpt), "--data", str(root), "--report", str(stem)]) == EXIT_OK
    parsed = json.loads(stem.with_suffix(".json").read_text())
    rows = parsed["images"]
    assert len(rows) == 15
    assert abs(parsed["mean"]["psnr_db"] - np.mean([r["psnr_db"] for r in rows])) < 1e-9
    assert abs(parsed["mean"]["ssim"] - np.mean([r["ssim"] for r in rows])) < 1e-9
    lines = stem.with_suffix(".txt").read_text().strip().splitlines()
    assert len(lines) == 17
    # identity network: report equals the low-vs-ref baseline
    for row, s in zip(rows, samples):
        psnr, ssim = evaluate_pair(s.low, s.ref)
        assert row["name"] == s.name
        assert row["psnr_db"] == psnr and row["ssim"] == ssim
    assert MetricReport.from_json(stem.with_suffix(".json").read_text()).per_image[0][0] == "0000"


def test_evaluate_missing_pairs(tmp_path, identity_ckpt, capsys):
    root = tmp_path / "d"
    write_dataset(root, make_pairs(2, 16, 16))
    (root / "high" / "0001.png").unlink()
    assert main(["evaluate", str(identity_ckpt), "--data", str(root), "--report", str(tmp_path / "r")]) == EXIT_DATA
    assert "0001.png" in capsys.readouterr().err


def _decompose(tmp_path, img, depth=16):
    Image.fromarray(img).save(tmp_path / "pic.png")
    assert main(["decompose", str(tmp_path / "pic.png"), str(tmp_path / "out"), "--depth", str(depth)]) == EXIT_OK
    return tmp_path / "out"


def test_decompose_seven_files_and_recombination(tmp_path):
    img = (np.random.default_rng(1).random((37, 50, 3)) * 255).astype(np.uint8)
    out = _decompose(tmp_path, img)
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(f"pic_{s}.png" for s in ("R", "G", "B", "Y", "Cb", "Cr", "original"))
    unit = np.stack([read_plane(out / f"pic_{c}.png") for c in ("Y", "Cb", "Cr")], axis=-1)
    rgb = ycc_to_rgb(denormalize_ycc(unit), clip=False)
    assert np.abs(rgb - decode_uint8(img)).max() <= 1 / 255
    for i, c in enumerate("RGB"):
        np.testing.assert_array_equal(np.asarray(Image.open(out / f"pic_{c}.png")), img[..., i])
    np.testing.assert_array_equal(np.asarray(Image.open(out / "pic_original.png")), img)


def test_decompose_y_equals_quantized_luma(tmp_path):
    img = (np.random.default_rng(2).random((20, 30, 3)) * 255).astype(np.uint8)
    y = rgb_to_ycc(decode_uint8(img))[..., 0]
    out16 = _decompose(tmp_path, img)
    np.testing.assert_array_equal(np.asarray(Image.open(out16 / "pic_Y.png")), np.round(y * 65535).astype(np.uint16))
    (tmp_path / "b").mkdir()
    out8 = _decompose(tmp_path / "b", img, depth=8)
    np.testing.assert_array_equal(np.asarray(Image.open(out8 / "pic_Y.png")), np.round(y * 255).astype(np.uint8))
    cb8 = read_plane(out8 / "pic_Cb.png")
    assert abs(cb8 - normalize_ycc(rgb_to_ycc(decode_uint8(img)))[..., 1]).max() <= 0.5 / 255 + 1e-12


def test_decompose_neutral_chroma_is_mid_gray(tmp_path):
    img = np.full((8, 8, 3), 77, np.uint8)
    out = _decompose(tmp_path, img)
    assert np.all(np.asarray(Image.open(out / "pic_Cb.png")) == round(0.5 * 65535))


def test_info(capsys, identity_ckpt):
    assert main(["info"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["parameters"] == 6_539_741
    assert info["fusion_layers"][-1] == ["Conv", 3, 3]
    assert main(["info", "--checkpoint", str(identity_ckpt)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["network"]["base_channels_lan"] == 8


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["evaluate", "x.lcdb"]) == EXIT_USAGE
