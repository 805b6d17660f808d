import io

import numpy as np
import pytest
from PIL import Image

from fmanet.config import RunConfig, load_config, parse_config_text
from fmanet.errors import FormatError
from fmanet.viz import MID_GRAY, png_bytes, save_heatmap, to_uint8


def decode(data):
    return np.asarray(Image.open(io.BytesIO(data)))


def test_constant_maps_render_mid_gray():
    for value in (0.0, 3.5):
        img = decode(png_bytes(np.full((5, 6), value)))
        assert img.dtype == np.uint8 and (img == MID_GRAY).all()


def test_ramp_is_monotone_along_its_axis():
    ramp = np.tile(np.linspace(-2, 7, 40), (6, 1))
    img = decode(png_bytes(ramp)).astype(int)
    assert (np.diff(img, axis=1) >= 0).all() and img[0, 0] == 0 and img[0, -1] == 255
    turbo = decode(png_bytes(ramp, "turbo"))
    assert turbo.shape == (6, 40, 3)


def test_rerender_is_byte_identical(tmp_path):
    m = np.random.default_rng(0).uniform(size=(9, 9))
    a = save_heatmap(m, tmp_path / "a.png", "turbo").read_bytes()
    b = save_heatmap(m.copy(), tmp_path / "b.png", "turbo").read_bytes()
    assert a == b


def test_visualize_errors(tmp_path):
    with pytest.raises(ValueError):
        to_uint8(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        png_bytes(np.zeros((2, 2)), "jet")
    with pytest.raises(OSError):
        save_heatmap(np.zeros((2, 2)), tmp_path / "missing" / "x.png")


def test_config_precedence(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# run\nepochs = 7\nk-upper = 3\nlr = 0.01  # fast\nroot =\n")
    values = load_config(path)
    cfg = RunConfig.layered(values, {"epochs": 9, "seed": None})
    assert cfg.epochs == 9 and cfg.k_upper == 3.0 and cfg.lr == 0.01
    assert cfg.seed == 0 and cfg.root is None
    assert RunConfig.layered(parse_config_text(cfg.to_text())) == cfg


@pytest.mark.parametrize("text", ["epochs 3", "bogus = 1", "epochs = 1\nepochs = 2", "epochs = many"])
def test_config_format_errors(text):
    with pytest.raises(FormatError):
        RunConfig.layered(parse_config_text(text))


def test_config_validation(tmp_path):
    with pytest.raises(FormatError):
        RunConfig().validate()
    with pytest.raises(FileNotFoundError):
        RunConfig(root=str(tmp_path), annotations=str(tmp_path / "none.csv")).validate()
    with pytest.raises(ValueError):
        RunConfig(mode="manual", alpha=2.0, beta=1.0).validate(need_data=False)
    exp = RunConfig(epochs=3, seed=11, theta2=0.0).experiment()
    assert exp.schedule.epochs == 3 and exp.schedule.seed == 11 and exp.theta2 == 0.0
