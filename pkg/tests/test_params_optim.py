import struct

import numpy as np
import pytest

from fmanet.errors import FormatError, StateError
from fmanet.tensor import (SGD, Adam, ParameterSet, Tensor, backward_and_step, dense, load_tensors,
                           make_optimizer, save_tensors)


def small_set(seed=0):
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    ps.add("fc.weight", rng.standard_normal((4, 3)).astype(np.float32), "dense-weight")
    ps.add("fc.bias", np.zeros(3, np.float32), "dense-bias")
    return ps


def quadratic_loss(ps, x, y):
    r = dense(Tensor(x), ps["fc.weight"], ps["fc.bias"]) - Tensor(y)
    return (r * r).sum()


def test_names_unique_and_roles_checked():
    ps = small_set()
    with pytest.raises(KeyError):
        ps.add("fc.bias", np.zeros(3), "dense-bias")
    with pytest.raises(ValueError):
        ps.add("x", np.zeros(1), "weights")
    assert ps.role("fc.weight") == "dense-weight"
    assert ps.count() == 15 and len(ps) == 2


def test_gradient_shapes_match_values():
    ps = small_set()
    rng = np.random.default_rng(1)
    quadratic_loss(ps, rng.standard_normal((2, 4)), rng.standard_normal((2, 3))).backward()
    for name, t in ps.items():
        assert t.grad.shape == t.shape, name


def test_dense_quadratic_closed_form_gradient():
    ps = small_set()
    ps.astype(np.float64)
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))
    quadratic_loss(ps, x, y).backward()
    w, b = ps["fc.weight"].data, ps["fc.bias"].data
    resid = x @ w + b - y
    np.testing.assert_allclose(ps["fc.weight"].grad, 2 * x.T @ resid, atol=1e-10)
    np.testing.assert_allclose(ps["fc.bias"].grad, 2 * resid.sum(axis=0), atol=1e-10)


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_zero_learning_rate_leaves_parameters_bit_identical(kind):
    ps = small_set()
    before = {n: a.tobytes() for n, a in ps.snapshot().items()}
    opt = make_optimizer(kind, ps, lr=0.0)
    rng = np.random.default_rng(3)
    for _ in range(3):
        backward_and_step(quadratic_loss(ps, rng.standard_normal((2, 4)), rng.standard_normal((2, 3))), opt)
    assert {n: a.tobytes() for n, a in ps.state().items()} == before


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_every_parameter_moves_and_loss_falls(kind):
    ps = small_set()
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal((8, 4)), rng.standard_normal((8, 3))
    before = ps.snapshot()
    opt = make_optimizer(kind, ps, lr=1e-2)
    first = backward_and_step(quadratic_loss(ps, x, y), opt)
    for _ in range(200):
        last = backward_and_step(quadratic_loss(ps, x, y), opt)
    assert last < first
    for name, arr in ps.state().items():
        assert not np.array_equal(arr, before[name]), name


def test_adam_first_step_matches_formula():
    ps = ParameterSet()
    w = ps.add("w", np.array([1.0, -2.0], np.float64), "dense-weight")
    opt = Adam(ps, lr=0.1)
    (w * Tensor(np.array([3.0, 0.5]))).sum().backward()
    opt.step()
    # Bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g).
    np.testing.assert_allclose(w.data, [1.0 - 0.1, -2.0 - 0.1], atol=1e-7)


def test_sgd_momentum_accumulates():
    ps = ParameterSet()
    w = ps.add("w", np.array([0.0]), "dense-weight")
    opt = SGD(ps, lr=1.0, momentum=0.5)
    for _ in range(2):
        ps.zero_grad()
        (w * Tensor(np.array([1.0]))).sum().backward()
        opt.step()
    np.testing.assert_allclose(w.data, [-(1 + 1.5)])


def test_step_before_forward_is_state_error():
    ps = small_set()
    with pytest.raises(StateError):
        Adam(ps).step()
    with pytest.raises(StateError):
        backward_and_step(None, SGD(ps))
    with pytest.raises(StateError):
        backward_and_step(Tensor(np.array(1.0)), SGD(ps))


def test_seeded_runs_have_identical_trajectories():
    def run():
        ps = small_set(seed=5)
        opt = Adam(ps, lr=1e-2)
        rng = np.random.default_rng(6)
        losses = []
        for _ in range(20):
            losses.append(backward_and_step(
                quadratic_loss(ps, rng.standard_normal((3, 4)), rng.standard_normal((3, 3))), opt))
        return losses, ps.state()

    l1, s1 = run()
    l2, s2 = run()
    assert l1 == l2
    assert all(s1[n].tobytes() == s2[n].tobytes() for n in s1)


# -- container ------------------------------------------------------------------------

def test_container_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    arrays = {"a": rng.standard_normal((2, 3, 4)).astype(np.float32), "b.c": np.float32([1e-38, -0.0, 7]),
              "scalar": np.array(3.5, np.float32), "émoji": np.zeros((0, 2), np.float32)}
    path = tmp_path / "t.mmcf"
    save_tensors(path, arrays)
    back = load_tensors(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape and back[k].tobytes() == arrays[k].tobytes()
    save_tensors(tmp_path / "again.mmcf", back)
    assert (tmp_path / "again.mmcf").read_bytes() == path.read_bytes()


def test_container_hand_built_bytes(tmp_path):
    raw = (b"MMCF" + struct.pack("<I", 1) + struct.pack("<I", 1) + b"w" + struct.pack("<III", 2, 1, 2)
           + struct.pack("<ff", 1.5, -2.0))
    path = tmp_path / "h.mmcf"
    path.write_bytes(raw)
    out = load_tensors(path)
    np.testing.assert_array_equal(out["w"], [[1.5, -2.0]])
    save_tensors(tmp_path / "w.mmcf", out)
    assert (tmp_path / "w.mmcf").read_bytes() == raw


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-2],
                                    lambda b: b[:4] + struct.pack("<I", 9) + b[8:], lambda b: b[:6]])
def test_container_corruption_is_format_error(tmp_path, mutate):
    path = tmp_path / "c.mmcf"
    save_tensors(path, {"w": np.ones((2, 2), np.float32)})
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(FormatError):
        load_tensors(path)


def test_load_state_validates_names_and_shapes():
    ps = small_set()
    good = ps.snapshot()
    with pytest.raises(FormatError):
        ps.load_state({"fc.weight": good["fc.weight"]})
    with pytest.raises(FormatError):
        ps.load_state({**good, "fc.bias": np.zeros(4)})
    ps.load_state({k: v * 2 for k, v in good.items()})
    np.testing.assert_array_equal(ps["fc.weight"].data, good["fc.weight"] * 2)
