import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oomcraft.data import TrajectoryDataset
from oomcraft.errors import ParseError
from oomcraft.io_formats import (
    dumps_model,
    format_real,
    loads_model,
    parse_real,
    read_dataset,
    read_model,
    read_trajectory,
    write_dataset,
    write_model,
    write_trajectory,
)
from oomcraft.model import BinSpec, coarse_grain_learn, markov_chain_oom
from oomcraft.spectral import LearnerConfig, fit_binless, fit_discrete


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_real_round_trip(x):
    assert parse_real(format_real(x)) == x


@pytest.mark.parametrize("text", ["nan", "inf", "1_000", "0x10", "", "1.0.0", "1e"])
def test_parse_real_rejects(text):
    with pytest.raises(ParseError):
        parse_real(text)


def test_trajectory_round_trip(tmp_path, rng):
    cont = rng.normal(size=(17, 2))
    write_trajectory(tmp_path / "c.txt", cont)
    arr, kind, dim = read_trajectory(tmp_path / "c.txt")
    assert (kind, dim) == ("continuous", 2)
    assert arr.tobytes() == cont.tobytes()
    disc = rng.integers(0, 4, size=30)
    write_trajectory(tmp_path / "d.txt", disc, "discrete")
    arr, kind, _ = read_trajectory(tmp_path / "d.txt")
    assert kind == "discrete" and np.array_equal(arr, disc)


def test_trajectory_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("#oomcraft-traj v1 kind=continuous dim=2\n1.0,2.0\n3.0,x\n")
    with pytest.raises(ParseError) as info:
        read_trajectory(path)
    assert info.value.line == 3
    path.write_text("#oomcraft-traj v1 kind=continuous dim=2\n1.0,2.0,3.0\n")
    with pytest.raises(ParseError):
        read_trajectory(path)
    path.write_text("#something-else v1\n")
    with pytest.raises(ParseError):
        read_trajectory(path)


def test_dataset_round_trip(tmp_path, rng):
    data = TrajectoryDataset.from_continuous([rng.normal(size=(n, 1)) for n in (5, 9, 3)],
                                             metadata={"seed": "7", "system": "1d"})
    manifest = write_dataset(tmp_path / "ds", data)
    back = read_dataset(manifest)
    assert back.metadata == {"seed": "7", "system": "1d", "n_aborted": "0"}
    assert [t.tobytes() for t in back] == [t.tobytes() for t in data]
    # rewriting the loaded dataset reproduces every byte
    manifest2 = write_dataset(tmp_path / "ds2", back)
    assert open(manifest, "rb").read() == open(manifest2, "rb").read()


def test_dataset_missing_file(tmp_path, rng):
    data = TrajectoryDataset.from_discrete([np.array([0, 1, 0]), np.array([1, 1])])
    manifest = write_dataset(tmp_path, data)
    (tmp_path / "traj_00001.txt").unlink()
    with pytest.raises(ParseError, match="traj_00001.txt") as info:
        read_dataset(manifest)
    assert info.value.line == 3


def _assert_same_text(model, tmp_path):
    path = tmp_path / "model.txt"
    write_model(path, model)
    back = read_model(path)
    assert dumps_model(back) == path.read_text()
    return back


def test_discrete_model_round_trip(tmp_path, rng):
    data = TrajectoryDataset.from_discrete(list(rng.integers(0, 2, size=(3, 200))))
    oom = fit_discrete(data, LearnerConfig(m=2, L=2, D1=4, D2=4))
    back = _assert_same_text(oom, tmp_path)
    assert back.omega.tobytes() == oom.omega.tobytes()
    assert back.xi.tobytes() == oom.xi.tobytes()
    assert back.flavor == "equilibrium"
    assert back.probability([0, 1, 1]) == oom.probability([0, 1, 1])


def test_binless_model_round_trip(tmp_path, rng):
    data = TrajectoryDataset.from_continuous([rng.normal(size=(60, 2)) for _ in range(2)])
    b = fit_binless(data, LearnerConfig(m=3, L=2, D1=10, D2=10, seed=4))
    back = _assert_same_text(b, tmp_path)
    for name in ("omega", "sigma", "points", "left", "right"):
        assert getattr(back, name).tobytes() == getattr(b, name).tobytes()
    assert back.feature_map.centers.tobytes() == b.feature_map.centers.tobytes()


def test_coarse_model_round_trip(tmp_path, rng):
    data = TrajectoryDataset.from_continuous([rng.random(300)])
    coarse = coarse_grain_learn(data, BinSpec.uniform(0.0, 1.0, 4), LearnerConfig(m=2, L=1, D1=4, D2=4))
    back = _assert_same_text(coarse, tmp_path)
    np.testing.assert_array_equal(back.bins.edges[0], coarse.bins.edges[0])
    assert back.bin_probabilities().tobytes() == coarse.bin_probabilities().tobytes()


def test_model_parse_errors():
    text = dumps_model(markov_chain_oom(np.array([[0.9, 0.1], [0.2, 0.8]])))
    with pytest.raises(ParseError):
        loads_model(text.replace("[sigma]", "[sigmaa]"))
    lines = text.splitlines()
    i = lines.index("[omega]") + 1
    lines[i] = "0.5 abc"
    with pytest.raises(ParseError) as info:
        loads_model("\n".join(lines) + "\n")
    assert info.value.line == i + 1
