import numpy as np
import pytest

from ttgp.errors import DomainError, ParseError
from ttgp.observations import ObservationSet, load_observations, save_observations


def make():
    return ObservationSet((3, 4), np.array([[1, 2], [3, 4], [2, 1]]), np.array([0.5, -1.25, 1e-17]))


def test_round_trip(tmp_path):
    obs = make()
    save_observations(obs, tmp_path / "o.csv")
    back = load_observations(tmp_path / "o.csv")
    assert back.mode_sizes == (3, 4)
    np.testing.assert_array_equal(back.indices, obs.indices)
    np.testing.assert_array_equal(back.values, obs.values)
    assert (tmp_path / "o.csv").read_text().splitlines()[0] == "i_1,i_2,y"


def test_explicit_modes_without_sidecar(tmp_path):
    (tmp_path / "o.csv").write_text("i_1,i_2,y\n1,1,2.0\n")
    assert len(load_observations(tmp_path / "o.csv", (2, 2))) == 1
    with pytest.raises(FileNotFoundError):
        load_observations(tmp_path / "o.csv")


@pytest.mark.parametrize("body", ["i_1,y\n1,2\n", "i_1,i_2,y\n1,2\n", "i_1,i_2,y\n1,x,3\n", ""])
def test_malformed(tmp_path, body):
    (tmp_path / "o.csv").write_text(body)
    with pytest.raises(ParseError):
        load_observations(tmp_path / "o.csv", (3, 3))


def test_out_of_range():
    with pytest.raises(DomainError):
        ObservationSet((3, 4), np.array([[4, 1]]), np.array([1.0]))
    with pytest.raises(DomainError):
        ObservationSet((3, 4), np.array([[0, 1]]), np.array([1.0]))


def test_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        ObservationSet((3, 4), np.array([[1, 1], [1, 1]]), np.array([1.0, 2.0]))


def test_non_finite():
    with pytest.raises(ValueError):
        ObservationSet((3,), np.array([[1]]), np.array([np.inf]))


def test_read_only_and_subset():
    obs = make()
    with pytest.raises(ValueError):
        obs.values[0] = 1.0
    sub = obs.subset([0, 2])
    assert len(sub) == 2 and sub.grid_size == 12 and sub.d == 2
