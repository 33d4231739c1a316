"""Tests for forward models."""
import numpy as np
import pytest

from multical.exceptions import DomainError
from multical.schemas.models import MogiParams
from multical.services.forward import (
    SECONDS_PER_YEAR,
    available_models,
    get_forward_model,
    lim_reality,
    mogi_displacement_3d,
    mogi_los,
    project_los,
    toy_sine,
    toy_trig2d,
)


@pytest.fixture
def mogi():
    return MogiParams(x=0.0, y=0.0, depth=2000.0, dv=0.1, nu=0.25)


def test_mogi_directly_above_source_is_vertical(mogi):
    u = mogi_displacement_3d(mogi, np.array([0.0, 0.0]))
    expected_up = (1.0 - 0.25) * 0.1 / (np.pi * 2000.0**2)
    np.testing.assert_allclose(u, [0.0, 0.0, expected_up])


def test_mogi_is_radially_symmetric(mogi):
    u = mogi_displacement_3d(mogi, np.array([[1000.0, 0.0], [0.0, 1000.0]]))
    assert u[0, 0] == pytest.approx(u[1, 1])
    assert u[0, 2] == pytest.approx(u[1, 2])
    assert u[0, 1] == pytest.approx(0.0)


def test_mogi_decays_with_distance(mogi):
    pts = np.column_stack([np.linspace(0.0, 10000.0, 20), np.zeros(20)])
    up = mogi_displacement_3d(mogi, pts)[:, 2]
    assert np.all(np.diff(up) < 0)


def test_los_projection_and_units(mogi):
    pts = np.array([[500.0, -300.0]])
    look = np.array([0.6, 0.0, 0.8])
    u = mogi_displacement_3d(mogi, pts)
    los = mogi_los(mogi, pts, look)
    assert los[0] == pytest.approx(float(u[0] @ look) * SECONDS_PER_YEAR)


def test_los_defaults_to_vertical(mogi):
    pts = np.array([[500.0, 250.0]])
    los = mogi_los(mogi, pts)
    assert los[0] == pytest.approx(mogi_displacement_3d(mogi, pts)[0, 2] * SECONDS_PER_YEAR)


def test_project_los_requires_unit_vector():
    with pytest.raises(DomainError):
        project_los(np.ones(3), np.array([1.0, 1.0, 0.0]))


def test_toy_models():
    assert toy_sine(np.pi / 2, 1.0) == pytest.approx(1.0)
    x = np.array([[0.2, 0.7]])
    assert toy_trig2d([1.0, 2.0], x)[0] == pytest.approx(1.0 + 2.0 * np.sin(1.0))
    expected = ((30.0 + 5.0 * 0.2 * np.sin(1.0)) * (4.0 + np.exp(-3.5)) - 100.0) / 6.0
    assert lim_reality(x)[0] == pytest.approx(expected)


def test_registry():
    assert set(available_models()) == {"mogi", "toy_sine", "toy_mean", "toy_trig2d"}
    model = get_forward_model("toy_sine")
    np.testing.assert_allclose(model.evaluate([1.0], np.array([0.0, np.pi / 2])), [0.0, 1.0])
    with pytest.raises(DomainError):
        get_forward_model("unknown")


def test_forward_model_checks_shapes():
    model = get_forward_model("mogi")
    with pytest.raises(DomainError):
        model.evaluate([0.0, 0.0, 1000.0], np.zeros((3, 2)))
    with pytest.raises(DomainError):
        model.evaluate([0.0, 0.0, 1000.0, 0.1, 0.25], np.zeros((3, 1)))
