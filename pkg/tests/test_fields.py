import numpy as np
import pytest

from fpme.fields import (
    Field,
    Grid,
    build_grid,
    inner_mask,
    read_field_binary,
    read_field_csv,
    write_field_binary,
    write_field_csv,
)


def test_grid_spacing_examples():
    g = build_grid(1, 8, 4.0)
    assert g.spacing == 1.0
    ax = g.axis()
    assert ax[0] == -4.0 and ax[-1] == 3.0
    assert 0.0 in ax

    g = build_grid(1, 1024, 40.0)
    assert g.spacing == pytest.approx(0.078125)

    g = build_grid(2, 16, 2.0)
    assert g.n_nodes == 256
    assert g.spacing == 0.25


def test_grid_symmetry_up_to_leftmost_node():
    g = build_grid(1, 64, 5.0)
    ax = g.axis()
    # every node except -L has its mirror on the grid
    for x in ax[1:]:
        assert np.any(np.isclose(ax, -x))


def test_grid_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_grid(1, 9, 4.0)
    with pytest.raises(ValueError):
        build_grid(1, 16, -1.0)
    with pytest.raises(ValueError):
        build_grid(3, 16, 1.0)


def test_field_shape_and_finite_checks():
    g = build_grid(1, 16, 1.0)
    with pytest.raises(ValueError):
        Field(g, np.zeros(8))
    with pytest.raises(ValueError):
        Field(g, np.full(16, np.nan))


def test_inner_mask_fraction():
    g = build_grid(1, 64, 8.0)
    m = inner_mask(g, 0.5)
    assert np.all(np.abs(g.axis()[m]) <= 4.0 + 1e-12)
    g2 = build_grid(2, 16, 2.0)
    m2 = inner_mask(g2, 0.5)
    assert m2.shape == (16, 16)


def test_csv_roundtrip(tmp_path):
    g = build_grid(1, 32, 2.0)
    f = Field.from_function(g, lambda x: np.exp(-x * x))
    path = tmp_path / "f.csv"
    write_field_csv(f, path)
    back = read_field_csv(path, g)
    np.testing.assert_allclose(back.values, f.values, rtol=1e-15)


def test_binary_roundtrip(tmp_path):
    g = build_grid(2, 16, 3.0)
    rng = np.random.default_rng(3)
    f = Field(g, rng.random((16, 16)))
    path = tmp_path / "f.bin"
    write_field_binary(f, path, s=0.3)
    back, s = read_field_binary(path)
    assert s == 0.3
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
