import numpy as np
import pytest

from mangalayout.exceptions import DimensionMismatchError, IdOutOfRangeError
from mangalayout.validation import check_alpha, check_image_batch, check_labels, check_page_dims, check_raster


def test_check_raster_converts():
    rgb = np.zeros((2, 3, 3), np.uint8)
    rgb[..., 0] = 255
    assert check_raster(rgb).tolist() == [[76] * 3] * 2
    assert check_raster(np.array([[0.0, 255.0]])).dtype == np.uint8


@pytest.mark.parametrize("bad", [np.zeros(5), np.zeros((0, 3)), np.array([[300.0]]), np.array([[np.nan]])])
def test_check_raster_rejects(bad):
    with pytest.raises(ValueError):
        check_raster(bad)


def test_page_dims():
    check_page_dims(np.zeros((50, 100)), 100, 50)
    with pytest.raises(DimensionMismatchError):
        check_page_dims(np.zeros((60, 100)), 100, 50)


def test_batches_and_labels():
    assert check_image_batch(np.zeros((2, 3, 4, 4)), channels=3).dtype == np.float32
    with pytest.raises(ValueError):
        check_image_batch(np.zeros((2, 1, 4, 4)), channels=3)
    assert check_labels([0.0, 2.0], 3).tolist() == [0, 2]
    with pytest.raises(IdOutOfRangeError):
        check_labels([3], 3)
    with pytest.raises(ValueError):
        check_labels([0, 1], 3, n_samples=3)


def test_alpha_inclusive():
    assert check_alpha(0) == 0.0 and check_alpha(1) == 1.0
    with pytest.raises(ValueError):
        check_alpha(-0.1)
