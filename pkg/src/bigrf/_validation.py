"""Input checks shared by the estimator classes."""

import numpy as np
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import validate_data

from .data import Dataset


def as_dataset(estimator, X, y, classes=None, reset=True):
    """Validate ``(X, y)`` and encode labels as class ids.

    Sets ``n_features_in_`` on ``estimator`` when ``reset``. Returns the
    Dataset and the sorted array of original class labels.
    """
    X, y = validate_data(estimator, X, y, dtype=np.float64, reset=reset)
    check_classification_targets(y)
    if classes is None:
        classes, encoded = np.unique(y, return_inverse=True)
    else:
        classes = np.asarray(classes)
        encoded = np.searchsorted(classes, y)
        if np.any(encoded >= classes.size) or np.any(classes[np.minimum(encoded, classes.size - 1)] != y):
            raise ValueError("y contains labels not in classes={}".format(classes.tolist()))
    ds = Dataset(X, encoded.astype(np.int64), n_classes=max(classes.size, 1))
    return ds, classes


def check_features(estimator, X):
    return validate_data(estimator, X, dtype=np.float64, reset=False)


def resolve_seed(random_state):
    """Turn ``random_state`` into a plain integer master seed."""
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2 ** 63))
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(np.iinfo(np.int32).max))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2 ** 63))
    raise ValueError("random_state must be None, an int, a RandomState or a Generator")
