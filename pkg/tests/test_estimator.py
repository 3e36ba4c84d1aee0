import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wpcn_relay.neural import Model, RelayNetClassifier, make_student


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(3)
    return rng.normal(size=(40, 4, 4)), rng.integers(0, 3, size=(40, 3))


def test_get_params_and_clone():
    est = RelayNetClassifier(arch="rel-net", epochs=3, random_state=4)
    params = est.get_params()
    assert params["arch"] == "rel-net" and params["epochs"] == 3
    assert clone(est).get_params() == params


def test_fit_predict_score(data):
    X, y = data
    est = RelayNetClassifier(arch="stu-sc-net", epochs=60, batch_size=40, learning_rate=1e-2)
    assert est.fit(X, y) is est
    pred = est.predict(X)
    assert pred.shape == (40, 3)
    assert_array_equal(est.classes_, [0, 1, 2])
    assert est.score(X, y) == pytest.approx((pred == y).mean())
    assert_allclose(est.predict_proba(X).sum(axis=1), 1.0)
    assert len(est.history_.train_ce) == 61


def test_joint_output_predicts_assignments(data):
    X, y = data
    est = RelayNetClassifier(arch="rel-net", epochs=2).fit(X, y)
    assert est.predict(X).shape == (40, 3)
    assert est.decision_function(X).shape == (40, 27)


def test_from_model(data):
    X, _ = data
    model = Model(make_student(n=3, k=2), seed=1)
    est = RelayNetClassifier.from_model(model)
    assert_array_equal(est.decision_function(X), model.logits(X))


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        RelayNetClassifier().predict(data[0])


@pytest.mark.parametrize("X, y", [
    (np.zeros((5, 3, 4)), np.zeros((5, 3), int)),
    (np.zeros((5, 4, 4)), np.zeros((4, 3), int)),
    (np.zeros((5, 4, 4)), np.full((5, 3), 7)),
    (np.full((5, 4, 4), np.nan), np.zeros((5, 3), int)),
])
def test_input_validation(X, y):
    with pytest.raises(ValueError):
        RelayNetClassifier(arch="stu-sc-net", epochs=1).fit(X, y)


def test_distilling_requires_teacher(data):
    with pytest.raises(ValueError):
        RelayNetClassifier(arch="stu-sc-net", lambda2=0.5, epochs=1).fit(*data)
