import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gradcheck import model_errors
from wpcn_relay.neural import (
    ARCHITECTURES,
    SC_KERNELS,
    SKIN_KERNELS,
    ArchSpec,
    Model,
    ce_loss,
    encode_targets,
    make_arch,
    make_rel_net,
    make_sc_net,
    make_skin_net,
    make_student,
    param_count,
)
from wpcn_relay.neural.layers import BatchNorm


def conv(cin, cout, kh, kw):
    return cin * cout * kh * kw + cout


def sc_count(n, k):
    """Hand count of the SC-NET layer stack."""
    kh, kw = SC_KERNELS[(n, k)]
    nodes = [16, 64, 64, 32, 32, 16, 10]
    total = conv(1, 16, 4, 4) + 2 * 16
    for cin, cout in zip(nodes[:-2], nodes[1:-1]):
        total += conv(cin, cout, kh, kw) + 2 * cout
    total += conv(16, 10, 1, 1) + 2 * 10
    return total + conv(10 + 16, 1, 1, 1)


class TestCounts:
    @pytest.mark.parametrize("n, expected", [(1, 35961), (2, 53369), (3, 79481), (4, 140409), (5, 175225)])
    def test_sc_net_by_size(self, n, expected):
        assert param_count(make_sc_net(n, 2)) == expected == sc_count(n, 2)

    @pytest.mark.parametrize("name, expected", [("skin-net", 26401), ("rel-net", 12571), ("stu-sc-net", 649)])
    def test_reference_networks(self, name, expected):
        assert param_count(make_arch(name, 3, 2)) == expected

    def test_rel_net_by_hand(self):
        # 16 inputs -> 128 -> 64 -> 27 with two batch norms
        assert param_count(make_rel_net(3, 2)) == 17 * 128 + 256 + 129 * 64 + 128 + 65 * 27

    def test_kernel_tables_cover_sizes(self):
        assert set(SC_KERNELS) == set(SKIN_KERNELS) == {(n, 2) for n in range(1, 6)}

    def test_unsupported_size(self):
        with pytest.raises(ValueError):
            make_sc_net(6, 2)


class TestForward:
    @pytest.mark.parametrize("name", sorted(ARCHITECTURES))
    def test_output_shapes(self, rng, name):
        arch = make_arch(name, 3, 2)
        z = Model(arch, seed=0).forward(rng.normal(size=(5, 4, 4)))
        assert z.shape == (5,) + arch.class_shape

    def test_zero_head_gives_uniform_logits(self, rng):
        z = Model(make_sc_net(3, 2), seed=4).forward(rng.normal(size=(3, 4, 4)))
        assert_array_equal(z, 0.0)

    def test_rejects_wrong_input(self):
        with pytest.raises(ValueError):
            Model(make_sc_net(3, 2)).forward(np.zeros((2, 3, 4)))

    def test_skip_doubles_back_the_stem(self):
        arch = make_sc_net(3, 2)
        kinds = [l.kind for l in arch.layers]
        assert "skip" in kinds
        skip = arch.layers[kinds.index("skip")]
        assert arch.layers[skip.source].kind == "relu"

    def test_chunked_logits_match(self, rng):
        m = Model(make_student(n=3, k=2), seed=1)
        m.params[-1][:] = 0.3  # make the head non-trivial
        X = rng.normal(size=(10, 4, 4))
        assert_allclose(m.logits(X, batch_size=3), m.forward(X))


class TestGradients:
    @pytest.mark.parametrize("builder", [
        lambda: make_student((4, 4, 3, 3), 2, 2),
        lambda: make_sc_net(1, 2, nodes=(3, 4, 4, 2)),
        lambda: make_skin_net(1, 2, nodes=(8, 8, 8)),
        lambda: make_rel_net(2, 2, hidden=(6, 5)),
    ])
    def test_model_gradients(self, rng, builder):
        arch = builder()
        model = Model(arch, seed=3)
        # random head and batch-norm affine terms keep activations off the ReLU kink
        model.params[-2][:] = rng.normal(size=model.params[-2].shape)
        for layer in model.layers:
            if isinstance(layer, BatchNorm):
                layer.params[0][:] = rng.uniform(0.5, 1.5, size=layer.params[0].shape)
                layer.params[1][:] = rng.normal(size=layer.params[1].shape)
        X = rng.normal(size=(6,) + arch.input_shape)
        y = encode_targets(arch, rng.integers(0, arch.n_relays + 1, size=(6, arch.n_sources)))
        loss = lambda z, t: ce_loss(z, t, return_grad=True)
        assert max(model_errors(model, X, y, loss)) < 1e-4


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        m = Model(make_sc_net(2, 2), seed=2)
        for p in m.params:
            p += rng.normal(size=p.shape)
        m.layers[1].running_mean[:] = 0.7
        m.save(tmp_path / "m.json", normalization={"mean": [1.0]})
        m2 = Model.load(tmp_path / "m.json")
        X = rng.normal(size=(4, 3, 4))
        assert_array_equal(m2.forward(X), m.forward(X))
        assert m2.normalization == {"mean": [1.0]}

    def test_trainable_length_equals_count(self):
        m = Model(make_sc_net(3, 2), seed=0)
        d = json.loads(json.dumps(m.to_dict()))
        n = sum(int(np.prod(b["shape"])) for b in d["arrays"] if b["trainable"])
        assert n == d["param_count"] == 79481

    def test_rejects_other_formats(self):
        with pytest.raises(ValueError):
            Model.from_dict({"format": "other"})

    def test_arch_json_round_trip(self):
        arch = make_skin_net(3, 2)
        assert ArchSpec.from_dict(json.loads(arch.to_json())) == arch

    def test_set_weights_checks_shapes(self):
        m = Model(make_student(n=3, k=2), seed=None)
        with pytest.raises(ValueError):
            m.set_weights([np.zeros(1)])
