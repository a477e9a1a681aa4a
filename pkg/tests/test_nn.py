import math

import numpy as np
import pytest

from zetadp import nn
from zetadp.ctensor import Rng, sample_circular_gaussian
from zetadp.errors import DomainError
from zetadp.wirtinger import forward, gradcheck

from oracles import naive_conv2d

RNG = lambda s: Rng(1000 + s)


def random_points(n, seed, variance=4.0):
    return np.asarray(sample_circular_gaussian((n,), variance, RNG(seed)))


class TestActivationValues:
    def test_crelu(self):
        assert nn.apply_activation("crelu", 1 - 2j) == 1 + 0j

    def test_zrelu_gates_quadrants(self):
        assert nn.apply_activation("zrelu", -1 + 3j) == 0 + 0j
        assert nn.apply_activation("zrelu", 2 + 3j) == 2 + 3j

    def test_cardioid_at_cardinal_angles(self):
        for r in (0.5, 1.0, 3.7):
            z = nn.apply_activation("cardioid", r + 0j)
            assert z == pytest.approx(r, rel=1e-15)
            z = nn.apply_activation("cardioid", r * np.exp(1j * np.pi))
            assert abs(z) < 1e-12

    def test_igaussian_bounded_and_saturating(self):
        pts = random_points(200, 1)
        out = nn.apply_activation("igaussian", pts)
        assert np.all(np.abs(out) < 1.0)
        far = nn.apply_activation("igaussian", 1e6 + 0j)
        assert abs(far) == pytest.approx(1.0, abs=1e-5)

    def test_sep_sigmoid_bound(self):
        out = nn.apply_activation("sep_sigmoid", random_points(200, 2))
        assert np.all(np.abs(out) <= math.sqrt(2.0))

    def test_siglog_bound(self):
        out = nn.apply_activation("siglog", random_points(200, 3))
        assert np.all(np.abs(out) < 1.0)

    def test_cardioid_contraction(self):
        pts = random_points(200, 4)
        out = nn.apply_activation("cardioid", pts)
        assert np.all(np.abs(out) <= np.abs(pts) + 1e-15)

    def test_phase_preservation(self):
        pts = random_points(200, 5)
        for kind in ("modrelu", "igaussian"):
            out = nn.apply_activation(kind, pts)
            nz = np.abs(out) > 0
            dphi = np.angle(out[nz]) - np.angle(pts[nz])
            dphi = (dphi + np.pi) % (2 * np.pi) - np.pi
            assert np.max(np.abs(dphi)) < 1e-9, kind

    def test_zrelu_crelu_identity_on_open_first_quadrant(self):
        pts = np.abs(random_points(100, 6).real) + 1j * np.abs(random_points(100, 7).real)
        pts = pts[np.abs(pts.real) > 1e-9]
        for kind in ("zrelu", "crelu"):
            assert np.allclose(nn.apply_activation(kind, pts), pts, atol=0)

    def test_modrelu_zero_bias_is_near_identity(self):
        pts = random_points(50, 8)
        out = nn.apply_activation("modrelu", pts)
        assert np.allclose(out, pts, rtol=1e-9)

    def test_phase_scaled_activations_vanish_at_origin(self):
        for kind in ("modrelu", "cardioid", "igaussian", "siglog", "zrelu", "crelu"):
            assert nn.apply_activation(kind, 0j) == 0j

    def test_trainable_bias_shifts_cardioid(self):
        z = 2.0 + 0j
        out = nn.apply_activation("trainable_cardioid_single", z, params=np.pi)
        assert abs(out) < 1e-12

    def test_unknown_kind_and_bad_params(self):
        with pytest.raises(DomainError):
            nn.apply_activation("not_an_activation", 1 + 1j)
        with pytest.raises(DomainError):
            nn.apply_activation("crelu", 1 + 1j, params=0.1)


KINK_MARGIN = 1e-3


def _kink_free_points(kind, n, seed):
    """Sample points away from the activation's nondifferentiable set."""
    pts = []
    stream = 0
    while len(pts) < n:
        stream += 1
        for z in np.asarray(sample_circular_gaussian((4 * n,), 4.0, Rng(seed, stream))):
            if kind in ("zrelu", "crelu"):
                ok = min(abs(z.real), abs(z.imag)) > KINK_MARGIN
            else:
                ok = abs(z) > KINK_MARGIN
            if ok:
                pts.append(z)
            if len(pts) == n:
                break
    return np.asarray(pts)


class TestActivationGradients:
    @pytest.mark.parametrize("kind", sorted(nn.ACTIVATIONS))
    def test_gradcheck_at_100_smooth_points(self, kind):
        spec = nn.ACTIVATIONS[kind]
        pts = _kink_free_points(kind, 100, seed=hash(kind) % 1000)

        for i, z in enumerate(pts):
            params = {"z": np.array(z)}
            if spec.trainable == "single":
                params["b"] = np.array(0.3)
            elif spec.trainable == "per_feature":
                params["b"] = np.array(0.3)

            def model(p):
                tape = p["z"].tape
                if spec.takes_bias:
                    bias = p["b"] if spec.trainable else tape.constant(np.zeros(()))
                    w = tape.apply(spec.primitive, p["z"], bias)
                else:
                    w = tape.apply(spec.primitive, p["z"])
                return w * w.conj()

            err = gradcheck(model, params)
            assert err <= 1e-5, f"{kind} at {z}: {err}"


class TestHeads:
    def test_sigmoid_head_at_zero(self):
        assert nn.magnitude_sigmoid_head(0j) == pytest.approx(0.5)

    def test_sigmoid_head_saturation(self):
        assert nn.magnitude_sigmoid_head(1e9 + 0j) == pytest.approx(1.0)

    def test_sigmoid_head_centering(self):
        assert nn.magnitude_sigmoid_head(3 + 4j, centering=5.0) == pytest.approx(0.5)

    def test_softmax_uniform_for_equal_magnitudes(self):
        p = nn.softmax_magnitude_head(np.array([1 + 0j, 1j, -1 + 0j, 0 - 1j]))
        assert np.allclose(p, 0.25, atol=1e-12)

    def test_softmax_argmax(self):
        p = nn.softmax_magnitude_head(np.array([10 + 0j, 0j, 0j]))
        assert np.argmax(p) == 0

    def test_softmax_normalises(self):
        rng = Rng(31)
        for _ in range(20):
            z = np.asarray(sample_circular_gaussian((7,), 3.0, rng))
            p = nn.softmax_magnitude_head(z)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_softmax_global_phase_invariance(self):
        rng = Rng(32)
        z = np.asarray(sample_circular_gaussian((5,), 3.0, rng))
        p0 = nn.softmax_magnitude_head(z)
        p1 = nn.softmax_magnitude_head(z * np.exp(1.234j))
        assert np.max(np.abs(p0 - p1)) < 1e-12


class TestLosses:
    def test_perfect_probability(self):
        p = np.zeros(10)
        p[3] = 1.0
        assert nn.cross_entropy(p, 3) == pytest.approx(0.0, abs=1e-11)

    def test_uniform_ten_classes(self):
        assert nn.cross_entropy(np.full(10, 0.1), 0) == pytest.approx(math.log(10), rel=1e-12)

    def test_bce_at_half(self):
        assert nn.bce(0.5, 0) == pytest.approx(math.log(2), rel=1e-12)
        assert nn.bce(0.5, 1) == pytest.approx(math.log(2), rel=1e-12)

    def test_losses_stay_finite_under_saturation(self):
        assert math.isfinite(nn.cross_entropy(np.array([1.0, 0.0]), 1))
        assert math.isfinite(nn.bce(0.0, 1))

    def test_label_out_of_range(self):
        with pytest.raises(DomainError):
            nn.cross_entropy(np.full(4, 0.25), 4)
        with pytest.raises(DomainError):
            nn.bce(0.5, 2)

    def test_fused_losses_match_composed_forms(self):
        rng = Rng(33)
        z = np.asarray(sample_circular_gaussian((6,), 2.0, rng))
        for label in range(6):
            fused = float(nn._xent_magnitude_value(z, label=label))
            composed = nn.cross_entropy(nn.softmax_magnitude_head(z), label)
            assert fused == pytest.approx(composed, rel=1e-12)
        zs = np.asarray(sample_circular_gaussian((1,), 2.0, rng))
        for label in (0, 1):
            fused = float(nn._bce_magnitude_value(zs, np.array(0.4), label=label))
            composed = nn.bce(nn.magnitude_sigmoid_head(complex(zs[0]), 0.4), label)
            assert fused == pytest.approx(composed, rel=1e-10)


class TestLayers:
    def test_dense_identity(self):
        layer = nn.DenseLayer(np.eye(4, dtype=np.complex128),
                              np.zeros(4, dtype=np.complex128))
        x = np.asarray(sample_circular_gaussian((4,), 1.0, Rng(34)))
        assert np.allclose(nn.dense_forward(layer, x), x, atol=0)

    def test_dense_shape_mismatch(self):
        layer = nn.DenseLayer(np.eye(4, dtype=np.complex128),
                              np.zeros(4, dtype=np.complex128))
        with pytest.raises(DomainError):
            nn.dense_forward(layer, np.zeros(3, dtype=np.complex128))

    def test_conv_one_by_one_kernel(self):
        k = np.zeros((1, 1, 1, 1), dtype=np.complex128)
        k[0, 0, 0, 0] = 1j
        layer = nn.Conv2dLayer(k, np.zeros(1, dtype=np.complex128), 1)
        x = np.full((1, 2, 2), 2 + 0j)
        out = nn.conv2d_forward(layer, x)
        assert np.allclose(out, np.full((1, 2, 2), 2j), atol=0)

    def test_conv_random_against_naive_oracle(self):
        rng = Rng(35)
        x = np.asarray(sample_circular_gaussian((3, 4, 4), 1.0, rng))
        k = np.asarray(sample_circular_gaussian((2, 3, 3, 3), 1.0, rng))
        b = np.asarray(sample_circular_gaussian((2,), 1.0, rng))
        got = nn.conv2d_forward(nn.Conv2dLayer(k, b, 1), x)
        expected = naive_conv2d(x, k, b, 1)
        assert got.shape == expected.shape == (2, 2, 2)
        assert np.max(np.abs(got - expected)) < 1e-12

    def test_conv_stride_two_against_oracle(self):
        rng = Rng(36)
        x = np.asarray(sample_circular_gaussian((2, 6, 5), 1.0, rng))
        k = np.asarray(sample_circular_gaussian((3, 2, 2, 2), 1.0, rng))
        b = np.asarray(sample_circular_gaussian((3,), 1.0, rng))
        got = nn.conv2d_forward(nn.Conv2dLayer(k, b, 2), x)
        expected = naive_conv2d(x, k, b, 2)
        assert np.max(np.abs(got - expected)) < 1e-12

    def test_conv_kernel_too_large(self):
        k = np.zeros((1, 1, 5, 5), dtype=np.complex128)
        layer = nn.Conv2dLayer(k, np.zeros(1, dtype=np.complex128), 1)
        with pytest.raises(DomainError):
            nn.conv2d_forward(layer, np.zeros((1, 4, 4), dtype=np.complex128))

    def test_maxpool_by_magnitude(self):
        x = np.array([[[1 + 0j, 5j], [2 + 0j, 1 + 1j]]])
        out = nn.maxpool2_by_magnitude(x)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 5j


class TestInit:
    def test_weight_second_moment(self):
        arch = nn.Architecture(
            input_shape=(100,),
            layers=(nn.LayerSpec(kind="dense", units=1000),),
            head="softmax_magnitude")
        params = nn.init_params(arch, Rng(37))
        w = params["layer0.weights"]
        n = w.size
        se = math.sqrt(1.0 / n) * 0.01  # Var(|w|^2) = (1/fan_in)^2
        assert abs(np.mean(np.abs(w) ** 2) - 0.01) < 4 * se

    def test_biases_exactly_zero(self):
        arch = nn.Architecture(
            input_shape=(4,),
            layers=(nn.LayerSpec(kind="dense", units=3,
                                 activation="trainable_modrelu"),
                    nn.LayerSpec(kind="dense", units=2)),
            head="softmax_magnitude")
        params = nn.init_params(arch, Rng(38))
        assert np.all(params["layer0.bias"] == 0)
        assert np.all(params["layer0.act_bias"] == 0)
        assert params["layer0.act_bias"].dtype == np.float64
        assert params["layer0.act_bias"].shape == (3,)

    def test_determinism(self):
        arch = nn.Architecture(
            input_shape=(4,),
            layers=(nn.LayerSpec(kind="dense", units=3),),
            head="softmax_magnitude")
        p1 = nn.init_params(arch, Rng(39))
        p2 = nn.init_params(arch, Rng(39))
        for k in p1:
            assert np.array_equal(p1[k], p2[k])

    def test_sigmoid_head_gets_centering(self):
        arch = nn.Architecture(
            input_shape=(4,),
            layers=(nn.LayerSpec(kind="dense", units=1),),
            head="magnitude_sigmoid")
        params = nn.init_params(arch, Rng(40))
        assert params["head.centering"] == 0.0

    def test_head_arity_validation(self):
        with pytest.raises(DomainError):
            nn.Architecture(input_shape=(4,),
                            layers=(nn.LayerSpec(kind="dense", units=3),),
                            head="magnitude_sigmoid")
        with pytest.raises(DomainError):
            nn.Architecture(input_shape=(4,),
                            layers=(nn.LayerSpec(kind="dense", units=1),),
                            head="softmax_magnitude")


class TestTapeVsNumpyForward:
    def test_loss_paths_agree(self):
        arch = nn.Architecture(
            input_shape=(5,),
            layers=(nn.LayerSpec(kind="dense", units=6, activation="igaussian"),
                    nn.LayerSpec(kind="dense", units=3)),
            head="softmax_magnitude")
        rng = Rng(41)
        params = nn.init_params(arch, rng)
        lm = nn.loss_fn(arch)
        for i in range(5):
            x = np.asarray(sample_circular_gaussian((5,), 1.0, rng.stream_at(50 + i)))
            label = i % 3
            tape_loss, _ = forward(lambda p, xv: lm(p, xv, label), params, x)
            probs = nn.predict_scores(arch, params, x)
            assert tape_loss == pytest.approx(nn.cross_entropy(probs, label), rel=1e-12)
