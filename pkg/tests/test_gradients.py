import numpy as np
import pytest

from matinfo import losses as L
from matinfo.sandbox import Encoder, SandboxConfig
from matinfo.sandbox.train import siamese_objective

from gradcheck import ALL_CHECKS, H
from oracles import central_difference, relative_error

TOL = 1e-4


@pytest.mark.parametrize("name", sorted(ALL_CHECKS))
def test_matches_central_differences(name):
    errs = ALL_CHECKS[name](n=20, seed=1)
    assert len(errs) >= 20
    assert max(errs) <= TOL


class TestSpecialCases:
    def test_tcr_gradient_at_zero(self):
        np.testing.assert_array_equal(L.tcr_gradient(np.zeros((3, 4)), 1.0), np.zeros((3, 4)))

    def test_tcr_directional_derivative(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((4, 6))
        g = L.tcr_gradient(z, 1.0)
        for _ in range(5):
            e = rng.standard_normal(z.shape)
            f = lambda t: np.linalg.slogdet(np.eye(4) + (z + t * e) @ (z + t * e).T)[1]  # noqa: E731
            numeric = (f(H) - f(-H)) / (2 * H)
            assert np.sum(g * e) == pytest.approx(numeric, rel=1e-6)

    def test_umae_gradient_zero_for_orthogonal(self):
        np.testing.assert_allclose(L.umae_grad(np.eye(3), 1.0, 1.0), np.zeros((3, 3)), atol=1e-15)


@pytest.mark.parametrize("loss", ["barlow", "spectral", "infonce"])
def test_siamese_end_to_end(loss):
    config = SandboxConfig(loss=loss, n_patches=4, patch_size=2, d=3, hidden=5, batch=6, n_samples=6)
    x = np.random.default_rng(3).standard_normal((8, 6))
    errs = []
    for kind in ("mlp", "affine"):
        enc = Encoder(8, 3, hidden=5, kind=kind, rng=np.random.default_rng(4))

        def total():
            return siamese_objective(config, enc, x, np.random.default_rng(5))

        _, grads, _, _ = total()
        for key in sorted(enc.params):
            original = enc.params[key].copy()

            def f(a, key=key):
                enc.params[key] = a
                return total()[0].total

            numeric = central_difference(f, original, H)
            enc.params[key] = original
            errs.append(relative_error(grads[key], numeric))
    assert max(errs) <= TOL
