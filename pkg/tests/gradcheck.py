"""Central-difference checks of every analytic gradient.

Each ``check_*`` function draws ``n`` random small instances and returns the
list of relative errors between the analytic and finite-difference gradients.
"""

import numpy as np

from matinfo import losses as L
from matinfo.measures import tcr
from matinfo.sandbox import SandboxConfig
from matinfo.sandbox.data import make_dataset
from matinfo.sandbox.train import build_model, masked_objective

from oracles import central_difference, relative_error, unit_columns

H = 1e-5


def _shape(rng):
    return int(rng.integers(2, 6)), int(rng.integers(2, 7))


def _pair_check(loss, grad, z1, z2):
    g1, g2 = grad(z1, z2)
    n1 = central_difference(lambda a: loss(a, z2), z1, H)
    n2 = central_difference(lambda a: loss(z1, a), z2, H)
    return relative_error(np.concatenate([g1.ravel(), g2.ravel()]),
                          np.concatenate([n1.ravel(), n2.ravel()]))


def check_tcr(n=20, seed=0):
    rng = np.random.default_rng([seed, 1])
    errs = []
    for _ in range(n):
        d, b = _shape(rng)
        z = rng.standard_normal((d, b))
        mu = float(rng.choice([0.5, 1.0, 3.0]))
        num = central_difference(lambda a: tcr(a, mu).value, z, H)
        errs.append(relative_error(L.tcr_gradient(z, mu), num))
    return errs


def check_barlow(n=20, seed=0):
    rng = np.random.default_rng([seed, 2])
    errs = []
    for _ in range(n):
        d, b = _shape(rng)
        b = max(b, 3)
        lam = float(rng.uniform(0.005, 0.5))
        z1, z2 = rng.standard_normal((d, b)), rng.standard_normal((d, b))
        errs.append(_pair_check(lambda a, c: L.barlow_twins(a, c, lam).total,
                                lambda a, c: L.barlow_twins_grad(a, c, lam), z1, z2))
    return errs


def check_spectral(n=20, seed=0):
    rng = np.random.default_rng([seed, 3])
    errs = []
    for _ in range(n):
        d, b = _shape(rng)
        lam = float(rng.uniform(0.1, 2.0))
        z1, z2 = unit_columns(rng, d, b), unit_columns(rng, d, b)
        errs.append(_pair_check(lambda a, c: L.spectral_contrastive(a, c, lam).total,
                                lambda a, c: L.spectral_contrastive_grad(a, c, lam), z1, z2))
    return errs


def check_infonce(n=20, seed=0):
    rng = np.random.default_rng([seed, 4])
    errs = []
    for _ in range(n):
        d, b = _shape(rng)
        t = float(rng.choice([0.5, 1.0, 2.0]))
        z1, z2 = unit_columns(rng, d, b), unit_columns(rng, d, b)
        errs.append(_pair_check(lambda a, c: L.infonce(a, c, t).total,
                                lambda a, c: L.infonce_grad(a, c, t), z1, z2))
    return errs


def check_mae_output(n=20, seed=0):
    """Gradient of the reconstruction loss with respect to the decoder output."""
    rng = np.random.default_rng([seed, 5])
    errs = []
    for _ in range(n):
        b, npatch, p = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 3))
        samples = [L.mask_sample(rng.standard_normal(npatch * p), npatch, 0.5, seed=int(rng.integers(1 << 30)))
                   for _ in range(b)]
        pred = rng.standard_normal((b, npatch, p))
        num = central_difference(lambda a: L.mae_loss(a, samples).total, pred, H)
        errs.append(relative_error(L.mae_grad(pred, samples), num))
    return errs


def check_regularizer(kind, n=20, seed=0):
    """U-MAE / M-MAE regularizer gradients with respect to Z."""
    rng = np.random.default_rng([seed, 6 if kind == "umae" else 7])
    errs = []
    for _ in range(n):
        d, b = _shape(rng)
        lam = float(rng.uniform(0.01, 1.0))
        mu = float(rng.choice([0.5, 1.0, 3.0]))
        z = unit_columns(rng, d, b)
        if kind == "umae":
            f = lambda a: L.umae_loss(L.LossValue(0.0), a, lam, mu).total  # noqa: E731
            g = L.umae_grad(z, lam, mu)
        else:
            f = lambda a: L.mmae_loss(L.LossValue(0.0), a, lam, mu).total  # noqa: E731
            g = L.mmae_grad(z, lam, mu)
        errs.append(relative_error(g, central_difference(f, z, H)))
    return errs


def _flat(enc, dec):
    parts = [(enc.params, k) for k in sorted(enc.params)] + [(dec.params, k) for k in sorted(dec.params)]
    return parts


def check_end_to_end(loss, n=20, seed=0):
    """Full masked objective differentiated through decoder and MLP encoder.

    The random mask is held fixed by re-seeding the view generator on every
    evaluation; every encoder and decoder parameter is perturbed.
    """
    errs = []
    for i in range(n):
        config = SandboxConfig(loss=loss, n_patches=4, patch_size=2, latent_dim=2, d=3, hidden=5,
                               batch=6, n_samples=6, seed=seed * 1000 + i, mu=[0.5, 1.0, 3.0][i % 3],
                               lam=0.5 if loss != "mae" else 0.0)
        enc, dec = build_model(config)
        x = make_dataset(config).samples.T

        def total():
            rng = np.random.default_rng([config.seed, 99])
            return masked_objective(config, enc, dec, x, rng)

        _, g_enc, g_dec, _ = total()
        analytic, numeric = [], []
        for params, key in _flat(enc, dec):
            grads = g_enc if params is enc.params else g_dec
            original = params[key].copy()

            def f(a, params=params, key=key):
                params[key] = a
                return total()[0].total

            numeric.append(central_difference(f, original, H).ravel())
            params[key] = original
            analytic.append(grads[key].ravel())
        errs.append(relative_error(np.concatenate(analytic), np.concatenate(numeric)))
    return errs


ALL_CHECKS = {
    "tcr": check_tcr,
    "barlow_twins": check_barlow,
    "spectral_contrastive": check_spectral,
    "infonce": check_infonce,
    "mae": lambda n=20, seed=0: check_mae_output(n, seed) + check_end_to_end("mae", n, seed),
    "umae": lambda n=20, seed=0: check_regularizer("umae", n, seed) + check_end_to_end("umae", n, seed),
    "mmae": lambda n=20, seed=0: check_regularizer("mmae", n, seed) + check_end_to_end("mmae", n, seed),
}
