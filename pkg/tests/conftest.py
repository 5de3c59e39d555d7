import numpy as np
import pytest

import modeconn.network as net
from modeconn.rng import SplitMix64


def random_params(widths, seed, activation=net.RELU, slope=0.0,
                  loss=net.CROSS_ENTROPY, scale=1.0):
    """Random parameter point with nonzero biases (unlike init_params)."""
    arch = net.NetworkArch(widths, activation, slope, loss)
    rng = np.random.default_rng(seed)
    weights = [
        scale * rng.standard_normal((widths[i], widths[i + 1])) / np.sqrt(widths[i])
        for i in range(len(widths) - 1)
    ]
    biases = [0.1 * rng.standard_normal(w) for w in widths[1:-1]]
    return net.Params(arch, weights, biases)


def onehot_data(n, dim, classes, seed, spread=2.0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, n)
    x = rng.standard_normal((n, dim))
    x[:, 0] += spread * labels
    t = np.zeros((n, classes))
    t[np.arange(n), labels] = 1.0
    return net.Dataset(x, t)


def regression_data(n, dim, out_dim, seed):
    rng = np.random.default_rng(seed)
    return net.Dataset(rng.standard_normal((n, dim)),
                       rng.uniform(-1.0, 1.0, (n, out_dim)))


def zero_neuron(params, layer, idx):
    """Make one hidden neuron pure zero in place; returns params."""
    params.weights[layer - 1][:, idx] = 0.0
    params.biases[layer - 1][idx] = 0.0
    params.weights[layer][idx, :] = 0.0
    return params


@pytest.fixture
def blobs_small():
    from modeconn.data import DataSpec, generate

    return generate(DataSpec(kind="blobs", n=80, dim=2, classes=2, noise=0.4, seed=3))


def make_digit_corpus(n, seed=0, side=28, classes=10, noise=0.2, shift=5,
                      contamination=0.35, amplitude=(0.5, 1.5)):
    """Synthetic digit-like image corpus: ten seeded smooth prototype glyphs
    with per-sample amplitude jitter, cross-class contamination, circular
    shifts and pixel noise, quantized to uint8.

    Stands in for real handwritten digits when no IDX corpus is available in
    the environment; written and read through the same IDX machinery.  The
    within-class variation is what makes narrow networks struggle.
    """
    rng = SplitMix64(seed)
    protos = []
    coarse = side // 4
    for _ in range(classes):
        base = rng.normal_block(coarse * coarse).reshape(coarse, coarse)
        up = np.kron(base, np.ones((4, 4)))
        # cheap smoothing pass to make blobby strokes
        sm = up.copy()
        for ax in (0, 1):
            sm = 0.5 * sm + 0.25 * (np.roll(sm, 1, axis=ax) + np.roll(sm, -1, axis=ax))
        sm = (sm - sm.min()) / (sm.max() - sm.min())
        protos.append(sm * (sm > 0.55))
    labels = np.arange(n, dtype=np.int64) % classes
    labels = labels[rng.permutation(n)]
    images = np.empty((n, side, side), dtype=np.uint8)
    for i in range(n):
        k = labels[i]
        other = rng.randbelow(classes)
        amp = amplitude[0] + (amplitude[1] - amplitude[0]) * rng.next_float()
        img = amp * protos[k] + contamination * rng.next_float() * protos[other]
        dx = rng.randbelow(2 * shift + 1) - shift
        dy = rng.randbelow(2 * shift + 1) - shift
        img = np.roll(np.roll(img, dx, axis=0), dy, axis=1)
        img = img + noise * rng.normal_block(side * side).reshape(side, side)
        images[i] = np.clip(img * 255.0, 0.0, 255.0).astype(np.uint8)
    return images, labels.astype(np.uint8)
