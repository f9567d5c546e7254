"""Shared test oracles: brute-force DFT, finite differences, pitch estimation.

These stay deliberately independent of the package's own kernels so the two
code paths can disagree.
"""

import numpy as np


def naive_dft(x):
    """O(N^2) DFT via the explicit transform matrix."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    matrix = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ matrix.T


def naive_power_spectrum(frame, fft_size, taper=None):
    frame = np.asarray(frame, dtype=np.float64)
    if taper is not None:
        frame = frame * taper
    padded = np.zeros(fft_size)
    padded[: frame.size] = frame
    spectrum = naive_dft(padded)
    return (np.abs(spectrum) ** 2 / fft_size)[: fft_size // 2 + 1]


def rel_err(got, want):
    """Norm-wise relative error, safe near zero."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = max(np.max(np.abs(want)), 1e-12)
    return np.max(np.abs(got - want)) / denom


def fd_gradcheck(layer, x, rng, h=1e-5):
    """Central finite differences vs the layer's backward pass.

    Uses the linear functional loss = sum(R * forward(x)) with a fixed random
    R, so d(loss)/d(output) = R exactly. Returns the worst norm-wise relative
    error over the input gradient and every parameter gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    out = layer.forward(x, training=False)
    r = rng.standard_normal(out.shape)

    def loss_at():
        return float(np.sum(r * layer.forward(x, training=False)))

    layer.zero_grad()
    layer.forward(x, training=False)
    gx = layer.backward(r)

    worst = 0.0
    # input gradient
    fd = np.zeros_like(x)
    flat_x = x.reshape(-1)
    fd_flat = fd.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up = loss_at()
        flat_x[i] = orig - h
        down = loss_at()
        flat_x[i] = orig
        fd_flat[i] = (up - down) / (2 * h)
    worst = max(worst, rel_err(gx, fd))

    for p in layer.params:
        fd_p = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        fd_flat = fd_p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at()
            flat[i] = orig - h
            down = loss_at()
            flat[i] = orig
            fd_flat[i] = (up - down) / (2 * h)
        worst = max(worst, rel_err(p.grad, fd_p))
    return worst


def autocorr_pitch(samples, sample_rate, fmin=60.0, fmax=320.0):
    """Fundamental estimate from the autocorrelation peak, with parabolic
    interpolation around the winning lag."""
    x = np.asarray(samples, dtype=np.float64)
    # use the most energetic 0.5 s stretch so pauses don't dilute the peak
    win = min(x.size, sample_rate // 2)
    energy = np.convolve(x * x, np.ones(win), mode="valid")
    start = int(np.argmax(energy))
    seg = x[start : start + win]
    seg = seg - seg.mean()
    ac = np.correlate(seg, seg, mode="full")[seg.size - 1 :]
    lo = int(sample_rate / fmax)
    hi = int(sample_rate / fmin)
    lag = lo + int(np.argmax(ac[lo : hi + 1]))
    if 0 < lag < ac.size - 1:
        a, b, c = ac[lag - 1], ac[lag], ac[lag + 1]
        denom = a - 2 * b + c
        if denom != 0:
            lag = lag + 0.5 * (a - c) / denom
    return sample_rate / lag
