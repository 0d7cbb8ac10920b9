"""Freezes luma PSNR / SSIM reference values computed with scikit-image.

Pairs come from a splitmix64 stream that tests/support/splitmix.hpp
reproduces bit for bit.
"""
import sys

import numpy as np
from skimage.metrics import structural_similarity

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n):
        return self.next() % n


def make_pair(rng):
    h = 24 + rng.below(17)
    w = 24 + rng.below(17)
    border = 2 + rng.below(3)
    noise = 0.02 + 0.2 * rng.uniform()
    target = np.empty((3, h, w))
    pred = np.empty((3, h, w))
    for c in range(3):
        for i in range(h):
            for j in range(w):
                target[c, i, j] = rng.uniform()
    for c in range(3):
        for i in range(h):
            for j in range(w):
                v = target[c, i, j] + noise * (rng.uniform() - 0.5)
                pred[c, i, j] = min(1.0, max(0.0, v))
    return pred, target, border


def luma(x):
    return 16.0 + 65.481 * x[0] + 128.553 * x[1] + 24.966 * x[2]


def main():
    rng = SplitMix64(20240601)
    out = sys.stdout
    out.write("// Generated by gen_metric_oracles.py; do not edit.\n")
    out.write("// {psnr_db, ssim} per pair of the splitmix64 stream seeded 20240601.\n")
    for _ in range(20):
        pred, target, b = make_pair(rng)
        ya = luma(pred)[b:-b, b:-b]
        yb = luma(target)[b:-b, b:-b]
        mse = np.mean((ya - yb) ** 2)
        psnr = 10.0 * np.log10(255.0 ** 2 / mse)
        ssim = structural_similarity(ya, yb, win_size=11, gaussian_weights=True,
                                     sigma=1.5, use_sample_covariance=False,
                                     data_range=255.0, K1=0.01, K2=0.03)
        out.write("{%.17g, %.17g},\n" % (psnr, ssim))


if __name__ == "__main__":
    main()
