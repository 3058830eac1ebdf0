"""Reference MS-SSIM values for the fixed test patterns used in metrics_test.cpp."""
import math

import torch
import torch.nn.functional as F
from pytorch_msssim import ms_ssim
from pytorch_msssim.ssim import _fspecial_gauss_1d, _ssim

WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]


def pattern(h, w):
    x = torch.zeros(1, 3, h, w, dtype=torch.float64)
    for c in range(3):
        for y in range(h):
            for xx in range(w):
                v = 0.5 + 0.5 * math.sin(0.31 * xx + 1.7 * c) * math.cos(0.23 * y - 0.9 * c)
                x[0, c, y, xx] = 1.0 if v > 0.5 else 0.0 if (xx // 8 + y // 8) % 2 else v
    return x


def perturbed(a):
    b = a.clone()
    h, w = a.shape[2:]
    for c in range(3):
        for y in range(h):
            for xx in range(w):
                b[0, c, y, xx] = min(1.0, max(0.0, 0.85 * a[0, c, y, xx] + 0.1 + 0.05 * math.sin(0.7 * xx * (c + 1) + 0.4 * y)))
    return b


def reduced(a, b, levels):
    """The reference loop with the first `levels` weights renormalized."""
    weights = torch.tensor(WEIGHTS[:levels], dtype=a.dtype)
    weights = weights / weights.sum()
    win = _fspecial_gauss_1d(11, 1.5).to(a.dtype).repeat([3, 1, 1, 1])
    mcs = []
    for i in range(levels):
        ssim_pc, cs = _ssim(a, b, win=win, data_range=1.0, size_average=False, K=(0.01, 0.03))
        if i < levels - 1:
            mcs.append(torch.relu(cs))
            padding = [s % 2 for s in a.shape[2:]]
            a = F.avg_pool2d(a, kernel_size=2, padding=padding)
            b = F.avg_pool2d(b, kernel_size=2, padding=padding)
    ssim_pc = torch.relu(ssim_pc)
    vals = torch.stack(mcs + [ssim_pc], dim=0)
    return torch.prod(vals ** weights.view(-1, 1, 1), dim=0).mean().item()


a = pattern(256, 256)
print("inverse_256", repr(ms_ssim(a, 1 - a, data_range=1.0).item()))
print("perturbed_256", repr(ms_ssim(a, perturbed(a), data_range=1.0).item()))
s = pattern(64, 64)
print("perturbed_64_three_scales", repr(reduced(s, perturbed(s), 3)))
o = pattern(100, 90)
print("perturbed_100x90_four_scales", repr(reduced(o, perturbed(o), 4)))
