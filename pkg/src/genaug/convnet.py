"""Desk-scale convolutional classifier in plain numpy.

Three conv/relu/maxpool blocks and a linear head (~100k parameters at 32x32,
100 classes). Forward and backward passes are exact and deterministic given
the init seed and data order; gradients are verified against finite
differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .imagegen import ImageSpec


class SmallConvNet:
    """3-block conv net over NHWC float inputs in [0, 1]."""

    name = "smallconv"

    def __init__(
        self,
        num_classes: int,
        image_spec: ImageSpec,
        seed: int,
        channels: tuple[int, ...] = (16, 32, 64),
    ):
        if image_spec.height % (2 ** len(channels)) or image_spec.width % (2 ** len(channels)):
            raise ValueError(
                f"image dims must be divisible by {2 ** len(channels)} "
                f"for {len(channels)} pooling stages"
            )
        self.num_classes = num_classes
        self.image_spec = image_spec
        self.channels = channels
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        cin = image_spec.channels
        for i, cout in enumerate(channels, 1):
            # He init for relu conv stacks
            self.params[f"w{i}"] = rng.normal(0.0, np.sqrt(2.0 / (9 * cin)), size=(3, 3, cin, cout))
            self.params[f"b{i}"] = np.zeros(cout)
            cin = cout
        fh = image_spec.height // (2 ** len(channels))
        fw = image_spec.width // (2 ** len(channels))
        fan_in = fh * fw * channels[-1]
        self.params["wf"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, num_classes))
        self.params["bf"] = np.zeros(num_classes)

    @staticmethod
    def _conv(x, w, b):
        n, h, wd, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        out = np.zeros((n, h, wd, w.shape[-1]))
        for dy in range(3):
            for dx in range(3):
                out += xp[:, dy : dy + h, dx : dx + wd, :] @ w[dy, dx]
        return out + b

    @staticmethod
    def _conv_back(x, w, dout):
        n, h, wd, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        dw = np.zeros_like(w)
        dxp = np.zeros_like(xp)
        for dy in range(3):
            for dx in range(3):
                patch = xp[:, dy : dy + h, dx : dx + wd, :]
                dw[dy, dx] = np.einsum("nhwc,nhwk->ck", patch, dout)
                dxp[:, dy : dy + h, dx : dx + wd, :] += dout @ w[dy, dx].T
        return dw, dout.sum(axis=(0, 1, 2)), dxp[:, 1:-1, 1:-1, :]

    @staticmethod
    def _pool(x):
        n, h, w, c = x.shape
        xr = x.reshape(n, h // 2, 2, w // 2, 2, c)
        return xr.max(axis=(2, 4)), xr

    @staticmethod
    def _pool_back(xr, pooled, dout):
        mask = xr == pooled[:, :, None, :, None, :]
        counts = mask.sum(axis=(2, 4), keepdims=True)
        g = mask * (dout[:, :, None, :, None, :] / counts)
        n, hh, _, wh, _, c = g.shape
        return g.reshape(n, hh * 2, wh * 2, c)

    def _forward(self, x):
        cache = []
        h = x
        for i in range(1, len(self.channels) + 1):
            z = self._conv(h, self.params[f"w{i}"], self.params[f"b{i}"])
            a = np.maximum(z, 0.0)
            pooled, xr = self._pool(a)
            cache.append((h, z, xr, pooled))
            h = pooled
        flat = h.reshape(h.shape[0], -1)
        logits = flat @ self.params["wf"] + self.params["bf"]
        return logits, cache, flat, h.shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch of NHWC float images."""
        return self._forward(x)[0]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy loss and parameter gradients for one batch."""
        logits, cache, flat, hshape = self._forward(x)
        n = x.shape[0]
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = float(-logp[np.arange(n), y].mean())

        dlogits = np.exp(logp)
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grads = {"wf": flat.T @ dlogits, "bf": dlogits.sum(axis=0)}
        dh = (dlogits @ self.params["wf"].T).reshape(hshape)
        for i in range(len(self.channels), 0, -1):
            hin, z, xr, pooled = cache[i - 1]
            da = self._pool_back(xr, pooled, dh)
            dz = da * (z > 0)
            dw, db, dh = self._conv_back(hin, self.params[f"w{i}"], dz)
            grads[f"w{i}"] = dw
            grads[f"b{i}"] = db
        return loss, grads

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())
