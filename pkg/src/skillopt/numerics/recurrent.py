from __future__ import annotations

import numpy as np

from .layers import gru_cell_backward, gru_cell_forward, lstm_cell_backward, lstm_cell_forward
from .params import ParamStore


class RecurrentStack:
    """Stack of GRU- or LSTM-style cells run over the time axis of (B, T, in).

    Parameters live in ``store`` under ``{prefix}.{layer}.{Wx,Wh,bx,bh}``.
    Initial hidden (and cell) states are zero.
    """

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, hidden: int,
                 layers: int, cell: str, rng: np.random.Generator):
        if cell not in ("gru", "lstm"):
            raise ValueError(f"unknown cell type {cell!r}")
        self.store, self.prefix = store, prefix
        self.hidden, self.layers, self.cell = hidden, layers, cell
        g = 3 if cell == "gru" else 4
        for l in range(layers):
            d_in = in_dim if l == 0 else hidden
            s = 1.0 / np.sqrt(hidden)
            p = f"{prefix}.{l}"
            store.add(f"{p}.Wx", rng.uniform(-s, s, (d_in, g * hidden)))
            store.add(f"{p}.Wh", rng.uniform(-s, s, (hidden, g * hidden)))
            bx = np.zeros(g * hidden)
            if cell == "lstm":
                bx[hidden:2 * hidden] = 1.0  # forget-gate bias
            store.add(f"{p}.bx", bx)
            store.add(f"{p}.bh", np.zeros(g * hidden))

    def _p(self, l: int):
        s, p = self.store, f"{self.prefix}.{l}"
        return s[f"{p}.Wx"], s[f"{p}.Wh"], s[f"{p}.bx"], s[f"{p}.bh"]

    def forward(self, xs: np.ndarray):
        B, T, _ = xs.shape
        caches = []
        inp = xs
        for l in range(self.layers):
            Wx, Wh, bx, bh = self._p(l)
            h = np.zeros((B, self.hidden))
            state = (h, np.zeros((B, self.hidden)))
            outs = np.empty((B, T, self.hidden))
            layer_cache = []
            for t in range(T):
                if self.cell == "gru":
                    h, c = gru_cell_forward(inp[:, t], h, Wx, Wh, bx, bh)
                else:
                    state, c = lstm_cell_forward(inp[:, t], state, Wx, Wh, bx, bh)
                    h = state[0]
                outs[:, t] = h
                layer_cache.append(c)
            caches.append(layer_cache)
            inp = outs
        return inp, caches

    def backward(self, dhs: np.ndarray, caches) -> np.ndarray:
        """Backprop through time; ``dhs`` is d(loss)/d(top-layer outputs)."""
        B, T, _ = dhs.shape
        dout = dhs
        for l in reversed(range(self.layers)):
            p = f"{self.prefix}.{l}"
            layer_cache = caches[l]
            din = None
            dWx = dWh = dbx = dbh = 0.0
            carry_h = np.zeros((B, self.hidden))
            carry_c = np.zeros((B, self.hidden))
            for t in reversed(range(T)):
                dh = dout[:, t] + carry_h
                if self.cell == "gru":
                    dx, carry_h, gWx, gWh, gbx, gbh = gru_cell_backward(dh, layer_cache[t])
                else:
                    dx, (carry_h, carry_c), gWx, gWh, gbx, gbh = lstm_cell_backward((dh, carry_c), layer_cache[t])
                if din is None:
                    din = np.empty((B, T, dx.shape[-1]))
                din[:, t] = dx
                dWx = dWx + gWx
                dWh = dWh + gWh
                dbx = dbx + gbx
                dbh = dbh + gbh
            self.store.accumulate(f"{p}.Wx", dWx)
            self.store.accumulate(f"{p}.Wh", dWh)
            self.store.accumulate(f"{p}.bx", dbx)
            self.store.accumulate(f"{p}.bh", dbh)
            dout = din
        return dout
