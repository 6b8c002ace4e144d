#!/usr/bin/env python3
"""Generate the frozen convolution reference fixture.

Standalone scalar implementation, independent of the Rust code paths it
checks. Uses an explicit LCG so the fixture is reproducible regardless of
language RNG details. Output is committed at
crates/core/tests/fixtures/conv_oracle.json; rerun only if the fixture
shape ever needs to change.
"""

import json
import pathlib

T, C_I, H, W = 2, 2, 4, 4
C_O, K, STRIDE, PAD = 3, 3, 1, 1
SEED = 0x5EED


class Lcg:
    """Numerical Recipes LCG, 32-bit state."""

    def __init__(self, seed):
        self.state = seed & 0xFFFFFFFF

    def next(self):
        self.state = (1664525 * self.state + 1013904223) & 0xFFFFFFFF
        return self.state

    def below(self, n):
        # low LCG bits cycle; draw from the upper half of the state
        return (self.next() >> 16) % n


def main():
    rng = Lcg(SEED)
    spikes = [rng.below(2) for _ in range(T * C_I * H * W)]
    weights = [rng.below(15) - 7 for _ in range(C_O * C_I * K * K)]

    h_o = (H + 2 * PAD - K) // STRIDE + 1
    w_o = (W + 2 * PAD - K) // STRIDE + 1

    def spike_at(t, c, y, x):
        if y < 0 or x < 0 or y >= H or x >= W:
            return 0
        return spikes[((t * C_I + c) * H + y) * W + x]

    def weight_at(co, ci, ky, kx):
        return weights[((co * C_I + ci) * K + ky) * K + kx]

    expected = []
    for t in range(T):
        for co in range(C_O):
            for yo in range(h_o):
                for xo in range(w_o):
                    acc = 0
                    for ci in range(C_I):
                        for ky in range(K):
                            for kx in range(K):
                                y = yo * STRIDE + ky - PAD
                                x = xo * STRIDE + kx - PAD
                                acc += spike_at(t, ci, y, x) * weight_at(co, ci, ky, kx)
                    expected.append(acc)

    fixture = {
        "t": T,
        "c_i": C_I,
        "h": H,
        "w": W,
        "c_o": C_O,
        "k": K,
        "stride": STRIDE,
        "pad": PAD,
        "h_o": h_o,
        "w_o": w_o,
        "input": spikes,
        "weights": weights,
        "expected": expected,
    }
    out = pathlib.Path(__file__).resolve().parents[1] / "crates/core/tests/fixtures/conv_oracle.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=1) + "\n")
    print(f"wrote {out} ({len(expected)} psums)")


if __name__ == "__main__":
    main()
