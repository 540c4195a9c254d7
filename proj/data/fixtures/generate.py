"""Regenerates the bundled trace fixtures. Deterministic (fixed seeds)."""
import json
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def write_trace(path, ticks, values):
    with open(path, "w", encoding="utf-8") as f:
        f.write("timestamp,value\n")
        for t, v in zip(ticks, values):
            f.write(f"{t},{v:.4f}\n")


def main():
    rng = np.random.default_rng(20240601)
    # 20-sample scalar random walk observed with unit-variance-ish noise.
    walk = 10.0 + np.cumsum(rng.normal(0.0, np.sqrt(0.1), 20))
    write_trace(HERE / "ekf_20.csv", range(20), walk + rng.normal(0.0, np.sqrt(0.1), 20))

    # Two ground nodes measuring the same slowly varying temperature; node 2
    # has a few isolated spikes and misses some ticks.
    ticks = np.arange(200)
    truth = 21.0 + 1.5 * np.sin(2 * np.pi * ticks / 150.0)
    node1 = truth + rng.normal(0.0, 0.15, ticks.size)
    node2 = truth + 0.1 + rng.normal(0.0, 0.2, ticks.size)
    node2[[40, 95, 160]] += [6.0, -5.0, 8.0]
    keep2 = np.ones(ticks.size, dtype=bool)
    keep2[[10, 11, 70, 130]] = False
    write_trace(HERE / "temperature_node1.csv", ticks, node1)
    write_trace(HERE / "temperature_node2.csv", ticks[keep2], node2[keep2])

    with open(HERE / "k3.json", "w", encoding="utf-8") as f:
        json.dump({"n": 3, "edges": [[0, 1], [1, 2], [0, 2]], "values": [1.0, 2.0, 3.0]}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
