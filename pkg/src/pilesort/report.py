"""Learning-curve reporting: block metrics as CSV plus rendered figures."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .experiment import PickRecord, block_metrics


def write_curves_csv(blocks, path) -> None:
    with open(path, "w") as f:
        f.write("block,success_rate,purity\n")
        for b, rate, purity in blocks:
            purity_field = "" if purity is None else f"{purity:.6f}"
            f.write(f"{b},{rate:.6f},{purity_field}\n")


def read_curves_csv(path):
    blocks = []
    with open(path) as f:
        header = f.readline().strip()
        if header != "block,success_rate,purity":
            raise ValueError(f"{path}: unrecognized curves header")
        for line in f:
            b, rate, purity = line.strip().split(",")
            blocks.append((int(b), float(rate),
                           None if purity == "" else float(purity)))
    return blocks


def render_curves(blocks, path) -> None:
    """Success rate and purity per block of 25 executed picks, side by side."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    xs = [b for b, _, _ in blocks]
    ax1.plot(xs, [rate for _, rate, _ in blocks], "o-", color="tab:blue")
    ax1.set_xlabel("block of 25 picks")
    ax1.set_ylabel("grasp success rate")
    ax1.set_ylim(-0.05, 1.05)
    ax1.grid(alpha=0.3)
    known = [(b, p) for b, _, p in blocks if p is not None]
    ax2.plot([b for b, _ in known], [p for _, p in known], "o-",
             color="tab:orange")
    ax2.set_xlabel("block of 25 picks")
    ax2.set_ylabel("purity")
    ax2.set_ylim(-0.05, 1.05)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(records: list[PickRecord], out_dir, block_size: int = 25) -> None:
    """curves.csv and curves.png under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    blocks = block_metrics(records, block_size)
    write_curves_csv(blocks, os.path.join(out_dir, "curves.csv"))
    render_curves(blocks, os.path.join(out_dir, "curves.png"))
