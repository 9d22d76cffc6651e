"""Shared synthetic data builders and brute-force oracles."""
from __future__ import annotations

import numpy as np
import pytest

from spikecast.ingest import AlignedDataset


def brute_force_spikes(values: np.ndarray, threshold_pct: float = 25.0):
    """Element-wise spike rule, written as the definition reads.

    Returns {index: label} for every index whose predecessor is a usable
    positive price.
    """
    out = {}
    for i in range(1, len(values)):
        prev, cur = values[i - 1], values[i]
        if np.isnan(prev) or np.isnan(cur) or prev <= 0:
            continue
        pct = (cur - prev) / prev * 100.0
        out[i] = 1 if pct > threshold_pct else 0
    return out


def pairwise_auc(scores, labels) -> float:
    """O(n^2) concordance count, the definitional AUC."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def planted_dataset(
    n: int = 64,
    d: int = 12,
    seed: int = 0,
    rule: str = "direct",
    amplitude: float = 1.5,
    noise: float = 0.3,
    spike_rate: float = 0.35,
    flat_prices: bool = False,
) -> AlignedDataset:
    """Synthetic aligned dataset whose labels are readable only from the news.

    The label of step i+1 is planted into the embedding of step i, so a
    window ending at step i carries exactly the information needed to
    forecast its target. Prices carry no signal: pure noise by default, or
    identically zero with flat_prices=True (which also removes the price
    stream as memorization fuel, isolating the news pathway).

    rule="direct": embedding coordinate 0 of step i is +amplitude when step
    i+1 spikes, else -amplitude.
    rule="xor": coordinates 0 and 1 take random signs and step i+1 spikes
    iff the signs differ — invisible to any linear model.
    """
    rng = np.random.default_rng(seed)
    years = tuple(range(1960, 1960 + n))
    prices = np.zeros(n) if flat_prices else rng.normal(size=n)
    embeddings = rng.normal(0.0, noise, size=(n, d))
    labels = np.zeros(n, dtype=int)
    labels[0] = rng.integers(0, 2)
    if rule == "direct":
        future = (rng.random(n) < spike_rate).astype(int)
        for i in range(n - 1):
            labels[i + 1] = future[i]
            embeddings[i, 0] = amplitude if future[i] else -amplitude
        embeddings[n - 1, 0] = amplitude * (1 if rng.random() < 0.5 else -1)
    elif rule == "xor":
        a = rng.integers(0, 2, size=n)
        b = rng.integers(0, 2, size=n)
        for i in range(n - 1):
            labels[i + 1] = int(a[i] != b[i])
        embeddings[:, 0] = amplitude * (2 * a - 1)
        embeddings[:, 1] = amplitude * (2 * b - 1)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return AlignedDataset(
        years=years, prices=prices, labels=labels, embeddings=embeddings
    )


def price_csv_text(n: int = 64, seed: int = 42, missing: tuple[int, ...] = ()) -> str:
    """Random-walk positive prices for three commodities, occasional spikes."""
    rng = np.random.default_rng(seed)
    years = range(1960, 1960 + n)
    lines = ["year,crude_oil,natural_gas,coal"]
    prices = np.array([20.0, 5.0, 40.0])
    for i, y in enumerate(years):
        jump = rng.random() < 0.15
        factor = (1.35 + 0.3 * rng.random()) if jump else (0.95 + 0.2 * rng.random())
        prices = np.abs(prices * factor * (1 + 0.05 * rng.normal(size=3))) + 0.5
        cells = [f"{p:.4f}" for p in prices]
        if y in missing:
            cells[1] = ""
        lines.append(f"{y}," + ",".join(cells))
    return "\n".join(lines) + "\n"


@pytest.fixture
def small_table_text():
    return (
        "year,oil,gas\n"
        "1960,10.0,2.0\n"
        "1961,12.5,2.2\n"
        "1962,20.0,\n"
        "1963,18.0,2.1\n"
        "1964,30.0,2.9\n"
    )
