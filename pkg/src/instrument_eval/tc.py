"""Intra-instrument timbral consistency: all-pairs liftered-feature distance.

For an instrument of K samples the measure aggregates, over every
unordered pair (i, j) and every analysis scale, the L1 distance between
the liftered log-mel features y_i and y_j. Literally that is

    tc = sum_{i<j} sum_s ||y_i - y_j||_1        (normalization="none")

which grows with K, frame count, and band count. The default
normalization="mean" replaces each pair's L1 norm with the elementwise
mean and divides by the pair count, giving values comparable across
instruments of different size and duration. Lower is more consistent;
identical samples give exactly zero.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dsp import ScaleConfig, build_lifter, build_mel_filterbank, liftered_logmel
from .errors import EmptyInstrument, TooShort

NORMALIZATIONS = ("mean", "none")

# Upper bound on the scratch block used for pairwise distances, in floats.
_BLOCK_BUDGET = 6_000_000


@dataclass(frozen=True)
class TcConfig:
    """Scales plus aggregation policy for the consistency measure."""

    scales: tuple = (ScaleConfig(),)
    normalization: str = "mean"
    exclude_dc: bool = False

    def __post_init__(self):
        scales = tuple(self.scales)
        if not scales:
            raise ValueError("need at least one analysis scale")
        object.__setattr__(self, "scales", scales)
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


@dataclass(frozen=True)
class TcResult:
    """Measure value plus the per-pair distance matrix behind it."""

    tc: float
    pair_matrix: np.ndarray
    K: int
    per_scale: list
    keys: list
    normalization: str
    exclude_dc: bool

    def to_json_dict(self, pair_matrix_file=None):
        return {
            "tc": self.tc,
            "K": self.K,
            "S": len(self.per_scale),
            "normalization": self.normalization,
            "exclude_dc": self.exclude_dc,
            "per_scale": list(self.per_scale),
            "pair_matrix_file": pair_matrix_file,
        }


def _resolve_threads(threads):
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def _map_maybe_parallel(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _pairwise_l1(Y, threads):
    """K x K matrix of L1 distances between rows of Y.

    Blocked so the scratch array stays small; each entry is reduced over
    the feature axis independently, so the result is bitwise identical
    for any block partition or worker count.
    """
    K, dim = Y.shape
    out = np.zeros((K, K))
    block = max(1, int(np.sqrt(_BLOCK_BUDGET / max(dim, 1))))
    tasks = []
    for i0 in range(0, K, block):
        for j0 in range(i0, K, block):
            tasks.append((i0, j0))

    def run(task):
        i0, j0 = task
        i1 = min(i0 + block, K)
        j1 = min(j0 + block, K)
        d = np.abs(Y[i0:i1, None, :] - Y[None, j0:j1, :]).sum(axis=2)
        out[i0:i1, j0:j1] = d

    _map_maybe_parallel(run, tasks, threads)
    iu = np.triu_indices(K, k=1)
    out[(iu[1], iu[0])] = out[iu]
    np.fill_diagonal(out, 0.0)
    return out


def tc_measure(inst, cfg=None, threads=None):
    """Timbral-consistency measure for an instrument.

    Features are computed once per (sample, scale); pair distances are
    summed over a fixed lexicographic key order, so the value does not
    depend on sample ordering or on the worker count.
    """
    cfg = cfg or TcConfig()
    threads = _resolve_threads(threads)
    keys = sorted(inst.keys())
    K = len(keys)
    if K < 2:
        raise EmptyInstrument(f"need at least 2 samples for pairwise distances, got {K}")

    n_pairs = K * (K - 1) // 2
    pair_matrix = np.zeros((K, K))
    per_scale = []
    iu = np.triu_indices(K, k=1)

    for s_idx, sc in enumerate(cfg.scales):
        fb = build_mel_filterbank(sc, inst.sample_rate)
        lb = build_lifter(sc, exclude_dc=cfg.exclude_dc)

        def extract(key):
            try:
                feat = liftered_logmel(inst[key].samples, sc, fb, lb, scale_index=s_idx)
            except TooShort as exc:
                raise TooShort(f"sample p{key[0]}_v{key[1]}: {exc}") from None
            return feat.y.reshape(-1)

        feats = _map_maybe_parallel(extract, keys, threads)
        Y = np.ascontiguousarray(np.stack(feats))

        dist_s = _pairwise_l1(Y, threads)
        if cfg.normalization == "mean":
            dist_s /= Y.shape[1]
        pair_matrix += dist_s

        total = float(np.sum(dist_s[iu]))
        if cfg.normalization == "mean":
            total /= n_pairs
        per_scale.append(total)

    tc = float(np.sum(pair_matrix[iu]))
    if cfg.normalization == "mean":
        tc /= n_pairs

    return TcResult(
        tc=tc,
        pair_matrix=pair_matrix,
        K=K,
        per_scale=per_scale,
        keys=keys,
        normalization=cfg.normalization,
        exclude_dc=cfg.exclude_dc,
    )


def tc_pair_matrix_export(res):
    """Render the per-pair distance matrix as CSV with key labels."""
    labels = [f"p{p}_v{v}" for p, v in res.keys]
    lines = ["," + ",".join(labels)]
    for i, label in enumerate(labels):
        row = ",".join(repr(float(x)) for x in res.pair_matrix[i])
        lines.append(f"{label},{row}")
    return "\n".join(lines) + "\n"
