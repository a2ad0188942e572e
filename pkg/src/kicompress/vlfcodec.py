"""Variable-length faithful coding of a decomposed source.

The encoder measures the block index ``l`` (outcome ``l`` with probability
``p_il`` for letter ``i``), writes a prefix codeword for ``l``, and moves the
``H_J^(l)`` state into ``ceil(log2 dim_J)`` qubits; the ``K`` factor is
dropped. The decoder reads the codeword bit by bit, loads the ``J`` state
back and re-prepares the known ``rho_K^(l)``. Everything here works on
density operators, so faithfulness can be checked exactly.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matcore as mc
from .ensemble import DEFAULT_MAX_DIM, Ensemble, tensor_power
from .errors import EmptyInput, MissingCodeword, PayloadLeakage, UnparseableCodeword, WindowViolation
from .kidecomp import DecompConfig, KIDecomposition, ki_decompose
from .rates import d_nc, i_c

WINDOW_TOL = 1e-9
LEAKAGE_TOL = 1e-9
PRESENCE = 1e-10


@dataclass(frozen=True)
class PrefixCode:
    codewords: dict[int, str]

    def length(self, l: int) -> int:
        return len(self.codewords[l])

    def kraft_sum(self) -> float:
        return sum(2.0 ** -len(c) for c in self.codewords.values())

    def is_prefix_free(self) -> bool:
        words = list(self.codewords.values())
        for a in range(len(words)):
            for b in range(len(words)):
                if a != b and words[b].startswith(words[a]):
                    return False
        return True

    def parse(self, bits: str) -> int:
        """Block index encoded by ``bits``, read one bit at a time."""
        inverse = {c: l for l, c in self.codewords.items()}
        if "" in inverse:
            if bits == "":
                return inverse[""]
            raise UnparseableCodeword(f"trailing bits {bits!r} after the empty codeword")
        for pos in range(1, len(bits) + 1):
            if bits[:pos] in inverse:
                if pos != len(bits):
                    raise UnparseableCodeword(f"trailing bits {bits[pos:]!r}")
                return inverse[bits[:pos]]
        raise UnparseableCodeword(f"{bits!r} is not a codeword")

    def to_dict(self) -> dict:
        return {str(l): c for l, c in sorted(self.codewords.items())}


def huffman(probs: Sequence[float]) -> PrefixCode:
    """Binary Huffman code for symbols ``0..n-1``.

    Ties are broken by ``(mass, smallest symbol in the subtree)``; in a
    merge the subtree holding the smaller symbol gets bit 0. A single
    symbol gets the empty codeword.
    """
    probs = [float(p) for p in probs]
    if not probs:
        raise EmptyInput("no probabilities given")
    if any(p <= 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-8:
        raise ValueError("probabilities must be positive and sum to 1")
    codes = {l: "" for l in range(len(probs))}
    if len(probs) == 1:
        return PrefixCode(codes)
    heap = [(p, l, [l]) for l, p in enumerate(probs)]
    heapq.heapify(heap)
    while len(heap) > 1:
        m0, i0, s0 = heapq.heappop(heap)
        m1, i1, s1 = heapq.heappop(heap)
        if i1 < i0:
            (m0, i0, s0), (m1, i1, s1) = (m1, i1, s1), (m0, i0, s0)
        for l in s0:
            codes[l] = "0" + codes[l]
        for l in s1:
            codes[l] = "1" + codes[l]
        heapq.heappush(heap, (m0 + m1, i0, s0 + s1))
    return PrefixCode(codes)


def payload_qubits(dim_j: int) -> int:
    return math.ceil(math.log2(dim_j)) if dim_j > 1 else 0


@dataclass(frozen=True)
class EncodedBranch:
    block: int
    prob: float
    bits: str
    payload: np.ndarray  # (2**q, 2**q)

    @property
    def qubits(self) -> int:
        return int(round(math.log2(self.payload.shape[0])))

    @property
    def total_length(self) -> int:
        return len(self.bits) + self.qubits


def code_for(d: KIDecomposition) -> PrefixCode:
    return huffman([b.p_l for b in d.blocks])


def encode(d: KIDecomposition, code: PrefixCode, i: int) -> list[EncodedBranch]:
    """Branches produced by the block measurement on letter ``i``."""
    out = []
    for b in d.blocks:
        if b.rho_J_il[i] is None or b.p_il[i] <= PRESENCE:
            continue
        if b.index not in code.codewords:
            raise MissingCodeword(f"no codeword for block {b.index}")
        q = payload_qubits(b.dim_J)
        payload = np.zeros((2 ** q, 2 ** q), dtype=np.complex128)
        payload[: b.dim_J, : b.dim_J] = b.rho_J_il[i]
        out.append(EncodedBranch(b.index, float(b.p_il[i]), code.codewords[b.index], payload))
    return out


def decode(d: KIDecomposition, code: PrefixCode, branch: EncodedBranch) -> np.ndarray:
    """Source-space operator rebuilt from one branch (linear in the payload)."""
    l = code.parse(branch.bits)
    blocks = {b.index: b for b in d.blocks}
    if l not in blocks:
        raise UnparseableCodeword(f"codeword maps to unknown block {l}")
    b = blocks[l]
    payload = mc.as_cmatrix(branch.payload)
    if payload.shape != (2 ** payload_qubits(b.dim_J),) * 2:
        raise PayloadLeakage(f"payload shape {payload.shape} does not fit block {l}")
    corner = payload[: b.dim_J, : b.dim_J]
    leak = float(np.real(np.trace(payload)) - np.real(np.trace(corner)))
    outside = payload.copy()
    outside[: b.dim_J, : b.dim_J] = 0
    if max(abs(leak), float(np.max(np.abs(outside)))) > LEAKAGE_TOL:
        raise PayloadLeakage(f"payload has weight {leak:.3e} outside the first {b.dim_J} basis states")
    return b.embed(np.kron(corner, b.rho_K))


def reconstruct(d: KIDecomposition, code: PrefixCode, i: int) -> np.ndarray:
    branches = encode(d, code, i)
    return sum(br.prob * decode(d, code, br) for br in branches)


def roundtrip_check(d: KIDecomposition, code: PrefixCode, e: Ensemble) -> float:
    """Largest trace distance between a letter and its decoded branch mixture."""
    return max(mc.trace_distance(reconstruct(d, code, i), s) for i, s in enumerate(e.states))


@dataclass(frozen=True)
class LengthStats:
    expected_length: float
    per_block: tuple[tuple[float, int, int], ...]  # (p_l, codeword bits, payload qubits)
    n: int
    window: tuple[float, float]
    codewords: dict = field(default_factory=dict)

    @property
    def per_letter_rate(self) -> float:
        return self.expected_length / self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "expected_length": self.expected_length,
            "per_letter_rate": self.per_letter_rate,
            "window": list(self.window),
            "blocks": [{"p_l": p, "codeword_bits": c, "payload_qubits": q} for p, c, q in self.per_block],
            "codewords": dict(self.codewords),
        }


def _check_window(value, lo, hi, what):
    if not (lo - WINDOW_TOL <= value <= hi + WINDOW_TOL):
        raise WindowViolation(f"{what} {value:.12g} outside [{lo:.12g}, {hi:.12g}]")


def expected_length(d: KIDecomposition, code: PrefixCode) -> LengthStats:
    """Mean number of (qu)bits per codeword, checked against ``[I_C + D_NC, I_C + D_NC + 2]``."""
    rows = tuple((b.p_l, code.length(b.index), payload_qubits(b.dim_J)) for b in d.blocks)
    total = sum(p * (c + q) for p, c, q in rows)
    lo = i_c(d) + d_nc(d)
    _check_window(total, lo, lo + 2.0, "expected length")
    return LengthStats(total, rows, 1, (lo, lo + 2.0), code.to_dict())


@dataclass(frozen=True)
class NBlockResult:
    stats: LengthStats
    ensemble: Ensemble
    decomposition: KIDecomposition
    code: PrefixCode


def run_nblock(e: Ensemble, n: int, config: DecompConfig | None = None,
               max_dim: int = DEFAULT_MAX_DIM) -> NBlockResult:
    config = config or DecompConfig()
    big = tensor_power(e, n, max_dim)
    single = ki_decompose(e, config)
    dec = single if n == 1 else ki_decompose(big, config)
    code = code_for(dec)
    rows = tuple((b.p_l, code.length(b.index), payload_qubits(b.dim_J)) for b in dec.blocks)
    total = sum(p * (c + q) for p, c, q in rows)
    lo = i_c(single) + d_nc(single)
    stats = LengthStats(total, rows, n, (lo, lo + 2.0 / n), code.to_dict())
    _check_window(stats.per_letter_rate, lo, lo + 2.0 / n, f"{n}-block rate")
    return NBlockResult(stats, big, dec, code)


def nblock_experiment(e: Ensemble, n: int, config: DecompConfig | None = None,
                      max_dim: int = DEFAULT_MAX_DIM) -> LengthStats:
    """Code ``n``-letter blocks; the per-letter rate must lie in ``[I_C + D_NC, I_C + D_NC + 2/n]``."""
    return run_nblock(e, n, config, max_dim).stats


@dataclass(frozen=True)
class SampleStats:
    mean: float
    stderr: float
    trials: int

    def to_dict(self) -> dict:
        return {"trials": self.trials, "mean": self.mean, "stderr": self.stderr}


def sample_lengths(d: KIDecomposition, code: PrefixCode, e: Ensemble, trials: int, seed: int) -> SampleStats:
    """Monte Carlo estimate of the expected length.

    Trial ``t`` uses row ``t`` of one uniform stream drawn from ``seed``,
    so results do not depend on how trials are batched.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    u = rng.random((trials, 2))
    letters = np.minimum(np.searchsorted(np.cumsum(e.probs) / np.sum(e.probs), u[:, 0], side="right"), len(e) - 1)
    lengths_per_block = np.array([code.length(b.index) + payload_qubits(b.dim_J) for b in d.blocks], dtype=float)
    p_il = d.p_il
    out = np.empty(trials)
    for i in range(len(e)):
        mask = letters == i
        if not mask.any():
            continue
        cdf = np.cumsum(p_il[i]) / np.sum(p_il[i])
        blk = np.minimum(np.searchsorted(cdf, u[mask, 1], side="right"), len(d.blocks) - 1)
        out[mask] = lengths_per_block[blk]
    mean = float(np.mean(out))
    se = float(np.std(out, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return SampleStats(mean, se, trials)
