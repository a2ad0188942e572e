"""Shared oracles for the test suite."""
import numpy as np

from kicompress import matcore as mc


def block_operator(b):
    """Basis-free fingerprint of a block: embed(1_J (x) rho_K) in ambient coordinates."""
    return b.embed(np.kron(np.eye(b.dim_J), b.rho_K))


def match_blocks(d1, d2):
    """Pair blocks of two decompositions by overlap of their projectors."""
    pairs = []
    used = set()
    for b in d1.blocks:
        scores = [np.real(np.trace(b.projector @ c.projector)) if k not in used else -1
                  for k, c in enumerate(d2.blocks)]
        k = int(np.argmax(scores))
        used.add(k)
        pairs.append((b, d2.blocks[k]))
    return pairs


def decomposition_gap(d1, d2):
    """Largest disagreement between two decompositions of the same source.

    Compares block shapes, ``p_l``, ``p_il``, projectors and the embedded ``K``
    factors after matching blocks. Returns ``inf`` on a structural mismatch.
    """
    if len(d1.blocks) != len(d2.blocks):
        return float("inf")
    worst = 0.0
    for a, b in match_blocks(d1, d2):
        if (a.dim_J, a.dim_K) != (b.dim_J, b.dim_K):
            return float("inf")
        worst = max(worst, abs(a.p_l - b.p_l), float(np.max(np.abs(a.p_il - b.p_il))),
                    float(np.max(np.abs(a.projector - b.projector))),
                    float(np.max(np.abs(block_operator(a) - block_operator(b)))))
    return worst


def block_multiset(d):
    return sorted((b.dim_J, b.dim_K, round(b.p_l, 9)) for b in d.blocks)


def hermitian_matrix_basis(d):
    """Hilbert-Schmidt orthonormal Hermitian basis of all d x d matrices."""
    out = []
    for j in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[j, j] = 1
        out.append(m)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1 / np.sqrt(2)
            out.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k], m[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out.append(m)
    return np.array(out)


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def unitary(d, seed):
    return mc.random_unitary(d, np.random.default_rng(seed))
