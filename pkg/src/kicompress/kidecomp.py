"""Block decomposition of an ensemble's support into ``(+)_l H_J^(l) (x) H_K^(l)``.

Every letter is block diagonal, ``rho_i = (+)_l p_il rho_J^(i,l) (x) rho_K^(l)``,
with the ``K`` factors shared by all letters and the ``J`` factors jointly
irreducible. The decomposition is computed numerically:

1. restrict to the support of the average state ``rho_bar``;
2. generate the *-algebra spanned by the support projector and the
   conjugated letters ``rho_bar^(-1/2) rho_i rho_bar^(-1/2)``, closed under
   products and under ``X -> rho_bar^(it) X rho_bar^(-it)`` for sampled ``t``;
3. split that algebra into its Wedderburn blocks ``M(dim_J) (x) 1_K``;
4. read off the per-letter data and check it (:func:`verify`).

A commuting-case oracle (:func:`classical_oracle`) computes the same
object by simultaneous diagonalization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import matcore as mc
from .ensemble import Ensemble, average_state, matrix_from_json, matrix_to_json, require_valid
from .errors import (
    ClosureDiverged,
    DecompositionFailed,
    DegenerateSample,
    InvalidEnsemble,
    NonProductResidual,
    NotCommuting,
)

log = logging.getLogger(__name__)

DEFAULT_T_SAMPLES = (np.sqrt(2) / 2, -np.sqrt(2) / 2, np.sqrt(3), -np.sqrt(3), np.pi / 3)


@dataclass(frozen=True)
class DecompConfig:
    seed: int = 0
    t_samples: tuple[float, ...] = DEFAULT_T_SAMPLES
    max_retries: int = 4
    tol_p1: float = 1e-7
    tol_p2: float = 1e-7
    rank_tol: float = 1e-7
    group_tol: float = 1e-8
    presence: float = 1e-10
    closure_tol: float = 1e-8
    sample_retries: int = 5
    commute_tol: float = 1e-8
    ratio_tol: float = 1e-7

    def __post_init__(self):
        for name in ("tol_p1", "tol_p2", "rank_tol", "group_tol", "presence", "closure_tol",
                     "commute_tol", "ratio_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_retries < 0 or self.sample_retries < 0:
            raise ValueError("retry counts must be nonnegative")


@dataclass(frozen=True)
class AlgebraBasis:
    """Hilbert-Schmidt orthonormal basis of Hermitian matrices spanning a *-algebra."""

    dim: int
    basis: np.ndarray  # shape (k, dim, dim)

    def __len__(self) -> int:
        return self.basis.shape[0]

    def gram(self) -> np.ndarray:
        flat = self.basis.reshape(len(self), -1)
        return flat.conj() @ flat.T

    def projection_residual(self, m) -> float:
        """Frobenius norm of the part of ``m`` outside the span."""
        flat = self.basis.reshape(len(self), -1)
        v = np.asarray(m, dtype=np.complex128).ravel()
        return float(np.linalg.norm(v - flat.T @ (flat.conj() @ v)))


@dataclass(frozen=True)
class WedderburnBlock:
    projector: np.ndarray  # central projector, in the algebra's coordinates
    isometry: np.ndarray  # (dim, dim_J * dim_K), algebra elements act as X_J (x) 1_K
    dim_J: int
    dim_K: int


@dataclass(frozen=True)
class KIBlock:
    index: int
    dim_J: int
    dim_K: int
    isometry: np.ndarray  # ambient (d, dim_J * dim_K)
    p_l: float
    p_il: np.ndarray  # per letter
    rho_J_il: tuple  # per letter: (dim_J, dim_J) array, or None when the letter misses the block
    rho_J_avg: np.ndarray
    rho_K: np.ndarray

    @property
    def projector(self) -> np.ndarray:
        return self.isometry @ self.isometry.conj().T

    def embed(self, op) -> np.ndarray:
        """Map an operator on ``H_J (x) H_K`` into the ambient space."""
        return self.isometry @ op @ self.isometry.conj().T

    def restrict(self, op) -> np.ndarray:
        return self.isometry.conj().T @ op @ self.isometry


@dataclass(frozen=True)
class VerificationReport:
    p1_residual: float
    p2_residual: float
    p3_commutant_dims: tuple[int, ...]
    tol_p1: float
    tol_p2: float
    structure_residual: float = 0.0

    @property
    def p1_ok(self) -> bool:
        return self.p1_residual <= self.tol_p1

    @property
    def p2_ok(self) -> bool:
        return self.p2_residual <= self.tol_p2

    @property
    def p3_ok(self) -> bool:
        return all(c == 1 for c in self.p3_commutant_dims)

    @property
    def passed(self) -> bool:
        return self.p1_ok and self.p2_ok and self.p3_ok and self.structure_residual <= 1e-9

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "P1_reconstruction": {"residual": self.p1_residual, "tolerance": self.tol_p1, "ok": self.p1_ok},
            "P2_product_form": {"residual": self.p2_residual, "tolerance": self.tol_p2, "ok": self.p2_ok},
            "P3_maximality": {"commutant_dims": list(self.p3_commutant_dims), "ok": self.p3_ok},
            "structure_residual": self.structure_residual,
        }


@dataclass(frozen=True)
class KIDecomposition:
    dim: int
    n_letters: int
    support_isometry: np.ndarray
    blocks: tuple[KIBlock, ...]
    report: VerificationReport | None = None
    attempts: int = 1
    t_samples: tuple[float, ...] = field(default=(), compare=False)

    @property
    def p_l(self) -> np.ndarray:
        return np.array([b.p_l for b in self.blocks])

    @property
    def p_il(self) -> np.ndarray:
        """Matrix of conditional block probabilities, rows indexed by letter."""
        return np.array([b.p_il for b in self.blocks]).T.reshape(self.n_letters, len(self.blocks))

    def summary(self) -> list[tuple[int, int, float]]:
        return [(b.dim_J, b.dim_K, b.p_l) for b in self.blocks]


# --- support restriction ----------------------------------------------------

def support_restrict(e: Ensemble) -> tuple[Ensemble, np.ndarray]:
    """Restrict every letter to the support of the average state.

    Returns the restricted ensemble and the ``(d, s)`` isometry whose
    columns span the support.
    """
    rho = average_state(e)
    eig = mc.herm_eig(rho)
    v = eig.vectors[:, mc.support_mask(eig.values)]
    states = []
    for s in e.states:
        r = v.conj().T @ s @ v
        r = 0.5 * (r + r.conj().T)
        states.append(r / np.real(np.trace(r)))
    return Ensemble(v.shape[1], e.labels, e.probs, tuple(states)), v


# --- algebra generation -----------------------------------------------------

class _SpanBuilder:
    """Incrementally orthonormalized span of Hermitian matrices."""

    def __init__(self, d: int, tol: float):
        self.d = d
        self.tol = tol
        self.rows: list[np.ndarray] = []
        self._flat = np.zeros((0, d * d), dtype=np.complex128)
        self._flat_conj = self._flat

    def __len__(self):
        return len(self.rows)

    def add(self, m: np.ndarray) -> bool:
        # residual is absolute: candidates are built from unit-norm factors,
        # so near-zero products must not be rescaled into spurious directions
        v = m.ravel()
        for _ in range(2):
            if len(self.rows):
                v = v - (self._flat_conj @ v) @ self._flat
        res = np.linalg.norm(v)
        if res <= self.tol:
            return False
        v = v / res
        h = v.reshape(self.d, self.d)
        h = 0.5 * (h + h.conj().T)
        h = h / np.linalg.norm(h)
        self.rows.append(h)
        self._flat = np.vstack([self._flat, h.ravel()[None, :]])
        self._flat_conj = self._flat.conj()
        return True

    def add_hermitian_parts(self, m: np.ndarray) -> int:
        herm = 0.5 * (m + m.conj().T)
        anti = (m - m.conj().T) / 2j
        return int(self.add(herm)) + int(self.add(anti))


def generate_algebra(e: Ensemble, t_samples: Sequence[float], closure_tol: float = 1e-8) -> AlgebraBasis:
    """Smallest *-algebra holding the conjugated letters, closed under modular flow.

    ``e`` must already be restricted to the support of its average state.
    """
    d = e.dim
    rho = average_state(e)
    eig = mc.herm_eig(rho)
    if not np.all(mc.support_mask(eig.values)):
        raise InvalidEnsemble("average state is not faithful; call support_restrict first")
    inv_sqrt = (eig.vectors * eig.values ** -0.5) @ eig.vectors.conj().T
    flows = [(eig.vectors * np.exp(1j * t * np.log(eig.values))) @ eig.vectors.conj().T for t in t_samples]

    span = _SpanBuilder(d, closure_tol)
    span.add(np.eye(d, dtype=np.complex128))
    gens = []
    for s in e.states:
        x = inv_sqrt @ s @ inv_sqrt
        x = 0.5 * (x + x.conj().T)
        gens.append(x / np.linalg.norm(x))
        span.add(gens[-1])

    # A span holding 1 that is invariant under left multiplication by the
    # generators and under each (invertible) modular map is already closed
    # under pairwise products, so only those moves are iterated.
    full = d * d
    done = 0
    while done < len(span) and len(span) < full:
        x = span.rows[done]
        for g in gens:
            span.add_hermitian_parts(g @ x)
        for u in flows:
            span.add_hermitian_parts(u @ x @ u.conj().T)
        done += 1
        if len(span) > full:
            raise ClosureDiverged(f"span dimension {len(span)} exceeds {full}")
    return AlgebraBasis(d, np.array(span.rows))


# --- Wedderburn blocks ------------------------------------------------------

def _null_space(m: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical null space of ``m``."""
    if m.shape[0] == 0:
        return np.eye(m.shape[1], dtype=m.dtype)
    _, s, vh = np.linalg.svd(m, full_matrices=m.shape[0] < m.shape[1])
    scale = max(1.0, float(s[0]) if s.size else 0.0)
    rank = int(np.sum(s > tol * scale))
    return vh[rank:].conj().T


def commutant(mats: Sequence[np.ndarray], rank_tol: float = 1e-7) -> np.ndarray:
    """Basis ``(m, d, d)`` of all matrices commuting with every member of ``mats``.

    Solves ``A X - X A = 0`` for row-major ``vec(X)`` via the null space of
    the stacked system ``A (x) 1 - 1 (x) A^T``.
    """
    mats = [mc.as_cmatrix(a) for a in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    d = mats[0].shape[0]
    eye = np.eye(d)
    system = np.vstack([np.kron(a, eye) - np.kron(eye, a.T) for a in mats])
    ns = _null_space(system, rank_tol)
    return ns.T.reshape(-1, d, d)


def commutant_dim(mats: Sequence[np.ndarray], rank_tol: float = 1e-7) -> int:
    return commutant(mats, rank_tol).shape[0]


def _center(a: AlgebraBasis, rank_tol: float) -> np.ndarray:
    """Coefficient vectors (columns) of central elements, via structure constants."""
    k = len(a)
    flat = a.basis.reshape(k, -1)
    rows = []
    for bt in a.basis:
        comm = a.basis @ bt - bt @ a.basis
        rows.append(flat.conj() @ comm.reshape(k, -1).T)  # (u, s): <B_u, [B_s, B_t]>
    return _null_space(np.vstack(rows), rank_tol)


def _group_eigenvalues(w: np.ndarray, rel_tol: float) -> list[np.ndarray]:
    """Split ascending eigenvalues into clusters separated by more than the tolerance."""
    spread = float(w[-1] - w[0]) if w.size else 0.0
    # the floor keeps rounding noise of a (near-)scalar matrix from being split
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    tol = max(rel_tol * spread, 1e3 * np.finfo(float).eps * scale, np.finfo(float).tiny)
    groups = [[0]]
    for i in range(1, w.size):
        if w[i] - w[i - 1] > tol:
            groups.append([i])
        else:
            groups[-1].append(i)
    return [np.array(g) for g in groups]


def _is_ambiguous(w: np.ndarray, groups: list[np.ndarray]) -> bool:
    # clusters that are separated, but only barely, cannot be trusted
    if len(groups) < 2:
        return False
    spread = float(w[-1] - w[0])
    gaps = [w[g[0]] - w[prev[-1]] for prev, g in zip(groups, groups[1:])]
    return min(gaps) < 1e-6 * spread


def _wedderburn_once(a: AlgebraBasis, rng: np.random.Generator, group_tol: float,
                     rank_tol: float) -> list[WedderburnBlock]:
    d = a.dim
    k = len(a)
    zc = _center(a, rank_tol)
    m = zc.shape[1]
    herm_coeffs = np.hstack([zc.real, zc.imag])
    h = herm_coeffs @ rng.standard_normal(herm_coeffs.shape[1])
    z = np.einsum("s,sij->ij", h, a.basis)
    w, v = np.linalg.eigh(0.5 * (z + z.conj().T))
    groups = _group_eigenvalues(w, group_tol)
    if len(groups) != m or _is_ambiguous(w, groups):
        raise DegenerateSample(f"central element split into {len(groups)} groups, center has dimension {m}")

    blocks = []
    for g in groups:
        vg = v[:, g]
        r = vg.shape[1]
        restricted = vg.conj().T @ a.basis @ vg
        sv = np.linalg.svd(restricted.reshape(k, -1), compute_uv=False)
        alg_dim = int(np.sum(sv > rank_tol * max(1.0, sv[0])))
        dim_j = int(round(np.sqrt(alg_dim)))
        if dim_j * dim_j != alg_dim or r % dim_j:
            raise DegenerateSample(f"block algebra dimension {alg_dim} incompatible with block size {r}")
        dim_k = r // dim_j

        hr = np.einsum("s,sij->ij", rng.standard_normal(k), restricted)
        wr, vr = np.linalg.eigh(0.5 * (hr + hr.conj().T))
        fibers = _group_eigenvalues(wr, group_tol) if dim_j > 1 else [np.arange(r)]
        if len(fibers) != dim_j or any(f.size != dim_k for f in fibers) or _is_ambiguous(wr, fibers):
            raise DegenerateSample("random algebra element has the wrong eigenvalue multiplicities")
        frames = [vr[:, f] for f in fibers]

        gen = np.einsum("s,sij->ij", rng.standard_normal(k) + 1j * rng.standard_normal(k), restricted)
        gnorm = np.linalg.norm(gen)
        aligned = [frames[0]]
        for fj in frames[1:]:
            link = fj.conj().T @ gen @ frames[0]
            u, s, vh = np.linalg.svd(link)
            if s[-1] < 1e-8 * gnorm or s[0] - s[-1] > 1e-6 * s[0]:
                raise DegenerateSample("fiber link is not proportional to a unitary")
            aligned.append(fj @ (u @ vh))
        iso = vg @ np.hstack(aligned)  # column j*dim_k + kk
        blocks.append(WedderburnBlock(vg @ vg.conj().T, iso, dim_j, dim_k))
    return blocks


def wedderburn(a: AlgebraBasis, seed: int, group_tol: float = 1e-8, rank_tol: float = 1e-7,
               retries: int = 5) -> list[WedderburnBlock]:
    """Split a *-algebra into blocks on which it acts as ``M(dim_J) (x) 1_K``.

    Central projectors come from the eigenspaces of a random Hermitian central
    element (the center is the null space of the algebra's commutator map).
    Inside each block, a random Hermitian element has ``dim_J`` eigenvalues of
    multiplicity ``dim_K``; its eigenspaces are the ``K`` fibers, aligned to
    each other through the polar part of a generic element.
    """
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    last = None
    for _ in range(retries + 1):
        try:
            return _wedderburn_once(a, rng, group_tol, rank_tol)
        except DegenerateSample as exc:
            last = exc
    raise DegenerateSample(f"no unambiguous sample after {retries + 1} draws: {last}")


# --- per-block data ---------------------------------------------------------

def _block_from_isometry(index, iso, dim_j, dim_k, states, probs, rho_bar, presence, product_tol,
                         canonicalize=True):
    """Assemble a :class:`KIBlock` given an isometry (ambient or restricted coordinates)."""
    r = dim_j * dim_k
    mbar = iso.conj().T @ rho_bar @ iso
    p_l = float(np.real(np.trace(mbar)))
    if p_l <= 0:
        raise NonProductResidual(f"block {index} carries no weight")
    tilde = mbar / p_l
    if canonicalize:
        _, uj = mc.canonical_eigenbasis(mc.partial_trace(tilde, (dim_j, dim_k), "first"))
        _, uk = mc.canonical_eigenbasis(mc.partial_trace(tilde, (dim_j, dim_k), "second"))
        iso = iso @ np.kron(uj, uk)
        mbar = iso.conj().T @ rho_bar @ iso
        tilde = mbar / p_l
    rho_k = mc.partial_trace(tilde, (dim_j, dim_k), "second")
    rho_k = 0.5 * (rho_k + rho_k.conj().T)

    p_il, rho_j_il = [], []
    avg = np.zeros((dim_j, dim_j), dtype=np.complex128)
    for p, s in zip(probs, states):
        mi = iso.conj().T @ s @ iso
        q = float(np.real(np.trace(mi)))
        if q <= presence:
            p_il.append(0.0)
            rho_j_il.append(None)
            continue
        rr = mi / q
        rj = mc.partial_trace(rr, (dim_j, dim_k), "first")
        rj = 0.5 * (rj + rj.conj().T)
        kc = mc.partial_trace(rr, (dim_j, dim_k), "second")
        resid = mc.trace_distance(rr, np.kron(rj, kc))
        if resid > product_tol:
            raise NonProductResidual(f"block {index}: letter restriction is not a product (residual {resid:.2e})")
        p_il.append(q)
        rho_j_il.append(rj)
        avg += p * q * rj
    avg = avg / p_l
    avg = 0.5 * (avg + avg.conj().T)
    return KIBlock(index, dim_j, dim_k, iso, p_l, np.array(p_il), tuple(rho_j_il), avg, rho_k)


def _normalized(blocks: Sequence[KIBlock]) -> list[KIBlock]:
    """Rescale ``p_l`` and each letter's ``p_il`` row to sum to exactly one."""
    total = sum(b.p_l for b in blocks)
    rows = np.sum([b.p_il for b in blocks], axis=0)
    rows = np.where(rows > 0, rows, 1.0)
    return [replace(b, p_l=b.p_l / total, p_il=b.p_il / rows) for b in blocks]


def _canonical_key(b: KIBlock):
    proj = b.projector
    lex = tuple(-round(float(x), 6) + 0.0 for z in proj.ravel() for x in (z.real, z.imag))
    return (-round(b.p_l, 9), b.dim_J, lex)


def canonical_order(blocks: Sequence[KIBlock]) -> tuple[KIBlock, ...]:
    """Sort by descending ``p_l``, then ascending ``dim_J``, then block projector entries."""
    ordered = sorted(blocks, key=_canonical_key)
    return tuple(replace(b, index=i) for i, b in enumerate(ordered))


def extract_block_data(e: Ensemble, wblocks: Sequence[WedderburnBlock], support_isometry,
                       config: DecompConfig | None = None) -> KIDecomposition:
    """Per-letter block data for a restricted ensemble ``e``.

    ``support_isometry`` maps ``e``'s space into the original ambient space;
    the returned block isometries are ambient.
    """
    config = config or DecompConfig()
    v = mc.as_cmatrix(support_isometry)
    if v.shape[1] != e.dim or any(wb.isometry.shape[0] != e.dim for wb in wblocks):
        raise ValueError("Wedderburn blocks do not match the ensemble dimension")
    rho_bar = average_state(e)
    blocks = []
    for idx, wb in enumerate(wblocks):
        b = _block_from_isometry(idx, wb.isometry, wb.dim_J, wb.dim_K, e.states, e.probs, rho_bar,
                                 config.presence, config.tol_p2)
        blocks.append(replace(b, isometry=v @ b.isometry))
    return KIDecomposition(v.shape[0], len(e), v, canonical_order(_normalized(blocks)))


# --- verification -----------------------------------------------------------

def verify(d: KIDecomposition, e: Ensemble, config: DecompConfig | None = None) -> VerificationReport:
    """Reconstruction (P1), product form (P2) and maximality (P3) checks."""
    config = config or DecompConfig()
    p1 = 0.0
    for i, s in enumerate(e.states):
        recon = np.zeros((d.dim, d.dim), dtype=np.complex128)
        for b in d.blocks:
            if b.rho_J_il[i] is not None:
                recon += b.p_il[i] * b.embed(np.kron(b.rho_J_il[i], b.rho_K))
        p1 = max(p1, mc.trace_distance(s, recon))
    p2 = 0.0
    for b in d.blocks:
        for i, s in enumerate(e.states):
            if b.rho_J_il[i] is None or b.p_il[i] <= config.presence:
                continue
            rr = b.restrict(s) / b.p_il[i]
            p2 = max(p2, mc.trace_distance(rr, np.kron(b.rho_J_il[i], b.rho_K)))
    p3 = []
    for b in d.blocks:
        present = [m for m in b.rho_J_il if m is not None]
        p3.append(commutant_dim(present, config.rank_tol) if present and b.dim_J > 1 else 1)
    if d.blocks:
        iso = np.hstack([b.isometry for b in d.blocks])
        structure = float(np.max(np.abs(iso.conj().T @ iso - np.eye(iso.shape[1]))))
    else:
        structure = float("inf")
    return VerificationReport(p1, p2, tuple(p3), config.tol_p1, config.tol_p2, structure)


# --- orchestration ----------------------------------------------------------

def ki_decompose(e: Ensemble, config: DecompConfig | None = None) -> KIDecomposition:
    """Verified decomposition of ``e``; raises :class:`DecompositionFailed` after retries."""
    config = config or DecompConfig()
    require_valid(e)
    restricted, v = support_restrict(e)
    rng = np.random.default_rng(int(config.seed) & 0xFFFFFFFFFFFFFFFF)
    t_samples = [float(t) for t in config.t_samples]
    last_report, last_error = None, None
    for attempt in range(config.max_retries + 1):
        wseed = int(rng.integers(0, 2 ** 63))
        try:
            alg = generate_algebra(restricted, t_samples, config.closure_tol)
            wb = wedderburn(alg, wseed, config.group_tol, config.rank_tol, config.sample_retries)
            dec = extract_block_data(restricted, wb, v, config)
            report = verify(dec, e, config)
            if report.passed:
                return replace(dec, report=report, attempts=attempt + 1, t_samples=tuple(t_samples))
            last_report, last_error = report, None
            log.debug("attempt %d failed verification: %s", attempt, report.to_dict())
        except (DegenerateSample, NonProductResidual, ClosureDiverged) as exc:
            last_error = exc
            log.debug("attempt %d failed: %s", attempt, exc)
        t_samples.append(float(rng.uniform(-2.0, 2.0)))
    msg = f"decomposition failed after {config.max_retries + 1} attempts"
    if last_error is not None:
        msg += f": {last_error}"
    raise DecompositionFailed(msg, last_report)


# --- commuting-case oracle --------------------------------------------------

def is_commuting(states: Sequence[np.ndarray], tol: float = 1e-8) -> bool:
    return max_commutator(states, tol) <= 0.0


def max_commutator(states: Sequence[np.ndarray], tol: float = 1e-8) -> float:
    """Largest commutator excess ``||[a, b]||_max - tol * max(1, ||a|| ||b||)`` over pairs."""
    worst = -np.inf
    norms = [np.linalg.norm(s, 2) for s in states]
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            c = float(np.max(np.abs(mc.commutator(states[i], states[j]))))
            worst = max(worst, c - tol * max(1.0, norms[i] * norms[j]))
    return worst if np.isfinite(worst) else -1.0


def _split_common(v: np.ndarray, states: Sequence[np.ndarray], start: int, tol: float) -> list[np.ndarray]:
    if v.shape[1] == 1 or start == len(states):
        return [v]
    m = v.conj().T @ states[start] @ v
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    out = []
    for g in _split_by_abs(w, tol):
        out.extend(_split_common(v @ u[:, g], states, start + 1, tol))
    return out


def _split_by_abs(w: np.ndarray, tol: float) -> list[np.ndarray]:
    groups = [[0]]
    for i in range(1, w.size):
        (groups.append([i]) if w[i] - w[i - 1] > tol else groups[-1].append(i))
    return [np.array(g) for g in groups]


def classical_oracle(e: Ensemble, config: DecompConfig | None = None) -> KIDecomposition:
    """Decomposition of a commuting ensemble by simultaneous diagonalization.

    Basis vectors of the common eigenbasis are grouped by their likelihood
    ratio profiles ``r_i(k) = <k|rho_i|k> / <k|rho_bar|k>``; each group is a
    block with ``dim_J = 1``.
    """
    config = config or DecompConfig()
    require_valid(e)
    if max_commutator(list(e.states), config.commute_tol) > 0:
        raise NotCommuting("ensemble states do not commute")
    rho = average_state(e)
    eig = mc.herm_eig(rho)
    keep = mc.support_mask(eig.values)
    vals, vecs = eig.values[keep], eig.vectors[:, keep]
    tol = 1e-8 * max(1.0, float(vals[0]))
    frames = []
    for g in _split_by_abs(vals[::-1], tol):
        cols = vecs[:, ::-1][:, g]
        frames.extend(_split_common(cols, list(e.states), 0, tol))
    basis = np.hstack(frames)

    diag_bar = np.real(np.einsum("ak,ab,bk->k", basis.conj(), rho, basis))
    diag_i = np.array([np.real(np.einsum("ak,ab,bk->k", basis.conj(), s, basis)) for s in e.states])
    ratios = diag_i / diag_bar[None, :]
    clusters: list[list[int]] = []
    for k in range(basis.shape[1]):
        for c in clusters:
            ref = ratios[:, c[0]]
            if np.max(np.abs(ratios[:, k] - ref)) <= config.ratio_tol * max(1.0, float(np.max(np.abs(ref)))):
                c.append(k)
                break
        else:
            clusters.append([k])

    blocks = []
    for idx, c in enumerate(clusters):
        order = sorted(c, key=lambda k: -diag_bar[k])
        iso = mc.fix_phase(basis[:, order])
        b = _block_from_isometry(idx, iso, 1, len(order), e.states, e.probs, rho, config.presence,
                                 config.tol_p2, canonicalize=False)
        blocks.append(b)
    dec = KIDecomposition(e.dim, len(e), vecs, canonical_order(_normalized(blocks)))
    return replace(dec, report=verify(dec, e, config))


# --- serialization ----------------------------------------------------------

def decomposition_to_dict(d: KIDecomposition) -> dict:
    blocks = []
    for b in d.blocks:
        blocks.append({
            "index": b.index,
            "dim_J": b.dim_J,
            "dim_K": b.dim_K,
            "p_l": b.p_l,
            "p_il": [float(x) for x in b.p_il],
            "rho_J_il": [None if m is None else matrix_to_json(m) for m in b.rho_J_il],
            "rho_J_avg": matrix_to_json(b.rho_J_avg),
            "rho_K": matrix_to_json(b.rho_K),
            "isometry": matrix_to_json(b.isometry),
        })
    out = {
        "dim": d.dim,
        "n_letters": d.n_letters,
        "support_isometry": matrix_to_json(d.support_isometry),
        "blocks": blocks,
    }
    if d.report is not None:
        out["verification"] = d.report.to_dict()
    return out


def decomposition_from_dict(data: dict) -> KIDecomposition:
    """Rebuild a decomposition exported by :func:`decomposition_to_dict`.

    The verification report is not trusted from the file; re-run :func:`verify`.
    """
    try:
        n = int(data["n_letters"])
        blocks = []
        for raw in data["blocks"]:
            dj, dk = int(raw["dim_J"]), int(raw["dim_K"])
            rho_j_il = tuple(None if m is None else matrix_from_json(m, "rho_J_il") for m in raw["rho_J_il"])
            blocks.append(KIBlock(
                int(raw["index"]), dj, dk,
                matrix_from_json(raw["isometry"], "isometry"),
                float(raw["p_l"]), np.array(raw["p_il"], dtype=float), rho_j_il,
                matrix_from_json(raw["rho_J_avg"], "rho_J_avg"),
                matrix_from_json(raw["rho_K"], "rho_K"),
            ))
        return KIDecomposition(int(data["dim"]), n, matrix_from_json(data["support_isometry"], "support_isometry"),
                               tuple(blocks))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidEnsemble(f"malformed decomposition: {exc}") from exc
