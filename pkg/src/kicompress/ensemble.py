"""Quantum sources: a finite list of density matrices with emission probabilities."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from . import matcore as mc
from .errors import BadShape, DimensionTooLarge, InvalidEnsemble

PROB_SUM_TOL = 1e-9
STATE_TOL = 1e-8
DEFAULT_MAX_DIM = 256


@dataclass(frozen=True)
class Ensemble:
    """A source emitting ``states[i]`` with probability ``probs[i]``.

    Construction does not validate; call :func:`validate` or :func:`require_valid`.
    """

    dim: int
    labels: tuple[str, ...]
    probs: np.ndarray
    states: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        states = []
        for s in self.states:
            a = np.array(s, dtype=np.complex128)
            a.setflags(write=False)
            states.append(a)
        object.__setattr__(self, "states", tuple(states))

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, object]], labels: Sequence[str] | None = None):
        pairs = list(pairs)
        states = [np.asarray(s, dtype=np.complex128) for _, s in pairs]
        dim = states[0].shape[0] if states else 0
        if labels is None:
            labels = [str(i) for i in range(len(pairs))]
        return cls(dim, tuple(labels), np.array([p for p, _ in pairs], dtype=float), tuple(states))

    def permuted(self, order: Sequence[int]) -> "Ensemble":
        order = list(order)
        return Ensemble(self.dim, tuple(self.labels[i] for i in order), self.probs[order],
                        tuple(self.states[i] for i in order))

    def conjugated(self, u) -> "Ensemble":
        """Apply the same unitary to every letter."""
        u = mc.as_cmatrix(u)
        return Ensemble(self.dim, self.labels, self.probs, tuple(u @ s @ u.conj().T for s in self.states))


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int | None
    magnitude: float
    message: str


def validate(e: Ensemble) -> list[Violation]:
    """Every violated invariant of ``e``; an empty list means valid."""
    out: list[Violation] = []
    n = len(e.probs)
    if len(e.states) != n or len(e.labels) != n:
        out.append(Violation("length", None, float(abs(len(e.states) - n) + abs(len(e.labels) - n)),
                             f"{n} probs, {len(e.states)} states, {len(e.labels)} labels"))
    if n == 0:
        out.append(Violation("empty", None, 0.0, "ensemble has no letters"))
        return out
    if len(set(e.labels)) != len(e.labels):
        dup = sorted({x for x in e.labels if e.labels.count(x) > 1})
        out.append(Violation("labels", None, float(len(e.labels) - len(set(e.labels))),
                             f"duplicate labels {dup}"))
    if not np.all(np.isfinite(e.probs)):
        out.append(Violation("prob", None, float("nan"), "non-finite probability"))
        return out
    for i, p in enumerate(e.probs):
        if p <= 0:
            out.append(Violation("prob", i, float(-p), f"probability {p} is not positive"))
    dev = abs(float(np.sum(e.probs)) - 1.0)
    if dev > PROB_SUM_TOL:
        out.append(Violation("prob_sum", None, dev, f"probabilities sum to {np.sum(e.probs):.12g}"))
    for i, s in enumerate(e.states):
        if s.shape != (e.dim, e.dim):
            out.append(Violation("shape", i, 0.0, f"state shape {s.shape} != ({e.dim}, {e.dim})"))
            continue
        if not np.all(np.isfinite(s)):
            out.append(Violation("finite", i, float("nan"), "state has non-finite entries"))
            continue
        herm = float(np.max(np.abs(s - s.conj().T))) if s.size else 0.0
        if herm > STATE_TOL:
            out.append(Violation("hermitian", i, herm, f"hermiticity violation {herm:.3e}"))
            continue
        w = np.linalg.eigvalsh(0.5 * (s + s.conj().T))
        if w.size and w[0] < -STATE_TOL:
            out.append(Violation("psd", i, float(-w[0]), f"negative eigenvalue {w[0]:.3e}"))
        tr_dev = abs(float(np.real(np.trace(s))) - 1.0)
        if tr_dev > STATE_TOL:
            out.append(Violation("trace", i, tr_dev, f"trace {np.real(np.trace(s)):.12g}"))
    return out


def require_valid(e: Ensemble) -> None:
    report = validate(e)
    if report:
        raise InvalidEnsemble("; ".join(v.message for v in report), report)


def average_state(e: Ensemble) -> np.ndarray:
    require_valid(e)
    rho = sum(p * s for p, s in zip(e.probs, e.states))
    return 0.5 * (rho + rho.conj().T)


def tensor_power(e: Ensemble, n: int, max_dim: int = DEFAULT_MAX_DIM) -> Ensemble:
    """Ensemble of ordered ``n``-tuples of independent letters."""
    if n < 1:
        raise ValueError("n must be positive")
    if e.dim ** n > max_dim:
        raise DimensionTooLarge(f"dimension {e.dim}**{n} = {e.dim ** n} exceeds {max_dim}")
    if n == 1:
        return e
    labels, probs, states = [], [], []
    for idx in itertools.product(range(len(e)), repeat=n):
        labels.append(",".join(e.labels[i] for i in idx))
        probs.append(float(np.prod([e.probs[i] for i in idx])))
        states.append(reduce(np.kron, [e.states[i] for i in idx]))
    return Ensemble(e.dim ** n, tuple(labels), np.array(probs), tuple(states))


def attach_redundancy(e: Ensemble, rho_k) -> Ensemble:
    """Replace every letter by ``rho_i (x) rho_k``."""
    require_valid(e)
    rho_k = mc.as_cmatrix(rho_k)
    try:
        mc.check_density_matrix(rho_k)
    except Exception as exc:
        raise InvalidEnsemble(f"redundant state is not a density matrix: {exc}") from exc
    return Ensemble(e.dim * rho_k.shape[0], e.labels, e.probs,
                    tuple(np.kron(s, rho_k) for s in e.states))


# --- generators -------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def _random_probs(rng, count):
    # bounded away from zero so letters are never negligible
    p = rng.dirichlet(np.ones(count)) + 0.05
    return p / p.sum()


def random_pure(dim: int, count: int, seed: int) -> Ensemble:
    """``count`` Haar-random pure states with random probabilities."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = _rng(seed)
    states = []
    for _ in range(count):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        states.append(mc.ket_projector(v))
    return Ensemble(dim, tuple(str(i) for i in range(count)), _random_probs(rng, count), tuple(states))


def random_density(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.real(np.trace(rho))


def random_mixed(dim: int, count: int, rank: int | None, seed: int) -> Ensemble:
    """Random states of the given rank (``None``: a random rank per letter)."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = _rng(seed)
    states = []
    for _ in range(count):
        r = int(rng.integers(1, dim + 1)) if rank is None else int(rank)
        states.append(random_density(dim, r, rng))
    return Ensemble(dim, tuple(str(i) for i in range(count)), _random_probs(rng, count), tuple(states))


def classical(rows, probs=None, labels=None) -> Ensemble:
    """Commuting ensemble of diagonal states, one per row (rows are normalized)."""
    rows = [list(map(float, r)) for r in rows]
    if not rows or len({len(r) for r in rows}) != 1:
        raise BadShape("rows must be non-empty and of equal length")
    arr = np.array(rows)
    if np.any(arr < 0):
        raise BadShape("rows must be nonnegative")
    sums = arr.sum(axis=1)
    if np.any(sums <= 0):
        raise BadShape("every row needs positive mass")
    arr = arr / sums[:, None]
    n = len(rows)
    probs = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float)
    labels = labels or [str(i) for i in range(n)]
    return Ensemble(arr.shape[1], tuple(labels), probs, tuple(np.diag(r).astype(np.complex128) for r in arr))


def random_structured(blocks: Sequence[tuple[int, int]], count: int, seed: int,
                      rotate: bool = True) -> Ensemble:
    """Ensemble with a prescribed block structure ``[(dim_J, dim_K), ...]``.

    Each letter is ``U (+)_l p_il rho_J^(i,l) (x) rho_K^(l) U^H`` with random
    full-rank ``rho_J`` factors, shared ``rho_K`` factors and (if ``rotate``)
    a Haar-random ``U``. Generic draws make the prescribed structure the
    finest one, provided ``count >= 2`` whenever some ``dim_J > 1``.
    """
    rng = _rng(seed)
    nb = len(blocks)
    p_il = rng.dirichlet(np.ones(nb), size=count) + 0.05
    p_il /= p_il.sum(axis=1, keepdims=True)
    rho_k = [random_density(dk, dk, rng) for _, dk in blocks]
    states = []
    for i in range(count):
        parts = [p_il[i, l] * np.kron(random_density(dj, dj, rng), rho_k[l]) for l, (dj, _) in enumerate(blocks)]
        states.append(mc.direct_sum(parts))
    dim = sum(dj * dk for dj, dk in blocks)
    if rotate:
        u = mc.random_unitary(dim, rng)
        states = [u @ s @ u.conj().T for s in states]
    states = [0.5 * (s + s.conj().T) for s in states]
    return Ensemble(dim, tuple(str(i) for i in range(count)), _random_probs(rng, count), tuple(states))


def random_commuting(dim: int, count: int, seed: int, groups: int | None = None,
                     rotate: bool = True) -> Ensemble:
    """Commuting ensemble whose basis vectors fall into ``groups`` likelihood-ratio classes.

    Vectors in one class share the same likelihood-ratio profile. Classes whose
    profiles happen to be proportional merge into a single block.
    """
    rng = _rng(seed)
    groups = int(rng.integers(1, dim + 1)) if groups is None else int(groups)
    assign = np.concatenate([np.arange(groups), rng.integers(0, groups, size=dim - groups)])
    rng.shuffle(assign)
    ratio = rng.uniform(0.1, 1.0, size=(count, groups))
    # drop some entries to zero to get disjoint supports now and then
    ratio[rng.random((count, groups)) < 0.2] = 0.0
    for g in range(groups):
        if not ratio[:, g].any():
            ratio[rng.integers(count), g] = 1.0
    weight = rng.uniform(0.2, 1.0, size=dim)
    rows = ratio[:, assign] * weight[None, :]
    for i in range(count):
        if rows[i].sum() == 0:
            rows[i, rng.integers(dim)] = 1.0
    e = classical(rows, probs=_random_probs(rng, count))
    if rotate:
        e = e.conjugated(mc.random_unitary(dim, rng))
        e = Ensemble(e.dim, e.labels, e.probs, tuple(0.5 * (s + s.conj().T) for s in e.states))
    return e


# --- named fixtures ---------------------------------------------------------

def _plus():
    return mc.ket_projector([1, 1])


def fixture(name: str) -> Ensemble:
    """Built-in reference ensembles ``E1`` ... ``E7``."""
    k0 = np.diag([1.0, 0.0]).astype(np.complex128)
    k1 = np.diag([0.0, 1.0]).astype(np.complex128)
    if name == "E1":
        return Ensemble(2, ("0",), np.array([1.0]), (k0,))
    if name == "E2":
        return Ensemble(2, ("0", "1"), np.array([0.5, 0.5]), (k0, k1))
    if name == "E3":
        return Ensemble(2, ("0", "+"), np.array([0.5, 0.5]), (k0, _plus()))
    if name == "E4":
        return Ensemble(2, ("rho",), np.array([1.0]), (np.diag([0.7, 0.3]).astype(np.complex128),))
    if name == "E5":
        return classical([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]], labels=["a", "b"])
    if name == "E6":
        return attach_redundancy(fixture("E3"), np.diag([0.7, 0.3]))
    if name == "E7":
        return Ensemble(2, ("mixed", "+"), np.array([0.5, 0.5]),
                        (np.diag([0.75, 0.25]).astype(np.complex128), _plus()))
    raise KeyError(f"unknown fixture {name!r}")


FIXTURE_NAMES = ("E1", "E2", "E3", "E4", "E5", "E6", "E7")


# --- file format ------------------------------------------------------------

def format_float(x: float) -> str:
    s = format(float(x), ".17g")
    return "0" if s == "-0" else s


def dumps_json(obj, indent: int = 0, step: int = 2) -> str:
    """JSON text with floats at 17 significant digits; deterministic key order as given."""
    pad = " " * (indent + step)
    end = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent + step, step)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent + step, step) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise ValueError("cannot serialize non-finite number")
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(rows, where: str = "matrix") -> np.ndarray:
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidEnsemble(f"{where}: entries must be [re, im] number pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise InvalidEnsemble(f"{where}: expected a nested array of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def ensemble_to_dict(e: Ensemble) -> dict:
    return {
        "dim": int(e.dim),
        "letters": [{"label": lab, "prob": float(p), "state": matrix_to_json(s)}
                    for lab, p, s in zip(e.labels, e.probs, e.states)],
    }


def ensemble_from_dict(data, lenient: bool = False) -> Ensemble:
    if not isinstance(data, dict):
        raise InvalidEnsemble("ensemble file must hold a JSON object")
    if not lenient:
        extra = set(data) - {"dim", "letters"}
        if extra:
            raise InvalidEnsemble(f"unknown fields {sorted(extra)}")
    if "dim" not in data or "letters" not in data:
        raise InvalidEnsemble("ensemble needs 'dim' and 'letters'")
    dim = data["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise InvalidEnsemble("'dim' must be a positive integer")
    letters = data["letters"]
    if not isinstance(letters, list) or not letters:
        raise InvalidEnsemble("'letters' must be a non-empty array")
    labels, probs, states = [], [], []
    for k, let in enumerate(letters):
        if not isinstance(let, dict):
            raise InvalidEnsemble(f"letter {k} is not an object")
        if not lenient:
            extra = set(let) - {"label", "prob", "state"}
            if extra:
                raise InvalidEnsemble(f"letter {k}: unknown fields {sorted(extra)}")
        try:
            labels.append(str(let["label"]))
            prob = let["prob"]
            state = let["state"]
        except KeyError as exc:
            raise InvalidEnsemble(f"letter {k}: missing field {exc}") from exc
        if not isinstance(prob, (int, float)) or isinstance(prob, bool):
            raise InvalidEnsemble(f"letter {k}: 'prob' must be a number")
        probs.append(float(prob))
        m = matrix_from_json(state, f"letter {k} state")
        if m.shape != (dim, dim):
            raise InvalidEnsemble(f"letter {k}: state shape {m.shape} != ({dim}, {dim})")
        states.append(m)
    return Ensemble(dim, tuple(labels), np.array(probs), tuple(states))


def dumps_ensemble(e: Ensemble) -> str:
    return dumps_json(ensemble_to_dict(e)) + "\n"


def loads_ensemble(text: str, lenient: bool = False) -> Ensemble:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidEnsemble(f"malformed JSON: {exc}") from exc
    return ensemble_from_dict(data, lenient=lenient)


def read_ensemble(path, lenient: bool = False) -> Ensemble:
    with open(path, encoding="utf-8") as fh:
        return loads_ensemble(fh.read(), lenient=lenient)


def write_ensemble(e: Ensemble, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_ensemble(e))
