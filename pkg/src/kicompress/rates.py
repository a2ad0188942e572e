"""Compression rates, gaps and the classical/quantum, pure/mixed classification of a source.

All quantities are in bits. With block probabilities ``p_l``, factor
dimensions ``dim_J`` and block-averaged ``J`` states ``rho_J^(l)``:

* ``i_c  = H(p_l)``                       classical part
* ``d_nc = sum_l p_l log2 dim_J``         nonclassical dimension part
* ``i_nc = sum_l p_l S(rho_J^(l))``       nonclassical entropy part
* variable-length faithful rate  ``i_c + d_nc``
* fixed-length asymptotically faithful rate ``i_c + i_nc``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore as mc
from .ensemble import Ensemble, average_state, require_valid
from .errors import InconsistentBound, InternalConsistencyError
from .kidecomp import DecompConfig, KIDecomposition, ki_decompose, max_commutator

CLAMP_TOL = 1e-9
BOUND_TOL = 1e-7
PURE_TOL = 1e-7

CLASSES = ("classical-pure", "classical-mixed", "quantum-pure", "quantum-mixed")

# relation between the three optimal rates in each classification cell
TABLE1 = {
    "classical-pure": "R_vlf = R_flaf = I_eff",
    "classical-mixed": "R_vlf = R_flaf >= I_eff",
    "quantum-pure": "R_vlf >= R_flaf = I_eff",
    "quantum-mixed": "R_vlf >= R_flaf >= I_eff",
}


def clamp(x: float, what: str = "value") -> float:
    """Clamp tiny negative rounding to zero; larger negatives are bugs."""
    x = float(x)
    if x < -CLAMP_TOL:
        raise InternalConsistencyError(f"{what} = {x:.3e} is negative beyond tolerance")
    return max(x, 0.0) + 0.0


def i_c(d: KIDecomposition) -> float:
    return mc.entropy_of_spectrum(d.p_l)


def d_nc(d: KIDecomposition) -> float:
    return clamp(sum(b.p_l * np.log2(b.dim_J) for b in d.blocks), "d_nc")


def i_nc(d: KIDecomposition) -> float:
    return clamp(sum(b.p_l * mc.vn_entropy(b.rho_J_avg) for b in d.blocks), "i_nc")


def levitin_holevo(e: Ensemble) -> float:
    require_valid(e)
    val = mc.vn_entropy(average_state(e)) - sum(p * mc.vn_entropy(s) for p, s in zip(e.probs, e.states))
    return clamp(val, "levitin_holevo")


def reduced_state(d: KIDecomposition, i: int) -> np.ndarray:
    """Letter ``i`` with every redundant ``K`` factor stripped: ``(+)_l p_il rho_J^(i,l)``."""
    parts = []
    for b in d.blocks:
        m = b.rho_J_il[i]
        parts.append(np.zeros((b.dim_J, b.dim_J), dtype=np.complex128) if m is None else b.p_il[i] * m)
    return mc.direct_sum(parts)


def reduced_ensemble(e: Ensemble, d: KIDecomposition) -> Ensemble:
    states = [reduced_state(d, i) for i in range(len(e))]
    return Ensemble(states[0].shape[0], e.labels, e.probs, tuple(states))


def defect_upper_bound(e: Ensemble, d: KIDecomposition) -> float:
    """Upper bound on the blind-visible information defect.

    Evaluated as ``sum_i p_i S(rho_i^R)`` and cross-checked against
    ``sum_i p_i S(rho_i) - sum_l p_l S(rho_K^(l))``.
    """
    reduced = sum(p * mc.vn_entropy(reduced_state(d, i)) for i, p in enumerate(e.probs))
    direct = (sum(p * mc.vn_entropy(s) for p, s in zip(e.probs, e.states))
              - sum(b.p_l * mc.vn_entropy(b.rho_K) for b in d.blocks))
    if abs(reduced - direct) > BOUND_TOL:
        raise InconsistentBound(f"defect bound: reduced-state form {reduced:.12g} vs direct form {direct:.12g}")
    return clamp(reduced, "defect_upper_bound")


def is_classical(e: Ensemble, tol: float = 1e-8) -> bool:
    return max_commutator(list(e.states), tol) <= 0


def classify(e: Ensemble, d: KIDecomposition, commute_tol: float = 1e-8) -> str:
    kind = "classical" if is_classical(e, commute_tol) else "quantum"
    worst = max(mc.vn_entropy(reduced_state(d, i)) for i in range(len(e)))
    return f"{kind}-{'pure' if worst <= PURE_TOL else 'mixed'}"


def shadow_ensemble(d: KIDecomposition) -> Ensemble:
    """Orthogonal ensemble with letters ``|a_j><a_j| (x) rho_K^(l)``, weight ``p_l / dim_J``.

    ``|a_j>`` runs over the canonical basis of each ``H_J^(l)`` (the
    eigenbasis of ``rho_J^(l)``).
    """
    labels, probs, states = [], [], []
    for b in d.blocks:
        for j in range(b.dim_J):
            a = np.zeros((b.dim_J, b.dim_J), dtype=np.complex128)
            a[j, j] = 1.0
            labels.append(f"{b.index},{j}")
            probs.append(b.p_l / b.dim_J)
            states.append(b.embed(np.kron(a, b.rho_K)))
    return Ensemble(d.dim, tuple(labels), np.array(probs), tuple(states))


def shadow_average(d: KIDecomposition) -> np.ndarray:
    """``(+)_l p_l / dim_J  1_J (x) rho_K^(l)`` in the ambient space."""
    out = np.zeros((d.dim, d.dim), dtype=np.complex128)
    for b in d.blocks:
        out += b.p_l / b.dim_J * b.embed(np.kron(np.eye(b.dim_J), b.rho_K))
    return out


@dataclass(frozen=True)
class RateReport:
    i_c: float
    d_nc: float
    i_nc: float
    i_lh: float
    r_vlf_opt: float
    r_flaf_opt: float
    gap_f_af: float
    defect_upper: float
    classification: str
    decomposition: KIDecomposition | None = None

    @property
    def i_eff_interval(self) -> tuple[float, float]:
        """Bracket for the visible-scenario rate; its exact value is not computed."""
        return (min(self.i_lh, self.r_flaf_opt), self.r_flaf_opt)

    @property
    def table1_cell(self) -> str:
        return TABLE1[self.classification]

    def check(self) -> None:
        for name in ("i_c", "d_nc", "i_nc", "i_lh", "r_vlf_opt", "r_flaf_opt", "gap_f_af", "defect_upper"):
            if getattr(self, name) < -CLAMP_TOL:
                raise InternalConsistencyError(f"{name} is negative")
        if self.r_vlf_opt != self.i_c + self.d_nc or self.r_flaf_opt != self.i_c + self.i_nc:
            raise InternalConsistencyError("rates are not the sums of their parts")
        if self.r_flaf_opt < self.i_lh - BOUND_TOL:
            raise InternalConsistencyError(
                f"fixed-length rate {self.r_flaf_opt:.12g} below Levitin-Holevo value {self.i_lh:.12g}")
        if self.classification not in CLASSES:
            raise InternalConsistencyError(f"unknown classification {self.classification!r}")

    def to_dict(self, table1: bool = False) -> dict:
        out = {
            "i_c": self.i_c,
            "d_nc": self.d_nc,
            "i_nc": self.i_nc,
            "i_lh": self.i_lh,
            "r_vlf_opt": self.r_vlf_opt,
            "r_flaf_opt": self.r_flaf_opt,
            "gap_f_af": self.gap_f_af,
            "defect_upper": self.defect_upper,
            "i_eff_interval": list(self.i_eff_interval),
            "classification": self.classification,
        }
        if self.decomposition is not None:
            out["blocks"] = [{"dim_J": b.dim_J, "dim_K": b.dim_K, "p_l": b.p_l}
                             for b in self.decomposition.blocks]
        if table1:
            out["table1"] = self.table1_cell
        return out

    def to_text(self, table1: bool = False) -> str:
        rows = [
            ("classical part I_C", self.i_c),
            ("nonclassical dimension D_NC", self.d_nc),
            ("nonclassical entropy I_NC", self.i_nc),
            ("Levitin-Holevo I_LH", self.i_lh),
            ("variable-length faithful rate", self.r_vlf_opt),
            ("fixed-length asympt. faithful rate", self.r_flaf_opt),
            ("gap D_NC - I_NC", self.gap_f_af),
            ("information defect bound", self.defect_upper),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val:.10f} bits" for name, val in rows]
        lo, hi = self.i_eff_interval
        lines.append(f"{'effective information I_eff':<{width}}  in [{lo:.10f}, {hi:.10f}] bits")
        lines.append(f"{'classification':<{width}}  {self.classification}")
        if self.decomposition is not None:
            for b in self.decomposition.blocks:
                lines.append(f"{'block ' + str(b.index):<{width}}  dim_J={b.dim_J} dim_K={b.dim_K} p={b.p_l:.10f}")
        if table1:
            lines.append(f"{'rate relation':<{width}}  {self.table1_cell}")
        return "\n".join(lines) + "\n"


def report_from_decomposition(e: Ensemble, d: KIDecomposition, commute_tol: float = 1e-8) -> RateReport:
    ic, dnc, inc = i_c(d), d_nc(d), i_nc(d)
    report = RateReport(
        i_c=ic,
        d_nc=dnc,
        i_nc=inc,
        i_lh=levitin_holevo(e),
        r_vlf_opt=ic + dnc,
        r_flaf_opt=ic + inc,
        gap_f_af=clamp(dnc - inc, "gap_f_af"),
        defect_upper=defect_upper_bound(e, d),
        classification=classify(e, d, commute_tol),
        decomposition=d,
    )
    report.check()
    return report


def full_report(e: Ensemble, config: DecompConfig | None = None) -> RateReport:
    config = config or DecompConfig()
    return report_from_decomposition(e, ki_decompose(e, config), config.commute_tol)

