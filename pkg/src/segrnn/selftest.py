"""Budgeted oracle-equivalence sweep over random lattices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import oracle
from .decoder import decode_joint, decode_marginal_hybrid
from .lattice import ScoreLattice
from .segcrf import is_feasible, lattice_nll, log_clamped, log_partition

REL_TOL = 1e-9


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: int = 0
    worst: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.failures == 0


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300) if b != 0 else abs(a)


def random_grid(rng: np.random.Generator, per_cell: int = 1, max_T: int = 6, max_V: int = 3):
    """Lattices over every (T, V, L) with T <= max_T, V <= max_V, L <= T."""
    for T in range(1, max_T + 1):
        for V in range(1, max_V + 1):
            for L in range(1, T + 1):
                for _ in range(per_cell):
                    yield ScoreLattice.random(rng, T, L, V)


def random_feasible_labels(rng: np.random.Generator, lattice: ScoreLattice) -> list[int]:
    Js = [J for J in range(1, lattice.T + 1) if is_feasible(lattice.T, lattice.L, J)]
    J = int(rng.choice(Js))
    return rng.integers(0, lattice.V, size=J).tolist()


def run(seed: int = 0) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    partition = SuiteResult("log_partition vs enumeration")
    clamped = SuiteResult("log_clamped vs enumeration")
    joint = SuiteResult("decode_joint vs exhaustive argmax")
    hybrid = SuiteResult("marginal-hybrid score >= joint score")
    grads = SuiteResult("dloss/dscore vs posterior difference")
    for lattice in random_grid(rng):
        a, b = log_partition(lattice).item(), oracle.brute_log_partition(lattice)
        partition.cases += 1
        partition.worst = max(partition.worst, _rel(a, b))
        partition.failures += _rel(a, b) >= REL_TOL

        y = random_feasible_labels(rng, lattice)
        a, b = log_clamped(lattice, y).item(), oracle.brute_log_clamped(lattice, y)
        clamped.cases += 1
        clamped.worst = max(clamped.worst, _rel(a, b))
        clamped.failures += _rel(a, b) >= REL_TOL

        res = decode_joint(lattice)
        labels, seg, score = oracle.brute_argmax(lattice)
        joint.cases += 1
        ok = res.score == score and tuple(res.labels) == labels and tuple(res.segmentation) == tuple(seg)
        joint.failures += not ok

        hyb = decode_marginal_hybrid(lattice)
        hybrid.cases += 1
        hybrid.failures += hyb.score < res.score

        if lattice.T <= 5:
            leaves = [ad.Tensor(b.value, requires_grad=True) for b in lattice.by_duration]
            leaf_lattice = ScoreLattice(lattice.T, lattice.L, lattice.V, leaves)
            with ad.Tape() as tape:
                loss = lattice_nll(leaf_lattice, y)
            g = ad.backward(loss, tape, leaves)
            p_free = oracle.brute_segment_posteriors(lattice)
            p_clamp = oracle.brute_segment_posteriors(lattice, y)
            worst = max(
                abs(g[leaves[t - k - 1]][k, lab] - (p_free[(k, t, lab)] - p_clamp[(k, t, lab)]))
                for k, t, lab, _ in lattice.entries()
            )
            grads.cases += 1
            grads.worst = max(grads.worst, worst)
            grads.failures += worst >= REL_TOL
    return [partition, clamped, joint, hybrid, grads]


def format_table(results: list[SuiteResult]) -> str:
    lines = [f"{'suite':<40}{'cases':>7}{'fail':>6}{'worst':>12}  status"]
    for r in results:
        lines.append(f"{r.name:<40}{r.cases:>7}{r.failures:>6}{r.worst:>12.2e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
