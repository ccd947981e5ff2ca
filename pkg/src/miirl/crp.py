"""Chinese-restaurant-process bookkeeping and the stochastic E-step pieces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NEW = -2
UNASSIGNED = -1


@dataclass
class CrpState:
    """Hard assignments of trajectories to intentions.

    ``assignments[m]`` is an intention index or ``UNASSIGNED``; ``counts[k]``
    is the number of trajectories on intention ``k``. Intentions are never
    left empty: they are pruned and the survivors renumbered in order.
    """

    assignments: list[int]
    counts: list[int]
    alpha: float = 1.0

    @classmethod
    def round_robin(cls, n_trajectories: int, k_init: int, alpha: float) -> CrpState:
        k = min(k_init, n_trajectories)
        assignments = [m % k for m in range(n_trajectories)]
        return cls(assignments, np.bincount(assignments, minlength=k).tolist(), alpha)

    @classmethod
    def from_assignments(cls, assignments, alpha: float) -> CrpState:
        """State for a given labelling; labels must cover ``0..K-1`` without gaps."""
        assignments = [int(a) for a in assignments]
        state = cls(assignments, np.bincount(assignments).tolist() if assignments else [], alpha)
        state.check()
        return state

    @property
    def K(self) -> int:
        return len(self.counts)

    @property
    def M(self) -> int:
        return len(self.assignments)

    def copy(self) -> CrpState:
        return CrpState(list(self.assignments), list(self.counts), self.alpha)

    def check(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        assigned = [a for a in self.assignments if a != UNASSIGNED]
        if any(not 0 <= a < self.K for a in assigned):
            raise AssertionError("assignment refers to a missing intention")
        if np.bincount(assigned, minlength=self.K).tolist() != list(self.counts):
            raise AssertionError("counts disagree with assignments")
        if any(c < 1 for c in self.counts):
            raise AssertionError("empty intention left in state")

    def counts_excluding(self, m: int | None) -> tuple[np.ndarray, list[int]]:
        """Counts with trajectory ``m`` removed, dropping emptied intentions.

        Returns the surviving counts and their original indices.
        """
        counts = np.array(self.counts, dtype=np.float64)
        if m is not None and self.assignments[m] != UNASSIGNED:
            counts[self.assignments[m]] -= 1
        kept = [k for k in range(self.K) if counts[k] > 0]
        return counts[kept], kept


@dataclass
class AssignmentEvent:
    born: bool = False
    # old -> new index map when an emptied intention was pruned
    remap: dict[int, int] | None = field(default=None)
    removed: int | None = None


def _remove(state: CrpState, m: int) -> AssignmentEvent:
    old = state.assignments[m]
    event = AssignmentEvent()
    if old == UNASSIGNED:
        return event
    state.assignments[m] = UNASSIGNED
    state.counts[old] -= 1
    if state.counts[old] == 0:
        del state.counts[old]
        event.removed = old
        event.remap = {k: (k if k < old else k - 1) for k in range(state.K + 1) if k != old}
        state.assignments = [a if a == UNASSIGNED or a < old else a - 1 for a in state.assignments]
    return event


def unassign(state: CrpState, m: int) -> AssignmentEvent:
    """Take trajectory ``m`` out of its intention, pruning it if it empties."""
    event = _remove(state, m)
    state.check()
    return event


def apply_assignment(state: CrpState, m: int, target: int) -> AssignmentEvent:
    """Move trajectory ``m`` to intention ``target`` (current indexing) or to ``NEW``.

    The old intention is pruned if the move empties it; ``event.remap``
    then maps pre-move indices to post-move ones.
    """
    if not 0 <= m < state.M:
        raise IndexError(f"trajectory {m} out of range")
    if target != NEW and not 0 <= target < state.K:
        raise IndexError(f"intention {target} out of range (K={state.K})")
    old = state.assignments[m]
    if target == old:
        return AssignmentEvent()
    if target == NEW:
        state.counts.append(1)
        state.assignments[m] = state.K - 1
        born = True
    else:
        state.counts[target] += 1
        state.assignments[m] = target
        born = False
    if old != UNASSIGNED:
        state.counts[old] -= 1
        if state.counts[old] == 0:
            del state.counts[old]
            state.assignments = [a if a < old else a - 1 for a in state.assignments]
            remap = {k: (k if k < old else k - 1) for k in range(state.K + 1) if k != old}
            state.check()
            return AssignmentEvent(born=born, remap=remap, removed=old)
    state.check()
    return AssignmentEvent(born=born)


def crp_prior(state: CrpState, exclude: int | None = None) -> np.ndarray:
    """Prior over the surviving intentions (in index order) followed by a new one.

    Entry ``k`` is ``M_k^{-m} / (M - 1 + alpha)`` and the last entry is
    ``alpha / (M - 1 + alpha)``, where ``M - 1`` counts the other assigned
    trajectories.
    """
    counts, _ = state.counts_excluding(exclude)
    total = counts.sum() + state.alpha
    if total <= 0:
        raise ValueError("degenerate CRP prior: no other trajectories and alpha = 0")
    return np.append(counts, state.alpha) / total


def estep_responsibilities(prior_counts, alpha: float, logliks) -> np.ndarray:
    """Posterior over intentions ``1..K`` and a new one, computed in log space."""
    counts = np.asarray(prior_counts, dtype=np.float64)
    logliks = np.asarray(logliks, dtype=np.float64)
    if logliks.shape != (counts.shape[0] + 1,):
        raise ValueError(f"need {counts.shape[0] + 1} log-likelihoods, got {logliks.shape}")
    with np.errstate(divide="ignore"):
        logw = np.log(np.append(counts, alpha)) + logliks
    top = logw.max()
    if not np.isfinite(top):
        raise ValueError("no intention can explain the trajectory")
    w = np.exp(logw - top)
    return w / w.sum()


def sstep_sample(gamma, rng: np.random.Generator) -> int:
    """Categorical draw from ``gamma``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if abs(gamma.sum() - 1.0) > 1e-9:
        raise ValueError("responsibilities must sum to 1")
    idx = int(np.searchsorted(np.cumsum(gamma), rng.random() * gamma.sum(), side="right"))
    # guard against landing past the end through round-off or on a zero-mass tail
    idx = min(idx, len(gamma) - 1)
    while gamma[idx] == 0.0:
        idx -= 1
    return idx


def mh_accept(current_loglik: float, proposed_loglik: float, rng: np.random.Generator) -> bool:
    """Metropolis-Hastings test with acceptance ``min(1, exp(proposed - current))``."""
    u = rng.random()
    if proposed_loglik >= current_loglik:
        return True
    return bool(np.log(u) < proposed_loglik - current_loglik)
