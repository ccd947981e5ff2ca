"""SEM-MIIRL and MCEM-MIIRL training loops and the fixed-K ablation."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from miirl.crp import (
    NEW,
    CrpState,
    apply_assignment,
    crp_prior,
    estep_responsibilities,
    mh_accept,
    sstep_sample,
    unassign,
)
from miirl.envs import Trajectory
from miirl.maxent import mstep_state_weights, realized_svf, trajectory_loglik, trajectory_svf
from miirl.mdp import DEFAULT_TOLERANCE, SoftSolution, TabularMdp, soft_backward
from miirl.reward_net import Gradients, Head, RewardNet

log = logging.getLogger(__name__)

SEED_BOUND = 2**63


class TrainingError(RuntimeError):
    """Training hit a non-finite quantity; the message names the iteration."""


class Algorithm(str, enum.Enum):
    SEM = "SEM"
    MCEM = "MCEM"


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm = Algorithm.SEM
    alpha: float = 1.0
    k_init: int = 1
    fixed_k: int | None = None
    max_iter: int = 200
    lr: float = 1e-3
    vi_tolerance: float = DEFAULT_TOLERANCE
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    reward_feature_dim: int = 16
    head_bias: bool = True
    # Gaussian prior on the network parameters (0 = plain maximum likelihood)
    l2: float = 0.0

    def resolved(self) -> TrainConfig:
        """Validated copy; ``fixed_k`` forces ``alpha = 0`` and ``k_init = fixed_k``.

        Under ``fixed_k`` no intention is born or emptied, so ``K`` stays put.
        """
        cfg = replace(self, algorithm=Algorithm(self.algorithm), hidden=tuple(self.hidden))
        if cfg.fixed_k is not None:
            if cfg.fixed_k < 1:
                raise ValueError("fixed_k must be >= 1")
            cfg = replace(cfg, alpha=0.0, k_init=cfg.fixed_k)
        if cfg.alpha < 0 or cfg.l2 < 0:
            raise ValueError("alpha and l2 must be >= 0")
        if cfg.k_init < 1 or cfg.max_iter < 0 or cfg.lr <= 0 or cfg.vi_tolerance <= 0:
            raise ValueError(f"invalid training config: {cfg}")
        return cfg


@dataclass
class IterationRecord:
    iteration: int
    k: int
    counts: list[int]
    wall_ms: float  # cumulative training time, evaluation excluded
    avg_evd: float | None = None
    transfer_avg_evd: float | None = None
    births: int = 0
    deaths: int = 0
    accepted: int = 0


@dataclass
class TrainResult:
    net: RewardNet
    crp: CrpState
    config: TrainConfig
    history: list[IterationRecord] = field(default_factory=list)
    # evaluator scores of the untrained model
    initial_avg_evd: float | None = None
    initial_transfer_avg_evd: float | None = None


# evaluator(net, crp) -> (avg_evd, transfer_avg_evd); either may be None
Evaluator = Callable[[RewardNet, CrpState], tuple]


class _Trainer:
    def __init__(
        self,
        features,
        mdp: TabularMdp,
        demos: Sequence[Trajectory],
        config: TrainConfig,
        initial_net: RewardNet | None = None,
        initial_assignments: Sequence[int] | None = None,
    ):
        if not demos:
            raise ValueError("need at least one demonstration")
        self.cfg = config.resolved()
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.shape[0] != mdp.n_states:
            raise ValueError("features need one row per MDP state")
        self.mdp = mdp
        self.demos = list(demos)
        self.rng = np.random.default_rng(self.cfg.seed)
        if initial_assignments is None:
            self.crp = CrpState.round_robin(len(self.demos), self.cfg.k_init, self.cfg.alpha)
        else:
            if len(initial_assignments) != len(self.demos):
                raise ValueError("need one initial assignment per demonstration")
            self.crp = CrpState.from_assignments(initial_assignments, self.cfg.alpha)
        net_seed = self._child_seed()
        if initial_net is None:
            self.net = RewardNet.init(
                self.features.shape[1],
                self.cfg.reward_feature_dim,
                self.crp.K,
                seed=net_seed,
                hidden=self.cfg.hidden,
                head_bias=self.cfg.head_bias,
            )
        else:
            if initial_net.K != self.crp.K or initial_net.feature_dim != self.features.shape[1]:
                raise ValueError("initial network does not match the features or intention count")
            self.net = initial_net.copy()
        self.svfs = [trajectory_svf(d, mdp.n_states) for d in self.demos]
        self.horizon = max(len(d) for d in self.demos)
        self.solutions: list[SoftSolution] = []  # parallel to net.heads
        self.counters = {"births": 0, "deaths": 0, "accepted": 0}

    def _child_seed(self) -> int:
        return int(self.rng.integers(SEED_BOUND))

    def _solve(self, reward) -> SoftSolution:
        # time-indexed soft policy over the demonstration horizon
        return soft_backward(self.mdp, reward, self.horizon)

    def solve_all(self) -> None:
        self.solutions = [self._solve(r) for r in self.net.rewards(self.features)]

    def loglik(self, solution: SoftSolution, m: int) -> float:
        return trajectory_loglik(solution.policy, self.demos[m], solution.log_policy)

    def detach(self, m: int):
        """Unassign ``m``; if that kills its intention, hand back the dead head as candidate."""
        event = unassign(self.crp, m)
        if event.removed is None:
            return None
        self.counters["deaths"] += 1
        k = event.removed
        return self.net.heads.pop(k), self.solutions.pop(k)

    def fresh_candidate(self, reward_features: np.ndarray):
        head = self.net.new_head(self._child_seed())
        return head, self._solve(head(reward_features))

    def assign(self, m: int, target: int, candidate) -> None:
        if target == self.crp.K:
            head, solution = candidate
            self.net.heads.append(head)
            self.solutions.append(solution)
            apply_assignment(self.crp, m, NEW)
            self.counters["births"] += 1
        else:
            apply_assignment(self.crp, m, target)

    def mstep(self, m: int, gamma, activations, candidate=None) -> None:
        """One Adam step on the responsibility-weighted likelihood gradient.

        ``gamma`` covers the current heads, plus a trailing entry for a
        detached ``(head, solution)`` candidate when one is given.
        """
        demo = self.demos[m]
        keys: list = list(range(self.net.K))
        solutions = list(self.solutions)
        if candidate is not None:
            keys.append(candidate[0])
            solutions.append(candidate[1])
        expected = np.zeros((len(keys), self.mdp.n_states))
        for i, (g, sol) in enumerate(zip(gamma, solutions)):
            if g != 0.0:
                expected[i] = realized_svf(self.mdp, sol.log_policy, demo, self.mdp.discount)
        rows = mstep_state_weights(gamma, self.svfs[m], expected)
        weights = {
            key: row for key, g, row in zip(keys, gamma, rows)
            if g != 0.0 or not isinstance(key, Head)
        }
        grads = self.net.backward_many(self.features, weights, activations)
        if self.cfg.l2 > 0:
            grads = self._with_prior(grads)
        self.net.adam_step(grads, self.cfg.lr)

    def _with_prior(self, grads: Gradients) -> Gradients:
        l2 = self.cfg.l2
        base = [g - l2 * p for g, p in zip(grads.base, self.net.base_params)]
        heads = {
            k: [g - l2 * p for g, p in zip(gs, self.net.heads[k].params)]
            for k, gs in grads.heads.items()
        }
        return Gradients(base, heads)

    # one visit of trajectory m

    def pinned(self, m: int) -> bool:
        """With a fixed intention count the last member of an intention stays put."""
        return self.cfg.fixed_k is not None and self.crp.counts[self.crp.assignments[m]] == 1

    def visit_pinned(self, m: int) -> None:
        gamma = np.zeros(self.net.K)
        gamma[self.crp.assignments[m]] = 1.0
        self.mstep(m, gamma, self.net.base_forward(self.features))

    def visit_sem(self, m: int) -> None:
        if self.pinned(m):
            return self.visit_pinned(m)
        candidate = self.detach(m)
        acts = self.net.base_forward(self.features)
        if candidate is None:
            candidate = self.fresh_candidate(acts[-1])
        head, cand_solution = candidate
        logliks = [self.loglik(sol, m) for sol in self.solutions]
        logliks.append(self.loglik(cand_solution, m))
        if self.crp.K == 0:
            gamma = np.array([1.0])
        else:
            gamma = estep_responsibilities(self.crp.counts, self.cfg.alpha, logliks)
        born = (k := sstep_sample(gamma, self.rng)) == self.crp.K
        self.assign(m, k, candidate)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("visit m=%d K=%d sampled=%d born=%s gamma=%s", m, self.crp.K, k, born,
                      np.array2string(gamma, precision=4))
        # a discarded candidate still contributes its responsibility share to the base
        self.mstep(m, gamma, acts, None if born else (head, cand_solution))

    def visit_mcem(self, m: int) -> None:
        if self.pinned(m):
            return self.visit_pinned(m)
        old = self.crp.assignments[m]
        candidate = self.detach(m)
        acts = self.net.base_forward(self.features)
        K = self.crp.K
        if K == 0:
            prior = np.array([1.0])
        else:
            prior = crp_prior(self.crp)
        proposal = sstep_sample(prior, self.rng)
        if candidate is not None:
            current, current_ll = K, self.loglik(candidate[1], m)
        else:
            current, current_ll = old, self.loglik(self.solutions[old], m)
            if proposal == K:
                candidate = self.fresh_candidate(acts[-1])
        proposed = candidate[1] if proposal == K else self.solutions[proposal]
        accepted = mh_accept(current_ll, self.loglik(proposed, m), self.rng)
        target = proposal if accepted else current
        if accepted and proposal != current:
            self.counters["accepted"] += 1
        self.assign(m, target, candidate)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("visit m=%d K=%d proposed=%d accepted=%s", m, self.crp.K, proposal, accepted)
        gamma = np.zeros(self.net.K)
        gamma[target] = 1.0
        self.mstep(m, gamma, acts)

    def run(self, evaluator: Evaluator | None) -> TrainResult:
        visit = self.visit_sem if self.cfg.algorithm is Algorithm.SEM else self.visit_mcem
        result = TrainResult(self.net, self.crp, self.cfg)
        if evaluator is not None:
            result.initial_avg_evd, result.initial_transfer_avg_evd = evaluator(self.net, self.crp)
        elapsed = 0.0
        for it in range(self.cfg.max_iter):
            self.counters = dict.fromkeys(self.counters, 0)
            start = time.perf_counter()
            try:
                self.solve_all()
                for m in range(len(self.demos)):
                    visit(m)
            except (FloatingPointError, ValueError) as exc:
                raise TrainingError(f"iteration {it}, K={self.crp.K}: {exc}") from exc
            elapsed += (time.perf_counter() - start) * 1000.0
            if self.net.K != self.crp.K:
                raise AssertionError("head count and intention count diverged")
            record = IterationRecord(it, self.crp.K, list(self.crp.counts), elapsed, **self.counters)
            if evaluator is not None:
                record.avg_evd, record.transfer_avg_evd = evaluator(self.net, self.crp)
            result.history.append(record)
            log.info(
                "iteration=%d K=%d counts=%s births=%d deaths=%d avg_evd=%s",
                it, record.k, record.counts, record.births, record.deaths, record.avg_evd,
            )
        return result


def train_sem(
    features,
    mdp: TabularMdp,
    demos: Sequence[Trajectory],
    config: TrainConfig,
    evaluator: Evaluator | None = None,
    **init,
) -> TrainResult:
    """Adaptive multi-intention IRL with a stochastic-EM E-step.

    ``init`` may carry ``initial_net`` and ``initial_assignments`` to start
    from a given state instead of a fresh network and round-robin labels.
    """
    config = replace(config, algorithm=Algorithm.SEM)
    return _Trainer(features, mdp, demos, config, **init).run(evaluator)


def train_mcem(
    features,
    mdp: TabularMdp,
    demos: Sequence[Trajectory],
    config: TrainConfig,
    evaluator: Evaluator | None = None,
    **init,
) -> TrainResult:
    """Adaptive multi-intention IRL with a Metropolis-Hastings E-step."""
    config = replace(config, algorithm=Algorithm.MCEM)
    return _Trainer(features, mdp, demos, config, **init).run(evaluator)


def train(features, mdp, demos, config: TrainConfig, evaluator: Evaluator | None = None, **init) -> TrainResult:
    trainer = train_sem if Algorithm(config.algorithm) is Algorithm.SEM else train_mcem
    return trainer(features, mdp, demos, config, evaluator, **init)


def map_assignments(result: TrainResult) -> list[int]:
    """Final hard intention index of every demonstration."""
    return list(result.crp.assignments)
