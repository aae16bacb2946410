"""Reconfiguration policy: when to act on the filter's signal.

The raw signal flips freely epoch to epoch; applying every flip would
thrash the network.  Three deployment rules temper it:

* warmup    no reconfiguration before ``warmup_cycles`` (counter ranges
            are still being learned, early signals are noise),
* hold      at least ``hold_min_cycles`` between applied changes,
* revert    after more than ``revert_after_cycles`` of continuous
            signal-1 operation, fall back to the fair configuration so
            sustained GPU preference cannot starve CPU service.

A signal-1 configuration widens the GPU VC share and serves the switch
in a GPU, GPU, CPU rotation; signal 0 restores the even split with
round-robin arbitration.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .router import (GPU_PREFERRED_POLICY, ROUND_ROBIN_POLICY, SwitchPolicy,
                     VcPartition)


@dataclass(frozen=True)
class PolicyParams:
    epoch_len: int = 1000
    warmup_cycles: int = 10000
    hold_min_cycles: int = 5000
    revert_after_cycles: int = 10000

    def __post_init__(self) -> None:
        if self.epoch_len <= 0:
            raise ValueError("epoch_len must be positive")
        if self.warmup_cycles < 0 or self.hold_min_cycles < 0 \
                or self.revert_after_cycles < 0:
            raise ValueError("policy cycle thresholds must be non-negative")


@dataclass(frozen=True)
class PolicyState:
    applied_signal: int = 0
    last_change_cycle: int | None = None
    signal1_since: int | None = None


@dataclass(frozen=True)
class Decision:
    state: PolicyState
    applied_signal: int
    changed: bool
    reason: str


def epoch_decide(params: PolicyParams, state: PolicyState, cycle: int,
                 kf_signal: int) -> Decision:
    """Resolve the applied signal for the epoch ending at ``cycle``.

    Reasons in the decision trace: ``warmup`` (forced 0 during warmup),
    ``revert`` (forced fallback applied), ``hold`` (wanted change
    deferred), ``follow`` (filter signal applied), ``steady`` (nothing
    to change).
    """
    desired = 1 if kf_signal else 0
    reason = "follow"
    if cycle < params.warmup_cycles:
        desired = 0
        reason = "warmup"
    elif state.applied_signal == 1 and state.signal1_since is not None \
            and cycle - state.signal1_since > params.revert_after_cycles:
        desired = 0
        reason = "revert"

    changed = desired != state.applied_signal
    if changed and state.last_change_cycle is not None \
            and cycle - state.last_change_cycle < params.hold_min_cycles:
        return Decision(state, state.applied_signal, False, "hold")
    if not changed:
        if reason == "follow":
            reason = "steady"
        return Decision(state, state.applied_signal, False, reason)

    new_state = replace(state, applied_signal=desired, last_change_cycle=cycle,
                        signal1_since=cycle if desired == 1 else None)
    return Decision(new_state, desired, True, reason)


def vc_partition_for(signal: int, vcs_per_port: int) -> VcPartition:
    """VC split per signal: even halves at 0, roughly 3/4 to the GPU at
    1 (the CPU always keeps at least one VC).  GPU VCs are the low
    indices."""
    if vcs_per_port < 2:
        raise ValueError("partitioning needs at least 2 VCs per port")
    if signal:
        gpu_count = min(-(-3 * vcs_per_port // 4), vcs_per_port - 1)
    else:
        gpu_count = vcs_per_port // 2
    return VcPartition(gpu_vcs=frozenset(range(gpu_count)),
                       cpu_vcs=frozenset(range(gpu_count, vcs_per_port)))


def arb_policy_for(signal: int) -> SwitchPolicy:
    return GPU_PREFERRED_POLICY if signal else ROUND_ROBIN_POLICY
