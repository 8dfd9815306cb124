"""Seeded trial-level Monte Carlo of the write/feed-forward/read cycle.

Reproducibility contract: every trial's random decisions come from
counter-based Philox streams keyed by (seed, run_tag, setting index, draw
role, block index) with a fixed block length. Counts are therefore
bit-identical for a fixed seed regardless of execution order or the number
of workers; merging blocks is plain integer addition.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .entanglement import AngleSettings, projection_probs
from .decoherence import retrieval_decay
from .errors import ParameterError
from .params import CycleTiming, ExperimentParams

# Trials per RNG block. Fixed: changing it changes sampled streams.
BLOCK_TRIALS = 1 << 20

# Draw roles (one substream per role). Roles 9-12 exist only when
# double-pair sampling is enabled.
_N_COLS_SINGLE = 9
_N_COLS_DOUBLE = 13
(_U_PAIR, _U_S_DETECT, _U_S_WHICH, _U_S_BG, _U_S_BG_WHICH,
 _U_RETRIEVE, _U_AS_WHICH, _U_AS_BG, _U_AS_BG_WHICH,
 _U_P2_S_DETECT, _U_P2_S_WHICH, _U_P2_RETRIEVE, _U_P2_AS_WHICH) = range(13)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one write/read trial. ``pair_created`` is ground truth."""

    trial_index: int
    storage_time: float
    stokes_click: Optional[str]      # None, "D1" or "D2"
    antistokes_click: Optional[str]  # None, "D3" or "D4"
    pair_created: bool


@dataclass(frozen=True)
class CountsTable:
    """Aggregated singles and coincidence counts at one analyzer setting."""

    settings: AngleSettings
    storage_time: float
    n_pulses: int
    n_d1: int
    n_d2: int
    c13: int
    c24: int
    c14: int
    c23: int

    def __post_init__(self):
        for name in ("n_pulses", "n_d1", "n_d2", "c13", "c24", "c14", "c23"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.n_d1 + self.n_d2 > self.n_pulses:
            raise ParameterError("more Stokes singles than pulses")
        if self.c13 + self.c14 > self.n_d1:
            raise ParameterError("more D1 coincidences than D1 singles")
        if self.c23 + self.c24 > self.n_d2:
            raise ParameterError("more D2 coincidences than D2 singles")


@dataclass(frozen=True)
class ExperimentResult:
    """Counts per analyzer setting plus the simulated wall-clock time."""

    tables: Tuple[CountsTable, ...]
    wall_time: float  # seconds of simulated laboratory time


@dataclass(frozen=True)
class _TrialModel:
    """Per-trial probabilities derived from the experiment parameters."""

    chi: float
    chi2_half: float       # double-pair probability chi^2/2
    p_s_detect: float      # eta_s
    p_s_bg: float          # noise_b * eta_s
    p_retrieve: float      # R(t) * eta_as
    p_as_bg: float         # noise_c * eta_as
    match_prob: float      # P(matched detector pair | correlated click)
    double_pair: bool

    @property
    def n_cols(self) -> int:
        return _N_COLS_DOUBLE if self.double_pair else _N_COLS_SINGLE


def _trial_model(params: ExperimentParams, t: float, angles: AngleSettings,
                 double_pair: bool) -> _TrialModel:
    proj = projection_probs(angles, params.v0, params.phase)
    return _TrialModel(
        chi=params.chi,
        chi2_half=params.chi ** 2 / 2.0,
        p_s_detect=params.eta_s,
        p_s_bg=params.noise_b * params.eta_s,
        p_retrieve=retrieval_decay(params.decay, t) * params.eta_as,
        p_as_bg=params.noise_c * params.eta_as,
        match_prob=2.0 * proj.p13,
        double_pair=double_pair,
    )


def _simulate_block(model: _TrialModel, u: np.ndarray):
    """Vectorized trial decisions for a (n, n_cols) matrix of uniforms.

    Returns boolean arrays (s_click, s_d1, as_click, as_d3, pair_created).
    Click priority on collisions: first pair's photon, then second pair's,
    then channel background.
    """
    pair1 = u[:, _U_PAIR] < model.chi
    s_sig1 = pair1 & (u[:, _U_S_DETECT] < model.p_s_detect)
    s_bg = u[:, _U_S_BG] < model.p_s_bg
    if model.double_pair:
        pair2 = u[:, _U_PAIR] < model.chi2_half  # nested inside pair1
        s_sig2 = pair2 & (u[:, _U_P2_S_DETECT] < model.p_s_detect)
    else:
        pair2 = np.zeros_like(pair1)
        s_sig2 = pair2

    s_click = s_sig1 | s_sig2 | s_bg
    if model.double_pair:
        s_d1 = np.where(
            s_sig1, u[:, _U_S_WHICH] < 0.5,
            np.where(s_sig2, u[:, _U_P2_S_WHICH] < 0.5,
                     u[:, _U_S_BG_WHICH] < 0.5))
    else:
        s_d1 = np.where(s_sig1, u[:, _U_S_WHICH] < 0.5,
                        u[:, _U_S_BG_WHICH] < 0.5)

    # Feed-forward: the read fires only after a heralding Stokes click.
    read = s_click
    ret1 = read & pair1 & (u[:, _U_RETRIEVE] < model.p_retrieve)
    # The retrieved photon is correlated with its own Stokes photon; if that
    # photon was not the recorded herald the reduced state is maximally
    # mixed and the detector choice is 50/50.
    as1_d3 = np.where(s_sig1,
                      s_d1 == (u[:, _U_AS_WHICH] < model.match_prob),
                      u[:, _U_AS_WHICH] < 0.5)
    as_bg = read & (u[:, _U_AS_BG] < model.p_as_bg)
    as_bg_d3 = u[:, _U_AS_BG_WHICH] < 0.5

    if model.double_pair:
        ret2 = read & pair2 & (u[:, _U_P2_RETRIEVE] < model.p_retrieve)
        herald2 = s_sig2 & ~s_sig1
        as2_d3 = np.where(herald2,
                          s_d1 == (u[:, _U_P2_AS_WHICH] < model.match_prob),
                          u[:, _U_P2_AS_WHICH] < 0.5)
        as_click = ret1 | ret2 | as_bg
        as_d3 = np.where(ret1, as1_d3, np.where(ret2, as2_d3, as_bg_d3))
    else:
        as_click = ret1 | as_bg
        as_d3 = np.where(ret1, as1_d3, as_bg_d3)

    return s_click, s_d1, as_click, as_d3, pair1


def _decide_one(model: _TrialModel, u: Sequence[float]):
    """Scalar reference implementation of one trial's decisions.

    Consumes the same draw roles as :func:`_simulate_block`; kept as
    independent straight-line code so the two can be tested against each
    other on identical uniforms.
    """
    pair1 = u[_U_PAIR] < model.chi
    pair2 = model.double_pair and u[_U_PAIR] < model.chi2_half
    s_sig1 = pair1 and u[_U_S_DETECT] < model.p_s_detect
    s_sig2 = pair2 and u[_U_P2_S_DETECT] < model.p_s_detect
    s_bg = u[_U_S_BG] < model.p_s_bg

    if s_sig1:
        s_click, s_d1 = True, u[_U_S_WHICH] < 0.5
    elif s_sig2:
        s_click, s_d1 = True, u[_U_P2_S_WHICH] < 0.5
    elif s_bg:
        s_click, s_d1 = True, u[_U_S_BG_WHICH] < 0.5
    else:
        s_click, s_d1 = False, False

    as_click, as_d3 = False, False
    if s_click:  # read pulse fires
        if pair1 and u[_U_RETRIEVE] < model.p_retrieve:
            as_click = True
            if s_sig1:
                as_d3 = s_d1 == (u[_U_AS_WHICH] < model.match_prob)
            else:
                as_d3 = u[_U_AS_WHICH] < 0.5
        elif pair2 and u[_U_P2_RETRIEVE] < model.p_retrieve:
            as_click = True
            if s_sig2 and not s_sig1:
                as_d3 = s_d1 == (u[_U_P2_AS_WHICH] < model.match_prob)
            else:
                as_d3 = u[_U_P2_AS_WHICH] < 0.5
        elif u[_U_AS_BG] < model.p_as_bg:
            as_click = True
            as_d3 = u[_U_AS_BG_WHICH] < 0.5
    return s_click, s_d1, as_click, as_d3, pair1


def _block_uniforms(seed: int, run_tag: int, setting_index: int,
                    block: int, n: int, n_cols: int) -> np.ndarray:
    """Uniforms for one block, one Philox substream per draw role."""
    u = np.empty((n, n_cols))
    for col in range(n_cols):
        ss = np.random.SeedSequence(
            entropy=seed, spawn_key=(run_tag, setting_index, col, block))
        u[:, col] = np.random.Generator(np.random.Philox(ss)).random(n)
    return u


def _count_block(model: _TrialModel, seed: int, run_tag: int,
                 setting_index: int, block: int, n: int) -> np.ndarray:
    u = _block_uniforms(seed, run_tag, setting_index, block, n, model.n_cols)
    s_click, s_d1, as_click, as_d3, _ = _simulate_block(model, u)
    coinc = s_click & as_click
    return np.array([
        np.count_nonzero(s_click & s_d1),
        np.count_nonzero(s_click & ~s_d1),
        np.count_nonzero(coinc & s_d1 & as_d3),      # c13
        np.count_nonzero(coinc & ~s_d1 & ~as_d3),    # c24
        np.count_nonzero(coinc & s_d1 & ~as_d3),     # c14
        np.count_nonzero(coinc & ~s_d1 & as_d3),     # c23
    ], dtype=np.int64)


def run_trial(params: ExperimentParams, t: float, angles: AngleSettings,
              rng_stream: np.random.Generator, *,
              trial_index: int = 0, double_pair: bool = False) -> TrialRecord:
    """Simulate a single write/feed-forward/read trial.

    Draws a fixed number of uniforms from ``rng_stream`` (9, or 13 with
    double-pair sampling) in the documented role order.
    """
    model = _trial_model(params, t, angles, double_pair)
    u = rng_stream.random(model.n_cols)
    s_click, s_d1, as_click, as_d3, pair = _decide_one(model, u)
    return TrialRecord(
        trial_index=trial_index,
        storage_time=t,
        stokes_click=("D1" if s_d1 else "D2") if s_click else None,
        antistokes_click=("D3" if as_d3 else "D4") if as_click else None,
        pair_created=bool(pair),
    )


def _blocks(n_trials: int):
    full, rem = divmod(n_trials, BLOCK_TRIALS)
    sizes = [BLOCK_TRIALS] * full + ([rem] if rem else [])
    return list(enumerate(sizes))


def run_experiment(params: ExperimentParams, timing: CycleTiming, t: float,
                   angle_list: Sequence[AngleSettings],
                   n_trials_per_setting: int, seed: int, *,
                   workers: int = 1, double_pair: bool = False,
                   run_tag: int = 0) -> ExperimentResult:
    """Run ``n_trials_per_setting`` trials at each analyzer setting.

    Counts are exact sums over trials; the simulated wall time follows the
    preparation/run duty cycle of ``timing``. Identical (seed, run_tag,
    settings) always produce identical tables, independent of ``workers``.
    """
    if not angle_list:
        raise ParameterError("angle_list must contain at least one setting")
    if n_trials_per_setting <= 0:
        raise ParameterError("n_trials_per_setting must be > 0")
    if seed < 0:
        raise ParameterError("seed must be a non-negative integer")
    if workers < 1:
        raise ParameterError("workers must be >= 1")

    tasks = []
    for s_idx, angles in enumerate(angle_list):
        model = _trial_model(params, t, angles, double_pair)
        for block, size in _blocks(n_trials_per_setting):
            tasks.append((s_idx, model, block, size))

    totals = {s_idx: np.zeros(6, dtype=np.int64)
              for s_idx in range(len(angle_list))}

    def job(task):
        s_idx, model, block, size = task
        return s_idx, _count_block(model, seed, run_tag, s_idx, block, size)

    if workers == 1:
        results = map(job, tasks)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, tasks))
    for s_idx, counts in results:
        totals[s_idx] += counts

    tables = []
    for s_idx, angles in enumerate(angle_list):
        n_d1, n_d2, c13, c24, c14, c23 = (int(v) for v in totals[s_idx])
        tables.append(CountsTable(
            settings=angles, storage_time=t, n_pulses=n_trials_per_setting,
            n_d1=n_d1, n_d2=n_d2, c13=c13, c24=c24, c14=c14, c23=c23))

    total_trials = n_trials_per_setting * len(angle_list)
    runs_needed = math.ceil(total_trials / timing.trials_per_run)
    wall_time = runs_needed * (timing.prep_duration + timing.run_duration)
    return ExperimentResult(tables=tuple(tables), wall_time=wall_time)


def iter_trial_records(params: ExperimentParams, t: float,
                       angles: AngleSettings, n_trials: int, seed: int, *,
                       setting_index: int = 0, double_pair: bool = False,
                       run_tag: int = 0) -> Iterator[TrialRecord]:
    """Yield per-trial records using the same streams as the block engine."""
    if n_trials <= 0:
        raise ParameterError("n_trials must be > 0")
    model = _trial_model(params, t, angles, double_pair)
    base = 0
    for block, size in _blocks(n_trials):
        u = _block_uniforms(seed, run_tag, setting_index, block, size,
                            model.n_cols)
        s_click, s_d1, as_click, as_d3, pair = _simulate_block(model, u)
        for i in range(size):
            yield TrialRecord(
                trial_index=base + i,
                storage_time=t,
                stokes_click=(("D1" if s_d1[i] else "D2")
                              if s_click[i] else None),
                antistokes_click=(("D3" if as_d3[i] else "D4")
                                  if as_click[i] else None),
                pair_created=bool(pair[i]),
            )
        base += size
