"""Slice-augmented Gibbs sampler for the time-dependent mixture.

The posterior over (weights, atoms, hyperparameters) is explored with two
nested slice constructions:

* a per-observation slice u with decreasing label function
  psi(s) = exp(-eta s), which turns the infinite mixture into a finite
  one with random truncation level m = max_i floor(psi_inv(u_i));
* a per-transition triple (o, k, d) that linearises the Wright-Fisher
  transition density: d indexes the Negative-Binomial series term,
  k the Beta-Binomial component and o slices d through
  g(d) = exp(-eta' d).

Given the triples, every stick value has a conjugate Beta full
conditional; atom parameters keep their conjugate normal-gamma update;
memberships and the (o, k, d) triples are finite discrete draws computed
in log space with inverse-CDF sampling; the stick hyperparameters theta
and c move by adaptive random-walk Metropolis on the log scale.

Labels are 1-based in the formulas above; arrays in this module store
0-based memberships, so psi at stored label j is exp(-eta (j + 1)).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np
from scipy.special import betaln, gammaln

from . import wf
from .archive import read_container, write_container
from .data import TimeGridDataset
from .errors import DataError, NumericalError, TruncationCapError
from .measure import MeasureState, StickConfig, sticks_to_weights_matrix
from .mixture import CenteringMeasure, gaussian_logpdf

DEFAULT_M_CAP = 512
MH_TARGET_ACCEPT = 0.44
ARCHIVE_VERSION = 1
CHECKPOINT_VERSION = 1

_OPEN_UNIT = (1e-300, float(np.nextafter(1.0, 0.0)))


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be positive")

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -np.inf
        return (self.shape * math.log(self.rate) - gammaln(self.shape)
                + (self.shape - 1.0) * math.log(x) - self.rate * x)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))


@dataclass(frozen=True)
class SamplerConfig:
    """Everything the chain needs besides the data.

    stick fixes the stick family (kind, sigma, explicit pairs); the
    chain samples its own theta and c, so the values carried by the
    StickConfig only seed defaults elsewhere. slice_eta and
    trans_slice_eta are the decay rates of the two slice label
    functions and must lie strictly inside (0, 1). iters counts
    post-burn-in sweeps; every thin-th of them is stored.

    fix_theta / fix_c freeze a hyperparameter instead of sampling it.
    tie_c_to_theta enforces c = theta / 2 (the standard time scale), in
    which case c is not sampled separately. fixed_truncation pins the
    truncation level, turning the sampler into a classic fixed-truncation
    slice sampler; mainly useful for validation studies.
    """

    stick: StickConfig
    centering: CenteringMeasure
    slice_eta: float = 0.5
    trans_slice_eta: float = 0.5
    iters: int = 1000
    burn_in: int = 500
    thin: int = 1
    theta_prior: GammaPrior = field(default_factory=lambda: GammaPrior(2.0, 0.5))
    c_prior: GammaPrior = field(default_factory=lambda: GammaPrior(2.0, 0.5))
    fix_theta: float | None = None
    fix_c: float | None = None
    tie_c_to_theta: bool = False
    m_cap: int = DEFAULT_M_CAP
    fixed_truncation: int | None = None
    label_swap_moves: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.slice_eta < 1.0):
            raise ValueError("slice_eta must lie strictly inside (0, 1)")
        if not (0.0 < self.trans_slice_eta < 1.0):
            raise ValueError("trans_slice_eta must lie strictly inside (0, 1)")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.iters < 1 or self.burn_in < 0:
            raise ValueError("need iters >= 1 and burn_in >= 0")
        if self.m_cap < 1:
            raise ValueError("m_cap must be positive")
        if self.fixed_truncation is not None and self.fixed_truncation < 1:
            raise ValueError("fixed_truncation must be positive")
        if self.tie_c_to_theta and self.fix_c is not None:
            raise ValueError("fix_c conflicts with tie_c_to_theta")
        if isinstance(self.stick.c, tuple):
            raise ValueError("the sampler supports a single shared rate c")
        if self.fix_theta is not None and not self.fix_theta > 0:
            raise ValueError("fix_theta must be positive")
        if self.fix_c is not None and not self.fix_c > 0:
            raise ValueError("fix_c must be positive")
        if self.stick.kind == "gem" and self.fix_theta is None:
            raise ValueError(
                "explicit-pair sticks carry no theta; set fix_theta as a "
                "placeholder (its value is ignored)"
            )

    def digest(self) -> str:
        """Stable hash of the configuration, stored in archives."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class MHAdaptation:
    """Adaptive random-walk state for the two hyperparameter moves."""

    log_step_theta: float = math.log(0.5)
    log_step_c: float = math.log(0.5)
    proposals_theta: int = 0
    accepts_theta: int = 0
    proposals_c: int = 0
    accepts_c: int = 0

    def rate_theta(self) -> float:
        return self.accepts_theta / max(1, self.proposals_theta)

    def rate_c(self) -> float:
        return self.accepts_c / max(1, self.proposals_c)


@dataclass
class ChainState:
    """Mutable Gibbs state.

    s stores 0-based memberships; the label entering psi is s + 1.
    trans_* hold one (o, k, d) triple per stick and per consecutive-time
    transition, shape (m, n_times - 1). Only the first m components exist;
    nothing beyond index m - 1 is ever stored or read.
    """

    m: int
    s: np.ndarray
    u: np.ndarray
    sticks: np.ndarray
    atoms: np.ndarray
    trans_o: np.ndarray
    trans_k: np.ndarray
    trans_d: np.ndarray
    theta: float
    c: float
    mh: MHAdaptation = field(default_factory=MHAdaptation)
    sweep: int = 0

    def measure_state(self, times) -> MeasureState:
        return MeasureState(times=np.asarray(times, dtype=float),
                            sticks=self.sticks.copy(),
                            atoms=self.atoms.copy())

    def slice_bounds(self, eta: float) -> np.ndarray:
        """floor(psi_inv(u)) per observation: the 1-based candidate count."""
        return np.floor(-np.log(self.u) / eta).astype(np.int64)


def _stick_abc(cfg: SamplerConfig, theta: float, c: float, m: int):
    """Per-stick (a, b, c) arrays for the current hyperparameter values."""
    kind = cfg.stick.kind
    if kind == "dp":
        a = np.ones(m)
        b = np.full(m, theta)
    elif kind == "pitman_yor":
        sigma = cfg.stick.sigma
        a = np.full(m, 1.0 - sigma)
        b = theta + sigma * np.arange(1, m + 1)
    else:
        pairs = cfg.stick.pairs
        idx = np.minimum(np.arange(m), len(pairs) - 1)
        a = np.array([pairs[i][0] for i in idx])
        b = np.array([pairs[i][1] for i in idx])
    return a, b, np.full(m, c)


def _categorical_rows(log_mass: np.ndarray, valid: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw per row from masked unnormalised log masses.

    Rows whose valid entries all underflow to zero mass come back as -1.
    """
    masked = np.where(valid, log_mass, -np.inf)
    mx = masked.max(axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    p = np.exp(masked - safe[:, None])
    p[~valid] = 0.0
    csum = np.cumsum(p, axis=1)
    total = csum[:, -1]
    # target in (0, total]: strictly positive so zero-mass prefixes are skipped
    target = total * (1.0 - rng.uniform(size=len(total)))
    idx = np.argmax(csum >= target[:, None], axis=1)
    idx[total <= 0.0] = -1
    return idx


def _sample_prior_transition(a, b, c, tau, v_prev, eta2, rng, uniform: bool):
    """(o, k, d, v_next) from the augmented prior, one entry per stick."""
    m = len(v_prev)
    if uniform:
        params = wf.WFParams(a[0], b[0], c[0])
        d = np.asarray(wf.sample_nb(tau, params, rng, size=m))
    else:
        d = np.array([wf.sample_nb(tau, wf.WFParams(a[j], b[j], c[j]), rng)
                      for j in range(m)], dtype=np.int64)
    k = rng.binomial(d, v_prev)
    v_next = rng.beta(a + k, b + d - k)
    v_next = np.clip(v_next, *_OPEN_UNIT)
    o = np.exp(-eta2 * d) * np.maximum(rng.uniform(size=m), 1e-17)
    return o, k.astype(np.int64), d.astype(np.int64), v_next


def _prior_components(cfg: SamplerConfig, theta: float, c: float,
                      count: int, offset: int, taus: np.ndarray,
                      rng: np.random.Generator):
    """Draw `count` fresh components (sticks, latents, atoms) from the prior.

    offset is the number of components already present, so stick labels
    start at offset + 1. Sticks and their transition latents are drawn
    jointly along the path: v(t_1) from its Beta marginal, then
    d ~ r_tau, k ~ Bin(d, v_prev), v_next ~ Beta(a + k, b + d - k).
    """
    a_all, b_all, c_all = _stick_abc(cfg, theta, c, offset + count)
    a = a_all[offset:]
    b = b_all[offset:]
    c_arr = c_all[offset:]
    uniform = cfg.stick.kind == "dp"
    n = len(taus) + 1
    sticks = np.empty((count, n))
    o = np.empty((count, n - 1))
    kk = np.empty((count, n - 1), dtype=np.int64)
    dd = np.empty((count, n - 1), dtype=np.int64)
    v = np.clip(rng.beta(a, b), *_OPEN_UNIT)
    sticks[:, 0] = v
    for w, tau in enumerate(taus):
        o[:, w], kk[:, w], dd[:, w], v = _sample_prior_transition(
            a, b, c_arr, float(tau), v, cfg.trans_slice_eta, rng, uniform)
        sticks[:, w + 1] = v
    atoms = cfg.centering.sample(rng, count)
    return sticks, o, kk, dd, atoms


def init_chain(data: TimeGridDataset, cfg: SamplerConfig,
               rng: np.random.Generator) -> ChainState:
    """Construct a starting state with every invariant satisfied.

    The initial truncation is max(10, ceil(log(number of observations)));
    memberships are uniform over it, sticks start from their Beta
    marginals independently at each time, transition latents from the
    prior decomposition given those sticks, atoms from the centering
    measure, and theta / c from their priors unless fixed.
    """
    n = data.n_times
    n_obs = data.n_obs
    eta = cfg.slice_eta

    theta = cfg.fix_theta if cfg.fix_theta is not None \
        else cfg.theta_prior.sample(rng)
    if cfg.tie_c_to_theta:
        c = theta / 2.0
    elif cfg.fix_c is not None:
        c = cfg.fix_c
    else:
        c = cfg.c_prior.sample(rng)

    m0 = max(10, math.ceil(math.log(n_obs)))
    if cfg.fixed_truncation is not None:
        m0 = cfg.fixed_truncation
    s = rng.integers(0, m0, size=n_obs)
    u = rng.uniform(0.0, np.exp(-eta * (s + 1.0)))
    u = np.maximum(u, 1e-300)
    bounds = np.floor(-np.log(u) / eta).astype(np.int64)
    m = int(max(m0, bounds.max()))
    if cfg.fixed_truncation is not None:
        m = cfg.fixed_truncation
    elif m > cfg.m_cap:
        raise TruncationCapError(f"initial truncation {m} exceeds cap {cfg.m_cap}")

    a, b, c_arr = _stick_abc(cfg, theta, c, m)
    sticks = rng.beta(a[:, None], b[:, None], size=(m, n))
    sticks = np.clip(sticks, *_OPEN_UNIT)

    taus = data.gaps
    o = np.empty((m, n - 1))
    kk = np.empty((m, n - 1), dtype=np.int64)
    dd = np.empty((m, n - 1), dtype=np.int64)
    uniform = cfg.stick.kind == "dp"
    for w, tau in enumerate(taus):
        if uniform:
            params = wf.WFParams(a[0], b[0], c_arr[0])
            d_col = np.asarray(wf.sample_nb(float(tau), params, rng, size=m))
        else:
            d_col = np.array(
                [wf.sample_nb(float(tau), wf.WFParams(a[j], b[j], c_arr[j]), rng)
                 for j in range(m)], dtype=np.int64)
        k_col = rng.binomial(d_col, sticks[:, w])
        dd[:, w] = d_col
        kk[:, w] = k_col
        o[:, w] = np.exp(-cfg.trans_slice_eta * d_col) \
            * np.maximum(rng.uniform(size=m), 1e-17)

    atoms = cfg.centering.sample(rng, m)
    return ChainState(m=m, s=s.astype(np.int64), u=u, sticks=sticks,
                      atoms=atoms, trans_o=o, trans_k=kk, trans_d=dd,
                      theta=float(theta), c=float(c))


def update_slice_and_truncation(state: ChainState, data: TimeGridDataset,
                                cfg: SamplerConfig,
                                rng: np.random.Generator) -> ChainState:
    """Resample u | s, recompute m, and grow or shrink the component set.

    New components are drawn from their joint augmented prior; dropped
    components need no bookkeeping because their conditional equals the
    prior. With fixed_truncation the level is pinned instead.
    """
    eta = cfg.slice_eta
    psi = np.exp(-eta * (state.s + 1.0))
    u = rng.uniform(0.0, psi)
    state.u = np.maximum(u, 1e-300)
    if cfg.fixed_truncation is not None:
        return state
    m_new = int(state.slice_bounds(eta).max())
    if m_new > cfg.m_cap:
        raise TruncationCapError(
            f"truncation level {m_new} exceeds cap {cfg.m_cap} at sweep "
            f"{state.sweep}; increase m_cap or slice_eta"
        )
    if m_new > state.m:
        sticks, o, kk, dd, atoms = _prior_components(
            cfg, state.theta, state.c, m_new - state.m, state.m,
            data.gaps, rng)
        state.sticks = np.vstack([state.sticks, sticks])
        state.trans_o = np.vstack([state.trans_o, o])
        state.trans_k = np.vstack([state.trans_k, kk])
        state.trans_d = np.vstack([state.trans_d, dd])
        state.atoms = np.vstack([state.atoms, atoms])
    elif m_new < state.m:
        state.sticks = state.sticks[:m_new]
        state.trans_o = state.trans_o[:m_new]
        state.trans_k = state.trans_k[:m_new]
        state.trans_d = state.trans_d[:m_new]
        state.atoms = state.atoms[:m_new]
    state.m = m_new
    return state


def update_transition_latents(state: ChainState, data: TimeGridDataset,
                              cfg: SamplerConfig,
                              rng: np.random.Generator) -> ChainState:
    """Gibbs scan over the (o, k, d) triples, all cells at once.

    Given the stick values the triples are conditionally independent
    across cells; within a cell the scan order is o, then k, then d.
    o | d is uniform on (0, g(d)); k | d, v is a finite discrete law on
    {0..d}; d | k, o lives on {k..floor(g_inv(o))}, which is nonempty by
    construction since o < g(d) and k <= d.
    """
    n = state.sticks.shape[1]
    if n < 2 or state.m == 0:
        return state
    eta2 = cfg.trans_slice_eta
    m = state.m
    a, b, c = _stick_abc(cfg, state.theta, state.c, m)
    v0 = state.sticks[:, :-1]
    v1 = state.sticks[:, 1:]
    tau = data.gaps[None, :]
    d = state.trans_d

    # o | d ~ U(0, g(d)), kept strictly inside the interval
    state.trans_o = np.exp(-eta2 * d) * np.maximum(
        rng.uniform(size=d.shape), 1e-17)

    shape = d.shape
    A = np.broadcast_to(a[:, None], shape).ravel()
    B = np.broadcast_to(b[:, None], shape).ravel()
    C = np.broadcast_to(c[:, None], shape).ravel()
    T = np.broadcast_to(tau, shape).ravel()
    lv0 = np.log(v0).ravel()
    lv1 = np.log(v1).ravel()
    l1mv0 = np.log1p(-v0).ravel()
    l1mv1 = np.log1p(-v1).ravel()
    d_flat = d.ravel()

    # k | d, v on {0..d}
    ratio = lv1 + lv0 - l1mv1 - l1mv0
    k_flat = _draw_rows(
        lambda rows, supp: (
            gammaln(d_flat[rows, None] + 1.0)
            - gammaln(supp + 1.0)
            - gammaln(d_flat[rows, None] - supp + 1.0)
            - gammaln(A[rows, None] + supp)
            - gammaln(B[rows, None] + d_flat[rows, None] - supp)
            + supp * ratio[rows, None]
        ),
        upper=d_flat, lower=np.zeros_like(d_flat), rng=rng)
    state.trans_k = k_flat.reshape(shape)

    # d | k, o on {k..floor(g_inv(o))}
    o_flat = state.trans_o.ravel()
    d_hi = np.floor(-np.log(o_flat) / eta2).astype(np.int64)
    decay = (l1mv1 + l1mv0 - C * T + eta2)
    d_new = _draw_rows(
        lambda rows, supp: (
            2.0 * gammaln(A[rows, None] + B[rows, None] + supp)
            - gammaln(B[rows, None] + supp - k_flat[rows, None])
            - gammaln(supp - k_flat[rows, None] + 1.0)
            + supp * decay[rows, None]
        ),
        upper=d_hi, lower=k_flat, rng=rng)
    if np.any(d_new < 0):
        raise NumericalError("transition-index conditional underflowed")
    state.trans_d = d_new.reshape(shape)
    return state


def _draw_rows(log_mass_fn, upper: np.ndarray, lower: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    """Draw one value per row from {lower..upper} with masses from a callback.

    log_mass_fn(rows, supp) returns unnormalised log masses on the shared
    support grid supp (one row per requested cell). Rows are processed in
    chunks to bound the temporary (rows x support) matrices.
    """
    n_rows = len(upper)
    out = np.empty(n_rows, dtype=np.int64)
    s_max = int(upper.max(initial=0))
    supp = np.arange(s_max + 1, dtype=float)[None, :]
    chunk = max(1, 4_000_000 // (s_max + 1))
    for lo in range(0, n_rows, chunk):
        rows = np.arange(lo, min(lo + chunk, n_rows))
        with np.errstate(invalid="ignore", divide="ignore"):
            lm = log_mass_fn(rows, supp)
        valid = (supp >= lower[rows, None]) & (supp <= upper[rows, None])
        out[rows] = _categorical_rows(lm, valid, rng)
    return out


def membership_counts(state: ChainState, data: TimeGridDataset):
    """(equal, greater) per (stick, time): how many observations at that
    time sit exactly at / strictly above each stick label."""
    _, tidx = data.flat
    m, n = state.sticks.shape
    eq = np.zeros((m, n))
    np.add.at(eq, (state.s, tidx), 1.0)
    totals = eq.sum(axis=0, keepdims=True)
    gt = totals - np.cumsum(eq, axis=0)
    return eq, gt


def stick_conditional_shapes(state: ChainState, data: TimeGridDataset,
                             cfg: SamplerConfig):
    """Beta shapes of every stick-value full conditional, shape (m, n).

    shape1 = a_j + k_in + k_out + #{obs at t: s = j},
    shape2 = b_j + (d - k)_in + (d - k)_out + #{obs at t: s > j},
    where "in"/"out" are the transition triples entering and leaving the
    time point (absent at the ends). Exposed separately so tests can
    check the algebra without touching the draw.
    """
    m, n = state.sticks.shape
    a, b, _ = _stick_abc(cfg, state.theta, state.c, m)
    eq, gt = membership_counts(state, data)
    k_in = np.zeros((m, n))
    k_out = np.zeros((m, n))
    dk_in = np.zeros((m, n))
    dk_out = np.zeros((m, n))
    if n > 1:
        k_in[:, 1:] = state.trans_k
        k_out[:, :-1] = state.trans_k
        dk_in[:, 1:] = state.trans_d - state.trans_k
        dk_out[:, :-1] = state.trans_d - state.trans_k
    shape1 = a[:, None] + k_in + k_out + eq
    shape2 = b[:, None] + dk_in + dk_out + gt
    return shape1, shape2


def update_stick_values(state: ChainState, data: TimeGridDataset,
                        cfg: SamplerConfig,
                        rng: np.random.Generator) -> ChainState:
    """Conjugate Beta redraw of every stick value.

    Conditionally on the transition triples and memberships, all (j, i)
    entries are independent, so the whole (m, n) matrix refreshes in one
    vectorised draw.
    """
    if state.m == 0:
        return state
    shape1, shape2 = stick_conditional_shapes(state, data, cfg)
    v = rng.beta(shape1, shape2)
    state.sticks = np.clip(v, *_OPEN_UNIT)
    return state


def update_locations(state: ChainState, data: TimeGridDataset,
                     cfg: SamplerConfig,
                     rng: np.random.Generator) -> ChainState:
    """Normal-gamma conjugate redraw of every atom.

    Clusters without members fall back to a fresh prior draw, which the
    sum-form update yields automatically.
    """
    y, _ = data.flat
    m = state.m
    cm = cfg.centering
    n_j = np.bincount(state.s, minlength=m).astype(float)
    sum_y = np.bincount(state.s, weights=y, minlength=m)
    sum_y2 = np.bincount(state.s, weights=y * y, minlength=m)
    scale_n = cm.precision_scale + n_j
    mean_n = (cm.precision_scale * cm.mean0 + sum_y) / scale_n
    shape_n = cm.shape + 0.5 * n_j
    rate_n = cm.rate + 0.5 * (
        sum_y2 + cm.precision_scale * cm.mean0 ** 2 - scale_n * mean_n ** 2)
    rate_n = np.maximum(rate_n, np.finfo(float).tiny)
    prec = rng.gamma(shape_n, 1.0 / rate_n)
    mean = rng.normal(mean_n, 1.0 / np.sqrt(scale_n * prec))
    state.atoms = np.column_stack([mean, prec])
    return state


def _log_stick_likelihood(sticks, trans_k, trans_d, taus, a, b, c) -> float:
    """Log density of sticks and (k, d) latents given (a, b, c) arrays.

    Collects every factor that depends on the stick hyperparameters: the
    Beta marginal at the first time, the Negative-Binomial series weights
    and the Beta transition components. Binomial factors and the o slices
    carry no hyperparameter dependence and are omitted.
    """
    if sticks.size == 0:
        return 0.0
    v_first = sticks[:, 0]
    total = float(np.sum(
        (a - 1.0) * np.log(v_first) + (b - 1.0) * np.log1p(-v_first)
        - betaln(a, b)))
    if sticks.shape[1] < 2:
        return total
    r = (a + b)[:, None]
    A = a[:, None]
    B = b[:, None]
    ct = c[:, None] * taus[None, :]
    d = trans_d
    k = trans_k
    v1 = sticks[:, 1:]
    log_q = np.log(-np.expm1(-ct))
    series = gammaln(r + d) - gammaln(r) - gammaln(d + 1.0) - d * ct + r * log_q
    comp = (gammaln(r + d) - gammaln(A + k) - gammaln(B + d - k)
            + (A + k - 1.0) * np.log(v1)
            + (B + d - k - 1.0) * np.log1p(-v1))
    return total + float(series.sum() + comp.sum())


def _hyper_log_target(state: ChainState, data: TimeGridDataset,
                      cfg: SamplerConfig, theta: float, c: float) -> float:
    a, b, c_arr = _stick_abc(cfg, theta, c, state.m)
    lik = _log_stick_likelihood(state.sticks, state.trans_k, state.trans_d,
                                data.gaps, a, b, c_arr)
    return lik


def update_hyperparams(state: ChainState, data: TimeGridDataset,
                       cfg: SamplerConfig,
                       rng: np.random.Generator) -> ChainState:
    """Adaptive log-scale random-walk Metropolis on theta and c.

    Step sizes chase an acceptance rate near 0.44 with diminishing
    adaptation, frozen once the sweep count passes the burn-in. Fixed
    hyperparameters are left untouched; with tie_c_to_theta the single
    theta move carries c = theta / 2 along.
    """
    mh = state.mh
    adapt = state.sweep < cfg.burn_in

    def step(value, log_step, log_target):
        cur = log_target(value)
        if not np.isfinite(cur):
            raise NumericalError(
                "non-finite hyperparameter log posterior at current state: "
                f"value={value}, m={state.m}, sweep={state.sweep}, "
                f"theta={state.theta}, c={state.c}, "
                f"d_max={int(state.trans_d.max()) if state.trans_d.size else 0}"
            )
        x = math.log(value)
        x_new = x + math.exp(log_step) * rng.standard_normal()
        new = math.exp(x_new)
        log_acc = log_target(new) - cur + (x_new - x)
        accept = math.log(max(rng.uniform(), 1e-300)) < log_acc
        return (new if accept else value), accept

    move_theta = cfg.fix_theta is None and cfg.stick.kind != "gem"
    if move_theta:
        if cfg.tie_c_to_theta:
            def target(th):
                return cfg.theta_prior.logpdf(th) + _hyper_log_target(
                    state, data, cfg, th, th / 2.0)
        else:
            def target(th):
                return cfg.theta_prior.logpdf(th) + _hyper_log_target(
                    state, data, cfg, th, state.c)
        new_theta, accepted = step(state.theta, mh.log_step_theta, target)
        mh.proposals_theta += 1
        mh.accepts_theta += int(accepted)
        if adapt:
            gain = mh.proposals_theta ** -0.6
            mh.log_step_theta += gain * (int(accepted) - MH_TARGET_ACCEPT)
        state.theta = new_theta
        if cfg.tie_c_to_theta:
            state.c = new_theta / 2.0

    if cfg.fix_c is None and not cfg.tie_c_to_theta:
        def target_c(cv):
            return cfg.c_prior.logpdf(cv) + _hyper_log_target(
                state, data, cfg, state.theta, cv)
        new_c, accepted = step(state.c, mh.log_step_c, target_c)
        mh.proposals_c += 1
        mh.accepts_c += int(accepted)
        if adapt:
            gain = mh.proposals_c ** -0.6
            mh.log_step_c += gain * (int(accepted) - MH_TARGET_ACCEPT)
        state.c = new_c
    return state


def update_membership(state: ChainState, data: TimeGridDataset,
                      cfg: SamplerConfig,
                      rng: np.random.Generator) -> ChainState:
    """Finite discrete redraw of every observation's membership.

    Candidates for observation i are the labels with psi(label) > u_i
    (clipped to the stored components when the truncation is pinned);
    masses are w_label(t_i) / psi(label) times the kernel density. If
    every candidate mass underflows, u_i is resampled once and the draw
    retried before giving up.
    """
    y, tidx = data.flat
    eta = cfg.slice_eta
    m = state.m
    log_w = np.log(sticks_to_weights_matrix(state.sticks))
    log_kernel = gaussian_logpdf(y[:, None], state.atoms[None, :, 0],
                                 state.atoms[None, :, 1])
    labels = np.arange(1, m + 1, dtype=float)
    log_mass = log_w[:, tidx].T + eta * labels[None, :] + log_kernel

    def draw(rows=None):
        bounds = np.minimum(state.slice_bounds(eta), m)
        valid = labels[None, :] <= bounds[:, None]
        if rows is None:
            return _categorical_rows(log_mass, valid, rng)
        return _categorical_rows(log_mass[rows], valid[rows], rng)

    s_new = draw()
    bad = np.nonzero(s_new < 0)[0]
    if len(bad) > 0:
        psi = np.exp(-eta * (state.s[bad] + 1.0))
        state.u[bad] = np.maximum(rng.uniform(0.0, psi), 1e-300)
        s_new[bad] = draw(bad)
        if np.any(s_new[bad] < 0):
            worst = int(bad[0])
            raise NumericalError(
                "membership masses underflowed twice for observation "
                f"{worst} (y={y[worst]:.6g}, t index={int(tidx[worst])}, "
                f"m={m}); the kernel cannot reach this observation"
            )
    state.s = s_new.astype(np.int64)
    return state


def _stick_row_log_prior(row_sticks, row_k, row_d, taus, a, b, c) -> float:
    """Augmented path log density of one stick under position parameters."""
    return _log_stick_likelihood(row_sticks[None, :], row_k[None, :],
                                 row_d[None, :], taus,
                                 np.array([a]), np.array([b]), np.array([c]))


def update_label_swaps(state: ChainState, data: TimeGridDataset,
                       cfg: SamplerConfig,
                       rng: np.random.Generator) -> ChainState:
    """Metropolis swaps of adjacent component labels.

    Label birth at high indices is geometrically penalised by both the
    stick-breaking products and the slice labels, which makes plain
    sweeps slow to move mass between labels. Swapping the entire
    component (stick path, transition triples, atom) between positions j
    and j + 1, with memberships relabelled, is a standard accelerator.
    The acceptance ratio collects the membership-mass change of affected
    observations, the slice indicators u_i < psi(new label), and (for
    non-identical stick laws) the change of path prior across positions.
    """
    m = state.m
    if m < 2:
        return state
    _, tidx = data.flat
    eta = cfg.slice_eta
    uniform = cfg.stick.kind == "dp"
    a, b, c = _stick_abc(cfg, state.theta, state.c, m)
    taus = data.gaps
    unif = rng.uniform(size=m - 1)
    for j in range(m - 1):
        at_j = state.s == j
        at_j1 = state.s == j + 1
        # observations moving up must still satisfy their slice bound
        if np.any(at_j):
            if np.any(state.u[at_j] >= np.exp(-eta * (j + 2.0))):
                continue
        log_ratio = 0.0
        if np.any(at_j):
            t_up = tidx[at_j]
            log_ratio += float(np.sum(np.log1p(-state.sticks[j + 1, t_up]))) \
                + eta * int(at_j.sum())
        if np.any(at_j1):
            t_down = tidx[at_j1]
            log_ratio += -float(np.sum(np.log1p(-state.sticks[j, t_down]))) \
                - eta * int(at_j1.sum())
        if not uniform:
            for lo, hi in ((j, j + 1), (j + 1, j)):
                log_ratio += _stick_row_log_prior(
                    state.sticks[hi], state.trans_k[hi], state.trans_d[hi],
                    taus, a[lo], b[lo], c[lo])
                log_ratio -= _stick_row_log_prior(
                    state.sticks[lo], state.trans_k[lo], state.trans_d[lo],
                    taus, a[lo], b[lo], c[lo])
        if np.log(max(unif[j], 1e-300)) < log_ratio:
            for arr in (state.sticks, state.trans_o, state.trans_k,
                        state.trans_d, state.atoms):
                arr[[j, j + 1]] = arr[[j + 1, j]]
            state.s[at_j] = j + 1
            state.s[at_j1] = j
    return state


def gibbs_sweep(state: ChainState, data: TimeGridDataset, cfg: SamplerConfig,
                rng: np.random.Generator) -> ChainState:
    """One full scan in fixed order: slices and truncation, transition
    latents, stick values, atoms, hyperparameters, memberships, and
    (unless disabled) label-swap moves."""
    update_slice_and_truncation(state, data, cfg, rng)
    update_transition_latents(state, data, cfg, rng)
    update_stick_values(state, data, cfg, rng)
    update_locations(state, data, cfg, rng)
    update_hyperparams(state, data, cfg, rng)
    update_membership(state, data, cfg, rng)
    if cfg.label_swap_moves:
        update_label_swaps(state, data, cfg, rng)
    state.sweep += 1
    return state


def data_log_likelihood(state: ChainState, data: TimeGridDataset) -> float:
    """Log likelihood of the data under the current truncated mixture,
    renormalised by the retained weight mass."""
    y, tidx = data.flat
    w = sticks_to_weights_matrix(state.sticks)
    log_kernel = gaussian_logpdf(y[:, None], state.atoms[None, :, 0],
                                 state.atoms[None, :, 1])
    dens = np.einsum("jn,nj->n", w[:, tidx], np.exp(log_kernel))
    kept = 1.0 - np.prod(1.0 - state.sticks, axis=0)
    dens = dens / kept[tidx]
    return float(np.sum(np.log(np.maximum(dens, 1e-300))))


def check_invariants(state: ChainState, data: TimeGridDataset,
                     cfg: SamplerConfig) -> None:
    """Raise AssertionError unless every chain invariant holds."""
    eta = cfg.slice_eta
    psi = np.exp(-eta * (state.s + 1.0))
    assert np.all(state.u < psi), "slice variable not below psi(s)"
    bounds = state.slice_bounds(eta)
    assert np.all(state.s + 1 <= bounds), "membership above its slice bound"
    if cfg.fixed_truncation is None:
        assert state.m == int(bounds.max()), "truncation out of sync"
    else:
        assert state.m == cfg.fixed_truncation
    assert np.all((state.sticks > 0.0) & (state.sticks < 1.0))
    assert np.all(state.trans_k >= 0) and np.all(state.trans_k <= state.trans_d)
    g = np.exp(-cfg.trans_slice_eta * state.trans_d)
    assert np.all((state.trans_o > 0.0) & (state.trans_o < g)), \
        "transition slice outside (0, g(d))"
    assert state.theta > 0 and state.c > 0
    assert np.all(state.atoms[:, 1] > 0)
    for arr in (state.sticks, state.trans_o, state.trans_k, state.trans_d,
                state.atoms):
        assert arr.shape[0] == state.m, "component arrays out of sync with m"


@dataclass(frozen=True)
class PosteriorDraws:
    """Thinned post-burn-in snapshots of the measure and hyperparameters.

    Component arrays are padded with NaN beyond each draw's own
    truncation level, recorded in m.
    """

    times: np.ndarray
    m: np.ndarray
    theta: np.ndarray
    c: np.ndarray
    sticks: np.ndarray
    atom_mean: np.ndarray
    atom_prec: np.ndarray
    config_json: str = ""
    config_digest: str = ""

    @property
    def n_draws(self) -> int:
        return len(self.m)

    def state_at(self, i: int) -> MeasureState:
        mi = int(self.m[i])
        atoms = np.column_stack([self.atom_mean[i, :mi],
                                 self.atom_prec[i, :mi]])
        return MeasureState(times=self.times, sticks=self.sticks[i, :mi, :],
                            atoms=atoms)

    @classmethod
    def from_snapshots(cls, times, snapshots, cfg: SamplerConfig | None = None):
        if not snapshots:
            raise ValueError("no snapshots collected")
        times = np.asarray(times, dtype=float)
        n = len(times)
        ms = np.array([s["sticks"].shape[0] for s in snapshots], dtype=np.int64)
        m_max = int(ms.max())
        d = len(snapshots)
        sticks = np.full((d, m_max, n), np.nan)
        mean = np.full((d, m_max), np.nan)
        prec = np.full((d, m_max), np.nan)
        for i, snap in enumerate(snapshots):
            mi = ms[i]
            sticks[i, :mi, :] = snap["sticks"]
            mean[i, :mi] = snap["atoms"][:, 0]
            prec[i, :mi] = snap["atoms"][:, 1]
        return cls(times=times, m=ms,
                   theta=np.array([s["theta"] for s in snapshots]),
                   c=np.array([s["c"] for s in snapshots]),
                   sticks=sticks, atom_mean=mean, atom_prec=prec,
                   config_json=cfg.to_json() if cfg else "",
                   config_digest=cfg.digest() if cfg else "")

    def save(self, path) -> None:
        meta = {"format": "diffmix-draws", "version": ARCHIVE_VERSION,
                "config": self.config_json, "config_digest": self.config_digest}
        write_container(path, meta, {
            "times": self.times, "m": self.m, "theta": self.theta,
            "c": self.c, "sticks": self.sticks, "atom_mean": self.atom_mean,
            "atom_prec": self.atom_prec,
        })

    @classmethod
    def load(cls, path) -> "PosteriorDraws":
        meta, arrays = read_container(path)
        if meta.get("format") != "diffmix-draws":
            raise DataError(f"{path}: not a draws archive")
        return cls(times=arrays["times"], m=arrays["m"],
                   theta=arrays["theta"], c=arrays["c"],
                   sticks=arrays["sticks"], atom_mean=arrays["atom_mean"],
                   atom_prec=arrays["atom_prec"],
                   config_json=meta.get("config", ""),
                   config_digest=meta.get("config_digest", ""))


def _snapshot(state: ChainState) -> dict:
    return {"sticks": state.sticks.copy(), "atoms": state.atoms.copy(),
            "theta": state.theta, "c": state.c}


def save_checkpoint(path, state: ChainState, rng: np.random.Generator,
                    cfg: SamplerConfig, snapshots: list[dict]) -> None:
    """Freeze the chain, generator and collected snapshots to disk."""
    meta = {
        "format": "diffmix-checkpoint", "version": CHECKPOINT_VERSION,
        "config_digest": cfg.digest(), "sweep": state.sweep,
        "m": state.m, "theta": state.theta, "c": state.c,
        "mh": asdict(state.mh),
        "rng_state": rng.bit_generator.state,
        "n_snapshots": len(snapshots),
    }
    arrays = {
        "s": state.s, "u": state.u, "sticks": state.sticks,
        "atoms": state.atoms, "trans_o": state.trans_o,
        "trans_k": state.trans_k, "trans_d": state.trans_d,
    }
    for i, snap in enumerate(snapshots):
        arrays[f"snap_{i:06d}_sticks"] = snap["sticks"]
        arrays[f"snap_{i:06d}_atoms"] = snap["atoms"]
        arrays[f"snap_{i:06d}_hyper"] = np.array([snap["theta"], snap["c"]])
    write_container(path, meta, arrays)


def load_checkpoint(path, cfg: SamplerConfig):
    """Restore (state, rng, snapshots); the config digest must match."""
    meta, arrays = read_container(path)
    if meta.get("format") != "diffmix-checkpoint":
        raise DataError(f"{path}: not a checkpoint")
    if meta["config_digest"] != cfg.digest():
        raise DataError(
            f"{path}: checkpoint was written under a different configuration"
        )
    mh = MHAdaptation(**meta["mh"])
    state = ChainState(
        m=int(meta["m"]), s=arrays["s"], u=arrays["u"],
        sticks=arrays["sticks"], atoms=arrays["atoms"],
        trans_o=arrays["trans_o"], trans_k=arrays["trans_k"],
        trans_d=arrays["trans_d"], theta=float(meta["theta"]),
        c=float(meta["c"]), mh=mh, sweep=int(meta["sweep"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    snapshots = []
    for i in range(int(meta["n_snapshots"])):
        hyper = arrays[f"snap_{i:06d}_hyper"]
        snapshots.append({
            "sticks": arrays[f"snap_{i:06d}_sticks"],
            "atoms": arrays[f"snap_{i:06d}_atoms"],
            "theta": float(hyper[0]), "c": float(hyper[1]),
        })
    return state, rng, snapshots


def run_chain(data: TimeGridDataset, cfg: SamplerConfig,
              rng: np.random.Generator | None = None, *,
              telemetry: IO[str] | None = None,
              checkpoint_path=None, checkpoint_every: int | None = None,
              resume_from=None) -> PosteriorDraws:
    """Run burn_in + iters sweeps and collect every thin-th post-burn-in state.

    Telemetry, when given a stream, receives one machine-readable
    key=value line per sweep. Checkpoints capture chain, generator and
    snapshots; resuming from one reproduces the uninterrupted run bit for
    bit under the same seed.
    """
    if resume_from is not None:
        state, rng, snapshots = load_checkpoint(resume_from, cfg)
    else:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        state = init_chain(data, cfg, rng)
        snapshots = []
    total = cfg.burn_in + cfg.iters
    for sweep in range(state.sweep, total):
        gibbs_sweep(state, data, cfg, rng)
        post = state.sweep - cfg.burn_in
        if post > 0 and post % cfg.thin == 0:
            snapshots.append(_snapshot(state))
        if telemetry is not None:
            telemetry.write(
                f"sweep={state.sweep} m={state.m} theta={state.theta:.6g} "
                f"c={state.c:.6g} acc_theta={state.mh.rate_theta():.3f} "
                f"acc_c={state.mh.rate_c():.3f} "
                f"loglik={data_log_likelihood(state, data):.6g}\n")
        if checkpoint_path is not None and checkpoint_every is not None \
                and state.sweep % checkpoint_every == 0 and state.sweep < total:
            save_checkpoint(checkpoint_path, state, rng, cfg, snapshots)
    return PosteriorDraws.from_snapshots(data.times, snapshots, cfg)
