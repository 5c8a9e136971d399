"""Monte Carlo integrator for continuous stochastic state reduction.

The state obeys an Ito process whose drift and diffusion are built from a
commuting family of preferred observables: the diffusion operators are the
observables centred on their expectations, the drift adds the Hamiltonian
and a quadratic damping term, and the Gaussian noise carries variance
``gamma * dt`` per component.  Explicit Euler-Maruyama steps with per-step
renormalization; ensembles run one independent, seeded noise stream per
trajectory so results never depend on scheduling or worker count.

Norm convention: taken literally, the quadratic drift preserves the mean
squared norm only at one special coupling value.  The default mode scales
that term by ``gamma / 2``, which preserves the mean squared norm for every
coupling (and makes the renormalized projector expectations a martingale up
to O(dt^2) per step); ``norm_mode="literal"`` keeps the unscaled reading.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    IntegrationFailureError,
    InvalidStateError,
    PreconditionError,
)
from .hilbert import Projector, StateVector

COMMUTE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
DEFAULT_COLLAPSE_EPS = 1e-6
STEP_WARN_THRESHOLD = 0.1
_CHUNK_STEPS = 1024


@dataclass(frozen=True)
class SpectralBlock:
    """One joint eigenspace of the observable family."""

    indices: tuple[int, ...]  # eigenbasis coordinates
    eigenvalues: tuple[float, ...]  # one eigenvalue per observable


@dataclass(frozen=True)
class CollapseModel:
    """Hamiltonian, commuting preferred observables, and coupling constant.

    ``observables`` is a list of Hermitian matrices commuting pairwise
    within tolerance (one for toy models, three for a vector observable).
    ``gamma`` is the noise coupling; it must be nonnegative, with zero
    giving frozen (or purely Hamiltonian) dynamics.  Joint eigenprojectors
    of the family define the collapse outcomes, ordered by first appearance
    in the shared eigenbasis.
    """

    hamiltonian: np.ndarray
    observables: tuple[np.ndarray, ...]
    gamma: float
    norm_mode: str = "mean-preserving"
    eigenbasis: np.ndarray = field(init=False, compare=False, repr=False)
    blocks: tuple[SpectralBlock, ...] = field(init=False, compare=False, repr=False)

    def __init__(self, hamiltonian, observables, gamma, norm_mode="mean-preserving"):
        ham = np.array(hamiltonian, dtype=complex)
        obs = tuple(np.array(a, dtype=complex) for a in observables)
        if not obs:
            raise InvalidStateError("at least one preferred observable required")
        d = ham.shape[0]
        if ham.shape != (d, d):
            raise DimensionMismatchError("hamiltonian must be square")
        if np.max(np.abs(ham - ham.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("hamiltonian must be Hermitian")
        for a in obs:
            if a.shape != (d, d):
                raise DimensionMismatchError("observables must match the Hamiltonian")
            if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL:
                raise InvalidStateError("observables must be Hermitian")
        for i in range(len(obs)):
            for j in range(i + 1, len(obs)):
                comm = obs[i] @ obs[j] - obs[j] @ obs[i]
                if np.max(np.abs(comm)) > COMMUTE_TOL:
                    raise InvalidStateError(
                        f"observables {i} and {j} do not commute within tolerance"
                    )
        gamma = float(gamma)
        if gamma < 0:
            raise InvalidStateError("gamma must be nonnegative")
        if norm_mode not in ("mean-preserving", "literal"):
            raise ValueError(f"unknown norm mode {norm_mode!r}")
        ham.setflags(write=False)
        for a in obs:
            a.setflags(write=False)
        object.__setattr__(self, "hamiltonian", ham)
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "norm_mode", norm_mode)
        basis, blocks = _joint_eigenblocks(obs)
        object.__setattr__(self, "eigenbasis", basis)
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_observables(self) -> int:
        return len(self.observables)

    @property
    def n_outcomes(self) -> int:
        return len(self.blocks)

    @property
    def damping_coefficient(self) -> float:
        """Coefficient of the quadratic drift term (gamma/2 or literal 1)."""
        return self.gamma / 2.0 if self.norm_mode == "mean-preserving" else 1.0

    def eigenprojector(self, k: int) -> Projector:
        """Matrix projector onto joint eigenspace ``k``."""
        cols = self.eigenbasis[:, list(self.blocks[k].indices)]
        return Projector.from_matrix(cols @ cols.conj().T, tol=1e-9)

    def block_weights(self, psi: np.ndarray) -> np.ndarray:
        """Expectation of each joint eigenprojector in a normalized state."""
        coeff = self.eigenbasis.conj().T @ psi
        mass = np.abs(coeff) ** 2
        return np.array([mass[list(b.indices)].sum() for b in self.blocks])

    def born_weights(self, psi0: StateVector) -> np.ndarray:
        psi = psi0.normalized().amplitudes
        return self.block_weights(psi)


def _joint_eigenblocks(observables, *, cluster_tol=1e-8):
    """Shared eigenbasis plus joint-eigenvalue blocks, deterministically ordered.

    Eigenspaces are refined observable by observable; blocks are ordered by
    their first coordinate in the final basis, which for diagonal
    observables reproduces the natural cell order.
    """
    d = observables[0].shape[0]
    basis = np.eye(d, dtype=complex)
    partition: list[list[int]] = [list(range(d))]
    for a in observables:
        new_partition: list[list[int]] = []
        for group in partition:
            cols = basis[:, group]
            sub = cols.conj().T @ a @ cols
            eigvals, eigvecs = np.linalg.eigh(sub)
            basis[:, group] = cols @ eigvecs
            start = 0
            while start < len(group):
                stop = start + 1
                while stop < len(group) and abs(eigvals[stop] - eigvals[start]) <= cluster_tol:
                    stop += 1
                new_partition.append(group[start:stop])
                start = stop
        partition = new_partition
    labelled = []
    for group in partition:
        values = []
        for a in observables:
            col = basis[:, group[0]]
            values.append(float(np.real(np.vdot(col, a @ col))))
        labelled.append((tuple(values), tuple(group)))
    # outcomes ordered by joint eigenvalue, largest first
    labelled.sort(key=lambda pair: pair[0], reverse=True)
    return basis, tuple(
        SpectralBlock(indices, values) for values, indices in labelled
    )


@dataclass(frozen=True)
class NoiseIncrement:
    """One step's Gaussian increments, one per observable.

    Each component has mean zero and variance ``gamma * dt``; independent
    across components and steps (ensemble statements, checked on streams,
    not per draw).
    """

    values: np.ndarray
    variance: float

    def __init__(self, values, variance: float):
        arr = np.asarray(values, dtype=float).reshape(-1)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "variance", float(variance))


def noise_stream(model: CollapseModel, dt: float, seed: int):
    """Infinite iterator of NoiseIncrements from one seeded stream."""
    rng = np.random.default_rng(int(seed))
    scale = np.sqrt(model.gamma * dt)
    variance = model.gamma * dt
    while True:
        yield NoiseIncrement(rng.standard_normal(model.n_observables) * scale, variance)


def _require_normalized(psi: np.ndarray) -> None:
    norm2 = float(np.real(np.vdot(psi, psi)))
    if abs(norm2 - 1.0) > 1e-9:
        raise PreconditionError(f"state must be normalized; got |psi|^2 = {norm2}")


def drift_diffusion(model: CollapseModel, psi) -> tuple[np.ndarray, list[np.ndarray]]:
    """Drift vector and the K diffusion vectors at a normalized state.

    The k-th diffusion vector is ``(A_k - <A_k>) psi``; the drift is
    ``(-i H - c * sum_k (A_k - <A_k>)^2) psi`` with ``c`` the model's
    damping coefficient.
    """
    if isinstance(psi, StateVector):
        psi = psi.amplitudes
    psi = np.asarray(psi, dtype=complex)
    _require_normalized(psi)
    diffusion = []
    quad = np.zeros_like(psi)
    for a in model.observables:
        apsi = a @ psi
        expect = float(np.real(np.vdot(psi, apsi)))
        rpsi = apsi - expect * psi
        diffusion.append(rpsi)
        quad += a @ rpsi - expect * rpsi
    drift = -1j * (model.hamiltonian @ psi) - model.damping_coefficient * quad
    return drift, diffusion


def em_step(model: CollapseModel, psi, dt: float, noise) -> np.ndarray:
    """One explicit Euler-Maruyama step, renormalized.

    Deterministic in (psi, dt, noise).  Raises
    :class:`IntegrationFailureError` on overflow or a vanishing norm.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(psi, StateVector):
        psi = psi.amplitudes
    psi = np.asarray(psi, dtype=complex)
    values = noise.values if isinstance(noise, NoiseIncrement) else np.asarray(noise, float)
    if values.shape[0] != model.n_observables:
        raise DimensionMismatchError("one noise component per observable required")
    drift, diffusion = drift_diffusion(model, psi)
    new = psi + drift * dt
    for rpsi, db in zip(diffusion, values):
        new = new + rpsi * db
    norm = float(np.linalg.norm(new))
    if not np.isfinite(norm) or norm == 0.0:
        raise IntegrationFailureError(f"step produced norm {norm}")
    return new / norm


@dataclass(frozen=True)
class Trajectory:
    """One realized stochastic history.

    ``states[i]`` is the normalized state at ``times[i]``; ``outcome`` is
    the resolved joint-eigenspace index or None when unresolved at the
    final time.
    """

    times: np.ndarray
    states: np.ndarray
    outcome: int | None
    resolve_time: float | None
    seed: int

    @property
    def resolved(self) -> bool:
        return self.outcome is not None

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _check_step_size(model: CollapseModel, dt: float) -> None:
    if dt * model.gamma > STEP_WARN_THRESHOLD:
        warnings.warn(
            f"dt * gamma = {dt * model.gamma:.3g} exceeds {STEP_WARN_THRESHOLD}; "
            "Euler steps may be too coarse",
            RuntimeWarning,
            stacklevel=3,
        )


def simulate(
    model: CollapseModel,
    psi0: StateVector,
    t_max: float,
    dt: float,
    seed: int,
    eps_collapse: float = DEFAULT_COLLAPSE_EPS,
    *,
    record_every: int = 1,
) -> Trajectory:
    """Integrate a single trajectory until resolution or ``t_max``.

    The trajectory resolves to outcome ``k`` at the first step where the
    k-th joint-eigenprojector expectation exceeds ``1 - eps_collapse``.
    Identical seeds give bit-identical trajectories.
    """
    if dt <= 0 or t_max <= 0:
        raise ValueError("dt and t_max must be positive")
    psi0.require_nonzero()
    if psi0.dim != model.dim:
        raise DimensionMismatchError("state and model dimensions differ")
    _check_step_size(model, dt)
    n_steps = int(round(t_max / dt))
    rng = np.random.default_rng(int(seed))
    scale = np.sqrt(model.gamma * dt)

    psi = psi0.normalized().amplitudes.copy()
    times = [0.0]
    states = [psi.copy()]
    outcome = None
    resolve_time = None

    weights = model.block_weights(psi)
    top = int(np.argmax(weights))
    if weights[top] > 1.0 - eps_collapse:
        outcome = top
        resolve_time = 0.0

    step = 0
    while step < n_steps and outcome is None:
        noise = rng.standard_normal(model.n_observables) * scale
        try:
            psi = em_step(model, psi, dt, noise)
        except IntegrationFailureError as err:
            raise IntegrationFailureError(
                f"integration failed at step {step + 1}: {err}",
                step=step + 1,
                time=(step + 1) * dt,
            ) from err
        step += 1
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            states.append(psi.copy())
        weights = model.block_weights(psi)
        top = int(np.argmax(weights))
        if weights[top] > 1.0 - eps_collapse:
            outcome = top
            resolve_time = step * dt
            if times[-1] != resolve_time:
                times.append(resolve_time)
                states.append(psi.copy())
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        outcome=outcome,
        resolve_time=resolve_time,
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# vectorized ensemble engine
# ---------------------------------------------------------------------------


def _run_batch(
    model: CollapseModel,
    psi0: np.ndarray,
    seeds: Sequence[int],
    n_steps: int,
    dt: float,
    eps_collapse: float,
    checkpoints: Sequence[int] | None = None,
):
    """Evolve one trajectory per seed, freezing each at resolution.

    Each trajectory consumes only its own stream, in step order, so the
    result is independent of batching and scheduling.  Returns outcome
    indices (-1 while unresolved), resolution steps, final states, and the
    per-checkpoint block expectations when ``checkpoints`` is given.
    """
    n = len(seeds)
    d = model.dim
    K = model.n_observables
    c_damp = model.damping_coefficient
    scale = np.sqrt(model.gamma * dt)
    basis = model.eigenbasis
    block_index = [list(b.indices) for b in model.blocks]
    diagonal_basis = np.allclose(basis, np.eye(d))

    gens = [np.random.default_rng(int(s)) for s in seeds]
    psi = np.tile(psi0, (n, 1)).astype(complex)
    outcome = np.full(n, -1, dtype=int)
    resolve_step = np.full(n, -1, dtype=int)
    checkpoint_set = {int(c) for c in (checkpoints or ())}
    snapshots: dict[int, np.ndarray] = {}

    def block_mass(states: np.ndarray) -> np.ndarray:
        coeff = states if diagonal_basis else states @ basis.conj()
        mass = np.abs(coeff) ** 2
        return np.stack([mass[:, idx].sum(axis=1) for idx in block_index], axis=1)

    def mark_resolved(rows: np.ndarray, at_step: int) -> None:
        if not rows.size:
            return
        weights = block_mass(psi[rows])
        top = np.argmax(weights, axis=1)
        resolved = weights[np.arange(len(rows)), top] > 1.0 - eps_collapse
        hit = rows[resolved]
        outcome[hit] = top[resolved]
        resolve_step[hit] = at_step

    mark_resolved(np.arange(n), 0)
    if 0 in checkpoint_set:
        snapshots[0] = block_mass(psi)

    step = 0
    while step < n_steps:
        span = min(_CHUNK_STEPS, n_steps - step)
        active = np.where(outcome < 0)[0]
        if active.size == 0:
            # all frozen: remaining checkpoint snapshots are constant
            for cp in checkpoint_set:
                if cp > step and cp not in snapshots:
                    snapshots[cp] = block_mass(psi)
            break
        stream = np.empty((active.size, span, K))
        for row, traj in enumerate(active):
            stream[row] = gens[traj].standard_normal((span, K))
        stream *= scale
        for j in range(span):
            mask = outcome[active] < 0
            rows = active[mask]
            if rows.size:
                states = psi[rows]
                quad = np.zeros_like(states)
                update = np.zeros_like(states)
                for k, a in enumerate(model.observables):
                    apsi = states @ a.T
                    expect = np.real(np.einsum("nd,nd->n", states.conj(), apsi))
                    rpsi = apsi - expect[:, None] * states
                    quad += (rpsi @ a.T) - expect[:, None] * rpsi
                    update += rpsi * stream[mask, j, k][:, None]
                drift = -1j * (states @ model.hamiltonian.T) - c_damp * quad
                new = states + drift * dt + update
                norms = np.linalg.norm(new, axis=1)
                if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
                    bad = rows[~np.isfinite(norms) | (norms == 0.0)][0]
                    raise IntegrationFailureError(
                        f"integration failed for trajectory seed {seeds[int(bad)]}",
                        step=step + j + 1,
                        time=(step + j + 1) * dt,
                    )
                psi[rows] = new / norms[:, None]
                mark_resolved(rows, step + j + 1)
            if (step + j + 1) in checkpoint_set:
                snapshots[step + j + 1] = block_mass(psi)
        step += span
    return outcome, resolve_step, psi, snapshots


@dataclass(frozen=True)
class OutcomeRow:
    outcome: int
    eigenvalues: tuple[float, ...]
    count: int
    frequency: float
    born: float
    deviation: float
    band: float

    @property
    def within_band(self) -> bool:
        return self.deviation <= self.band


@dataclass(frozen=True)
class EnsembleReport:
    """Outcome frequencies of an ensemble against the state's weights.

    Frequencies are over resolved trajectories; the unresolved fraction is
    reported (and flagged above 1%) but never silently dropped.  The band
    is ``multiplier * 3 * sqrt(p(1-p)/N)``.  ``outcomes`` holds the raw
    per-trajectory outcome indices (-1 while unresolved) in seed order,
    ready for frequency auditing.
    """

    n_trajectories: int
    n_resolved: int
    rows: tuple[OutcomeRow, ...]
    unresolved_fraction: float
    unresolved_flagged: bool
    band_multiplier: float
    base_seed: int
    passed: bool
    outcomes: tuple[int, ...] = ()

    def row(self, outcome: int) -> OutcomeRow:
        return self.rows[outcome]


def ensemble_outcomes(
    model: CollapseModel,
    psi0: StateVector,
    n: int,
    *,
    t_max: float,
    dt: float,
    seed: int,
    eps_collapse: float = DEFAULT_COLLAPSE_EPS,
    band_multiplier: float = 1.0,
    workers: int = 1,
    unresolved_flag_fraction: float = 0.01,
) -> EnsembleReport:
    """Run ``n`` trajectories with seeds ``seed + i`` and compare to weights.

    Per-outcome frequencies must sit within ``band_multiplier`` times the
    three-sigma binomial band around the state's projector weights for the
    report to pass.  Worker count never changes the result: each
    trajectory's noise comes from its own seeded stream.
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    psi0.require_nonzero()
    _check_step_size(model, dt)
    n_steps = int(round(t_max / dt))
    psi_start = psi0.normalized().amplitudes
    seeds = [int(seed) + i for i in range(n)]

    workers = max(1, int(workers))
    slices = []
    per = (n + workers - 1) // workers
    for w in range(workers):
        lo, hi = w * per, min(n, (w + 1) * per)
        if lo < hi:
            slices.append((lo, hi))

    def run_slice(bounds):
        lo, hi = bounds
        return _run_batch(
            model, psi_start, seeds[lo:hi], n_steps, dt, eps_collapse
        )[:2]

    if len(slices) == 1:
        results = [run_slice(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            results = list(pool.map(run_slice, slices))
    outcome = np.concatenate([r[0] for r in results])

    born = model.born_weights(psi0)
    resolved = outcome >= 0
    n_resolved = int(resolved.sum())
    rows = []
    passed = True
    for k in range(model.n_outcomes):
        count = int((outcome == k).sum())
        freq = count / n_resolved if n_resolved else 0.0
        p = float(born[k])
        band = band_multiplier * 3.0 * np.sqrt(p * (1.0 - p) / n)
        deviation = abs(freq - p)
        rows.append(
            OutcomeRow(
                outcome=k,
                eigenvalues=model.blocks[k].eigenvalues,
                count=count,
                frequency=freq,
                born=p,
                deviation=deviation,
                band=band,
            )
        )
        if deviation > band:
            passed = False
    unresolved_fraction = 1.0 - n_resolved / n
    flagged = unresolved_fraction > unresolved_flag_fraction
    return EnsembleReport(
        n_trajectories=n,
        n_resolved=n_resolved,
        rows=tuple(rows),
        unresolved_fraction=unresolved_fraction,
        unresolved_flagged=flagged,
        band_multiplier=band_multiplier,
        base_seed=int(seed),
        passed=passed,
        outcomes=tuple(int(o) for o in outcome),
    )


@dataclass(frozen=True)
class MartingaleRow:
    time: float
    outcome: int
    mean: float
    born: float
    sigma_mean: float

    @property
    def within_band(self) -> bool:
        # absolute floor covers zero-variance rows up to float summation noise
        return abs(self.mean - self.born) < max(4.0 * self.sigma_mean, 1e-12)


@dataclass(frozen=True)
class MartingaleReport:
    rows: tuple[MartingaleRow, ...]
    passed: bool
    n_trajectories: int

    def worst_deviation(self) -> float:
        return max(
            (abs(r.mean - r.born) / r.sigma_mean if r.sigma_mean else 0.0)
            for r in self.rows
        )


def martingale_check(
    model: CollapseModel,
    psi0: StateVector,
    n: int,
    checkpoints: Sequence[float],
    *,
    dt: float,
    seed: int,
    eps_collapse: float = DEFAULT_COLLAPSE_EPS,
) -> MartingaleReport:
    """Ensemble mean of each projector expectation at the checkpoints.

    The mean should stay at the initial weight for all times: the check
    passes iff every |mean - weight| < 4 sigma of the mean (zero-variance
    rows must match exactly).
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    psi0.require_nonzero()
    checkpoints = sorted(float(t) for t in checkpoints)
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    steps = [int(round(t / dt)) for t in checkpoints]
    n_steps = max(steps)
    psi_start = psi0.normalized().amplitudes
    seeds = [int(seed) + i for i in range(n)]
    _, _, _, snapshots = _run_batch(
        model, psi_start, seeds, n_steps, dt, eps_collapse, checkpoints=steps
    )
    born = model.born_weights(psi0)
    rows = []
    passed = True
    for t, s in zip(checkpoints, steps):
        mass = snapshots[s]
        for k in range(model.n_outcomes):
            sample = mass[:, k]
            mean = float(sample.mean())
            sigma = float(sample.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            row = MartingaleRow(
                time=t, outcome=k, mean=mean, born=float(born[k]), sigma_mean=sigma
            )
            rows.append(row)
            if not row.within_band:
                passed = False
    return MartingaleReport(rows=tuple(rows), passed=passed, n_trajectories=n)


def trajectory_to_csv(trajectory: Trajectory, model: CollapseModel, path) -> None:
    """Write a trajectory as CSV: time, amplitudes, block expectations."""
    d = model.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["t"]
            + [f"re_{i}" for i in range(d)]
            + [f"im_{i}" for i in range(d)]
            + [f"p_{k}" for k in range(model.n_outcomes)]
        )
        writer.writerow(header)
        for t, state in zip(trajectory.times, trajectory.states):
            weights = model.block_weights(state)
            writer.writerow(
                [repr(float(t))]
                + [repr(float(x)) for x in state.real]
                + [repr(float(x)) for x in state.imag]
                + [repr(float(w)) for w in weights]
            )
