"""Unitary-learning tasks, generalisation and noise-robustness experiments.

A task is a Haar-random target unitary V on the input register together with
a pool of Haar-random pure-state pairs (|phi>, V|phi>).  The generalisation
experiment trains on the first n pairs of the pool and reports the cost over
the whole pool (the trained pairs are test pairs too: the analytic estimate
below averages over exactly that pool).  The noise experiment replaces a
random subset of the training pairs with unrelated random pairs, trains on
the corrupted set, and reports the cost over the clean pool.

Every replicate redraws the target, the pool, and the network initialisation
from seeds split off the experiment's master seed, so records are
reproducible from (master seed, replicate index) alone.  Replicates are
independent and may be fanned out over worker processes.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .linalg import haar_random_state, haar_random_unitary, split_rng
from .network import Network
from .training import Dataset, TrainingConfig, cost, train

# split_rng purpose keys
_KEY_TASK_UNITARY = 0
_KEY_TASK_STATES = 1
_KEY_TASK_SEED = 10
_KEY_INIT = 11
_KEY_CORRUPT = 12


@dataclass(frozen=True)
class TaskSpec:
    """A unitary-learning task: target V plus the size of the state pool."""

    qubits: int
    unitary: np.ndarray
    size: int
    seed: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("pool size must be >= 1")
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (1 << self.qubits, 1 << self.qubits):
            raise ValueError("target unitary does not match the qubit count")
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)

    @classmethod
    def draw(cls, qubits: int, size: int, seed: int) -> "TaskSpec":
        v = haar_random_unitary(1 << qubits, split_rng(seed, _KEY_TASK_UNITARY))
        return cls(qubits=qubits, unitary=v, size=size, seed=seed)


def generate_unitary_task(spec: TaskSpec) -> Dataset:
    """Pool of (|phi>, V|phi>) pairs with Haar-random inputs."""
    rng = split_rng(spec.seed, _KEY_TASK_STATES)
    dim = 1 << spec.qubits
    inputs = np.array([haar_random_state(dim, rng) for _ in range(spec.size)])
    return Dataset(inputs, inputs @ spec.unitary.T)


def corrupt_pairs(data: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Replace a uniform random subset of n pairs with unrelated random pairs.

    Corrupted outputs are fresh Haar states independent of the corrupted
    inputs (maximal noise).  Surviving pairs are untouched; the corruption
    mask marks the replaced ones.
    """
    total = len(data)
    if n > total:
        raise ValueError(f"cannot corrupt {n} of {total} pairs")
    inputs = data.inputs.copy()
    outputs = data.outputs.copy()
    corrupted = data.corrupted.copy()
    chosen = np.sort(rng.choice(total, size=n, replace=False))
    dim_in, dim_out = inputs.shape[1], outputs.shape[1]
    for idx in chosen:
        inputs[idx] = haar_random_state(dim_in, rng)
        outputs[idx] = haar_random_state(dim_out, rng)
        corrupted[idx] = True
    return Dataset(inputs, outputs, corrupted)


def optimal_cost_estimate(n: int, pool: int, dim: int, orthogonal: bool = False) -> float:
    """Expected pool-averaged cost of the best unitary consistent with n pairs.

    For Haar-random (generic) training states the unseen-subspace guess
    contributes min(n**2 + 1, dim**2); if the training inputs are mutually
    orthogonal the per-state phases stay undetermined and the term drops to
    min(n + 1, dim).  Equals 1 at n == pool, and is provably <= 1 throughout.
    """
    if not 0 <= n <= pool:
        raise ValueError("need 0 <= n <= pool")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    overlap = min(n + 1, dim) if orthogonal else min(n * n + 1, dim * dim)
    return n / pool + (pool - n) * (dim + overlap) / (pool * dim * (dim + 1))


@dataclass(frozen=True)
class ExperimentRecord:
    """One point of an experiment curve, with per-replicate values retained."""

    variable: int  # number of training pairs, or of corrupted pairs
    mean_cost: float
    std_cost: float  # population standard deviation over replicates
    estimate: float  # analytic comparison value; nan where not applicable
    replicates: int
    master_seed: int
    costs: tuple
    train_costs: tuple


def _task_seed(master_seed: int, replicate: int) -> int:
    return int(split_rng(master_seed, _KEY_TASK_SEED, replicate).integers(2**63))


def replicate_pool(widths, pool_size: int, master_seed: int, replicate: int):
    """The (clean pool, initial network) drawn for one replicate."""
    widths = tuple(int(w) for w in widths)
    if widths[0] != widths[-1]:
        raise ValueError("unitary learning needs equal input and output widths")
    spec = TaskSpec.draw(widths[0], pool_size, _task_seed(master_seed, replicate))
    data = generate_unitary_task(spec)
    net = Network.random(widths, split_rng(master_seed, _KEY_INIT, replicate))
    return data, net


def _run_replicate(job):
    """Train one replicate and measure it; runs in worker processes."""
    widths, pool_size, variable, noisy, config, master_seed, replicate = job
    data, net = replicate_pool(widths, pool_size, master_seed, replicate)
    if noisy:
        train_set = corrupt_pairs(
            data, variable, split_rng(master_seed, _KEY_CORRUPT, replicate, variable)
        )
    else:
        train_set = data.take(variable)
    with threadpool_limits(limits=1):
        history = train(net, train_set, config)
        measured = cost(history.final_network, data)
    return measured, history.costs[-1]


def _run_jobs(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_replicate, jobs))
    return [_run_replicate(job) for job in jobs]


def _collect(values, variables, replicates, master_seed, estimates):
    records = []
    for i, variable in enumerate(variables):
        chunk = values[i * replicates : (i + 1) * replicates]
        costs = tuple(c for c, _ in chunk)
        train_costs = tuple(t for _, t in chunk)
        records.append(
            ExperimentRecord(
                variable=int(variable),
                mean_cost=float(np.mean(costs)),
                std_cost=float(np.std(costs)),
                estimate=estimates[i],
                replicates=replicates,
                master_seed=master_seed,
                costs=costs,
                train_costs=train_costs,
            )
        )
    return records


def generalization_experiment(
    widths,
    pool_size: int,
    train_counts,
    config: TrainingConfig,
    replicates: int,
    master_seed: int,
    workers: int = 1,
):
    """Train on the first n pool pairs and measure the cost over the whole
    pool, for each n, averaged over replicates.  Returns one record per n,
    each carrying the matching analytic estimate."""
    train_counts = [int(n) for n in train_counts]
    dim = 1 << tuple(widths)[0]
    if any(n < 1 or n > pool_size for n in train_counts):
        raise ValueError("train counts must lie in [1, pool size]")
    jobs = [
        (tuple(widths), pool_size, n, False, config, master_seed, rep)
        for n in train_counts
        for rep in range(replicates)
    ]
    values = _run_jobs(jobs, workers)
    estimates = [optimal_cost_estimate(n, pool_size, dim) for n in train_counts]
    return _collect(values, train_counts, replicates, master_seed, estimates)


def noise_experiment(
    widths,
    pool_size: int,
    noisy_counts,
    config: TrainingConfig,
    replicates: int,
    master_seed: int,
    workers: int = 1,
):
    """Corrupt a random subset of the pool, train on the corrupted set, and
    measure the cost over the clean pool (the "good" pairs), for each
    corruption count."""
    noisy_counts = [int(n) for n in noisy_counts]
    if any(n < 0 or n > pool_size for n in noisy_counts):
        raise ValueError("noisy counts must lie in [0, pool size]")
    jobs = [
        (tuple(widths), pool_size, n, True, config, master_seed, rep)
        for n in noisy_counts
        for rep in range(replicates)
    ]
    values = _run_jobs(jobs, workers)
    return _collect(values, noisy_counts, replicates, master_seed, [float("nan")] * len(noisy_counts))


def write_generalization_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean_cost", "std_cost", "estimate", "replicates", "master_seed"])
        for r in records:
            writer.writerow(
                [r.variable, repr(r.mean_cost), repr(r.std_cost), repr(r.estimate),
                 r.replicates, r.master_seed]
            )


def write_noise_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_noisy", "mean_good_cost", "std", "replicates", "master_seed"])
        for r in records:
            writer.writerow(
                [r.variable, repr(r.mean_cost), repr(r.std_cost), r.replicates, r.master_seed]
            )
