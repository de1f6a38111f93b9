"""Topology-preserving genetic algorithm over normalized genomes.

Three elite pools run in parallel each generation: the global fitness
elite (top 5%), one best-of-class survivor per tail topology present
(regardless of global rank), and a farthest-point diversity pool.  The
rest of the next generation comes from binary tournaments, uniform
crossover, and Gaussian mutation whose scale decays linearly over the run
and inflates 2.5x under stagnation; prolonged stagnation replaces the
worst half of the population with fresh seeds while the best-so-far
survives verbatim.

The loop is a single-threaded state machine driven through one explicit
RNG, so a (seed, flags) pair fully determines the trajectory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import anatomy
from .anatomy import NormalizedGenome, TailTopology, TOPOLOGIES
from .mounts import MountReport, MountThresholds, evaluate_mounts, overlap_fallback_multiplier
from .physics import FitnessBreakdown, MissionSpec, PhysicsConfig, evaluate
from .voxelizer import VoxelGrid, part_bounds, voxelize

IMPROVEMENT_EPS = 1e-12
TOPOLOGY_MUTATION_RATE = 0.02


@dataclass
class GaConfig:
    population: int = 120
    generations: int = 150
    sigma0: float = 0.18
    sigma_min: float = 0.03
    inflation_factor: float = 2.5
    inflation_threshold: int = 15   # inflate strictly above this
    restart_threshold: int = 25     # replace half the population at this
    fitness_elite_frac: float = 0.05
    diversity_elite_count: int = 4
    crossover_rate: float = 0.5     # per-gene donor choice
    init_noise: float = 0.35        # exploration spread around the seeds
    resolution: int = 96

    def __post_init__(self):
        if self.population < 10:
            raise ValueError("population must be at least 10")
        if self.restart_threshold <= self.inflation_threshold:
            raise ValueError("restart threshold must exceed inflation threshold")

    def fitness_elite_count(self) -> int:
        return max(1, round(self.population * self.fitness_elite_frac))


@dataclass
class AblationFlags:
    topology_elitism: bool = True
    mount_score: bool = True
    prior: bool = True
    restart: bool = True

    def to_dict(self) -> dict:
        return {"topology_elitism": self.topology_elitism,
                "mount_score": self.mount_score,
                "prior": self.prior, "restart": self.restart}


def mutation_sigma(g: int, s: int, cfg: GaConfig) -> float:
    """Linearly decaying mutation scale, inflated 2.5x while stagnating."""
    if not 0 <= g <= cfg.generations:
        raise ValueError(f"generation {g} outside [0, {cfg.generations}]")
    sigma = cfg.sigma0 * (1.0 - g / cfg.generations) + cfg.sigma_min
    if s > cfg.inflation_threshold:
        sigma *= cfg.inflation_factor
    return sigma


@dataclass
class Individual:
    ng: NormalizedGenome
    breakdown: FitnessBreakdown | None = None
    mounts: MountReport | None = None

    @property
    def fitness(self) -> float:
        return self.breakdown.fitness if self.breakdown is not None else -1.0


@dataclass
class GaState:
    generation: int = 0
    stagnation: int = 0
    population: list[Individual] = field(default_factory=list)
    best: Individual | None = None
    per_class_best: dict[TailTopology, Individual] = field(default_factory=dict)
    pinned_axes: dict[int, float] = field(default_factory=dict)
    restarts: int = 0


def select_elites(population: list[Individual], cfg: GaConfig,
                  topology_elitism: bool = True) -> list[Individual]:
    """Union of the fitness, per-topology, and diversity elite pools."""
    if not population:
        raise ValueError("empty population")
    order = sorted(range(len(population)),
                   key=lambda i: (-population[i].fitness, i))
    chosen: list[int] = []
    seen: set[int] = set()

    for i in order[:cfg.fitness_elite_count()]:
        if i not in seen:
            chosen.append(i)
            seen.add(i)

    if topology_elitism:
        for topo in TOPOLOGIES:
            best_i = None
            for i in order:
                if population[i].ng.topology is topo:
                    best_i = i
                    break
            if best_i is not None and best_i not in seen:
                chosen.append(best_i)
                seen.add(best_i)

    # farthest-point diversity pool, deterministic index tie-break
    vectors = np.stack([ind.ng.values for ind in population])
    for _ in range(cfg.diversity_elite_count):
        pool = vectors[chosen]
        best_i, best_d = None, -1.0
        for i in range(len(population)):
            if i in seen:
                continue
            d = float(np.min(np.linalg.norm(pool - vectors[i], axis=1)))
            if d > best_d + 1e-15:
                best_i, best_d = i, d
        if best_i is None:
            break
        chosen.append(best_i)
        seen.add(best_i)

    return [population[i] for i in chosen]


def _tournament(population: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = rng.integers(0, len(population), size=2)
    a, b = population[int(i)], population[int(j)]
    return a if a.fitness >= b.fitness else b


def _crossover(pa: NormalizedGenome, pb: NormalizedGenome, cfg: GaConfig,
               rng: np.random.Generator) -> NormalizedGenome:
    take_b = rng.random(anatomy.N_PARAMS) < cfg.crossover_rate
    child = np.where(take_b, pb.values, pa.values)
    if pa.topology is pb.topology:
        topo = pa.topology
    else:
        # A tail concept crosses as a block with its tag: no hybrid tails.
        donor, other = (pa, pb) if rng.random() < 0.5 else (pb, pa)
        topo = donor.topology
        for idx in anatomy.TAIL_GENE_INDICES:
            child[idx] = donor.values[idx]
    return NormalizedGenome(values=child, topology=topo)


def make_offspring(population: list[Individual], sigma: float, cfg: GaConfig,
                   mission: MissionSpec, rng: np.random.Generator) -> NormalizedGenome:
    pa = _tournament(population, rng)
    pb = _tournament(population, rng)
    child = _crossover(pa.ng, pb.ng, cfg, rng)
    noise = rng.normal(0.0, sigma, size=anatomy.N_PARAMS)
    child.values = np.clip(child.values + noise, -1.0, 1.0)
    if rng.random() < TOPOLOGY_MUTATION_RATE:
        new_topo = TOPOLOGIES[int(rng.integers(0, len(TOPOLOGIES)))]
        if new_topo is not child.topology:
            # Re-seed the tail block so the new class starts coherent.
            fresh = anatomy.seed_individual(new_topo, mission, rng)
            for idx in anatomy.TAIL_GENE_INDICES:
                child.values[idx] = fresh.values[idx]
            child.topology = new_topo
    return child


def apply_pins(ng: NormalizedGenome, pinned: dict[int, float]) -> None:
    for idx, val in pinned.items():
        ng.values[idx] = val


class Evaluator:
    """Decodes, voxelizes, mount-scores, and runs physics for a population.

    Kept as one object so the prior model (if any) can batch its encoder
    over the whole generation instead of per-individual.
    """

    def __init__(self, mission: MissionSpec, phys_cfg: PhysicsConfig,
                 flags: AblationFlags, resolution: int,
                 prior_model=None, thresholds: MountThresholds | None = None):
        self.mission = mission
        self.cfg = phys_cfg
        self.flags = flags
        self.resolution = resolution
        self.prior = prior_model if flags.prior else None
        self.thresholds = thresholds or MountThresholds()

    def evaluate_population(self, pop: list[Individual]) -> None:
        pending = [ind for ind in pop if ind.breakdown is None]
        if not pending:
            return
        decoded, grids = [], []
        for ind in pending:
            try:
                genome = anatomy.decode(ind.ng, self.mission.envelope)
                grid = voxelize(genome, self.mission.envelope, self.resolution)
            except Exception:
                # a failed individual scores zero; the run must survive
                # anything mutation can produce
                genome, grid = None, None
            decoded.append(genome)
            grids.append(grid)
        if self.prior is not None:
            penalties, deviations = self.prior.batch_penalty(
                [ind.ng for ind in pending], self.mission.envelope)
        else:
            penalties = [0.0] * len(pending)
            deviations = [None] * len(pending)
        for ind, genome, grid, pen, dev in zip(pending, decoded, grids, penalties, deviations):
            if grid is None:
                ind.breakdown = FitnessBreakdown(prior_penalty=pen)
                ind.mounts = MountReport()
                continue
            try:
                parts = part_bounds(grid, genome)
                if self.flags.mount_score:
                    report = evaluate_mounts(parts, grid, genome, self.thresholds)
                    multiplier = report.multiplier
                else:
                    multiplier = overlap_fallback_multiplier(parts, grid)
                    report = MountReport(multiplier=multiplier)
                ind.breakdown = evaluate(genome, grid, self.mission, self.cfg,
                                         multiplier, pen,
                                         tuple(dev) if dev is not None else None)
                ind.mounts = report
            except Exception:
                ind.breakdown = FitnessBreakdown(prior_penalty=pen)
                ind.mounts = MountReport()

    def best_grid(self, ind: Individual) -> VoxelGrid:
        genome = anatomy.decode(ind.ng, self.mission.envelope)
        return voxelize(genome, self.mission.envelope, self.resolution)


def step(state: GaState, evaluator: Evaluator, cfg: GaConfig,
         flags: AblationFlags, mission: MissionSpec,
         rng: np.random.Generator) -> GaState:
    """Breed the next generation from an evaluated population.

    On prolonged stagnation half the new population is freshly seeded
    (round-robin over topologies) instead of bred; the elites, and with
    them the best-so-far, always survive verbatim.
    """
    pop = state.population
    elites = select_elites(pop, cfg, flags.topology_elitism)
    sigma = mutation_sigma(state.generation, state.stagnation, cfg)

    next_pop: list[Individual] = [Individual(e.ng.copy(), e.breakdown, e.mounts)
                                  for e in elites]
    restarting = flags.restart and state.stagnation >= cfg.restart_threshold
    if restarting:
        n_fresh = min(cfg.population // 2, cfg.population - len(next_pop))
        fresh_pool = anatomy.init_population(n_fresh, mission, rng,
                                             explore=cfg.init_noise)
        for fresh in fresh_pool:
            apply_pins(fresh, state.pinned_axes)
            next_pop.append(Individual(fresh))
    while len(next_pop) < cfg.population:
        child = make_offspring(pop, sigma, cfg, mission, rng)
        apply_pins(child, state.pinned_axes)
        next_pop.append(Individual(child))

    return replace(state, generation=state.generation + 1, population=next_pop,
                   stagnation=0 if restarting else state.stagnation,
                   restarts=state.restarts + (1 if restarting else 0))


def update_best(state: GaState) -> None:
    """Track best-so-far and the stagnation counter after evaluation."""
    gen_best = max(state.population, key=lambda ind: ind.fitness)
    improved = state.best is None or gen_best.fitness > state.best.fitness + IMPROVEMENT_EPS
    if improved:
        state.best = Individual(gen_best.ng.copy(), gen_best.breakdown, gen_best.mounts)
        state.stagnation = 0
    elif state.generation > 0:
        state.stagnation += 1
    for ind in state.population:
        topo = ind.ng.topology
        cur = state.per_class_best.get(topo)
        if cur is None or ind.fitness > cur.fitness:
            state.per_class_best[topo] = Individual(ind.ng.copy(), ind.breakdown, ind.mounts)


def topology_histogram(population: list[Individual]) -> dict[str, int]:
    hist = {t.value: 0 for t in TOPOLOGIES}
    for ind in population:
        hist[ind.ng.topology.value] += 1
    return hist


def mean_pairwise_distance(population: list[Individual]) -> float:
    if len(population) < 2:
        return 0.0
    vecs = np.stack([ind.ng.values for ind in population])
    sq = np.sum(vecs**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * vecs @ vecs.T, 0.0)
    n = len(population)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(d2[iu])))


@dataclass
class GenerationRecord:
    generation: int
    best: Individual
    histogram: dict[str, int]
    diversity: float
    stagnation: int
    sigma: float
    pinned_axes: dict[int, float]
    feasible: bool
    grid: VoxelGrid


@dataclass
class RunResult:
    best: Individual
    history: list[dict]
    generations_to_feasible: int | None
    completed_generations: int
    stopped: bool = False
    final_population: list[Individual] = field(default_factory=list)


class ControlQueue:
    """Single-producer commands drained at generation boundaries."""

    def __init__(self):
        import queue
        self._q = queue.Queue()

    def push(self, cmd: dict) -> None:
        self._q.put(cmd)

    def drain(self) -> list[dict]:
        out = []
        while True:
            try:
                out.append(self._q.get_nowait())
            except Exception:
                return out


def run(mission: MissionSpec, ga_cfg: GaConfig | None = None,
        phys_cfg: PhysicsConfig | None = None,
        flags: AblationFlags | None = None, seed: int = 0,
        prior_model=None, sink=None, control: ControlQueue | None = None,
        stop_on_feasible: bool = False) -> RunResult:
    """Execute the full loop: seed, evaluate, stream, breed, repeat.

    `sink(record)` is called once per completed generation.  Control
    commands (pause/resume/pin/unpin/force_restart/stop) are honored
    between generations only, so evaluation stays pure.
    """
    ga_cfg = ga_cfg or GaConfig()
    phys_cfg = phys_cfg or PhysicsConfig()
    flags = flags or AblationFlags()
    rng = np.random.default_rng(seed)
    evaluator = Evaluator(mission, phys_cfg, flags, ga_cfg.resolution, prior_model)

    state = GaState()
    state.population = [Individual(ng) for ng in
                        anatomy.init_population(ga_cfg.population, mission, rng,
                                                explore=ga_cfg.init_noise)]
    history: list[dict] = []
    gens_to_feasible: int | None = None
    stopped = False
    paused = False

    for g in range(ga_cfg.generations + 1):
        # control boundary: commands queued during generation g-1 act here
        while control is not None:
            for cmd in control.drain():
                kind = cmd.get("type")
                if kind == "pause":
                    paused = True
                elif kind == "resume":
                    paused = False
                elif kind == "pin_axis":
                    idx, val = int(cmd["index"]), float(cmd["value"])
                    if not 0 <= idx < anatomy.N_PARAMS:
                        continue
                    state.pinned_axes[idx] = float(np.clip(val, -1.0, 1.0))
                elif kind == "unpin_axis":
                    state.pinned_axes.pop(int(cmd["index"]), None)
                elif kind == "force_restart":
                    state.stagnation = ga_cfg.restart_threshold
                elif kind == "stop":
                    stopped = True
            if stopped or not paused:
                break
            time.sleep(0.02)
        if stopped:
            break

        for ind in state.population:
            if state.pinned_axes:
                before = ind.ng.values.copy()
                apply_pins(ind.ng, state.pinned_axes)
                if ind.breakdown is not None and not np.array_equal(before, ind.ng.values):
                    ind.breakdown = None
        evaluator.evaluate_population(state.population)
        update_best(state)

        gen_best = max(state.population, key=lambda ind: ind.fitness)
        feasible = bool(gen_best.breakdown.feasible) if gen_best.breakdown else False
        if feasible and gens_to_feasible is None:
            gens_to_feasible = g
        record = GenerationRecord(
            generation=g,
            best=gen_best,
            histogram=topology_histogram(state.population),
            diversity=mean_pairwise_distance(state.population),
            stagnation=state.stagnation,
            sigma=mutation_sigma(g, state.stagnation, ga_cfg),
            pinned_axes=dict(state.pinned_axes),
            feasible=feasible,
            grid=evaluator.best_grid(gen_best),
        )
        if sink is not None:
            sink(record)
        history.append({
            "generation": g,
            "best_fitness": gen_best.fitness,
            "feasible": feasible,
            "histogram": record.histogram,
            "stagnation": state.stagnation,
        })
        if g == ga_cfg.generations:
            break
        if stop_on_feasible and gens_to_feasible is not None:
            break
        state = step(state, evaluator, ga_cfg, flags, mission, rng)

    return RunResult(best=state.best, history=history,
                     generations_to_feasible=gens_to_feasible,
                     completed_generations=len(history),
                     stopped=stopped, final_population=state.population)
