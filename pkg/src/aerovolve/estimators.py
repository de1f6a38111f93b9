"""scikit-learn adapters so the pieces compose with the wider ecosystem.

The core modules are plain functions; these wrappers expose the two
model-shaped objects (the shape prior and the synthesis loop) and the
genome codec through the estimator API (get_params/set_params/fit/
transform), which makes them usable inside sklearn pipelines, grid
searches, and clone()-based tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import anatomy, prior
from .anatomy import AnatomyGenome, NormalizedGenome, TailTopology
from .evolve import AblationFlags, GaConfig, run
from .physics import MissionSpec, PhysicsConfig


class GenomeVectorizer(BaseEstimator, TransformerMixin):
    """Stateless codec between genome objects and normalized vectors.

    transform: list of AnatomyGenome -> (n, 25) array in [-1, 1].
    inverse_transform: (n, 25) array plus a topology per row -> genomes.
    """

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return np.stack([anatomy.normalize(g).values for g in X])

    def inverse_transform(self, X, topologies=None):
        X = np.asarray(X, dtype=float)
        if topologies is None:
            topologies = [TailTopology.CONVENTIONAL] * len(X)
        return [anatomy.denormalize(NormalizedGenome(values=row.copy(), topology=t))
                for row, t in zip(X, topologies)]


class ShapePriorEncoder(BaseEstimator, TransformerMixin):
    """Fits the shape prior on a self-generated corpus; transforms
    normalized genomes into their supervised latent projections."""

    def __init__(self, corpus_size=500, epochs=30, grid_resolution=32, seed=0):
        self.corpus_size = corpus_size
        self.epochs = epochs
        self.grid_resolution = grid_resolution
        self.seed = seed

    def fit(self, X=None, y=None):
        cfg = prior.PriorConfig(corpus_size=self.corpus_size, epochs=self.epochs,
                                grid_resolution=self.grid_resolution, seed=self.seed)
        rng = np.random.default_rng(self.seed)
        corpus = prior.generate_corpus(self.corpus_size, rng, cfg)
        self.model_, self.history_ = prior.train(corpus, cfg)
        return self

    def transform(self, X):
        """X: list of NormalizedGenome -> (n, 25) manifold projections."""
        check_is_fitted(self, "model_")
        scorer = prior.PriorScorer(self.model_)
        _, deviations = scorer.batch_penalty(list(X), prior.CORPUS_ENVELOPE)
        return np.stack([x.values - d for x, d in zip(X, deviations)])

    def score_samples(self, X):
        """Negative manifold deviation per genome (higher = more typical)."""
        check_is_fitted(self, "model_")
        scorer = prior.PriorScorer(self.model_)
        penalties, _ = scorer.batch_penalty(list(X), prior.CORPUS_ENVELOPE)
        return -np.asarray(penalties)


class AircraftSynthesizer(BaseEstimator):
    """Estimator facade over the evolutionary loop: fit(mission) evolves a
    design; fitted attributes expose the best individual and history."""

    def __init__(self, population=120, generations=150, resolution=96,
                 seed=0, topology_elitism=True, mount_score=True,
                 use_prior=False, restart=True, stop_on_feasible=False):
        self.population = population
        self.generations = generations
        self.resolution = resolution
        self.seed = seed
        self.topology_elitism = topology_elitism
        self.mount_score = mount_score
        self.use_prior = use_prior
        self.restart = restart
        self.stop_on_feasible = stop_on_feasible

    def fit(self, X: MissionSpec, y=None, prior_model=None):
        if not isinstance(X, MissionSpec):
            raise TypeError("fit expects a MissionSpec")
        ga = GaConfig(population=self.population, generations=self.generations,
                      resolution=self.resolution)
        flags = AblationFlags(topology_elitism=self.topology_elitism,
                              mount_score=self.mount_score,
                              prior=self.use_prior and prior_model is not None,
                              restart=self.restart)
        result = run(X, ga, PhysicsConfig(), flags=flags, seed=self.seed,
                     prior_model=prior_model,
                     stop_on_feasible=self.stop_on_feasible)
        self.result_ = result
        self.best_genome_ = anatomy.decode(result.best.ng, X.envelope)
        self.best_breakdown_ = result.best.breakdown
        self.history_ = result.history
        self.generations_to_feasible_ = result.generations_to_feasible
        return self

    def predict(self, X=None) -> AnatomyGenome:
        check_is_fitted(self, "best_genome_")
        return self.best_genome_

    def score(self, X=None, y=None) -> float:
        check_is_fitted(self, "best_breakdown_")
        return float(self.best_breakdown_.fitness)
