"""Command line entry points: run, serve, train-prior."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np

from .evolve import AblationFlags, GaConfig


@click.group()
def main():
    """Mission-driven evolutionary synthesis of voxel aircraft concepts."""


@main.command("run")
@click.argument("mission", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", default="runs/latest", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--resolution", default=96, show_default=True, type=int,
              help="Scoring voxel grid resolution per axis.")
@click.option("--population", default=120, show_default=True, type=int)
@click.option("--generations", default=150, show_default=True, type=int)
@click.option("--replicates", default=1, show_default=True, type=int,
              help="Independent seeded runs (seed, seed+1, ...).")
@click.option("--stop-on-feasible", is_flag=True,
              help="End a run at the first feasible generation.")
@click.option("--ablate-topology-elitism", is_flag=True)
@click.option("--ablate-mount-score", is_flag=True)
@click.option("--ablate-prior", is_flag=True)
@click.option("--ablate-restart", is_flag=True)
@click.option("--prior-model", "prior_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Prior model file (defaults to the cache path).")
def run_cmd(mission, seed, out_dir, resolution, population, generations,
            replicates, stop_on_feasible, ablate_topology_elitism,
            ablate_mount_score, ablate_prior, ablate_restart, prior_path):
    """Run the synthesis loop headless and write run artifacts."""
    from . import server

    ga_cfg = GaConfig(population=population, generations=generations,
                      resolution=resolution)
    flags = AblationFlags(
        topology_elitism=not ablate_topology_elitism,
        mount_score=not ablate_mount_score,
        prior=not ablate_prior,
        restart=not ablate_restart,
    )
    if replicates > 1:
        code = server.run_replicates(mission, out_dir,
                                     seeds=list(range(seed, seed + replicates)),
                                     ga_cfg=ga_cfg, flags=flags,
                                     stop_on_feasible=stop_on_feasible)
        sys.exit(code)
    outcome = server.run_headless(mission, out_dir, seed=seed, ga_cfg=ga_cfg,
                                  flags=flags, prior_path=prior_path,
                                  stop_on_feasible=stop_on_feasible)
    best = outcome.result.best
    feasible_at = outcome.result.generations_to_feasible
    click.echo(f"run complete: best fitness "
               f"{best.breakdown.fitness:.3f} ({best.ng.topology.value}); "
               f"feasible at generation {feasible_at}"
               if feasible_at is not None else
               f"run complete: no feasible design within budget "
               f"(best fitness {best.breakdown.fitness:.3f})")
    click.echo(f"artifacts in {outcome.run_dir}")
    sys.exit(outcome.exit_code)


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--prior-model", "prior_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
def serve_cmd(bind, prior_path):
    """Serve the interactive steering console (WebSocket + static viewer)."""
    from . import server
    server.serve(bind, prior_path)


@main.command("train-prior")
@click.option("--corpus", "corpus_size", default=4000, show_default=True, type=int)
@click.option("--epochs", default=30, show_default=True, type=int)
@click.option("--resolution", default=32, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", default=None,
              help="Model file (defaults to the cache path).")
def train_prior_cmd(corpus_size, epochs, resolution, seed, out_path):
    """Train the shape prior on a self-generated corpus and cache it."""
    from . import prior as prior_mod

    cfg = prior_mod.PriorConfig(corpus_size=corpus_size, epochs=epochs,
                                grid_resolution=resolution, seed=seed)
    rng = np.random.default_rng(seed)
    click.echo(f"generating corpus of {corpus_size} at {resolution}^3 ...")
    corpus = prior_mod.generate_corpus(corpus_size, rng, cfg)

    def progress(epoch, record):
        click.echo(f"  epoch {epoch:3d}  recon {record.recon_bce:9.2f}  "
                   f"alignment {record.alignment:.4f}")

    model, _ = prior_mod.train(corpus, cfg, progress=progress)
    path = out_path or prior_mod.default_cache_path()
    Path(os.path.dirname(path) or ".").mkdir(parents=True, exist_ok=True)
    prior_mod.save_model(model, path)
    click.echo(f"prior model written to {path}")


if __name__ == "__main__":
    main()
