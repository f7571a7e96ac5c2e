"""Instance generators, experiment drivers and the command line."""

from .experiments import PIPELINES, ExperimentReport, naive_sample_solve, run_experiment
from .instances import KINDS, gen_instance, spiked_column

__all__ = ["PIPELINES", "KINDS", "ExperimentReport", "gen_instance", "naive_sample_solve", "run_experiment", "spiked_column"]
