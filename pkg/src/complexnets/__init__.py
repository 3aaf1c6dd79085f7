"""Feedforward neural networks on complex-network topologies."""
from .graphgen import FamilyParams, UGraph, gen_ba, gen_er, gen_mlp, gen_sbm, gen_ws, generate
from .dag import Dag, LevelPlan, adjust_io, build_dag, level_partition, orient
from .net import DagNet, backward, count_params, forward, init
from .data import Dataset, gen_manifold, load_tabular, split
from .train import Family, RunRecord, TrainConfig, evaluate_topology, grid_search

__version__ = "0.1.0"
