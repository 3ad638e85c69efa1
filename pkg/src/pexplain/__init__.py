"""Hierarchical text attribution in hyperbolic space.

Pipeline: project classifier embeddings into Poincare balls with trained
probes, estimate token and coalition contributions against a mask oracle,
and assemble hierarchical-attribution trees with a lazy-deletion heap
builder, plus AOPC evaluation and complexity benches.
"""
from .geometry import (BallConfig, PoincarePoint, conformal_factor, distance,
                       gyromidpoint, mobius_add, mobius_matvec)
from .attribution import (CachedOracle, ContributionVector, MaskOracle,
                          MissingMaskError, ToyOracle, exact_shapley,
                          mc_shapley, occlusion, toy_oracle)
from .hierarchy import (BuildResult, HierarchyTree, build_greedy_baseline,
                        build_pe_tree, build_tree_static,
                        dasgupta_cost_pairs, dasgupta_cost_triples,
                        enumerate_trees)
from .probes import (ParsedExample, SemanticProbe, SyntaxProbe, TrainConfig,
                     fit_semantic, fit_syntax, prototype_distribution,
                     semantic_loss, syntax_loss)
from .optim import OptimConfig, ParamSet, adam_step, check_gradient, exp_map
from .evaluation import AopcReport, ScoreConfig, aopc, bench, word_scores

__version__ = "0.1.0"
