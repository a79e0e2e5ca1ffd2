"""Learned neural-network regularizers for 1D conductivity identification.

Thin python surface over the C++ core: network evaluation with analytic
derivatives, the P1 finite-element solver, the accelerated inner solver and
the Barzilai-Borwein outer training loop.
"""

from ._core import (
    Architecture,
    DataSet,
    InnerSolution,
    TrainReport,
    WeightVector,
    __version__,
    forward,
    gen_l2_dataset,
    gen_noisy_dataset,
    hessian_uu,
    jacobian_u,
    lipschitz_bound,
    load_dataset,
    load_weights,
    outer_gradient_norm,
    random_weights,
    relative_misfit,
    save_dataset,
    save_weights,
    solve_inner,
    solve_state,
    train,
    unflatten_weights,
    zero_weights,
)

__all__ = [
    "Architecture",
    "DataSet",
    "InnerSolution",
    "TrainReport",
    "WeightVector",
    "__version__",
    "forward",
    "gen_l2_dataset",
    "gen_noisy_dataset",
    "hessian_uu",
    "jacobian_u",
    "lipschitz_bound",
    "load_dataset",
    "load_weights",
    "outer_gradient_norm",
    "random_weights",
    "relative_misfit",
    "save_dataset",
    "save_weights",
    "solve_inner",
    "solve_state",
    "train",
    "unflatten_weights",
    "zero_weights",
]
