"""Memristive nanowire network simulation for dynamic reservoir computing."""
from .circuit import (
    CircuitSession,
    CircuitSolution,
    EdgeState,
    MemristorParams,
    active_fraction,
    solve_voltages,
    step,
    update_edges,
)
from .graph import (
    NetworkGraph,
    density,
    generate_nanowire_spatial,
    generate_random_graph,
    read_edgelist,
    write_edgelist,
)
from .kernels import BACKEND

from .config import ConfigError, ExperimentConfig, derive_seed, load_config, resolve
from .metrics import forecast_error, forecast_time, readout_diversity, training_nmse
from .readout import RidgeConfig, TrainedReadout, predict, read_readout, ridge_fit, write_readout
from .reservoir import (
    Reservoir,
    ReservoirTrace,
    ReservoirWiring,
    WiringError,
    drive,
    make_wiring,
    read_wiring,
    routed_wiring,
    write_wiring,
)
from .signals import LorenzParams, fourier_square_modes, lorenz_integrate, lorenz_series, lyapunov_max, normalize

__version__ = "0.1.0"
