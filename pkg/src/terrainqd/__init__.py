"""Quality-Diversity terrain search for stress-testing locomotion controllers."""

import os as _os

# pick the OpenMP threading layer up front; the TBB build shipped with some
# distros is too old and numba warns loudly while probing for it
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .archive import Archive, ArchiveMetrics, Elite
from .cmaes import CmaEs, CmaEsError
from .config import AUTO_SCALING, ConfigError, RunConfig
from .descriptors import (DegenerateReportError, DescriptorKey, Fitness,
                          PenaltyScaling, bin_ratios, calibrate_scaling,
                          compute_fitness, describe, ratio_descriptors,
                          unit_scaling)
from .evaluation import (BuiltinWalker, EpisodeResult, EvaluationError,
                         EvaluationReport, InitialState, WalkerParams,
                         aggregate_report, episode_seed, evaluate_terrain,
                         fnv1a64, proxy_walker_rollout, sample_initial_state)
from .external import ExternalEvaluator, ProtocolError
from .optimizer import Emitter, MetricsRow, RunResult, evaluate_genome, run
from .terrain import (GenomeError, Heightmap, SuperGaussianParams, clip_genome,
                      height_at, heights_at, load_genome, rasterize, rescale,
                      save_genome, save_heightmap_csv, save_heightmap_pgm)

__version__ = "0.1.0"
