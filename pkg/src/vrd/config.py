# Configuration for the VRD library and command-line tool

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Default worker count for the FFT transforms used by the CLI (-1: all cores)
FFT_WORKERS = int(os.getenv("VRD_THREADS", "-1"))

LOG_LEVEL = os.getenv("VRD_LOG_LEVEL", "WARNING")

# Numerical tolerances
TOLERANCES = {
    "symmetry": 1e-10,          # relative asymmetry accepted before symmetrizing
    "phi_degenerate": 1e-9,     # eigenvalue gap treated as equal in the expm derivative
    "fd_step": 1e-5,            # central-difference step
    "fd_floor": 1e-8,           # absolute floor in relative-error denominators
}

# Binary file formats
VRDT_MAGIC = b"VRDT"
VRDP_MAGIC = b"VRDP"
FORMAT_VERSION = 1

# Default training configuration (keys accepted in a training config file)
DEFAULT_TRAIN_CONFIG = {
    "epochs": 10,
    "lr": 0.1,
    "seed": 7,
    "noise_sigma": 1.5,
    "grid": (64, 64),
    "classes": 2,
    "arch": "mix:8,vrd:8,relu,mix:2",
    "n_train": 40,
    "n_test": 10,
    "anneal": False,
}

ADAGRAD_EPSILON = 1e-8

# Initial cross-block range for VRD layers: Q^i ~ uniform(-0.1, 0.1)
VRD_INIT_SCALE = 0.1

# Benchmark defaults
BENCH_DEFAULTS = {
    "sizes": [128, 256, 512],
    "n_in": 16,
    "n_out": 8,
    "repetitions": 5,
    "seed": 0,
}

# Timings reported for a 511x255 layer with N_i = 64, N_o = 32
REFERENCE_TIMINGS_MS = {
    "forward": 408.0,
    "backward": 760.0,
}

# Oracle guard against accidental huge dense systems
ORACLE_MAX_DIM = 5000
