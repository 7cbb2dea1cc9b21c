# Configuration defaults
#
# Every value here can be replaced from a configuration file (see config.py.sample) or with
# `--override section.key=value` on the command line.  Units are given next to each value.

import logging


# -- topology --

# Side of the square deployment region, in metres.
AREA_SIDE = 1000.0

# Single-antenna RRHs cooperating through the BBU pool (the C-RAN receiver has this many antennas).
NUM_RRH = 10

# Fog access points and the antenna count of each one.  Must stay below NUM_RRH.
NUM_FAP = 3
FAP_ANTENNAS = 6

# Traditional UEs, fog UEs, and the number of subchannels to hand out.  These match the small
# instance used for the exhaustive-search comparison.
NUM_TUE = 2
NUM_FUE = 2
NUM_SUBCHANNELS = 4

# Nodes closer than this (metres) to a UE are in that UE's distributed-learning scope.  C-RAN is
# always in scope.
NEIGHBOR_RADIUS = 300.0


# -- channel law --

# Log-normal shadowing standard deviation, dB.
SHADOW_STD_DB = 8.0

# Fraction of the received power that is scattered (Rayleigh).  1.0 is pure Rayleigh fading, 0.0
# makes every channel coefficient equal to its deterministic pathloss amplitude.
FADING_VARIANCE = 1.0

# Antenna gain, dBi.
ANTENNA_GAIN_DB = 0.0

# Noise power spectral density, dBm/Hz.
NOISE_DENSITY_DBM_HZ = -164.0

# Distances are clamped to at least this many metres before evaluating the pathloss model.
MIN_DISTANCE_M = 1.0


# -- rates --

# Subchannel bandwidth, Hz.
SUBCHANNEL_BANDWIDTH = 180e3

# Slot duration, seconds.  With 1 s slots, "Mbits/slot" and Mbit/s coincide.
SLOT_SECONDS = 1.0

# F-UE rate requirement and traditional-UE minimum rate, bits/slot.
RATE_THRESHOLD = 0.6e6
RATE_MIN = 0.06e6


# -- power --

# Power amplifier efficiencies of traditional UEs and F-UEs.
ETA_TUE = 0.05
ETA_FUE = 0.05

# Constant fronthaul power per C-RAN connection, watts.
FRONTHAUL_POWER = 0.35

# Power/delay tradeoff weight V.  Queues and rates are in bits, so V is large.
TRADEOFF_V = 1e10

# Maximum transmit power, watts.
P_MAX_TUE = 0.2
P_MAX_FUE = 1.0


# -- computing --

# MOPTS per antenna-count-cubed, MOPTS per bit/slot (10 MOPTS per Mbit/slot), constant MOPTS.
MU0 = 0.1
MU1 = 10e-6
C_CONS = 5.0

# MOPTS available at each F-AP; the BBU pool gets BBU_POOL_FACTOR times as much.
FAP_CPU = 100.0
BBU_POOL_FACTOR = 10.0


# -- traffic --

# Mean arrivals per traditional UE, bits/slot.
MEAN_ARRIVAL = 0.05e6


# -- learning --

LEARNING_RATE = 0.1
INITIAL_TEMPERATURE = 0.5

# "log" for tau0 / log(1 + t_epi), "fixed" for a constant tau0.
TEMPERATURE_SCHEDULE = "log"

# Centralized sweeps (each visits every UE once) or distributed rounds per slot.
EPISODES_PER_SLOT = 50

# "random" reshuffles the centralized sweep order every episode; "fixed" keeps UE order.
SWEEP_ORDER = "random"

# "final" emits the state reached after the last episode, "best" the best-rewarded state seen.
EMIT = "final"


# -- solvers --

# Orthogonal power step as a fraction of P^max.
ORTH_STEP_FRACTION = 1e-3

# WMMSE relative precision and iteration cap.
WMMSE_KAPPA = 1e-4
WMMSE_MAX_ITER = 200

# Largest enumeration the exhaustive search will attempt.
EXHAUSTIVE_LIMIT = 1_000_000

# Most assignments the exhaustive oracle may evaluate across a whole run (slots times seeds).
ORACLE_WORK_LIMIT = 5_000_000


# -- particle swarm --

PSO_PARTICLES = 30
PSO_ITERATIONS = 100
PSO_INERTIA = 0.7
PSO_C1 = 1.5
PSO_C2 = 1.5


# -- experiments --

# "orthogonal" or "multiplexed".
STRATEGY = "orthogonal"

# One of "qlearn", "all_to_rrhs", "pl_first", "pso", "exhaustive".
POLICY = "qlearn"

HORIZON = 10000
SEEDS = (1,)

V_GRID = (1e9, 3e9, 1e10, 3e10, 1e11, 3e11)
LAMBDA_GRID = (0.02e6, 0.05e6, 0.1e6)
BUDGET_GRID = (200.0, 400.0, 800.0, 1600.0, 3200.0)
K1_GRID = (2, 4, 6)
TAU_GRID = ("log", 0.1, 0.5)

# Parallel worker processes for seeds and grid points; 1 runs everything in-process.
WORKERS = 1

OUT_DIR = "results"


# The default log level
log_level = logging.INFO
