"""Configuration settings for trimine."""

import os
from platformdirs import user_data_dir, user_log_dir

# Environment variable holding the default seed for every stochastic command
SEED_ENV_VAR = "TRIMINE_SEED"
DEFAULT_SEED = int(os.environ.get(SEED_ENV_VAR, "0"))

# Directories
LOG_DIR = user_log_dir("trimine", appauthor=False)
RUNS_DIR = os.path.join(user_data_dir("trimine", appauthor=False), "runs")
LOG_FILE_NAME = "trimine.log"
MANIFEST_FILE_PATTERN = "manifest.{command}.json"  # One manifest per command in a run directory

# Distance settings
DEFAULT_METRIC = "squared-euclidean"
DEFAULT_NORMALIZE_INPUTS = False
BLOCK_ROWS = 512  # Anchors or queries processed per block when mining and ranking

# Mining settings
Z_THRESHOLD = 2.3263  # 99th percentile of the standard normal
DEFAULT_MINE_POLICY = "ephn"

# Loss settings
DEFAULT_LOSS = "ephn"
MARGIN = 0.25
DWS_LAMBDA = 10.0  # Cap on inverse-density sampling weights
DWS_DMIN = 0.5  # Lower clamp on distances before computing sampling weights
PROXY_MOMENTUM = 0.9
EPD_LITERAL_SIGN = False  # True reproduces exp(+D) on the EP-D negatives as printed

# Model settings
EMBEDDING_DIM = 128
HIDDEN_WIDTHS = (128,)

# Training settings
LEARNING_RATE = 1e-5
EPOCHS = 50
OPTIMIZER = "adam"
ONLINE_BATCH_SIZE = 45  # 5 samples for each of 9 classes
ONLINE_PER_CLASS = 5
OFFLINE_TRIPLETS_PER_BATCH = 16  # 48 rows per batch
CLASSIFIER_BATCH_SIZE = 64

# Evaluation settings
RECALL_RANKS = (1, 4, 8, 16)
RETRIEVAL_TOP = 10

# Gradient check settings
GRADCHECK_STEP = 1e-6
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_CLASSES = 4
GRADCHECK_PER_CLASS = 3
GRADCHECK_DIM = 8

# Split settings
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)  # X1 (feature space), X2 (mining), test

# Synthetic dataset settings
SYNTH_CLASSES = 9
SYNTH_PER_CLASS = 200
SYNTH_DIM = 32
SYNTH_SEPARATION = 8.0  # Norm of each class mean; raw nearest-neighbour accuracy near 0.85
SYNTH_SIGMA = 1.0
SYNTH_WIDE_CLASSES = 2  # Number of classes with inflated spread
SYNTH_WIDE_FACTOR = 3.0
