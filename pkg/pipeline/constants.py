"""
Константы для пайплайна обучения и разобучения квантового классификатора.
Все магические числа и неизменяемые значения.
"""

import math

# Симулятор
MAX_SIMULATED_QUBITS = 24
NORM_TOLERANCE = 1e-12
NORM_GUARD_TOLERANCE = 1e-10  # проверка нормы после прогона схемы

# Архитектура классификатора
N_QUBITS = 6
N_FEATURES = 4
N_CLASSES = 3
N_PARAMS = 72
READOUT_QUBITS = (3, 4, 5)
FEATURE_MAP_PAIRS = ((0, 1), (1, 2), (2, 3))
ANSATZ_REPETITIONS = 3
N_ANSATZ_BLOCKS = 2
PARAM_ORDER_TAG = "block-rep-qubit-ry-rz/v1"

# Правило сдвига параметров
SHIFT = math.pi / 2

# Численные пороги
LOG_FLOOR = 1e-12  # нижняя граница вероятности внутри log
RENORM_FLOOR = 1e-9  # минимальный знаменатель при перенормировке

# Обучение
DEFAULT_ITERATIONS = 300
DEFAULT_BATCH_SIZE = 10
DEFAULT_PEAK_LR = 0.1
DEFAULT_ADAM_BETA1 = 0.9
DEFAULT_ADAM_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_INIT_SIGMA = 0.01
DEFAULT_TRAIN_LOG_EVERY = 25

# Разобучение
DEFAULT_ALPHA = 1.0
DEFAULT_LAMBDA = 0.01
DEFAULT_BETA = 1.0
DEFAULT_UNLEARN_STEPS = 100
DEFAULT_UNLEARN_LR = 0.05
DEFAULT_UNLEARN_LOG_EVERY = 10
DEFAULT_CALIBRATION_FRACTION = 1.0
DEFAULT_ANCHOR_FRACTION = 1.0

# Данные
SCALE_UPPER = math.pi
IRIS_LABELS = {"setosa": 0, "versicolor": 1, "virginica": 2}
IRIS_N_FEATURES = 4
COVERTYPE_N_FEATURES = 54
COVERTYPE_CLASSES = (3, 5, 7)
DEFAULT_COVERTYPE_CAP = 100
DEFAULT_SPLITS = {
    "iris": {"train": 35, "val": 10, "test": 5},
    "covertype": {"train": 60, "val": 10, "test": 30},
}
DEFAULT_DATA_FILES = {
    "iris": "iris.csv",
    "covertype": "covtype.data",
}
SUPPORTED_DATASETS = ("iris", "covertype")
ALLOWED_DATA_EXTENSIONS = {".csv", ".data", ".txt"}

# Оценка
HISTOGRAM_BINS = 20
KL_DIRECTIONS = ("gold_to_unlearned", "unlearned_to_gold")
DEFAULT_KL_DIRECTION = "gold_to_unlearned"
LOG_BASE = "nats"

# Абляции
ABLATION_GRID = {
    "beta": [0.25, 0.5, 0.75, 1.0],
    "alpha": [0.0, 1.0, 2.0],
    "lambda": [0.0, 0.01, 0.1],
    "anchor_fraction": [0.1, 0.25, 0.5, 1.0],
    "classwise": [0, 1],
}
ANCHOR_FRACTIONS = (0.10, 0.25, 0.50, 1.00)

# Выходные файлы
CHECKPOINT_FILE = "checkpoint.json"
MANIFEST_FILE = "manifest.json"
HISTORY_FILE = "history.csv"
PARTITION_FILE = "partition.json"

# Коды выхода CLI
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

# Логирование
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_LOG_ROTATION_MB = 10
DEFAULT_LOG_BACKUP_COUNT = 5

# Параллелизм
DEFAULT_GRADIENT_WORKERS = 1
DEFAULT_SIM_CHUNK_ROWS = 4096
DEFAULT_ABLATION_WORKERS = 1
