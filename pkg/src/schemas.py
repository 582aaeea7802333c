# pylint: disable=no-self-argument,too-few-public-methods
"Pydantic schemas for configuration, manifests and reports"
import math
from typing import Dict, List, Optional

from pydantic import BaseModel, root_validator, validator

from .errors import ConfigurationError

SCAN_MODES = ("sequential", "parallel")
SELF_LOOP_MODES = ("add", "clamp")
FILL_MODES = ("zero", "residual")
PRECISIONS = ("float32", "float64")
CLASS_WEIGHT_MODES = ("inverse", "uniform")

VARIANTS = {
    "full": {},
    "wo-spatial": {"use_spatial": False},
    "wo-spectral": {"use_spectral": False},
    "wo-temporal": {"use_temporal": False},
    "wo-graph": {"use_graph": False},
    "wo-sparsity": {"sparse": False},
    "wo-disentanglement": {"disentangle": False},
}


def canonical_variant(name: str) -> str:
    """'w/o Temporal' / 'WO_temporal' / 'Full' -> 'wo-temporal' / 'full'"""
    key = name.strip().lower().replace("w/o", "wo").replace("_", "-").replace(" ", "-")
    key = key.replace("wo--", "wo-")
    if key not in VARIANTS:
        raise ConfigurationError(f"Unknown variant {name!r}. Allowed values: {', '.join(VARIANTS)}.")
    return key


class StrictModel(BaseModel):
    """Base schema rejecting unknown fields"""

    class Config:
        extra = "forbid"
        validate_assignment = True


class ModelConfig(StrictModel):
    """
    Architecture of the classifier.

    Patch H x W (odd), T time steps of C0 bands, K classes. C spectral
    channels, d spatial width. Sparse budgets k_F / k_T / k_s default to
    ceil(C/2), ceil(T/2) and ceil(H*W/4).
    """

    H: int = 13
    W: int = 13
    T: int = 23
    C0: int = 6
    K: int = 9
    C: int = 16
    d: int = 32
    k_F: Optional[int] = None
    k_T: Optional[int] = None
    k_s: Optional[int] = None
    state_size: int = 16
    expand: int = 2
    conv_width: int = 4
    mamba_depth: int = 1
    scan_mode: str = "sequential"
    heads: int = 4
    d_k: int = 8
    gcn_depth: int = 2
    gcn_width: int = 64
    sigma: Optional[float] = None
    self_loop: str = "add"
    raw_center: bool = False
    fusion_width: int = 64
    fill: str = "zero"
    precision: str = "float32"
    seed: int = 0
    use_spatial: bool = True
    use_spectral: bool = True
    use_temporal: bool = True
    use_graph: bool = True
    sparse: bool = True
    disentangle: bool = True

    @validator(
        "H", "W", "T", "C0", "K", "C", "d", "state_size", "expand", "mamba_depth",
        "heads", "d_k", "gcn_depth", "gcn_width", "fusion_width",
    )
    def positive(cls, value, field):
        if value < 1:
            raise ValueError(f"{field.name} must be positive, got {value}.")
        return value

    @validator("conv_width")
    def non_negative(cls, value):
        if value < 0:
            raise ValueError("conv_width cannot be negative.")
        return value

    @validator("scan_mode")
    def known_scan_mode(cls, value):
        if value not in SCAN_MODES:
            raise ValueError(f"Unknown scan mode. Allowed values: {', '.join(SCAN_MODES)}.")
        return value

    @validator("self_loop")
    def known_self_loop(cls, value):
        if value not in SELF_LOOP_MODES:
            raise ValueError(f"Unknown self-loop mode. Allowed values: {', '.join(SELF_LOOP_MODES)}.")
        return value

    @validator("fill")
    def known_fill(cls, value):
        if value not in FILL_MODES:
            raise ValueError(f"Unknown fill mode. Allowed values: {', '.join(FILL_MODES)}.")
        return value

    @validator("precision")
    def known_precision(cls, value):
        if value not in PRECISIONS:
            raise ValueError(f"Unknown precision. Allowed values: {', '.join(PRECISIONS)}.")
        return value

    @validator("sigma")
    def positive_sigma(cls, value):
        if value is not None and value <= 0:
            raise ValueError("sigma must be > 0 (leave unset for the median heuristic).")
        return value

    @root_validator(skip_on_failure=True)
    def validate_shape(cls, values):
        """Odd patch sides and budgets inside their token counts"""
        if values["H"] % 2 == 0 or values["W"] % 2 == 0:
            raise ValueError(f"H and W must be odd, got {values['H']}x{values['W']}.")
        counts = {"k_F": values["C"], "k_T": values["T"], "k_s": values["H"] * values["W"]}
        for name, count in counts.items():
            budget = values.get(name)
            if budget is not None and not 1 <= budget <= count:
                raise ValueError(f"{name}={budget} must lie in [1, {count}].")
        return values

    @property
    def pixels(self) -> int:
        return self.H * self.W

    def budgets(self) -> Dict[str, int]:
        """Resolved (k_F, k_T, k_s); token counts when sparsity is off"""
        if not self.sparse:
            return {"k_F": self.C, "k_T": self.T, "k_s": self.pixels}
        return {
            "k_F": self.k_F or math.ceil(self.C / 2),
            "k_T": self.k_T or math.ceil(self.T / 2),
            "k_s": self.k_s or math.ceil(self.pixels / 4),
        }

    def with_variant(self, variant: str) -> "ModelConfig":
        return self.copy(update=VARIANTS[canonical_variant(variant)])


class TrainConfig(StrictModel):
    """Optimizer, early stopping and batching"""

    lr: float = 1e-3
    weight_decay: float = 1e-4
    coupled_weight_decay: bool = False
    max_epochs: int = 100
    patience: int = 20
    batch_size: int = 64
    seed: int = 0
    class_weights: str = "inverse"

    @validator("lr", "weight_decay")
    def non_negative(cls, value, field):
        if value < 0:
            raise ValueError(f"{field.name} cannot be negative.")
        return value

    @validator("max_epochs", "patience")
    def positive(cls, value, field):
        if value < 1:
            raise ValueError(f"{field.name} must be positive, got {value}.")
        return value

    @validator("batch_size")
    def batch_for_batch_norm(cls, value):
        if value < 2:
            raise ValueError("batch_size must be >= 2 for batch normalisation and the batch graph.")
        return value

    @validator("class_weights")
    def known_weighting(cls, value):
        if value not in CLASS_WEIGHT_MODES:
            raise ValueError(f"Unknown class weighting. Allowed values: {', '.join(CLASS_WEIGHT_MODES)}.")
        return value


class DataConfig(StrictModel):
    """Dataset location(s) and the split recipe; several datasets are comma-separated"""

    dataset: str = ""
    train_n: int = 900
    val_n: int = 900
    seed: int = 0

    @validator("train_n", "val_n")
    def non_negative(cls, value, field):
        if value < 0:
            raise ValueError(f"{field.name} cannot be negative.")
        return value

    def dataset_paths(self) -> List[str]:
        return [path.strip() for path in self.dataset.split(",") if path.strip()]


class RunConfig(StrictModel):
    """Everything one command needs"""

    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    output_dir: str = "runs"
    threads: int = 1
    seed: int = 0

    @validator("threads")
    def positive_threads(cls, value):
        if value < 1:
            raise ValueError("threads must be >= 1.")
        return value


class DatasetManifest(StrictModel):
    """Manifest of the dataset container (manifest.yaml)"""

    version: int = 1
    H: int
    W: int
    T: int
    C0: int
    K: int
    n_samples: int
    class_names: List[str]
    band_names: List[str]
    seed: int = 0
    subtlety: Optional[float] = None
    train_n: Optional[int] = None
    val_n: Optional[int] = None
    tensor_file: str = "cubes.f32"
    tensor_dtype: str = "<f4"
    label_file: str = "labels.u32"
    label_dtype: str = "<u4"
    layout: str = "row-major [N, H, W, T, C0], sample-major"
    grid: Optional[List[int]] = None
    grid_file: Optional[str] = None

    @root_validator(skip_on_failure=True)
    def validate_fields(cls, values):
        if len(values["class_names"]) != values["K"]:
            raise ValueError(f"{len(values['class_names'])} class names for K={values['K']}.")
        if len(values["band_names"]) != values["C0"]:
            raise ValueError(f"{len(values['band_names'])} band names for C0={values['C0']}.")
        split_total = (values.get("train_n") or 0) + (values.get("val_n") or 0)
        if split_total > values["n_samples"]:
            raise ValueError(f"Split sizes ({split_total}) exceed {values['n_samples']} samples.")
        if values.get("grid") is not None and len(values["grid"]) != 2:
            raise ValueError("grid must be [rows, cols].")
        return values

    @property
    def cube_shape(self):
        return (self.H, self.W, self.T, self.C0)


class ParameterEntry(StrictModel):
    """Location of one tensor in the flat parameter buffer (in elements)"""

    offset: int
    shape: List[int]


class CheckpointManifest(StrictModel):
    """Manifest of a checkpoint directory (manifest.yaml + params.f32)"""

    version: int = 1
    model: ModelConfig
    class_names: List[str]
    index: Dict[str, ParameterEntry]
    buffer_file: str = "params.f32"
    buffer_dtype: str = "<f4"
    seed: int = 0
    dataset: Optional[str] = None
    split: Optional[Dict[str, int]] = None
    best_epoch: Optional[int] = None


class HistoryRecord(StrictModel):
    """One line of history.jsonl"""

    epoch: int
    train_loss: float
    val_oa: float
    best: bool


class MetricsReport(StrictModel):
    """Confusion matrix (rows true, cols predicted) and OA/AA/Kappa in percent"""

    confusion: List[List[int]]
    oa: float
    aa: float
    kappa: float
    per_class: List[Optional[float]]
    class_names: List[str] = []
    excluded: List[int] = []


class ComplexityRow(StrictModel):
    """Analytic counts of one module for one batch element"""

    module: str
    params: int
    macs: int
    flops: int

    @root_validator(skip_on_failure=True)
    def flops_are_twice_macs(cls, values):
        if values["flops"] != 2 * values["macs"]:
            raise ValueError("FLOPs must equal 2 x MACs.")
        return values


class ComplexityReport(StrictModel):
    """Per-module rows and their total"""

    rows: List[ComplexityRow]
    total: ComplexityRow
