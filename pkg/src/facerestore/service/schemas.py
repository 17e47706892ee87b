"""Pydantic request/response models for the restoration service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import RunConfig


class RunConfigModel(BaseModel):
    lr: float = 1e-4
    batch_size: int = 8
    kernel_size: int = 3
    g_steps_per_d_step: int = 3
    lambda1: float = 0.001
    lambda2: float = 0.001
    lambda3: float = 0.5
    epochs: int = RunConfig.epochs
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "runs"
    n_au: int = 8
    base_channels: int = 32
    n_rrmb: int = 3
    sim_threshold: float = 0.9

    def to_config(self) -> RunConfig:
        return RunConfig(**self.model_dump())

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "RunConfigModel":
        return cls(**cfg.to_dict())


class GenerateDataRequest(BaseModel):
    config: RunConfigModel = RunConfigModel()
    n: int = Field(2500, ge=1)
    side: int = Field(64, ge=32)
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)


class GenerateDataResponse(BaseModel):
    manifest_path: str
    data_dir: str
    n_train: int
    n_test: int
    side: int
    degraded_side: int


class PretrainRequest(BaseModel):
    config: RunConfigModel = RunConfigModel()
    checkpoint_path: str | None = None


class PretrainResponse(BaseModel):
    checkpoint_path: str
    best_val_f1: float
    best_epoch: int
    epochs_run: int


class TrainRequest(BaseModel):
    config: RunConfigModel = RunConfigModel()
    classifier_checkpoint: str | None = None
    resume: bool = False
    baseline: bool = False
    eval_every: int = 200


class TrainResponse(BaseModel):
    generator_path: str
    discriminator_path: str
    metrics_path: str
    g_steps: int
    d_steps: int
    epochs_run: int
    classifier_hash: str
    classifier_hash_unchanged: bool


class RestoreRequest(BaseModel):
    generator_checkpoint: str
    inputs: list[str]
    out_dir: str


class RestoreResponse(BaseModel):
    outputs: list[str]


class MethodReport(BaseModel):
    method: str
    f1: float
    accuracy: float
    psnr: float
    ssim: float
    per_au_f1: list[float]
    per_au_accuracy: list[float]


class EvalRequest(BaseModel):
    config: RunConfigModel = RunConfigModel()
    generator_checkpoint: str | None = None
    baseline_checkpoint: str | None = None
    classifier_checkpoint: str | None = None
    report_csv: str | None = None


class EvalResponse(BaseModel):
    rows: list[MethodReport]
    skipped: list[str]
    csv_path: str | None


class GradcheckRequest(BaseModel):
    rtol: float = 1e-3
    atol: float = 1e-4
    seeds: int = Field(5, ge=1)


class GradcheckEntry(BaseModel):
    op_name: str
    max_abs_err: float
    max_rel_err: float
    passed: bool


class GradcheckResponse(BaseModel):
    reports: list[GradcheckEntry]
    all_passed: bool
    runtime_seconds: float


class HealthResponse(BaseModel):
    status: str
    version: str
